use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use refrax::fixtures::{write_scene_files, FixtureSpec, SceneFiles};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_refrax"))
}

fn small_scene(dir: &Path) -> SceneFiles {
    let spec = FixtureSpec { width: 64, height: 48, pano_height: 32, ..FixtureSpec::default() };
    write_scene_files(dir, &spec).unwrap()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_all(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = fs::read(&p).unwrap();
            (p.file_name().unwrap().into(), bytes)
        })
        .collect();
    v.sort();
    v
}

#[test]
fn compile_warps_writes_bundle_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let files = small_scene(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["compile-warps", "--scene", s(&files.config), "--out", s(&a)]);
    ok(&["compile-warps", "--scene", s(&files.config), "--out", s(&b)]);
    let (ra, rb) = (read_all(&a), read_all(&b));
    let names: Vec<_> = ra.iter().map(|(p, _)| p.to_str().unwrap().to_owned()).collect();
    for f in refrax::pipeline::BUNDLE_FILES.iter().chain(&["preview.png"]) {
        assert!(names.iter().any(|n| n == f), "missing {f} in {names:?}");
    }
    assert_eq!(ra, rb);
}

#[test]
fn missing_depth_exits_2_and_names_path() {
    let tmp = TempDir::new().unwrap();
    let files = small_scene(tmp.path());
    fs::remove_file(&files.depth).unwrap();
    let out = run(&["compile-warps", "--scene", s(&files.config), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("depth.pfm"), "{err}");
}

#[test]
fn missing_scene_exits_2() {
    let out = run(&["render-refraction", "--scene", "/nonexistent/scene.toml", "--out", "/tmp/x.png"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_medium_exits_2() {
    let tmp = TempDir::new().unwrap();
    let files = small_scene(tmp.path());
    let out = run(&[
        "compile-warps",
        "--scene",
        s(&files.config),
        "--medium",
        "0.5",
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn render_refraction_from_precompiled_warps_matches_on_the_fly() {
    let tmp = TempDir::new().unwrap();
    let files = small_scene(tmp.path());
    let warps = tmp.path().join("w");
    ok(&["compile-warps", "--scene", s(&files.config), "--out", s(&warps)]);
    let a = tmp.path().join("a.png");
    let b = tmp.path().join("b.png");
    let c = tmp.path().join("c.png");
    ok(&["render-refraction", "--scene", s(&files.config), "--warps", s(&warps), "--out", s(&a)]);
    ok(&["render-refraction", "--scene", s(&files.config), "--out", s(&b)]);
    ok(&["render-refraction", "--scene", s(&files.config), "--out", s(&c)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(&b).unwrap(), fs::read(&c).unwrap());
}

fn generate(files: &SceneFiles, out: &Path, extra: &[&str]) -> Vec<(PathBuf, Vec<u8>)> {
    let mut args = vec!["sync-generate", "--scene", s(&files.config), "--out", s(out)];
    args.extend_from_slice(extra);
    ok(&args);
    read_all(out)
}

#[test]
fn sync_generate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let files = small_scene(tmp.path());
    let a = generate(&files, &tmp.path().join("a"), &["--mode", "sde", "--seed", "5"]);
    let b = generate(&files, &tmp.path().join("b"), &["--mode", "sde", "--seed", "5"]);
    assert_eq!(a, b);
    let names: Vec<_> = a.iter().map(|(p, _)| p.to_str().unwrap().to_owned()).collect();
    assert_eq!(names, ["panorama.png", "perspective.png", "trace.txt"]);
}

#[test]
fn oracle_outputs_do_not_depend_on_seed() {
    let tmp = TempDir::new().unwrap();
    let files = small_scene(tmp.path());
    let t = tmp.path();
    // The seed only moves the initial noise; the oracle estimate ignores it.
    let ode1 = generate(&files, &t.join("o1"), &["--mode", "ode", "--seed", "1"]);
    let ode2 = generate(&files, &t.join("o2"), &["--mode", "ode", "--seed", "2"]);
    assert_eq!(ode1, ode2);
    // The last SDE step adds no noise, so the oracle's target comes back exactly.
    let sde = generate(&files, &t.join("s1"), &["--mode", "sde", "--seed", "9"]);
    assert_eq!(sde[0], ode1[0]);
    assert_eq!(sde[1], ode1[1]);
}

#[test]
fn single_step_writes_one_estimate() {
    let tmp = TempDir::new().unwrap();
    let files = small_scene(tmp.path());
    let out = generate(&files, &tmp.path().join("g"), &["--steps", "1"]);
    let trace = String::from_utf8(out[2].1.clone()).unwrap();
    assert_eq!(trace.lines().count(), 1, "{trace}");
    assert!(trace.starts_with("step=0 "));
}

#[test]
fn plugin_denoiser_matches_builtin_oracle() {
    let tmp = TempDir::new().unwrap();
    let files = small_scene(tmp.path());
    let t = tmp.path();
    let target = t.join("target.png");
    ok(&["render-refraction", "--scene", s(&files.config), "--out", s(&target)]);
    let builtin = generate(
        &files,
        &t.join("b"),
        &["--target-perspective", s(&target), "--target-panorama", s(&files.environment)],
    );
    let exe = env!("CARGO_BIN_EXE_refrax");
    let plugin = generate(
        &files,
        &t.join("p"),
        &[
            "--plugin",
            exe,
            "--plugin-arg",
            "serve-oracle",
            "--plugin-arg",
            "--perspective",
            "--plugin-arg",
            s(&target),
            "--plugin-arg",
            "--panorama",
            "--plugin-arg",
            s(&files.environment),
        ],
    );
    // The wire format is f32, so compare decoded pixels rather than bytes.
    for k in 0..2 {
        let a = image::load_from_memory(&builtin[k].1).unwrap().to_rgb8();
        let b = image::load_from_memory(&plugin[k].1).unwrap().to_rgb8();
        let worst = a.as_raw().iter().zip(b.as_raw()).map(|(x, y)| x.abs_diff(*y)).max().unwrap();
        assert!(worst <= 1, "{:?} differs by {worst}", builtin[k].0);
    }
}

#[test]
fn broken_plugin_exits_4() {
    let tmp = TempDir::new().unwrap();
    let files = small_scene(tmp.path());
    let out = run(&[
        "sync-generate",
        "--scene",
        s(&files.config),
        "--out",
        s(&tmp.path().join("g")),
        "--plugin",
        "true",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
}

#[test]
fn score_reports_capped_psnr_for_identical_images() {
    let tmp = TempDir::new().unwrap();
    let files = small_scene(tmp.path());
    let mask = tmp.path().join("w").join("object_mask.png");
    ok(&["compile-warps", "--scene", s(&files.config), "--out", s(&tmp.path().join("w"))]);
    let report = tmp.path().join("r.json");
    let args = [
        "score",
        "--result",
        s(&files.image),
        "--reference",
        s(&files.image),
        "--mask",
        s(&mask),
        "--out",
        s(&report),
    ];
    ok(&args);
    let first = fs::read(&report).unwrap();
    ok(&args);
    assert_eq!(first, fs::read(&report).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["masked_psnr"], 99.0);
    assert_eq!(v["masked_mae"], 0.0);
    assert!(v["valid_pixel_count"].as_u64().unwrap() > 0);
    assert!(v.get("lpips").is_none());
}
