use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use refrax::geometry::{uv_sphere, Bvh, Vec3};
use refrax::imageops::{blend_phi, pyramid_warp};
use refrax::warpfield::compile_bundle;
use refrax_bench::{ball_scene, pattern};

fn bvh(c: &mut Criterion) {
    let mesh = uv_sphere(Vec3::new(0.0, 0.0, -4.0), 1.0, 250, 201, true).unwrap();
    c.bench_function("bvh_build_100k", |b| b.iter(|| Bvh::build(black_box(mesh.clone())).unwrap()));
    let tree = Bvh::build(mesh).unwrap();
    let fixture = ball_scene(256, 256, None);
    let cam = &fixture.scene.camera;
    c.bench_function("bvh_trace_256x256", |b| {
        b.iter(|| {
            let mut hits = 0usize;
            for y in 0..cam.height {
                for x in 0..cam.width {
                    hits += usize::from(tree.intersect_ray(&cam.pixel_center_ray(x, y)).is_some());
                }
            }
            black_box(hits)
        })
    });
}

fn compile(c: &mut Criterion) {
    let analytic = ball_scene(256, 256, None);
    let meshed = ball_scene(256, 256, Some((96, 64)));
    let mut group = c.benchmark_group("compile_bundle_256");
    group.sample_size(10);
    group.bench_function("analytic_sphere", |b| b.iter(|| compile_bundle(black_box(&analytic.scene)).unwrap()));
    group.bench_function("mesh_sphere", |b| b.iter(|| compile_bundle(black_box(&meshed.scene)).unwrap()));
    group.finish();
}

fn warp(c: &mut Criterion) {
    let fixture = ball_scene(512, 512, None);
    let bundle = compile_bundle(&fixture.scene).unwrap();
    let pano = pattern(1024, 512);
    let mut group = c.benchmark_group("pyramid_warp_512");
    for levels in [1, 5] {
        group.bench_function(format!("levels_{levels}"), |b| {
            b.iter(|| pyramid_warp(black_box(&pano), &bundle.pano_to_persp_refraction, levels).unwrap())
        });
    }
    group.finish();
    let persp = pattern(512, 512);
    c.bench_function("blend_phi_512", |b| {
        b.iter(|| {
            blend_phi(
                &[(&persp, &bundle.self_warp), (&pano, &bundle.pano_to_persp_refraction), (&fixture.clean, &bundle.self_warp)],
                0.5,
                5,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, bvh, compile, warp);
criterion_main!(benches);
