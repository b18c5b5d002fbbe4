use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use refrax::imageops::{linear_to_srgb, read_image, write_png, ColorSpace, ImagePlane};
use refrax::pipeline::{
    fit_levels, load_scene, preview_refraction, read_bundle, render_refraction, score, write_bundle, LoadedScene,
    MediumSpec, PipelineError, SceneConfig,
};
use refrax::sync::{
    run_generation, serve_denoiser, Branch, Conditioning, Denoiser, IdentityCodec, Latent, LatentCodec,
    NoiseSchedule, OracleDenoiser, ProcessDenoiser, SamplerMode, SyncError, SyncScene, TimeStep,
};
use refrax::warpfield::{compile_bundle, WarpBundle};

#[derive(Parser)]
#[command(name = "refrax", version, about = "Warp fields and synchronized sampling for transparent object insertion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace the warp fields of a scene and write them with a preview render.
    CompileWarps {
        #[command(flatten)]
        scene: SceneArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Environment color of the preview, linear RGB.
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.5, 0.5, 0.5])]
        env_color: Vec<f64>,
    },
    /// Composite the refracted background and the reflected environment.
    RenderRefraction {
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        warps: WarpArgs,
        /// Environment panorama; defaults to the scene's.
        #[arg(long)]
        environment: Option<PathBuf>,
        /// Output PNG.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the synchronized two-view sampler.
    SyncGenerate {
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        warps: WarpArgs,
        #[command(flatten)]
        denoiser: DenoiserArgs,
        /// Output directory for perspective.png, panorama.png and trace.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked PSNR and MAE of a result against a reference.
    Score {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Grayscale PNG; pixels above half intensity are scored.
        #[arg(long)]
        mask: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer denoiser requests on stdin/stdout with fixed targets.
    #[command(hide = true)]
    ServeOracle {
        #[arg(long)]
        perspective: PathBuf,
        #[arg(long)]
        panorama: PathBuf,
    },
}

#[derive(Args)]
struct SceneArgs {
    /// Scene description (TOML).
    #[arg(long)]
    scene: PathBuf,
    /// Refractive index or material name.
    #[arg(long)]
    medium: Option<String>,
    /// Largest object extent after placement, meters.
    #[arg(long)]
    physical_size: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    pyramid_levels: Option<usize>,
}

#[derive(Args)]
struct WarpArgs {
    /// Directory written by compile-warps; compiled on the fly when absent.
    #[arg(long)]
    warps: Option<PathBuf>,
}

#[derive(Args)]
struct DenoiserArgs {
    /// External denoiser program speaking the plug-in protocol.
    #[arg(long)]
    plugin: Option<String>,
    #[arg(long = "plugin-arg", allow_hyphen_values = true)]
    plugin_args: Vec<String>,
    /// Oracle target for the perspective view; defaults to the refraction render.
    #[arg(long)]
    target_perspective: Option<PathBuf>,
    /// Oracle target for the panorama; defaults to the environment.
    #[arg(long)]
    target_panorama: Option<PathBuf>,
    /// Condition bytes sent with perspective requests.
    #[arg(long, default_value = "")]
    prompt: String,
    #[arg(long, default_value = "")]
    pano_prompt: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ode,
    Sde,
}

impl SceneArgs {
    fn load(&self) -> Result<SceneConfig, PipelineError> {
        let mut c = SceneConfig::load(&self.scene)?;
        if let Some(m) = &self.medium {
            c.medium = m.parse::<f64>().map_or_else(|_| MediumSpec::Name(m.clone()), MediumSpec::Index);
        }
        if let Some(s) = self.physical_size {
            c.placement.physical_size = s;
        }
        if let Some(s) = self.seed {
            c.sync.seed = s;
        }
        if let Some(m) = self.mode {
            c.sync.mode = match m {
                Mode::Ode => SamplerMode::Ode,
                Mode::Sde => SamplerMode::Sde,
            };
        }
        if let Some(s) = self.steps {
            c.sync.steps = s;
        }
        if let Some(l) = self.lambda {
            c.sync.lambda = l;
        }
        if let Some(l) = self.pyramid_levels {
            c.sync.pyramid_levels = l;
        }
        c.validate()?;
        Ok(c)
    }
}

fn output_err(path: &Path, e: impl ToString) -> PipelineError {
    PipelineError::Output { path: path.to_path_buf(), message: e.to_string() }
}

fn write_srgb(img: &ImagePlane, path: &Path) -> Result<(), PipelineError> {
    write_png(&linear_to_srgb(img)?, path).map_err(|e| output_err(path, e))
}

fn read_linear(path: &Path) -> Result<ImagePlane, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Missing(path.to_path_buf()));
    }
    read_image(path).map_err(|e| PipelineError::Input { path: path.to_path_buf(), message: e.to_string() })
}

fn bundle_for(scene: &LoadedScene, warps: &WarpArgs) -> Result<WarpBundle, PipelineError> {
    let bundle = match &warps.warps {
        Some(dir) => read_bundle(dir)?,
        None => compile_bundle(&scene.warp_scene)?,
    };
    let cam = &scene.warp_scene.camera;
    let pano = &scene.warp_scene.pano;
    if bundle.perspective_dims() != (cam.width, cam.height) || bundle.panorama_dims() != (pano.width, pano.height) {
        return Err(PipelineError::Config("precompiled warps do not match the scene".into()));
    }
    Ok(bundle)
}

fn environment(scene: &LoadedScene, flag: Option<&Path>) -> Result<ImagePlane, PipelineError> {
    let env = match flag {
        Some(p) => read_linear(p)?,
        None => scene
            .environment
            .clone()
            .ok_or_else(|| PipelineError::Config("no environment panorama given".into()))?,
    };
    let pano = &scene.warp_scene.pano;
    if env.dims() != (pano.width, pano.height) {
        return Err(PipelineError::Config(format!(
            "environment is {}x{}, panorama is {}x{}",
            env.width(),
            env.height(),
            pano.width,
            pano.height
        )));
    }
    Ok(env)
}

/// Oracle that picks the target whose shape matches the request.
struct ShapeOracle(Vec<OracleDenoiser>);

impl Denoiser for ShapeOracle {
    fn velocity(&self, z: &Latent, time: TimeStep, condition: Conditioning<'_>) -> Result<Latent, SyncError> {
        self.0
            .iter()
            .find(|o| o.target.shape() == z.shape())
            .ok_or_else(|| SyncError::Shape(z.shape().to_vec(), self.0[0].target.shape().to_vec()))?
            .velocity(z, time, condition)
    }
}

fn compile_warps(args: &SceneArgs, out: &Path, env_color: &[f64]) -> Result<(), PipelineError> {
    let config = args.load()?;
    let scene = load_scene(&config)?;
    let bundle = compile_bundle(&scene.warp_scene)?;
    let paths = write_bundle(&bundle, out)?;
    let color = [env_color[0], env_color[1], env_color[2]];
    let preview = preview_refraction(&bundle, &scene.clean, color, config.sync.pyramid_levels)?;
    let preview_path = out.join("preview.png");
    write_srgb(&preview, &preview_path)?;
    for p in paths.iter().chain([&preview_path]) {
        println!("{}", p.display());
    }
    Ok(())
}

fn render(args: &SceneArgs, warps: &WarpArgs, env: Option<&Path>, out: &Path) -> Result<(), PipelineError> {
    let config = args.load()?;
    let scene = load_scene(&config)?;
    let bundle = bundle_for(&scene, warps)?;
    let env = environment(&scene, env)?;
    let img = render_refraction(&bundle, &scene.clean, &env, config.sync.pyramid_levels)?;
    write_srgb(&img, out)?;
    println!("{}", out.display());
    Ok(())
}

fn sync_generate(args: &SceneArgs, warps: &WarpArgs, den: &DenoiserArgs, out: &Path) -> Result<(), PipelineError> {
    let mut config = args.load()?;
    let scene = load_scene(&config)?;
    let bundle = bundle_for(&scene, warps)?;
    config.sync.pyramid_levels =
        fit_levels(config.sync.pyramid_levels, &[bundle.perspective_dims(), bundle.panorama_dims()]);
    let codec = IdentityCodec;
    let denoiser: Box<dyn Denoiser> = match &den.plugin {
        Some(program) => Box::new(
            ProcessDenoiser::spawn(program, &den.plugin_args)
                .map_err(|e| PipelineError::Sync(SyncError::Protocol { step: 0, message: format!("{program}: {e}") }))?,
        ),
        None => {
            let persp = match &den.target_perspective {
                Some(p) => read_linear(p)?,
                None => render_refraction(&bundle, &scene.clean, &environment(&scene, None)?, config.sync.pyramid_levels)?,
            };
            let pano = match &den.target_panorama {
                Some(p) => read_linear(p)?,
                None => environment(&scene, None)?,
            };
            persp.require_dims(bundle.perspective_dims(), "perspective target")?;
            pano.require_dims(bundle.panorama_dims(), "panorama target")?;
            Box::new(ShapeOracle(vec![
                OracleDenoiser { target: codec.encode(&persp)? },
                OracleDenoiser { target: codec.encode(&pano)? },
            ]))
        }
    };
    let sync_scene = SyncScene::new(bundle, scene.clean.clone())?;
    let schedule = NoiseSchedule::shifted(config.sync.steps, config.sync.schedule_shift)?;
    let generation = run_generation(
        &config.sync,
        &schedule,
        Branch { denoiser: denoiser.as_ref(), condition: den.prompt.as_bytes() },
        Branch { denoiser: denoiser.as_ref(), condition: den.pano_prompt.as_bytes() },
        &codec,
        &sync_scene,
    )?;
    drop(denoiser);
    fs::create_dir_all(out).map_err(|e| output_err(out, e))?;
    let persp = out.join("perspective.png");
    let pano = out.join("panorama.png");
    let trace = out.join("trace.txt");
    write_srgb(&generation.perspective, &persp)?;
    write_srgb(&generation.panorama, &pano)?;
    fs::write(&trace, generation.trace_log()).map_err(|e| output_err(&trace, e))?;
    for p in [persp, pano, trace] {
        println!("{}", p.display());
    }
    Ok(())
}

fn read_mask(path: &Path) -> Result<Vec<bool>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Missing(path.to_path_buf()));
    }
    let img = read_image(path).map_err(|e| PipelineError::Input { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(img.data().chunks_exact(3).map(|p| p[0] > 0.5).collect())
}

fn run_score(result: &Path, reference: &Path, mask: &Path, out: Option<&Path>) -> Result<(), PipelineError> {
    let r = read_linear(result)?;
    let f = read_linear(reference)?;
    let m = read_mask(mask)?;
    let report = score(&r, &f, &m)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match out {
        Some(p) => fs::write(p, json).map_err(|e| output_err(p, e))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn serve_oracle(perspective: &Path, panorama: &Path) -> Result<(), PipelineError> {
    let codec = IdentityCodec;
    let targets = [perspective, panorama]
        .into_iter()
        .map(|p| {
            let img = read_linear(p)?;
            debug_assert_eq!(img.space(), ColorSpace::Linear);
            Ok(OracleDenoiser { target: codec.encode(&img)? })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    serve_denoiser(io::stdin().lock(), io::stdout().lock(), &ShapeOracle(targets))
        .map_err(|e| PipelineError::Sync(SyncError::Protocol { step: 0, message: e.to_string() }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::CompileWarps { scene, out, env_color } => compile_warps(scene, out, env_color),
        Command::RenderRefraction { scene, warps, environment, out } => {
            render(scene, warps, environment.as_deref(), out)
        }
        Command::SyncGenerate { scene, warps, denoiser, out } => sync_generate(scene, warps, denoiser, out),
        Command::Score { result, reference, mask, out } => run_score(result, reference, mask, out.as_deref()),
        Command::ServeOracle { perspective, panorama } => serve_oracle(perspective, panorama),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
