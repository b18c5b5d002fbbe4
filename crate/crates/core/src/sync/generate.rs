use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::sampler::add_noise;
use super::{
    cfg_velocity, euler_estimate, guided_step, renoise, Conditioning, Denoiser, Latent, LatentCodec, NoiseSchedule,
    SamplerMode, SyncConfig, SyncError, TimeStep,
};
use crate::imageops::{blend_phi, fresnel_composite, pyramid_warp, ColorSpace, ImageError, ImagePlane};
use crate::warpfield::{SourceSpace, WarpBundle, WarpField};

/// Precompiled warps plus the object-free perspective image.
#[derive(Debug, Clone)]
pub struct SyncScene {
    pub warps: WarpBundle,
    /// Clean background `I_0^-`, linear.
    pub clean_background: ImagePlane,
    perspective_identity: WarpField,
    panorama_identity: WarpField,
}

fn check_warp(w: &WarpField, name: &str, target: (usize, usize), source: (usize, usize)) -> Result<(), SyncError> {
    if (w.target_width(), w.target_height()) != target || (w.source_width(), w.source_height()) != source {
        return Err(ImageError::Dimensions(format!(
            "{name} maps {}x{} -> {}x{}, expected {}x{} -> {}x{}",
            w.source_width(),
            w.source_height(),
            w.target_width(),
            w.target_height(),
            source.0,
            source.1,
            target.0,
            target.1
        ))
        .into());
    }
    Ok(())
}

impl SyncScene {
    pub fn new(warps: WarpBundle, clean_background: ImagePlane) -> Result<Self, SyncError> {
        let p = warps.perspective_dims();
        let q = warps.panorama_dims();
        check_warp(&warps.self_warp, "self warp", p, p)?;
        check_warp(&warps.pano_to_persp_refraction, "refraction warp", p, q)?;
        check_warp(&warps.pano_to_persp_reflection, "reflection warp", p, q)?;
        check_warp(&warps.persp_to_pano, "panorama warp", q, p)?;
        if (warps.fresnel.width(), warps.fresnel.height()) != p {
            return Err(ImageError::Dimensions("Fresnel weights do not match the perspective view".into()).into());
        }
        clean_background.require_dims(p, "clean background")?;
        clean_background.require_space(ColorSpace::Linear)?;
        Ok(Self {
            perspective_identity: WarpField::identity(p.0, p.1, SourceSpace::Perspective),
            panorama_identity: WarpField::identity(q.0, q.1, SourceSpace::Panorama),
            warps,
            clean_background,
        })
    }

    pub fn perspective_dims(&self) -> (usize, usize) {
        self.warps.perspective_dims()
    }

    pub fn panorama_dims(&self) -> (usize, usize) {
        self.warps.panorama_dims()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncedViews {
    pub perspective: ImagePlane,
    pub panorama: ImagePlane,
    /// Pixels of each view no warp covered.
    pub passthrough: [usize; 2],
}

/// One synchronization pass over the clean estimates of both views.
///
/// The perspective view blends itself, the panorama seen through the
/// refraction warp and the refracted clean background, then adds the
/// Fresnel-weighted reflection of the panorama. The panorama blends itself
/// with the perspective view and the clean background, both carried over by
/// the perspective-to-panorama warp.
pub fn synchronize_views(
    perspective: &ImagePlane,
    panorama: &ImagePlane,
    scene: &SyncScene,
    lambda: f64,
    levels: usize,
) -> Result<SyncedViews, SyncError> {
    perspective.require_dims(scene.perspective_dims(), "perspective estimate")?;
    panorama.require_dims(scene.panorama_dims(), "panorama estimate")?;
    let w = &scene.warps;
    let refracted = blend_phi(
        &[
            (perspective, &scene.perspective_identity),
            (panorama, &w.pano_to_persp_refraction),
            (&scene.clean_background, &w.self_warp),
        ],
        lambda,
        levels,
    )?;
    let reflected = pyramid_warp(panorama, &w.pano_to_persp_reflection, levels)?;
    let combined = fresnel_composite(&refracted.image, &reflected.image, &w.fresnel)?;
    let pano = blend_phi(
        &[
            (panorama, &scene.panorama_identity),
            (perspective, &w.persp_to_pano),
            (&scene.clean_background, &w.persp_to_pano),
        ],
        lambda,
        levels,
    )?;
    Ok(SyncedViews {
        perspective: combined,
        panorama: pano.image,
        passthrough: [refracted.passthrough_pixels, pano.passthrough_pixels],
    })
}

/// A view's denoiser and its prompt token.
#[derive(Clone, Copy)]
pub struct Branch<'a> {
    pub denoiser: &'a dyn Denoiser,
    pub condition: &'a [u8],
}

/// One executed denoising step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub index: usize,
    pub t: usize,
    pub sigma: f64,
    pub sigma_next: f64,
    /// 0 for the first execution of a timestep, then one per revisit.
    pub pass: usize,
    pub active: [bool; 2],
    /// RMS change synchronization made to each branch's clean estimate.
    pub residuals: [f64; 2],
}

impl fmt::Display for StepTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} t={} sigma={:.6} sigma_next={:.6} pass={} active={}{} residual_persp={:.6e} residual_pano={:.6e}",
            self.index,
            self.t,
            self.sigma,
            self.sigma_next,
            self.pass,
            u8::from(self.active[0]),
            u8::from(self.active[1]),
            self.residuals[0],
            self.residuals[1]
        )
    }
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub perspective: ImagePlane,
    pub panorama: ImagePlane,
    pub trace: Vec<StepTrace>,
}

impl Generation {
    pub fn trace_log(&self) -> String {
        self.trace.iter().map(|s| format!("{s}\n")).collect()
    }
}

const PERSPECTIVE: usize = 0;
const PANORAMA: usize = 1;

/// Independent random streams per branch and purpose.
struct Streams {
    sde: [ChaCha8Rng; 2],
    travel: [ChaCha8Rng; 2],
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian_latent(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Latent {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Latent::new(shape, data).expect("length matches shape")
}

struct Sampler<'a> {
    config: &'a SyncConfig,
    schedule: &'a NoiseSchedule,
    branches: [Branch<'a>; 2],
    codec: &'a dyn LatentCodec,
    scene: &'a SyncScene,
    z: [Latent; 2],
    estimates: [Option<Latent>; 2],
    streams: Streams,
    trace: Vec<StepTrace>,
}

impl Sampler<'_> {
    fn velocity(&self, b: usize, time: TimeStep) -> Result<Latent, SyncError> {
        let branch = self.branches[b];
        let z = &self.z[b];
        let call = |c: Conditioning<'_>| -> Result<Latent, SyncError> {
            let v = branch.denoiser.velocity(z, time, c).map_err(|e| match e {
                SyncError::Protocol { .. } => e,
                other => SyncError::Denoiser { step: time.index, message: other.to_string() },
            })?;
            if v.shape() != z.shape() {
                return Err(SyncError::Denoiser {
                    step: time.index,
                    message: format!("velocity shape {:?} does not match latent {:?}", v.shape(), z.shape()),
                });
            }
            Ok(v)
        };
        let cond = call(Conditioning::Conditional(branch.condition))?;
        if self.config.guidance == 0.0 {
            return Ok(cond);
        }
        let uncond = call(Conditioning::Unconditional)?;
        cfg_velocity(&cond, &uncond, self.config.guidance)
    }

    /// Executes schedule step `k` (σ_k to σ_{k+1}) on the active branches.
    fn step(&mut self, k: usize, pass: usize, active: [bool; 2]) -> Result<(), SyncError> {
        let sigmas = self.schedule.sigmas();
        let (sigma, sigma_next) = (sigmas[k], sigmas[k + 1]);
        let time = TimeStep { index: self.trace.len(), t: self.schedule.steps() - k, sigma };
        let (vp, vq) = match active {
            [true, true] => {
                let (a, b) = rayon::join(|| self.velocity(PERSPECTIVE, time), || self.velocity(PANORAMA, time));
                (Some(a?), Some(b?))
            }
            [true, false] => (Some(self.velocity(PERSPECTIVE, time)?), None),
            [false, true] => (None, Some(self.velocity(PANORAMA, time)?)),
            [false, false] => (None, None),
        };
        for (b, v) in [(PERSPECTIVE, vp), (PANORAMA, vq)] {
            if let Some(v) = v {
                self.estimates[b] = Some(euler_estimate(&self.z[b], &v, sigma)?);
            }
        }
        let est = [
            self.estimates[PERSPECTIVE].as_ref().expect("first pass runs both branches"),
            self.estimates[PANORAMA].as_ref().expect("first pass runs both branches"),
        ];
        let synced = synchronize_views(
            &self.codec.decode(est[PERSPECTIVE])?,
            &self.codec.decode(est[PANORAMA])?,
            self.scene,
            self.config.lambda,
            self.config.pyramid_levels,
        )?;
        let corrected = [self.codec.encode(&synced.perspective)?, self.codec.encode(&synced.panorama)?];
        let residuals = [corrected[0].rms_diff(est[0]), corrected[1].rms_diff(est[1])];
        for b in [PERSPECTIVE, PANORAMA] {
            if !active[b] {
                continue;
            }
            let mut next = guided_step(&self.z[b], &corrected[b], sigma, sigma_next)?;
            if self.config.mode == SamplerMode::Sde && sigma_next > 0.0 {
                add_noise(&mut next, sigma - sigma_next, &mut self.streams.sde[b]);
            }
            self.z[b] = next;
        }
        self.trace.push(StepTrace { index: time.index, t: time.t, sigma, sigma_next, pass, active, residuals });
        Ok(())
    }
}

/// Runs the synchronized sampler from seeded noise to clean images.
pub fn run_generation(
    config: &SyncConfig,
    schedule: &NoiseSchedule,
    perspective: Branch<'_>,
    panorama: Branch<'_>,
    codec: &dyn LatentCodec,
    scene: &SyncScene,
) -> Result<Generation, SyncError> {
    config.validate()?;
    if schedule.steps() != config.steps {
        return Err(SyncError::Config(format!(
            "schedule has {} steps, configuration asks for {}",
            schedule.steps(),
            config.steps
        )));
    }
    let (pw, ph) = scene.perspective_dims();
    let (qw, qh) = scene.panorama_dims();
    let z = [
        gaussian_latent(codec.latent_shape(pw, ph), &mut stream(config.seed, 0)),
        gaussian_latent(codec.latent_shape(qw, qh), &mut stream(config.seed, 1)),
    ];
    let mut s = Sampler {
        config,
        schedule,
        branches: [perspective, panorama],
        codec,
        scene,
        z,
        estimates: [None, None],
        streams: Streams {
            sde: [stream(config.seed, 2), stream(config.seed, 3)],
            travel: [stream(config.seed, 4), stream(config.seed, 5)],
        },
        trace: Vec::new(),
    };
    let steps = schedule.steps();
    let sigmas = schedule.sigmas();
    let repeats = [config.repeats_main, config.repeats_pano];
    for k in 0..steps {
        s.step(k, 0, [true, true])?;
        if !config.in_window(steps - k) {
            continue;
        }
        let start = (k + 1).saturating_sub(config.tt_length);
        for pass in 1..repeats[0].max(repeats[1]) {
            let active = [pass < repeats[0], pass < repeats[1]];
            for b in [PERSPECTIVE, PANORAMA] {
                if active[b] {
                    s.z[b] = renoise(&s.z[b], sigmas[k + 1], sigmas[start], &mut s.streams.travel[b])?;
                }
            }
            for j in start..=k {
                s.step(j, pass, active)?;
            }
        }
    }
    Ok(Generation {
        perspective: codec.decode(&s.z[PERSPECTIVE])?,
        panorama: codec.decode(&s.z[PANORAMA])?,
        trace: s.trace,
    })
}
