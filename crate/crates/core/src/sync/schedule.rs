use super::SyncError;

/// Noise levels from `σ_T = 1` down to `σ_0 = 0`, stored in sampling order.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_sigmas(sigmas: Vec<f64>) -> Result<Self, SyncError> {
        if sigmas.len() < 2 {
            return Err(SyncError::Schedule("need at least one step".into()));
        }
        if sigmas[0] != 1.0 || *sigmas.last().unwrap() != 0.0 {
            return Err(SyncError::Schedule("must run from 1 to 0".into()));
        }
        if sigmas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(SyncError::Schedule("must be strictly decreasing".into()));
        }
        Ok(Self { sigmas })
    }

    /// Evenly spaced levels.
    pub fn linear(steps: usize) -> Result<Self, SyncError> {
        Self::shifted(steps, 1.0)
    }

    /// Linear levels remapped by `σ' = sσ / (1 + (s − 1)σ)`; `s > 1` spends more steps at high noise.
    pub fn shifted(steps: usize, shift: f64) -> Result<Self, SyncError> {
        if steps == 0 {
            return Err(SyncError::Schedule("need at least one step".into()));
        }
        if !(shift > 0.0 && shift.is_finite()) {
            return Err(SyncError::Schedule(format!("shift {shift} must be positive")));
        }
        let sigmas = (0..=steps)
            .map(|i| {
                let s = 1.0 - i as f64 / steps as f64;
                shift * s / (1.0 + (shift - 1.0) * s)
            })
            .collect::<Vec<_>>();
        let mut sigmas = sigmas;
        sigmas[0] = 1.0;
        sigmas[steps] = 0.0;
        Self::from_sigmas(sigmas)
    }

    /// Number of denoising steps `T`.
    pub fn steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    /// Levels in sampling order: index `k` holds `σ_{T−k}`.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// `σ_t` for timestep `t` in `0..=T`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[self.steps() - t]
    }
}
