use serde::{Deserialize, Serialize};

use super::SyncError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    #[default]
    Ode,
    Sde,
}

/// Hyperparameters of the synchronized loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncConfig {
    pub steps: usize,
    /// Classifier-free guidance scale ω.
    pub guidance: f64,
    /// Value-weighting share λ of the blend.
    pub lambda: f64,
    pub pyramid_levels: usize,
    pub time_travel: bool,
    /// Timesteps `t` with `lo·T <= t <= hi·T` are revisited.
    pub tt_window: [f64; 2],
    pub tt_length: usize,
    /// Total executions of each window step on the perspective branch.
    pub repeats_main: usize,
    pub repeats_pano: usize,
    pub mode: SamplerMode,
    pub seed: u64,
    pub schedule_shift: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            guidance: 3.5,
            lambda: 0.5,
            pyramid_levels: 5,
            time_travel: true,
            tt_window: [0.2, 0.8],
            tt_length: 1,
            repeats_main: 3,
            repeats_pano: 1,
            mode: SamplerMode::Ode,
            seed: 0,
            schedule_shift: 1.0,
        }
    }
}

impl SyncConfig {
    pub fn validate(&self) -> Result<(), SyncError> {
        let bad = |m: String| Err(SyncError::Config(m));
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !self.guidance.is_finite() {
            return bad("guidance must be finite".into());
        }
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be at least 1".into());
        }
        let [lo, hi] = self.tt_window;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad(format!("time-travel window [{lo}, {hi}] invalid"));
        }
        if self.repeats_main == 0 || self.repeats_pano == 0 {
            return bad("repeat counts must be at least 1".into());
        }
        if self.time_travel && self.tt_length == 0 {
            return bad("tt_length must be at least 1".into());
        }
        if !(self.schedule_shift > 0.0) {
            return bad("schedule_shift must be positive".into());
        }
        Ok(())
    }

    /// Whether timestep `t` lies in the time-travel window.
    pub fn in_window(&self, t: usize) -> bool {
        let t = t as f64;
        let n = self.steps as f64;
        self.time_travel && t >= self.tt_window[0] * n && t <= self.tt_window[1] * n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SyncConfig::default();
        c.validate().unwrap();
        assert!(c.in_window(4) && c.in_window(16));
        assert!(!c.in_window(3) && !c.in_window(17));
    }

    #[test]
    fn parses_partial_toml() {
        let c: SyncConfig = toml::from_str("steps = 4\nmode = \"sde\"\n").unwrap();
        assert_eq!(c.steps, 4);
        assert_eq!(c.mode, SamplerMode::Sde);
        assert_eq!(c.repeats_main, 3);
        assert!(toml::from_str::<SyncConfig>("stepz = 4").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let c = SyncConfig { tt_window: [0.8, 0.2], ..Default::default() };
        assert!(c.validate().is_err());
        let c = SyncConfig { repeats_main: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
