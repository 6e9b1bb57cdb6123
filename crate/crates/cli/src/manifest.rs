//! TOML run manifest.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fastgate::{
    spacing_for_chi, Architecture, CoulombModel, GlobalSearchConfig, LocalSearchConfig, Scheme, TrapConfiguration,
};
use serde::{Deserialize, Serialize};

/// Transition errors tabulated by default.
pub const DEFAULT_EPSILONS: [f64; 6] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

/// Everything needed to reproduce a run.
///
/// `scheme`, `gate_time` and `seed` at the top level win over the same
/// fields inside `[global]`; [`RunManifest::normalize`] copies them down so
/// the stored manifest is self-consistent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub scheme: Scheme,
    /// Gate time in trap periods.
    pub gate_time: f64,
    /// Target χ. Replaces the trap by a two-ion microtrap pair whose well
    /// spacing reproduces it.
    pub chi: Option<f64>,
    /// Repetition rates (Hz) for local refinement; empty skips phase two.
    pub repetition_rates: Vec<f64>,
    /// Transition errors for the budget table; empty skips it.
    pub epsilons: Vec<f64>,
    pub budget_cutoff: f64,
    /// Coulomb model for the infinite-rate check of the phase-1 solution.
    pub check_model: CoulombModel,
    pub export_trajectories: bool,
    pub trap: TrapConfiguration,
    pub global: GlobalSearchConfig,
    pub local: LocalSearchConfig,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            seed: 1,
            out: None,
            scheme: Scheme::Gpg(8),
            gate_time: 1.0,
            chi: None,
            repetition_rates: vec![1e9],
            epsilons: DEFAULT_EPSILONS.to_vec(),
            budget_cutoff: fastgate::DEFAULT_REGIME_CUTOFF,
            check_model: CoulombModel::Full,
            export_trajectories: false,
            trap: TrapConfiguration::default(),
            global: GlobalSearchConfig::default(),
            local: LocalSearchConfig::default(),
        }
    }
}

/// Command-line values that override the manifest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub repetition_rate: Option<f64>,
    pub scheme: Option<Scheme>,
    pub gate_time: Option<f64>,
    pub ions: Option<usize>,
    pub chi: Option<f64>,
}

impl RunManifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut m: Self = toml::from_str(text).context("parsing manifest")?;
        m.normalize();
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serialising manifest")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        if let Some(f) = o.repetition_rate {
            self.repetition_rates = vec![f];
        }
        if let Some(s) = o.scheme {
            self.scheme = s;
        }
        if let Some(t) = o.gate_time {
            self.gate_time = t;
        }
        if let Some(n) = o.ions {
            self.trap.ion_count = n;
        }
        if let Some(c) = o.chi {
            self.chi = Some(c);
        }
        self.normalize();
    }

    /// Copies top-level choices into the search configuration.
    pub fn normalize(&mut self) {
        self.global.scheme = self.scheme;
        self.global.seed = self.seed;
        self.global.gate_time = self.gate_time * self.period();
    }

    /// Trap period 2π/ω_t in seconds.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.trap.trap_frequency
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gate_time > 0.0) || !self.gate_time.is_finite() {
            bail!("gate time must be a positive number of trap periods, got {}", self.gate_time);
        }
        if let Some(&f) = self.repetition_rates.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
            bail!("repetition rate {f} must be positive");
        }
        if let Some(&e) = self.epsilons.iter().find(|e| !(0.0..1.0).contains(*e)) {
            bail!("transition error {e} must lie in [0, 1)");
        }
        if !(self.budget_cutoff > 0.0) {
            bail!("budget cutoff must be positive");
        }
        if let Some(chi) = self.chi {
            if !(chi > 0.0) || !chi.is_finite() {
                bail!("chi must be positive, got {chi}");
            }
            if self.trap.ion_count != 2 {
                bail!("a target chi needs a two-ion microtrap pair, got {} ions", self.trap.ion_count);
            }
        }
        self.trap.validate()?;
        self.global.validate()?;
        self.local.validate()?;
        Ok(())
    }

    /// The trap actually simulated, with the spacing solved from χ if set.
    pub fn trap_config(&self) -> Result<TrapConfiguration> {
        let Some(chi) = self.chi else { return Ok(self.trap.clone()) };
        let base = match self.trap.architecture {
            Architecture::MicrotrapArray { .. } => self.trap.clone(),
            Architecture::PaulTrap => TrapConfiguration {
                architecture: Architecture::MicrotrapArray { spacing: 90e-6 },
                ..self.trap.clone()
            },
        };
        let spacing = spacing_for_chi(&base, chi)?;
        Ok(TrapConfiguration { architecture: Architecture::MicrotrapArray { spacing }, ..base })
    }

    pub fn local_config(&self, repetition_rate: f64) -> LocalSearchConfig {
        LocalSearchConfig { repetition_rate, ..self.local.clone() }
    }

    /// Output directory, defaulting to `runs/seed-<seed>`.
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(format!("runs/seed-{}", self.seed)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let mut m = RunManifest { chi: Some(1.8e-4), gate_time: 2.0, ..Default::default() };
        m.normalize();
        let text = m.to_toml().unwrap();
        let back = RunManifest::from_toml(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn top_level_wins() {
        let m = RunManifest::from_toml("seed = 9\nscheme = \"apg:16\"\ngate_time = 0.5\n[global]\nseed = 3\nrestarts = 4\n").unwrap();
        assert_eq!(m.global.seed, 9);
        assert_eq!(m.global.scheme, Scheme::Apg(16));
        assert_eq!(m.global.restarts, 4);
        assert!((m.global.gate_time - 0.5 * m.period()).abs() < 1e-20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunManifest::from_toml("sead = 3\n").is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut m = RunManifest::default();
        m.apply(&Overrides { repetition_rate: Some(5e8), ions: Some(3), gate_time: Some(0.7), ..Default::default() });
        assert_eq!(m.repetition_rates, vec![5e8]);
        assert_eq!(m.trap.ion_count, 3);
        assert!((m.global.gate_time - 0.7 * m.period()).abs() < 1e-20);
    }

    #[test]
    fn chi_needs_two_ions() {
        let mut m = RunManifest { chi: Some(1e-3), ..Default::default() };
        m.trap.ion_count = 3;
        assert!(m.validate().is_err());
        m.trap.ion_count = 2;
        m.validate().unwrap();
        let trap = m.trap_config().unwrap();
        assert!(matches!(trap.architecture, Architecture::MicrotrapArray { .. }));
    }

    #[test]
    fn invalid_values() {
        for text in ["gate_time = -1.0", "repetition_rates = [0.0]", "epsilons = [1.5]", "budget_cutoff = 0.0"] {
            let m = RunManifest::from_toml(text).unwrap();
            assert!(m.validate().is_err(), "{text}");
        }
    }
}
