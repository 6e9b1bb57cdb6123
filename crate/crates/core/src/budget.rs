//! Worst-case fidelity under imperfect pulse rotations.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global::GateSolution;

/// Largest N_p·ε rendered in a table. Past 2 the quadratic climbs back
/// above F₀.
pub const DEFAULT_REGIME_CUTOFF: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseErrorSpec {
    /// ε = |θ|².
    pub transition_error: f64,
    pub pulse_pairs: u64,
    pub ideal_fidelity: f64,
}

impl PulseErrorSpec {
    pub fn new(transition_error: f64, pulse_pairs: u64, ideal_fidelity: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&transition_error) {
            return Err(Error::InvalidConfig(format!("transition error {transition_error} must lie in [0, 1)")));
        }
        if pulse_pairs == 0 {
            return Err(Error::InvalidConfig("a gate needs at least one pulse pair".into()));
        }
        if !(0.0..=1.0).contains(&ideal_fidelity) {
            return Err(Error::InvalidConfig(format!("ideal fidelity {ideal_fidelity} must lie in [0, 1]")));
        }
        Ok(Self { transition_error, pulse_pairs, ideal_fidelity })
    }

    /// N_p·ε, the expansion parameter.
    pub fn load(&self) -> f64 {
        self.pulse_pairs as f64 * self.transition_error
    }

    pub fn in_regime(&self, cutoff: f64) -> bool {
        self.load() <= cutoff
    }
}

/// F ≈ |1 − 2N_pε + N_p²ε²| F₀. Returned even outside the regime.
pub fn degraded_fidelity(spec: &PulseErrorSpec) -> f64 {
    let x = spec.load();
    (1.0 - 2.0 * x + x * x).abs() * spec.ideal_fidelity
}

/// Square-pulse transition error for relative intensity noise ΔI/I.
pub fn epsilon_from_intensity_noise(relative_fluctuation: f64) -> Result<f64> {
    if !(relative_fluctuation >= 0.0) || !relative_fluctuation.is_finite() {
        return Err(Error::InvalidConfig(format!("relative intensity fluctuation {relative_fluctuation} must be finite and non-negative")));
    }
    Ok(PI * PI / 8.0 * relative_fluctuation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    /// Gate time in trap periods.
    pub gate_time: f64,
    /// 1 − F₀.
    pub infidelity: f64,
    pub pulse_pairs: u64,
    /// 1 − F per ε column; `None` outside the regime.
    pub cells: Vec<Option<f64>>,
}

impl BudgetRow {
    pub fn new(gate_time: f64, infidelity: f64, pulse_pairs: u64, epsilons: &[f64], cutoff: f64) -> Result<Self> {
        let cells = epsilons
            .iter()
            .map(|&eps| {
                let spec = PulseErrorSpec::new(eps, pulse_pairs, 1.0 - infidelity)?;
                Ok(spec.in_regime(cutoff).then(|| 1.0 - degraded_fidelity(&spec)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { gate_time, infidelity, pulse_pairs, cells })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub epsilons: Vec<f64>,
    pub cutoff: f64,
    pub rows: Vec<BudgetRow>,
}

impl ErrorBudget {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["gate_time_periods".to_string(), "infidelity".into(), "pulse_pairs".into()];
        header.extend(self.epsilons.iter().map(|e| format!("eps_{e:e}")));
        w.write_record(&header).map_err(csv_error)?;
        for row in &self.rows {
            let mut rec = vec![row.gate_time.to_string(), format!("{:e}", row.infidelity), row.pulse_pairs.to_string()];
            rec.extend(row.cells.iter().map(|c| c.map(|v| format!("{v:e}")).unwrap_or_default()));
            w.write_record(&rec).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Aligned text in the layout of the published table; empty cells print as "-".
    pub fn render_text(&self) -> String {
        let mut header = vec!["T_G".to_string(), "1-F0".into(), "N".into()];
        header.extend(self.epsilons.iter().map(|e| format!("eps={}", sci(*e, 0))));
        let mut lines = vec![header];
        for row in &self.rows {
            let mut line = vec![format!("{}", row.gate_time), sci(row.infidelity, 1), row.pulse_pairs.to_string()];
            line.extend(row.cells.iter().map(|c| c.map_or("-".to_string(), |v| sci(v, 1))));
            lines.push(line);
        }
        let widths: Vec<usize> =
            (0..lines[0].len()).map(|j| lines.iter().map(|l| l[j].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for line in &lines {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidConfig(format!("csv: {e}"))
}

fn sci(v: f64, digits: usize) -> String {
    format!("{v:.digits$e}")
}

/// One row per solution. F₀ is the ODE infidelity for refined solutions and
/// the truncated cost otherwise.
pub fn error_budget_table(
    solutions: &[GateSolution],
    epsilons: &[f64],
    trap_frequency: f64,
    cutoff: f64,
) -> Result<ErrorBudget> {
    if !(trap_frequency > 0.0) {
        return Err(Error::InvalidConfig(format!("trap frequency {trap_frequency} must be positive")));
    }
    if !(cutoff > 0.0) {
        return Err(Error::InvalidConfig(format!("regime cutoff {cutoff} must be positive")));
    }
    let period = 2.0 * PI / trap_frequency;
    let rows = solutions
        .iter()
        .map(|s| {
            let infidelity = s.refinement.as_ref().map_or(s.cost(), |r| r.ode.total).clamp(0.0, 1.0);
            BudgetRow::new(s.sequence.gate_time / period, infidelity, s.pulse_pairs().max(1), epsilons, cutoff)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorBudget { epsilons: epsilons.to_vec(), cutoff, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: [f64; 6] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

    // (T_G, 1 − F₀, N, cells) as printed
    #[allow(clippy::type_complexity)]
    fn table_one() -> Vec<(f64, f64, u64, [Option<f64>; 6])> {
        vec![
            (0.45, 1.0e-4, 1552, [None, Some(7.0e-1), Some(2.9e-1), Some(3.1e-2), Some(3.2e-3), Some(4.1e-4)]),
            (1.0, 6.3e-9, 640, [None, Some(8.7e-1), Some(1.2e-1), Some(1.3e-2), Some(1.3e-3), Some(1.3e-4)]),
            (1.75, 2.4e-7, 191, [Some(1.7e-1), Some(3.5e-1), Some(3.8e-2), Some(3.8e-3), Some(3.8e-4), Some(3.8e-5)]),
            (0.25, 1.8e-4, 1088, [None, Some(9.9e-1), Some(2.1e-1), Some(2.2e-2), Some(2.4e-3), Some(4.0e-4)]),
            (0.65, 3.2e-5, 64, [Some(8.7e-1), Some(1.2e-1), Some(1.3e-2), Some(1.3e-3), Some(1.6e-4), Some(4.5e-5)]),
            (1.25, 2.2e-6, 46, [Some(7.1e-1), Some(9.0e-2), Some(9.2e-3), Some(9.2e-4), Some(9.4e-5), Some(1.1e-5)]),
        ]
    }

    fn two_figures(a: f64, b: f64) -> bool {
        let round = |v: f64| {
            let e = v.abs().log10().floor();
            (v / 10f64.powf(e - 1.0)).round()
        };
        (a.abs().log10().floor() == b.abs().log10().floor()) && round(a) == round(b)
    }

    #[test]
    fn published_examples() {
        let one = |f0: f64, n, eps| 1.0 - degraded_fidelity(&PulseErrorSpec::new(eps, n, 1.0 - f0).unwrap());
        assert!(two_figures(one(2.4e-7, 191, 1e-7), 3.8e-5));
        assert!(two_figures(one(2.2e-6, 46, 1e-6), 9.4e-5));
        assert!(two_figures(one(6.3e-9, 640, 1e-6), 1.3e-3));
        assert_eq!(degraded_fidelity(&PulseErrorSpec::new(0.0, 10, 0.99).unwrap()), 0.99);
    }

    #[test]
    fn every_table_cell_is_reproduced() {
        for (tg, f0, n, cells) in table_one() {
            let row = BudgetRow::new(tg, f0, n, &EPS, DEFAULT_REGIME_CUTOFF).unwrap();
            for (got, want) in row.cells.iter().zip(cells) {
                match (got, want) {
                    (Some(g), Some(w)) => assert!(two_figures(*g, w), "T_G {tg}: {g:e} vs {w:e}"),
                    (None, None) => {}
                    _ => panic!("T_G {tg}: occupancy differs, {got:?} vs {want:?}"),
                }
            }
        }
    }

    #[test]
    fn cutoff_blanks_cells() {
        let row = BudgetRow::new(1.0, 0.0, 600, &[1e-3], 0.5).unwrap();
        assert_eq!(row.cells, vec![None]);
        let row = BudgetRow::new(1.0, 0.0, 600, &[1e-3], DEFAULT_REGIME_CUTOFF).unwrap();
        assert!(row.cells[0].is_some());
    }

    #[test]
    fn intensity_noise() {
        assert_eq!(epsilon_from_intensity_noise(0.0).unwrap(), 0.0);
        assert!((epsilon_from_intensity_noise(8.0 / (PI * PI)).unwrap() - 1.0).abs() < 1e-15);
        assert!((epsilon_from_intensity_noise(1e-2).unwrap() - 1.2337e-2).abs() < 1e-6);
        assert!(epsilon_from_intensity_noise(-1e-3).is_err());
        assert!(epsilon_from_intensity_noise(f64::NAN).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(PulseErrorSpec::new(1.0, 10, 1.0).is_err());
        assert!(PulseErrorSpec::new(-0.1, 10, 1.0).is_err());
        assert!(PulseErrorSpec::new(0.1, 0, 1.0).is_err());
        assert!(PulseErrorSpec::new(0.1, 10, 1.5).is_err());
    }

    #[test]
    fn exports() {
        let budget = ErrorBudget {
            epsilons: vec![1e-2, 1e-6],
            cutoff: DEFAULT_REGIME_CUTOFF,
            rows: vec![BudgetRow::new(1.0, 6.3e-9, 640, &[1e-2, 1e-6], DEFAULT_REGIME_CUTOFF).unwrap()],
        };
        let csv = budget.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("gate_time_periods,infidelity,pulse_pairs,eps_"));
        assert!(lines[1].contains(",,"), "{csv}");
        let text = budget.render_text();
        assert!(text.contains(" - "), "{text}");
        assert!(text.contains("1.3e-3"), "{text}");
    }

    proptest! {
        #[test]
        fn monotone_below_unit_load(n in 1u64..2000, e1 in 0.0f64..1e-3, e2 in 0.0f64..1e-3, f0 in 0.9f64..1.0) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assume!(hi * n as f64 <= 1.0);
            let a = 1.0 - degraded_fidelity(&PulseErrorSpec::new(lo, n, f0).unwrap());
            let b = 1.0 - degraded_fidelity(&PulseErrorSpec::new(hi, n, f0).unwrap());
            prop_assert!(b >= a - 1e-15);
            let c = 1.0 - degraded_fidelity(&PulseErrorSpec::new(hi, n + 1, f0).unwrap());
            prop_assume!(hi * (n + 1) as f64 <= 1.0);
            prop_assert!(c >= b - 1e-15);
        }

        #[test]
        fn small_load_is_linear(n in 1u64..5000, log_load in -10.0f64..-2.0, f0 in 0.999f64..1.0) {
            let e = 10f64.powf(log_load) / n as f64;
            let got = 1.0 - degraded_fidelity(&PulseErrorSpec::new(e, n, f0).unwrap());
            let approx = (1.0 - f0) + 2.0 * n as f64 * e;
            prop_assert!((got - approx).abs() <= 0.05 * approx);
        }
    }
}
