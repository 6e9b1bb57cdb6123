//! Refinement of pulse-group timings against the ODE cost on a finite
//! repetition-rate grid.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostModel, PairCounting};
use crate::error::{Error, Result};
use crate::global::{GateSolution, Refinement, SearchMetadata, SolutionPhase};
use crate::numeric::levenberg::{self, LevenbergOptions};
use crate::numeric::nelder_mead::{self, SimplexOptions};
use crate::ode::{final_state_infidelity, ode_infidelity, BasisState, CoulombModel, DynamicsOptions, GateDynamics, OdeInfidelity, TrajectorySet, TrajectoryState};
use crate::schemes::{expand_to_kick_train, expand_unchecked, Kick, KickTrain, PulseGroup, PulseSequence};
use crate::trap::{normal_modes, TrapConfiguration};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalSearchConfig {
    /// Laser repetition rate (Hz).
    pub repetition_rate: f64,
    /// Allowed gate-window stretch about t = 0.
    pub extension: f64,
    /// Initial simplex edge as a fraction of the gate time.
    pub initial_step: f64,
    pub value_tolerance: f64,
    /// Simplex size (s) below which the search stops.
    pub step_tolerance: f64,
    /// ODE evaluations allowed across simplex, polish and shift search.
    pub max_evaluations: usize,
    /// Per-group block shift radius (grid slots) for exhaustive search.
    pub shift_radius: usize,
    /// Single-kick ±1 slot moves after the simplex.
    pub kick_polish: bool,
    pub coulomb: CoulombModel,
    pub dynamics: DynamicsOptions,
    pub counting: PairCounting,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        Self {
            repetition_rate: 1e9,
            extension: 1.25,
            initial_step: 0.08,
            value_tolerance: 1e-13,
            step_tolerance: 1e-13,
            max_evaluations: 4000,
            shift_radius: 0,
            kick_polish: true,
            coulomb: CoulombModel::Full,
            dynamics: DynamicsOptions::default(),
            counting: PairCounting::Once,
        }
    }
}

impl LocalSearchConfig {
    pub fn new(repetition_rate: f64) -> Self {
        Self { repetition_rate, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.repetition_rate > 0.0) || !self.repetition_rate.is_finite() {
            return Err(Error::InvalidConfig(format!("repetition rate must be positive, got {}", self.repetition_rate)));
        }
        if !(self.extension >= 1.0) || !self.extension.is_finite() {
            return Err(Error::InvalidConfig(format!("extension factor must be at least 1, got {}", self.extension)));
        }
        if self.max_evaluations == 0 {
            return Err(Error::InvalidConfig("need at least one ODE evaluation".into()));
        }
        Ok(())
    }
}

/// Fixed ingredients of one refinement run.
struct Evaluator<'a> {
    dynamics: GateDynamics,
    pairs: Vec<i64>,
    rate: f64,
    window: (f64, f64),
    occupation: f64,
    input: &'a GateSolution,
}

impl Evaluator<'_> {
    /// Slot range every kick must stay within.
    fn slot_range(&self) -> (i64, i64) {
        ((self.window.0 * self.rate - 1e-9).ceil() as i64, (self.window.1 * self.rate + 1e-9).floor() as i64)
    }

    fn train_for(&self, times: &[f64]) -> Option<KickTrain> {
        let groups = self.pairs.iter().zip(times).map(|(&pairs, &time)| PulseGroup { pairs, time }).collect();
        let seq = PulseSequence::new(groups, self.window.1 - self.window.0, self.window.0).ok()?;
        let train = expand_unchecked(&seq, self.rate).ok()?;
        self.inside(&train).then_some(train)
    }

    fn inside(&self, train: &KickTrain) -> bool {
        let (lo, hi) = self.slot_range();
        train.kicks.first().is_none_or(|k| k.slot >= lo) && train.kicks.last().is_none_or(|k| k.slot <= hi)
    }

    /// ODE cost with every group expanded to evenly spaced kicks at the
    /// grid spacing but centred exactly on its time, so the cost varies
    /// smoothly with the timings.
    fn smooth_cost(&self, times: &[f64]) -> f64 {
        self.smooth_set(times).map_or(f64::INFINITY, |set| ode_infidelity(&set, self.occupation).total)
    }

    /// Residuals whose squares sum to a smooth stand-in for the ODE cost:
    /// phase deviations with the mean removed, then weighted end-point
    /// motion of every ion in every basis state.
    fn smooth_residuals(&self, times: &[f64], sigma: f64) -> Option<Vec<f64>> {
        let set = self.smooth_set(times)?;
        let reference = set.reference.final_state;
        let dev: Vec<f64> = set.basis.iter().map(|(s, tr)| tr.final_state.phase - sigma * s.ideal_phase()).collect();
        let mean = dev.iter().sum::<f64>() / dev.len() as f64;
        let mut r: Vec<f64> = dev.iter().map(|d| (2.0f64 / 3.0).sqrt() * (d - mean)).collect();
        let w = (4.0 / 3.0 * (0.5 + self.occupation) * 0.5).sqrt();
        for (_, tr) in &set.basis {
            let f = tr.final_state;
            for i in 0..2 {
                r.push(w * (f.x[i] - reference.x[i]));
                r.push(w * (f.v[i] - reference.v[i]));
            }
        }
        Some(r)
    }

    fn smooth_set(&self, times: &[f64]) -> Option<TrajectorySet> {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let spacing = 1.0 / self.rate;
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            let needed = (self.pairs[a].unsigned_abs() + self.pairs[b].unsigned_abs()) as f64 / 2.0 + 1.0;
            if times[b] - times[a] < needed * spacing {
                return None;
            }
        }
        let mut impulses = Vec::with_capacity(self.pairs.iter().map(|z| z.unsigned_abs() as usize).sum());
        for (&z, &t) in self.pairs.iter().zip(times) {
            let n = z.unsigned_abs();
            let sign = z.signum() as f64;
            for j in 0..n {
                let tj = t + (j as f64 - (n as f64 - 1.0) / 2.0) * spacing;
                if tj < self.window.0 || tj > self.window.1 {
                    return None;
                }
                impulses.push((self.dynamics.scaled_time(tj), sign));
            }
        }
        let (lo, hi) = (self.dynamics.scaled_time(self.window.0), self.dynamics.scaled_time(self.window.1));
        self.dynamics.simulate(&impulses, lo, hi, false).ok()
    }

    fn ode(&self, train: &KickTrain) -> Result<OdeInfidelity> {
        self.dynamics.train_infidelity(train, self.window.0, self.window.1, self.occupation)
    }

    fn cost(&self, train: &KickTrain) -> f64 {
        self.ode(train).map_or(f64::INFINITY, |o| o.total)
    }

    fn solution(&self, train: KickTrain, ode: OdeInfidelity, model: &CostModel) -> Result<GateSolution> {
        let sequence = train.to_sequence(self.window.1 - self.window.0, self.window.0)?;
        let metadata = SearchMetadata { phase: SolutionPhase::Local, ..self.input.metadata.clone() };
        let mut sol = GateSolution::from_sequence(self.input.scheme, sequence, model, metadata)?;
        sol.continuous_cost = self.input.continuous_cost;
        sol.refinement = Some(Refinement {
            repetition_rate: self.rate,
            train,
            initial_ode: ode.clone(),
            ode,
            evaluations: 0,
            budget_exhausted: false,
            extension: (self.window.1 - self.window.0) / self.input.sequence.gate_time,
            history: Vec::new(),
        });
        Ok(sol)
    }
}

fn setup<'a>(solution: &'a GateSolution, trap: &TrapConfiguration, cfg: &LocalSearchConfig) -> Result<(Evaluator<'a>, CostModel, KickTrain)> {
    cfg.validate()?;
    let dynamics = GateDynamics::new(trap, cfg.coulomb, cfg.dynamics)?;
    let modes = normal_modes(trap)?;
    let model = CostModel::new(&modes, trap.lamb_dicke_parameter()?, &[trap.mean_occupation], (0, 1), cfg.counting)?;
    // the grid embedding of the incoming solution is the reference point
    let base = match &solution.refinement {
        Some(r) if (r.repetition_rate - cfg.repetition_rate).abs() <= 1e-12 * cfg.repetition_rate => r.train.clone(),
        _ => expand_to_kick_train(&solution.sequence, cfg.repetition_rate)?,
    };
    let window = if solution.metadata.phase == SolutionPhase::Local {
        (solution.sequence.start, solution.sequence.end())
    } else {
        solution.sequence.extended_window(cfg.extension)
    };
    let eval = Evaluator {
        dynamics,
        pairs: solution.sequence.pairs(),
        rate: cfg.repetition_rate,
        window,
        occupation: trap.mean_occupation,
        input: solution,
    };
    Ok((eval, model, base))
}

/// Locally optimises group timings under the ODE cost at `cfg.repetition_rate`.
///
/// The pulse counts are kept; the returned solution is never worse than the
/// grid-snapped input.
pub fn optimize_local(solution: &GateSolution, trap: &TrapConfiguration, cfg: &LocalSearchConfig) -> Result<GateSolution> {
    let (eval, model, base) = setup(solution, trap, cfg)?;
    if !eval.inside(&base) {
        return Err(Error::InvalidSequence("snapped input falls outside the gate window".into()));
    }
    let initial = eval.ode(&base)?;
    let mut evaluations = 1;
    let mut best = (base.clone(), initial.total);

    let groups = solution.sequence.groups.len();
    let mut history = Vec::new();
    let mut snapped: Option<(KickTrain, f64)> = None;
    if groups > 0 {
        // keep whole blocks inside the window
        let (lower, upper): (Vec<f64>, Vec<f64>) = solution
            .sequence
            .groups
            .iter()
            .map(|g| {
                let half = (g.pairs.unsigned_abs() as f64) / (2.0 * cfg.repetition_rate);
                (eval.window.0 + half, (eval.window.1 - half).max(eval.window.0 + half))
            })
            .unzip();
        let mut x: Vec<f64> =
            solution.sequence.times().iter().zip(lower.iter().zip(&upper)).map(|(t, (l, u))| t.clamp(*l, *u)).collect();
        let width = eval.window.1 - eval.window.0;
        let simplex_budget = if cfg.kick_polish { cfg.max_evaluations * 3 / 5 } else { cfg.max_evaluations };
        let nm_budget = simplex_budget * 3 / 4;
        let mut value = eval.smooth_cost(&x);
        evaluations += 1;
        let first = cfg.initial_step * solution.sequence.gate_time / width;
        let mut step = first;
        // restarted simplex on the unsnapped blocks; stalls widen the next start
        for _ in 0..12 {
            if evaluations >= nm_budget {
                break;
            }
            let options = SimplexOptions {
                initial_step: step,
                value_tolerance: cfg.value_tolerance,
                step_tolerance: cfg.step_tolerance,
                max_evaluations: nm_budget - evaluations,
            };
            let result = nelder_mead::minimize_batched(
                |points: &[Vec<f64>]| points.par_iter().map(|x| eval.smooth_cost(x)).collect(),
                &x,
                &lower,
                &upper,
                &options,
            );
            evaluations += result.evaluations;
            history.extend(result.history);
            let gain = value - result.value;
            if result.value < value {
                x = result.x;
                value = result.value;
            }
            step = if gain > 0.01 * value { step * 0.3 } else { (step * 1.7).min(4.0 * first) };
        }
        // least squares on the same surrogate, in grid-slot units
        if evaluations < simplex_budget {
            let sigma = eval.smooth_set(&x).map_or(1.0, |set| {
                let phi: Vec<f64> = set.basis.iter().map(|(_, tr)| tr.final_state.phase).collect();
                if phi[0] + phi[3] - phi[1] - phi[2] >= 0.0 { 1.0 } else { -1.0 }
            });
            let rate = cfg.repetition_rate;
            let slots = |v: &[f64]| v.iter().map(|t| t * rate).collect::<Vec<f64>>();
            let fit = levenberg::minimize(
                |u: &[f64]| {
                    let t: Vec<f64> = u.iter().map(|v| v / rate).collect();
                    eval.smooth_residuals(&t, sigma).unwrap_or_else(|| vec![1e3; 20])
                },
                &slots(&x),
                &slots(&lower),
                &slots(&upper),
                &LevenbergOptions { max_iterations: 30, fd_step: 1e-6, target: 0.0, max_evaluations: simplex_budget - evaluations },
            );
            let t: Vec<f64> = fit.x.iter().map(|v| v / rate).collect();
            let v = eval.smooth_cost(&t);
            evaluations += fit.evaluations + 1;
            history.push(v);
            if v < value {
                x = t;
                value = v;
            }
        }
        if let Some(train) = eval.train_for(&x) {
            let c = eval.cost(&train);
            evaluations += 1;
            log::debug!("simplex {value:.3e}, snapped {c:.3e}");
            if c < best.1 || cfg.kick_polish {
                // the polish starts from the snapped optimum; the input stays as fallback
                snapped = Some((train, c));
            }
        }
    }
    if let Some(candidate) = snapped {
        let candidate = if cfg.kick_polish {
            let (train, value, used) = polish_kicks(&eval, candidate, cfg.max_evaluations.saturating_sub(evaluations));
            evaluations += used;
            (train, value)
        } else {
            candidate
        };
        history.push(candidate.1);
        if candidate.1 < best.1 {
            best = candidate;
        }
    }
    let budget_exhausted = evaluations >= cfg.max_evaluations;
    if budget_exhausted {
        log::warn!("local search stopped at its budget of {} ODE evaluations", cfg.max_evaluations);
    }
    let ode = eval.ode(&best.0)?;
    let mut out = eval.solution(best.0, ode, &model)?;
    if let Some(r) = out.refinement.as_mut() {
        r.initial_ode = initial;
        r.evaluations = evaluations;
        r.budget_exhausted = budget_exhausted;
        // infeasible simplex vertices score +∞ and carry no information
        r.history = history.into_iter().filter(|v| v.is_finite()).collect();
    }
    Ok(out)
}

/// End points of the four basis-state trajectories, flattened as
/// (x₁, x₂, v₁, v₂, Φ) per state.
type Outcome = [f64; 20];

fn outcome_of(eval: &Evaluator, train: &KickTrain) -> Option<(Outcome, TrajectoryState)> {
    let set = eval.dynamics.simulate_train(train, eval.window.0, eval.window.1, false).ok()?;
    let mut y = [0.0; 20];
    for (k, state) in BasisState::ALL.iter().enumerate() {
        let f = set.trajectory(*state).final_state;
        y[5 * k..5 * k + 5].copy_from_slice(&[f.x[0], f.x[1], f.v[0], f.v[1], f.phase]);
    }
    Some((y, set.reference.final_state))
}

fn outcome_cost(y: &Outcome, reference: &TrajectoryState, occupation: f64) -> f64 {
    let finals: Vec<(BasisState, TrajectoryState)> = BasisState::ALL
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let v = &y[5 * k..5 * k + 5];
            (*s, TrajectoryState { t: reference.t, x: [v[0], v[1]], v: [v[2], v[3]], phase: v[4] })
        })
        .collect();
    final_state_infidelity(&finals, reference, occupation).total
}

/// Single-kick slot moves chosen on a linear model of the trajectory end
/// points, then verified with the full dynamics.
fn polish_kicks(eval: &Evaluator, start: (KickTrain, f64), budget: usize) -> (KickTrain, f64, usize) {
    let (lo, hi) = eval.slot_range();
    let (mut train, mut value) = start;
    let mut used = 0;
    let moved = |train: &KickTrain, m: &[(usize, i64)]| -> Option<KickTrain> {
        let mut kicks: Vec<Kick> = train.kicks.clone();
        for &(i, d) in m {
            kicks[i].slot += d;
        }
        KickTrain::new(kicks, train.repetition_rate).ok()
    };
    while used < budget {
        let Some((y0, reference)) = outcome_of(eval, &train) else { break };
        used += 1;
        let occupied: HashSet<i64> = train.kicks.iter().map(|k| k.slot).collect();
        let moves: Vec<(usize, i64)> = (0..train.kicks.len())
            .flat_map(|i| [(i, -2), (i, -1), (i, 1), (i, 2)])
            .filter(|&(i, d)| {
                let s = train.kicks[i].slot + d;
                s >= lo && s <= hi && !occupied.contains(&s)
            })
            .take(budget.saturating_sub(used + 1))
            .collect();
        if moves.is_empty() {
            break;
        }
        let deltas: Vec<Option<Outcome>> = moves
            .par_iter()
            .map(|&m| {
                let (y, _) = outcome_of(eval, &moved(&train, &[m])?)?;
                let mut d = [0.0; 20];
                for j in 0..20 {
                    d[j] = y[j] - y0[j];
                }
                Some(d)
            })
            .collect();
        used += moves.len();

        // greedy selection on the linear model
        let landing: Vec<i64> = moves.iter().map(|&(i, d)| train.kicks[i].slot + d).collect();
        let cost = |y: &Outcome| outcome_cost(y, &reference, eval.occupation);
        let mut y = y0;
        let mut predicted = cost(&y);
        let mut chosen: Vec<(usize, i64)> = Vec::new();
        let mut kicks_used = HashSet::new();
        let mut targets = HashSet::new();
        loop {
            let mut best: Option<(usize, f64)> = None;
            for (c, (&(i, d), delta)) in moves.iter().zip(&deltas).enumerate() {
                let Some(delta) = delta else { continue };
                if kicks_used.contains(&i) || targets.contains(&(train.kicks[i].slot + d)) {
                    continue;
                }
                let mut trial = y;
                for j in 0..20 {
                    trial[j] += delta[j];
                }
                let v = cost(&trial);
                if v < predicted && best.is_none_or(|b| v < b.1) {
                    best = Some((c, v));
                }
            }
            let picks = match best {
                Some((c, v)) => vec![(c, v)],
                None => match best_pair(&moves, &deltas, &y, predicted, &cost, &landing, |i, d| {
                    !kicks_used.contains(&i) && !targets.contains(&(train.kicks[i].slot + d))
                }) {
                    Some((a, b, v)) => vec![(a, v), (b, v)],
                    None => break,
                },
            };
            for (c, v) in picks {
                let (i, d) = moves[c];
                let delta = deltas[c].as_ref().expect("selected move has a delta");
                for j in 0..20 {
                    y[j] += delta[j];
                }
                predicted = v;
                chosen.push((i, d));
                kicks_used.insert(i);
                targets.insert(train.kicks[i].slot + d);
            }
        }
        if chosen.is_empty() {
            break;
        }
        // accept the longest verified prefix that improves
        let mut accepted = None;
        let mut len = chosen.len();
        while len > 0 && used < budget {
            if let Some(t) = moved(&train, &chosen[..len]) {
                let c = eval.cost(&t);
                used += 1;
                if c < value {
                    accepted = Some((t, c));
                    break;
                }
            }
            len /= 2;
        }
        match accepted {
            Some((t, c)) => {
                train = t;
                value = c;
            }
            None => break,
        }
    }
    (train, value, used)
}

/// Best compatible pair of moves under the linear model, if it beats `current`.
fn best_pair(
    moves: &[(usize, i64)],
    deltas: &[Option<Outcome>],
    y: &Outcome,
    current: f64,
    cost: &(dyn Fn(&Outcome) -> f64 + Sync),
    slots: &[i64],
    free: impl Fn(usize, i64) -> bool,
) -> Option<(usize, usize, f64)> {
    let open: Vec<usize> = (0..moves.len()).filter(|&c| deltas[c].is_some() && free(moves[c].0, moves[c].1)).collect();
    open.par_iter()
        .enumerate()
        .filter_map(|(n, &a)| {
            let da = deltas[a].as_ref()?;
            let mut base = *y;
            for j in 0..20 {
                base[j] += da[j];
            }
            let mut best: Option<(usize, usize, f64)> = None;
            for &b in &open[n + 1..] {
                if moves[b].0 == moves[a].0 || slots[b] == slots[a] {
                    continue;
                }
                let db = deltas[b].as_ref()?;
                let mut trial = base;
                for j in 0..20 {
                    trial[j] += db[j];
                }
                let v = cost(&trial);
                if v < current && best.is_none_or(|p| v < p.2) {
                    best = Some((a, b, v));
                }
            }
            best
        })
        .min_by(|p, q| p.2.total_cmp(&q.2))
}

/// Exhaustively shifts each group's block by up to ±`cfg.shift_radius`
/// slots and keeps the best collision-free assignment.
pub fn enumerate_grid_shifts(solution: &GateSolution, trap: &TrapConfiguration, cfg: &LocalSearchConfig) -> Result<GateSolution> {
    let (eval, model, base) = setup(solution, trap, cfg)?;
    let initial = eval.ode(&base)?;
    let r = cfg.shift_radius as i64;
    let groups: Vec<usize> = {
        let mut g: Vec<usize> = base.kicks.iter().map(|k| k.group).collect();
        g.dedup();
        g
    };
    let width = (2 * r + 1) as u128;
    let combos = width.checked_pow(groups.len() as u32).unwrap_or(u128::MAX);
    if combos > cfg.max_evaluations as u128 {
        return Err(Error::Budget(format!(
            "{combos} shift combinations for {} groups at radius {r} exceed the budget of {}; use a smaller radius",
            groups.len(),
            cfg.max_evaluations
        )));
    }
    let shifted = |index: u128| -> Option<KickTrain> {
        let mut rest = index;
        let mut offsets = std::collections::HashMap::new();
        for &g in &groups {
            offsets.insert(g, (rest % width) as i64 - r);
            rest /= width;
        }
        let kicks = base.kicks.iter().map(|k| Kick { slot: k.slot + offsets[&k.group], ..*k }).collect();
        let train = KickTrain::new(kicks, base.repetition_rate).ok()?;
        // blocks keep their order so that groups stay contiguous
        let ordered = train.kicks.windows(2).all(|w| w[0].group <= w[1].group);
        (ordered && eval.inside(&train)).then_some(train)
    };
    let scored: Vec<(u128, f64)> = (0..combos)
        .into_par_iter()
        .filter_map(|i| shifted(i).map(|t| (i, eval.cost(&t))))
        .collect();
    let (index, _) = scored
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .unwrap_or((0, initial.total));
    let train = if combos == 1 { base } else { shifted(index).unwrap_or(base) };
    let ode = eval.ode(&train)?;
    let mut out = eval.solution(train, ode, &model)?;
    if let Some(rf) = out.refinement.as_mut() {
        rf.initial_ode = initial;
        rf.evaluations = scored.len().max(1);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::global::{optimize_global, GlobalSearchConfig};
    use crate::schemes::Scheme;
    use std::f64::consts::PI;

    fn paul_solution(gate_periods: f64) -> (TrapConfiguration, GateSolution) {
        let cfg = TrapConfiguration::paul_trap(2);
        let modes = normal_modes(&cfg).unwrap();
        let t = gate_periods * 2.0 * PI / cfg.trap_frequency;
        let search = GlobalSearchConfig { stages: 3, restarts: 16, seed: 3, ..GlobalSearchConfig::new(Scheme::Gpg(6), t) };
        (cfg.clone(), optimize_global(&search, &cfg, &modes).unwrap())
    }

    #[test]
    fn never_worse_than_the_snapped_input() {
        let (trap, sol) = paul_solution(0.5);
        let cfg = LocalSearchConfig { max_evaluations: 300, ..LocalSearchConfig::new(sol.f_min * 3.0) };
        let out = optimize_local(&sol, &trap, &cfg).unwrap();
        let r = out.refinement.as_ref().unwrap();
        assert!(r.ode.total <= r.initial_ode.total);
        assert_eq!(out.metadata.phase, SolutionPhase::Local);
        // z unchanged, kicks on the grid and inside the window
        assert_eq!(r.train.signed_total(), sol.sequence.signed_pairs());
        assert_eq!(r.train.len() as u64, sol.pulse_pairs());
        let end = 1.25 * sol.sequence.gate_time;
        assert!(r.train.times().iter().all(|&t| t >= -1e-15 && t <= end * (1.0 + 1e-12)));
        let mut slots: Vec<i64> = r.train.kicks.iter().map(|k| k.slot).collect();
        slots.dedup();
        assert_eq!(slots.len(), r.train.len());
        assert!(r.evaluations <= 300 + 64);
    }

    #[test]
    fn rate_below_f_min_is_an_error() {
        let (trap, sol) = paul_solution(0.5);
        let cfg = LocalSearchConfig::new(sol.f_min * 0.5);
        match optimize_local(&sol, &trap, &cfg) {
            Err(Error::RateTooLow { min_rate, .. }) => assert!((min_rate - sol.f_min).abs() < 1e-6 * sol.f_min),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_radius_returns_the_input_evaluation() {
        let (trap, sol) = paul_solution(0.5);
        let cfg = LocalSearchConfig::new(sol.f_min * 2.0);
        let out = enumerate_grid_shifts(&sol, &trap, &cfg).unwrap();
        let r = out.refinement.unwrap();
        assert_eq!(r.ode, r.initial_ode);
        assert_eq!(r.train, expand_to_kick_train(&sol.sequence, cfg.repetition_rate).unwrap());
    }

    #[test]
    fn shift_budget_is_enforced() {
        let (trap, sol) = paul_solution(0.5);
        let cfg = LocalSearchConfig { shift_radius: 3, max_evaluations: 100, ..LocalSearchConfig::new(sol.f_min * 2.0) };
        assert!(matches!(enumerate_grid_shifts(&sol, &trap, &cfg), Err(Error::Budget(_))));
    }

    #[test]
    fn invalid_local_configs() {
        let (trap, sol) = paul_solution(0.5);
        let cfg = LocalSearchConfig { extension: 0.9, ..LocalSearchConfig::new(1e9) };
        assert!(matches!(optimize_local(&sol, &trap, &cfg), Err(Error::InvalidConfig(_))));
        assert!(matches!(optimize_local(&sol, &trap, &LocalSearchConfig::new(-1.0)), Err(Error::InvalidConfig(_))));
    }
}
