//! Pulse-sequence parameterisations and their expansion onto a laser grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `pairs` counter-propagating pulse pairs arriving together at `time` (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseGroup {
    pub pairs: i64,
    pub time: f64,
}

/// Ordered pulse groups with the gate window `[start, start + gate_time]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub groups: Vec<PulseGroup>,
    pub gate_time: f64,
    pub start: f64,
}

impl PulseSequence {
    /// Sorts by time and drops empty groups; repeated times are rejected.
    pub fn new(mut groups: Vec<PulseGroup>, gate_time: f64, start: f64) -> Result<Self> {
        if !(gate_time > 0.0) || !gate_time.is_finite() || !start.is_finite() {
            return Err(Error::InvalidSequence(format!(
                "gate time {gate_time} and start {start} must be finite with a positive gate time"
            )));
        }
        if let Some(g) = groups.iter().find(|g| !g.time.is_finite()) {
            return Err(Error::InvalidSequence(format!("non-finite group time {}", g.time)));
        }
        groups.retain(|g| g.pairs != 0);
        groups.sort_by(|a, b| a.time.total_cmp(&b.time));
        if let Some(k) = (1..groups.len()).find(|&k| groups[k].time == groups[k - 1].time) {
            return Err(Error::CoincidentGroups { first: k - 1, second: k });
        }
        Ok(Self { groups, gate_time, start })
    }

    pub fn empty(gate_time: f64) -> Self {
        Self { groups: Vec::new(), gate_time, start: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn end(&self) -> f64 {
        self.start + self.gate_time
    }

    pub fn pairs(&self) -> Vec<i64> {
        self.groups.iter().map(|g| g.pairs).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.time).collect()
    }

    /// (z, t) with z as floating point, the form used by the cost functions.
    pub fn as_continuous(&self) -> Vec<(f64, f64)> {
        self.groups.iter().map(|g| (g.pairs as f64, g.time)).collect()
    }

    /// Total number of pulse pairs Σ|z_k|.
    pub fn total_pairs(&self) -> u64 {
        self.groups.iter().map(|g| g.pairs.unsigned_abs()).sum()
    }

    pub fn signed_pairs(&self) -> i64 {
        self.groups.iter().map(|g| g.pairs).sum()
    }

    /// True when z(−t) = −z(t) with times matching to `tol` seconds.
    pub fn is_antisymmetric(&self, tol: f64) -> bool {
        let n = self.groups.len();
        (0..n).all(|k| {
            let (a, b) = (self.groups[k], self.groups[n - 1 - k]);
            a.pairs == -b.pairs && (a.time + b.time).abs() <= tol
        })
    }

    /// The same sequence with every time (and the window) shifted by `dt`.
    pub fn translated(&self, dt: f64) -> Self {
        Self {
            groups: self.groups.iter().map(|g| PulseGroup { pairs: g.pairs, time: g.time + dt }).collect(),
            gate_time: self.gate_time,
            start: self.start + dt,
        }
    }

    /// The gate window scaled about t = 0 by `factor`.
    ///
    /// For a window starting at 0 this is `[0, factor·T_G]`; for a window
    /// centred on 0 it widens symmetrically.
    pub fn extended_window(&self, factor: f64) -> (f64, f64) {
        (factor * self.start.min(0.0) + self.start.max(0.0), factor * self.end())
    }
}

/// Scheme family and dimension, without parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    Gzc,
    Frag,
    Gpg(usize),
    Apg(usize),
}

/// Fixed pulse-count ratios (a, b, c) of the six-group schemes.
pub const GZC_RATIOS: [f64; 3] = [2.0, -3.0, 2.0];
pub const FRAG_RATIOS: [f64; 3] = [1.0, -2.0, 2.0];

impl Scheme {
    pub fn validate(self) -> Result<Self> {
        match self {
            Scheme::Gpg(0) => Err(Error::InvalidConfig("GPG needs at least one group".into())),
            Scheme::Apg(n) if n == 0 || n % 2 != 0 => {
                Err(Error::InvalidConfig(format!("APG needs an even, positive group count; got {n}")))
            }
            s => Ok(s),
        }
    }

    /// Number of free parameters searched by the global optimiser.
    pub fn dimension(self) -> usize {
        match self {
            Scheme::Gzc | Scheme::Frag => 4,
            Scheme::Gpg(n) => n,
            Scheme::Apg(n) => n / 2,
        }
    }

    pub fn group_count(self) -> usize {
        match self {
            Scheme::Gzc | Scheme::Frag => 6,
            Scheme::Gpg(n) | Scheme::Apg(n) => n,
        }
    }

    /// Whether the search is over pulse counts at fixed timings.
    pub fn is_pulse_count_scheme(self) -> bool {
        matches!(self, Scheme::Gpg(_) | Scheme::Apg(_))
    }

    /// Start of the gate window for this scheme.
    pub fn window_start(self, gate_time: f64) -> f64 {
        match self {
            Scheme::Gpg(_) => 0.0,
            _ => -gate_time / 2.0,
        }
    }

    /// Fixed group times of the pulse-count schemes, in seconds.
    pub fn fixed_times(self, gate_time: f64) -> Option<Vec<f64>> {
        match self {
            Scheme::Gpg(n) => Some((1..=n).map(|k| gate_time * k as f64 / n as f64).collect()),
            Scheme::Apg(n) => {
                let h = (n / 2) as i64;
                Some(
                    (-h..=h)
                        .filter(|&k| k != 0)
                        .map(|k| gate_time * k as f64 / n as f64)
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// Groups for a raw parameter vector, without integer checks.
    ///
    /// GPG: x = z; APG: x = half-z; GZC/FRAG: x = (n, τ₁, τ₂, τ₃).
    pub fn continuous_groups(self, x: &[f64], gate_time: f64) -> Vec<(f64, f64)> {
        match self {
            Scheme::Gpg(n) => {
                let dt = gate_time / n as f64;
                x.iter().enumerate().map(|(k, &z)| (z, dt * (k + 1) as f64)).collect()
            }
            Scheme::Apg(n) => {
                let dt = gate_time / n as f64;
                let half = x.len();
                let mut groups = Vec::with_capacity(2 * half);
                for k in (0..half).rev() {
                    groups.push((-x[k], -dt * (k + 1) as f64));
                }
                for (k, &z) in x.iter().enumerate() {
                    groups.push((z, dt * (k + 1) as f64));
                }
                groups
            }
            Scheme::Gzc | Scheme::Frag => {
                let [a, b, c] = if self == Scheme::Gzc { GZC_RATIOS } else { FRAG_RATIOS };
                let n = x[0];
                let (t1, t2, t3) = (x[1], x[2], x[3]);
                vec![
                    (-n * a, -t1),
                    (-n * b, -t2),
                    (-n * c, -t3),
                    (n * c, t3),
                    (n * b, t2),
                    (n * a, t1),
                ]
            }
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Gzc => write!(f, "gzc"),
            Scheme::Frag => write!(f, "frag"),
            Scheme::Gpg(n) => write!(f, "gpg:{n}"),
            Scheme::Apg(n) => write!(f, "apg:{n}"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let scheme = match lower.split_once(':') {
            None if lower == "gzc" => Scheme::Gzc,
            None if lower == "frag" => Scheme::Frag,
            Some((kind, n)) => {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad group count in scheme '{s}'")))?;
                match kind {
                    "gpg" => Scheme::Gpg(n),
                    "apg" => Scheme::Apg(n),
                    _ => return Err(Error::InvalidConfig(format!("unknown scheme '{s}'"))),
                }
            }
            None => return Err(Error::InvalidConfig(format!("unknown scheme '{s}'"))),
        };
        scheme.validate()
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.to_string()
    }
}

/// Scheme parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    Gzc { n: f64, taus: [f64; 3] },
    Frag { n: f64, taus: [f64; 3] },
    Gpg { z: Vec<f64> },
    Apg { half_z: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub kind: SchemeKind,
    /// Gate time T_G (s).
    pub gate_time: f64,
}

impl SchemeParams {
    pub fn scheme(&self) -> Scheme {
        match &self.kind {
            SchemeKind::Gzc { .. } => Scheme::Gzc,
            SchemeKind::Frag { .. } => Scheme::Frag,
            SchemeKind::Gpg { z } => Scheme::Gpg(z.len()),
            SchemeKind::Apg { half_z } => Scheme::Apg(2 * half_z.len()),
        }
    }

    /// Flat parameter vector in the optimiser's layout.
    pub fn vector(&self) -> Vec<f64> {
        match &self.kind {
            SchemeKind::Gzc { n, taus } | SchemeKind::Frag { n, taus } => {
                vec![*n, taus[0], taus[1], taus[2]]
            }
            SchemeKind::Gpg { z } => z.clone(),
            SchemeKind::Apg { half_z } => half_z.clone(),
        }
    }

    pub fn from_vector(scheme: Scheme, x: &[f64], gate_time: f64) -> Self {
        let kind = match scheme {
            Scheme::Gzc => SchemeKind::Gzc { n: x[0], taus: [x[1], x[2], x[3]] },
            Scheme::Frag => SchemeKind::Frag { n: x[0], taus: [x[1], x[2], x[3]] },
            Scheme::Gpg(_) => SchemeKind::Gpg { z: x.to_vec() },
            Scheme::Apg(_) => SchemeKind::Apg { half_z: x.to_vec() },
        };
        Self { kind, gate_time }
    }
}

const INTEGER_TOLERANCE: f64 = 1e-9;

fn as_integer(value: f64, what: &str) -> Result<i64> {
    let r = value.round();
    if (value - r).abs() > INTEGER_TOLERANCE || !value.is_finite() {
        return Err(Error::InvalidSequence(format!("{what} = {value} is not an integer")));
    }
    Ok(r as i64)
}

/// Builds the finalised, integer-valued pulse sequence for a scheme.
pub fn build_sequence(params: &SchemeParams) -> Result<PulseSequence> {
    let scheme = params.scheme().validate()?;
    let t_g = params.gate_time;
    if !(t_g > 0.0) {
        return Err(Error::InvalidSequence("gate time must be positive".into()));
    }
    let x = params.vector();
    match &params.kind {
        SchemeKind::Gzc { taus, .. } | SchemeKind::Frag { taus, .. } => {
            as_integer(x[0], "n")?;
            for &tau in taus {
                if !(tau > 0.0 && tau <= t_g / 2.0) {
                    return Err(Error::InvalidSequence(format!(
                        "timing {tau} outside (0, T_G/2] for T_G = {t_g}"
                    )));
                }
            }
        }
        SchemeKind::Gpg { z } | SchemeKind::Apg { half_z: z } => {
            for (k, &v) in z.iter().enumerate() {
                as_integer(v, &format!("z[{k}]"))?;
            }
        }
    }
    let groups = scheme
        .continuous_groups(&x, t_g)
        .into_iter()
        .map(|(z, t)| Ok(PulseGroup { pairs: as_integer(z, "pulse count")?, time: t }))
        .collect::<Result<Vec<_>>>()?;
    PulseSequence::new(groups, t_g, scheme.window_start(t_g))
}

/// Smallest repetition rate (Hz) at which adjacent expanded groups do not overlap.
///
/// Operates on (z, t) pairs sorted by time; zero groups are ignored.
pub fn min_repetition_rate_raw(groups: &[(f64, f64)]) -> Result<f64> {
    let mut rate: f64 = 0.0;
    let mut prev: Option<(usize, f64, f64)> = None;
    for (k, &(z, t)) in groups.iter().enumerate() {
        if z == 0.0 {
            continue;
        }
        if let Some((j, zp, tp)) = prev {
            let gap = t - tp;
            if !(gap > 0.0) {
                return Err(Error::CoincidentGroups { first: j, second: k });
            }
            rate = rate.max((zp.abs() + z.abs()) / (2.0 * gap));
        }
        prev = Some((k, z, t));
    }
    Ok(rate)
}

pub fn min_repetition_rate(seq: &PulseSequence) -> Result<f64> {
    min_repetition_rate_raw(&seq.as_continuous())
}

/// One pulse pair on the laser grid at time `slot / rate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kick {
    pub slot: i64,
    pub sign: i8,
    /// Index of the pulse group this kick came from.
    pub group: usize,
}

/// Individual pulse pairs on a repetition-rate grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KickTrain {
    pub kicks: Vec<Kick>,
    /// Laser repetition rate (Hz).
    pub repetition_rate: f64,
}

impl KickTrain {
    /// Validates sign values and slot uniqueness, sorting kicks by slot.
    pub fn new(mut kicks: Vec<Kick>, repetition_rate: f64) -> Result<Self> {
        if !(repetition_rate > 0.0) || !repetition_rate.is_finite() {
            return Err(Error::InvalidSequence("repetition rate must be positive".into()));
        }
        if kicks.iter().any(|k| k.sign != 1 && k.sign != -1) {
            return Err(Error::InvalidSequence("kick signs must be ±1".into()));
        }
        kicks.sort_by_key(|k| k.slot);
        if let Some(w) = kicks.windows(2).find(|w| w[0].slot == w[1].slot) {
            return Err(Error::GridCollision {
                first: w[0].group,
                second: w[1].group,
                slot: w[0].slot,
                rate: repetition_rate,
            });
        }
        Ok(Self { kicks, repetition_rate })
    }

    pub fn len(&self) -> usize {
        self.kicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kicks.is_empty()
    }

    pub fn period(&self) -> f64 {
        1.0 / self.repetition_rate
    }

    pub fn time(&self, kick: &Kick) -> f64 {
        kick.slot as f64 / self.repetition_rate
    }

    pub fn times(&self) -> Vec<f64> {
        self.kicks.iter().map(|k| self.time(k)).collect()
    }

    pub fn signed_total(&self) -> i64 {
        self.kicks.iter().map(|k| k.sign as i64).sum()
    }

    /// Kicks as (z, t) impulses for the cost functions, one pair each.
    pub fn as_continuous(&self) -> Vec<(f64, f64)> {
        self.kicks.iter().map(|k| (k.sign as f64, self.time(k))).collect()
    }

    /// Re-collects consecutive kicks of the same group into pulse groups at
    /// their centroid times.
    pub fn to_sequence(&self, gate_time: f64, start: f64) -> Result<PulseSequence> {
        let mut groups: Vec<PulseGroup> = Vec::new();
        let mut k = 0;
        while k < self.kicks.len() {
            let g = self.kicks[k].group;
            let mut j = k;
            let (mut pairs, mut slot_sum) = (0i64, 0i64);
            while j < self.kicks.len() && self.kicks[j].group == g {
                pairs += self.kicks[j].sign as i64;
                slot_sum += self.kicks[j].slot;
                j += 1;
            }
            let count = (j - k) as f64;
            groups.push(PulseGroup { pairs, time: slot_sum as f64 / count / self.repetition_rate });
            k = j;
        }
        PulseSequence::new(groups, gate_time, start)
    }
}

/// First grid slot of a block of `count` kicks centred as close as possible
/// to `centre` (in slot units), ties going to the earlier slot.
pub fn block_start(centre: f64, count: u64) -> i64 {
    let first = centre - (count as f64 - 1.0) / 2.0;
    (first - 0.5).ceil() as i64
}

/// Expands groups into consecutive grid slots centred on each group time.
pub fn expand_to_kick_train(seq: &PulseSequence, repetition_rate: f64) -> Result<KickTrain> {
    if !(repetition_rate > 0.0) || !repetition_rate.is_finite() {
        return Err(Error::InvalidSequence("repetition rate must be positive".into()));
    }
    let f_min = min_repetition_rate(seq)?;
    if repetition_rate < f_min {
        return Err(Error::RateTooLow { rate: repetition_rate, min_rate: f_min });
    }
    expand_unchecked(seq, repetition_rate)
}

/// Expansion without the f_min precondition; collisions are still errors.
pub fn expand_unchecked(seq: &PulseSequence, repetition_rate: f64) -> Result<KickTrain> {
    let mut kicks = Vec::with_capacity(seq.total_pairs() as usize);
    let mut last: Option<(usize, i64)> = None;
    for (g, group) in seq.groups.iter().enumerate() {
        let count = group.pairs.unsigned_abs();
        let first = block_start(group.time * repetition_rate, count);
        if let Some((prev, end)) = last {
            if first <= end {
                return Err(Error::GridCollision { first: prev, second: g, slot: first, rate: repetition_rate });
            }
        }
        let sign = group.pairs.signum() as i8;
        for s in 0..count as i64 {
            kicks.push(Kick { slot: first + s, sign, group: g });
        }
        last = Some((g, first + count as i64 - 1));
    }
    Ok(KickTrain { kicks, repetition_rate })
}
