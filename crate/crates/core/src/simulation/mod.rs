//! Synthetic panels from semi-Markov chains or independent on/off processes,
//! plus the brute-force oracles used to check the estimators.
//!
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`). Trajectory `i`
//! of a run seeded with `seed` uses the 32-byte key
//! `seed.to_le_bytes() ‖ i.to_le_bytes() ‖ [0; 16]`, so every trajectory has its
//! own stream and the output does not depend on scheduling. Draws are derived
//! from `next_u64` only:
//!
//! * uniform `u = (next_u64 >> 11) · 2⁻⁵³` in `[0, 1)`;
//! * exponential sojourn `−ln(1 − u) / rate`;
//! * uniform sojourn `low + (high − low) u`;
//! * categorical draw: first index whose cumulative probability exceeds `u`.

pub mod consistency;
pub mod oracle;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{Panel, PanelItem};
use crate::trajectory::{CategoricalTrajectory, Mode, StateSet, StateSpace};

const SUM_TOLERANCE: f64 = 1e-12;

/// Sojourn-time law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sojourn {
    Exponential { rate: f64 },
    Uniform { low: f64, high: f64 },
}

impl Sojourn {
    fn validate(&self, what: &str) -> Result<()> {
        match *self {
            Sojourn::Exponential { rate } if rate.is_finite() && rate > 0.0 => Ok(()),
            Sojourn::Uniform { low, high } if low > 0.0 && high > low && high.is_finite() => Ok(()),
            _ => Err(Error::Validation(format!("invalid sojourn law for {what}: {self:?}"))),
        }
    }

    fn draw(&self, rng: &mut Stream) -> f64 {
        let u = rng.uniform();
        match *self {
            Sojourn::Exponential { rate } => -(1.0 - u).ln() / rate,
            Sojourn::Uniform { low, high } => low + (high - low) * u,
        }
    }
}

/// Data-generating mechanism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Process {
    /// Semi-Markov chain: one state at a time (TDS-like).
    SemiMarkov {
        initial: Vec<f64>,
        /// Zero diagonal; each row sums to one, or is all zero for an absorbing state.
        transitions: Vec<Vec<f64>>,
        sojourn: Vec<Sojourn>,
    },
    /// Independent alternating on/off renewal process per state (TCATA-like).
    OnOff {
        /// Probability that each state is on at time 0.
        initial_on: Vec<f64>,
        on: Vec<Sojourn>,
        off: Vec<Sojourn>,
    },
}

/// Process specification, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub states: Vec<String>,
    pub horizon: f64,
    pub process: Process,
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<StateSpace> {
        let space = StateSpace::new(self.states.iter().cloned())?;
        let q = space.len();
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Validation(format!("horizon must be positive, got {}", self.horizon)));
        }
        let len_check = |name: &str, len: usize| {
            if len == q {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} has {len} entries, expected {q}")))
            }
        };
        match &self.process {
            Process::SemiMarkov {
                initial,
                transitions,
                sojourn,
            } => {
                len_check("initial", initial.len())?;
                len_check("transitions", transitions.len())?;
                len_check("sojourn", sojourn.len())?;
                check_distribution("initial distribution", initial)?;
                for (j, row) in transitions.iter().enumerate() {
                    len_check(&format!("transition row {j}"), row.len())?;
                    if row[j] != 0.0 {
                        return Err(Error::Validation(format!(
                            "transition row {j} must have a zero diagonal"
                        )));
                    }
                    if row.iter().any(|&p| p != 0.0) {
                        check_distribution(&format!("transition row {j}"), row)?;
                    }
                }
                for (j, s) in sojourn.iter().enumerate() {
                    s.validate(&format!("state {j}"))?;
                }
            }
            Process::OnOff { initial_on, on, off } => {
                len_check("initial_on", initial_on.len())?;
                len_check("on", on.len())?;
                len_check("off", off.len())?;
                if let Some(p) = initial_on.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(Error::Validation(format!("initial_on probability {p} outside [0, 1]")));
                }
                for j in 0..q {
                    on[j].validate(&format!("on-period of state {j}"))?;
                    off[j].validate(&format!("off-period of state {j}"))?;
                }
            }
        }
        Ok(space)
    }

    pub fn mode(&self) -> Mode {
        match self.process {
            Process::SemiMarkov { .. } => Mode::Tds,
            Process::OnOff { .. } => Mode::Tcata,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Validation(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Validation(format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}

/// Per-trajectory random stream.
pub struct Stream(ChaCha20Rng);

impl Stream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&index.to_le_bytes());
        Stream(ChaCha20Rng::from_seed(key))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index drawn from a probability vector.
    pub fn categorical(&mut self, p: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        let mut last = 0;
        for (k, &pk) in p.iter().enumerate() {
            if pk <= 0.0 {
                continue;
            }
            acc += pk;
            last = k;
            if u < acc {
                return k;
            }
        }
        last
    }

    /// Integer uniform on `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

/// Mixes a base seed with two counters; used to give replicates distinct seeds.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Draws `n` independent trajectories on `[0, horizon]`.
///
/// The returned panel is not marked normalized; use
/// [`Panel::into_normalized`] when the horizon is 1.
pub fn simulate_panel(spec: &ProcessSpec, n: usize, seed: u64) -> Result<Panel> {
    if n == 0 {
        return Err(Error::Validation("n must be at least 1".into()));
    }
    let space = spec.validate()?;
    let items = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = Stream::new(seed, i as u64);
            let trajectory = match &spec.process {
                Process::SemiMarkov {
                    initial,
                    transitions,
                    sojourn,
                } => semi_markov_path(spec.horizon, initial, transitions, sojourn, &mut rng),
                Process::OnOff { initial_on, on, off } => {
                    on_off_path(spec.horizon, initial_on, on, off, &mut rng)
                }
            }?;
            Ok(PanelItem {
                subject: format!("sim{i:06}"),
                condition: "sim".into(),
                trajectory,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Panel::new(space, spec.mode(), false, items)
}

fn semi_markov_path(
    horizon: f64,
    initial: &[f64],
    transitions: &[Vec<f64>],
    sojourn: &[Sojourn],
    rng: &mut Stream,
) -> Result<CategoricalTrajectory> {
    let mut state = rng.categorical(initial);
    let mut bps = vec![0.0];
    let mut states: Vec<usize> = Vec::new();
    let mut t = 0.0;
    loop {
        let absorbing = transitions[state].iter().all(|&p| p == 0.0);
        let next_t = if absorbing {
            horizon
        } else {
            t + sojourn[state].draw(rng)
        };
        // sojourn clipped at the horizon
        let right = next_t.min(horizon);
        if right > t {
            if states.last() == Some(&state) {
                *bps.last_mut().unwrap() = right;
            } else {
                states.push(state);
                bps.push(right);
            }
            t = right;
        }
        if t >= horizon {
            break;
        }
        state = rng.categorical(&transitions[state]);
    }
    CategoricalTrajectory::from_states(bps, &states)
}

fn on_off_path(
    horizon: f64,
    initial_on: &[f64],
    on: &[Sojourn],
    off: &[Sojourn],
    rng: &mut Stream,
) -> Result<CategoricalTrajectory> {
    let q = initial_on.len();
    let mut intervals: Vec<(usize, f64, f64)> = Vec::new();
    let mut cuts = vec![0.0, horizon];
    for j in 0..q {
        let mut is_on = rng.uniform() < initial_on[j];
        let mut t = 0.0;
        while t < horizon {
            let d = if is_on { on[j].draw(rng) } else { off[j].draw(rng) };
            let right = (t + d).min(horizon);
            if is_on && right > t {
                intervals.push((j, t, right));
                cuts.push(t);
                cuts.push(right);
            }
            t = right;
            is_on = !is_on;
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let segs: Vec<StateSet> = cuts
        .windows(2)
        .map(|w| {
            intervals
                .iter()
                .filter(|&&(_, l, r)| l <= w[0] && w[1] <= r)
                .map(|&(j, _, _)| j)
                .collect()
        })
        .collect();
    CategoricalTrajectory::new(cuts, segs)
}
