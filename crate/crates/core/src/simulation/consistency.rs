//! Monte Carlo check that the estimators converge at the root-n rate.
//!
//! Each replicate reports two errors with equal weights `1/q`:
//!
//! * `‖p̂ − p‖_H`, integrated exactly over the step functions;
//! * `‖Γ̂ − Γ‖` in operator norm, on a uniform grid of cell averages, as the
//!   largest eigenvalue magnitude of the difference of the assembled matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{derive_seed, simulate_panel, Process, ProcessSpec, Sojourn};
use crate::error::{Error, Result};
use crate::estimation::{CellPanel, ProbabilityField, WeightScheme};
use crate::ingestion::Panel;
use crate::mfpca::assemble_operator;
use crate::trajectory::CellGrid;

/// Default number of uniform cells for the operator-norm error.
pub const DEFAULT_OPERATOR_CELLS: usize = 32;

/// What the estimates are compared against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Truth {
    /// Two-state chain with exponential sojourns of equal `rate` in both
    /// states and `P(X(0) = state 1) = initial_first`.
    TwoStateSymmetric { rate: f64, initial_first: f64 },
    /// An independent run of size `n` stands in for the truth.
    Reference { n: usize },
}

impl Truth {
    /// `p_1(t) = ½ + (π₀ − ½) e^{−2λt}` for the symmetric two-state chain.
    pub fn two_state_occupancy(rate: f64, initial_first: f64, t: f64) -> f64 {
        0.5 + (initial_first - 0.5) * (-2.0 * rate * t).exp()
    }

    /// `Cov(X_1(s), X_1(t))` for the symmetric two-state chain.
    pub fn two_state_kernel(rate: f64, initial_first: f64, s: f64, t: f64) -> f64 {
        let (u, v) = if s <= t { (s, t) } else { (t, s) };
        let pu = Self::two_state_occupancy(rate, initial_first, u);
        let pv = Self::two_state_occupancy(rate, initial_first, v);
        let stay = 0.5 * (1.0 + (-2.0 * rate * (v - u)).exp());
        pu * stay - pu * pv
    }
}

/// Two-state spec matching [`Truth::TwoStateSymmetric`].
pub fn two_state_spec(rate: f64, initial_first: f64, horizon: f64) -> ProcessSpec {
    ProcessSpec {
        states: vec!["S1".into(), "S2".into()],
        horizon,
        process: Process::SemiMarkov {
            initial: vec![initial_first, 1.0 - initial_first],
            transitions: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            sojourn: vec![Sojourn::Exponential { rate }; 2],
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub mean_errors: Vec<f64>,
    pub operator_errors: Vec<f64>,
    pub median_mean_error: f64,
    pub median_operator_error: f64,
}

/// Mean of a panel as a step function: `nodes` and one row of levels per state.
#[derive(Clone, Debug)]
struct StepMean {
    nodes: Vec<f64>,
    levels: Vec<Vec<f64>>,
}

/// Occupancy fractions by sweeping segment endpoints; avoids a dense n × qm matrix.
fn step_mean(panel: &Panel) -> Result<StepMean> {
    let q = panel.space().len();
    let n = panel.len() as f64;
    let mut events: Vec<(f64, usize, i64)> = Vec::new();
    let mut horizon = None;
    for t in panel.trajectories() {
        horizon.get_or_insert(t.horizon());
        for (l, r, s) in t.iter_segments() {
            for j in s.iter() {
                events.push((l, j, 1));
                events.push((r, j, -1));
            }
        }
    }
    let horizon = horizon.ok_or_else(|| Error::Validation("the panel is empty".into()))?;
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut nodes = vec![0.0];
    let mut levels: Vec<Vec<f64>> = vec![Vec::new(); q];
    let mut counts = vec![0i64; q];
    let mut k = 0;
    while k < events.len() {
        let t = events[k].0;
        if t > *nodes.last().unwrap() {
            for j in 0..q {
                levels[j].push(counts[j] as f64 / n);
            }
            nodes.push(t);
        }
        while k < events.len() && events[k].0 == t {
            counts[events[k].1] += events[k].2;
            k += 1;
        }
    }
    if *nodes.last().unwrap() < horizon {
        for j in 0..q {
            levels[j].push(counts[j] as f64 / n);
        }
        nodes.push(horizon);
    }
    Ok(StepMean { nodes, levels })
}

/// `∫_l^r (c − ½ − A e^{−kt})² dt`.
fn squared_gap_integral(c: f64, amp: f64, k: f64, l: f64, r: f64) -> f64 {
    let g = c - 0.5;
    let mut out = g * g * (r - l);
    if amp != 0.0 {
        let e1 = (-k * l).exp() - (-k * r).exp();
        let e2 = (-2.0 * k * l).exp() - (-2.0 * k * r).exp();
        out += -2.0 * g * amp * e1 / k + amp * amp * e2 / (2.0 * k);
    }
    out
}

fn mean_error_analytic(est: &StepMean, rate: f64, initial_first: f64) -> f64 {
    let amp = initial_first - 0.5;
    let k = 2.0 * rate;
    let mut sq = 0.0;
    for a in 0..est.nodes.len() - 1 {
        let (l, r) = (est.nodes[a], est.nodes[a + 1]);
        sq += squared_gap_integral(est.levels[0][a], amp, k, l, r);
        sq += squared_gap_integral(est.levels[1][a], -amp, k, l, r);
    }
    (sq / 2.0).max(0.0).sqrt()
}

fn mean_error_reference(est: &StepMean, truth: &StepMean) -> f64 {
    let mut nodes: Vec<f64> = est.nodes.iter().chain(&truth.nodes).copied().collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let q = est.levels.len();
    let level = |s: &StepMean, j: usize, mid: f64| {
        let a = s.nodes.partition_point(|&u| u <= mid).saturating_sub(1);
        s.levels[j][a.min(s.levels[j].len() - 1)]
    };
    let mut sq = 0.0;
    for w in nodes.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        for j in 0..q {
            let d = level(est, j, mid) - level(truth, j, mid);
            sq += d * d * (w[1] - w[0]);
        }
    }
    (sq / q as f64).sqrt()
}

/// Gauss-Legendre nodes and weights on `[−1, 1]`.
fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; order];
    let mut w = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Analytic two-state mean and kernel averaged over the cells of `grid`.
fn two_state_field(rate: f64, initial_first: f64, grid: &CellGrid) -> Result<ProbabilityField> {
    let (gx, gw) = gauss_legendre(12);
    let quad = |l: f64, r: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        let (h, c) = (0.5 * (r - l), 0.5 * (r + l));
        gx.iter().zip(&gw).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
    };
    let m = grid.n_cells();
    let nodes = grid.nodes();
    let lengths = grid.lengths();
    let p1: Vec<f64> = (0..m)
        .map(|a| {
            quad(nodes[a], nodes[a + 1], &|t| Truth::two_state_occupancy(rate, initial_first, t))
                / lengths[a]
        })
        .collect();
    let mut g11 = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let (la, ra, lb, rb) = (nodes[a], nodes[a + 1], nodes[b], nodes[b + 1]);
            let kernel = |s: f64, t: f64| Truth::two_state_kernel(rate, initial_first, s, t);
            let total = if a == b {
                // split the inner integral at the kink on the diagonal
                quad(la, ra, &|s| quad(la, s, &|t| kernel(s, t)) + quad(s, ra, &|t| kernel(s, t)))
            } else {
                quad(la, ra, &|s| quad(lb, rb, &|t| kernel(s, t)))
            };
            let v = total / (lengths[a] * lengths[b]);
            g11[(a, b)] = v;
            g11[(b, a)] = v;
        }
    }
    let mean = DVector::from_fn(2 * m, |k, _| if k < m { p1[k] } else { 1.0 - p1[k - m] });
    let cov = DMatrix::from_fn(2 * m, 2 * m, |r, c| {
        let sign = if (r < m) == (c < m) { 1.0 } else { -1.0 };
        sign * g11[(r % m, c % m)]
    });
    let space = crate::trajectory::StateSpace::new(["S1", "S2"])?;
    ProbabilityField::from_parts(space, grid.clone(), usize::MAX, mean, cov)
}

fn operator_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a - b).eigenvalues.amax()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Runs `replicates` panels for every `n` and records both errors.
///
/// Replicate `r` of the `k`-th sample size is seeded with
/// `derive_seed(seed, k, r)`; the reference run uses `derive_seed(seed, u64::MAX, 0)`.
pub fn consistency_experiment(
    spec: &ProcessSpec,
    n_values: &[usize],
    replicates: usize,
    seed: u64,
    truth: Truth,
    grid_cells: usize,
) -> Result<Vec<ConsistencyRow>> {
    let space = spec.validate()?;
    if replicates == 0 {
        return Err(Error::Validation("at least one replicate is needed".into()));
    }
    let q = space.len();
    let grid = CellGrid::uniform(spec.horizon, grid_cells)?;
    let weights = WeightScheme::equal(q)?;
    let (true_mean, true_op) = match truth {
        Truth::TwoStateSymmetric { rate, initial_first } => {
            if q != 2 {
                return Err(Error::Validation("the analytic truth needs a two-state spec".into()));
            }
            let field = two_state_field(rate, initial_first, &grid)?;
            (None, assemble_operator(&field, &weights)?)
        }
        Truth::Reference { n } => {
            let panel = simulate_panel(spec, n, derive_seed(seed, u64::MAX, 0))?;
            let field = ProbabilityField::from_cells(&CellPanel::averaged(&panel, &grid)?)?;
            (Some(step_mean(&panel)?), assemble_operator(&field, &weights)?)
        }
    };
    let mut rows = Vec::with_capacity(n_values.len());
    for (k, &n) in n_values.iter().enumerate() {
        let mut mean_errors = Vec::with_capacity(replicates);
        let mut operator_errors = Vec::with_capacity(replicates);
        for r in 0..replicates {
            let panel = simulate_panel(spec, n, derive_seed(seed, k as u64, r as u64))?;
            let est = step_mean(&panel)?;
            mean_errors.push(match (&truth, &true_mean) {
                (Truth::TwoStateSymmetric { rate, initial_first }, _) => {
                    mean_error_analytic(&est, *rate, *initial_first)
                }
                (_, Some(reference)) => mean_error_reference(&est, reference),
                _ => unreachable!(),
            });
            let field = ProbabilityField::from_cells(&CellPanel::averaged(&panel, &grid)?)?;
            operator_errors.push(operator_norm(&assemble_operator(&field, &weights)?, &true_op));
        }
        rows.push(ConsistencyRow {
            n,
            median_mean_error: median(&mean_errors),
            median_operator_error: median(&operator_errors),
            mean_errors,
            operator_errors,
        });
    }
    Ok(rows)
}

/// Successive ratios of the median mean errors.
pub fn median_ratios(rows: &[ConsistencyRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| w[1].median_mean_error / w[0].median_mean_error)
        .collect()
}
