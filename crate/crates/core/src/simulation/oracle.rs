//! Deliberately naive re-implementations used as ground truth in tests and in
//! the `oracle-check` command. Nothing here shares code with the optimized
//! estimation or eigensolver paths.

use nalgebra::{DMatrix, DVector};

use super::Stream;
use crate::error::{Error, Result};
use crate::estimation::{ProbabilityField, WeightScheme};
use crate::ingestion::{Panel, PanelItem};
use crate::trajectory::{CategoricalTrajectory, CellGrid, Mode, StateSet, StateSpace};

/// Indicator of state `j` for trajectory `traj` at time `t`, by linear scan.
fn indicator_at(traj: &CategoricalTrajectory, j: usize, t: f64) -> f64 {
    let bps = traj.breakpoints();
    let segs = traj.segments();
    let mut k = 0;
    while k + 1 < segs.len() && bps[k + 1] <= t {
        k += 1;
    }
    if segs[k].as_slice().contains(&j) {
        1.0
    } else {
        0.0
    }
}

/// Mean and kernel by evaluating every trajectory at the cell midpoints and
/// averaging products over the sample, one entry at a time.
pub fn oracle_covariance(panel: &Panel, grid: &CellGrid) -> Result<ProbabilityField> {
    let n = panel.len();
    if n == 0 {
        return Err(Error::Validation("empty panel".into()));
    }
    let q = panel.space().len();
    let m = grid.n_cells();
    let mids: Vec<f64> = (0..m)
        .map(|a| {
            let (l, r) = grid.cell(a);
            0.5 * (l + r)
        })
        .collect();
    let trajs: Vec<&CategoricalTrajectory> = panel.trajectories().collect();

    let mut p = vec![vec![0.0; m]; q];
    for j in 0..q {
        for a in 0..m {
            let mut s = 0.0;
            for t in &trajs {
                s += indicator_at(t, j, mids[a]);
            }
            p[j][a] = s / n as f64;
        }
    }
    let d = q * m;
    let mut cov = DMatrix::zeros(d, d);
    for j in 0..q {
        for l in 0..q {
            for a in 0..m {
                for b in 0..m {
                    let mut joint = 0.0;
                    for t in &trajs {
                        joint += indicator_at(t, j, mids[a]) * indicator_at(t, l, mids[b]);
                    }
                    joint /= n as f64;
                    cov[(j * m + a, l * m + b)] = joint - p[j][a] * p[l][b];
                }
            }
        }
    }
    let mean = DVector::from_fn(d, |k, _| p[k / m][k % m]);
    ProbabilityField::from_parts(panel.space().clone(), grid.clone(), n, mean, cov)
}

/// `sqrt(w_j Δ_a) γ_{jℓ}(a, b) sqrt(w_ℓ Δ_b)` written out entry by entry.
pub fn naive_operator(field: &ProbabilityField, weights: &WeightScheme) -> Vec<Vec<f64>> {
    let q = field.q();
    let m = field.m();
    let nodes = field.grid().nodes();
    let w = weights.weights();
    let mut out = vec![vec![0.0; q * m]; q * m];
    for j in 0..q {
        for a in 0..m {
            let left = (w[j] * (nodes[a + 1] - nodes[a])).sqrt();
            for l in 0..q {
                for b in 0..m {
                    let right = (w[l] * (nodes[b + 1] - nodes[b])).sqrt();
                    out[j * m + a][l * m + b] = left * field.cov(j, l, a, b) * right;
                }
            }
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// in decreasing order.
pub fn jacobi_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&k| k != i).map(move |k| (i, k)))
            .map(|(i, k)| a[i][k] * a[i][k])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for r in p + 1..n {
                let apr = a[p][r];
                if apr == 0.0 {
                    continue;
                }
                let theta = (a[r][r] - a[p][p]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akr = a[k][r];
                    a[k][p] = c * akp - s * akr;
                    a[k][r] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let ark = a[r][k];
                    a[p][k] = c * apk - s * ark;
                    a[r][k] = s * apk + c * ark;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Shape of the random panels drawn by [`random_panel`].
#[derive(Clone, Copy, Debug)]
pub struct RandomPanelShape {
    pub max_n: usize,
    pub max_q: usize,
    /// Breakpoints are drawn from the lattice `k / lattice`, so the union grid
    /// has at most this many cells.
    pub lattice: usize,
    pub mode: Mode,
}

impl Default for RandomPanelShape {
    fn default() -> Self {
        RandomPanelShape {
            max_n: 10,
            max_q: 4,
            lattice: 20,
            mode: Mode::Tds,
        }
    }
}

/// Small random normalized panel with `2 ≤ n ≤ max_n`, `2 ≤ q ≤ max_q`.
pub fn random_panel(seed: u64, shape: RandomPanelShape) -> Result<Panel> {
    let mut rng = Stream::new(seed, u64::MAX);
    let n = 2 + rng.below(shape.max_n.max(2) - 1);
    let q = 2 + rng.below(shape.max_q.max(2) - 1);
    let lattice = shape.lattice.max(1);
    let space = StateSpace::new((0..q).map(|j| format!("S{}", j + 1)))?;
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let mut bps = vec![0.0];
        for k in 1..lattice {
            if rng.uniform() < 0.25 {
                bps.push(k as f64 / lattice as f64);
            }
        }
        bps.push(1.0);
        let mut segs: Vec<StateSet> = Vec::with_capacity(bps.len() - 1);
        for _ in 0..bps.len() - 1 {
            let s = match shape.mode {
                Mode::Tds => {
                    let mut j = rng.below(q);
                    if let Some(prev) = segs.last() {
                        if prev.contains(j) {
                            j = (j + 1 + rng.below(q - 1)) % q;
                        }
                    }
                    StateSet::singleton(j)
                }
                Mode::Tcata => (0..q).filter(|_| rng.uniform() < 0.4).collect(),
            };
            segs.push(s);
        }
        items.push(PanelItem {
            subject: format!("r{i}"),
            condition: "random".into(),
            trajectory: CategoricalTrajectory::new(bps, segs)?,
        });
    }
    Panel::new(space, shape.mode, true, items)
}
