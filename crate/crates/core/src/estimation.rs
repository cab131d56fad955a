//! Empirical mean curves, covariance kernels and inner-product weights.
//!
//! Every indicator trajectory is constant on the cells of the union grid, so
//! on that grid the estimators are exact finite sums. On a coarser grid each
//! indicator is replaced by its average over a cell; the kernel computed from
//! those averages is then the length-weighted average of the exact kernel over
//! each cell product.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::Panel;
use crate::trajectory::{CellGrid, StateSpace};

/// How the quadrature grid is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "cells")]
pub enum GridPolicy {
    /// Union of all breakpoints, whatever its size.
    Exact,
    /// Union grid when it has at most this many cells, uniform grid of that size otherwise.
    Capped(usize),
    /// Uniform grid with this many cells.
    Uniform(usize),
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy::Capped(512)
    }
}

impl FromStr for GridPolicy {
    type Err = Error;

    /// `exact`, `capped:<m>` or `uniform:<m>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("invalid grid policy '{s}'"));
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a.parse::<usize>().map_err(|_| bad())?)),
            None => (s, None),
        };
        match (name, arg) {
            ("exact", None) => Ok(GridPolicy::Exact),
            ("capped", Some(m)) if m > 0 => Ok(GridPolicy::Capped(m)),
            ("uniform", Some(m)) if m > 0 => Ok(GridPolicy::Uniform(m)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for GridPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridPolicy::Exact => f.write_str("exact"),
            GridPolicy::Capped(m) => write!(f, "capped:{m}"),
            GridPolicy::Uniform(m) => write!(f, "uniform:{m}"),
        }
    }
}

/// Panel values on a grid: row `i`, column `j * m + a` holds the average of
/// `X_ij` over cell `a`.
#[derive(Clone, Debug)]
pub struct CellPanel {
    space: StateSpace,
    grid: CellGrid,
    values: DMatrix<f64>,
    exact: bool,
}

impl CellPanel {
    /// Values on a grid that refines every trajectory; they are exactly 0 or 1.
    pub fn exact(panel: &Panel, grid: &CellGrid) -> Result<Self> {
        for (i, t) in panel.trajectories().enumerate() {
            if t.horizon() != grid.horizon() || !grid.refines(t.breakpoints()) {
                return Err(Error::Internal(format!(
                    "trajectory #{i} is not constant on the cells of the grid"
                )));
            }
        }
        Self::averaged_unchecked(panel, grid, true)
    }

    /// Cell averages on an arbitrary grid covering the same horizon.
    pub fn averaged(panel: &Panel, grid: &CellGrid) -> Result<Self> {
        if let Some(i) = panel.trajectories().position(|t| t.horizon() != grid.horizon()) {
            return Err(Error::Validation(format!(
                "trajectory #{i} does not share the grid horizon {}",
                grid.horizon()
            )));
        }
        let exact = panel.trajectories().all(|t| grid.refines(t.breakpoints()));
        Self::averaged_unchecked(panel, grid, exact)
    }

    /// Grid chosen by `policy`, then values computed on it.
    pub fn build(panel: &Panel, policy: GridPolicy) -> Result<Self> {
        if panel.is_empty() {
            return Err(Error::Validation("the panel is empty".into()));
        }
        let union = panel.union_grid()?;
        match policy {
            GridPolicy::Exact => Self::exact(panel, &union),
            GridPolicy::Capped(m) if union.n_cells() <= m => Self::exact(panel, &union),
            GridPolicy::Capped(m) | GridPolicy::Uniform(m) => {
                Self::averaged(panel, &CellGrid::uniform(union.horizon(), m)?)
            }
        }
    }

    fn averaged_unchecked(panel: &Panel, grid: &CellGrid, exact: bool) -> Result<Self> {
        let q = panel.space().len();
        let m = grid.n_cells();
        let nodes = grid.nodes();
        let lengths = grid.lengths();
        let rows: Vec<Vec<f64>> = panel
            .items()
            .par_iter()
            .map(|item| {
                let mut row = vec![0.0; q * m];
                for (l, r, s) in item.trajectory.iter_segments() {
                    if s.is_empty() {
                        continue;
                    }
                    // first cell whose right node exceeds l
                    let mut a = nodes.partition_point(|&u| u <= l).saturating_sub(1);
                    while a < m && nodes[a] < r {
                        let overlap = r.min(nodes[a + 1]) - l.max(nodes[a]);
                        if overlap > 0.0 {
                            let frac = if exact { 1.0 } else { overlap / lengths[a] };
                            for j in s.iter() {
                                row[j * m + a] += frac;
                            }
                        }
                        a += 1;
                    }
                }
                row
            })
            .collect();
        let n = rows.len();
        let values = DMatrix::from_fn(n, q * m, |i, c| rows[i][c]);
        Ok(CellPanel {
            space: panel.space().clone(),
            grid: grid.clone(),
            values,
            exact,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    /// `n × (q·m)` matrix of cell values.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// True when the grid refines every trajectory (values are 0/1).
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn q(&self) -> usize {
        self.space.len()
    }

    pub fn m(&self) -> usize {
        self.grid.n_cells()
    }
}

/// Empirical mean curves `p̂_j` and covariance kernels `γ̂_{jℓ}` on a cell grid.
#[derive(Clone, Debug)]
pub struct ProbabilityField {
    space: StateSpace,
    grid: CellGrid,
    n: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl ProbabilityField {
    /// Estimates from cell values with the `1/n` convention:
    /// `γ̂_{jℓ}(a, b) = n⁻¹ Σ_i X_ij(a) X_iℓ(b) − p̂_j(a) p̂_ℓ(b)`.
    pub fn from_cells(cells: &CellPanel) -> Result<Self> {
        let n = cells.n();
        if n == 0 {
            return Err(Error::Validation("cannot estimate from an empty panel".into()));
        }
        let v = cells.values();
        let inv_n = 1.0 / n as f64;
        let mean: DVector<f64> = v.row_sum().transpose() * inv_n;
        let mut cov = v.tr_mul(v) * inv_n;
        cov.ger(-1.0, &mean, &mean, 1.0);
        let d = cov.nrows();
        for c in 0..d {
            for r in c + 1..d {
                cov[(r, c)] = cov[(c, r)];
            }
        }
        Ok(ProbabilityField {
            space: cells.space().clone(),
            grid: cells.grid().clone(),
            n,
            mean,
            cov,
        })
    }

    /// Builds a field from precomputed parts; `mean` has length `q·m` and
    /// `cov` is `(q·m) × (q·m)`, both in `j * m + a` layout.
    pub fn from_parts(
        space: StateSpace,
        grid: CellGrid,
        n: usize,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    ) -> Result<Self> {
        let d = space.len() * grid.n_cells();
        if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Validation(format!(
                "field parts have the wrong size for q·m = {d}"
            )));
        }
        Ok(ProbabilityField {
            space,
            grid,
            n,
            mean,
            cov,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.space.len()
    }

    pub fn m(&self) -> usize {
        self.grid.n_cells()
    }

    /// Stacked mean, entry `j * m + a`.
    pub fn mean_vector(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Stacked kernel, entry `(j * m + a, ℓ * m + b)`.
    pub fn cov_matrix(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn mean(&self, j: usize, a: usize) -> f64 {
        self.mean[j * self.m() + a]
    }

    pub fn cov(&self, j: usize, l: usize, a: usize, b: usize) -> f64 {
        let m = self.m();
        self.cov[(j * m + a, l * m + b)]
    }

    /// Mean curve of state `j`, one value per cell.
    pub fn mean_curve(&self, j: usize) -> &[f64] {
        let m = self.m();
        &self.mean.as_slice()[j * m..(j + 1) * m]
    }

    /// `γ̂_jj(t, t)` per cell.
    pub fn variance_curve(&self, j: usize) -> Vec<f64> {
        (0..self.m()).map(|a| self.cov(j, j, a, a)).collect()
    }

    /// `Σ_j p̂_j(t)` per cell: the mean number of selected states.
    pub fn selection_count_curve(&self) -> Vec<f64> {
        (0..self.m())
            .map(|a| (0..self.q()).map(|j| self.mean(j, a)).sum())
            .collect()
    }

    /// `∫ p̂_j(t) dt`.
    pub fn integrated_mean(&self, j: usize) -> f64 {
        self.mean_curve(j)
            .iter()
            .zip(self.grid.lengths())
            .map(|(p, d)| p * d)
            .sum()
    }

    /// `∫ p̂_j(t)(1 − p̂_j(t)) dt`, the trace of `Γ̂_jj`.
    pub fn integrated_bernoulli_variance(&self, j: usize) -> f64 {
        self.mean_curve(j)
            .iter()
            .zip(self.grid.lengths())
            .map(|(p, d)| p * (1.0 - p) * d)
            .sum()
    }
}

/// Estimates the field on a grid refining every trajectory of `panel`.
pub fn estimate_field(panel: &Panel, grid: &CellGrid) -> Result<ProbabilityField> {
    ProbabilityField::from_cells(&CellPanel::exact(panel, grid)?)
}

/// Mean number of selected states over time, per cell of the union grid.
/// Computed by a sweep over segment endpoints, without the dense cell matrix.
pub fn selection_count_curve(panel: &Panel) -> Result<(CellGrid, Vec<f64>)> {
    let grid = panel.union_grid()?;
    let nodes = grid.nodes();
    let mut delta = vec![0i64; nodes.len()];
    for t in panel.trajectories() {
        for (l, r, s) in t.iter_segments() {
            let k = s.len() as i64;
            delta[nodes.partition_point(|&u| u < l)] += k;
            delta[nodes.partition_point(|&u| u < r)] -= k;
        }
    }
    let n = panel.len() as f64;
    let mut level = 0i64;
    let curve = delta[..grid.n_cells()]
        .iter()
        .map(|d| {
            level += d;
            level as f64 / n
        })
        .collect();
    Ok((grid, curve))
}

/// Weighting scheme for the inner product `⟨f, g⟩ = Σ_j w_j ∫ f_j g_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeTag {
    /// `w_j = 1/q`.
    Equal,
    /// `w_j = 1 / ∫ p̂_j (1 − p̂_j)`.
    TraceNormalizing,
    /// `w_j = 1 / ∫ p̂_j`.
    InverseMeanProbability,
    /// Supplied by the caller.
    Custom,
}

impl FromStr for SchemeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "equal" | "e" => Ok(SchemeTag::Equal),
            "trace_normalizing" | "trace" | "p1p" => Ok(SchemeTag::TraceNormalizing),
            "inverse_mean_probability" | "inverse_mean" | "p" => {
                Ok(SchemeTag::InverseMeanProbability)
            }
            "custom" => Ok(SchemeTag::Custom),
            other => Err(Error::Validation(format!("unknown weight scheme '{other}'"))),
        }
    }
}

impl fmt::Display for SchemeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeTag::Equal => "equal",
            SchemeTag::TraceNormalizing => "trace_normalizing",
            SchemeTag::InverseMeanProbability => "inverse_mean_probability",
            SchemeTag::Custom => "custom",
        })
    }
}

/// Positive per-state weights with the scheme that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    scheme: SchemeTag,
    weights: Vec<f64>,
}

impl WeightScheme {
    pub fn new(scheme: SchemeTag, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Validation("no weights given".into()));
        }
        if let Some((j, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::Validation(format!("weight {j} must be positive, got {w}")));
        }
        Ok(WeightScheme { scheme, weights })
    }

    /// `w_j = 1/q`.
    pub fn equal(q: usize) -> Result<Self> {
        Self::new(SchemeTag::Equal, vec![1.0 / q as f64; q])
    }

    pub fn scheme(&self) -> SchemeTag {
        self.scheme
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weights rescaled to sum to one.
    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// Every weight multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.scheme, self.weights.iter().map(|w| w * c).collect())
    }
}

/// Computes the weights of `scheme` from the field. Integrals are exact cell sums.
pub fn compute_weights(field: &ProbabilityField, scheme: SchemeTag) -> Result<WeightScheme> {
    let q = field.q();
    let horizon = field.grid().horizon();
    let floor = 1e-14 * horizon;
    let weights = match scheme {
        SchemeTag::Equal => return WeightScheme::equal(q),
        SchemeTag::Custom => {
            return Err(Error::Validation("custom weights must be given explicitly".into()))
        }
        SchemeTag::TraceNormalizing => (0..q)
            .map(|j| {
                let tr = field.integrated_bernoulli_variance(j);
                if tr <= floor {
                    Err(Error::Validation(format!(
                        "state '{}' is never or always active (∫p(1-p) = {tr}); drop it or use equal weights",
                        field.space().label(j)
                    )))
                } else {
                    Ok(1.0 / tr)
                }
            })
            .collect::<Result<Vec<_>>>()?,
        SchemeTag::InverseMeanProbability => (0..q)
            .map(|j| {
                let mass = field.integrated_mean(j);
                if mass <= floor {
                    Err(Error::Validation(format!(
                        "state '{}' is never active (∫p = {mass}); drop it or use equal weights",
                        field.space().label(j)
                    )))
                } else {
                    Ok(1.0 / mass)
                }
            })
            .collect::<Result<Vec<_>>>()?,
    };
    WeightScheme::new(scheme, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{CategoricalTrajectory, Mode, StateSet};
    use crate::ingestion::PanelItem;

    fn panel(mode: Mode, q: usize, trajs: Vec<CategoricalTrajectory>) -> Panel {
        let space = StateSpace::new((0..q).map(|j| format!("S{j}"))).unwrap();
        let items = trajs
            .into_iter()
            .enumerate()
            .map(|(i, t)| PanelItem {
                subject: format!("s{i}"),
                condition: "c".into(),
                trajectory: t,
            })
            .collect();
        Panel::new(space, mode, true, items).unwrap()
    }

    fn mirror() -> Panel {
        panel(
            Mode::Tds,
            2,
            vec![
                CategoricalTrajectory::from_states(vec![0.0, 0.5, 1.0], &[0, 1]).unwrap(),
                CategoricalTrajectory::from_states(vec![0.0, 0.5, 1.0], &[1, 0]).unwrap(),
            ],
        )
    }

    #[test]
    fn single_sample_has_zero_kernel() {
        let p = panel(
            Mode::Tds,
            2,
            vec![CategoricalTrajectory::from_states(vec![0.0, 0.3, 1.0], &[1, 0]).unwrap()],
        );
        let f = estimate_field(&p, &p.union_grid().unwrap()).unwrap();
        assert!(f.cov_matrix().iter().all(|&c| c == 0.0));
        assert_eq!(f.mean_curve(0), &[0.0, 1.0]);
        assert_eq!(f.mean_curve(1), &[1.0, 0.0]);
    }

    #[test]
    fn mirror_panel_kernel() {
        let p = mirror();
        let f = estimate_field(&p, &p.union_grid().unwrap()).unwrap();
        for j in 0..2 {
            assert_eq!(f.mean_curve(j), &[0.5, 0.5]);
        }
        for a in 0..2 {
            for b in 0..2 {
                let expected = if a == b { 0.25 } else { -0.25 };
                assert_eq!(f.cov(0, 0, a, b), expected);
                assert_eq!(f.cov(1, 1, a, b), expected);
                assert_eq!(f.cov(0, 1, a, b), -expected);
            }
        }
    }

    #[test]
    fn tds_kernel_rows_sum_to_zero() {
        let p = panel(
            Mode::Tds,
            3,
            vec![
                CategoricalTrajectory::from_states(vec![0.0, 0.2, 0.7, 1.0], &[0, 1, 2]).unwrap(),
                CategoricalTrajectory::from_states(vec![0.0, 0.4, 1.0], &[2, 0]).unwrap(),
                CategoricalTrajectory::from_states(vec![0.0, 1.0], &[1]).unwrap(),
            ],
        );
        let f = estimate_field(&p, &p.union_grid().unwrap()).unwrap();
        for l in 0..3 {
            for a in 0..f.m() {
                for b in 0..f.m() {
                    let s: f64 = (0..3).map(|j| f.cov(j, l, a, b)).sum();
                    assert!(s.abs() < 1e-12);
                }
            }
        }
        assert!(f.selection_count_curve().iter().all(|c| (c - 1.0).abs() < 1e-15));
    }

    #[test]
    fn non_refining_grid_is_internal_error() {
        let p = mirror();
        let g = CellGrid::new(vec![0.0, 0.3, 1.0]).unwrap();
        assert!(matches!(estimate_field(&p, &g), Err(Error::Internal(_))));
    }

    #[test]
    fn averaged_grid_matches_kernel_average() {
        // exact kernel on the union grid {0, .25, .5, .75, 1} averaged over halves
        let p = panel(
            Mode::Tds,
            2,
            vec![
                CategoricalTrajectory::from_states(vec![0.0, 0.25, 1.0], &[0, 1]).unwrap(),
                CategoricalTrajectory::from_states(vec![0.0, 0.75, 1.0], &[1, 0]).unwrap(),
                CategoricalTrajectory::from_states(vec![0.0, 0.5, 1.0], &[0, 1]).unwrap(),
            ],
        );
        let fine = estimate_field(&p, &CellGrid::uniform(1.0, 4).unwrap()).unwrap();
        let coarse_cells = CellPanel::averaged(&p, &CellGrid::uniform(1.0, 2).unwrap()).unwrap();
        assert!(!coarse_cells.is_exact());
        let coarse = ProbabilityField::from_cells(&coarse_cells).unwrap();
        for j in 0..2 {
            for l in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        let avg: f64 = (0..2)
                            .flat_map(|x| (0..2).map(move |y| (x, y)))
                            .map(|(x, y)| fine.cov(j, l, 2 * a + x, 2 * b + y))
                            .sum::<f64>()
                            / 4.0;
                        assert!((coarse.cov(j, l, a, b) - avg).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn grid_policy_selection() {
        let p = mirror();
        let c = CellPanel::build(&p, GridPolicy::Capped(512)).unwrap();
        assert!(c.is_exact());
        assert_eq!(c.m(), 2);
        let c = CellPanel::build(&p, GridPolicy::Uniform(5)).unwrap();
        assert_eq!(c.m(), 5);
        assert!(!c.is_exact());
        assert_eq!("capped:64".parse::<GridPolicy>().unwrap(), GridPolicy::Capped(64));
        assert_eq!("exact".parse::<GridPolicy>().unwrap(), GridPolicy::Exact);
        assert!("uniform:0".parse::<GridPolicy>().is_err());
    }

    #[test]
    fn equal_weights_report() {
        let w = WeightScheme::equal(8).unwrap();
        for x in w.normalized() {
            assert_eq!(format!("{x:.2}"), "0.12");
        }
    }

    #[test]
    fn trace_weight_of_half_state() {
        let p = mirror();
        let f = estimate_field(&p, &p.union_grid().unwrap()).unwrap();
        assert_eq!(f.integrated_bernoulli_variance(0), 0.25);
        let w = compute_weights(&f, SchemeTag::TraceNormalizing).unwrap();
        assert_eq!(w.weights(), &[4.0, 4.0]);
        let w = compute_weights(&f, SchemeTag::InverseMeanProbability).unwrap();
        assert_eq!(w.weights(), &[2.0, 2.0]);
    }

    #[test]
    fn degenerate_state_named_in_error() {
        let p = panel(
            Mode::Tcata,
            3,
            vec![
                CategoricalTrajectory::new(
                    vec![0.0, 0.5, 1.0],
                    vec![StateSet::from(vec![0, 1]), StateSet::singleton(1)],
                )
                .unwrap(),
                CategoricalTrajectory::new(
                    vec![0.0, 0.5, 1.0],
                    vec![StateSet::singleton(1), StateSet::empty()],
                )
                .unwrap(),
            ],
        );
        let f = estimate_field(&p, &p.union_grid().unwrap()).unwrap();
        let err = compute_weights(&f, SchemeTag::TraceNormalizing).unwrap_err().to_string();
        assert!(err.contains("S2"), "{err}");
        let err = compute_weights(&f, SchemeTag::InverseMeanProbability).unwrap_err().to_string();
        assert!(err.contains("S2"), "{err}");
        assert!(compute_weights(&f, SchemeTag::Equal).is_ok());
    }

    #[test]
    fn selection_count_with_empty_cells() {
        let p = panel(
            Mode::Tcata,
            2,
            vec![
                CategoricalTrajectory::new(
                    vec![0.0, 0.2, 0.6, 1.0],
                    vec![StateSet::empty(), StateSet::from(vec![0, 1]), StateSet::empty()],
                )
                .unwrap(),
                CategoricalTrajectory::new(
                    vec![0.0, 0.4, 1.0],
                    vec![StateSet::empty(), StateSet::singleton(1)],
                )
                .unwrap(),
            ],
        );
        let (grid, curve) = selection_count_curve(&p).unwrap();
        assert_eq!(grid.nodes(), &[0.0, 0.2, 0.4, 0.6, 1.0]);
        assert_eq!(curve, vec![0.0, 1.0, 1.5, 0.5]);
    }

    #[test]
    fn scheme_names() {
        assert_eq!("trace".parse::<SchemeTag>().unwrap(), SchemeTag::TraceNormalizing);
        assert_eq!(
            "inverse-mean".parse::<SchemeTag>().unwrap(),
            SchemeTag::InverseMeanProbability
        );
        assert!("bogus".parse::<SchemeTag>().is_err());
        assert!(WeightScheme::new(SchemeTag::Equal, vec![1.0, 0.0]).is_err());
    }
}
