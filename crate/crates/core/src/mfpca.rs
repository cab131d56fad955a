//! Multivariate functional PCA of indicator trajectories on a cell grid.
//!
//! With `D = diag(w_j Δ_a)` over the stacked index `(j, a)` and `G` the stacked
//! kernel `γ̂_{jℓ}(a, b)`, the weighted covariance operator restricted to
//! piecewise-constant functions is `G D`. It is similar to the symmetric matrix
//! `S = D^{1/2} G D^{1/2}`: if `S v = λ v` then `φ = D^{-1/2} v` satisfies
//! `G D φ = λ φ` and `⟨φ, φ⟩_H = φᵀ D φ = vᵀ v = 1`. Since every sample path is
//! constant on the cells, eigenfunctions of the empirical operator with
//! non-zero eigenvalue lie in that space and the reduction is exact.
//!
//! The dense solver costs `O((q·m)³)`; for large grids either cap the grid
//! (see [`GridPolicy`](crate::estimation::GridPolicy)) or use [`Solver::Gram`],
//! which works on the `n × n` Gram matrix of the centered sample instead.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{CellPanel, ProbabilityField, WeightScheme};
use crate::trajectory::{CellGrid, StateSpace};

/// Relative eigenvalue floor used to decide which components carry variance.
pub const RANK_TOLERANCE: f64 = 1e-12;
/// Negative eigenvalues down to `-NEGATIVE_TOLERANCE · max(trace, 1)` are clamped to zero.
/// Rows shown by the summary table.
const SUMMARY_ROWS: usize = 10;
/// Relative gap under which two entries compete for the sign-fixing maximum.
pub const SIGN_TIE_TOLERANCE: f64 = 1e-9;
pub const NEGATIVE_TOLERANCE: f64 = 1e-10;

/// Eigensolver route.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Full symmetric decomposition of the `(q·m) × (q·m)` operator matrix.
    #[default]
    Dense,
    /// Decomposition of the `n × n` Gram matrix of the centered, weighted sample.
    Gram,
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Solver::Dense),
            "gram" => Ok(Solver::Gram),
            other => Err(Error::Validation(format!("unknown solver '{other}'"))),
        }
    }
}

/// Number of components kept in the result.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum Retention {
    /// Components with `λ_r > 1e-12 · λ_1`, at most `n − 1`.
    #[default]
    Auto,
    /// The first `k` components, at most `min(n − 1, q·m)`.
    Components(usize),
    /// Fewest components whose cumulative variance share reaches the target in `(0, 1]`.
    VarianceFraction(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MfpcaConfig {
    pub retention: Retention,
    pub solver: Solver,
}

/// Builds `S = D^{1/2} G D^{1/2}`.
pub fn assemble_operator(field: &ProbabilityField, weights: &WeightScheme) -> Result<DMatrix<f64>> {
    let dsqrt = metric_sqrt(field.q(), field.grid(), weights)?;
    let g = field.cov_matrix();
    if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
        return Err(Error::Data(format!("non-finite kernel entry {bad}")));
    }
    let d = g.nrows();
    let s = DMatrix::from_fn(d, d, |r, c| dsqrt[r] * g[(r, c)] * dsqrt[c]);
    let asym = (0..d)
        .flat_map(|r| (r + 1..d).map(move |c| (r, c)))
        .map(|(r, c)| (s[(r, c)] - s[(c, r)]).abs())
        .fold(0.0, f64::max);
    if asym > 1e-10 {
        return Err(Error::Internal(format!("operator matrix asymmetric by {asym}")));
    }
    Ok(s)
}

/// `sqrt(w_j Δ_a)` in stacked layout.
pub fn metric_sqrt(q: usize, grid: &CellGrid, weights: &WeightScheme) -> Result<DVector<f64>> {
    Ok(metric(q, grid, weights)?.map(f64::sqrt))
}

/// `w_j Δ_a` in stacked layout.
pub fn metric(q: usize, grid: &CellGrid, weights: &WeightScheme) -> Result<DVector<f64>> {
    if weights.len() != q {
        return Err(Error::Validation(format!(
            "{} weights given for {q} states",
            weights.len()
        )));
    }
    let lengths = grid.lengths();
    let m = lengths.len();
    Ok(DVector::from_fn(q * m, |k, _| weights.weights()[k / m] * lengths[k % m]))
}

/// Eigenpairs sorted by decreasing eigenvalue.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Clamped eigenvalues, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Eigenfunction cell values `D^{-1/2} v`, one column per eigenvalue.
    pub eigenfunctions: DMatrix<f64>,
}

/// Decomposes the symmetric operator matrix `s` and maps eigenvectors back to
/// eigenfunctions with `dsqrt = D^{1/2}`. Each eigenfunction is signed so that
/// its first entry of largest magnitude is positive.
pub fn eigendecompose(s: &DMatrix<f64>, dsqrt: &DVector<f64>) -> Result<Spectrum> {
    let d = s.nrows();
    if s.ncols() != d || dsqrt.len() != d {
        return Err(Error::Validation("operator and metric sizes differ".into()));
    }
    let trace = s.trace();
    let eig = SymmetricEigen::try_new(s.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order
        .iter()
        .map(|&k| clamp_eigenvalue(eig.eigenvalues[k], trace))
        .collect::<Result<Vec<_>>>()?;
    let mut funcs = DMatrix::zeros(d, d);
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let phi = v.component_div(dsqrt);
        funcs.set_column(col, &phi);
    }
    fix_signs(&mut funcs);
    Ok(Spectrum {
        eigenvalues: values,
        eigenfunctions: funcs,
    })
}

fn clamp_eigenvalue(value: f64, trace: f64) -> Result<f64> {
    let tol = NEGATIVE_TOLERANCE * trace.abs().max(1.0);
    if !value.is_finite() {
        Err(Error::Numerical(format!("non-finite eigenvalue {value}")))
    } else if value >= 0.0 {
        Ok(value)
    } else if value >= -tol {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!(
            "eigenvalue {value} is negative beyond tolerance {tol}; the kernel is not positive semidefinite"
        )))
    }
}

/// Makes the first entry of (near-)largest magnitude positive. Entries within a
/// relative `SIGN_TIE_TOLERANCE` of the maximum count as tied, so rounding noise
/// does not decide the sign.
fn fix_signs(funcs: &mut DMatrix<f64>) {
    for mut col in funcs.column_iter_mut() {
        let best = col.amax();
        let cut = best * (1.0 - SIGN_TIE_TOLERANCE);
        if let Some(&x) = col.iter().find(|x| x.abs() >= cut) {
            if x < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Outcome of a fit.
#[derive(Clone, Debug)]
pub struct MfpcaResult {
    space: StateSpace,
    grid: CellGrid,
    weights: WeightScheme,
    config: MfpcaConfig,
    mean: DVector<f64>,
    eigenvalues: Vec<f64>,
    total_variance: f64,
    eigenfunctions: DMatrix<f64>,
    scores: DMatrix<f64>,
    importance: DMatrix<f64>,
}

/// Fits the decomposition. `cells` must be the data the field was estimated from.
pub fn fit(
    cells: &CellPanel,
    field: &ProbabilityField,
    weights: &WeightScheme,
    config: &MfpcaConfig,
) -> Result<MfpcaResult> {
    let q = field.q();
    let n = field.n();
    if cells.n() != n || cells.grid() != field.grid() || cells.q() != q {
        return Err(Error::Validation("cell data and field do not match".into()));
    }
    if let Retention::VarianceFraction(f) = config.retention {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Validation(format!("variance fraction must lie in (0, 1], got {f}")));
        }
    }
    let dsqrt = metric_sqrt(q, field.grid(), weights)?;
    let spectrum = match config.solver {
        Solver::Dense => eigendecompose(&assemble_operator(field, weights)?, &dsqrt)?,
        Solver::Gram => gram_spectrum(cells, field, &dsqrt)?,
    };
    let total_variance: f64 = spectrum.eigenvalues.iter().sum();
    let available = spectrum.eigenvalues.len().min(n.saturating_sub(1));
    let lead = spectrum.eigenvalues.first().copied().unwrap_or(0.0);
    let informative = spectrum.eigenvalues[..available]
        .iter()
        .take_while(|&&l| lead > 0.0 && l > RANK_TOLERANCE * lead)
        .count();
    let r = match config.retention {
        Retention::Auto => informative,
        Retention::Components(k) => k.min(available),
        Retention::VarianceFraction(f) => {
            let mut acc = 0.0;
            let mut k = 0;
            while k < informative && acc < f * total_variance * (1.0 - 1e-12) {
                acc += spectrum.eigenvalues[k];
                k += 1;
            }
            k
        }
    };
    let eigenvalues = spectrum.eigenvalues[..r].to_vec();
    let eigenfunctions = spectrum.eigenfunctions.columns(0, r).into_owned();
    let metric = dsqrt.component_mul(&dsqrt);
    let weighted = scale_rows(&eigenfunctions, &metric);
    let scores = centered(cells, field.mean_vector()) * weighted;
    let importance = importance(q, field.grid(), weights, &eigenfunctions)?;
    Ok(MfpcaResult {
        space: field.space().clone(),
        grid: field.grid().clone(),
        weights: weights.clone(),
        config: *config,
        mean: field.mean_vector().clone(),
        eigenvalues,
        total_variance,
        eigenfunctions,
        scores,
        importance,
    })
}

fn scale_rows(a: &DMatrix<f64>, by: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |k, c| by[k] * a[(k, c)])
}

/// `X − 1 p̂ᵀ` in stacked layout.
fn centered(cells: &CellPanel, mean: &DVector<f64>) -> DMatrix<f64> {
    let v = cells.values();
    DMatrix::from_fn(v.nrows(), v.ncols(), |i, c| v[(i, c)] - mean[c])
}

fn gram_spectrum(cells: &CellPanel, field: &ProbabilityField, dsqrt: &DVector<f64>) -> Result<Spectrum> {
    let n = cells.n();
    let mut z = centered(cells, field.mean_vector());
    for (c, &s) in dsqrt.iter().enumerate() {
        z.column_mut(c).scale_mut(s);
    }
    let mut k = &z * z.transpose() / n as f64;
    for c in 0..n {
        for r in c + 1..n {
            k[(r, c)] = k[(c, r)];
        }
    }
    let trace = k.trace();
    let eig = SymmetricEigen::try_new(k, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order
        .iter()
        .map(|&i| clamp_eigenvalue(eig.eigenvalues[i], trace))
        .collect::<Result<Vec<_>>>()?;
    let lead = values.first().copied().unwrap_or(0.0);
    let rank = values
        .iter()
        .take_while(|&&l| lead > 0.0 && l > RANK_TOLERANCE * lead)
        .count();
    let mut funcs = DMatrix::zeros(z.ncols(), rank);
    for (col, &i) in order.iter().take(rank).enumerate() {
        let u = eig.eigenvectors.column(i);
        let v = z.tr_mul(&u) / (n as f64 * values[col]).sqrt();
        funcs.set_column(col, &v.component_div(dsqrt));
    }
    fix_signs(&mut funcs);
    Ok(Spectrum {
        eigenvalues: values,
        eigenfunctions: funcs,
    })
}

/// `imp_rj = w_j Σ_a Δ_a φ_rj(a)²`, one row per component.
pub fn importance(
    q: usize,
    grid: &CellGrid,
    weights: &WeightScheme,
    eigenfunctions: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let metric = metric(q, grid, weights)?;
    let m = grid.n_cells();
    let r = eigenfunctions.ncols();
    Ok(DMatrix::from_fn(r, q, |row, j| {
        (0..m)
            .map(|a| metric[j * m + a] * eigenfunctions[(j * m + a, row)].powi(2))
            .sum()
    }))
}

/// Piecewise-constant, real-valued `q`-vector function on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StepVector {
    pub grid: CellGrid,
    /// `q × m`, row `j` is component `j`.
    pub values: DMatrix<f64>,
}

impl MfpcaResult {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn weights(&self) -> &WeightScheme {
        &self.weights
    }

    pub fn config(&self) -> &MfpcaConfig {
        &self.config
    }

    /// Number of retained components `R`.
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Sum of all eigenvalues, retained or not.
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    /// `λ_r / Σ λ`.
    pub fn variance_proportions(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|l| if self.total_variance > 0.0 { l / self.total_variance } else { 0.0 })
            .collect()
    }

    /// Stacked mean `p̂`.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `(q·m) × R`, column `r` is `φ_r` in stacked layout.
    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    /// `φ_rj` on each cell.
    pub fn eigenfunction_block(&self, r: usize, j: usize) -> Vec<f64> {
        let m = self.grid.n_cells();
        self.eigenfunctions.column(r).rows(j * m, m).iter().copied().collect()
    }

    /// `n × R`, entry `(i, r) = ⟨X_i − p̂, φ_r⟩_H`.
    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    /// `R × q`.
    pub fn importance(&self) -> &DMatrix<f64> {
        &self.importance
    }

    /// `p̂ + Σ_{r ≤ k} ⟨X_i − p̂, φ_r⟩_H φ_r` for sample `i`.
    pub fn reconstruct(&self, i: usize, k: usize) -> Result<StepVector> {
        if k > self.n_components() {
            return Err(Error::Domain(format!(
                "truncation order {k} exceeds the {} retained components",
                self.n_components()
            )));
        }
        if i >= self.scores.nrows() {
            return Err(Error::Domain(format!("sample {i} out of range")));
        }
        let mut x = self.mean.clone();
        for r in 0..k {
            x.axpy(self.scores[(i, r)], &self.eigenfunctions.column(r), 1.0);
        }
        let q = self.space.len();
        let m = self.grid.n_cells();
        Ok(StepVector {
            grid: self.grid.clone(),
            values: DMatrix::from_fn(q, m, |j, a| x[j * m + a]),
        })
    }

    /// `⟨f, g⟩_H` for stacked cell vectors on this grid.
    pub fn inner(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        let metric = metric(self.space.len(), &self.grid, &self.weights).expect("sizes checked at fit");
        f.iter().zip(g.iter()).zip(metric.iter()).map(|((a, b), w)| a * b * w).sum()
    }

    /// Gram matrix `⟨φ_r, φ_s⟩_H`.
    pub fn eigenfunction_gram(&self) -> DMatrix<f64> {
        let metric = metric(self.space.len(), &self.grid, &self.weights).expect("sizes checked at fit");
        self.eigenfunctions.tr_mul(&scale_rows(&self.eigenfunctions, &metric))
    }

    /// `max |γ̂_{jℓ}(a, b) − Σ_{r ≤ k} λ_r φ_rj(a) φ_rℓ(b)|`, with all retained
    /// components when `k` is `None`.
    pub fn mercer_check(&self, field: &ProbabilityField, k: Option<usize>) -> Result<f64> {
        let k = k.unwrap_or(self.n_components());
        if k > self.n_components() {
            return Err(Error::Domain(format!("{k} exceeds the retained components")));
        }
        let phi = self.eigenfunctions.columns(0, k);
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues[..k]));
        let approx = &phi * lambda * phi.transpose();
        Ok((field.cov_matrix() - approx).amax())
    }

    /// `p̂_j ± c √λ_r φ_rj` on each cell, as `(lower, upper)`.
    pub fn variation_band(&self, r: usize, j: usize, c: f64) -> (Vec<f64>, Vec<f64>) {
        let m = self.grid.n_cells();
        let amp = c * self.eigenvalues[r].sqrt();
        let phi = self.eigenfunction_block(r, j);
        let mean = &self.mean.as_slice()[j * m..(j + 1) * m];
        let lower = mean.iter().zip(&phi).map(|(p, f)| p - amp * f).collect();
        let upper = mean.iter().zip(&phi).map(|(p, f)| p + amp * f).collect();
        (lower, upper)
    }
}

impl fmt::Display for MfpcaResult {
    /// Summary table: variance shares and the most important states per component.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let props = self.variance_proportions();
        writeln!(
            f,
            "weights: {}  grid: {} cells  components: {}  total variance: {:.6}",
            self.weights.scheme(),
            self.grid.n_cells(),
            self.n_components(),
            self.total_variance
        )?;
        writeln!(f, "{:>5} {:>12} {:>10} {:>10}  top states", "dim", "eigenvalue", "share", "cumul")?;
        let mut cumul = 0.0;
        for (r, (l, p)) in self.eigenvalues.iter().zip(&props).enumerate() {
            cumul += p;
            if r >= SUMMARY_ROWS {
                continue;
            }
            let mut states: Vec<(usize, f64)> =
                (0..self.space.len()).map(|j| (j, self.importance[(r, j)])).collect();
            states.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let top: Vec<String> = states
                .iter()
                .take(4)
                .map(|(j, v)| format!("{} {:.2}", self.space.label(*j), v))
                .collect();
            writeln!(
                f,
                "{:>5} {:>12.6} {:>9.2}% {:>9.2}%  {}",
                r + 1,
                l,
                100.0 * p,
                100.0 * cumul,
                top.join(", ")
            )?;
        }
        if self.n_components() > SUMMARY_ROWS {
            writeln!(f, "  ... {} more components", self.n_components() - SUMMARY_ROWS)?;
        }
        Ok(())
    }
}
