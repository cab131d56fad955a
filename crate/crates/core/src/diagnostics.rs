//! Numerical checks of a fit against the identities it must satisfy.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimation::{CellPanel, ProbabilityField, WeightScheme};
use crate::mfpca::{metric, MfpcaResult};
use crate::trajectory::Mode;

/// `max |⟨φ_r, φ_s⟩_H − δ_rs|`.
pub fn gram_deviation(result: &MfpcaResult) -> f64 {
    let g = result.eigenfunction_gram();
    (g - DMatrix::identity(result.n_components(), result.n_components())).amax()
}

/// `Σ_j w_j Σ_a Δ_a γ̂_jj(a, a)`.
pub fn weighted_trace(field: &ProbabilityField, weights: &WeightScheme) -> Result<f64> {
    let d = metric(field.q(), field.grid(), weights)?;
    let g = field.cov_matrix();
    Ok((0..d.len()).map(|k| d[k] * g[(k, k)]).sum())
}

/// Relative gap between the retained eigenvalue sum and the weighted trace.
pub fn trace_identity_error(result: &MfpcaResult, field: &ProbabilityField) -> Result<f64> {
    let trace = weighted_trace(field, result.weights())?;
    let sum: f64 = result.eigenvalues().iter().sum();
    Ok(relative(sum, trace))
}

/// Largest relative gap between `n⁻¹ Σ_i s_ir²` and `λ_r`.
pub fn score_variance_error(result: &MfpcaResult) -> f64 {
    let s = result.scores();
    let n = s.nrows() as f64;
    result
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(r, &l)| relative(s.column(r).norm_squared() / n, l))
        .fold(0.0, f64::max)
}

/// `max |Σ_j γ̂_jℓ(a, b)|` over `ℓ, a, b`; zero for TDS panels.
pub fn row_sum_deviation(field: &ProbabilityField) -> f64 {
    let (q, m) = (field.q(), field.m());
    let mut worst: f64 = 0.0;
    for l in 0..q {
        for a in 0..m {
            for b in 0..m {
                let s: f64 = (0..q).map(|j| field.cov(j, l, a, b)).sum();
                worst = worst.max(s.abs());
            }
        }
    }
    worst
}

/// `max |γ̂_jℓ(a, b) − γ̂_ℓj(b, a)|`.
pub fn symmetry_deviation(field: &ProbabilityField) -> f64 {
    let g = field.cov_matrix();
    (g - g.transpose()).amax()
}

/// `n⁻¹ Σ_i ‖X_i − X̃_ik‖²_H` from [`MfpcaResult::reconstruct`].
pub fn mean_reconstruction_residual(
    cells: &CellPanel,
    result: &MfpcaResult,
    k: usize,
) -> Result<f64> {
    let d = metric(cells.q(), cells.grid(), result.weights())?;
    let m = cells.m();
    let mut total = 0.0;
    for i in 0..cells.n() {
        let rec = result.reconstruct(i, k)?;
        for (c, w) in d.iter().enumerate() {
            let e = cells.values()[(i, c)] - rec.values[(c / m, c % m)];
            total += w * e * e;
        }
    }
    Ok(total / cells.n() as f64)
}

/// Largest gap between the mean residual at `k` and `Σ_{r>k} λ_r`, over all
/// `k ≤ R`, relative to the total variance.
pub fn parseval_error(cells: &CellPanel, result: &MfpcaResult) -> Result<f64> {
    let total = result.total_variance();
    let scale = total.max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    let mut head = 0.0;
    for k in 0..=result.n_components() {
        if k > 0 {
            head += result.eigenvalues()[k - 1];
        }
        let resid = mean_reconstruction_residual(cells, result, k)?;
        worst = worst.max((resid - (total - head)).abs() / scale);
    }
    Ok(worst)
}

/// Mean squared H-residual of projecting the centred data onto the span of an
/// H-orthonormal frame, given in stacked coordinates (`q·m × k`).
pub fn frame_residual(
    cells: &CellPanel,
    mean: &DVector<f64>,
    weights: &WeightScheme,
    frame: &DMatrix<f64>,
) -> Result<f64> {
    let d = metric(cells.q(), cells.grid(), weights)?;
    if frame.nrows() != d.len() {
        return Err(Error::Validation("frame has the wrong number of rows".into()));
    }
    let mut total = 0.0;
    for i in 0..cells.n() {
        let x = cells.values().row(i).transpose() - mean;
        let mut resid = x.clone();
        for c in 0..frame.ncols() {
            let f = frame.column(c);
            let coef: f64 = x.iter().zip(f.iter()).zip(d.iter()).map(|((a, b), w)| a * b * w).sum();
            resid.axpy(-coef, &f, 1.0);
        }
        total += resid.iter().zip(d.iter()).map(|(e, w)| w * e * e).sum::<f64>();
    }
    Ok(total / cells.n() as f64)
}

/// Structural checks of an ingested panel; returns human-readable violations.
pub fn panel_violations(panel: &crate::ingestion::Panel) -> Vec<String> {
    let mut out = Vec::new();
    let grid = match panel.union_grid() {
        Ok(g) => g,
        Err(e) => return vec![e.to_string()],
    };
    for (i, item) in panel.items().iter().enumerate() {
        let t = &item.trajectory;
        let who = format!("trajectory #{i} ({}, {})", item.subject, item.condition);
        if !grid.refines(t.breakpoints()) {
            out.push(format!("{who}: not refined by the union grid"));
        }
        let segs = t.segments();
        if segs.windows(2).any(|w| w[0] == w[1]) {
            out.push(format!("{who}: adjacent equal segments"));
        }
        if t.breakpoints().windows(2).any(|w| w[1] <= w[0]) {
            out.push(format!("{who}: zero-length segment"));
        }
        if panel.is_normalized() {
            if t.horizon() != 1.0 {
                out.push(format!("{who}: horizon {} after normalization", t.horizon()));
            }
            match panel.mode() {
                Mode::Tds => {
                    if segs.iter().any(|s| s.len() != 1) {
                        out.push(format!("{who}: indicators do not sum to one"));
                    }
                }
                Mode::Tcata => {
                    if !segs[0].is_empty() || !segs[segs.len() - 1].is_empty() {
                        out.push(format!("{who}: a state is active at 0 or 1"));
                    }
                }
            }
        }
    }
    out
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
