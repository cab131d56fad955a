//! Long-format CSV curves and a JSON summary of a fit.
//!
//! Floats in CSV files are written as `{:.16e}` (17 significant digits), so
//! identical inputs give byte-identical files.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{GridPolicy, ProbabilityField};
use crate::ingestion::Panel;
use crate::mfpca::{MfpcaConfig, MfpcaResult};
use crate::trajectory::CellGrid;

/// Fixed 17-significant-digit formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn curve_writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

fn finish<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::Io(e.into_error()))?
        .flush()?;
    Ok(())
}

/// `state,t_left,t_right,value` rows of one curve per state.
fn write_state_curves<W: Write, F>(out: W, field: &ProbabilityField, curve: F) -> Result<()>
where
    F: Fn(usize) -> Vec<f64>,
{
    let mut w = curve_writer(out, &["state", "t_left", "t_right", "value"])?;
    for j in 0..field.q() {
        let label = field.space().label(j);
        for (a, v) in curve(j).into_iter().enumerate() {
            let (l, r) = field.grid().cell(a);
            w.write_record([label, &fmt_f64(l), &fmt_f64(r), &fmt_f64(v)])?;
        }
    }
    finish(w)
}

/// Mean curves `p̂_j`.
pub fn write_mean_curves<W: Write>(out: W, field: &ProbabilityField) -> Result<()> {
    write_state_curves(out, field, |j| field.mean_curve(j).to_vec())
}

/// Diagonal variance curves `γ̂_jj(t, t)`.
pub fn write_variance_curves<W: Write>(out: W, field: &ProbabilityField) -> Result<()> {
    write_state_curves(out, field, |j| field.variance_curve(j))
}

/// Expected number of selected states, `t_left,t_right,value`.
pub fn write_selection_count<W: Write>(out: W, grid: &CellGrid, curve: &[f64]) -> Result<()> {
    let mut w = curve_writer(out, &["t_left", "t_right", "value"])?;
    for (a, v) in curve.iter().enumerate() {
        let (l, r) = grid.cell(a);
        w.write_record([fmt_f64(l), fmt_f64(r), fmt_f64(*v)])?;
    }
    finish(w)
}

/// `subject,condition,r,value` with 1-based `r`.
pub fn write_scores<W: Write>(out: W, panel: &Panel, result: &MfpcaResult) -> Result<()> {
    let scores = result.scores();
    if scores.nrows() != panel.len() {
        return Err(Error::Validation(format!(
            "{} score rows for a panel of {} trajectories",
            scores.nrows(),
            panel.len()
        )));
    }
    let mut w = curve_writer(out, &["subject", "condition", "r", "value"])?;
    for (i, item) in panel.items().iter().enumerate() {
        for r in 0..result.n_components() {
            w.write_record([
                item.subject.as_str(),
                item.condition.as_str(),
                &(r + 1).to_string(),
                &fmt_f64(scores[(i, r)]),
            ])?;
        }
    }
    finish(w)
}

/// `state,r,t_left,t_right,value` with 1-based `r`.
pub fn write_eigenfunctions<W: Write>(out: W, result: &MfpcaResult) -> Result<()> {
    let mut w = curve_writer(out, &["state", "r", "t_left", "t_right", "value"])?;
    for r in 0..result.n_components() {
        for j in 0..result.space().len() {
            let label = result.space().label(j);
            for (a, v) in result.eigenfunction_block(r, j).into_iter().enumerate() {
                let (l, rt) = result.grid().cell(a);
                w.write_record([label, &(r + 1).to_string(), &fmt_f64(l), &fmt_f64(rt), &fmt_f64(v)])?;
            }
        }
    }
    finish(w)
}

/// `state,r,t_left,t_right,mean,lower,upper` for `p̂_j ± c √λ_r φ_rj`.
pub fn write_variation_bands<W: Write>(out: W, result: &MfpcaResult, c: f64) -> Result<()> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::Validation(format!("band scale must be non-negative, got {c}")));
    }
    let mut w = curve_writer(
        out,
        &["state", "r", "t_left", "t_right", "mean", "lower", "upper"],
    )?;
    let m = result.grid().n_cells();
    for r in 0..result.n_components() {
        for j in 0..result.space().len() {
            let label = result.space().label(j);
            let (lower, upper) = result.variation_band(r, j, c);
            for a in 0..m {
                let (l, rt) = result.grid().cell(a);
                w.write_record([
                    label,
                    &(r + 1).to_string(),
                    &fmt_f64(l),
                    &fmt_f64(rt),
                    &fmt_f64(result.mean()[j * m + a]),
                    &fmt_f64(lower[a]),
                    &fmt_f64(upper[a]),
                ])?;
            }
        }
    }
    finish(w)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSummary {
    pub policy: GridPolicy,
    pub cells: usize,
    pub horizon: f64,
    /// Whether the grid refines every trajectory, i.e. estimates are exact.
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentSummary {
    pub r: usize,
    pub eigenvalue: f64,
    pub proportion: f64,
    pub cumulative: f64,
    /// State label → `w_j ∫ φ_rj²`.
    pub importance: Vec<(String, f64)>,
}

/// Machine-readable summary of a fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultSummary {
    pub mode: String,
    pub n: usize,
    pub states: Vec<String>,
    pub weight_scheme: String,
    pub weights: Vec<f64>,
    pub weights_normalized: Vec<f64>,
    pub grid: GridSummary,
    pub config: MfpcaConfig,
    pub total_variance: f64,
    pub eigenvalues: Vec<f64>,
    pub proportions: Vec<f64>,
    pub components: Vec<ComponentSummary>,
}

impl ResultSummary {
    pub fn new(panel: &Panel, result: &MfpcaResult, policy: GridPolicy, exact: bool) -> Self {
        let proportions = result.variance_proportions();
        let labels: Vec<String> = result.space().labels().to_vec();
        let mut cumulative = 0.0;
        let components = proportions
            .iter()
            .enumerate()
            .map(|(r, p)| {
                cumulative += p;
                ComponentSummary {
                    r: r + 1,
                    eigenvalue: result.eigenvalues()[r],
                    proportion: *p,
                    cumulative,
                    importance: labels
                        .iter()
                        .enumerate()
                        .map(|(j, s)| (s.clone(), result.importance()[(r, j)]))
                        .collect(),
                }
            })
            .collect();
        ResultSummary {
            mode: panel.mode().to_string(),
            n: panel.len(),
            states: labels,
            weight_scheme: result.weights().scheme().to_string(),
            weights: result.weights().weights().to_vec(),
            weights_normalized: result.weights().normalized(),
            grid: GridSummary {
                policy,
                cells: result.grid().n_cells(),
                horizon: result.grid().horizon(),
                exact,
            },
            config: *result.config(),
            total_variance: result.total_variance(),
            eigenvalues: result.eigenvalues().to_vec(),
            proportions,
            components,
        }
    }

    pub fn to_writer<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{CellPanel, WeightScheme};
    use crate::ingestion::PanelItem;
    use crate::mfpca::fit;
    use crate::trajectory::{CategoricalTrajectory, Mode, StateSpace};

    fn mirror() -> Panel {
        let space = StateSpace::new(["A", "B"]).unwrap();
        let items = [[0, 1], [1, 0]]
            .iter()
            .enumerate()
            .map(|(i, s)| PanelItem {
                subject: format!("s{i}"),
                condition: "c".into(),
                trajectory: CategoricalTrajectory::from_states(vec![0.0, 0.5, 1.0], s).unwrap(),
            })
            .collect();
        Panel::new(space, Mode::Tds, true, items).unwrap()
    }

    fn fitted() -> (Panel, ProbabilityField, MfpcaResult) {
        let p = mirror();
        let cells = CellPanel::build(&p, GridPolicy::Exact).unwrap();
        let field = ProbabilityField::from_cells(&cells).unwrap();
        let res = fit(&cells, &field, &WeightScheme::equal(2).unwrap(), &MfpcaConfig::default()).unwrap();
        (p, field, res)
    }

    fn to_string<F: FnOnce(&mut Vec<u8>) -> Result<()>>(f: F) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn float_format() {
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn mean_curve_rows() {
        let (_, field, _) = fitted();
        let s = to_string(|b| write_mean_curves(b, &field));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "state,t_left,t_right,value");
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert_eq!(lines[1], "A,0.0000000000000000e0,5.0000000000000000e-1,5.0000000000000000e-1");
    }

    #[test]
    fn scores_and_bands() {
        let (p, _, res) = fitted();
        let s = to_string(|b| write_scores(b, &p, &res));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("s0,c,1,"));
        let bands = to_string(|b| write_variation_bands(b, &res, 1.0));
        assert_eq!(bands.lines().count(), 1 + 2 * 2);
        assert!(write_variation_bands(Vec::new(), &res, -1.0).is_err());
        let ef = to_string(|b| write_eigenfunctions(b, &res));
        assert_eq!(ef.lines().next().unwrap(), "state,r,t_left,t_right,value");
    }

    #[test]
    fn summary_json() {
        let (p, _, res) = fitted();
        let s = to_string(|b| ResultSummary::new(&p, &res, GridPolicy::Exact, true).to_writer(b));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["proportions"][0], 1.0);
        assert!((v["eigenvalues"][0].as_f64().unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(v["components"][0]["importance"][0][0], "A");
        assert_eq!(v["grid"]["exact"], true);
    }
}
