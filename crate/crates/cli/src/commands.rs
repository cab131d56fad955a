use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use catmfpca::diagnostics::{
    gram_deviation, panel_violations, parseval_error, row_sum_deviation, score_variance_error,
    symmetry_deviation, trace_identity_error, weighted_trace,
};
use catmfpca::estimation::selection_count_curve;
use catmfpca::export::{
    write_eigenfunctions, write_mean_curves, write_scores, write_selection_count,
    write_variance_curves, write_variation_bands, ResultSummary,
};
use catmfpca::ingestion::{
    panel_to_events, read_events, sidecar_for, write_events, IngestReport, Sidecar,
};
use catmfpca::simulation::oracle::{
    jacobi_eigenvalues, naive_operator, oracle_covariance, random_panel, RandomPanelShape,
};
use catmfpca::simulation::{derive_seed, simulate_panel, ProcessSpec};
use catmfpca::{
    apply_protocol_normalization, compute_weights, estimate_field, fit, parse_events, CellPanel,
    Error, Mode, MfpcaConfig, MfpcaResult, Panel, ProbabilityField, Result, Retention,
    SchemeTag, WeightScheme,
};
use serde::Serialize;

use crate::config::RunConfig;

fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(with_path(path))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(with_path(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(with_path(path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_panel(path: &Path) -> Result<Panel> {
    Panel::from_json_reader(open(path)?)
}

pub fn save_panel(path: &Path, panel: &Panel) -> Result<()> {
    let mut w = create(path)?;
    panel.to_json_writer(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Parses an event log, optionally applies protocol normalization and writes
/// the panel and the report. Rejected trajectories are listed in the report.
pub fn cmd_ingest(
    events: &Path,
    sidecar: &Path,
    config: &RunConfig,
    raw: bool,
    out: &Path,
    report_path: Option<&Path>,
) -> Result<(Panel, IngestReport)> {
    config.validate()?;
    let sidecar = Sidecar::from_reader(open(sidecar)?)?;
    config.check_mode(sidecar.mode)?;
    let rows = read_events(open(events)?)?;
    let (panel, mut report) = parse_events(&rows, &sidecar)?;
    let panel = if raw {
        panel
    } else {
        let (norm, rejected) = apply_protocol_normalization(&panel, config.tick)?;
        report.rejected.extend(rejected);
        norm
    };
    if panel.is_empty() {
        return Err(Error::Validation("no trajectory survived ingestion".into()));
    }
    save_panel(out, &panel)?;
    if let Some(p) = report_path {
        write_json(p, &report)?;
    }
    Ok((panel, report))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub trajectories: usize,
    pub states: usize,
    pub mode: Mode,
    pub normalized: bool,
    pub grid_cells: usize,
    pub violations: Vec<String>,
}

/// Structural checks of a panel file. A file that fails to load is an error.
pub fn cmd_validate(panel_path: &Path) -> Result<ValidationReport> {
    let panel = load_panel(panel_path)?;
    let violations = panel_violations(&panel);
    Ok(ValidationReport {
        trajectories: panel.len(),
        states: panel.space().len(),
        mode: panel.mode(),
        normalized: panel.is_normalized(),
        grid_cells: panel.union_grid()?.n_cells(),
        violations,
    })
}

/// Everything produced by one MFPCA run.
pub struct MfpcaOutcome {
    pub panel: Panel,
    pub field: ProbabilityField,
    pub result: MfpcaResult,
    pub summary: ResultSummary,
    pub text: String,
}

pub fn resolve_weights(field: &ProbabilityField, config: &RunConfig) -> Result<WeightScheme> {
    match (&config.weight_values, config.weights) {
        (Some(w), _) => {
            if w.len() != field.q() {
                return Err(Error::Validation(format!(
                    "{} weight values for {} states",
                    w.len(),
                    field.q()
                )));
            }
            WeightScheme::new(SchemeTag::Custom, w.clone())
        }
        (None, scheme) => compute_weights(field, scheme),
    }
}

/// Fits a panel in memory.
pub fn run_mfpca(panel: Panel, config: &RunConfig) -> Result<MfpcaOutcome> {
    config.validate()?;
    config.check_mode(panel.mode())?;
    let cells = CellPanel::build(&panel, config.grid)?;
    let field = ProbabilityField::from_cells(&cells)?;
    let weights = resolve_weights(&field, config)?;
    let mfpca = MfpcaConfig {
        retention: config.retention(),
        solver: config.solver,
    };
    let result = fit(&cells, &field, &weights, &mfpca)?;
    let summary = ResultSummary::new(&panel, &result, config.grid, cells.is_exact());
    let text = format!(
        "{} panel: {} trajectories, {} states\n{}",
        panel.mode(),
        panel.len(),
        panel.space().len(),
        result
    );
    Ok(MfpcaOutcome {
        panel,
        field,
        result,
        summary,
        text,
    })
}

/// File names written by [`cmd_mfpca`].
pub const MFPCA_OUTPUTS: [&str; 9] = [
    "result.json",
    "summary.txt",
    "mean.csv",
    "variance.csv",
    "selection_count.csv",
    "scores.csv",
    "eigenfunctions.csv",
    "bands.csv",
    "weights.json",
];

/// Fits the panel file and writes every export into `out_dir`.
pub fn cmd_mfpca(panel_path: &Path, config: &RunConfig, out_dir: &Path) -> Result<MfpcaOutcome> {
    let outcome = run_mfpca(load_panel(panel_path)?, config)?;
    fs::create_dir_all(out_dir).map_err(with_path(out_dir))?;
    let path = |name: &str| -> PathBuf { out_dir.join(name) };
    let (panel, field, result) = (&outcome.panel, &outcome.field, &outcome.result);

    outcome.summary.to_writer(create(&path("result.json"))?)?;
    create(&path("summary.txt"))?.write_all(outcome.text.as_bytes())?;
    write_mean_curves(create(&path("mean.csv"))?, field)?;
    write_variance_curves(create(&path("variance.csv"))?, field)?;
    let (grid, curve) = selection_count_curve(panel)?;
    write_selection_count(create(&path("selection_count.csv"))?, &grid, &curve)?;
    write_scores(create(&path("scores.csv"))?, panel, result)?;
    write_eigenfunctions(create(&path("eigenfunctions.csv"))?, result)?;
    write_variation_bands(create(&path("bands.csv"))?, result, config.band_scale)?;
    write_json(&path("weights.json"), result.weights())?;
    Ok(outcome)
}

/// Simulates a panel and writes it in the ingestion schema.
pub fn cmd_simulate(
    spec_path: &Path,
    n: usize,
    seed: u64,
    events_out: &Path,
    sidecar_out: &Path,
) -> Result<Panel> {
    let spec = ProcessSpec::from_json(&fs::read_to_string(spec_path).map_err(with_path(spec_path))?)?;
    let panel = simulate_panel(&spec, n, seed)?;
    let mut w = create(events_out)?;
    write_events(&panel_to_events(&panel), &mut w)?;
    w.flush()?;
    write_json(sidecar_out, &sidecar_for(&panel))?;
    Ok(panel)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub panels: usize,
    pub max_kernel_gap: f64,
    pub max_mean_gap: f64,
    pub max_eigenvalue_gap: f64,
    pub max_gram_deviation: f64,
    pub max_trace_error: f64,
    pub max_score_variance_error: f64,
    pub max_parseval_error: f64,
    /// Worst `mercer_check / trace` at full rank.
    pub max_mercer_ratio: f64,
    /// Worst TDS row-sum deviation.
    pub max_row_sum: f64,
    pub max_asymmetry: f64,
    pub passed: bool,
}

/// Tolerances used by [`cmd_oracle_check`].
pub const ORACLE_KERNEL_TOL: f64 = 1e-12;
pub const ORACLE_EIGEN_TOL: f64 = 1e-8;
pub const IDENTITY_TOL: f64 = 1e-8;
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Compares the optimized pipeline with the naive oracles on random panels.
pub fn cmd_oracle_check(panels: usize, seed: u64) -> Result<OracleReport> {
    let mut rep = OracleReport {
        panels,
        max_kernel_gap: 0.0,
        max_mean_gap: 0.0,
        max_eigenvalue_gap: 0.0,
        max_gram_deviation: 0.0,
        max_trace_error: 0.0,
        max_score_variance_error: 0.0,
        max_parseval_error: 0.0,
        max_mercer_ratio: 0.0,
        max_row_sum: 0.0,
        max_asymmetry: 0.0,
        passed: false,
    };
    for k in 0..panels {
        let mode = if k % 2 == 0 { Mode::Tds } else { Mode::Tcata };
        let panel = random_panel(derive_seed(seed, k as u64, 0), RandomPanelShape { mode, ..Default::default() })?;
        let grid = panel.union_grid()?;
        let fast = estimate_field(&panel, &grid)?;
        let slow = oracle_covariance(&panel, &grid)?;
        rep.max_kernel_gap = rep.max_kernel_gap.max((fast.cov_matrix() - slow.cov_matrix()).amax());
        rep.max_mean_gap = rep.max_mean_gap.max((fast.mean_vector() - slow.mean_vector()).amax());
        rep.max_asymmetry = rep.max_asymmetry.max(symmetry_deviation(&fast));
        if mode == Mode::Tds {
            rep.max_row_sum = rep.max_row_sum.max(row_sum_deviation(&fast));
        }

        let weights = WeightScheme::equal(panel.space().len())?;
        let cells = CellPanel::exact(&panel, &grid)?;
        let config = MfpcaConfig {
            retention: Retention::Components(usize::MAX),
            ..Default::default()
        };
        let result = fit(&cells, &fast, &weights, &config)?;
        let naive = jacobi_eigenvalues(&naive_operator(&slow, &weights));
        let ev = result.eigenvalues();
        let gap = naive
            .iter()
            .enumerate()
            .map(|(r, l)| (l - ev.get(r).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max);
        rep.max_eigenvalue_gap = rep.max_eigenvalue_gap.max(gap);
        rep.max_gram_deviation = rep.max_gram_deviation.max(gram_deviation(&result));
        rep.max_trace_error = rep.max_trace_error.max(trace_identity_error(&result, &fast)?);
        rep.max_score_variance_error = rep.max_score_variance_error.max(score_variance_error(&result));
        rep.max_parseval_error = rep.max_parseval_error.max(parseval_error(&cells, &result)?);
        let trace = weighted_trace(&fast, &weights)?;
        if trace > 0.0 {
            rep.max_mercer_ratio = rep.max_mercer_ratio.max(result.mercer_check(&fast, None)? / trace);
        }
    }
    rep.passed = rep.max_kernel_gap <= ORACLE_KERNEL_TOL
        && rep.max_mean_gap <= ORACLE_KERNEL_TOL
        && rep.max_eigenvalue_gap <= ORACLE_EIGEN_TOL
        && rep.max_gram_deviation <= IDENTITY_TOL
        && rep.max_trace_error <= IDENTITY_TOL
        && rep.max_score_variance_error <= IDENTITY_TOL
        && rep.max_parseval_error <= IDENTITY_TOL
        && rep.max_mercer_ratio <= IDENTITY_TOL
        && rep.max_row_sum <= ROW_SUM_TOL
        && rep.max_asymmetry == 0.0;
    Ok(rep)
}
