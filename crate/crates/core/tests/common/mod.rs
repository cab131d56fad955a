#![allow(dead_code)]

use catmfpca::mfpca::{fit, MfpcaConfig, MfpcaResult};
use catmfpca::simulation::oracle::{random_panel, RandomPanelShape};
use catmfpca::{CellPanel, GridPolicy, Mode, Panel, ProbabilityField, WeightScheme};

pub struct Fitted {
    pub panel: Panel,
    pub cells: CellPanel,
    pub field: ProbabilityField,
    pub result: MfpcaResult,
}

pub fn fit_with(panel: Panel, weights: &WeightScheme, config: &MfpcaConfig) -> Fitted {
    let cells = CellPanel::build(&panel, GridPolicy::Exact).unwrap();
    let field = ProbabilityField::from_cells(&cells).unwrap();
    let result = fit(&cells, &field, weights, config).unwrap();
    Fitted { panel, cells, field, result }
}

pub fn small_panel(seed: u64, tcata: bool) -> Panel {
    let mode = if tcata { Mode::Tcata } else { Mode::Tds };
    random_panel(seed, RandomPanelShape { mode, ..Default::default() }).unwrap()
}

/// Positive weights derived from `seed`, not normalized.
pub fn random_weights(q: usize, seed: u64) -> WeightScheme {
    let mut s = catmfpca::simulation::Stream::new(seed, 7);
    let w = (0..q).map(|_| 0.1 + 2.0 * s.uniform()).collect();
    WeightScheme::new(catmfpca::SchemeTag::Custom, w).unwrap()
}
