mod common;

use catmfpca::simulation::oracle::{jacobi_eigenvalues, naive_operator, oracle_covariance};
use catmfpca::estimation::selection_count_curve;
use catmfpca::{estimate_field, MfpcaConfig, Retention, WeightScheme};
use common::{fit_with, random_weights, small_panel};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn oracle_matches_estimator(seed in any::<u64>(), tcata in any::<bool>()) {
        let panel = small_panel(seed, tcata);
        let grid = panel.union_grid().unwrap();
        prop_assert!(grid.n_cells() <= 20);
        let fast = estimate_field(&panel, &grid).unwrap();
        let slow = oracle_covariance(&panel, &grid).unwrap();
        prop_assert!((fast.cov_matrix() - slow.cov_matrix()).amax() <= 1e-12);
        prop_assert!((fast.mean_vector() - slow.mean_vector()).amax() <= 1e-12);
    }

    #[test]
    fn eigenvalues_match_jacobi(seed in any::<u64>(), tcata in any::<bool>(), custom in any::<bool>()) {
        let panel = small_panel(seed, tcata);
        let q = panel.space().len();
        let w = if custom { random_weights(q, seed) } else { WeightScheme::equal(q).unwrap() };
        let grid = panel.union_grid().unwrap();
        let naive = jacobi_eigenvalues(&naive_operator(&oracle_covariance(&panel, &grid).unwrap(), &w));
        let config = MfpcaConfig { retention: Retention::Components(usize::MAX), ..Default::default() };
        let f = fit_with(panel, &w, &config);
        let ev = f.result.eigenvalues();
        for (r, l) in ev.iter().enumerate() {
            prop_assert!((l - naive[r]).abs() <= 1e-8, "r = {}: {} vs {}", r, l, naive[r]);
        }
        // everything beyond the retained rank vanishes
        prop_assert!(naive[ev.len()..].iter().all(|l| l.abs() <= 1e-8));
    }

    #[test]
    fn selection_count_sweep_matches_field(seed in any::<u64>()) {
        let panel = small_panel(seed, true);
        let (grid, curve) = selection_count_curve(&panel).unwrap();
        let field = estimate_field(&panel, &grid).unwrap();
        for (a, b) in curve.iter().zip(field.selection_count_curve()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
