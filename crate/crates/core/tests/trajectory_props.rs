use catmfpca::trajectory::union_grid_categorical;
use catmfpca::{CategoricalTrajectory, StateSet, StateSpace};
use proptest::prelude::*;

const Q: usize = 5;

/// TDS trajectory with arbitrary positive segment lengths.
fn tds_trajectory() -> impl Strategy<Value = CategoricalTrajectory> {
    prop::collection::vec((0.001f64..10.0, 0..Q), 1..12).prop_map(|segs| {
        let mut bps = vec![0.0];
        let mut states = Vec::new();
        for (len, s) in segs {
            bps.push(bps.last().unwrap() + len);
            states.push(s);
        }
        CategoricalTrajectory::from_states(bps, &states).unwrap()
    })
}

fn tcata_trajectory() -> impl Strategy<Value = CategoricalTrajectory> {
    prop::collection::vec((0.001f64..10.0, prop::collection::vec(0..Q, 0..Q)), 1..12).prop_map(
        |segs| {
            let mut bps = vec![0.0];
            let mut sets: Vec<StateSet> = Vec::new();
            for (len, s) in segs {
                bps.push(bps.last().unwrap() + len);
                sets.push(s.into());
            }
            CategoricalTrajectory::new(bps, sets).unwrap()
        },
    )
}

fn space() -> StateSpace {
    StateSpace::new((0..Q).map(|j| format!("S{j}"))).unwrap()
}

proptest! {
    #[test]
    fn canonical_form(t in tcata_trajectory()) {
        prop_assert!(t.segments().windows(2).all(|w| w[0] != w[1]));
        prop_assert!(t.breakpoints().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn tds_indicators_sum_to_one_and_argmax_recovers(t in tds_trajectory()) {
        let x = t.to_indicators(&space()).unwrap();
        let mut states = Vec::new();
        for v in x.values() {
            prop_assert_eq!(v.iter().map(|&b| b as u32).sum::<u32>(), 1);
            states.push(v.iter().position(|&b| b == 1).unwrap());
        }
        let back = CategoricalTrajectory::from_states(x.breakpoints().to_vec(), &states).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn union_grid_refines_inputs(ts in prop::collection::vec(tcata_trajectory(), 1..6)) {
        let ts: Vec<CategoricalTrajectory> = ts.into_iter().map(|t| t.normalize_time().unwrap()).collect();
        let grid = union_grid_categorical(&ts).unwrap();
        for t in &ts {
            // constant on every cell, checked at both ends of the cell
            for a in 0..grid.n_cells() {
                let (l, r) = grid.cell(a);
                let inner = l + 0.999 * (r - l);
                prop_assert_eq!(t.evaluate(l).unwrap(), t.evaluate(inner).unwrap());
            }
        }
    }

    #[test]
    fn normalize_time_keeps_proportions(t in tcata_trajectory()) {
        let n = t.normalize_time().unwrap();
        prop_assert_eq!(n.horizon(), 1.0);
        prop_assert_eq!(n.segments(), t.segments());
        let h = t.horizon();
        for (a, b) in t.breakpoints().iter().zip(n.breakpoints()) {
            prop_assert!((a / h - b).abs() <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn quantize_stays_canonical(t in tcata_trajectory(), tick in 1e-4f64..0.05) {
        let q = t.normalize_time().unwrap().quantize(tick).unwrap();
        prop_assert_eq!(q.horizon(), 1.0);
        prop_assert!(q.segments().windows(2).all(|w| w[0] != w[1]));
    }
}
