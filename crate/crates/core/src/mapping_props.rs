use crate::geometry::{action_len, CompoundAction, GeometryConfig, MappingMode};
use crate::io::{load_design, save_design};
use crate::policy::substream;
use crate::trainer::uniform_action;
use proptest::prelude::*;

fn config(mode: bool, budget_extra: usize, n: usize, gmin: f64, gspan: f64) -> GeometryConfig {
    GeometryConfig {
        g_min_ratio: gmin,
        g_max_ratio: gmin + gspan,
        n_budget: (budget_extra > 0).then_some(n + budget_extra),
        mode: if mode { MappingMode::Direct } else { MappingMode::Interdependent },
        ..GeometryConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mapped_designs_stay_inside_their_boundary(
        n in 2usize..8,
        seed in any::<u64>(),
        direct in any::<bool>(),
        extra in 0usize..6,
        gmin in 0.0f64..0.5,
        gspan in 0.01f64..1.5,
    ) {
        let geo = config(direct, extra, n, gmin, gspan);
        let flat = uniform_action(n, &mut substream(seed, 0));
        prop_assert_eq!(flat.len(), action_len(n));
        let action = CompoundAction::from_flat(n, &flat).unwrap();
        prop_assert_eq!(action.to_flat(), flat);
        let d = geo.map(&action).unwrap();
        d.validate().unwrap();
        prop_assert_eq!(d.n(), n);
        let b = d.boundary.unwrap();
        prop_assert_eq!(b.n_budget, n + extra);
        for r in &d.resonators {
            prop_assert!(b.center_region.contains(r.center), "{:?} vs {:?}", r, b);
            prop_assert!(b.outer.contains_rect(&r.footprint()), "{:?} vs {:?}", r, b);
        }
        prop_assert_eq!(geo.map(&action).unwrap(), d);
    }

    #[test]
    fn out_of_range_entries_are_rejected(n in 2usize..6, seed in any::<u64>(), pos in any::<prop::sample::Index>()) {
        let mut flat = uniform_action(n, &mut substream(seed, 1));
        let i = pos.index(flat.len());
        flat[i] = 7.5;
        prop_assert!(CompoundAction::from_flat(n, &flat).is_err());
        flat.pop();
        prop_assert!(CompoundAction::from_flat(n, &flat).is_err());
    }
}

#[test]
fn design_files_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let geo = GeometryConfig::default();
    for s in 0..50 {
        let flat = uniform_action(4, &mut substream(3, s));
        let d = geo.map(&CompoundAction::from_flat(4, &flat).unwrap()).unwrap();
        let path = dir.path().join(format!("d{s}.json"));
        save_design(&path, &d).unwrap();
        let back = load_design(&path).unwrap();
        assert_eq!(back.resonators, d.resonators);
        assert!(back.boundary.is_none());
    }
}

#[test]
fn direct_mode_differs_from_interdependent() {
    let flat = uniform_action(4, &mut substream(5, 0));
    let action = CompoundAction::from_flat(4, &flat).unwrap();
    let idf = GeometryConfig::default().map(&action).unwrap();
    let direct = GeometryConfig { mode: MappingMode::Direct, ..GeometryConfig::default() }.map(&action).unwrap();
    assert_eq!(idf.resonators[0], direct.resonators[0]);
    assert_ne!(idf.resonators, direct.resonators);
}
