use proptest::prelude::*;
use psgd_core::schedule::{
    select, select_groups, select_workers, update_aoi, ConditionWeights, IterateHistory, SelectionReason, UnitMeta,
};

const DIM: usize = 4;

/// Random scheduler state: `D`, iterate trajectory, and unit metadata.
fn state() -> impl Strategy<Value = (usize, Vec<Vec<f64>>, Vec<(f64, usize)>)> {
    (1usize..8).prop_flat_map(|d| {
        (
            Just(d),
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, DIM), d + 1..d + 6),
            prop::collection::vec((0.0f64..20.0, 1usize..=d), 1..12),
        )
    })
}

fn build(d: usize, path: &[Vec<f64>], units: &[(f64, usize)], scale: f64) -> (IterateHistory, Vec<UnitMeta>) {
    let mut history = IterateHistory::new(&path[0], d);
    for theta in &path[1..] {
        history.push(theta);
    }
    let metas =
        units.iter().enumerate().map(|(i, &(l, aoi))| UnitMeta { aoi, ..UnitMeta::worker(i, l * scale) }).collect();
    (history, metas)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn selection_shrinks_as_threshold_grows((d, path, units) in state(), c in 0.0f64..10.0, extra in 0.0f64..10.0) {
        let (history, metas) = build(d, &path, &units, 1.0);
        let lo = select(&metas, &history, &ConditionWeights::Scalar(c), d).unwrap();
        let hi = select(&metas, &history, &ConditionWeights::Scalar(c + extra), d).unwrap();
        for id in hi.ids() {
            prop_assert!(lo.contains(id));
        }
    }

    #[test]
    fn selection_invariant_under_joint_rescaling((d, path, units) in state(), c in 0.01f64..10.0, s in prop::sample::select(vec![0.25f64, 0.5, 2.0, 4.0])) {
        // powers of two keep the rescaled products exact
        let (history, metas) = build(d, &path, &units, 1.0);
        let (_, scaled) = build(d, &path, &units, s);
        let a = select(&metas, &history, &ConditionWeights::Scalar(c), d).unwrap();
        let b = select(&scaled, &history, &ConditionWeights::Scalar(c * s * s), d).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn units_at_max_delay_are_always_selected((d, path, units) in state(), c in 0.0f64..1e6) {
        let (history, metas) = build(d, &path, &units, 1.0);
        let sel = select(&metas, &history, &ConditionWeights::Scalar(c), d).unwrap();
        for m in &metas {
            if m.aoi >= d {
                prop_assert!(sel.selected.contains(&(m.id, SelectionReason::AoiForced)));
            }
        }
    }

    #[test]
    fn aoi_stays_in_range_over_random_trajectories(d in 1usize..8, c in 0.0f64..5.0, seed in 0u64..1000) {
        let mut theta = vec![0.0; DIM];
        let mut history = IterateHistory::new(&theta, d);
        theta[0] = 1.0;
        history.push(&theta);
        let mut metas: Vec<UnitMeta> = (0..6).map(|i| UnitMeta::worker(i, 0.5 * i as f64)).collect();
        for k in 0..60u64 {
            for m in &metas {
                prop_assert!((1..=d).contains(&m.aoi));
            }
            let sel = select(&metas, &history, &ConditionWeights::Scalar(c), d).unwrap();
            update_aoi(&sel, &mut metas);
            for (j, t) in theta.iter_mut().enumerate() {
                let h = (seed ^ (k * 31 + j as u64)).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 40;
                *t += (h as f64 / (1u64 << 24) as f64 - 0.5) * 0.1;
            }
            history.push(&theta);
        }
    }
}

#[test]
fn zero_smoothness_units_only_fire_when_forced() {
    let d = 3;
    let mut history = IterateHistory::new(&[0.0, 0.0], d);
    let mut metas = vec![UnitMeta::worker(0, 0.0)];
    let mut fired = Vec::new();
    for k in 1..=9 {
        history.push(&[k as f64, 0.0]);
        let sel = select(&metas, &history, &ConditionWeights::Scalar(0.0), d).unwrap();
        if !sel.is_empty() {
            fired.push(k);
        }
        update_aoi(&sel, &mut metas);
    }
    assert_eq!(fired, vec![3, 6, 9]);
}

#[test]
fn per_lag_weights_match_scalar_when_constant() {
    let mut history = IterateHistory::new(&[0.0], 4);
    for k in 1..6 {
        history.push(&[(k * k) as f64]);
    }
    let metas: Vec<UnitMeta> = (0..5).map(|i| UnitMeta { aoi: 1 + i % 4, ..UnitMeta::worker(i, i as f64) }).collect();
    let a = select(&metas, &history, &ConditionWeights::Scalar(0.7), 4).unwrap();
    let b = select(&metas, &history, &ConditionWeights::PerLag(vec![0.7; 4]), 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn structural_contracts() {
    let history = IterateHistory::new(&[0.0], 2);
    let group = UnitMeta::group(0, vec![0, 1], 1.0);
    assert!(select_workers(std::slice::from_ref(&group), &history, &ConditionWeights::Scalar(1.0), 2).is_err());
    let overlap = UnitMeta::group(1, vec![1, 2], 1.0);
    assert!(select_groups(&[group, overlap], &history, &ConditionWeights::Scalar(1.0), 2).is_err());
}
