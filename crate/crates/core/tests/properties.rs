use maxwalk::embedding::{build_plan, skorokhod_martingale_mean, stopped_law_exact_with, ExactMethod};
use maxwalk::inequalities::{doob_maximal_at, maximal_martingale_mean, Relation};
use maxwalk::martingales::{g_pq, g_pq_exact, verify_martingale_h, AzemaYorSpec};
use maxwalk::rational::{int, ratio, to_f64};
use maxwalk::walk::{aggregate_paths, joint_dist, joint_dist_sequence, Drift};
use maxwalk::{BigRational, CenteredMeasure, WalkParams};
use num_traits::{One, Zero};
use proptest::prelude::*;

/// `(p, q, r)` with denominator 12 and `p, q > 0`.
fn params() -> impl Strategy<Value = WalkParams> {
    (1i64..=10, 1i64..=10)
        .prop_filter("p + q <= 1", |(a, b)| a + b <= 12)
        .prop_map(|(a, b)| WalkParams::new(ratio(a, 12), ratio(b, 12), ratio(12 - a - b, 12)).unwrap())
}

fn symmetric_params() -> impl Strategy<Value = WalkParams> {
    (1i64..=6).prop_map(|a| WalkParams::from_pq(ratio(a, 12), ratio(a, 12)).unwrap())
}

fn boundary_table(len: usize) -> impl Strategy<Value = Vec<BigRational>> {
    prop::collection::vec((-20i64..=20, 1i64..=7), len)
        .prop_map(|v| v.into_iter().map(|(n, d)| ratio(n, d)).collect())
}

/// Nonincreasing positive gaps `i - x_i` below the top atom.
fn gaps() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(1i64..=4, 0..=4).prop_map(|mut v| {
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    })
}

/// The measure whose `psi` has the given gaps: `mu(>x_i) = g_i mu({x_i})`.
fn measure_from_gaps(gaps: &[i64]) -> CenteredMeasure {
    let mut atoms = Vec::new();
    let mut at_least = BigRational::one();
    for (i, g) in gaps.iter().enumerate() {
        let mass = &at_least / int(g + 1);
        at_least -= &mass;
        atoms.push((i as i64 - g, mass));
    }
    atoms.push((gaps.len() as i64, at_least));
    CenteredMeasure::from_atoms(atoms).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn joint_law_is_a_probability_on_the_cone(ps in params(), t in 0u32..=10) {
        let d = joint_dist(&ps, t);
        prop_assert!(d.total().is_one());
        for ((z, m), mass) in d.iter() {
            prop_assert!(mass > &BigRational::zero());
            prop_assert!(z <= m && m >= 0 && m <= i64::from(t) && z >= -i64::from(t));
        }
        let mean = d.expect(|z, _| int(z));
        prop_assert_eq!(mean, int(i64::from(t)) * (ps.p() - ps.q()));
    }

    #[test]
    fn joint_law_matches_enumeration(ps in params(), t in 0u32..=6) {
        prop_assert_eq!(joint_dist(&ps, t), aggregate_paths(&ps, t, 6).unwrap());
    }

    #[test]
    fn azema_yor_family_is_martingale(ps in params(), f in boundary_table(9)) {
        let spec = AzemaYorSpec::new(ps, f).unwrap();
        prop_assert!(verify_martingale_h(&spec, 7).unwrap().passed());
    }

    #[test]
    fn g_pq_sits_on_the_drift_side_of_identity(ps in params(), k in 0i64..=12) {
        let g = g_pq_exact(&ps, k);
        match ps.drift() {
            Drift::Up => prop_assert!(g >= int(k)),
            Drift::Balanced => prop_assert_eq!(g.clone(), int(k)),
            Drift::Down => prop_assert!(g <= int(k)),
        }
        let float = g_pq(&ps, k as f64);
        prop_assert!((float - to_f64(&g)).abs() <= 1e-9 * (1.0 + float.abs()));
    }

    #[test]
    fn doob_relation_follows_drift(ps in params(), t in 1u32..=10, num in 1i64..=20) {
        let d = joint_dist(&ps, t);
        let report = doob_maximal_at(&d, &ps, &ratio(num, 2)).unwrap();
        prop_assert!(report.holds());
        if ps.is_symmetric() {
            prop_assert_eq!(report.relation, Relation::Equal);
        }
    }

    #[test]
    fn maximal_martingale_is_centred(ps in params(), level in 1i64..=5) {
        for d in joint_dist_sequence(&ps, 8) {
            prop_assert!(maximal_martingale_mean(&d, &ps, level).is_zero());
        }
    }

    #[test]
    fn skorokhod_martingale_is_centred(ps in symmetric_params(), level in 0i64..=5) {
        for d in joint_dist_sequence(&ps, 8) {
            prop_assert!(skorokhod_martingale_mean(&d, level).is_zero());
        }
    }

    #[test]
    fn measure_file_round_trips(gaps in gaps()) {
        let mu = measure_from_gaps(&gaps);
        prop_assert_eq!(CenteredMeasure::from_json_str(&mu.to_json_string()).unwrap(), mu);
    }

    #[test]
    fn embedding_reproduces_any_admissible_measure(gaps in gaps(), ps in symmetric_params()) {
        let mu = measure_from_gaps(&gaps);
        let plan = build_plan(&mu).unwrap();
        for (i, (x, psi)) in plan.psi_table().into_iter().enumerate() {
            prop_assert_eq!(psi, i as i64);
            prop_assert!(psi - x <= plan.c());
        }
        let levels = stopped_law_exact_with(&plan, &ps, ExactMethod::Levels).unwrap();
        let solved = stopped_law_exact_with(&plan, &ps, ExactMethod::LinearSolve).unwrap();
        prop_assert_eq!(&levels.expected_t, &solved.expected_t);
        prop_assert_eq!(&levels.atoms, &solved.atoms);
        for (x, mass) in mu.atoms() {
            prop_assert_eq!(&solved.atoms[x], mass);
        }
    }
}
