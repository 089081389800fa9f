mod oracles;

use avoidance_credit::allocation::{credit_to_correction, pseudo_inverse_correction, qp_baseline, synthesize_control};
use avoidance_credit::dynamics::ControlInput;
use avoidance_credit::Error;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn split_conserves_the_deficit(credits in prop::collection::vec(0.0f64..=1.0, 1..8), s in -5.0f64..5.0) {
        let d = credit_to_correction(&credits, s).unwrap();
        prop_assert!((d.iter().sum::<f64>() - s).abs() <= 1e-12);
        // Higher credit never carries a larger share.
        if credits.len() > 1 && s > 0.0 {
            for i in 0..credits.len() {
                for j in 0..credits.len() {
                    if credits[i] > credits[j] {
                        prop_assert!(d[i] <= d[j] + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn synthesis_delivers_the_assigned_share(
        a in prop_oneof![-2.0f64..-1e-6, 1e-6f64..2.0],
        nominal in -3.0f64..3.0,
        delta in -2.0f64..2.0,
    ) {
        let u = synthesize_control(0, ControlInput::new(nominal), a, delta).unwrap();
        prop_assert!((a * (u.omega - nominal) - delta).abs() <= 1e-10);
    }

    #[test]
    fn pseudo_inverse_is_minimum_norm(a in prop::collection::vec(-2.0f64..2.0, 1..5), delta in -2.0f64..2.0) {
        prop_assume!(a.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let dev = pseudo_inverse_correction(&a, delta).unwrap();
        let achieved: f64 = a.iter().zip(&dev).map(|(x, y)| x * y).sum();
        prop_assert!((achieved - delta).abs() <= 1e-10);
        // Any other solution differs by a null-space vector, which only adds norm.
        let norm: f64 = dev.iter().map(|x| x * x).sum();
        let oracle = oracles::projection_oracle(&vec![0.0; a.len()], &a, delta.abs());
        let oracle_norm: f64 = oracle.iter().map(|x| x * x).sum();
        prop_assert!((norm - oracle_norm).abs() <= 1e-9 * oracle_norm.max(1.0));
    }

    #[test]
    fn qp_matches_kkt_solution(
        nominal in prop::collection::vec(-2.0f64..2.0, 2..6),
        a in prop::collection::vec(-1.0f64..1.0, 6),
        b in -2.0f64..2.0,
    ) {
        let a = &a[..nominal.len()];
        prop_assume!(a.iter().map(|x| x * x).sum::<f64>() > 1e-4);
        let u: Vec<ControlInput> = nominal.iter().map(|&w| ControlInput::new(w)).collect();
        let got = qp_baseline(&u, a, b).unwrap();
        let want = oracles::projection_oracle(&nominal, a, b);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g.omega - w).abs() <= 1e-6);
        }
        let au: f64 = a.iter().zip(&got).map(|(x, y)| x * y.omega).sum();
        prop_assert!(au >= b - 1e-9);
    }
}

#[test]
fn no_authority_is_reported_for_the_agent() {
    match synthesize_control(2, ControlInput::new(0.3), 0.0, 0.1) {
        Err(Error::Uncontrollable { agent, .. }) => assert_eq!(agent, 2),
        other => panic!("expected uncontrollable, got {other:?}"),
    }
    assert!(qp_baseline(&[ControlInput::new(0.0)], &[0.0], 1.0).is_err());
    assert!(qp_baseline(&[ControlInput::new(0.0)], &[1.0, 2.0], 1.0).is_err());
}

#[test]
fn all_full_credit_splits_evenly() {
    assert_eq!(credit_to_correction(&[1.0, 1.0, 1.0, 1.0], 2.0).unwrap(), vec![0.5; 4]);
}
