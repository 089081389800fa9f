#![allow(clippy::needless_range_loop)]

mod oracles;

use avoidance_credit::dynamics::{AgentState, ControlInput};
use avoidance_credit::safety::{
    active_set, all_pairs, assemble_constraint, lse_aggregate, pair_derivatives, softmin_weights, BarrierParams,
};
use proptest::prelude::*;

fn states_of(poses: &[oracles::Pose]) -> Vec<AgentState> {
    poses.iter().map(|&(x, y, t)| AgentState::new(x, y, t).unwrap()).collect()
}

fn separated(poses: &[oracles::Pose], min: f64) -> bool {
    all_pairs(poses.len()).into_iter().all(|(i, j)| {
        let (a, b) = (poses[i], poses[j]);
        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() >= min
    })
}

fn pose() -> impl Strategy<Value = oracles::Pose> {
    (-0.6f64..0.6, -0.6f64..0.6, -3.1f64..3.1)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn aggregate_derivatives_match_finite_differences(
        poses in prop::collection::vec(pose(), 2..=4),
        v in 0.05f64..0.4,
        lambda in 2.0f64..40.0,
    ) {
        prop_assume!(separated(&poses, 0.05));
        let params = BarrierParams::new(0.12, lambda, 1.2, 1.2).unwrap();
        let states = states_of(&poses);
        let pairs = all_pairs(poses.len());
        let nominal = vec![ControlInput::default(); poses.len()];
        let c = assemble_constraint(&states, &nominal, &pairs, v, &params).unwrap();
        let (lf, lf2, a) = oracles::drift_derivatives_fd(&poses, &pairs, v, 0.12, lambda);
        prop_assert!(close(c.lf_h_tilde, lf, 1e-4), "L_f {} vs {}", c.lf_h_tilde, lf);
        prop_assert!(close(c.lf2_h_tilde, lf2, 1e-4), "L_f^2 {} vs {}", c.lf2_h_tilde, lf2);
        // Normwise: single entries can be arbitrarily close to zero.
        let scale = a.iter().fold(1e-5f64, |m, x| m.max(x.abs()));
        for i in 0..poses.len() {
            prop_assert!((c.a_row[i] - a[i]).abs() <= 1e-4 * scale, "a[{}] {} vs {}", i, c.a_row[i], a[i]);
        }
        prop_assert!((c.h_tilde - oracles::aggregate_barrier(&poses, &pairs, 0.12, lambda)).abs() < 1e-12);
    }

    #[test]
    fn lse_brackets_the_minimum(h in prop::collection::vec(-1.0f64..3.0, 1..30), lambda in 0.1f64..500.0) {
        let agg = lse_aggregate(&h, lambda).unwrap();
        let min = h.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(agg <= min + 1e-12);
        prop_assert!(min - agg <= (h.len() as f64).ln() / lambda + 1e-12);
        prop_assert!((agg - oracles::soft_min(&h, lambda)).abs() < 1e-12);
    }

    #[test]
    fn lse_is_permutation_invariant(mut h in prop::collection::vec(-1.0f64..3.0, 2..12), lambda in 1.0f64..100.0) {
        let a = lse_aggregate(&h, lambda).unwrap();
        h.reverse();
        let b = lse_aggregate(&h, lambda).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn softmin_weights_form_a_distribution(h in prop::collection::vec(-1.0f64..3.0, 1..20), lambda in 0.1f64..500.0) {
        let w = softmin_weights(&h, lambda).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn single_pair_constraint_is_the_pair_condition(
        a in pose(), b in pose(), v in 0.05f64..0.4, lambda in 1.0f64..100.0,
        ui in -1.0f64..1.0, uj in -1.0f64..1.0,
    ) {
        prop_assume!(separated(&[a, b], 0.01));
        let params = BarrierParams::new(0.12, lambda, 1.2, 1.2).unwrap();
        let s = states_of(&[a, b]);
        let u = [ControlInput::new(ui), ControlInput::new(uj)];
        let c = assemble_constraint(&s, &u, &[(0, 1)], v, &params).unwrap();

        // Per-pair quantities written out directly.
        let (dx, dy) = (s[0].x - s[1].x, s[0].y - s[1].y);
        let dvx = v * s[0].theta.cos() - v * s[1].theta.cos();
        let dvy = v * s[0].theta.sin() - v * s[1].theta.sin();
        let h = dx * dx + dy * dy - 0.12 * 0.12;
        let lf = 2.0 * (dx * dvx + dy * dvy);
        let lf2 = 2.0 * (dvx * dvx + dvy * dvy);
        let ai = 2.0 * v * (-dx * s[0].theta.sin() + dy * s[0].theta.cos());
        let aj = 2.0 * v * (dx * s[1].theta.sin() - dy * s[1].theta.cos());
        let bb = -lf2 - 2.4 * lf - 1.44 * h;
        prop_assert!((c.a_row[0] - ai).abs() <= 1e-9);
        prop_assert!((c.a_row[1] - aj).abs() <= 1e-9);
        prop_assert!((c.b - bb).abs() <= 1e-9);
        prop_assert!((c.deficit - (bb - ai * ui - aj * uj)).abs() <= 1e-9);

        let p = pair_derivatives((0, 1), &s[0], &s[1], v, &params);
        let cond = p.condition(ui, uj, &params);
        prop_assert!((cond + c.deficit).abs() <= 1e-9);
    }

    #[test]
    fn active_set_is_exactly_the_violating_pairs(poses in prop::collection::vec(pose(), 2..=5), v in 0.05f64..0.4) {
        prop_assume!(separated(&poses, 0.02));
        let params = BarrierParams::new(0.12, 50.0, 1.2, 1.2).unwrap();
        let s = states_of(&poses);
        let u = vec![ControlInput::new(0.1); poses.len()];
        let set = active_set(&s, &u, v, &params);
        for (i, j) in all_pairs(poses.len()) {
            let p = pair_derivatives((i, j), &s[i], &s[j], v, &params);
            let violated = p.condition(0.1, 0.1, &params) < 0.0;
            prop_assert_eq!(set.pairs.contains(&(i, j)), violated);
            if violated {
                prop_assert!(set.contains(i) && set.contains(j));
            }
        }
        prop_assert!(set.agents.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn overflow_safe_for_extreme_lambda() {
    let agg = lse_aggregate(&[1.0, 2.0, 1e3], 1e4).unwrap();
    assert!(agg.is_finite());
    assert!((agg - 1.0).abs() < 1e-9);
    let agg = lse_aggregate(&[-5.0, -5.0], 1e4).unwrap();
    assert!((agg - (-5.0 - 2f64.ln() / 1e4)).abs() < 1e-12);
}
