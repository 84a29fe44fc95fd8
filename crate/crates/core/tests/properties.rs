use confine::cli::fmt_f64;
use confine::domains::{self, Domain};
use confine::hardy::{self, TestFunctionFamily};
use confine::iterlog::{self, LogCoordinate};
use proptest::prelude::*;

proptest! {
    #[test]
    fn levels_at_least_one_on_their_domain(k in 1u32..=4, extra in 0.0f64..50.0) {
        let s = iterlog::min_s(k).unwrap() + extra;
        let l = iterlog::iterlog(k, LogCoordinate::new(s).unwrap()).unwrap();
        prop_assert!(l >= 1.0 - 1e-12);
        prop_assert!(iterlog::prod_inv(k, LogCoordinate::new(s).unwrap()).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn levels_decrease_with_k(s in 1e7f64..1e300) {
        let x = LogCoordinate::new(s).unwrap();
        let ls: Vec<f64> = (1..=4).map(|k| iterlog::iterlog(k, x).unwrap()).collect();
        prop_assert!(ls.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn xk_stays_in_unit_interval(k in 1u32..=6, log_inv_t in 0.0f64..1e6) {
        let x = iterlog::xk_from_log(k, log_inv_t);
        prop_assert!(x > 0.0 && x <= 1.0);
    }

    #[test]
    fn distance_gradient_has_unit_norm(r in 0.0f64..1.0, th in 0.0f64..std::f64::consts::TAU, a in 1.0f64..3.0) {
        let dom = Domain::Ellipse(a, 1.0);
        let reach = dom.reach();
        // points on the inner parallel curve at depth below the reach
        let depth = 0.95 * reach * r.max(1e-3);
        let foot = [a * th.cos(), th.sin()];
        let n = [th.cos() / a, th.sin()];
        let nn = n[0].hypot(n[1]);
        let p = [foot[0] - depth * n[0] / nn, foot[1] - depth * n[1] / nn];
        let info = dom.dist_and_grad(&p).unwrap();
        let g: f64 = info.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((g - 1.0).abs() < 1e-9);
        prop_assert!((info.d - depth).abs() < 1e-9 * a);
    }

    #[test]
    fn reach_is_continuous_towards_the_disk(delta in 1e-9f64..1e-3) {
        let e = Domain::Ellipse(1.0 + delta, 1.0).reach();
        prop_assert!((e - Domain::Disk(1.0).reach()).abs() <= 2.0 * delta);
    }

    #[test]
    fn json_floats_round_trip(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn improved_quotient_shrinks_with_depth(k in 1u32..4, big_d in 2.0f64..10.0) {
        let grid = hardy::default_grid();
        let phi = TestFunctionFamily::SinePad { k };
        let qs: Vec<f64> = (0..=4)
            .map(|depth| hardy::improved_quotient(&phi, big_d, depth, &grid).unwrap().quotient)
            .collect();
        prop_assert!(qs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert!(qs[4] >= 1.0);
    }

    #[test]
    fn sampling_is_seed_deterministic(seed in any::<u64>()) {
        let dom = Domain::Annulus(1.0, 2.0);
        let a = domains::grad_norm_check(&dom, 128, 2, seed).unwrap();
        let b = domains::grad_norm_check(&dom, 128, 2, seed).unwrap();
        prop_assert_eq!(a.max_deviation.to_bits(), b.max_deviation.to_bits());
        prop_assert!(a.passed);
    }
}
