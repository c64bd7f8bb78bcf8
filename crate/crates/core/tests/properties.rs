use cwmeter::bath::{noise_kernel, KernelParams};
use cwmeter::dynamics::registration_rhs;
use cwmeter::dynamics::OutcomeWeights;
use cwmeter::landscape::{
    critical_coupling_joint, critical_coupling_single, ferro_magnetization, free_energy_eq, free_energy_joint,
    free_energy_single, locate_minima, Branch, Landscape2D,
};
use cwmeter::model::{degeneracy_log, init_joint_field, ApparatusParams, BlochState, MagnetGrid};
use cwmeter::povm::{
    estimate_bloch, lossy_channel, outcome_probabilities, outcome_probabilities_trace, sample_outcomes,
    MeasurementModel,
};
use proptest::prelude::*;

fn bloch() -> impl Strategy<Value = BlochState> {
    (0.0..=1.0f64, 0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU).prop_map(|(r, th, ph)| BlochState {
        rx: r * th.sin() * ph.cos(),
        ry: r * th.sin() * ph.sin(),
        rz: r * th.cos(),
    })
}

fn app(n: usize, g: f64) -> ApparatusParams {
    ApparatusParams::new(n, 0.0, 1.0, g, 0.01, 5.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn initial_field_is_normalized_and_bounded(s in bloch(), n in 1usize..60, np in 1usize..60, g in 0.0..1.0f64, gp in 0.0..1.0f64) {
        let f = init_joint_field(&s, &app(n, g), &app(np, gp)).unwrap();
        prop_assert!((f.mass() - 1.0).abs() < 1e-12);
        prop_assert!(f.max_correlation_excess() <= 1e-15);
    }

    #[test]
    fn initial_field_mirror(s in bloch(), n in (0usize..20).prop_map(|k| 2 * k + 1), g in 0.01..1.0f64, gp in 0.01..1.0f64) {
        let (a, ap) = (app(n, g), app(n + 3, gp));
        let f = init_joint_field(&s, &a, &ap).unwrap();
        // u(-m, -m') = -u(m, m'), so flipping the spin is the same as reflecting the grid
        let flipped = BlochState { rx: -s.rx, ry: s.ry, rz: -s.rz };
        let m = init_joint_field(&flipped, &a, &ap).unwrap();
        let r = f.reflected();
        prop_assert_eq!(&r.p, &m.p);
        prop_assert_eq!(&r.cu, &m.cu);
    }

    #[test]
    fn degeneracy_is_even(n in 1usize..2000, frac in 0.0..=1.0f64) {
        let g = MagnetGrid::new(n).unwrap();
        let i = ((frac * n as f64) as usize).min(n);
        let m = g.value(i);
        prop_assert_eq!(degeneracy_log(n, m).unwrap(), degeneracy_log(n, -m).unwrap());
    }

    #[test]
    fn joint_slice_with_idle_partner(m in 0.001..0.99f64, g in 0.0..0.6f64) {
        let (a, ap) = (app(161, g), app(161, 0.0));
        let c = free_energy_eq(0.0, &ap).unwrap();
        for b in [Branch::Up, Branch::Down] {
            let j = free_energy_joint(m, 0.0, &a, &ap, b).unwrap();
            let s = free_energy_single(m, &a, b).unwrap();
            prop_assert!((j - s - c).abs() < 1e-9 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn minima_invariant_under_energy_rescaling(c in 0.3..3.0f64, g in 0.0..0.5f64) {
        let base = ApparatusParams::new(41, 0.1, 1.0, g, 0.01, 5.0).unwrap();
        let scaled = ApparatusParams::new(41, 0.1 * c, c, g * c, 0.01, 5.0 / c).unwrap();
        let p: Vec<_> = locate_minima(&Landscape2D::new(&base, &base, Branch::Up).unwrap()).iter().map(|s| (s.m, s.mp)).collect();
        let q: Vec<_> = locate_minima(&Landscape2D::new(&scaled, &scaled, Branch::Up).unwrap()).iter().map(|s| (s.m, s.mp)).collect();
        prop_assert_eq!(p, q);
    }

    #[test]
    fn kernel_positive_and_balanced(w in 1e-6..10.0f64, beta in 0.5..20.0f64) {
        let kp = KernelParams::new(beta, 50.0, 1e-10).unwrap();
        let (pos, neg) = (noise_kernel(w, &kp), noise_kernel(-w, &kp));
        prop_assert!(pos > 0.0 && neg > 0.0);
        prop_assert!(((neg - (beta * w).exp() * pos) / neg).abs() < 1e-12);
    }

    #[test]
    fn rhs_conserves_mass_and_commutes_with_reflection(s in bloch(), n in (1usize..12).prop_map(|k| 2 * k + 1), g in 0.05..0.6f64) {
        let a = app(n, g);
        let f = init_joint_field(&s, &a, &a).unwrap();
        let (dp, dcu) = registration_rhs(&f, &a, &a).unwrap();
        let scale: f64 = dp.iter().map(|v| v.abs()).sum();
        prop_assert!(dp.iter().sum::<f64>().abs() <= 1e-13 * scale.max(1e-300));
        let (rp, rc) = registration_rhs(&f.reflected(), &a, &a).unwrap();
        let (r, c) = (f.rows(), f.cols());
        for i in 0..r {
            for j in 0..c {
                let k = f.idx(i, j);
                let kr = f.idx(r - 1 - i, c - 1 - j);
                prop_assert_eq!(dp[k], rp[kr]);
                prop_assert_eq!(dcu[k], rc[kr]);
            }
        }
    }

    #[test]
    fn povm_complete_positive_and_two_paths_agree(
        s in bloch(), g in 0.0..1.0f64, gp in 0.0..1.0f64, ax in 0.0..=1.0f64, az in 0.0..=1.0f64,
    ) {
        prop_assume!(g + gp > 1e-6);
        let m = MeasurementModel::new(&app(161, g), &app(61, gp), ax, az).unwrap();
        prop_assert!(m.completeness_defect() < 1e-12);
        prop_assert!(m.effects.iter().all(|e| e.is_positive()));
        let p = outcome_probabilities(&s, &m).unwrap().as_array();
        let q = outcome_probabilities_trace(&s, &m).unwrap();
        for k in 0..4 {
            prop_assert!((p[k] - q[k]).abs() < 1e-12);
        }
        prop_assert!(lossy_channel(&s, ax, az).unwrap().norm() <= s.norm() + 1e-15);
    }

    #[test]
    fn samples_sum_to_n(w in prop::array::uniform4(0.0..1.0f64), n in 0u64..100_000, seed: u64) {
        let t: f64 = w.iter().sum();
        prop_assume!(t > 0.0);
        let p = OutcomeWeights::new(w[0] / t, w[1] / t, w[2] / t, 1.0 - (w[0] + w[1] + w[2]) / t).unwrap();
        let c = sample_outcomes(&p, n, seed).unwrap();
        prop_assert_eq!(c.iter().sum::<u64>(), n);
        prop_assert_eq!(c, sample_outcomes(&p, n, seed).unwrap());
    }

    #[test]
    fn estimator_inverts_expected_counts(rx in -0.7..0.7f64, rz in -0.7..0.7f64, l in 0.05..1.0f64, lp in 0.05..1.0f64) {
        prop_assume!(l * rz.abs() + lp * rx.abs() <= 1.0);
        let n = 1u64 << 40;
        let counts = OutcomeWeights::SIGNS.map(|(e, ep)| (0.25 * (1.0 + e * l * rz + ep * lp * rx) * n as f64).round() as u64);
        let est = estimate_bloch(&counts, l, lp).unwrap();
        prop_assert!((est.rx - rx).abs() < 1e-9 && (est.rz - rz).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn single_threshold_below_joint_threshold(t in 0.1..0.7f64, j2 in 0.0..0.3f64) {
        let beta = 1.0 / t;
        prop_assume!(j2 < t);
        let a = ApparatusParams::new(161, j2, 1.0, 0.0, 0.01, beta).unwrap();
        prop_assume!(ferro_magnetization(&a) > 0.0);
        let hc = critical_coupling_single(&a).unwrap().value().unwrap();
        let hd = critical_coupling_joint(&a, &a).unwrap().closed_form;
        prop_assert!(hc < hd, "h_c = {hc}, h_d = {hd}");
    }
}
