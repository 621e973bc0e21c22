use grw_core::pointer::{
    distinguishability_report, evolve_free, evolve_measurement, gaussian_pointer,
    gaussian_tail_weight, measure_superposition, overlap, tail_decompose, GridSpec,
    GridWavefunction, MeasurementCoupling,
};
use grw_core::qmath::{log10_erfc, LOG10_E};
use num_complex::Complex64;
use proptest::prelude::*;

fn unit(center: f64, delta: f64, grid: &GridSpec) -> GridWavefunction {
    gaussian_pointer(delta, center, grid, 1.0, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn translation_matches_shifted_gaussian(
        gamma in -3.0f64..3.0,
        omega in -3.0f64..3.0,
        t in 0.1f64..3.0,
        delta in 0.5f64..2.0,
    ) {
        let grid = GridSpec::cell_centered(64.0, 2048).unwrap();
        let psi = unit(0.0, delta, &grid);
        let c = MeasurementCoupling::new(gamma, 0.0, omega, t).unwrap();
        let out = evolve_measurement(&psi, &c, omega).unwrap();
        let want = unit(gamma * omega * t, delta, &grid);
        prop_assert!(out.l2_distance(&want).unwrap() < 1e-8);
        prop_assert!((out.norm_squared() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn translations_compose(t1 in 0.01f64..4.0, t2 in 0.01f64..4.0, omega in -2.0f64..2.0) {
        let grid = GridSpec::cell_centered(32.0, 1024).unwrap();
        let psi = unit(0.0, 1.0, &grid);
        let step = |p: &GridWavefunction, t| {
            let c = MeasurementCoupling::new(1.0, 0.0, omega, t).unwrap();
            evolve_measurement(p, &c, omega).unwrap()
        };
        let two = step(&step(&psi, t1), t2);
        let one = step(&psi, t1 + t2);
        prop_assert!(two.l2_distance(&one).unwrap() < 1e-9);
    }

    #[test]
    fn overlap_is_hermitian(a in -5.0f64..5.0, b in -5.0f64..5.0, da in 0.5f64..2.0) {
        let grid = GridSpec::cell_centered(40.0, 1280).unwrap();
        let (p, q) = (unit(a, da, &grid), unit(b, 1.0, &grid));
        prop_assert_eq!(overlap(&p, &q).unwrap(), overlap(&q, &p).unwrap().conj());
    }

    #[test]
    fn tails_never_vanish(delta in 1e-3f64..1e3, ratio in 0.0f64..1e4) {
        let w = gaussian_tail_weight(delta, ratio * delta).unwrap();
        prop_assert!(!w.is_zero());
    }
}

#[test]
fn variance_doubles_ten_times() {
    // hbar = m = delta = 1: variance 2^k at t = 2 sqrt(2^k - 1)
    let grid = GridSpec::cell_centered(400.0, 8192).unwrap();
    let psi = unit(0.0, 1.0, &grid);
    for k in 1..=10 {
        let want = f64::from(1u32 << k);
        let t = 2.0 * (want - 1.0).sqrt();
        let out = evolve_free(&psi, t).unwrap();
        let var = out.position_variance();
        assert!(((var - want) / want).abs() < 1e-6, "k = {k}: {var}");
        assert!((out.norm_squared() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn clipped_gaussian_leaks_immediately() {
    let grid = GridSpec::cell_centered(32.0, 1024).unwrap();
    let amps = grid
        .points()
        .map(|x| {
            let v = if x.abs() < 4.0 {
                (-x * x / 4.0).exp()
            } else {
                0.0
            };
            Complex64::new(v, 0.0)
        })
        .collect();
    let psi = GridWavefunction::new(grid, amps, 1.0, 1.0).unwrap();
    assert!(tail_decompose(&psi, 4.0).unwrap().n_out.is_zero());
    let mut last = 0.0;
    for t in [1e-4, 1e-3, 1e-2] {
        let leak = tail_decompose(&evolve_free(&psi, t).unwrap(), 4.0)
            .unwrap()
            .n_out;
        let l = leak.to_real();
        assert!(l > 1e-30, "t = {t}: {l}");
        assert!(l > last);
        last = l;
    }
}

#[test]
fn tail_weight_follows_erfc() {
    let grid = GridSpec::cell_centered(64.0, 1 << 19).unwrap();
    let psi = unit(0.0, 1.0, &grid);
    for d in [1.0, 2.0, 5.0, 10.0, 11.5] {
        let t = tail_decompose(&psi, d).unwrap();
        let want = 10f64.powf(log10_erfc(d / std::f64::consts::SQRT_2));
        let got = t.n_out.to_real();
        assert!(
            ((got - want) / want).abs() < 1e-6,
            "D = {d}: {got} vs {want}"
        );
        assert!((t.n_in.to_real() + got - 1.0).abs() < 1e-10);
        let back = t.reconstruct();
        assert!(back.l2_distance(&psi).unwrap() < 1e-10);
    }
    let far = tail_decompose(&psi, 50.0).unwrap();
    assert!(far.out_state.is_none() && !far.n_out.is_zero());
}

#[test]
fn outcome_overlap_is_gaussian() {
    // shifts of +-d/2 are whole cells, so the roll is exact
    let grid = GridSpec::cell_centered(64.0, 2048).unwrap();
    let psi = unit(0.0, 1.0, &grid);
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    for d in [1.0f64, 4.0, 20.0] {
        let c = MeasurementCoupling::new(1.0, -d / 2.0, d / 2.0, 1.0).unwrap();
        let state = measure_superposition(&psi, &c, h, h).unwrap();
        let o = state.pointer_overlap(0, 1).unwrap();
        let want = (-d * d / 8.0).exp();
        assert!(((o.norm() - want) / want).abs() < 1e-8, "d = {d}: {o}");
        let r = distinguishability_report(&c, 1.0).unwrap();
        assert!(((r.overlap_log10 - want.log10()) / want.log10().max(1.0)).abs() < 1e-12);
    }
}

#[test]
fn far_outcome_overlap_in_log_domain() {
    let c = MeasurementCoupling::new(1.0, 0.0, 1e3, 1.0).unwrap();
    let r = distinguishability_report(&c, 1.0).unwrap();
    // midpoint quadrature of psi(x) psi(x - d) carried in logs
    let dx = 1.0 / 16.0;
    let terms: Vec<f64> = (-16_000..32_000)
        .map(|i| {
            let x = (f64::from(i) + 0.5) * dx;
            let ln_norm = -0.5 * (2.0 * std::f64::consts::PI).ln();
            ln_norm - x * x / 4.0 - (x - 1e3).powi(2) / 4.0 + dx.ln()
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_sum = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    let closed = -1e6 / 8.0 * LOG10_E;
    assert!(((r.overlap_log10 - closed) / closed).abs() < 1e-12);
    assert!(((ln_sum * LOG10_E - closed) / closed).abs() < 1e-6);
}

#[test]
fn uniform_state_weight_is_half() {
    let grid = GridSpec::cell_centered(16.0, 512).unwrap();
    let amps = grid
        .points()
        .map(|x| Complex64::new(if x.abs() < 8.0 { 1.0 } else { 0.0 }, 0.0))
        .collect();
    let psi = GridWavefunction::new(grid, amps, 1.0, 1.0).unwrap();
    let t = tail_decompose(&psi, 4.0).unwrap();
    assert!((t.n_in.to_real() - 0.5).abs() < 1e-12);
    assert_eq!(
        overlap(t.in_state.as_ref().unwrap(), t.out_state.as_ref().unwrap()).unwrap(),
        Complex64::new(0.0, 0.0)
    );
}
