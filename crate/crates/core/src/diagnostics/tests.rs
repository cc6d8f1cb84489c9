use super::*;
use crate::model::InitialDensitySpec;
use crate::spectral::deposit_density;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn ens(positions: Vec<[f64; 3]>) -> ParticleEnsemble {
    let w = 1.0 / positions.len() as f64;
    ParticleEnsemble::new(positions, w, 0)
}

fn cosine_field(h: usize, l: f64) -> SpectralField {
    let mut f = SpectralField::zeros(h, l);
    for j in [[1, 0, 0], [-1, 0, 0]] {
        let k = f.flat_index_signed(j);
        f.coeffs_mut()[k] = Complex64::new(1.0, 0.0);
    }
    f
}

fn tiny_cfg() -> SimulationConfig {
    let mut c = SimulationConfig::paper_validation();
    c.modes_per_dim = 4;
    c.particles = 30;
    c.batch_size = 5;
    c.t_final = 4e-4;
    c
}

#[test]
fn empirical_cdf_cases() {
    let at_origin = ens(vec![[0.0; 3]; 5]);
    assert_eq!(empirical_cdf(&at_origin, &[0.0, 0.5, 2.0]), vec![1.0; 3]);
    let spread = ens(vec![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, -3.0]]);
    assert_eq!(
        empirical_cdf(&spread, &[0.5, 1.0, 2.5, 3.0]),
        vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]
    );
}

#[test]
fn empirical_cdf_of_ball_samples_is_cubic() {
    let mut c = SimulationConfig::paper_validation();
    c.particles = 200_000;
    let e = crate::model::sample_initial_particles(&c, &RngStream::new(4));
    let radii: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    for (s, f) in radii.iter().zip(empirical_cdf(&e, &radii)) {
        assert!((f - s.powi(3)).abs() < 0.005);
    }
}

#[test]
fn relative_cdf_error_cases() {
    assert_eq!(relative_cdf_error(&[0.2, 0.7], &[0.2, 0.7]).unwrap(), 0.0);
    assert_eq!(relative_cdf_error(&[0.3, 0.1], &[0.0, 0.0]).unwrap(), 0.0);
    let e = relative_cdf_error(&[0.1, 0.25, 1.0], &[0.0, 0.5, 1.0]).unwrap();
    assert!((e - 1.0 / 6.0).abs() < 1e-15);
    assert!(relative_cdf_error(&[0.1], &[0.1, 0.2]).is_err());
}

#[test]
fn coeff_error_cases() {
    let a = SpectralField::zeros(4, 2.0);
    assert_eq!(coeff_l2_error(&a, &a).unwrap(), 0.0);
    let mut b = a.clone();
    b.coeffs_mut()[5] = Complex64::new(3.0, 4.0);
    assert!((coeff_l2_error(&a, &b).unwrap() - 5.0).abs() < 1e-15);
    assert!(coeff_l2_error(&a, &SpectralField::zeros(6, 2.0)).is_err());
}

#[test]
fn loglog_fit_cases() {
    let dt = [1e-4, 2e-4, 4e-4, 8e-4];
    let fit = fit_loglog_slope(&dt, &dt.map(|d| 7.0 * d)).unwrap();
    assert!((fit.slope - 1.0).abs() < 1e-12 && fit.residual < 1e-12);
    assert!((fit.intercept - 7f64.ln()).abs() < 1e-12);
    let r = [100.0, 200.0, 400.0, 800.0, 1600.0];
    let fit = fit_loglog_slope(&r, &r.map(|v| 3.0 / v.sqrt())).unwrap();
    assert!((fit.slope + 0.5).abs() < 1e-12);
    assert!(fit_loglog_slope(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    assert!(fit_loglog_slope(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]).is_err());
}

#[test]
fn max_concentration_cases() {
    let mut dc = SpectralField::zeros(8, 4.0);
    dc.coeffs_mut()[0] = Complex64::new(2.0, 0.0);
    assert!((max_concentration(&dc) - 2.0).abs() < 1e-14);
    assert!((max_concentration(&cosine_field(8, 4.0)) - 2.0).abs() < 1e-14);
    assert_eq!(max_concentration(&SpectralField::zeros(8, 4.0)), 0.0);
}

#[test]
fn record_csv_and_slope() {
    let rec = ExperimentRecord::new(
        "t",
        "dt",
        vec![1.0, 2.0, 4.0],
        vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![4.0, 4.0]],
    )
    .unwrap();
    assert!((rec.slope().unwrap() - 1.0).abs() < 1e-12);
    let mut buf = Vec::new();
    rec.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "dt,mean_error,std_error,slope");
    assert_eq!(text.lines().count(), 4);
    let single = ExperimentRecord::new("t", "dt", vec![1.0], vec![vec![0.5]]).unwrap();
    assert!(single.fit.is_none());
    assert!(ExperimentRecord::new("t", "dt", vec![2.0, 1.0], vec![vec![1.0], vec![1.0]]).is_err());
}

#[test]
fn convergence_dt_single_value_and_divisibility() {
    let c = tiny_cfg();
    let opts = ConvergenceOptions {
        reference_dt: 1e-4,
        first_trial: 0,
    };
    let rec = convergence_dt_experiment(&c, &[2e-4], 1, &opts).unwrap();
    assert_eq!(rec.errors.len(), 1);
    assert!(rec.fit.is_none());
    assert!(rec.errors[0] > 0.0);
    assert!(convergence_dt_experiment(&c, &[3e-4], 1, &opts).is_err());
    let bad = ConvergenceOptions {
        reference_dt: 3e-5,
        first_trial: 0,
    };
    assert!(convergence_dt_experiment(&c, &[2e-4], 1, &bad).is_err());
}

#[test]
fn frozen_particles_leave_only_the_field_time_error() {
    // with chi = mu = 0 the particles never move, so every run deposits the
    // same density and a_N = (r rho_hat / Z)(1 - (1 + Z)^-N), r = dt/eps
    let mut c = tiny_cfg();
    c.chi = 0.0;
    c.mu = 0.0;
    let opts = ConvergenceOptions {
        reference_dt: 1e-4,
        first_trial: 0,
    };
    let dts = [1e-4, 2e-4, 4e-4];
    let rec = convergence_dt_experiment(&c, &dts, 2, &opts).unwrap();
    let closed = |x0: &ParticleEnsemble, dt: f64| {
        let rho = deposit_density(x0, c.modes_per_dim, c.domain_len);
        let n = (c.t_final / dt).round() as i32;
        let f0 = SpectralField::zeros(c.modes_per_dim, c.domain_len);
        (0..rho.len())
            .map(|k| {
                let z = dt / c.eps * (f0.omega_sq(k) + c.lambda * c.lambda);
                rho[k] * (dt / c.eps / z) * (1.0 - (1.0 + z).powi(-n))
            })
            .collect::<Vec<_>>()
    };
    for (i, &dt) in dts.iter().enumerate() {
        for t in 0..2 {
            let x0 = crate::model::sample_initial_particles(&c, &c.rng().for_trial(t));
            let (a, b) = (closed(&x0, dt), closed(&x0, opts.reference_dt));
            let e = a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
            assert!((rec.per_trial[i][t as usize] - e).abs() <= 1e-12 * e.max(1e-12));
        }
    }
    assert_eq!(rec.errors[0], 0.0);
}

#[test]
fn convergence_batch_checks_and_full_size_batch() {
    let c = tiny_cfg();
    let opts = ConvergenceOptions {
        reference_dt: c.dt,
        first_trial: 0,
    };
    assert!(convergence_batch_experiment(&c, &[5, 31], 1, &opts).is_err());
    let rec = convergence_batch_experiment(&c, &[30], 1, &opts).unwrap();
    assert!(rec.fit.is_none());
    assert!(rec.errors[0] > 0.0);
}

#[test]
fn blowup_classification_rules() {
    assert_eq!(classify_blowup(&[1.0, 1.1, 1.15], false).0, BlowupClass::Stable);
    assert_eq!(classify_blowup(&[1.0, 1.5, 2.5], false).0, BlowupClass::BlowupCandidate);
    assert_eq!(classify_blowup(&[1.0, 1.3, 1.5], false).0, BlowupClass::Indeterminate);
    assert_eq!(classify_blowup(&[1.0, 1.0], true).0, BlowupClass::BlowupCandidate);
}

#[test]
fn weak_coupling_scan_is_stable() {
    let mut c = tiny_cfg();
    c.particles = 200;
    c.batch_size = 20;
    let scan = blowup_scan(&c, &[0.1], &[8, 12, 16], 5e-4, &[2e-4]).unwrap();
    assert_eq!(scan.class_of(0.1), Some(BlowupClass::Stable));
    assert_eq!(scan.curves.len(), 3);
    assert_eq!(scan.curves[0].times.len(), 2);
    assert!(scan.curves.iter().all(|cv| cv.max_c.iter().all(|m| *m < 0.1)));
    assert!(blowup_scan(&c, &[], &[4], 5e-4, &[]).is_err());
}

#[test]
fn lipschitz_cases() {
    let l = 8.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<[f64; 3]> = (0..500)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-3.0..3.0)))
        .collect();
    let e = ens(pts);
    let mut dc = SpectralField::zeros(8, l);
    dc.coeffs_mut()[0] = Complex64::new(5.0, 0.0);
    assert_eq!(lipschitz_estimate(&dc, &e, 100, &RngStream::new(1)).unwrap(), 0.0);

    let f = cosine_field(8, l);
    let est = lipschitz_estimate(&f, &e, 1000, &RngStream::new(1)).unwrap();
    let bound = 2.0 * (2.0 * PI / l).powi(2);
    assert!(est > 0.0 && est <= bound * (1.0 + 1e-12));

    let mut shifted = f.clone();
    shifted.coeffs_mut()[0] = Complex64::new(-3.0, 0.0);
    assert_eq!(est, lipschitz_estimate(&shifted, &e, 1000, &RngStream::new(1)).unwrap());

    assert!(lipschitz_estimate(&f, &ens(vec![[0.5; 3]; 4]), 10, &RngStream::new(1)).is_err());
}

#[test]
fn validation_rejects_non_radial_configs() {
    let mut c = SimulationConfig::paper_validation();
    c.init_rho = InitialDensitySpec::TwoSpheres {
        centers: [[0.6, 0.0, 0.0], [-0.6, 0.0, 0.0]],
        radius: 0.5,
        mass_split: 0.5,
    };
    assert!(validation_experiment(&c, 100, 1e-4, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relative_error_is_nonnegative(a in prop::collection::vec(0.0f64..1.0, 1..20), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.01..1.0) }).collect();
        let e = relative_cdf_error(&a, &b).unwrap();
        prop_assert!(e >= 0.0);
        let agree = a.iter().zip(&b).all(|(x, y)| *y == 0.0 || x == y);
        prop_assert_eq!(e == 0.0, agree);
    }

    #[test]
    fn coefficient_error_obeys_triangle_inequality(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = || {
            let mut f = SpectralField::zeros(4, 1.0);
            for a in f.coeffs_mut() {
                *a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            f
        };
        let (x, y, z) = (make(), make(), make());
        let lhs = coeff_l2_error(&x, &z).unwrap();
        let rhs = coeff_l2_error(&x, &y).unwrap() + coeff_l2_error(&y, &z).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn slope_fit_recovers_power_laws(k in -2.0f64..2.0, a in 0.01f64..100.0) {
        let x = [0.1, 0.3, 1.0, 2.0, 7.0];
        let fit = fit_loglog_slope(&x, &x.map(|v| a * v.powf(k))).unwrap();
        prop_assert!((fit.slope - k).abs() < 1e-12);
    }

    #[test]
    fn blowup_class_is_scale_invariant(v in prop::collection::vec(0.1f64..10.0, 2..5), s in 0.01f64..100.0) {
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        prop_assert_eq!(classify_blowup(&v, false).0, classify_blowup(&scaled, false).0);
    }
}
