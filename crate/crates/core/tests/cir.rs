mod common;

use common::*;
use dualfilter::cir::*;
use dualfilter::ObservationRecord;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reference_cir() -> CirParams {
    CirParams::new(11.0, 1.1, 1.0).unwrap()
}

#[test]
fn h_times_prior_is_posterior_gamma_density() {
    let p = reference_cir();
    let (a, b) = (p.alpha(), p.beta());
    for m in [0u32, 1, 3, 12] {
        for theta in [b, b + 1.0, b + 7.5] {
            for x in [0.05, 0.7, 3.0, 11.0] {
                let lhs = h_cir(x, m, theta, &p) * gamma_pdf(x, a, b);
                let rhs = gamma_pdf(x, a + m as f64, theta);
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * rhs.max(1e-300),
                    "m={m} θ={theta} x={x}: {lhs} vs {rhs}"
                );
            }
        }
    }
}

#[test]
fn marginal_with_exponential_kernel_is_one_half() {
    // δ/2 + m = 1 and θ = 1: ∫ e^{−x} e^{−x} dx = 1/2
    let p = CirParams::new(2.0, 0.5, 1.0).unwrap();
    let y = ObservationRecord::new(0.0, vec![0]);
    assert!((cir_marginal_likelihood(0, 1.0, &y, &p) - 0.5).abs() < 1e-14);
    let oracle = integrate(|x| (-x).exp() * (-x).exp(), 0.0, 60.0);
    assert!((oracle - 0.5).abs() < 1e-12);
}

#[test]
fn marginal_matches_quadrature() {
    let p = reference_cir();
    for (m, theta, ys) in [
        (0u32, p.beta(), vec![4u32]),
        (3, p.beta() + 2.0, vec![1, 0, 5]),
        (9, p.beta() + 1.0, vec![2]),
    ] {
        let y = ObservationRecord::new(0.0, ys.clone());
        let a = p.alpha() + m as f64;
        let oracle = integrate(
            |x| {
                gamma_pdf(x, a, theta)
                    * ys.iter()
                        .map(|&k| poisson_pmf(k, p.tau * x))
                        .product::<f64>()
            },
            0.0,
            80.0,
        );
        let got = cir_marginal_likelihood(m, theta, &y, &p);
        assert!((got - oracle).abs() < 1e-10 * oracle, "{got} vs {oracle}");
    }
}

#[test]
fn batch_likelihood_factorizes_sequentially() {
    let p = reference_cir();
    let (m, theta) = (2u32, p.beta() + 1.0);
    let joint = cir_marginal_likelihood(m, theta, &ObservationRecord::new(0.0, vec![3, 7]), &p);
    let y1 = ObservationRecord::new(0.0, vec![3]);
    let first = cir_marginal_likelihood(m, theta, &y1, &p);
    let (m1, t1) = cir_update(m, theta, &y1, &p);
    let second = cir_marginal_likelihood(m1, t1, &ObservationRecord::new(0.0, vec![7]), &p);
    assert!((joint - first * second).abs() < 1e-12 * joint.max(1e-300) + 1e-300);
}

#[test]
fn upward_jump_less_likely_above_stationary_ratio() {
    let p = reference_cir();
    let (a, b) = (p.alpha(), p.beta());
    for k in 1..4u32 {
        for m in 0..60u32 {
            let up = embedded_jump_prob(m, a, b, k);
            if m as f64 / k as f64 > a / b {
                assert!(up < 0.5, "m={m} k={k}: {up}");
            } else if m > 0 && (m as f64 / k as f64) < a / b {
                assert!(up > 0.5, "m={m} k={k}: {up}");
            }
        }
    }
}

#[test]
fn pure_death_theta_matches_runge_kutta() {
    let p = CirParams::new(11.0, 1.1, 1.0).unwrap();
    let (_, beta, s2) = cir_constants(11.0, 1.1, 1.0);
    let y = rk4(|_, y| [-2.0 * s2 * y[0] * (y[0] - beta)], [2.1], 0.1, 2000);
    assert!((pure_death_theta(0.1, 2.1, &p) - y[0]).abs() < 1e-9);
}

#[test]
fn survival_matches_integrated_death_rate() {
    let p = reference_cir();
    let consts = cir_constants(11.0, 1.1, 1.0);
    for (theta0, t) in [(2.1, 0.1), (p.beta() + 5.0, 0.7), (p.beta(), 2.0)] {
        // ds/du = −2σ²Θ s jointly with the Θ ODE
        let y = rk4(
            |_, y| {
                [
                    -2.0 * consts.2 * y[0] * (y[0] - consts.1),
                    -2.0 * consts.2 * y[0] * y[1],
                ]
            },
            [theta0, 1.0],
            t,
            4000,
        );
        assert!(
            (pure_death_survival(t, theta0, &p) - y[1]).abs() < 1e-10,
            "θ0={theta0} t={t}"
        );
    }
}

#[test]
fn pure_death_matches_inhomogeneous_gillespie() {
    let p = reference_cir();
    let consts = cir_constants(11.0, 1.1, 1.0);
    let (m, t, theta0) = (4u32, 0.05, p.beta() + 1.0);
    let path = theta_path(theta0, t, consts, 10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let emp = counts((0..100_000).map(|_| thinning_pure_death(m, t, &path, consts.2, &mut rng)));
    let pmf = pure_death_row(m, t, theta0, &p).into_iter().collect();
    let tv = tv_pmf(&emp, &pmf);
    assert!(tv < 0.02, "TV {tv}");
    assert!(pure_death_row(m, t, theta0, &p).len() <= m as usize + 1);
}

#[test]
fn bd_sampler_matches_gillespie_oracle() {
    let p = reference_cir();
    let consts = cir_constants(11.0, 1.1, 1.0);
    let theta = p.beta() + 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let linear =
        counts((0..100_000).map(|_| linear_bd_sample(4, 0.05, theta, &p, &mut rng).unwrap()));
    let oracle =
        counts((0..100_000).map(|_| gillespie_bd_oracle(4, 0.05, theta, consts, &mut rng)));
    let tv = tv_counts(&linear, &oracle);
    assert!(tv < 0.02, "TV {tv}");
}

#[test]
fn birth_death_rates_sum_identity() {
    let p = reference_cir();
    let (s2, b) = (p.sigma2(), p.beta());
    for m in [0u32, 1, 7, 40] {
        for theta in [b, b + 0.3, b + 4.0] {
            let (lambda, mu) = bd_rates(m, theta, &p).unwrap();
            let rhs = 2.0 * p.gamma * m as f64 + s2 * (p.delta + 4.0 * m as f64) * (theta - b);
            assert!((lambda + mu - rhs).abs() < 1e-10 * rhs.max(1.0));
        }
    }
}

#[test]
fn transition_converges_to_stationary_mean() {
    let p = reference_cir();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<f64> = (0..100_000)
        .map(|_| cir_transition_sample(7.0, 20.0, &p, &mut rng).unwrap())
        .collect();
    let (mean, se) = mean_se(&xs);
    assert!(
        (mean - p.stationary_mean()).abs() < 3.0 * se,
        "{mean} ± {se}"
    );
}

#[test]
fn transition_mean_matches_drift_solution() {
    let p = reference_cir();
    let (x, t) = (5.0, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let xs: Vec<f64> = (0..1_000_000)
        .map(|_| cir_transition_sample(x, t, &p, &mut rng).unwrap())
        .collect();
    let (mean, se) = mean_se(&xs);
    let e = (-2.0 * p.gamma * t).exp();
    let expected = x * e + p.stationary_mean() * (1.0 - e);
    assert!(
        (mean - expected).abs() < 3.0 * se,
        "{mean} vs {expected} ± {se}"
    );
}
