//! Closed-form quantities checked against sampling estimators.

use pvgae_core::model::GaussianPosterior;
use pvgae_core::numerics::Tape;
use pvgae_core::objectives::{gaussian_kl, independence_penalty, kl_to_standard_normal, mutual_info_gaussian};
use pvgae_core::{RandomSource, Tensor};
use proptest::prelude::*;

const SAMPLES: usize = 1_000_000;

fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

/// Monte-Carlo estimate of `KL[N(m, v) ‖ N(0, 1)]`.
fn mc_kl(mean: f64, var: f64, rng: &mut RandomSource) -> f64 {
    let sd = var.sqrt();
    let total: f64 = (0..SAMPLES)
        .map(|_| {
            let x = mean + sd * rng.normal();
            ln_normal_pdf(x, mean, var) - ln_normal_pdf(x, 0.0, 1.0)
        })
        .sum();
    total / SAMPLES as f64
}

fn tape_kl(means: &[f64], vars: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let n = means.len();
    let mean = tape.constant(Tensor::new(vec![n, 1], means.to_vec()).unwrap());
    let logvar = tape.constant(Tensor::new(vec![n, 1], vars.iter().map(|v| v.ln()).collect()).unwrap());
    let kl = gaussian_kl(&mut tape, GaussianPosterior { mean, logvar }).unwrap();
    tape.scalar(kl).unwrap()
}

fn penalty(zx: &Tensor, zs: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let (x, s) = (tape.constant(zx.clone()), tape.constant(zs.clone()));
    let (p, _) = independence_penalty(&mut tape, x, s).unwrap();
    tape.scalar(p).unwrap()
}

/// `d` columns of `(z_x, z_s)` pairs with standard-normal marginals and correlation `rho`.
fn correlated_latents(n: usize, d: usize, rho: f64, rng: &mut RandomSource) -> (Tensor, Tensor) {
    let mut zx = Tensor::zeros(&[n, d]);
    let mut zs = Tensor::zeros(&[n, d]);
    let c = (1.0 - rho * rho).sqrt();
    for i in 0..n {
        for j in 0..d {
            let x = rng.normal();
            zx.set(i, j, x);
            zs.set(i, j, rho * x + c * rng.normal());
        }
    }
    (zx, zs)
}

#[test]
fn gaussian_kl_matches_monte_carlo() {
    let mut rng = RandomSource::new(1);
    for &(m, v) in &[(0.0, 1.0), (1.0, 1.0), (0.5, 0.25), (-1.5, 2.0), (0.3, 0.05)] {
        let est = mc_kl(m, v, &mut rng);
        let closed = tape_kl(&[m], &[v]);
        assert!((est - closed).abs() < 2e-2, "m={m} v={v}: {est} vs {closed}");
        assert!((closed - kl_to_standard_normal(m, v)).abs() < 1e-12);
    }
}

#[test]
fn penalty_equals_kl_of_the_auxiliary_moments() {
    // With z_x = z_s = a/√2 the auxiliary variable is exactly `a`, so the
    // penalty is the KL of a Gaussian with a's batch moments.
    let mut rng = RandomSource::new(2);
    for &(m, v) in &[(0.0f64, 1.0f64), (0.8, 0.5), (-0.4, 2.5)] {
        let n = 20_000;
        let a: Vec<f64> = (0..n).map(|_| m + v.sqrt() * rng.normal()).collect();
        let half = Tensor::new(vec![n, 1], a.iter().map(|x| x / 2f64.sqrt()).collect()).unwrap();
        let p = penalty(&half, &half);
        let est = mc_kl(m, v, &mut rng);
        assert!((p - est).abs() < 2e-2, "m={m} v={v}: {p} vs {est}");
    }
}

/// Plug-in mutual information over equal-frequency bins of each marginal.
fn binned_mi(rho: f64, bins: usize, rng: &mut RandomSource) -> f64 {
    let c = (1.0 - rho * rho).sqrt();
    let pairs: Vec<(f64, f64)> = (0..SAMPLES)
        .map(|_| {
            let x = rng.normal();
            (x, rho * x + c * rng.normal())
        })
        .collect();
    let ranks = |key: &dyn Fn(&(f64, f64)) -> f64| {
        let mut idx: Vec<usize> = (0..SAMPLES).collect();
        idx.sort_by(|&i, &j| key(&pairs[i]).total_cmp(&key(&pairs[j])));
        let mut bin = vec![0usize; SAMPLES];
        for (r, &i) in idx.iter().enumerate() {
            bin[i] = r * bins / SAMPLES;
        }
        bin
    };
    let bx = ranks(&|p| p.0);
    let by = ranks(&|p| p.1);
    let mut joint = vec![0usize; bins * bins];
    for i in 0..SAMPLES {
        joint[bx[i] * bins + by[i]] += 1;
    }
    let n = SAMPLES as f64;
    let marginal = 1.0 / bins as f64;
    joint
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * (p / (marginal * marginal)).ln()
        })
        .sum()
}

#[test]
fn mutual_information_matches_binned_estimate() {
    let mut rng = RandomSource::new(3);
    for &rho in &[0.0, 0.5, 0.8] {
        let est = binned_mi(rho, 40, &mut rng);
        let closed = mutual_info_gaussian(rho).unwrap();
        assert!((est - closed).abs() < 0.03, "rho={rho}: {est} vs {closed}");
    }
}

#[test]
fn penalty_grows_with_correlation_magnitude() {
    for sign in [1.0, -1.0] {
        let means: Vec<f64> = [0.0, 0.3, 0.6, 0.9]
            .iter()
            .map(|&r| {
                (0..5)
                    .map(|seed| {
                        let (zx, zs) = correlated_latents(10_000, 1, sign * r, &mut RandomSource::new(seed));
                        penalty(&zx, &zs)
                    })
                    .sum::<f64>()
                    / 5.0
            })
            .collect();
        assert!(means[0] < 1e-3, "{means:?}");
        assert!(means.windows(2).all(|w| w[0] < w[1]), "sign {sign}: {means:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_the_prior(
        m in -3.0f64..3.0,
        v in 0.01f64..5.0,
    ) {
        let k = tape_kl(&[m, 0.0], &[v, 1.0]);
        prop_assert!(k >= 0.0);
        if m.abs() > 1e-3 || (v - 1.0).abs() > 1e-3 {
            prop_assert!(k > 0.0);
        }
        prop_assert_eq!(tape_kl(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn penalty_is_invariant_under_node_permutation(seed in 0u64..500, rho in -0.95f64..0.95) {
        let mut rng = RandomSource::new(seed);
        let (zx, zs) = correlated_latents(40, 3, rho, &mut rng);
        let perm = rng.permutation(40);
        let p = penalty(&zx, &zs);
        let q = penalty(&zx.select_rows(&perm), &zs.select_rows(&perm));
        prop_assert!((p - q).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_is_increasing_in_rho_squared(a in 0.0f64..0.999, b in 0.0f64..0.999) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(mutual_info_gaussian(lo).unwrap() < mutual_info_gaussian(-hi).unwrap());
    }
}

#[test]
fn mutual_information_diverges_near_unit_correlation() {
    assert!(mutual_info_gaussian(0.999_999).unwrap() > 6.0);
    assert!(mutual_info_gaussian(1.0).is_err());
}
