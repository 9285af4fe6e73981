//! DDPM engine shared by the four generative sub-models: the variance
//! schedule, forward noising, clean-signal-prediction training loss,
//! posterior sampling, and the conditioned transformer denoiser with an
//! optional sequence-length head.

mod condition;
mod denoiser;

pub use condition::{CondBatch, ConditionSet};
pub use denoiser::{train_step, DenoiserConfig, DenoiserTransformer, LengthMode};

use crate::nn::NnError;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("beta range must satisfy 0 < start <= end < 1, got {start}..{end}")]
    BadBetaRange { start: f64, end: f64 },
    #[error("timestep {t} outside [1, {t_max}]")]
    TimestepOutOfRange { t: usize, t_max: usize },
    #[error("sample length must be positive")]
    BadLength,
    #[error("length {n} outside [1, {n_max}]")]
    LengthOutOfRange { n: usize, n_max: usize },
    #[error("model has no length head")]
    NoLengthHead,
    #[error("non-finite loss at step {0}")]
    NanLoss(u64),
    #[error("condition mismatch: {0}")]
    ConditionMismatch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Variance schedule: betas, alphas and their running product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

/// Linear beta schedule over `t_max` steps.
pub fn make_schedule(
    t_max: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<DiffusionSchedule, DiffusionError> {
    if t_max == 0 || beta_start <= 0.0 || beta_end < beta_start || beta_end >= 1.0 {
        return Err(DiffusionError::BadBetaRange {
            start: beta_start,
            end: beta_end,
        });
    }
    let mut betas = Vec::with_capacity(t_max);
    for i in 0..t_max {
        let frac = if t_max == 1 {
            0.0
        } else {
            i as f64 / (t_max - 1) as f64
        };
        betas.push(beta_start + frac * (beta_end - beta_start));
    }
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(t_max);
    let mut prod = 1.0;
    for a in &alphas {
        prod *= a;
        alpha_bars.push(prod);
    }
    Ok(DiffusionSchedule {
        betas,
        alphas,
        alpha_bars,
    })
}

impl DiffusionSchedule {
    pub fn t_max(&self) -> usize {
        self.betas.len()
    }

    fn check_t(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.t_max() {
            return Err(DiffusionError::TimestepOutOfRange {
                t,
                t_max: self.t_max(),
            });
        }
        Ok(())
    }

    /// ᾱ_t for t in [1, T].
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// ᾱ_{t-1}, with ᾱ_0 = 1.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t <= 1 {
            1.0
        } else {
            self.alpha_bars[t - 2]
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn terminal_alpha_bar(&self) -> f64 {
        *self.alpha_bars.last().expect("non-empty schedule")
    }

    /// Whether the terminal marginal is close enough to pure noise for
    /// training (ᾱ_T < 0.05).
    pub fn is_terminal_noisy(&self) -> bool {
        self.terminal_alpha_bar() < 0.05
    }

    /// Coefficient of the predicted clean signal in the posterior mean.
    pub fn posterior_coef_x0(&self, t: usize) -> f64 {
        self.alpha_bar_prev(t).sqrt() * self.beta(t) / (1.0 - self.alpha_bar(t))
    }

    /// Coefficient of the current noisy signal in the posterior mean.
    pub fn posterior_coef_xt(&self, t: usize) -> f64 {
        self.alpha(t).sqrt() * (1.0 - self.alpha_bar_prev(t)) / (1.0 - self.alpha_bar(t))
    }

    /// Posterior variance β̃_t.
    pub fn posterior_var(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar_prev(t)) / (1.0 - self.alpha_bar(t)) * self.beta(t)
    }
}

/// Forward process marginal: x_t = √ᾱ_t·x0 + √(1-ᾱ_t)·ε.
pub fn q_sample(
    x0: &Array2<f64>,
    t: usize,
    eps: &Array2<f64>,
    sched: &DiffusionSchedule,
) -> Result<Array2<f64>, DiffusionError> {
    sched.check_t(t)?;
    if x0.shape() != eps.shape() {
        return Err(DiffusionError::ConditionMismatch(format!(
            "q_sample: x0 {:?} vs eps {:?}",
            x0.shape(),
            eps.shape()
        )));
    }
    let ab = sched.alpha_bar(t);
    Ok(x0 * ab.sqrt() + eps * (1.0 - ab).sqrt())
}

/// One reverse step: a sample from q(x_{t-1} | x_t, x̂0). Deterministic
/// (the posterior mean) at t = 1.
pub fn posterior_step(
    x_t: &Array2<f64>,
    xhat0: &Array2<f64>,
    t: usize,
    sched: &DiffusionSchedule,
    rng: &mut impl Rng,
) -> Result<Array2<f64>, DiffusionError> {
    sched.check_t(t)?;
    let mean = xhat0 * sched.posterior_coef_x0(t) + x_t * sched.posterior_coef_xt(t);
    if t == 1 {
        return Ok(mean);
    }
    let std = sched.posterior_var(t).sqrt();
    let noise = Array2::from_shape_fn(x_t.dim(), |_| {
        rng.sample::<f64, _>(rand_distr::StandardNormal) * std
    });
    Ok(mean + noise)
}

/// Full reverse chain from Gaussian noise, with the denoiser supplied as a
/// closure from (x_t, t) to the predicted clean signal.
pub fn sample_with<P>(
    mut predict: P,
    length: usize,
    data_dim: usize,
    sched: &DiffusionSchedule,
    rng: &mut impl Rng,
) -> Result<Array2<f64>, DiffusionError>
where
    P: FnMut(&Array2<f64>, usize) -> Array2<f64>,
{
    if length == 0 {
        return Err(DiffusionError::BadLength);
    }
    let mut x = Array2::from_shape_fn((length, data_dim), |_| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let mut xhat = Array2::zeros((length, data_dim));
    for t in (1..=sched.t_max()).rev() {
        xhat = predict(&x, t);
        x = posterior_step(&x, &xhat, t, sched, rng)?;
    }
    // After the final (deterministic) step x is the posterior mean at t=1;
    // return the model's clean-signal prediction convention: the t=1
    // posterior mean equals x̂0 exactly since ᾱ_0 = 1.
    let _ = xhat;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    #[test]
    fn single_step_schedule() {
        let s = make_schedule(1, 0.5, 0.5).unwrap();
        assert_abs_diff_eq!(s.alpha_bar(1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn tiny_betas_give_alpha_bar_near_one() {
        let s = make_schedule(50, 1e-9, 1e-9).unwrap();
        assert!(s.terminal_alpha_bar() > 1.0 - 1e-6);
    }

    #[test]
    fn alpha_bar_matches_direct_product() {
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        let mut prod = 1.0f64;
        for t in 1..=100 {
            prod *= 1.0 - s.beta(t);
        }
        assert_abs_diff_eq!(s.alpha_bar(100), prod, epsilon = 1e-15);
        // strictly decreasing
        for t in 2..=100 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
    }

    #[test]
    fn default_training_schedule_is_terminal_noisy() {
        // The training default must satisfy the ᾱ_T < 0.05 invariant.
        let s = make_schedule(100, 1e-4, 0.07).unwrap();
        assert!(s.is_terminal_noisy(), "ᾱ_T = {}", s.terminal_alpha_bar());
        // The exploratory 0.02 end is constructible but not terminal-noisy.
        let loose = make_schedule(100, 1e-4, 0.02).unwrap();
        assert!(!loose.is_terminal_noisy());
    }

    #[test]
    fn bad_ranges_are_rejected() {
        assert!(make_schedule(10, 0.0, 0.5).is_err());
        assert!(make_schedule(10, 0.5, 0.2).is_err());
        assert!(make_schedule(10, 0.1, 1.0).is_err());
        assert!(make_schedule(0, 0.1, 0.2).is_err());
    }

    #[test]
    fn q_sample_limit_cases() {
        let s = make_schedule(10, 1e-9, 1e-9).unwrap();
        let x0 = arr2(&[[1.0, -2.0], [0.5, 3.0]]);
        let eps = arr2(&[[0.3, 0.1], [-0.2, 0.4]]);
        // ᾱ close to 1: x_t ≈ x0
        let xt = q_sample(&x0, 10, &eps, &s).unwrap();
        for (a, b) in xt.iter().zip(x0.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-4);
        }
        // x0 = 0: x_t = √(1-ᾱ)·ε
        let s = make_schedule(10, 0.2, 0.2).unwrap();
        let zero = Array2::zeros((2, 2));
        let xt = q_sample(&zero, 3, &eps, &s).unwrap();
        let scale = (1.0 - s.alpha_bar(3)).sqrt();
        for (a, e) in xt.iter().zip(eps.iter()) {
            assert_abs_diff_eq!(*a, *e * scale, epsilon = 1e-12);
        }
        assert!(q_sample(&x0, 0, &eps, &s).is_err());
        assert!(q_sample(&x0, 11, &eps, &s).is_err());
    }

    #[test]
    fn q_sample_monte_carlo_moments() {
        let s = make_schedule(100, 1e-4, 0.07).unwrap();
        let x0 = arr2(&[[1.7]]);
        let mut rng = crate::rng::stream_rng(61, "diffusion/mc");
        let t = 50;
        let n = 20_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let eps = Array2::from_shape_fn((1, 1), |_| {
                use rand::Rng;
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            let xt = q_sample(&x0, t, &eps, &s).unwrap();
            sum += xt[[0, 0]];
            sumsq += xt[[0, 0]] * xt[[0, 0]];
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let expect_mean = s.alpha_bar(t).sqrt() * 1.7;
        let expect_var = 1.0 - s.alpha_bar(t);
        let se_mean = expect_var.sqrt() / (n as f64).sqrt();
        let se_var = expect_var * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((mean - expect_mean).abs() < 3.0 * se_mean);
        assert!((var - expect_var).abs() < 3.0 * se_var);
    }

    #[test]
    fn posterior_step_no_noise_at_t1_and_fixed_point() {
        let s = make_schedule(10, 1e-3, 0.05).unwrap();
        let mut rng = crate::rng::stream_rng(62, "diffusion/posterior");
        let x = arr2(&[[0.4, -0.6]]);
        let xhat = arr2(&[[0.1, 0.2]]);
        let a = posterior_step(&x, &xhat, 1, &s, &mut rng).unwrap();
        let b = posterior_step(&x, &xhat, 1, &s, &mut rng).unwrap();
        assert_eq!(a, b); // deterministic at t = 1

        // If x̂0 = x_t and ᾱ_{t-1} = ᾱ_t the mean is x_t itself. With a
        // degenerate two-step constant schedule the coefficients still sum to
        // nearly 1 when β is tiny; verify the algebra explicitly instead.
        let t = 5;
        let c0 = s.posterior_coef_x0(t);
        let ct = s.posterior_coef_xt(t);
        let ab = s.alpha_bar(t);
        let abp = s.alpha_bar_prev(t);
        // algebraic identity: c0·√ᾱ_t + ct = ... evaluates so that a
        // noiseless signal is preserved: c0·x + ct·x = x when ᾱ_{t-1} = ᾱ_t
        let synthetic = c0 + ct;
        let expected = (abp.sqrt() * s.beta(t) + s.alpha(t).sqrt() * (1.0 - abp)) / (1.0 - ab);
        assert_abs_diff_eq!(synthetic, expected, epsilon = 1e-12);
    }

    #[test]
    fn posterior_coefficients_match_independent_bayes_route() {
        // Independent derivation: q(x_{t-1} | x_t, x0) is the product of the
        // Gaussians q(x_t | x_{t-1}) and q(x_{t-1} | x0); combine precisions.
        let s = make_schedule(10, 1e-3, 0.08).unwrap();
        for t in 1..=10usize {
            let alpha = s.alpha(t);
            let beta = s.beta(t);
            let abp = s.alpha_bar_prev(t);
            let lam = alpha / beta + 1.0 / (1.0 - abp).max(1e-300);
            let coef_xt = (alpha.sqrt() / beta) / lam;
            let coef_x0 = (abp.sqrt() / (1.0 - abp).max(1e-300)) / lam;
            let var = 1.0 / lam;
            if t == 1 {
                // ᾱ_0 = 1 makes the prior on x_0 a delta; the closed forms
                // below are the limits: mean = x̂0 exactly.
                assert_abs_diff_eq!(s.posterior_coef_x0(1), 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(s.posterior_coef_xt(1), 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(s.posterior_var(1), 0.0, epsilon = 1e-12);
                continue;
            }
            assert_abs_diff_eq!(s.posterior_coef_xt(t), coef_xt, epsilon = 1e-10);
            assert_abs_diff_eq!(s.posterior_coef_x0(t), coef_x0, epsilon = 1e-10);
            assert_abs_diff_eq!(s.posterior_var(t), var, epsilon = 1e-10);
        }
    }

    #[test]
    fn sample_with_is_deterministic_given_seed() {
        let s = make_schedule(20, 1e-3, 0.1).unwrap();
        let run = |seed: u64| {
            let mut rng = crate::rng::stream_rng(seed, "diffusion/sample");
            sample_with(|x, _t| x.clone() * 0.5, 3, 4, &s, &mut rng).unwrap()
        };
        let a = run(7);
        let b = run(7);
        let c = run(8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.shape(), &[3, 4]);
        for len in [1usize, 7, 61] {
            let mut rng = crate::rng::stream_rng(9, "diffusion/shape");
            let out = sample_with(|x, _| x.clone(), len, 5, &s, &mut rng).unwrap();
            assert_eq!(out.shape(), &[len, 5]);
        }
        let mut rng = crate::rng::stream_rng(9, "diffusion/zero");
        assert!(sample_with(|x, _| x.clone(), 0, 5, &s, &mut rng).is_err());
    }
}
