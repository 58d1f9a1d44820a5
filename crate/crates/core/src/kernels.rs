//! Model parameters, connection kernels, the power-law weight quantile and
//! closed-form evaluators for the tail bounds and growth envelopes.
//!
//! Everything here is a pure function of its arguments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the connection kernel applied to `x = λ (w_x w_y / |x-y|^d)^α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelVariant {
    /// `min{1, x}`
    #[default]
    #[serde(alias = "min")]
    MinForm,
    /// `1 - exp(-x)`
    #[serde(alias = "exp")]
    ExpForm,
}

/// Parameters shared by every connection kernel.
///
/// `tau = f64::INFINITY` is the long-range percolation limit (all weights 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub alpha: f64,
    pub tau: f64,
    pub lambda: f64,
    #[serde(default)]
    pub kernel: KernelVariant,
}

impl ModelParams {
    pub fn new(d: usize, alpha: f64, tau: f64, lambda: f64) -> Result<Self> {
        let p = ModelParams {
            d,
            alpha,
            tau,
            lambda,
            kernel: KernelVariant::MinForm,
        };
        p.validate()?;
        Ok(p)
    }

    /// Weightless parameters (`tau = ∞`).
    pub fn lrp(d: usize, alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(d, alpha, f64::INFINITY, lambda)
    }

    pub fn with_kernel(mut self, kernel: KernelVariant) -> Self {
        self.kernel = kernel;
        self
    }

    /// `alpha = 1` and `lambda = 0` are accepted as boundary cases.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::domain("dimension d must be at least 1"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 1.0) {
            return Err(Error::domain(format!(
                "alpha must be finite and >= 1, got {}",
                self.alpha
            )));
        }
        if !(self.tau > 1.0) {
            return Err(Error::domain(format!("tau must exceed 1, got {}", self.tau)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::domain(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn alpha_d(&self) -> f64 {
        self.alpha * self.d as f64
    }
}

/// Existential constants of the weighted graph-distance tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub beta_exp: f64,
    pub epsilon: f64,
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.c1) && positive(self.c2) && positive(self.beta_exp)) {
            return Err(Error::domain("c1, c2 and beta must be strictly positive"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::domain("epsilon must be nonnegative"));
        }
        Ok(())
    }
}

/// Parameters of the stretched-exponential envelope `G(t)` that solves the
/// self-bounding inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub theta: f64,
    pub beta_env: f64,
    pub lambda_env: f64,
    pub c_theta: f64,
    pub big_c: f64,
}

impl EnvelopeParams {
    /// The instantiation used for cost distances: `theta = 1/α`, `beta = αd + 1`.
    pub fn for_fpp(params: &ModelParams, lambda_env: f64, c_theta: f64, big_c: f64) -> Result<Self> {
        let ep = EnvelopeParams {
            theta: 1.0 / params.alpha,
            beta_env: params.alpha_d() + 1.0,
            lambda_env,
            c_theta,
            big_c,
        };
        ep.validate()?;
        Ok(ep)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.5 && self.theta < 1.0) {
            return Err(Error::domain(format!("theta must lie in (1/2, 1), got {}", self.theta)));
        }
        if !(self.beta_env >= 0.0) {
            return Err(Error::domain("envelope beta must be nonnegative"));
        }
        if !(self.lambda_env > 0.0) || !(self.big_c > 0.0) {
            return Err(Error::domain("envelope lambda and C must be positive"));
        }
        if !(self.c_theta > 1.0) {
            return Err(Error::domain("c_theta must exceed 1"));
        }
        Ok(())
    }
}

/// `Δ(β) = 1 / log₂(2/β)` for `β ∈ (0, 2)`.
pub fn delta_exponent(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::domain(format!("delta_exponent needs beta in (0, 2), got {beta}")));
    }
    Ok(1.0 / (2.0 / beta).log2())
}

/// The kernel argument `λ (w_x w_y / dist^d)^α` before clamping.
pub fn kernel_argument(wx: f64, wy: f64, dist: f64, params: &ModelParams) -> Result<f64> {
    if !(dist > 0.0) {
        return Err(Error::domain(format!("distance must be positive, got {dist}")));
    }
    if !(wx >= 1.0 && wy >= 1.0) {
        return Err(Error::domain(format!("weights must be >= 1, got {wx}, {wy}")));
    }
    let ratio = wx * wy / dist.powi(params.d as i32);
    Ok(params.lambda * ratio.powf(params.alpha))
}

/// Probability that two vertices with weights `wx`, `wy` at Euclidean
/// distance `dist` are joined by a long-range edge.
pub fn connection_prob(wx: f64, wy: f64, dist: f64, params: &ModelParams) -> Result<f64> {
    let x = kernel_argument(wx, wy, dist, params)?;
    Ok(clamp_kernel(x, params.kernel))
}

#[inline]
pub(crate) fn clamp_kernel(x: f64, kernel: KernelVariant) -> f64 {
    match kernel {
        KernelVariant::MinForm => x.min(1.0),
        KernelVariant::ExpForm => -(-x).exp_m1(),
    }
}

/// Inverse of the tail law `Pr[W >= z] = z^{1-τ}`, `z >= 1`.
pub fn pareto_quantile(u: f64, tau: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::domain(format!("pareto_quantile needs u in [0, 1), got {u}")));
    }
    if !(tau > 1.0) {
        return Err(Error::domain(format!("pareto_quantile needs tau > 1, got {tau}")));
    }
    Ok(pareto_quantile_unchecked(u, tau))
}

#[inline]
pub(crate) fn pareto_quantile_unchecked(u: f64, tau: f64) -> f64 {
    if tau.is_infinite() {
        return 1.0;
    }
    (1.0 - u).powf(-1.0 / (tau - 1.0))
}

/// Upper bound on `Pr[d_G(x, y) <= k]` in scale-free percolation:
/// `c₂⁻¹ dist^{-αd} (k+1)^{-β} exp(c₁ k^{1/Δ'})` with
/// `Δ' = Δ(min{α, τ-2-ε})`. The value may exceed one.
pub fn tail_bound_sfp(k: u32, dist: f64, bc: &BoundConstants, params: &ModelParams) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("tail_bound_sfp needs k >= 1"));
    }
    if !(dist >= 1.0) {
        return Err(Error::domain(format!("tail_bound_sfp needs dist >= 1, got {dist}")));
    }
    bc.validate()?;
    let delta = delta_exponent(params.alpha.min(params.tau - 2.0 - bc.epsilon))?;
    let kf = k as f64;
    Ok(dist.powf(-params.alpha_d()) * (kf + 1.0).powf(-bc.beta_exp) * (bc.c1 * kf.powf(1.0 / delta)).exp()
        / bc.c2)
}

/// Upper bound on `Pr[d_G(x, y) <= k]` in long-range percolation with small λ:
/// `dist^{-αd} exp(αd k^{1/Δ'})`, `Δ' = Δ(α) + eps`.
pub fn tail_bound_lrp(k: u32, dist: f64, eps: f64, params: &ModelParams) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("tail_bound_lrp needs k >= 1"));
    }
    if !(params.alpha > 1.0 && params.alpha < 2.0) {
        return Err(Error::domain(format!("tail_bound_lrp needs alpha in (1, 2), got {}", params.alpha)));
    }
    if !(eps > 0.0) {
        return Err(Error::domain("tail_bound_lrp needs eps > 0"));
    }
    if !(dist >= 1.0) {
        return Err(Error::domain(format!("tail_bound_lrp needs dist >= 1, got {dist}")));
    }
    let delta = delta_exponent(params.alpha)? + eps;
    let ad = params.alpha_d();
    Ok(dist.powf(-ad) * (ad * (k as f64).powf(1.0 / delta)).exp())
}

/// `Δ'' = Δ(min{α, (τ-1)/2} - ε)`, the exponent of the cost-distance tail
/// bound outside the regime `2α < τ - 1`.
pub fn delta_double_prime(params: &ModelParams, eps: f64) -> Result<f64> {
    delta_exponent(params.alpha.min((params.tau - 1.0) / 2.0) - eps)
}

/// Log of the cost-distance tail bound with `Δ = Δ(α)`; requires `2α < τ - 1`.
pub fn tail_bound_fpp_log(t: f64, dist: f64, c: f64, params: &ModelParams) -> Result<f64> {
    if !(2.0 * params.alpha < params.tau - 1.0) {
        return Err(Error::domain(
            "the Δ(α) form needs 2α < τ - 1; use tail_bound_fpp_log_with_delta",
        ));
    }
    tail_bound_fpp_log_with_delta(t, dist, c, delta_exponent(params.alpha)?, params)
}

/// `c (log(1+t))^{1-1/Δ} t^{1/Δ} - αd log(dist) + c` for a caller-supplied `Δ`.
pub fn tail_bound_fpp_log_with_delta(t: f64, dist: f64, c: f64, delta: f64, params: &ModelParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("cost threshold must be nonnegative, got {t}")));
    }
    if !(dist >= 1.0) {
        return Err(Error::domain(format!("dist must be >= 1, got {dist}")));
    }
    if !(c > 0.0) || !(delta > 0.0) {
        return Err(Error::domain("c and delta must be positive"));
    }
    let inv = 1.0 / delta;
    let growth = if t == 0.0 { 0.0 } else { t.ln_1p().powf(1.0 - inv) * t.powf(inv) };
    Ok(c * growth - params.alpha_d() * dist.ln() + c)
}

/// `log G(t) = c_θ (2λt)^{log₂(2θ)} (log(1 + t^β))^{log₂(1/θ)}`.
pub fn envelope_g_log(t: f64, ep: &EnvelopeParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("t must be nonnegative, got {t}")));
    }
    ep.validate()?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let outer = (2.0 * ep.lambda_env * t).powf((2.0 * ep.theta).log2());
    let inner = t.powf(ep.beta_env).ln_1p().powf((1.0 / ep.theta).log2());
    Ok(ep.c_theta * outer * inner)
}

/// Inner and outer radii `q(k) = exp(k^{1/Δ-ε})`, `r(k) = exp(k^{1/Δ+ε})`.
pub fn shape_radii(k: u32, delta: f64, eps: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::domain("shape_radii needs k >= 1"));
    }
    if !(delta > 0.0 && eps > 0.0) {
        return Err(Error::domain("delta and eps must be positive"));
    }
    let low = 1.0 / delta - eps;
    if low < 0.0 {
        return Err(Error::domain("1/delta - eps must be nonnegative"));
    }
    let kf = k as f64;
    Ok((kf.powf(low).exp(), kf.powf(1.0 / delta + eps).exp()))
}

/// Parameters of the denser model obtained by lowering α to `alpha_prime`
/// with `λ' = λ^{α'/α}`.
pub fn alpha_reduced_params(params: &ModelParams, alpha_prime: f64) -> Result<ModelParams> {
    params.validate()?;
    if !(alpha_prime > 1.0 && alpha_prime < params.alpha) {
        return Err(Error::domain(format!(
            "alpha_prime must lie in (1, {}), got {alpha_prime}",
            params.alpha
        )));
    }
    Ok(ModelParams {
        alpha: alpha_prime,
        lambda: params.lambda.powf(alpha_prime / params.alpha),
        ..*params
    })
}

/// Largest admissible aggregated-weight exponent `τ(1-α/2) + 3α/2`.
pub fn tau_prime_max(tau: f64, alpha: f64) -> Result<f64> {
    if !(tau > 3.0 && tau.is_finite()) {
        return Err(Error::domain(format!("tau_prime_max needs finite tau > 3, got {tau}")));
    }
    if !(alpha >= 1.0 && alpha < 2.0) {
        return Err(Error::domain(format!("tau_prime_max needs alpha in [1, 2), got {alpha}")));
    }
    Ok(tau * (1.0 - alpha / 2.0) + 1.5 * alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(d: usize, alpha: f64, tau: f64, lambda: f64) -> ModelParams {
        ModelParams::new(d, alpha, tau, lambda).unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_exponent(1.0).unwrap(), 1.0);
        assert!((delta_exponent(1.5).unwrap() - 2.4094).abs() < 1e-4);
        assert!((delta_exponent(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(delta_exponent(0.0).is_err());
        assert!(delta_exponent(2.0).is_err());
        assert!(delta_exponent(1.999_999).unwrap() > 1e5);
    }

    #[test]
    fn connection_prob_examples() {
        let lrp = ModelParams::lrp(1, 1.5, 0.5).unwrap();
        assert_eq!(connection_prob(1.0, 1.0, 1.0, &lrp).unwrap(), 0.5);
        assert_eq!(connection_prob(2.0, 2.0, 4.0, &p(1, 1.0, 3.0, 1.0)).unwrap(), 1.0);
        assert!((connection_prob(1.0, 1.0, 2.0, &p(1, 2.0, 3.0, 1.0)).unwrap() - 0.25).abs() < 1e-15);
        assert!(connection_prob(1.0, 1.0, 0.0, &lrp).is_err());
        assert!(connection_prob(0.5, 1.0, 1.0, &lrp).is_err());
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(pareto_quantile(0.0, 2.5).unwrap(), 1.0);
        assert!((pareto_quantile(0.99, 3.0).unwrap() - 10.0).abs() < 1e-9);
        assert!((pareto_quantile(0.5, 2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(pareto_quantile(1.0, 2.0).is_err());
        assert!(pareto_quantile(0.5, 1.0).is_err());
    }

    #[test]
    fn tail_bound_sfp_examples() {
        let params = p(1, 1.5, 4.0, 1.0);
        let bc = BoundConstants { c1: 1.0, c2: 1.0, beta_exp: 1.0, epsilon: 0.0 };
        let v = tail_bound_sfp(1, 2.0, &bc, &params).unwrap();
        assert!((v - 2f64.powf(-1.5) * 0.5 * std::f64::consts::E).abs() < 1e-12);
        assert!((v - 0.4805).abs() < 1e-3);
        assert!(tail_bound_sfp(1, 1e12, &bc, &params).unwrap() < 1e-15);
        let doubled = BoundConstants { c2: 2.0, ..bc };
        assert!((tail_bound_sfp(1, 2.0, &doubled, &params).unwrap() - v / 2.0).abs() < 1e-15);
        // min{α, τ-2-ε} = 0 is outside (0, 2)
        let bad = BoundConstants { epsilon: 2.0, ..bc };
        assert!(tail_bound_sfp(1, 2.0, &bad, &params).is_err());
    }

    #[test]
    fn tail_bound_lrp_examples() {
        let params = ModelParams::lrp(1, 1.5, 0.1).unwrap();
        let v = tail_bound_lrp(1, 1.0, 1e-9, &params).unwrap();
        assert!((v - 1.5f64.exp()).abs() < 1e-12);
        let k = 3;
        let a = tail_bound_lrp(k, 3f64.exp(), 0.1, &params).unwrap();
        let b = tail_bound_lrp(k, 4f64.exp(), 0.1, &params).unwrap();
        assert!(b < a);
        assert!(tail_bound_lrp(0, 2.0, 0.1, &params).is_err());
        assert!(tail_bound_lrp(1, 2.0, 0.1, &ModelParams::lrp(1, 2.0, 0.1).unwrap()).is_err());
    }

    #[test]
    fn tail_bound_fpp_examples() {
        let params = p(1, 1.0, 4.0, 1.0);
        assert!((tail_bound_fpp_log(0.0, 1.0, 1.0, &params).unwrap() - 1.0).abs() < 1e-15);
        assert!(tail_bound_fpp_log(0.0, std::f64::consts::E, 1.0, &params).unwrap().abs() < 1e-15);
        let a = tail_bound_fpp_log(1.3, 5.0, 0.7, &params).unwrap();
        let b = tail_bound_fpp_log(1.3, 10.0, 0.7, &params).unwrap();
        assert!((a - b - 2f64.ln()).abs() < 1e-12);
        assert!(tail_bound_fpp_log(-0.1, 1.0, 1.0, &params).is_err());
        // 2α = τ - 1 is not admissible for the Δ(α) form
        assert!(tail_bound_fpp_log(1.0, 1.0, 1.0, &p(1, 1.5, 4.0, 1.0)).is_err());
    }

    #[test]
    fn envelope_examples() {
        let params = p(1, 1.5, 5.0, 1.0);
        let ep = EnvelopeParams::for_fpp(&params, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(envelope_g_log(0.0, &ep).unwrap(), 0.0);
        // 2^{-1/Δ} = α/2 means log₂(2θ) = 1/Δ(α) at θ = 1/α
        let inv_delta = 1.0 / delta_exponent(params.alpha).unwrap();
        assert!(((2.0 * ep.theta).log2() - inv_delta).abs() < 1e-12);
        let mut last = 0.0;
        for i in 0..=20 {
            let v = envelope_g_log(i as f64 * 0.5, &ep).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn shape_radii_examples() {
        let (q, r) = shape_radii(16, 2.0, 0.5).unwrap();
        assert!((q - 1f64.exp()).abs() < 1e-12);
        assert!((r - 16f64.exp()).abs() < 1e-6);
        let (q, r) = shape_radii(1, 1.7, 0.2).unwrap();
        assert_eq!((q, r), (1f64.exp(), 1f64.exp()));
        for k in 1..40 {
            let (q, r) = shape_radii(k, 2.4, 0.1).unwrap();
            assert!(q <= r);
        }
        assert!(shape_radii(3, 2.0, 0.6).is_err());
    }

    #[test]
    fn alpha_reduction_examples() {
        let params = p(1, 2.0, 4.0, 0.04);
        let reduced = alpha_reduced_params(&params, 1.0 + 1e-9).unwrap();
        assert!((reduced.lambda - 0.2).abs() < 1e-9);
        assert_eq!(reduced.tau, 4.0);
        assert!(alpha_reduced_params(&params, 1.0).is_err());
        assert!(alpha_reduced_params(&params, 2.0).is_err());
        let unit = p(2, 1.8, 3.5, 1.0);
        assert_eq!(alpha_reduced_params(&unit, 1.3).unwrap().lambda, 1.0);
    }

    #[test]
    fn tau_prime_examples() {
        assert!((tau_prime_max(4.0, 1.0).unwrap() - 3.5).abs() < 1e-15);
        let v = tau_prime_max(3.01, 1.99).unwrap();
        assert!(v > 3.0 && v < 3.01);
        assert!(tau_prime_max(3.0, 1.5).is_err());
        assert!(tau_prime_max(4.0, 2.0).is_err());
    }

    #[test]
    fn sfp_base_case_dominates_kernel() {
        for &lambda in &[0.01, 0.3, 1.0, 5.0] {
            for &beta in &[0.5, 1.0, 3.0] {
                for &c2 in &[0.5, 1.0, 4.0] {
                    let params = p(1, 1.5, 4.0, lambda);
                    let c1 = (lambda * 2f64.powf(beta) * c2).ln().max(1e-3);
                    let bc = BoundConstants { c1, c2, beta_exp: beta, epsilon: 0.0 };
                    for &dist in &[1.0, 2.0, 7.5, 40.0] {
                        let bound = tail_bound_sfp(1, dist, &bc, &params).unwrap();
                        let prob = connection_prob(1.0, 1.0, dist, &params).unwrap();
                        assert!(bound >= prob * (1.0 - 1e-12), "λ={lambda} β={beta} c2={c2} dist={dist}");
                    }
                }
            }
        }
    }

    #[test]
    fn delta_prime_uses_alpha_when_smaller() {
        let eps = 0.1;
        for &(alpha, tau) in &[(1.2, 4.0), (1.5, 4.0), (1.9, 5.0)] {
            assert!(alpha < tau - 2.0 - eps);
            assert_eq!(
                delta_exponent(f64::min(alpha, tau - 2.0 - eps)).unwrap(),
                delta_exponent(alpha).unwrap()
            );
        }
    }

    proptest! {
        #[test]
        fn kernel_is_probability_and_monotone(
            wx in 1.0f64..50.0,
            wy in 1.0f64..50.0,
            dist in 1.0f64..500.0,
            alpha in 1.0f64..3.0,
            lambda in 0.0f64..4.0,
            d in 1usize..4,
            bump in 0.0f64..3.0,
        ) {
            for kernel in [KernelVariant::MinForm, KernelVariant::ExpForm] {
                let params = ModelParams::new(d, alpha, 3.5, lambda).unwrap().with_kernel(kernel);
                let base = connection_prob(wx, wy, dist, &params).unwrap();
                prop_assert!((0.0..=1.0).contains(&base));
                prop_assert!(connection_prob(wx, wy, dist + bump, &params).unwrap() <= base);
                prop_assert!(connection_prob(wx + bump, wy, dist, &params).unwrap() >= base);
                prop_assert!(connection_prob(wx, wy + bump, dist, &params).unwrap() >= base);
                let denser = ModelParams { lambda: lambda + bump, ..params };
                prop_assert!(connection_prob(wx, wy, dist, &denser).unwrap() >= base);
            }
            let min_form = ModelParams::new(d, alpha, 3.5, lambda).unwrap();
            let exp_form = min_form.with_kernel(KernelVariant::ExpForm);
            prop_assert!(
                connection_prob(wx, wy, dist, &min_form).unwrap()
                    >= connection_prob(wx, wy, dist, &exp_form).unwrap()
            );
        }

        #[test]
        fn alpha_reduction_dominates_pointwise(
            wx in 1.0f64..30.0,
            wy in 1.0f64..30.0,
            dist in 1.0f64..200.0,
            alpha in 1.05f64..2.5,
            frac in 0.01f64..0.99,
            lambda in 0.0f64..3.0,
            d in 1usize..3,
        ) {
            let params = ModelParams::new(d, alpha, 4.0, lambda).unwrap();
            let alpha_prime = 1.0 + frac * (alpha - 1.0);
            let reduced = alpha_reduced_params(&params, alpha_prime).unwrap();
            let before = connection_prob(wx, wy, dist, &params).unwrap();
            let after = connection_prob(wx, wy, dist, &reduced).unwrap();
            prop_assert!(after >= before * (1.0 - 1e-12));
        }

        #[test]
        fn delta_is_increasing(a in 0.01f64..1.98, gap in 0.001f64..0.01) {
            prop_assert!(delta_exponent(a + gap).unwrap() > delta_exponent(a).unwrap());
        }
    }
}
