//! Trigger thresholds and the analytical guarantee constants.
//!
//! Delay-free chain (K-family): K₁, K₂ feed
//! `K₃ = ‖cBF‖(K₁e^{(λ−λ̂)t_k}/(‖A‖+λ̂) + K₂/(‖A‖+λ))` and the inter-event
//! bound `τ = ln(1 + β/K₃)/(‖A‖+λ̂)`. The delayed chain (H-family) is the
//! same formulas with β replaced by the delay-envelope amplitude γ, and adds
//! the admissible delay `ε = ln((γ+H₃)/(β+H₃))/(‖A‖+λ̂)`.
//!
//! K₁ may be negative when the initial transformed state is small; guarantee
//! evaluation uses |K₁|, which only loosens the bound chain (the exact
//! signed value is reported alongside for comparison).

use serde::{Deserialize, Serialize};

use crate::design::{ControllerDesign, DecayCertificate};
use crate::dynamics::LtiDynamics;
use crate::error::{Error, Result};
use crate::linalg::{C64, RVector, complexify, spectral_norm, spectral_norm_real};
use crate::spectral::SpectralDecomposition;

/// Threshold parameters of the event trigger ‖e_i(t)‖ = β e^{−λt}.
///
/// Heterogeneous per-agent thresholds (βᵢ, λᵢ) reduce to β = maxᵢ βᵢ and
/// λ = minᵢ λᵢ for every bound in this module; the simulator applies the
/// per-agent values directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerParams {
    pub beta: f64,
    pub lambda: f64,
    /// Delay-envelope amplitude γ > β; required only in delayed scenarios.
    pub gamma: Option<f64>,
}

impl TriggerParams {
    pub fn new(beta: f64, lambda: f64, gamma: Option<f64>) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParams(format!("beta must be > 0, got {beta}")));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidParams(format!(
                "lambda must be > 0, got {lambda}"
            )));
        }
        if let Some(g) = gamma {
            if !(g > beta) {
                return Err(Error::InvalidParams(format!(
                    "gamma must exceed beta ({beta}), got {g}"
                )));
            }
        }
        Ok(Self { beta, lambda, gamma })
    }

    /// Reduction of per-agent thresholds: β = max βᵢ, λ = min λᵢ.
    pub fn from_per_agent(per_agent: &[(f64, f64)], gamma: Option<f64>) -> Result<Self> {
        if per_agent.is_empty() {
            return Err(Error::InvalidParams("no per-agent thresholds given".into()));
        }
        for &(b, l) in per_agent {
            if !(b > 0.0) || !(l > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "per-agent thresholds must be positive, got ({b}, {l})"
                )));
            }
        }
        let beta = per_agent.iter().map(|p| p.0).fold(f64::MIN, f64::max);
        let lambda = per_agent.iter().map(|p| p.1).fold(f64::MAX, f64::min);
        Self::new(beta, lambda, gamma)
    }

    pub fn gamma(&self) -> Result<f64> {
        self.gamma.ok_or_else(|| {
            Error::InvalidParams("gamma is required for delayed-scenario bounds".into())
        })
    }

    /// Check 0 < λ < λ̂ against a certificate.
    pub fn check_against(&self, certificate: &DecayCertificate) -> Result<()> {
        if self.lambda >= certificate.lambda_hat {
            return Err(Error::InvalidParams(format!(
                "lambda = {} must be below lambda_hat = {}",
                self.lambda, certificate.lambda_hat
            )));
        }
        Ok(())
    }
}

/// β e^{−λ t}.
pub fn threshold(params: &TriggerParams, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidParams(format!("threshold time must be ≥ 0, got {t}")));
    }
    Ok(params.beta * (-params.lambda * t).exp())
}

/// All scalar constants entering the bound chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Θ̂ = ‖Θ‖ with Θ = S_L·[0ᵀ; J_{2:N}].
    pub theta_hat: f64,
    /// ‖B̂‖ with B̂ = c·Δ⊗BF, Δ = [0  J_{2:N}]·S_L⁻¹.
    pub b_hat_norm: f64,
    /// ‖x̂_{2:N}(0)‖ for the configured initial state.
    pub x_hat_0: f64,
    /// Signed K₁ (may be negative); |K₁| is used in K₃.
    pub k1: f64,
    pub k2: f64,
    /// H-family: the K-formulas with β replaced by γ; present when γ is set.
    pub h1: Option<f64>,
    pub h2: Option<f64>,
    /// ‖cBF‖.
    pub cbf_norm: f64,
    /// ‖L‖ (spectral).
    pub l_norm: f64,
    /// ‖A‖ (spectral).
    pub a_norm: f64,
    pub n_agents: usize,
}

/// One amplitude family: (first, second) = (Θ̂(β̂x̂₀ − √N·amp·β̂‖B̂‖/(λ̂−λ)),
/// Θ̂·√N·amp·β̂‖B̂‖/(λ̂−λ) + ‖L‖√N·amp).
///
/// Shared verbatim by the K- (amp = β) and H- (amp = γ) families so the two
/// are bit-identical by construction.
fn amplitude_family(
    amp: f64,
    theta_hat: f64,
    b_hat_norm: f64,
    x_hat_0: f64,
    l_norm: f64,
    sqrt_n: f64,
    certificate: &DecayCertificate,
    lambda: f64,
) -> (f64, f64) {
    let drive = sqrt_n * amp * certificate.beta_hat * b_hat_norm
        / (certificate.lambda_hat - lambda);
    let first = theta_hat * (certificate.beta_hat * x_hat_0 - drive);
    let second = theta_hat * drive + l_norm * sqrt_n * amp;
    (first, second)
}

/// Evaluate every constant of the bound chains for a concrete design,
/// certificate, graph decomposition, trigger parameters and initial state.
pub fn bound_constants(
    design: &ControllerDesign,
    certificate: &DecayCertificate,
    spec: &SpectralDecomposition,
    params: &TriggerParams,
    x0: &RVector,
    dynamics: &LtiDynamics,
) -> Result<BoundConstants> {
    params.check_against(certificate)?;
    let n_agents = spec.n_agents();
    let n = dynamics.n();
    if x0.len() != n_agents * n {
        return Err(Error::DimensionMismatch {
            what: "bound_constants x0",
            expected: format!("{}", n_agents * n),
            got: format!("{}", x0.len()),
        });
    }

    let theta_hat = spectral_norm(&spec.theta());
    let bf = complexify(&(dynamics.b() * &design.f_gain));
    let b_hat = (spec.delta() * C64::new(design.c_gain, 0.0)).kronecker(&bf);
    let b_hat_norm = spectral_norm(&b_hat);
    let x_hat_0 = spec.tail_norm(x0, n);
    let cbf_norm = design.c_gain * spectral_norm(&bf);
    // ‖L‖ = ‖S_L L_J S_Lᴴ‖ = ‖L_J‖ by unitary invariance.
    let l_norm = spectral_norm(&spec.l_reduced);
    let a_norm = spectral_norm_real(dynamics.a());
    let sqrt_n = (n_agents as f64).sqrt();

    let (k1, k2) = amplitude_family(
        params.beta, theta_hat, b_hat_norm, x_hat_0, l_norm, sqrt_n, certificate, params.lambda,
    );
    let (h1, h2) = match params.gamma {
        Some(g) => {
            let (h1, h2) = amplitude_family(
                g, theta_hat, b_hat_norm, x_hat_0, l_norm, sqrt_n, certificate, params.lambda,
            );
            (Some(h1), Some(h2))
        }
        None => (None, None),
    };

    Ok(BoundConstants {
        theta_hat,
        b_hat_norm,
        x_hat_0,
        k1,
        k2,
        h1,
        h2,
        cbf_norm,
        l_norm,
        a_norm,
        n_agents,
    })
}

fn k3_generic(
    first: f64,
    second: f64,
    constants: &BoundConstants,
    certificate: &DecayCertificate,
    params: &TriggerParams,
    t_k: f64,
    conservative_abs: bool,
) -> Result<f64> {
    if t_k < 0.0 {
        return Err(Error::InvalidParams(format!("event time must be ≥ 0, got {t_k}")));
    }
    params.check_against(certificate)?;
    let first = if conservative_abs { first.abs() } else { first };
    let decay = ((params.lambda - certificate.lambda_hat) * t_k).exp();
    Ok(constants.cbf_norm
        * (first * decay / (constants.a_norm + certificate.lambda_hat)
            + second / (constants.a_norm + params.lambda)))
}

/// K₃ at event time t_k (conservative |K₁| variant).
pub fn k3(
    constants: &BoundConstants,
    certificate: &DecayCertificate,
    params: &TriggerParams,
    t_k: f64,
) -> Result<f64> {
    k3_generic(constants.k1, constants.k2, constants, certificate, params, t_k, true)
}

/// K₃ with the exact signed K₁, reported for comparison.
pub fn k3_exact(
    constants: &BoundConstants,
    certificate: &DecayCertificate,
    params: &TriggerParams,
    t_k: f64,
) -> Result<f64> {
    k3_generic(constants.k1, constants.k2, constants, certificate, params, t_k, false)
}

/// Limit of K₃ as t_k → ∞: ‖cBF‖·K₂/(‖A‖+λ).
pub fn k3_asymptote(
    constants: &BoundConstants,
    params: &TriggerParams,
) -> f64 {
    constants.cbf_norm * constants.k2 / (constants.a_norm + params.lambda)
}

/// H₃ at event time t_k (conservative |H₁| variant).
pub fn h3(
    constants: &BoundConstants,
    certificate: &DecayCertificate,
    params: &TriggerParams,
    t_k: f64,
) -> Result<f64> {
    let h1 = constants.h1.ok_or_else(|| {
        Error::InvalidParams("H-family requires gamma in the trigger parameters".into())
    })?;
    let h2 = constants.h2.expect("h1 and h2 are set together");
    k3_generic(h1, h2, constants, certificate, params, t_k, true)
}

pub fn h3_exact(
    constants: &BoundConstants,
    certificate: &DecayCertificate,
    params: &TriggerParams,
    t_k: f64,
) -> Result<f64> {
    let h1 = constants.h1.ok_or_else(|| {
        Error::InvalidParams("H-family requires gamma in the trigger parameters".into())
    })?;
    let h2 = constants.h2.expect("h1 and h2 are set together");
    k3_generic(h1, h2, constants, certificate, params, t_k, false)
}

/// Limit of H₃ as t_k → ∞: ‖cBF‖·H₂/(‖A‖+λ).
pub fn h3_asymptote(constants: &BoundConstants, params: &TriggerParams) -> Result<f64> {
    let h2 = constants.h2.ok_or_else(|| {
        Error::InvalidParams("H-family requires gamma in the trigger parameters".into())
    })?;
    Ok(constants.cbf_norm * h2 / (constants.a_norm + params.lambda))
}

/// Inter-event lower bound τ = ln(1 + β/K₃)/(‖A‖+λ̂).
pub fn tau_bound(
    k3_value: f64,
    constants: &BoundConstants,
    certificate: &DecayCertificate,
    params: &TriggerParams,
) -> Result<f64> {
    if !(k3_value > 0.0) || !k3_value.is_finite() {
        return Err(Error::BoundDegeneracy(format!(
            "K3 must be positive and finite for the inter-event bound, got {k3_value}"
        )));
    }
    Ok((1.0 + params.beta / k3_value).ln() / (constants.a_norm + certificate.lambda_hat))
}

/// Delayed-case inter-event bound: same form with H₃.
pub fn delayed_tau_bound(
    h3_value: f64,
    constants: &BoundConstants,
    certificate: &DecayCertificate,
    params: &TriggerParams,
) -> Result<f64> {
    tau_bound(h3_value, constants, certificate, params)
}

/// Admissible delay ε = ln((γ+H₃)/(β+H₃))/(‖A‖+λ̂).
pub fn epsilon_bound(
    h3_value: f64,
    constants: &BoundConstants,
    certificate: &DecayCertificate,
    params: &TriggerParams,
) -> Result<f64> {
    let gamma = params.gamma()?;
    if !(h3_value > 0.0) || !h3_value.is_finite() {
        return Err(Error::BoundDegeneracy(format!(
            "H3 must be positive and finite for the delay bound, got {h3_value}"
        )));
    }
    Ok(((gamma + h3_value) / (params.beta + h3_value)).ln()
        / (constants.a_norm + certificate.lambda_hat))
}

/// Guarantee envelope on the transformed disagreement:
/// β̂x̂₀e^{−λ̂t} + (√N·amp·β̂‖B̂‖/(λ̂−λ))(e^{−λt} − e^{−λ̂t}),
/// with amp = β delay-free and amp = γ delayed.
pub fn disagreement_envelope(
    certificate: &DecayCertificate,
    constants: &BoundConstants,
    params: &TriggerParams,
    t: f64,
    delayed: bool,
) -> Result<f64> {
    params.check_against(certificate)?;
    if t < 0.0 {
        return Err(Error::InvalidParams(format!("envelope time must be ≥ 0, got {t}")));
    }
    let amp = if delayed { params.gamma()? } else { params.beta };
    let sqrt_n = (constants.n_agents as f64).sqrt();
    let head = certificate.beta_hat * constants.x_hat_0 * (-certificate.lambda_hat * t).exp();
    let drive = sqrt_n * amp * certificate.beta_hat * constants.b_hat_norm
        / (certificate.lambda_hat - params.lambda)
        * ((-params.lambda * t).exp() - (-certificate.lambda_hat * t).exp());
    Ok(head + drive)
}

/// Everything the bounds stage reports, serializable to JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    pub beta: f64,
    pub lambda: f64,
    pub gamma: Option<f64>,
    pub beta_hat: f64,
    pub lambda_hat: f64,
    pub constants: BoundConstants,
    /// Conservative uniform bound: τ evaluated at t_k = 0 with |K₁|
    /// (K₃ is monotone in t_k, so this is the infimum over event times).
    pub tau_uniform: f64,
    pub tau_asymptote: f64,
    pub tau_uniform_exact_k1: f64,
    pub k3_at_zero: f64,
    pub k3_asymptote: f64,
    /// Delayed family; present when γ is configured.
    pub delayed_tau_uniform: Option<f64>,
    pub delayed_tau_asymptote: Option<f64>,
    pub h3_at_zero: Option<f64>,
    pub h3_asymptote: Option<f64>,
    pub epsilon_uniform: Option<f64>,
    pub epsilon_asymptote: Option<f64>,
}

/// Evaluate the full report.
pub fn bounds_report(
    constants: &BoundConstants,
    certificate: &DecayCertificate,
    params: &TriggerParams,
) -> Result<BoundsReport> {
    let k3_at_zero = k3(constants, certificate, params, 0.0)?;
    let k3_inf = k3_asymptote(constants, params);
    let tau_uniform = tau_bound(k3_at_zero, constants, certificate, params)?;
    let tau_asymptote = tau_bound(k3_inf, constants, certificate, params)?;
    let k3_exact_zero = k3_exact(constants, certificate, params, 0.0)?;
    let tau_uniform_exact_k1 = if k3_exact_zero > 0.0 {
        tau_bound(k3_exact_zero, constants, certificate, params)?
    } else {
        // Exact-K₁ chain degenerates; the conservative value stands.
        tau_uniform
    };

    let (delayed_tau_uniform, delayed_tau_asymptote, h3_at_zero, h3_asymptote_v, eps_u, eps_a) =
        if params.gamma.is_some() {
            let h3_zero = h3(constants, certificate, params, 0.0)?;
            let h3_inf = h3_asymptote(constants, params)?;
            (
                Some(delayed_tau_bound(h3_zero, constants, certificate, params)?),
                Some(delayed_tau_bound(h3_inf, constants, certificate, params)?),
                Some(h3_zero),
                Some(h3_inf),
                Some(epsilon_bound(h3_zero, constants, certificate, params)?),
                Some(epsilon_bound(h3_inf, constants, certificate, params)?),
            )
        } else {
            (None, None, None, None, None, None)
        };

    Ok(BoundsReport {
        beta: params.beta,
        lambda: params.lambda,
        gamma: params.gamma,
        beta_hat: certificate.beta_hat,
        lambda_hat: certificate.lambda_hat,
        constants: constants.clone(),
        tau_uniform,
        tau_asymptote,
        tau_uniform_exact_k1,
        k3_at_zero,
        k3_asymptote: k3_inf,
        delayed_tau_uniform,
        delayed_tau_asymptote,
        h3_at_zero,
        h3_asymptote: h3_asymptote_v,
        epsilon_uniform: eps_u,
        epsilon_asymptote: eps_a,
    })
}

/// One row of the t_k-grid CSV (the guarantee curves as functions of the
/// triggering instant).
#[derive(Debug, Clone, Serialize)]
pub struct BoundsGridRow {
    pub t_k: f64,
    pub k3: f64,
    pub tau: f64,
    pub h3: Option<f64>,
    pub delayed_tau: Option<f64>,
    pub epsilon: Option<f64>,
}

/// Guarantee curves over t_k ∈ [0, t_max] on a log grid (with t_k = 0).
pub fn bounds_grid(
    constants: &BoundConstants,
    certificate: &DecayCertificate,
    params: &TriggerParams,
    t_max: f64,
    points: usize,
) -> Result<Vec<BoundsGridRow>> {
    if points < 3 || !(t_max > 1e-3) {
        return Err(Error::InvalidParams(
            "bounds grid needs at least 3 points and t_max > 1e-3".into(),
        ));
    }
    let mut rows = Vec::with_capacity(points);
    let lo = 1e-3;
    for i in 0..points {
        let t_k = if i == 0 {
            0.0
        } else {
            lo * (t_max / lo).powf((i - 1) as f64 / (points - 2) as f64)
        };
        let k3_v = k3(constants, certificate, params, t_k)?;
        let tau_v = tau_bound(k3_v, constants, certificate, params)?;
        let (h3_v, dtau_v, eps_v) = if params.gamma.is_some() {
            let h = h3(constants, certificate, params, t_k)?;
            (
                Some(h),
                Some(delayed_tau_bound(h, constants, certificate, params)?),
                Some(epsilon_bound(h, constants, certificate, params)?),
            )
        } else {
            (None, None, None)
        };
        rows.push(BoundsGridRow {
            t_k,
            k3: k3_v,
            tau: tau_v,
            h3: h3_v,
            delayed_tau: dtau_v,
            epsilon: eps_v,
        });
    }
    Ok(rows)
}
