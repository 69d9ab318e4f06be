use serde::Serialize;

use crate::dictionary::Atoms;
use crate::forward::{estimate_bilipschitz, estimate_spectral_norm, ForwardOperator};
use crate::Result;

/// Linear-convergence constants derived from embedding estimates.
///
/// `delta = φ(ε)·|||A|||/√α` with `φ(ε) = √(2ε+ε²)`,
/// `rho = √(ζβ/α − 1) + δ`, `kappa_w = 2√β/α + δ/√α`, and the condition
/// `ζβ < (2 − 2δ + δ²)α`. Without embedding evidence (`α ≤ 0`) the derived
/// fields are infinite and the condition fails.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceCertificate {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub spectral_norm: f64,
    pub epsilon: f64,
    pub zeta: f64,
    pub phi: f64,
    pub delta: f64,
    pub rho: f64,
    pub kappa_w: f64,
    pub condition_ok: bool,
    pub embedding_evidence: bool,
}

pub fn phi(epsilon: f64) -> f64 {
    (2.0 * epsilon + epsilon * epsilon).sqrt()
}

pub fn certificate_from_constants(alpha: f64, beta: f64, spectral_norm: f64, epsilon: f64, zeta: f64) -> ConvergenceCertificate {
    let phi = phi(epsilon);
    if !(alpha > 0.0) {
        return ConvergenceCertificate {
            alpha_hat: alpha,
            beta_hat: beta,
            spectral_norm,
            epsilon,
            zeta,
            phi,
            delta: f64::INFINITY,
            rho: f64::INFINITY,
            kappa_w: f64::INFINITY,
            condition_ok: false,
            embedding_evidence: false,
        };
    }
    let delta = phi * spectral_norm / alpha.sqrt();
    let rho = (zeta * beta / alpha - 1.0).max(0.0).sqrt() + delta;
    let kappa_w = 2.0 * beta.sqrt() / alpha + delta / alpha.sqrt();
    let condition_ok = zeta * beta < (2.0 - 2.0 * delta + delta * delta) * alpha;
    ConvergenceCertificate {
        alpha_hat: alpha,
        beta_hat: beta,
        spectral_norm,
        epsilon,
        zeta,
        phi,
        delta,
        rho,
        kappa_w,
        condition_ok,
        embedding_evidence: true,
    }
}

/// Estimate `(α, β)` from `n_pairs` random cone pairs and `|||A|||` by power
/// iteration, then derive the certificate.
pub fn certificate<D: Atoms + ?Sized>(
    op: &ForwardOperator,
    dict: &D,
    epsilon: f64,
    zeta: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<ConvergenceCertificate> {
    let (alpha, beta) = estimate_bilipschitz(op, dict, n_pairs, seed)?;
    let norm = estimate_spectral_norm(op)?;
    Ok(certificate_from_constants(alpha, beta, norm, epsilon, zeta))
}
