use alloc::vec::Vec;

use crate::nncore::{NoiseParams, QNetwork};
use crate::noisy::state_sigma;
use crate::numkit::Mat;
use crate::{Error, Result};

/// Default variance of the fixed posterior blocks.
pub const DEFAULT_KL_EPSILON: f64 = 1e-12;

/// `KL(N(mu, diag(var)) || N(0, I)) = (−Σ ln var + Σ var + |mu|² − k) / 2`.
pub fn gaussian_kl_diag(mu: &[f64], var_diag: &[f64]) -> Result<f64> {
    if mu.len() != var_diag.len() {
        return Err(Error::ShapeMismatch {
            context: "gaussian_kl_diag",
            expected: (mu.len(), 1),
            found: (var_diag.len(), 1),
        });
    }
    let mut acc = 0.0;
    for (i, (&m, &v)) in mu.iter().zip(var_diag).enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositiveVariance { index: i });
        }
        acc += -libm::log(v) + v + m * m - 1.0;
    }
    Ok(0.5 * acc)
}

/// KL of a block whose posterior is `N(mu, eps I)` against `N(0, I)`.
pub fn fixed_block_kl(mu: &[f64], eps: f64) -> f64 {
    let k = mu.len() as f64;
    let sq: f64 = mu.iter().map(|m| m * m).sum();
    0.5 * (-k * libm::log(eps) + k * eps + sq - k)
}

/// KL split into the fixed-variance blocks and the learned perturbed block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlBreakdown {
    /// Encoder parameters, plus the SANE module for state-aware networks.
    pub fixed: f64,
    /// Head parameters under their learned noise.
    pub perturbed: f64,
}

impl KlBreakdown {
    pub fn total(&self) -> f64 {
        self.fixed + self.perturbed
    }
}

fn encoder_means(params: &QNetwork) -> Vec<f64> {
    params
        .encoder
        .iter()
        .flat_map(|l| l.w.as_slice().iter().chain(l.b.as_slice()).copied())
        .collect()
}

fn head_means(params: &QNetwork) -> Vec<f64> {
    params
        .head
        .iter()
        .flat_map(|l| l.w.as_slice().iter().chain(l.b.as_slice()).copied())
        .collect()
}

/// NoisyNet posterior KL: a fixed `eps` block for the encoder and the
/// diagonal Gaussian `N(mu, sigma²)` for the head.
pub fn noisynet_kl(params: &QNetwork, eps: f64) -> Result<KlBreakdown> {
    let NoiseParams::NoisyNet(sigmas) = &params.noise else {
        return Err(Error::InvalidArgument("noisynet_kl needs a NoisyNet network".into()));
    };
    let var: Vec<f64> = sigmas
        .iter()
        .flat_map(|s| s.sigma_w.as_slice().iter().chain(s.sigma_b.as_slice()))
        .map(|s| s * s)
        .collect();
    if let Some(index) = var.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroSigma {
            context: "noisynet_kl",
            index,
        });
    }
    Ok(KlBreakdown {
        fixed: fixed_block_kl(&encoder_means(params), eps),
        perturbed: gaussian_kl_diag(&head_means(params), &var)?,
    })
}

/// State-aware KL averaged over `states`: for each state the head is
/// `N(mu, σ(s)² I)`; the encoder and the SANE module form fixed `eps`
/// blocks.
pub fn sane_batch_kl(params: &QNetwork, states: &[Mat], eps: f64) -> Result<KlBreakdown> {
    let module = params.sane_module().ok_or(Error::NotSane)?;
    if states.is_empty() {
        return Err(Error::InvalidArgument("sane_batch_kl needs at least one state".into()));
    }
    let mu = head_means(params);
    let k = mu.len() as f64;
    let sq: f64 = mu.iter().map(|m| m * m).sum();
    let mut perturbed = 0.0;
    for (i, s) in states.iter().enumerate() {
        let sigma = state_sigma(params, s)?;
        let var = sigma * sigma;
        if var == 0.0 {
            return Err(Error::ZeroSigma {
                context: "sane_batch_kl",
                index: i,
            });
        }
        perturbed += 0.5 * (-k * libm::log(var) + k * var + sq - k);
    }
    let theta: Vec<f64> = [&module.hidden, &module.output]
        .iter()
        .flat_map(|l| l.w.as_slice().iter().chain(l.b.as_slice()).copied())
        .collect();
    Ok(KlBreakdown {
        fixed: fixed_block_kl(&encoder_means(params), eps) + fixed_block_kl(&theta, eps),
        perturbed: perturbed / states.len() as f64,
    })
}
