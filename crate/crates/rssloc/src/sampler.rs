//! Sampling from a normalized likelihood function of a position.
//!
//! Given a measurement `r = h(d) + v` with reference position `x_ref`, the
//! target is the likelihood of `x` normalized over the plane. Samples are
//! generated by a polar transformation: a uniform angle plus a distance
//! obtained by inverting the measurement model on a noise draw. The induced
//! proposal density is `q(x) = q_d(||x - x_ref||) / (2 pi ||x - x_ref||)`,
//! which differs from the target in general; the importance weight
//! `f(r|d)/q_d(d|r) * d` corrects the mismatch. The uncorrected draw is kept
//! as the heuristic baseline for comparison experiments.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{ChannelParams, Position, MIN_DISTANCE_M};
use crate::numeric::{log_gaussian, standard_normal_cdf, LN_SQRT_2PI};
use crate::{Error, Result};

/// Log-normal distance proposal induced by inverting the RSS model under
/// Gaussian noise: `d/d0 ~ LogNormal(mu_tilde, sigma_tilde^2)`.
#[derive(Debug, Clone, Copy)]
pub struct DistanceProposal {
    pub mu_tilde: f64,
    pub sigma_tilde: f64,
    pub d0: f64,
}

impl DistanceProposal {
    /// Density of the distance itself (it carries the 1/d0 Jacobian, so it
    /// integrates to 1 in d for any d0).
    pub fn log_density(&self, d: f64) -> f64 {
        let d = d.max(MIN_DISTANCE_M);
        let z = ((d / self.d0).ln() - self.mu_tilde) / self.sigma_tilde;
        -0.5 * z * z - self.sigma_tilde.ln() - d.ln() - LN_SQRT_2PI
    }

    pub fn density(&self, d: f64) -> f64 {
        self.log_density(d).exp()
    }

    pub fn cdf(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        standard_normal_cdf(((d / self.d0).ln() - self.mu_tilde) / self.sigma_tilde)
    }

    pub fn median(&self) -> f64 {
        self.d0 * self.mu_tilde.exp()
    }
}

/// Proposal parameters for the RSS model:
/// `mu_tilde = ln10/(10 alpha) * (A - r)`, `sigma_tilde = ln10/(10 alpha) * sigma`.
pub fn distance_proposal_params(
    rss_dbm: f64,
    alpha: f64,
    params: &ChannelParams,
) -> Result<DistanceProposal> {
    if !(alpha > 0.0) {
        return Err(Error::domain("distance proposal needs alpha > 0"));
    }
    let c = std::f64::consts::LN_10 / (10.0 * alpha);
    Ok(DistanceProposal {
        mu_tilde: c * (params.ref_power_dbm - rss_dbm),
        sigma_tilde: c * params.noise_std_db,
        d0: params.ref_distance_m,
    })
}

/// A distance-related measurement model `r = h(d) + v`.
pub trait RangeModel {
    /// h(d).
    fn measurement_mean(&self, d: f64) -> f64;
    /// h^{-1}(y), clamped to positive distances.
    fn invert(&self, y: f64) -> f64;
    fn sample_noise(&self, rng: &mut dyn rand::RngCore) -> f64;
    /// ln f_v(v).
    fn log_noise_density(&self, v: f64) -> f64;
    /// ln q_d(d | r): density of the distance produced by inverting the
    /// model on a noise draw.
    fn log_distance_proposal(&self, d: f64, r: f64) -> f64;

    /// ln f(r | d).
    fn log_likelihood(&self, r: f64, d: f64) -> f64 {
        self.log_noise_density(r - self.measurement_mean(d))
    }
}

/// The log-distance RSS model at a fixed path loss exponent.
#[derive(Debug, Clone, Copy)]
pub struct RssRangeModel {
    pub ref_power_dbm: f64,
    pub noise_std_db: f64,
    pub ref_distance_m: f64,
    pub alpha: f64,
}

impl RssRangeModel {
    pub fn new(alpha: f64, params: &ChannelParams) -> Result<Self> {
        Self::with_sigma(alpha, params, params.noise_std_db)
    }

    /// Variant with a per-edge shadowing std.
    pub fn with_sigma(alpha: f64, params: &ChannelParams, noise_std_db: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::domain("RSS range model needs alpha > 0"));
        }
        Ok(RssRangeModel {
            ref_power_dbm: params.ref_power_dbm,
            noise_std_db,
            ref_distance_m: params.ref_distance_m,
            alpha,
        })
    }

    pub fn proposal(&self, r: f64) -> DistanceProposal {
        let c = std::f64::consts::LN_10 / (10.0 * self.alpha);
        DistanceProposal {
            mu_tilde: c * (self.ref_power_dbm - r),
            sigma_tilde: c * self.noise_std_db,
            d0: self.ref_distance_m,
        }
    }
}

impl RangeModel for RssRangeModel {
    fn measurement_mean(&self, d: f64) -> f64 {
        crate::channel::rss_mean_unchecked(
            self.ref_power_dbm,
            self.alpha,
            d.max(MIN_DISTANCE_M),
            self.ref_distance_m,
        )
    }

    fn invert(&self, y: f64) -> f64 {
        let exponent = (self.ref_power_dbm - y) / (10.0 * self.alpha);
        (self.ref_distance_m * 10f64.powf(exponent)).max(MIN_DISTANCE_M)
    }

    fn sample_noise(&self, rng: &mut dyn rand::RngCore) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.noise_std_db * z
    }

    fn log_noise_density(&self, v: f64) -> f64 {
        log_gaussian(v, self.noise_std_db)
    }

    fn log_distance_proposal(&self, d: f64, r: f64) -> f64 {
        self.proposal(r).log_density(d)
    }
}

/// Demonstration model `r = d + v` with `v ~ U[-half_width, half_width]`.
#[derive(Debug, Clone, Copy)]
pub struct UniformRangeModel {
    pub half_width: f64,
}

impl RangeModel for UniformRangeModel {
    fn measurement_mean(&self, d: f64) -> f64 {
        d
    }

    fn invert(&self, y: f64) -> f64 {
        y.max(MIN_DISTANCE_M)
    }

    fn sample_noise(&self, rng: &mut dyn rand::RngCore) -> f64 {
        let u: f64 = rng.random();
        (2.0 * u - 1.0) * self.half_width
    }

    fn log_noise_density(&self, v: f64) -> f64 {
        if v.abs() <= self.half_width {
            -(2.0 * self.half_width).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn log_distance_proposal(&self, d: f64, r: f64) -> f64 {
        // d = r - v with unit Jacobian, so the proposal is the noise law.
        self.log_noise_density(r - d)
    }
}

/// Draws one position from the polar proposal: angle uniform on [0, 2 pi),
/// distance from inverting the model on a noise draw.
pub fn sample_polar<M: RangeModel, R: Rng>(
    rng: &mut R,
    r: f64,
    x_ref: &Position,
    model: &M,
) -> Position {
    let theta: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    let v = model.sample_noise(rng);
    let d = model.invert(r - v).max(MIN_DISTANCE_M);
    Position::new(x_ref.x + d * theta.cos(), x_ref.y + d * theta.sin())
}

/// Identical draw mechanism to [`sample_polar`]; consumers treat the output
/// as unweighted. Kept as the heuristic baseline for comparison runs.
pub fn heuristic_sample<M: RangeModel, R: Rng>(
    rng: &mut R,
    r: f64,
    x_ref: &Position,
    model: &M,
) -> Position {
    sample_polar(rng, r, x_ref, model)
}

/// Log proposal density `ln q(x | x_ref, r) = ln q_d(d) - ln(2 pi d)`.
pub fn proposal_log_density<M: RangeModel>(x: &Position, x_ref: &Position, r: f64, model: &M) -> f64 {
    let d = x.clamped_distance_to(x_ref);
    model.log_distance_proposal(d, r) - (2.0 * std::f64::consts::PI * d).ln()
}

pub fn proposal_density<M: RangeModel>(x: &Position, x_ref: &Position, r: f64, model: &M) -> f64 {
    proposal_log_density(x, x_ref, r, model).exp()
}

/// Unnormalized log importance weight correcting the polar proposal toward
/// the normalized likelihood: `ln f(r|d) - ln q_d(d|r) + ln d` (the `+ln d`
/// is the Jacobian of the polar transformation).
pub fn nl_log_importance_weight<M: RangeModel>(
    x: &Position,
    x_ref: &Position,
    r: f64,
    model: &M,
) -> f64 {
    let d = x.clamped_distance_to(x_ref);
    let lq = model.log_distance_proposal(d, r);
    if lq == f64::NEG_INFINITY {
        // The proposal cannot reach this point; its weight is defined as 0.
        return f64::NEG_INFINITY;
    }
    model.log_likelihood(r, d) - lq + d.ln()
}

/// Linear-domain weight; 0 when the proposal density vanishes at `x`.
pub fn nl_importance_weight<M: RangeModel>(
    x: &Position,
    x_ref: &Position,
    r: f64,
    model: &M,
) -> f64 {
    nl_log_importance_weight(x, x_ref, r, model).exp()
}

/// RSS-model wrappers used by the engine and the CLI demo.
pub fn sample_polar_rss<R: Rng>(
    rng: &mut R,
    rss_dbm: f64,
    x_ref: &Position,
    alpha: f64,
    params: &ChannelParams,
) -> Result<Position> {
    let model = RssRangeModel::new(alpha, params)?;
    Ok(sample_polar(rng, rss_dbm, x_ref, &model))
}

pub fn proposal_density_rss(
    x: &Position,
    x_ref: &Position,
    rss_dbm: f64,
    alpha: f64,
    params: &ChannelParams,
) -> Result<f64> {
    let model = RssRangeModel::new(alpha, params)?;
    Ok(proposal_density(x, x_ref, rss_dbm, &model))
}

pub fn nl_importance_weight_rss(
    x: &Position,
    x_ref: &Position,
    rss_dbm: f64,
    alpha: f64,
    params: &ChannelParams,
) -> Result<f64> {
    let model = RssRangeModel::new(alpha, params)?;
    Ok(nl_importance_weight(x, x_ref, rss_dbm, &model))
}
