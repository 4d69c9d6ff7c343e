//! Belief and message representations plus the sampling primitives that
//! message passing is built from: systematic resampling, categorical
//! (alias-table) sampling, and evaluation of position-message mixtures.
//!
//! Position beliefs are L equally weighted samples; anchors hold a Dirac
//! belief (all samples at the anchor position). The path loss exponent
//! belief lives on a fixed grid of R points. A position message is a
//! normalized mixture of L likelihood components, each tied to one neighbor
//! sample and one exponent sample, carrying the analytic per-component
//! normalizer.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;

use crate::channel::{log_likelihood_at_distance, NetworkGeometry, NodeId, NodeRole, Position};
use crate::numeric::logsumexp;
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

const MASS_TOLERANCE: f64 = 1e-12;

// ─── Priors ──────────────────────────────────────────────────────────────────

/// Axis-aligned rectangle used as the position prior support.
#[derive(Debug, Clone, Copy)]
pub struct PositionRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl PositionRect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_max > x_min) || !(y_max > y_min) {
            return Err(Error::config("position prior rectangle is empty"));
        }
        Ok(PositionRect { x_min, x_max, y_min, y_max })
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Position {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        Position::new(
            self.x_min + u * (self.x_max - self.x_min),
            self.y_min + v * (self.y_max - self.y_min),
        )
    }
}

/// Prior over the path loss exponent.
#[derive(Debug, Clone, Copy)]
pub enum AlphaPrior {
    /// Uniform over [lo, hi]; discretized on `grid_size` equally spaced points.
    Uniform { lo: f64, hi: f64 },
    /// Known exponent: a degenerate two-point grid with all mass on the value.
    Fixed(f64),
}

impl AlphaPrior {
    /// Grid points and prior masses (`grid_size` is ignored for `Fixed`,
    /// which always yields the minimal two-point grid).
    pub fn discretize(&self, grid_size: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        match *self {
            AlphaPrior::Uniform { lo, hi } => {
                if !(hi > lo) || !(lo > 0.0) {
                    return Err(Error::config("alpha prior interval must satisfy 0 < lo < hi"));
                }
                if grid_size < 2 {
                    return Err(Error::config("alpha grid needs at least 2 points"));
                }
                let step = (hi - lo) / (grid_size - 1) as f64;
                let grid: Vec<f64> = (0..grid_size).map(|k| lo + k as f64 * step).collect();
                let masses = vec![1.0 / grid_size as f64; grid_size];
                Ok((grid, masses))
            }
            AlphaPrior::Fixed(alpha) => {
                if !(alpha > 0.0) {
                    return Err(Error::config("fixed alpha must be > 0"));
                }
                let eps = alpha * 1e-9;
                Ok((vec![alpha, alpha + eps], vec![1.0, 0.0]))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Priors {
    pub rect: PositionRect,
    pub alpha: AlphaPrior,
}

// ─── Beliefs ─────────────────────────────────────────────────────────────────

/// L equally weighted position samples approximating one node's belief.
#[derive(Debug, Clone)]
pub struct ParticleBelief {
    owner: NodeId,
    samples: Vec<Position>,
}

impl ParticleBelief {
    pub fn new(owner: NodeId, samples: Vec<Position>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::config("particle belief needs at least one sample"));
        }
        Ok(ParticleBelief { owner, samples })
    }

    /// Dirac belief: every sample sits at `position` (used for anchors).
    pub fn dirac(owner: NodeId, position: Position, count: usize) -> Self {
        ParticleBelief {
            owner,
            samples: vec![position; count.max(1)],
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn samples(&self) -> &[Position] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> Position {
        let n = self.samples.len() as f64;
        let (sx, sy) = self
            .samples
            .iter()
            .fold((0.0, 0.0), |(ax, ay), p| (ax + p.x, ay + p.y));
        Position::new(sx / n, sy / n)
    }
}

/// Probability masses of the path loss exponent belief on a fixed grid.
#[derive(Debug, Clone)]
pub struct AlphaGridBelief {
    grid: Vec<f64>,
    masses: Vec<f64>,
}

impl AlphaGridBelief {
    pub fn new(grid: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::config("alpha grid needs at least 2 points"));
        }
        if grid.len() != masses.len() {
            return Err(Error::config("alpha grid/mass length mismatch"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("alpha grid must be strictly increasing"));
        }
        if masses.iter().any(|&m| m < 0.0 || !m.is_finite()) {
            return Err(Error::config("alpha masses must be finite and nonnegative"));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::config("alpha masses must carry positive total mass"));
        }
        let mut normalized = masses;
        if (total - 1.0).abs() > MASS_TOLERANCE {
            for m in &mut normalized {
                *m /= total;
            }
        }
        Ok(AlphaGridBelief {
            grid,
            masses: normalized,
        })
    }

    pub fn from_prior(prior: &AlphaPrior, grid_size: usize) -> Result<Self> {
        let (grid, masses) = prior.discretize(grid_size)?;
        AlphaGridBelief::new(grid, masses)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mean(&self) -> f64 {
        self.grid
            .iter()
            .zip(&self.masses)
            .map(|(a, m)| a * m)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.grid
            .iter()
            .zip(&self.masses)
            .map(|(a, m)| m * (a - mean) * (a - mean))
            .sum()
    }
}

// ─── Messages ────────────────────────────────────────────────────────────────

/// Per-edge message about the path loss exponent: R nonnegative values on
/// the belief grid, normalized to sum 1 (messages only ever enter products
/// that are renormalized, so the scale is free and this prevents underflow).
///
/// The log values are retained alongside the linear view: sharp messages
/// lose their tails to zero in linear form, and belief products multiply
/// many messages, so the product runs on the log values.
#[derive(Debug, Clone)]
pub struct AlphaMessage {
    values: Vec<f64>,
    log_values: Vec<f64>,
}

impl AlphaMessage {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::config("alpha message values must be finite and nonnegative"));
        }
        Self::from_log(values.iter().map(|&v| v.ln()).collect())
    }

    /// Builds from unnormalized log values (the native output of a message
    /// update computed in log domain).
    pub fn from_log(log_values: Vec<f64>) -> Result<Self> {
        if log_values.len() < 2 {
            return Err(Error::config("alpha message needs at least 2 grid values"));
        }
        if log_values.iter().any(|&v| v.is_nan() || v == f64::INFINITY) {
            return Err(Error::config("alpha message log values must not be NaN or +inf"));
        }
        let lse = logsumexp(&log_values);
        if !lse.is_finite() {
            return Err(Error::config("alpha message must carry positive mass"));
        }
        let log_norm: Vec<f64> = log_values.iter().map(|lv| lv - lse).collect();
        let mut values: Vec<f64> = log_norm.iter().map(|lv| lv.exp()).collect();
        let total: f64 = values.iter().sum();
        for v in &mut values {
            *v /= total;
        }
        Ok(AlphaMessage { values, log_values: log_norm })
    }

    pub fn uniform(grid_size: usize) -> Self {
        let r = grid_size.max(2);
        AlphaMessage {
            values: vec![1.0 / r as f64; r],
            log_values: vec![-(r as f64).ln(); r],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Log of the normalized values; exact where the linear view underflows.
    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }
}

/// One component of a position message: a normalized likelihood ring around
/// `neighbor` at exponent `alpha`, carrying its mixture weight and the
/// analytic normalizer Z of the raw likelihood.
#[derive(Debug, Clone, Copy)]
pub struct MessageComponent {
    pub weight: f64,
    pub neighbor: Position,
    pub alpha: f64,
    pub ln_normalizer: f64,
    /// Precomputed ln(weight) - ln(Z), the log coefficient of the component.
    ln_coeff: f64,
}

/// A position message: normalized L-component mixture of normalized
/// likelihood functions, `m(x) = sum_l w_l * Z_l^{-1} * f(r | x, x_j^l, a^l)`.
#[derive(Debug, Clone)]
pub struct PositionMessage {
    pub target: NodeId,
    pub rss_dbm: f64,
    pub noise_std_db: f64,
    pub ref_power_dbm: f64,
    pub ref_distance_m: f64,
    components: Vec<MessageComponent>,
}

impl PositionMessage {
    /// Builds a message from `(weight, neighbor, alpha, ln_normalizer)`
    /// tuples. Weights are normalized to sum 1.
    pub fn new(
        target: NodeId,
        rss_dbm: f64,
        noise_std_db: f64,
        ref_power_dbm: f64,
        ref_distance_m: f64,
        parts: Vec<(f64, Position, f64, f64)>,
    ) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::config("position message needs at least one component"));
        }
        let total: f64 = parts.iter().map(|p| p.0).sum();
        if !(total > 0.0) || parts.iter().any(|p| p.0 < 0.0 || !p.0.is_finite()) {
            return Err(Error::config("position message weights must be nonnegative with positive sum"));
        }
        let components = parts
            .into_iter()
            .map(|(w, neighbor, alpha, ln_z)| {
                let weight = w / total;
                MessageComponent {
                    weight,
                    neighbor,
                    alpha,
                    ln_normalizer: ln_z,
                    ln_coeff: weight.ln() - ln_z,
                }
            })
            .collect();
        Ok(PositionMessage {
            target,
            rss_dbm,
            noise_std_db,
            ref_power_dbm,
            ref_distance_m,
            components,
        })
    }

    pub fn components(&self) -> &[MessageComponent] {
        &self.components
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|c| c.weight)
    }

    /// Mixture density at `x` (cost O(L)); streaming log-sum-exp keeps the
    /// evaluation stable when all components underflow individually.
    pub fn density(&self, x: &Position) -> f64 {
        self.log_density(x).exp()
    }

    pub fn log_density(&self, x: &Position) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for c in &self.components {
            if c.weight == 0.0 {
                continue;
            }
            let ll = log_likelihood_at_distance(
                self.rss_dbm,
                x.distance_to(&c.neighbor),
                c.alpha,
                self.ref_power_dbm,
                self.noise_std_db,
                self.ref_distance_m,
            );
            let term = c.ln_coeff + ll;
            if term <= max {
                sum += (term - max).exp();
            } else {
                sum = sum * (max - term).exp() + 1.0;
                max = term;
            }
        }
        if sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            max + sum.ln()
        }
    }
}

// ─── Sampling primitives ─────────────────────────────────────────────────────

/// Output of systematic resampling.
#[derive(Debug, Clone)]
pub struct ResampleOutput<T> {
    pub samples: Vec<T>,
    /// Set when the weights carried no usable mass and the input was kept
    /// with uniform weights instead.
    pub degenerate_weights: bool,
}

/// Systematic (stratified single-offset) resampling: O(L), lowest variance
/// among the standard schemes. The copy count of sample l is within +-1 of
/// `L * w_l`.
pub fn resample_systematic<T: Clone, R: Rng>(
    rng: &mut R,
    samples: &[T],
    weights: &[f64],
) -> ResampleOutput<T> {
    let offset: f64 = rng.random();
    resample_systematic_with_offset(samples, weights, offset)
}

/// Deterministic core of [`resample_systematic`], with the stratum offset
/// `u` in [0, 1) supplied by the caller.
pub fn resample_systematic_with_offset<T: Clone>(
    samples: &[T],
    weights: &[f64],
    offset: f64,
) -> ResampleOutput<T> {
    assert_eq!(samples.len(), weights.len());
    let n = samples.len();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return ResampleOutput {
            samples: samples.to_vec(),
            degenerate_weights: true,
        };
    }
    let mut out = Vec::with_capacity(n);
    let mut idx = 0usize;
    let mut cum = weights[0] / total;
    for k in 0..n {
        let point = (k as f64 + offset) / n as f64;
        while point >= cum && idx + 1 < n {
            idx += 1;
            cum += weights[idx] / total;
        }
        out.push(samples[idx].clone());
    }
    ResampleOutput {
        samples: out,
        degenerate_weights: false,
    }
}

/// Walker/Vose alias table: O(N) build, O(1) per draw, so drawing M samples
/// from an N-categorical distribution costs O(N + M).
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(masses: &[f64]) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::domain("alias table needs at least one mass"));
        }
        if masses.iter().any(|&m| m < 0.0 || !m.is_finite()) {
            return Err(Error::domain("categorical masses must be finite and nonnegative"));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::domain("categorical masses must have positive sum"));
        }
        let n = masses.len();
        let mut scaled: Vec<f64> = masses.iter().map(|m| m / total * n as f64).collect();
        let mut small: Vec<usize> = Vec::with_capacity(n);
        let mut large: Vec<usize> = Vec::with_capacity(n);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        let mut prob = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        while let (Some(s), Some(l)) = (small.pop(), large.pop()) {
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        // Leftovers are 1.0 up to rounding.
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let k = rng.random_range(0..self.prob.len());
        let u: f64 = rng.random();
        if u < self.prob[k] {
            k
        } else {
            self.alias[k]
        }
    }
}

/// Draws `count` i.i.d. indices with probability proportional to `masses`.
pub fn sample_categorical<R: Rng>(
    rng: &mut R,
    masses: &[f64],
    count: usize,
) -> Result<Vec<usize>> {
    let table = AliasTable::new(masses)?;
    Ok((0..count).map(|_| table.sample(rng)).collect())
}

// ─── Initialization ──────────────────────────────────────────────────────────

/// Initial beliefs from the priors: agents draw L uniform samples from the
/// prior rectangle (one derived stream per node id), anchors get a Dirac
/// belief, and the exponent belief is the discretized prior.
pub fn init_beliefs(
    geometry: &NetworkGeometry,
    priors: &Priors,
    particles: usize,
    grid_size: usize,
    master_seed: u64,
) -> Result<(BTreeMap<NodeId, ParticleBelief>, AlphaGridBelief)> {
    if particles == 0 {
        return Err(Error::config("particle count must be >= 1"));
    }
    let mut beliefs = BTreeMap::new();
    for node in geometry.nodes() {
        let belief = match node.role {
            NodeRole::Anchor => ParticleBelief::dirac(node.id, node.position, particles),
            NodeRole::Agent => {
                let mut rng = stream(master_seed, Purpose::InitBelief, node.id as u64, 0, 0);
                let samples = (0..particles).map(|_| priors.rect.sample(&mut rng)).collect();
                ParticleBelief::new(node.id, samples)?
            }
        };
        beliefs.insert(node.id, belief);
    }
    let alpha = AlphaGridBelief::from_prior(&priors.alpha, grid_size)?;
    Ok((beliefs, alpha))
}

// ─── Snapshot rows ───────────────────────────────────────────────────────────

/// Appends `iter,node_id,sample_index,x,y` rows for one belief.
pub fn write_position_rows<W: Write>(
    out: &mut W,
    iteration: usize,
    belief: &ParticleBelief,
) -> std::io::Result<()> {
    for (k, s) in belief.samples().iter().enumerate() {
        writeln!(out, "{},{},{},{},{}", iteration, belief.owner(), k, s.x, s.y)?;
    }
    Ok(())
}

/// Appends `iter,grid_index,alpha,mass` rows for the exponent belief.
pub fn write_alpha_rows<W: Write>(
    out: &mut W,
    iteration: usize,
    belief: &AlphaGridBelief,
) -> std::io::Result<()> {
    for (k, (a, m)) in belief.grid().iter().zip(belief.masses()).enumerate() {
        writeln!(out, "{},{},{},{}", iteration, k, a, m)?;
    }
    Ok(())
}
