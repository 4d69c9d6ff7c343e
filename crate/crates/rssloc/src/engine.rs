//! The message-passing engine.
//!
//! Each iteration sweeps the agents: per neighbor edge it refreshes the
//! exponent message (once per undirected edge) and the position message
//! toward the agent, then updates and broadcasts the agent's position
//! belief, and finally refreshes the exponent belief from all current
//! exponent messages.
//!
//! Two message weightings are supported: BP divides by the previous
//! generation of messages (the full correction), SPAWN drops those
//! denominators. Two belief-update samplers are supported: a baseline
//! importance sampler (IS, O(|gamma| L^2)) and the auxiliary importance
//! sampler (AIS, O(|gamma| L)) which draws one component label per incoming
//! mixture and corrects through a mixture-of-polar-proposals density.
//!
//! Iteration-0 messages are the constant 1 (uniform over the grid for
//! exponent messages), which makes BP and SPAWN coincide exactly at the
//! first iteration.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::belief::{
    init_beliefs, resample_systematic, sample_categorical, AliasTable, AlphaGridBelief,
    AlphaMessage, ParticleBelief, PositionMessage, PositionRect, Priors,
};
use crate::channel::{
    ln_normalizer_z, log_likelihood_at_distance, ChannelParams, MeasurementSet, NetworkGeometry,
    NodeId, Position,
};
use crate::numeric::{normalize_log_weights, LOG_DENSITY_FLOOR};
use crate::rng::{stream, Purpose};
use crate::sampler::{proposal_log_density, sample_polar, RssRangeModel};
use crate::{Error, Result};

// ─── Configuration ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Bp,
    Spawn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeliefSampler {
    Is,
    Ais,
}

/// Proposal used by the IS belief update: the prior rectangle, or the evenly
/// weighted mixture over incoming messages (components drawn by mixture
/// weight, positions through the polar proposal).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsProposal {
    Prior,
    MixtureMean,
}

/// Agent scheduling inside one iteration. `Sequential` sweeps agents in
/// ascending id, each broadcasting its fresh belief to later agents.
/// `Synchronous` lets every agent read only iteration n-1 beliefs, which
/// allows one iteration to execute in parallel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Sequential,
    Synchronous,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub variant: Variant,
    pub belief_sampler: BeliefSampler,
    /// L: particle count per position belief.
    pub particles: usize,
    /// R: grid size for the exponent belief.
    pub grid_size: usize,
    /// N_max: number of iterations.
    pub max_iterations: usize,
    pub seed: u64,
    pub is_proposal: IsProposal,
    pub schedule: Schedule,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            variant: Variant::Spawn,
            belief_sampler: BeliefSampler::Ais,
            particles: 1000,
            grid_size: 100,
            max_iterations: 10,
            seed: 0,
            is_proposal: IsProposal::MixtureMean,
            schedule: Schedule::Sequential,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::config("particle count L must be >= 2"));
        }
        if self.grid_size < 2 {
            return Err(Error::config("grid size R must be >= 2"));
        }
        if self.max_iterations < 1 {
            return Err(Error::config("max_iterations must be >= 1"));
        }
        Ok(())
    }

    /// Canonical algorithm name, e.g. "spawn-ais".
    pub fn algorithm_name(&self) -> &'static str {
        match (self.variant, self.belief_sampler) {
            (Variant::Bp, BeliefSampler::Is) => "bp-is",
            (Variant::Bp, BeliefSampler::Ais) => "bp-ais",
            (Variant::Spawn, BeliefSampler::Is) => "spawn-is",
            (Variant::Spawn, BeliefSampler::Ais) => "spawn-ais",
        }
    }

    pub fn set_algorithm(&mut self, name: &str) -> Result<()> {
        let (variant, sampler) = match name {
            "bp-is" => (Variant::Bp, BeliefSampler::Is),
            "bp-ais" => (Variant::Bp, BeliefSampler::Ais),
            "spawn-is" => (Variant::Spawn, BeliefSampler::Is),
            "spawn-ais" => (Variant::Spawn, BeliefSampler::Ais),
            other => {
                return Err(Error::config(format!(
                    "unknown algorithm '{other}' (expected bp-is|bp-ais|spawn-is|spawn-ais)"
                )))
            }
        };
        self.variant = variant;
        self.belief_sampler = sampler;
        Ok(())
    }
}

/// Channel parameters resolved for one edge.
#[derive(Debug, Clone, Copy)]
pub struct EdgeChannel {
    pub rss_dbm: f64,
    pub noise_std_db: f64,
    pub ref_power_dbm: f64,
    pub ref_distance_m: f64,
}

impl EdgeChannel {
    pub fn log_likelihood(&self, x: &Position, neighbor: &Position, alpha: f64) -> f64 {
        log_likelihood_at_distance(
            self.rss_dbm,
            x.distance_to(neighbor),
            alpha,
            self.ref_power_dbm,
            self.noise_std_db,
            self.ref_distance_m,
        )
    }

    pub fn range_model(&self, alpha: f64) -> RssRangeModel {
        RssRangeModel {
            ref_power_dbm: self.ref_power_dbm,
            noise_std_db: self.noise_std_db,
            ref_distance_m: self.ref_distance_m,
            alpha,
        }
    }
}

// ─── Diagnostics and history ─────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    /// Belief-update weights carried no mass; the previous belief was kept.
    BeliefWeightsDegenerate,
    /// Message weights carried no mass; uniform weights were used.
    MessageWeightsDegenerate,
    /// The exponent belief product vanished everywhere; reset to uniform.
    AlphaProductDegenerate,
    /// Agent had no neighbors for the whole run.
    DisconnectedAgent,
}

#[derive(Debug, Clone, Copy)]
pub struct DiagnosticEvent {
    pub iteration: usize,
    pub node: NodeId,
    pub kind: DiagnosticKind,
}

#[derive(Debug, Clone)]
pub struct IterationSnapshot {
    pub iteration: usize,
    pub beliefs: BTreeMap<NodeId, ParticleBelief>,
    pub alpha_belief: AlphaGridBelief,
}

#[derive(Debug, Clone)]
pub struct RunHistory {
    /// Snapshot 0 is the initial (prior) state; snapshot n the state after
    /// iteration n.
    pub snapshots: Vec<IterationSnapshot>,
    pub diagnostics: Vec<DiagnosticEvent>,
    /// Messages of the final iteration, keyed (i, j) with i < j for the
    /// exponent and (target, neighbor) for positions.
    pub alpha_messages: BTreeMap<(NodeId, NodeId), AlphaMessage>,
    pub position_messages: BTreeMap<(NodeId, NodeId), PositionMessage>,
}

impl RunHistory {
    pub fn final_snapshot(&self) -> &IterationSnapshot {
        self.snapshots.last().expect("at least the initial snapshot")
    }
}

// ─── Message updates ─────────────────────────────────────────────────────────

fn floored_log_density(msg: &PositionMessage, x: &Position) -> f64 {
    msg.log_density(x).max(LOG_DENSITY_FLOOR)
}

/// Updates the exponent message of one edge from the endpoint beliefs:
/// `m(alpha_r) ~ sum_l w_l f(r | x_i^l, x_j^l, alpha_r)`, with BP weights
/// `w_l ~ 1/(m_prev(x_i^l) m_prev(x_j^l))` or uniform weights for SPAWN.
/// Missing previous messages (iteration 1, or an anchor endpoint that never
/// receives messages) contribute the constant 1.
/// Returns the normalized message and a degenerate-weights flag.
pub fn update_alpha_message(
    grid: &[f64],
    chan: &EdgeChannel,
    belief_i: &ParticleBelief,
    belief_j: &ParticleBelief,
    prev_msg_to_i: Option<&PositionMessage>,
    prev_msg_to_j: Option<&PositionMessage>,
    variant: Variant,
) -> Result<(AlphaMessage, bool)> {
    let count = belief_i.len().min(belief_j.len());
    if count == 0 {
        return Err(Error::config("alpha message needs non-empty beliefs"));
    }
    let mut log_w = vec![0.0f64; count];
    if variant == Variant::Bp {
        for (l, lw) in log_w.iter_mut().enumerate() {
            let mut acc = 0.0;
            if let Some(m) = prev_msg_to_i {
                acc += floored_log_density(m, &belief_i.samples()[l]);
            }
            if let Some(m) = prev_msg_to_j {
                acc += floored_log_density(m, &belief_j.samples()[l]);
            }
            *lw = -acc;
        }
    }
    let (weights, degenerate) = match normalize_log_weights(&log_w) {
        Some(w) => (w, false),
        None => (vec![1.0 / count as f64; count], true),
    };
    let log_weights: Vec<f64> = weights.iter().map(|w| w.ln()).collect();

    // Distances are fixed across the grid; precompute the per-sample factor
    // of the Gaussian exponent.
    let base = chan.rss_dbm - chan.ref_power_dbm;
    let scaled_log_dist: Vec<f64> = (0..count)
        .map(|l| {
            let d = belief_i.samples()[l].clamped_distance_to(&belief_j.samples()[l]);
            10.0 * (d / chan.ref_distance_m).log10()
        })
        .collect();

    let mut log_values = Vec::with_capacity(grid.len());
    let mut terms = vec![0.0f64; count];
    for &alpha in grid {
        for l in 0..count {
            let z = (base + alpha * scaled_log_dist[l]) / chan.noise_std_db;
            terms[l] = log_weights[l] - 0.5 * z * z;
        }
        log_values.push(crate::numeric::logsumexp(&terms));
    }
    Ok((AlphaMessage::from_log(log_values)?, degenerate))
}

/// Updates one directed position message: draws L exponent samples from the
/// grid belief, computes BP or SPAWN importance weights, attaches the
/// analytic normalizer Z per component and re-weights by it
/// (`w_tilde_l ~ Z_l * w_l`).
pub fn update_position_message<R: Rng>(
    rng: &mut R,
    target: NodeId,
    chan: &EdgeChannel,
    belief_j: &ParticleBelief,
    alpha_belief: &AlphaGridBelief,
    prev_msg_to_j: Option<&PositionMessage>,
    prev_alpha_msg: Option<&AlphaMessage>,
    variant: Variant,
) -> Result<(PositionMessage, bool)> {
    let count = belief_j.len();
    let alpha_idx = sample_categorical(rng, alpha_belief.masses(), count)?;

    let mut log_w = vec![0.0f64; count];
    if variant == Variant::Bp {
        for l in 0..count {
            let mut acc = 0.0;
            if let Some(m) = prev_msg_to_j {
                acc += floored_log_density(m, &belief_j.samples()[l]);
            }
            if let Some(m) = prev_alpha_msg {
                acc += m.log_values()[alpha_idx[l]].max(LOG_DENSITY_FLOOR);
            }
            log_w[l] = -acc;
        }
    }

    let mut components = Vec::with_capacity(count);
    let mut raw = Vec::with_capacity(count);
    for l in 0..count {
        let alpha = alpha_belief.grid()[alpha_idx[l]];
        let ln_z = ln_normalizer_z(
            chan.rss_dbm,
            alpha,
            chan.ref_power_dbm,
            chan.noise_std_db,
            chan.ref_distance_m,
        )?;
        components.push((belief_j.samples()[l], alpha, ln_z));
        raw.push(log_w[l] + ln_z);
    }
    let (weights, degenerate) = match normalize_log_weights(&raw) {
        Some(w) => (w, false),
        None => (vec![1.0 / count as f64; count], true),
    };
    let parts: Vec<(f64, Position, f64, f64)> = components
        .into_iter()
        .zip(&weights)
        .map(|((pos, alpha, ln_z), &w)| (w, pos, alpha, ln_z))
        .collect();
    let msg = PositionMessage::new(
        target,
        chan.rss_dbm,
        chan.noise_std_db,
        chan.ref_power_dbm,
        chan.ref_distance_m,
        parts,
    )?;
    Ok((msg, degenerate))
}

/// Pointwise product of the grid prior with all current exponent messages,
/// in log domain, renormalized. A vanished product falls back to uniform.
pub fn update_alpha_belief<'a>(
    grid: &[f64],
    prior_masses: &[f64],
    messages: impl IntoIterator<Item = &'a AlphaMessage>,
) -> Result<(AlphaGridBelief, bool)> {
    let mut log_mass: Vec<f64> = prior_masses.iter().map(|&m| m.ln()).collect();
    for msg in messages {
        for (lm, &lv) in log_mass.iter_mut().zip(msg.log_values()) {
            *lm += lv;
        }
    }
    let lse = crate::numeric::logsumexp(&log_mass);
    if !lse.is_finite() {
        return Ok((
            AlphaGridBelief::new(grid.to_vec(), vec![1.0; grid.len()])?,
            true,
        ));
    }
    let masses: Vec<f64> = log_mass.iter().map(|lm| (lm - lse).exp()).collect();
    Ok((AlphaGridBelief::new(grid.to_vec(), masses)?, false))
}

// ─── Belief updates ──────────────────────────────────────────────────────────

/// Streaming log-sum-exp accumulator.
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, term: f64) {
        if term == f64::NEG_INFINITY {
            return;
        }
        if term <= self.max {
            self.sum += (term - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - term).exp() + 1.0;
            self.max = term;
        }
    }

    fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Log-density of the evenly weighted mixture of polar proposals over all
/// message components. With `picks` set, only the designated component of
/// each message participates (the AIS conditional proposal); otherwise all
/// components weighted by their mixture weights (the MixtureMean proposal).
fn log_polar_mixture_density(
    x: &Position,
    entries: &[(&PositionMessage, &EdgeChannel)],
    picks: Option<&[usize]>,
) -> f64 {
    let ln_j = (entries.len() as f64).ln();
    let mut acc = LogSum::new();
    for (j, (msg, chan)) in entries.iter().enumerate() {
        match picks {
            Some(labels) => {
                let c = msg.components()[labels[j]];
                let model = chan.range_model(c.alpha);
                acc.add(proposal_log_density(x, &c.neighbor, msg.rss_dbm, &model) - ln_j);
            }
            None => {
                for c in msg.components() {
                    if c.weight == 0.0 {
                        continue;
                    }
                    let model = chan.range_model(c.alpha);
                    acc.add(
                        c.weight.ln() + proposal_log_density(x, &c.neighbor, msg.rss_dbm, &model)
                            - ln_j,
                    );
                }
            }
        }
    }
    acc.value()
}

/// Baseline importance-sampling belief update: draw L proposals, weight by
/// prior times the product of incoming message mixtures over the proposal
/// density, then systematic-resample to L equal weights.
/// Cost O(|gamma| L^2).
///
/// With no incoming messages the belief is unchanged. When every weight
/// vanishes, the previous belief is kept and the divergence flag is set.
pub fn update_position_belief_is<R: Rng>(
    rng: &mut R,
    previous: &ParticleBelief,
    messages: &[(&PositionMessage, &EdgeChannel)],
    rect: &PositionRect,
    proposal: IsProposal,
) -> Result<(ParticleBelief, bool)> {
    if messages.is_empty() {
        return Ok((previous.clone(), false));
    }
    let owner = previous.owner();
    let count = previous.len();

    let mut samples = Vec::with_capacity(count);
    match proposal {
        IsProposal::Prior => {
            for _ in 0..count {
                samples.push(rect.sample(rng));
            }
        }
        IsProposal::MixtureMean => {
            let tables: Vec<AliasTable> = messages
                .iter()
                .map(|(m, _)| AliasTable::new(&m.weights().collect::<Vec<_>>()))
                .collect::<Result<_>>()?;
            for _ in 0..count {
                let j = rng.random_range(0..messages.len());
                let k = tables[j].sample(rng);
                let (msg, chan) = messages[j];
                let c = msg.components()[k];
                let model = chan.range_model(c.alpha);
                samples.push(sample_polar(rng, msg.rss_dbm, &c.neighbor, &model));
            }
        }
    }

    let mut log_w = Vec::with_capacity(count);
    for x in &samples {
        let mut lw = if rect.contains(x) { 0.0 } else { f64::NEG_INFINITY };
        if lw == 0.0 {
            for (msg, _) in messages {
                lw += msg.log_density(x);
                if lw == f64::NEG_INFINITY {
                    break;
                }
            }
            if lw > f64::NEG_INFINITY && proposal == IsProposal::MixtureMean {
                lw -= log_polar_mixture_density(x, messages, None);
            }
        }
        log_w.push(lw);
    }

    match normalize_log_weights(&log_w) {
        Some(weights) => {
            let out = resample_systematic(rng, &samples, &weights);
            Ok((ParticleBelief::new(owner, out.samples)?, false))
        }
        None => Ok((previous.clone(), true)),
    }
}

/// Auxiliary importance-sampling belief update: per particle, draw one
/// component label per incoming mixture (by mixture weight), pick one
/// neighbor uniformly, sample the position through that component's polar
/// proposal, and weight by
/// `prior(x) * prod_j f_tilde(r_j | x, comp_j) / mean_j q_j(x | comp_j)`,
/// where `f_tilde = Z^{-1} f` is the normalized likelihood component. The
/// label-probability factors cancel against the label proposal; keeping the
/// per-component normalizers in the product is what makes this sampler
/// target the same belief as the baseline importance sampler.
/// Cost O(|gamma| L).
pub fn update_position_belief_ais<R: Rng>(
    rng: &mut R,
    previous: &ParticleBelief,
    messages: &[(&PositionMessage, &EdgeChannel)],
    rect: &PositionRect,
) -> Result<(ParticleBelief, bool)> {
    if messages.is_empty() {
        return Ok((previous.clone(), false));
    }
    let owner = previous.owner();
    let count = previous.len();
    let tables: Vec<AliasTable> = messages
        .iter()
        .map(|(m, _)| AliasTable::new(&m.weights().collect::<Vec<_>>()))
        .collect::<Result<_>>()?;

    let mut samples = Vec::with_capacity(count);
    let mut log_w = Vec::with_capacity(count);
    let mut labels = vec![0usize; messages.len()];
    for _ in 0..count {
        for (j, table) in tables.iter().enumerate() {
            labels[j] = table.sample(rng);
        }
        let pick = rng.random_range(0..messages.len());
        let (pick_msg, pick_chan) = messages[pick];
        let c = pick_msg.components()[labels[pick]];
        let model = pick_chan.range_model(c.alpha);
        let x = sample_polar(rng, pick_msg.rss_dbm, &c.neighbor, &model);

        let mut lw = if rect.contains(&x) { 0.0 } else { f64::NEG_INFINITY };
        if lw == 0.0 {
            for (j, (msg, chan)) in messages.iter().enumerate() {
                let comp = msg.components()[labels[j]];
                lw += chan.log_likelihood(&x, &comp.neighbor, comp.alpha) - comp.ln_normalizer;
            }
            lw -= log_polar_mixture_density(&x, messages, Some(&labels));
        }
        samples.push(x);
        log_w.push(lw);
    }

    match normalize_log_weights(&log_w) {
        Some(weights) => {
            let out = resample_systematic(rng, &samples, &weights);
            Ok((ParticleBelief::new(owner, out.samples)?, false))
        }
        None => Ok((previous.clone(), true)),
    }
}

// ─── The iteration loop ──────────────────────────────────────────────────────

fn edge_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

struct RunContext<'a> {
    config: &'a EngineConfig,
    geometry: &'a NetworkGeometry,
    priors: &'a Priors,
    gamma: BTreeMap<NodeId, Vec<NodeId>>,
    channels: BTreeMap<(NodeId, NodeId), EdgeChannel>,
    grid: Vec<f64>,
    prior_masses: Vec<f64>,
    agent_ids: Vec<NodeId>,
}

impl RunContext<'_> {
    fn neighbors(&self, id: NodeId) -> &[NodeId] {
        self.gamma.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    fn chan(&self, a: NodeId, b: NodeId) -> &EdgeChannel {
        &self.channels[&edge_key(a, b)]
    }

    /// The exponent message of each edge is computed exactly once per sweep:
    /// while processing agent i, for anchor neighbors always, for agent
    /// neighbors only when j > i.
    fn computes_alpha_message(&self, i: NodeId, j: NodeId) -> bool {
        !self.geometry.is_agent(j) || j > i
    }
}

type MessageMaps = (
    BTreeMap<(NodeId, NodeId), AlphaMessage>,
    BTreeMap<(NodeId, NodeId), PositionMessage>,
);

/// Runs the engine: initial beliefs from the priors, then `max_iterations`
/// sweeps. Fully deterministic given the config seed.
pub fn run(
    config: &EngineConfig,
    geometry: &NetworkGeometry,
    measurements: &MeasurementSet,
    params: &ChannelParams,
    priors: &Priors,
) -> Result<RunHistory> {
    config.validate()?;

    let (grid, prior_masses) = priors.alpha.discretize(config.grid_size)?;
    let mut channels = BTreeMap::new();
    for e in measurements.edges() {
        channels.insert(
            (e.i, e.j),
            EdgeChannel {
                rss_dbm: e.rss_dbm,
                noise_std_db: e.sigma(params),
                ref_power_dbm: params.ref_power_for(e.i),
                ref_distance_m: params.ref_distance_m,
            },
        );
    }
    let ctx = RunContext {
        config,
        geometry,
        priors,
        gamma: measurements.neighbor_sets(),
        channels,
        grid,
        prior_masses,
        agent_ids: geometry.agents().map(|n| n.id).collect(),
    };

    let (mut beliefs, mut alpha_belief) = init_beliefs(
        geometry,
        priors,
        config.particles,
        config.grid_size,
        config.seed,
    )?;

    let mut diagnostics: Vec<DiagnosticEvent> = measurements
        .disconnected_agents
        .iter()
        .map(|&id| DiagnosticEvent {
            iteration: 0,
            node: id,
            kind: DiagnosticKind::DisconnectedAgent,
        })
        .collect();

    let mut snapshots = vec![IterationSnapshot {
        iteration: 0,
        beliefs: beliefs.clone(),
        alpha_belief: alpha_belief.clone(),
    }];

    let mut prev_alpha_msgs: BTreeMap<(NodeId, NodeId), AlphaMessage> = BTreeMap::new();
    let mut prev_pos_msgs: BTreeMap<(NodeId, NodeId), PositionMessage> = BTreeMap::new();

    for n in 1..=config.max_iterations {
        let (cur_alpha_msgs, cur_pos_msgs) = match config.schedule {
            Schedule::Sequential => run_sequential_iteration(
                &ctx,
                n,
                &mut beliefs,
                &alpha_belief,
                &prev_alpha_msgs,
                &prev_pos_msgs,
                &mut diagnostics,
            )?,
            Schedule::Synchronous => run_synchronous_iteration(
                &ctx,
                n,
                &mut beliefs,
                &alpha_belief,
                &prev_alpha_msgs,
                &prev_pos_msgs,
                &mut diagnostics,
            )?,
        };

        let (new_alpha, degenerate) =
            update_alpha_belief(&ctx.grid, &ctx.prior_masses, cur_alpha_msgs.values())?;
        if degenerate {
            diagnostics.push(DiagnosticEvent {
                iteration: n,
                node: 0,
                kind: DiagnosticKind::AlphaProductDegenerate,
            });
        }
        alpha_belief = new_alpha;

        snapshots.push(IterationSnapshot {
            iteration: n,
            beliefs: beliefs.clone(),
            alpha_belief: alpha_belief.clone(),
        });
        prev_alpha_msgs = cur_alpha_msgs;
        prev_pos_msgs = cur_pos_msgs;
    }

    Ok(RunHistory {
        snapshots,
        diagnostics,
        alpha_messages: prev_alpha_msgs,
        position_messages: prev_pos_msgs,
    })
}

fn update_one_belief(
    ctx: &RunContext,
    n: usize,
    agent: NodeId,
    previous: &ParticleBelief,
    incoming: &[(&PositionMessage, &EdgeChannel)],
) -> Result<(ParticleBelief, bool)> {
    let mut rng = stream(
        ctx.config.seed,
        Purpose::BeliefUpdate,
        n as u64,
        agent as u64,
        0,
    );
    match ctx.config.belief_sampler {
        BeliefSampler::Is => update_position_belief_is(
            &mut rng,
            previous,
            incoming,
            &ctx.priors.rect,
            ctx.config.is_proposal,
        ),
        BeliefSampler::Ais => {
            update_position_belief_ais(&mut rng, previous, incoming, &ctx.priors.rect)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_sequential_iteration(
    ctx: &RunContext,
    n: usize,
    beliefs: &mut BTreeMap<NodeId, ParticleBelief>,
    alpha_belief: &AlphaGridBelief,
    prev_alpha_msgs: &BTreeMap<(NodeId, NodeId), AlphaMessage>,
    prev_pos_msgs: &BTreeMap<(NodeId, NodeId), PositionMessage>,
    diagnostics: &mut Vec<DiagnosticEvent>,
) -> Result<MessageMaps> {
    let mut cur_alpha_msgs = BTreeMap::new();
    let mut cur_pos_msgs: BTreeMap<(NodeId, NodeId), PositionMessage> = BTreeMap::new();

    for &i in &ctx.agent_ids {
        for &j in ctx.neighbors(i) {
            if !ctx.computes_alpha_message(i, j) {
                continue;
            }
            let (msg, degenerate) = update_alpha_message(
                &ctx.grid,
                ctx.chan(i, j),
                &beliefs[&i],
                &beliefs[&j],
                prev_pos_msgs.get(&(i, j)),
                prev_pos_msgs.get(&(j, i)),
                ctx.config.variant,
            )?;
            if degenerate {
                diagnostics.push(DiagnosticEvent {
                    iteration: n,
                    node: i,
                    kind: DiagnosticKind::MessageWeightsDegenerate,
                });
            }
            cur_alpha_msgs.insert(edge_key(i, j), msg);
        }

        for &j in ctx.neighbors(i) {
            let mut rng = stream(
                ctx.config.seed,
                Purpose::AlphaDraw,
                n as u64,
                i as u64,
                j as u64,
            );
            let (msg, degenerate) = update_position_message(
                &mut rng,
                i,
                ctx.chan(i, j),
                &beliefs[&j],
                alpha_belief,
                prev_pos_msgs.get(&(j, i)),
                prev_alpha_msgs.get(&edge_key(i, j)),
                ctx.config.variant,
            )?;
            if degenerate {
                diagnostics.push(DiagnosticEvent {
                    iteration: n,
                    node: i,
                    kind: DiagnosticKind::MessageWeightsDegenerate,
                });
            }
            cur_pos_msgs.insert((i, j), msg);
        }

        let incoming: Vec<(&PositionMessage, &EdgeChannel)> = ctx
            .neighbors(i)
            .iter()
            .map(|&j| (&cur_pos_msgs[&(i, j)], ctx.chan(i, j)))
            .collect();
        let (updated, degenerate) = update_one_belief(ctx, n, i, &beliefs[&i], &incoming)?;
        if degenerate {
            diagnostics.push(DiagnosticEvent {
                iteration: n,
                node: i,
                kind: DiagnosticKind::BeliefWeightsDegenerate,
            });
        }
        beliefs.insert(i, updated); // broadcast
    }

    Ok((cur_alpha_msgs, cur_pos_msgs))
}

#[allow(clippy::too_many_arguments)]
fn run_synchronous_iteration(
    ctx: &RunContext,
    n: usize,
    beliefs: &mut BTreeMap<NodeId, ParticleBelief>,
    alpha_belief: &AlphaGridBelief,
    prev_alpha_msgs: &BTreeMap<(NodeId, NodeId), AlphaMessage>,
    prev_pos_msgs: &BTreeMap<(NodeId, NodeId), PositionMessage>,
    diagnostics: &mut Vec<DiagnosticEvent>,
) -> Result<MessageMaps> {
    let frozen = beliefs.clone();

    // All exponent messages from iteration n-1 beliefs, in parallel.
    let alpha_jobs: Vec<(NodeId, NodeId)> = ctx.channels.keys().cloned().collect();
    let alpha_results: Vec<((NodeId, NodeId), (AlphaMessage, bool))> = alpha_jobs
        .par_iter()
        .map(|&(i, j)| {
            let msg = update_alpha_message(
                &ctx.grid,
                ctx.chan(i, j),
                &frozen[&i],
                &frozen[&j],
                prev_pos_msgs.get(&(i, j)),
                prev_pos_msgs.get(&(j, i)),
                ctx.config.variant,
            )?;
            Ok(((i, j), msg))
        })
        .collect::<Result<_>>()?;

    // All position messages toward agents, in parallel.
    let pos_jobs: Vec<(NodeId, NodeId)> = ctx
        .agent_ids
        .iter()
        .flat_map(|&i| ctx.neighbors(i).iter().map(move |&j| (i, j)))
        .collect();
    let pos_results: Vec<((NodeId, NodeId), (PositionMessage, bool))> = pos_jobs
        .par_iter()
        .map(|&(i, j)| {
            let mut rng = stream(
                ctx.config.seed,
                Purpose::AlphaDraw,
                n as u64,
                i as u64,
                j as u64,
            );
            let msg = update_position_message(
                &mut rng,
                i,
                ctx.chan(i, j),
                &frozen[&j],
                alpha_belief,
                prev_pos_msgs.get(&(j, i)),
                prev_alpha_msgs.get(&edge_key(i, j)),
                ctx.config.variant,
            )?;
            Ok(((i, j), msg))
        })
        .collect::<Result<_>>()?;

    let mut cur_alpha_msgs = BTreeMap::new();
    for (key, (msg, degenerate)) in alpha_results {
        if degenerate {
            diagnostics.push(DiagnosticEvent {
                iteration: n,
                node: key.0,
                kind: DiagnosticKind::MessageWeightsDegenerate,
            });
        }
        cur_alpha_msgs.insert(key, msg);
    }
    let mut cur_pos_msgs = BTreeMap::new();
    for (key, (msg, degenerate)) in pos_results {
        if degenerate {
            diagnostics.push(DiagnosticEvent {
                iteration: n,
                node: key.0,
                kind: DiagnosticKind::MessageWeightsDegenerate,
            });
        }
        cur_pos_msgs.insert(key, msg);
    }

    // All belief updates from the frozen beliefs, in parallel.
    let belief_results: Vec<(NodeId, ParticleBelief, bool)> = ctx
        .agent_ids
        .par_iter()
        .map(|&i| {
            let incoming: Vec<(&PositionMessage, &EdgeChannel)> = ctx
                .neighbors(i)
                .iter()
                .map(|&j| (&cur_pos_msgs[&(i, j)], ctx.chan(i, j)))
                .collect();
            let (belief, degenerate) = update_one_belief(ctx, n, i, &frozen[&i], &incoming)?;
            Ok((i, belief, degenerate))
        })
        .collect::<Result<_>>()?;
    for (i, belief, degenerate) in belief_results {
        if degenerate {
            diagnostics.push(DiagnosticEvent {
                iteration: n,
                node: i,
                kind: DiagnosticKind::BeliefWeightsDegenerate,
            });
        }
        beliefs.insert(i, belief);
    }

    Ok((cur_alpha_msgs, cur_pos_msgs))
}
