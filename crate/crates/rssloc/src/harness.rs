//! Experiment harness: bundled layouts, random network generation,
//! Monte Carlo experiment execution with parameter sweeps, and the
//! belief-update timing benchmark.
//!
//! The default parameter block mirrors the reference setup: A = -30 dBm,
//! d0 = 1 m, sigma = 3 dB, communication range 20 m, L = 1000 particles,
//! R = 100 grid points over an exponent prior U[1.5, 6], 10 iterations,
//! position prior equal to the bounding rectangle of all nodes.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::belief::{AlphaGridBelief, AlphaPrior, ParticleBelief, PositionRect, Priors};
use crate::channel::{
    read_network_file, synthesize_measurements, ChannelParams, NetworkGeometry, Node, NodeId,
    NodeRole, Position,
};
use crate::engine::{
    self, update_position_belief_ais, update_position_belief_is, update_position_message,
    DiagnosticKind, EdgeChannel, EngineConfig, IsProposal, Variant,
};
use crate::estimate::{alpha_point_estimate, compute_metrics, kde_mode, RunEstimate, RunMetrics};
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// Default communication range in meters.
pub const DEFAULT_COMM_RANGE_M: f64 = 20.0;

/// Channel defaults: A = -30 dBm at d0 = 1 m, sigma = 3 dB.
pub fn default_channel_params() -> ChannelParams {
    ChannelParams::new(-30.0, 1.0, 3.0).expect("defaults are valid")
}

/// Priors used by the experiments: position uniform over the bounding
/// rectangle of all nodes, exponent uniform over [1.5, 6].
pub fn default_priors(geometry: &NetworkGeometry) -> Result<Priors> {
    let (x_min, x_max, y_min, y_max) = geometry.bounding_rect();
    Ok(Priors {
        rect: PositionRect::new(x_min, x_max, y_min, y_max)?,
        alpha: AlphaPrior::Uniform { lo: 1.5, hi: 6.0 },
    })
}

/// Coordinates of the ten-agent layout whose agents all sit inside the
/// anchors' convex hull ("network2"). Anchors are placed by the corner +
/// center rule on the enclosing [0, 35]^2 square.
const NETWORK2_AGENTS: [(f64, f64); 10] = [
    (8.318573, 12.067195),
    (7.000000, 28.000000),
    (10.985717, 2.504516),
    (15.000000, 33.000000),
    (14.071792, 18.409607),
    (18.502847, 3.062930),
    (20.322322, 31.614010),
    (20.671522, 13.566139),
    (28.442789, 24.064806),
    (28.936394, 9.749019),
];

fn corner_center_anchors(rect: &PositionRect, first_id: NodeId) -> Vec<Node> {
    let spots = [
        (rect.x_min, rect.y_min),
        (rect.x_max, rect.y_min),
        (rect.x_max, rect.y_max),
        (rect.x_min, rect.y_max),
        (
            0.5 * (rect.x_min + rect.x_max),
            0.5 * (rect.y_min + rect.y_max),
        ),
    ];
    spots
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| Node {
            id: first_id + k as NodeId,
            role: NodeRole::Anchor,
            position: Position::new(x, y),
        })
        .collect()
}

fn agents_from(coords: &[(f64, f64)]) -> Vec<Node> {
    coords
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| Node {
            id: 1 + k as NodeId,
            role: NodeRole::Agent,
            position: Position::new(x, y),
        })
        .collect()
}

/// Bundled layouts:
/// - `network2_agents`: the ten fixed agents above, anchors at the corners
///   and center of [0, 35]^2 (all agents inside the anchor hull).
/// - `network1_like`: a reconstruction with anchors on [10, 25]^2 and 3 of
///   10 agents outside the anchor hull.
/// - `demo_random`: a seeded random 10-agent/5-anchor layout on [0, 35]^2.
///
/// All come with the default 20 m communication range; use
/// [`NetworkGeometry::with_comm_range`] to change it.
pub fn load_bundled_network(name: &str) -> Result<NetworkGeometry> {
    let square = PositionRect::new(0.0, 35.0, 0.0, 35.0)?;
    match name {
        "network2_agents" => {
            let mut nodes = agents_from(&NETWORK2_AGENTS);
            nodes.extend(corner_center_anchors(&square, 11));
            NetworkGeometry::new(nodes, DEFAULT_COMM_RANGE_M)
        }
        "network1_like" => {
            let agents = [
                (2.0, 5.0),
                (5.0, 32.0),
                (33.0, 18.0),
                (12.0, 12.0),
                (15.0, 20.0),
                (18.0, 14.0),
                (20.0, 22.0),
                (22.0, 11.0),
                (14.0, 24.0),
                (24.0, 16.0),
            ];
            let inner = PositionRect::new(10.0, 25.0, 10.0, 25.0)?;
            let mut nodes = agents_from(&agents);
            nodes.extend(corner_center_anchors(&inner, 11));
            NetworkGeometry::new(nodes, DEFAULT_COMM_RANGE_M)
        }
        "demo_random" => {
            let mut rng = stream(7, Purpose::Experiment, 0, 0, 0);
            generate_random_network(&mut rng, 10, 5, &square)
        }
        other => Err(Error::config(format!(
            "unknown bundled network '{other}' (expected network2_agents|network1_like|demo_random)"
        ))),
    }
}

/// Random layout: agents uniform in the rectangle; with exactly five
/// anchors they go to the four corners plus the center, otherwise anchors
/// are uniform as well. Deterministic given the RNG state.
pub fn generate_random_network<R: Rng>(
    rng: &mut R,
    n_agents: usize,
    n_anchors: usize,
    rect: &PositionRect,
) -> Result<NetworkGeometry> {
    if n_agents == 0 || n_anchors == 0 {
        return Err(Error::config("need at least one agent and one anchor"));
    }
    let mut nodes: Vec<Node> = (0..n_agents)
        .map(|k| Node {
            id: 1 + k as NodeId,
            role: NodeRole::Agent,
            position: rect.sample(rng),
        })
        .collect();
    let first_anchor = 1 + n_agents as NodeId;
    if n_anchors == 5 {
        nodes.extend(corner_center_anchors(rect, first_anchor));
    } else {
        nodes.extend((0..n_anchors).map(|k| Node {
            id: first_anchor + k as NodeId,
            role: NodeRole::Anchor,
            position: rect.sample(rng),
        }));
    }
    NetworkGeometry::new(nodes, DEFAULT_COMM_RANGE_M)
}

// ─── Experiments ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub enum GeometrySource {
    Bundled(String),
    File(PathBuf),
    Random {
        n_agents: usize,
        n_anchors: usize,
        rect: PositionRect,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    AlphaTrue,
    CommRange,
    Sigma,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::AlphaTrue => "alpha_true",
            SweepAxis::CommRange => "comm_range",
            SweepAxis::Sigma => "sigma",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha_true" => Ok(SweepAxis::AlphaTrue),
            "comm_range" => Ok(SweepAxis::CommRange),
            "sigma" => Ok(SweepAxis::Sigma),
            other => Err(Error::config(format!(
                "unknown sweep axis '{other}' (expected alpha_true|comm_range|sigma)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub geometry: GeometrySource,
    pub comm_range_m: f64,
    pub ref_power_dbm: f64,
    pub ref_distance_m: f64,
    pub noise_std_db: f64,
    pub alpha_true: f64,
    pub alpha_prior: (f64, f64),
    pub engine: EngineConfig,
    pub n_runs: usize,
    pub sweep: Option<Sweep>,
}

impl ExperimentSpec {
    /// Defaults mirroring the reference setup on the bundled network.
    pub fn preset(network: &str) -> Self {
        ExperimentSpec {
            geometry: GeometrySource::Bundled(network.to_string()),
            comm_range_m: DEFAULT_COMM_RANGE_M,
            ref_power_dbm: -30.0,
            ref_distance_m: 1.0,
            noise_std_db: 3.0,
            alpha_true: 3.5,
            alpha_prior: (1.5, 6.0),
            engine: EngineConfig::default(),
            n_runs: 1,
            sweep: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::config("n_runs must be >= 1"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep values must be non-empty"));
            }
            if sweep.values.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::config("sweep values must be strictly increasing"));
            }
        }
        self.engine.validate()
    }

    pub fn channel_params(&self) -> Result<ChannelParams> {
        ChannelParams::new(self.ref_power_dbm, self.ref_distance_m, self.noise_std_db)
    }

    pub fn load_geometry(&self) -> Result<NetworkGeometry> {
        let geo = match &self.geometry {
            GeometrySource::Bundled(name) => load_bundled_network(name)?,
            GeometrySource::File(path) => read_network_file(path, self.comm_range_m)?,
            GeometrySource::Random {
                n_agents,
                n_anchors,
                rect,
            } => {
                let mut rng = stream(self.engine.seed, Purpose::Experiment, 1, 0, 0);
                generate_random_network(&mut rng, *n_agents, *n_anchors, rect)?
            }
        };
        geo.with_comm_range(self.comm_range_m)
    }
}

/// Result row for one sweep value.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub metrics: RunMetrics,
    pub divergent_runs: usize,
    /// Engine seed of every run in this row, in run order (replay handle).
    pub run_seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub wall_seconds: f64,
}

/// One engine run inside an experiment: synthesize measurements for the
/// effective parameters, run the engine, extract point estimates.
fn single_run(
    spec: &ExperimentSpec,
    base_geometry: &NetworkGeometry,
    axis: SweepAxis,
    value: f64,
    run_seed: u64,
) -> Result<(RunEstimate, usize)> {
    let mut alpha_true = spec.alpha_true;
    let mut comm_range = spec.comm_range_m;
    let mut sigma = spec.noise_std_db;
    match axis {
        SweepAxis::AlphaTrue => alpha_true = value,
        SweepAxis::CommRange => comm_range = value,
        SweepAxis::Sigma => sigma = value,
    }
    let geometry = base_geometry.clone().with_comm_range(comm_range)?;
    let params = ChannelParams::new(spec.ref_power_dbm, spec.ref_distance_m, sigma)?;
    let priors = Priors {
        rect: {
            let (x_min, x_max, y_min, y_max) = geometry.bounding_rect();
            PositionRect::new(x_min, x_max, y_min, y_max)?
        },
        alpha: AlphaPrior::Uniform {
            lo: spec.alpha_prior.0,
            hi: spec.alpha_prior.1,
        },
    };

    let mut synth_rng = stream(run_seed, Purpose::Synthesis, 0, 0, 0);
    let measurements = synthesize_measurements(&mut synth_rng, &geometry, &params, alpha_true)?;

    let mut config = spec.engine.clone();
    config.seed = run_seed;
    let history = engine::run(&config, &geometry, &measurements, &params, &priors)?;

    let final_state = history.final_snapshot();
    let positions: BTreeMap<NodeId, Position> = geometry
        .agents()
        .map(|a| (a.id, kde_mode(final_state.beliefs[&a.id].samples())))
        .collect();
    let estimate = RunEstimate {
        alpha_hat: alpha_point_estimate(&final_state.alpha_belief).alpha,
        positions,
    };
    let divergences = history
        .diagnostics
        .iter()
        .filter(|d| d.kind == DiagnosticKind::BeliefWeightsDegenerate)
        .count();
    Ok((estimate, divergences))
}

/// Runs the full experiment: for each sweep value, `n_runs` independent
/// seeded runs (executed in parallel, reduced in deterministic order),
/// aggregated into one metrics row per value. A spec without a sweep is
/// treated as a single-value sweep over `alpha_true`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentTable> {
    spec.validate()?;
    let started = Instant::now();
    let base_geometry = spec.load_geometry()?;
    let (axis, values) = match &spec.sweep {
        Some(sweep) => (sweep.axis, sweep.values.clone()),
        None => (SweepAxis::AlphaTrue, vec![spec.alpha_true]),
    };
    let truths: BTreeMap<NodeId, Position> = base_geometry
        .agents()
        .map(|a| (a.id, a.position))
        .collect();

    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|vi| (0..spec.n_runs).map(move |run| (vi, run)))
        .collect();
    let results: Vec<((usize, usize), (RunEstimate, usize), u64)> = jobs
        .par_iter()
        .map(|&(vi, run)| {
            let run_seed = stream(spec.engine.seed, Purpose::Experiment, 2, vi as u64, run as u64)
                .random::<u64>();
            let outcome = single_run(spec, &base_geometry, axis, values[vi], run_seed)?;
            Ok(((vi, run), outcome, run_seed))
        })
        .collect::<Result<_>>()?;

    let mut per_value: Vec<(Vec<RunEstimate>, usize, Vec<u64>)> =
        values.iter().map(|_| (Vec::new(), 0, Vec::new())).collect();
    let mut ordered = results;
    ordered.sort_by_key(|(key, _, _)| *key);
    for ((vi, _), (estimate, divergences), seed) in ordered {
        per_value[vi].0.push(estimate);
        per_value[vi].1 += divergences;
        per_value[vi].2.push(seed);
    }

    let mut rows = Vec::with_capacity(values.len());
    for (vi, (estimates, divergent_runs, run_seeds)) in per_value.into_iter().enumerate() {
        let alpha_true = match axis {
            SweepAxis::AlphaTrue => values[vi],
            _ => spec.alpha_true,
        };
        let metrics = compute_metrics(&estimates, alpha_true, &truths)?;
        rows.push(SweepRow {
            sweep_value: values[vi],
            metrics,
            divergent_runs,
            run_seeds,
        });
    }
    Ok(ExperimentTable {
        axis,
        rows,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

// ─── Complexity benchmark ────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy)]
pub struct BenchRow {
    pub particles: usize,
    pub median_is_seconds: f64,
    pub median_ais_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    /// Least-squares slopes of log(time) over log(L).
    pub slope_is: f64,
    pub slope_ais: f64,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

fn fit_loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Times the two belief-update samplers on a fixed one-agent instance with
/// four anchor neighbors, across particle counts. Message construction is
/// excluded from the timed section; the median over `reps` repetitions is
/// reported per L, along with fitted log-log slopes.
pub fn bench_belief_update(l_values: &[usize], reps: usize) -> Result<BenchTable> {
    if l_values.len() < 3 {
        return Err(Error::config("bench needs at least 3 particle counts"));
    }
    let anchors = [
        Position::new(0.0, 0.0),
        Position::new(20.0, 0.0),
        Position::new(20.0, 20.0),
        Position::new(0.0, 20.0),
    ];
    let rect = PositionRect::new(-5.0, 25.0, -5.0, 25.0)?;
    let alpha_belief = AlphaGridBelief::from_prior(&AlphaPrior::Uniform { lo: 1.5, hi: 6.0 }, 100)?;

    let mut rows = Vec::with_capacity(l_values.len());
    for (li, &particles) in l_values.iter().enumerate() {
        if particles < 2 {
            return Err(Error::config("bench particle counts must be >= 2"));
        }
        // Fixed measurements corresponding to distances around 10-14 m at
        // alpha 3; exact values are irrelevant for timing.
        let chans: Vec<EdgeChannel> = (0..anchors.len())
            .map(|k| EdgeChannel {
                rss_dbm: -60.0 - 2.0 * k as f64,
                noise_std_db: 3.0,
                ref_power_dbm: -30.0,
                ref_distance_m: 1.0,
            })
            .collect();
        let mut msg_rng = stream(11, Purpose::AlphaDraw, li as u64, 0, 0);
        let messages: Vec<crate::belief::PositionMessage> = anchors
            .iter()
            .zip(&chans)
            .map(|(a, chan)| {
                let dirac = ParticleBelief::dirac(99, *a, particles);
                update_position_message(
                    &mut msg_rng,
                    1,
                    chan,
                    &dirac,
                    &alpha_belief,
                    None,
                    None,
                    Variant::Spawn,
                )
                .map(|(m, _)| m)
            })
            .collect::<Result<_>>()?;
        let incoming: Vec<(&crate::belief::PositionMessage, &EdgeChannel)> =
            messages.iter().zip(chans.iter()).collect();

        let mut prior_rng = stream(13, Purpose::InitBelief, li as u64, 0, 0);
        let samples: Vec<Position> = (0..particles).map(|_| rect.sample(&mut prior_rng)).collect();
        let previous = ParticleBelief::new(1, samples)?;

        let mut is_times = Vec::with_capacity(reps);
        let mut ais_times = Vec::with_capacity(reps);
        for rep in 0..reps {
            let mut rng = stream(17, Purpose::BeliefUpdate, li as u64, rep as u64, 0);
            let t = Instant::now();
            let _ = update_position_belief_is(
                &mut rng,
                &previous,
                &incoming,
                &rect,
                IsProposal::MixtureMean,
            )?;
            is_times.push(t.elapsed().as_secs_f64());

            let mut rng = stream(19, Purpose::BeliefUpdate, li as u64, rep as u64, 1);
            let t = Instant::now();
            let _ = update_position_belief_ais(&mut rng, &previous, &incoming, &rect)?;
            ais_times.push(t.elapsed().as_secs_f64());
        }
        rows.push(BenchRow {
            particles,
            median_is_seconds: median(is_times),
            median_ais_seconds: median(ais_times),
        });
    }

    let is_points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.particles as f64, r.median_is_seconds))
        .collect();
    let ais_points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.particles as f64, r.median_ais_seconds))
        .collect();
    Ok(BenchTable {
        slope_is: fit_loglog_slope(&is_points),
        slope_ais: fit_loglog_slope(&ais_points),
        rows,
    })
}
