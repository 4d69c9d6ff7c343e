//! Point estimates from beliefs and the error metrics used by experiments.

use std::collections::BTreeMap;

use crate::belief::AlphaGridBelief;
use crate::channel::{NodeId, Position};
use crate::{Error, Result};

/// Kernel-density mode of a particle cloud: Gaussian product kernel with a
/// per-axis Silverman bandwidth (`1.06 * std * L^{-1/5}`), evaluated at every
/// sample location; the argmax sample is returned. O(L^2), deterministic,
/// ties break toward the lower sample index.
pub fn kde_mode(samples: &[Position]) -> Position {
    samples[kde_mode_index(samples)]
}

pub(crate) fn kde_mode_index(samples: &[Position]) -> usize {
    assert!(!samples.is_empty(), "kde_mode needs at least one sample");
    let n = samples.len();
    if n == 1 {
        return 0;
    }
    let nf = n as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for s in samples {
        mx += s.x;
        my += s.y;
    }
    mx /= nf;
    my /= nf;
    let (mut vx, mut vy) = (0.0, 0.0);
    for s in samples {
        vx += (s.x - mx) * (s.x - mx);
        vy += (s.y - my) * (s.y - my);
    }
    let scale = nf.powf(-0.2);
    // Degenerate axes (zero spread) contribute nothing to the kernel; the
    // tiny floor only prevents 0/0.
    let hx = (1.06 * (vx / (nf - 1.0)).sqrt() * scale).max(1e-12);
    let hy = (1.06 * (vy / (nf - 1.0)).sqrt() * scale).max(1e-12);

    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (k, center) in samples.iter().enumerate() {
        let mut score = 0.0;
        for s in samples {
            let dx = (s.x - center.x) / hx;
            let dy = (s.y - center.y) / hy;
            score += (-0.5 * (dx * dx + dy * dy)).exp();
        }
        if score > best_score {
            best_score = score;
            best = k;
        }
    }
    best
}

/// Grid-argmax point estimate of the path loss exponent.
#[derive(Debug, Clone, Copy)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub index: usize,
    /// Set when another grid point carries exactly the maximal mass; the
    /// estimate is then the smallest such grid point by convention.
    pub tied: bool,
}

pub fn alpha_point_estimate(belief: &AlphaGridBelief) -> AlphaEstimate {
    let masses = belief.masses();
    let mut index = 0usize;
    for (k, &m) in masses.iter().enumerate() {
        if m > masses[index] {
            index = k;
        }
    }
    let tied = masses
        .iter()
        .enumerate()
        .any(|(k, &m)| k != index && m == masses[index]);
    AlphaEstimate {
        alpha: belief.grid()[index],
        index,
        tied,
    }
}

/// One Monte Carlo run's point estimates.
#[derive(Debug, Clone)]
pub struct RunEstimate {
    pub alpha_hat: f64,
    pub positions: BTreeMap<NodeId, Position>,
}

/// Aggregated error metrics over a set of runs.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    /// Mean over runs of (alpha_hat - alpha_true)^2.
    pub mse_alpha: f64,
    /// Mean(alpha_hat) - alpha_true.
    pub bias_alpha: f64,
    /// sqrt(mean over runs and agents of squared position error), meters.
    pub rmse_positions: f64,
    /// Per-agent RMSE over runs, meters.
    pub per_agent_rmse: BTreeMap<NodeId, f64>,
    pub n_runs: usize,
}

pub fn compute_metrics(
    runs: &[RunEstimate],
    alpha_true: f64,
    true_positions: &BTreeMap<NodeId, Position>,
) -> Result<RunMetrics> {
    if runs.is_empty() {
        return Err(Error::config("metrics need at least one run"));
    }
    for run in runs {
        if run.positions.len() != true_positions.len()
            || run.positions.keys().any(|id| !true_positions.contains_key(id))
        {
            return Err(Error::config("estimate/truth agent sets differ"));
        }
    }
    let n = runs.len() as f64;
    let mse_alpha = runs
        .iter()
        .map(|r| (r.alpha_hat - alpha_true) * (r.alpha_hat - alpha_true))
        .sum::<f64>()
        / n;
    let bias_alpha = runs.iter().map(|r| r.alpha_hat).sum::<f64>() / n - alpha_true;

    let mut per_agent_sq: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut total_sq = 0.0;
    let mut total_count = 0usize;
    for run in runs {
        for (id, est) in &run.positions {
            let err = est.distance_to(&true_positions[id]);
            *per_agent_sq.entry(*id).or_insert(0.0) += err * err;
            total_sq += err * err;
            total_count += 1;
        }
    }
    let per_agent_rmse = per_agent_sq
        .into_iter()
        .map(|(id, sq)| (id, (sq / n).sqrt()))
        .collect();
    Ok(RunMetrics {
        mse_alpha,
        bias_alpha,
        rmse_positions: (total_sq / total_count as f64).sqrt(),
        per_agent_rmse,
        n_runs: runs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn kde_mode_of_identical_samples() {
        let p = Position::new(3.5, -2.0);
        assert_eq!(kde_mode(&vec![p; 10]), p);
        assert_eq!(kde_mode(&[p]), p);
    }

    /// Dense-grid KDE scan oracle for a sample cloud.
    fn grid_scan_mode(samples: &[Position], step: f64) -> Position {
        let n = samples.len() as f64;
        let (mut mx, mut my, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
        for s in samples {
            mx += s.x;
            my += s.y;
        }
        mx /= n;
        my /= n;
        for s in samples {
            vx += (s.x - mx) * (s.x - mx);
            vy += (s.y - my) * (s.y - my);
        }
        let hx = 1.06 * (vx / (n - 1.0)).sqrt() * n.powf(-0.2);
        let hy = 1.06 * (vy / (n - 1.0)).sqrt() * n.powf(-0.2);
        let (x_lo, x_hi) = samples.iter().fold((f64::MAX, f64::MIN), |a, s| {
            (a.0.min(s.x), a.1.max(s.x))
        });
        let (y_lo, y_hi) = samples.iter().fold((f64::MAX, f64::MIN), |a, s| {
            (a.0.min(s.y), a.1.max(s.y))
        });
        let mut best = Position::new(x_lo, y_lo);
        let mut best_score = f64::NEG_INFINITY;
        let mut x = x_lo;
        while x <= x_hi {
            let mut y = y_lo;
            while y <= y_hi {
                let mut score = 0.0;
                for s in samples {
                    let dx = (s.x - x) / hx;
                    let dy = (s.y - y) / hy;
                    score += (-0.5 * (dx * dx + dy * dy)).exp();
                }
                if score > best_score {
                    best_score = score;
                    best = Position::new(x, y);
                }
                y += step;
            }
            x += step;
        }
        best
    }

    #[test]
    fn kde_mode_finds_dominant_cluster() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mut samples = Vec::new();
        for _ in 0..900 {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            samples.push(Position::new(dx, dy));
        }
        for _ in 0..100 {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            samples.push(Position::new(10.0 + dx, 10.0 + dy));
        }
        let mode = kde_mode(&samples);
        assert!(mode.distance_to(&Position::new(0.0, 0.0)) < 1.0, "mode {mode:?}");
        let oracle = grid_scan_mode(&samples, 0.1);
        assert!(mode.distance_to(&oracle) < 0.5, "mode {mode:?} oracle {oracle:?}");
    }

    #[test]
    fn kde_mode_near_mean_for_gaussian_cloud() {
        for seed in 0..20 {
            let mut rng = ChaCha12Rng::seed_from_u64(100 + seed);
            let samples: Vec<Position> = (0..1000)
                .map(|_| {
                    let dx: f64 = rng.sample(StandardNormal);
                    let dy: f64 = rng.sample(StandardNormal);
                    Position::new(dx, dy)
                })
                .collect();
            let n = samples.len() as f64;
            let mean = samples.iter().fold(Position::new(0.0, 0.0), |a, s| {
                Position::new(a.x + s.x / n, a.y + s.y / n)
            });
            let mode = kde_mode(&samples);
            assert!(
                mode.distance_to(&mean) < 0.5,
                "seed {seed}: mode {mode:?} mean {mean:?}"
            );
        }
    }

    #[test]
    fn kde_mode_is_translation_equivariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let samples: Vec<Position> = (0..200)
            .map(|_| Position::new(rng.random::<f64>() * 4.0, rng.random::<f64>() * 4.0))
            .collect();
        let idx = kde_mode_index(&samples);
        let shifted: Vec<Position> = samples
            .iter()
            .map(|s| Position::new(s.x + 128.0, s.y - 64.0))
            .collect();
        assert_eq!(kde_mode_index(&shifted), idx);
    }

    #[test]
    fn alpha_estimate_reference_cases() {
        let uniform = AlphaGridBelief::new(vec![2.0, 3.0, 4.0], vec![1.0, 1.0, 1.0]).unwrap();
        let est = alpha_point_estimate(&uniform);
        assert_eq!(est.alpha, 2.0);
        assert!(est.tied);

        let unit = AlphaGridBelief::new(vec![2.0, 3.0, 4.0], vec![0.0, 0.0, 1.0]).unwrap();
        let est = alpha_point_estimate(&unit);
        assert_eq!(est.alpha, 4.0);
        assert!(!est.tied);

        // Pointwise product (0.2,0.5,0.3)*(0.1,0.6,0.3) normalized:
        // (0.048780..., 0.731707..., 0.219512...) peaks in the middle.
        let prod = AlphaGridBelief::new(vec![2.0, 3.0, 4.0], vec![0.02, 0.30, 0.09]).unwrap();
        let est = alpha_point_estimate(&prod);
        assert_eq!(est.index, 1);
        assert!(!est.tied);
    }

    #[test]
    fn metrics_reference_cases() {
        let truth: BTreeMap<NodeId, Position> = [(1u32, Position::new(0.0, 0.0))].into();

        // Perfect estimates.
        let runs = vec![
            RunEstimate {
                alpha_hat: 3.0,
                positions: truth.clone()
            };
            3
        ];
        let m = compute_metrics(&runs, 3.0, &truth).unwrap();
        assert_eq!(m.mse_alpha, 0.0);
        assert_eq!(m.bias_alpha, 0.0);
        assert_eq!(m.rmse_positions, 0.0);

        // Symmetric alpha errors: bias 0, mse 0.01.
        let runs = vec![
            RunEstimate { alpha_hat: 3.1, positions: truth.clone() },
            RunEstimate { alpha_hat: 2.9, positions: truth.clone() },
        ];
        let m = compute_metrics(&runs, 3.0, &truth).unwrap();
        assert!(m.bias_alpha.abs() < 1e-14);
        assert!((m.mse_alpha - 0.01).abs() < 1e-14);

        // A single (3, 4) error vector gives RMSE 5.
        let runs = vec![RunEstimate {
            alpha_hat: 3.0,
            positions: [(1u32, Position::new(3.0, 4.0))].into(),
        }];
        let m = compute_metrics(&runs, 3.0, &truth).unwrap();
        assert!((m.rmse_positions - 5.0).abs() < 1e-12);
        assert!((m.per_agent_rmse[&1] - 5.0).abs() < 1e-12);

        // Mismatched agent sets are a config error.
        let bad = vec![RunEstimate { alpha_hat: 3.0, positions: BTreeMap::new() }];
        assert!(compute_metrics(&bad, 3.0, &truth).is_err());
        assert!(compute_metrics(&[], 3.0, &truth).is_err());
    }

    #[test]
    fn mse_decomposes_into_bias_and_variance() {
        let truth: BTreeMap<NodeId, Position> = [(1u32, Position::new(0.0, 0.0))].into();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let runs: Vec<RunEstimate> = (0..200)
            .map(|_| RunEstimate {
                alpha_hat: 3.2 + 0.4 * rng.random::<f64>(),
                positions: truth.clone(),
            })
            .collect();
        let m = compute_metrics(&runs, 3.0, &truth).unwrap();
        let mean: f64 = runs.iter().map(|r| r.alpha_hat).sum::<f64>() / runs.len() as f64;
        let var: f64 = runs
            .iter()
            .map(|r| (r.alpha_hat - mean) * (r.alpha_hat - mean))
            .sum::<f64>()
            / runs.len() as f64;
        assert!((m.mse_alpha - (m.bias_alpha * m.bias_alpha + var)).abs() < 1e-12);
        assert!(m.mse_alpha >= m.bias_alpha * m.bias_alpha);
    }
}
