use rssloc::belief::{AlphaPrior, PositionRect, Priors};
use rssloc::channel::*;
use rssloc::engine::{self, BeliefSampler, EngineConfig, IsProposal};
use rssloc::estimate::{alpha_point_estimate, kde_mode};
use rssloc::harness::load_bundled_network;
use rssloc::rng::{stream, Purpose};

fn main() {
    let geometry = load_bundled_network("network2_agents").unwrap();
    let params = ChannelParams::new(-30.0, 1.0, 3.0).unwrap();
    let (x0, x1, y0, y1) = geometry.bounding_rect();
    let priors = Priors {
        rect: PositionRect::new(x0, x1, y0, y1).unwrap(),
        alpha: AlphaPrior::Uniform { lo: 1.5, hi: 6.0 },
    };
    let n_agents = geometry.agents().count() as f64;

    for (name, sampler, proposal) in [
        ("spawn-ais", BeliefSampler::Ais, IsProposal::MixtureMean),
        ("spawn-is/mixture", BeliefSampler::Is, IsProposal::MixtureMean),
        ("spawn-is/prior", BeliefSampler::Is, IsProposal::Prior),
    ] {
        let mut ok_alpha = 0;
        let mut sum_r10 = 0.0;
        let seeds = 6u64;
        for seed in 0..seeds {
            let mut rng = stream(seed, Purpose::Synthesis, 0, 0, 0);
            let ms = synthesize_measurements(&mut rng, &geometry, &params, 3.5).unwrap();
            let config = EngineConfig {
                particles: 1000,
                seed,
                belief_sampler: sampler,
                is_proposal: proposal,
                ..Default::default()
            };
            let hist = engine::run(&config, &geometry, &ms, &params, &priors).unwrap();
            let snap = hist.final_snapshot();
            let mut sq = 0.0;
            for a in geometry.agents() {
                let mode = kde_mode(snap.beliefs[&a.id].samples());
                sq += mode.distance_to(&a.position).powi(2);
            }
            let r10 = (sq / n_agents).sqrt();
            sum_r10 += r10;
            let ah = alpha_point_estimate(&snap.alpha_belief).alpha;
            if (ah - 3.5).abs() <= 0.5 { ok_alpha += 1; }
            println!("  {name} seed {seed}: alpha_hat={ah:.3} rmse10={r10:.2}");
        }
        println!("{name}: alpha ok {ok_alpha}/{seeds} mean rmse10 {:.2}\n", sum_r10 / seeds as f64);
    }
}
