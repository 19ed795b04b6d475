//! `verify`: check the Markov-potential-game identity for a game file or a
//! generated structured game. Exit 0 when the check passes at the
//! tolerance, 1 when it fails, 2 on unreadable or malformed input.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mpgmerge::tabular::{
    parse_game_text, random_mixed_game, random_pairwise_game, random_self_reward_game,
    random_zero_sum_counterexample, write_game_text, GameFile, RandomGameSpec, VerifyMpgOptions,
};

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Game file in the text format; must carry a candidate potential
    #[arg(long, value_name = "FILE", required_unless_present = "generate", conflicts_with = "generate")]
    input: Option<PathBuf>,

    /// Generate a random structured game and check it instead
    #[arg(long, value_name = "KIND", value_enum)]
    generate: Option<GenerateKind>,

    /// RNG seed for generation and deviation sampling
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Unilateral deviations sampled by the checker
    #[arg(long, default_value_t = 200)]
    deviations: usize,

    /// Pass threshold on the maximum violation
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,

    /// Write the (generated or parsed) game in the text format
    #[arg(long, value_name = "FILE")]
    emit: Option<PathBuf>,

    /// Write the JSON report to this file as well as stdout
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

/// Random-game families with a known potential construction, plus a
/// coupled zero-sum family whose candidate potential must be rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenerateKind {
    /// Independent per-agent chains, rewards on own state-action only
    #[value(alias = "theorem3")]
    SelfReward,
    /// Independent chains, symmetric pairwise state rewards
    #[value(alias = "theorem4")]
    Pairwise,
    /// Independent chains, weighted self plus symmetric pairwise rewards
    #[value(alias = "theorem5")]
    Mixed,
    /// Zero-sum action-coupled game with a deliberately wrong candidate
    Counterexample,
}

impl GenerateKind {
    fn name(self) -> &'static str {
        match self {
            GenerateKind::SelfReward => "self-reward",
            GenerateKind::Pairwise => "pairwise",
            GenerateKind::Mixed => "mixed",
            GenerateKind::Counterexample => "counterexample",
        }
    }
}

fn generate(kind: GenerateKind, seed: u64) -> anyhow::Result<GameFile<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = RandomGameSpec {
        states_per_agent: vec![2, 2],
        actions_per_agent: vec![2, 3],
        gamma: 0.9,
    };
    let file = match kind {
        GenerateKind::SelfReward => compiled(random_self_reward_game(&spec, &mut rng).compile()?),
        GenerateKind::Pairwise => compiled(random_pairwise_game(&spec, &mut rng).compile()?),
        GenerateKind::Mixed => compiled(random_mixed_game(&spec, &mut rng).compile()?),
        GenerateKind::Counterexample => {
            let (game, phi) = random_zero_sum_counterexample(&mut rng);
            GameFile { game, factorization: None, potential: Some(phi) }
        }
    };
    Ok(file)
}

fn compiled(c: mpgmerge::tabular::CompiledGame<f64>) -> GameFile<f64> {
    GameFile { game: c.game, factorization: Some(c.factorization), potential: Some(c.potential) }
}

pub fn run(args: VerifyArgs) -> anyhow::Result<u8> {
    let (source, file) = match (&args.input, args.generate) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading game file {}", path.display()))?;
            let file = parse_game_text::<f64>(&text)
                .with_context(|| format!("parsing game file {}", path.display()))?;
            (path.display().to_string(), file)
        }
        (None, Some(kind)) => {
            (format!("--generate {} --seed {}", kind.name(), args.seed), generate(kind, args.seed)?)
        }
        _ => anyhow::bail!("give exactly one of --input FILE or --generate KIND"),
    };

    if let Some(path) = &args.emit {
        std::fs::write(path, write_game_text(&file))
            .with_context(|| format!("writing {}", path.display()))?;
    }

    let phi = file
        .potential
        .as_ref()
        .context("the game carries no candidate potential, so there is nothing to verify")?;
    let opts = VerifyMpgOptions { n_deviations: args.deviations, tol: args.tol, seed: args.seed };
    let outcome = mpgmerge::tabular::verify_mpg(&file.game, phi, file.factorization.as_ref(), &opts)?;

    let report = serde_json::json!({
        "source": source,
        "agents": file.game.n_agents(),
        "states": file.game.n_states(),
        "decentralized_policy_class": file.factorization.is_some(),
        "n_deviations": outcome.n_deviations,
        "tol": opts.tol,
        "max_violation": outcome.max_violation,
        "max_violation_avg": outcome.max_violation_avg,
        "passed": outcome.passed,
    });
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(path) = &args.report {
        std::fs::write(path, format!("{text}\n"))
            .with_context(|| format!("writing {}", path.display()))?;
    }

    Ok(if outcome.passed { 0 } else { 1 })
}
