//! Batch experiment runner: every library module behind one seeded,
//! reproducible subcommand. Each run writes `<out>/<sub>.csv` (raw trials)
//! and `<out>/<sub>.json` (summary embedding the resolved config).
//!
//! Exit codes: 0 success, 2 config error, 3 experiment failure.

mod config;
mod experiments;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use config::{CliError, ParamBag};

#[derive(Parser)]
#[command(name = "prglab", version, about = "Seeded experiment runner for the prglab toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// RNG seed. Falls back to the config file, then PRGLAB_SEED
    /// (ignored under --check, where the fixture seed applies).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON parameter file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory receiving the CSV and JSON artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Parallel trial workers. Output bytes do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Run against the committed fixture and exit 3 on any unmet rule.
    #[arg(long, global = true)]
    check: bool,
    /// Fixture path override for --check.
    #[arg(long, global = true, value_name = "FILE")]
    fixture: Option<PathBuf>,
}

macro_rules! flags {
    ($map:ident; $($field:expr => $key:literal),* $(,)?) => {
        $( if let Some(v) = $field { $map.insert($key.to_string(), serde_json::json!(v)); } )*
    };
}

#[derive(Args)]
struct DesignArgs {
    /// Set size.
    #[arg(long)]
    n: Option<usize>,
    /// Number of sets.
    #[arg(long)]
    t: Option<usize>,
    /// Exact universe size (overrides --c).
    #[arg(long)]
    m: Option<usize>,
    /// Universe constant, m = c n^2.
    #[arg(long)]
    c: Option<usize>,
}

#[derive(Args)]
struct NwReconArgs {
    /// Hard-function arity (f = 0 on n bits).
    #[arg(long)]
    n: Option<usize>,
    /// Generator output length.
    #[arg(long)]
    t: Option<usize>,
    /// Exact universe size (overrides --c).
    #[arg(long)]
    m: Option<usize>,
    /// Universe constant, m = c n^2.
    #[arg(long)]
    c: Option<usize>,
    /// Independent reconstruction trials.
    #[arg(long)]
    trials: Option<u64>,
    /// Reconstruction attempts per trial; 0 means ceil(10 t^2 / gamma).
    #[arg(long)]
    attempts: Option<u64>,
}

#[derive(Args)]
struct DpDecodeArgs {
    /// Base function arity.
    #[arg(long)]
    n: Option<usize>,
    /// Direct-product arity (even).
    #[arg(long)]
    k: Option<usize>,
    /// Oracle correctness level.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Target disagreement bound.
    #[arg(long)]
    delta: Option<f64>,
    /// Decoder iterations per query; 0 means ceil(32 ln(1/delta) / epsilon^2).
    #[arg(long)]
    t_iters: Option<u64>,
    /// Decoder draws.
    #[arg(long)]
    trials: Option<u64>,
    /// Agreement samples per decoder.
    #[arg(long)]
    agreement_samples: Option<u64>,
    /// Oracle model: subset | spread.
    #[arg(long)]
    oracle: Option<String>,
}

#[derive(Args)]
struct GlArgs {
    /// Per-block arity of the tuple function.
    #[arg(long)]
    n: Option<usize>,
    /// Number of blocks.
    #[arg(long)]
    k: Option<usize>,
    /// Decode runs.
    #[arg(long)]
    runs: Option<u64>,
    /// Oracle model: perfect | biased.
    #[arg(long)]
    oracle: Option<String>,
}

#[derive(Args)]
struct FourierSampleArgs {
    /// Function arity when sampling a random function.
    #[arg(long)]
    n: Option<usize>,
    /// Truth-table file (n=<int> header plus hex digits).
    #[arg(long = "fn", value_name = "FILE")]
    fn_file: Option<String>,
    /// Sampling rounds.
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Args)]
struct NatpropArgs {
    /// Function arity.
    #[arg(long)]
    n: Option<usize>,
    /// Agreement margin; 0 means 8 * 2^(-n/2).
    #[arg(long)]
    gamma: Option<f64>,
    /// Learner repetitions per test.
    #[arg(long)]
    reps: Option<u64>,
    /// Trials per phase.
    #[arg(long)]
    trials: Option<u64>,
    /// Learner: fourier | brute.
    #[arg(long)]
    learner: Option<String>,
}

#[derive(Args)]
struct BootstrapArgs {
    /// Pipeline level j; the previous-level oracle computes parity on j-1 bits.
    #[arg(long)]
    level: Option<usize>,
    /// Seeded pipeline attempts.
    #[arg(long)]
    attempts: Option<u64>,
    /// Query budget per attempt.
    #[arg(long)]
    budget: Option<u64>,
    /// Exactness queries per input when validating the returned oracle.
    #[arg(long)]
    checks: Option<u64>,
}

#[derive(Args)]
struct HardLangArgs {
    /// Highest family level exercised.
    #[arg(long)]
    t_max: Option<u64>,
    /// Instances per level.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a combinatorial design and verify its invariants.
    Design(DesignArgs),
    /// Extract next-bit predictors from an all-zero-accepting distinguisher.
    NwRecon(NwReconArgs),
    /// Sample direct-product decoders against a partly-correct oracle.
    DpDecode(DpDecodeArgs),
    /// Run the quantum list decoder against tuple-product circuits.
    Gl(GlArgs),
    /// Fourier-sample a Boolean function and compare with its spectrum.
    FourierSample(FourierSampleArgs),
    /// Test the learner-derived natural property on parities and random tables.
    Natprop(NatpropArgs),
    /// Run one bootstrapping level end to end at toy parameters.
    Bootstrap(BootstrapArgs),
    /// Encode, parse, and evaluate hard-language instances.
    HardLang(HardLangArgs),
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Design(_) => "design",
            Cmd::NwRecon(_) => "nw-recon",
            Cmd::DpDecode(_) => "dp-decode",
            Cmd::Gl(_) => "gl",
            Cmd::FourierSample(_) => "fourier-sample",
            Cmd::Natprop(_) => "natprop",
            Cmd::Bootstrap(_) => "bootstrap",
            Cmd::HardLang(_) => "hard-lang",
        }
    }

    fn flag_map(&self) -> BTreeMap<String, Value> {
        let mut map = BTreeMap::new();
        match self {
            Cmd::Design(a) => {
                flags!(map; a.n => "n", a.t => "t", a.m => "m", a.c => "c");
            }
            Cmd::NwRecon(a) => {
                flags!(map; a.n => "n", a.t => "t", a.m => "m", a.c => "c",
                    a.trials => "trials", a.attempts => "attempts");
            }
            Cmd::DpDecode(a) => {
                flags!(map; a.n => "n", a.k => "k", a.epsilon => "epsilon",
                    a.delta => "delta", a.t_iters => "t-iters", a.trials => "trials",
                    a.agreement_samples => "agreement-samples", a.oracle.as_ref() => "oracle");
            }
            Cmd::Gl(a) => {
                flags!(map; a.n => "n", a.k => "k", a.runs => "runs",
                    a.oracle.as_ref() => "oracle");
            }
            Cmd::FourierSample(a) => {
                flags!(map; a.n => "n", a.fn_file.as_ref() => "fn", a.samples => "samples");
            }
            Cmd::Natprop(a) => {
                flags!(map; a.n => "n", a.gamma => "gamma", a.reps => "reps",
                    a.trials => "trials", a.learner.as_ref() => "learner");
            }
            Cmd::Bootstrap(a) => {
                flags!(map; a.level => "level", a.attempts => "attempts",
                    a.budget => "budget", a.checks => "checks");
            }
            Cmd::HardLang(a) => {
                flags!(map; a.t_max => "t-max", a.trials => "trials");
            }
        }
        map
    }

    fn run(
        &self,
        bag: ParamBag,
        seed: u64,
        workers: usize,
    ) -> Result<report::ExperimentOutput, CliError> {
        match self {
            Cmd::Design(_) => experiments::design(bag, seed, workers),
            Cmd::NwRecon(_) => experiments::nw_recon(bag, seed, workers),
            Cmd::DpDecode(_) => experiments::dp_decode(bag, seed, workers),
            Cmd::Gl(_) => experiments::gl(bag, seed, workers),
            Cmd::FourierSample(_) => experiments::fourier_sample_cmd(bag, seed, workers),
            Cmd::Natprop(_) => experiments::natprop(bag, seed, workers),
            Cmd::Bootstrap(_) => experiments::bootstrap_cmd(bag, seed, workers),
            Cmd::HardLang(_) => experiments::hard_lang(bag, seed, workers),
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    if g.workers == 0 {
        return Err(CliError::config("--workers must be at least 1"));
    }
    let name = cli.cmd.name();
    let fixture = if g.check {
        Some(config::load_fixture(name, g.fixture.as_deref())?)
    } else {
        None
    };
    let file_cfg = match &g.config {
        Some(path) => config::load_config_file(path, name)?,
        None => config::FileConfig::default(),
    };

    let mut bag = ParamBag::new(name);
    if let Some(fx) = &fixture {
        bag.absorb(&fx.params);
    }
    bag.absorb(&file_cfg.params);
    bag.absorb(&cli.cmd.flag_map());

    let seed = match g.seed.or(file_cfg.seed) {
        Some(s) => s,
        None => match &fixture {
            Some(fx) => fx.seed,
            None => config::env_seed()?.ok_or_else(|| {
                CliError::config("no seed: pass --seed, set it in --config, or export PRGLAB_SEED")
            })?,
        },
    };

    let out = cli.cmd.run(bag, seed, g.workers)?;
    report::write_artifacts(&g.out, name, &out)?;
    if let Some(fx) = &fixture {
        report::run_checks(name, &out.metrics, &fx.expect)?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(()) => 0,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(CliError::Experiment(msg)) => {
            eprintln!("experiment error: {msg}");
            3
        }
    };
    std::process::exit(code);
}
