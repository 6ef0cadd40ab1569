//! `rprae` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 corrupt data or
//! checkpoint.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{Direction, EvalArgs, StageSel, TrainArgs};
use config::RunConfig;
use rprae::{Error, Result};

#[derive(Parser)]
#[command(name = "rprae", version, about = "Paired recurrent autoencoders for action/description translation")]
struct Cli {
    /// `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (for `translate`, the output file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override one setting, e.g. `--set train.lr=0.003`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    A2d,
    D2a,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic motion/caption corpus.
    GenData {
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
    },
    /// Train a model (stage 1, stage 2 or both).
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        stage: StageArg,
        #[arg(long)]
        paired_count: Option<usize>,
        /// Continue from a checkpoint written by a previous run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Comma-separated seeds; each trains into `<out>/seed-<s>`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Stop after this many iterations and save `last.ckpt`.
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Score models on the test partition.
    Eval {
        /// Model checkpoint; repeat for a multi-seed mean ± std.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        /// Reference model for back-translation; omitted skips experiment 2.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        /// Back-translate with the model under test instead of the reference.
        #[arg(long)]
        self_back_translate: bool,
    },
    /// Translate one motion (a2d) or caption (d2a).
    Translate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        direction: DirectionArg,
        #[arg(long)]
        input: PathBuf,
    },
    /// Project test-set latents to 2-D, one CSV per modality.
    Project {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Corrupt(_) | Error::Shape(_) => 3,
        _ => 2,
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| Error::Usage("--out is required".into()))
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = resolve_config(cli)?;
    let out = out_dir(cli)?;
    match &cli.command {
        Command::GenData { classes, per_class } => {
            if let Some(c) = classes {
                cfg.gen.classes = *c;
            }
            if let Some(p) = per_class {
                cfg.gen.per_class = *p;
            }
            commands::gen_data(&cfg, out)
        }
        Command::Train { corpus, stage, paired_count, resume, seeds, max_steps } => {
            if let Some(k) = paired_count {
                cfg.train.paired_count = *k;
            }
            let args = TrainArgs {
                corpus,
                stage: match stage {
                    StageArg::One => StageSel::One,
                    StageArg::Two => StageSel::Two,
                    StageArg::Both => StageSel::Both,
                },
                resume: resume.as_deref(),
                max_steps: *max_steps,
            };
            if seeds.is_empty() {
                return commands::train(&cfg, out, &args);
            }
            if resume.is_some() && seeds.len() > 1 {
                return Err(Error::Usage("--resume applies to a single run; pass one seed".into()));
            }
            for &seed in seeds {
                let cfg = RunConfig { seed, ..cfg.clone() };
                commands::train(&cfg, &out.join(format!("seed-{seed}")), &args)?;
            }
            Ok(())
        }
        Command::Eval { models, reference, corpus, self_back_translate } => {
            cfg.self_back_translate |= *self_back_translate;
            commands::eval(&cfg, out, &EvalArgs { models, reference: reference.as_deref(), corpus })
        }
        Command::Translate { model, direction, input } => {
            let direction = match direction {
                DirectionArg::A2d => Direction::A2d,
                DirectionArg::D2a => Direction::D2a,
            };
            commands::translate(model, direction, input, out)
        }
        Command::Project { model, corpus } => commands::project(model, corpus, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
