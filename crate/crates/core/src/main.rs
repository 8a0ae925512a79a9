use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use speclen::bench::pipeline::{self, LdlpVariant, Workspace, BENCH_MD, CONFIG_FILE, PROBE_CSV};
use speclen::bench::{periodic_corpus, report, synthetic_prose};
use speclen::engine::write_trace_jsonl;
use speclen::{decode, vanilla_ar, DecodeConfig, LengthPolicy, Rng, Sampling};

#[derive(Parser)]
#[command(
    name = "speclen",
    version,
    about = "Speculative decoding with adaptive draft lengths"
)]
struct Cli {
    /// Directory holding the corpus, configuration and all artifacts.
    #[arg(long, global = true, default_value = "workspace")]
    workspace: PathBuf,
    /// Configuration file; defaults to speclen.conf in the workspace.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the target language model.
    TrainLm,
    /// Train the draft head against the trained target.
    TrainDraft,
    /// Collect length-predictor training data.
    Collect,
    /// Train a length predictor.
    TrainLdlp(TrainLdlpArgs),
    /// Decode one prompt and print the output and per-iteration traces.
    Decode(DecodeArgs),
    /// Run every method over the evaluation prompts and write result tables.
    Bench,
    /// Measure draft agreement against the distance from true history.
    Probe,
    /// Render the result tables as Markdown.
    Report,
    /// Run every stage in order.
    RunAll,
    /// Write a generated corpus and a default configuration into the workspace.
    GenCorpus(GenCorpusArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Head {
    Regression,
    Classification,
}

#[derive(Args)]
struct TrainLdlpArgs {
    #[arg(long, value_enum, default_value = "regression")]
    head: Head,
    /// Override the penalty coefficient; 1 disables the penalty.
    #[arg(long)]
    lambda: Option<f64>,
    /// Train every variant the bench compares.
    #[arg(long, conflicts_with_all = ["head", "lambda"])]
    all: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Ar,
    Fixed,
    Oracle,
    Ddd,
    Ldlp,
    Combined,
}

#[derive(Args)]
struct DecodeArgs {
    /// Prompt text.
    prompt: String,
    #[arg(long, value_enum, default_value = "ldlp")]
    policy: Policy,
    /// Draft length for the fixed policy.
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    stochastic: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-iteration traces as JSON lines to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorpusKind {
    Prose,
    Periodic,
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long, value_enum, default_value = "prose")]
    kind: CorpusKind,
    #[arg(long, default_value_t = 1200)]
    docs: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output path; defaults to the configured corpus path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let ws = Workspace::open(&cli.workspace, cli.config.as_deref())
        .with_context(|| format!("loading configuration for {}", cli.workspace.display()))?;
    match cli.command {
        Command::TrainLm => {
            let r = pipeline::stage_train_lm(&ws).context("train-lm")?;
            println!(
                "target: loss {:.4} -> {:.4} over {} steps",
                r.initial_loss, r.final_loss, r.steps
            );
        }
        Command::TrainDraft => {
            let r = pipeline::stage_train_draft(&ws).context("train-draft")?;
            println!(
                "draft head: loss {:.4} -> {:.4} over {} steps",
                r.initial_loss, r.final_loss, r.steps
            );
        }
        Command::Collect => {
            let (a, b) = pipeline::stage_collect(&ws).context("collect")?;
            println!("collected {a} training and {b} held-out samples");
        }
        Command::TrainLdlp(args) => train_ldlp(&ws, &args)?,
        Command::Decode(args) => run_decode(&ws, &args)?,
        Command::Bench => {
            let o = pipeline::stage_bench(&ws).context("bench")?;
            print_bench(&o);
            println!("wrote {}", ws.result_path(BENCH_MD).display());
        }
        Command::Probe => {
            let r = pipeline::stage_probe(&ws).context("probe")?;
            for (gap, rate) in r.agreement_by_gap() {
                println!("gap {gap}: agreement {rate:.3}");
            }
            println!(
                "nearer cut agrees at least as often in {:.3} of samples",
                r.dominance_fraction
            );
            println!("wrote {}", ws.result_path(PROBE_CSV).display());
        }
        Command::Report => {
            let md = report::render_report(&ws.results_dir()).context("report")?;
            fs::write(ws.result_path("report.md"), &md)?;
            print!("{md}");
        }
        Command::RunAll => {
            let o = pipeline::run_all(&ws).context("run-all")?;
            println!(
                "target loss {:.4} -> {:.4}",
                o.lm.initial_loss, o.lm.final_loss
            );
            println!(
                "draft loss {:.4} -> {:.4}",
                o.draft.initial_loss, o.draft.final_loss
            );
            println!(
                "length data: {} training, {} held-out samples",
                o.dataset_sizes.0, o.dataset_sizes.1
            );
            print_bench(&o.bench);
        }
        Command::GenCorpus(args) => {
            let text = match args.kind {
                CorpusKind::Prose => synthetic_prose(args.docs, args.seed),
                CorpusKind::Periodic => periodic_corpus("the cat sat on the mat. ", 8, args.docs),
            };
            let out = args.out.unwrap_or_else(|| ws.corpus_path());
            if let Some(parent) = out.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&out, text)?;
            fs::create_dir_all(&ws.dir)?;
            let conf = ws.path(CONFIG_FILE);
            if !conf.exists() {
                fs::write(&conf, ws.config.to_text())?;
            }
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn train_ldlp(ws: &Workspace, args: &TrainLdlpArgs) -> Result<()> {
    let variants: Vec<LdlpVariant> = if args.all {
        LdlpVariant::ALL.to_vec()
    } else {
        let v = match (args.head, args.lambda) {
            (Head::Classification, _) => LdlpVariant::Classification,
            (Head::Regression, Some(1.0)) => LdlpVariant::NoPenalty,
            (Head::Regression, Some(l)) if l != ws.config.ldlp.lambda => {
                let mut ws = ws.clone();
                ws.config.ldlp.lambda = l;
                let r =
                    pipeline::stage_train_ldlp(&ws, LdlpVariant::Default).context("train-ldlp")?;
                println!(
                    "ldlp (lambda {l}): loss {:.4} -> {:.4}",
                    r.initial_loss, r.final_loss
                );
                return Ok(());
            }
            (Head::Regression, _) => LdlpVariant::Default,
        };
        vec![v]
    };
    for v in variants {
        let r = pipeline::stage_train_ldlp(ws, v).context("train-ldlp")?;
        println!(
            "{}: loss {:.4} -> {:.4}",
            v.label(),
            r.initial_loss,
            r.final_loss
        );
    }
    Ok(())
}

fn run_decode(ws: &Workspace, args: &DecodeArgs) -> Result<()> {
    let vocab = ws.load_vocab()?;
    let lm = ws.load_target()?;
    let c = &ws.config;
    let prompt = vocab.encode(&args.prompt).context("encoding prompt")?;
    let cfg = DecodeConfig {
        max_tokens: args.max_tokens.unwrap_or(c.max_tokens),
        mode: if args.stochastic {
            Sampling::Stochastic
        } else {
            Sampling::Greedy
        },
        terminator: vocab.terminator(),
    };
    let mut rng = Rng::new(args.seed);
    let result = if let Policy::Ar = args.policy {
        vanilla_ar(&lm, &prompt, &cfg, &mut rng)?
    } else {
        let dh = ws.load_draft()?;
        let needs_ldlp = matches!(args.policy, Policy::Ldlp | Policy::Combined);
        let model = if needs_ldlp {
            Some(ws.load_ldlp(LdlpVariant::Default)?)
        } else {
            None
        };
        let policy = match args.policy {
            Policy::Fixed => LengthPolicy::Fixed(args.k),
            Policy::Oracle => LengthPolicy::Oracle {
                k_max: c.oracle_k_max,
            },
            Policy::Ddd => LengthPolicy::Ddd {
                theta: c.theta,
                k_max: c.k_max,
            },
            Policy::Ldlp => LengthPolicy::Ldlp {
                model: model.as_ref().unwrap(),
                k_max: c.k_max,
            },
            Policy::Combined => LengthPolicy::Combined {
                model: model.as_ref().unwrap(),
                theta: c.theta,
                k_max: c.k_max,
            },
            Policy::Ar => unreachable!(),
        };
        decode(&lm, &dh, &policy, &prompt, &cfg, &mut rng)?
    };
    let text = vocab.decode(&result.output)?;
    println!(
        "{}{}",
        args.prompt,
        text.trim_end_matches(speclen::vocab::TERMINATOR_SYMBOL)
    );
    let n = result.output.len();
    if n == 0 {
        bail!("no tokens generated");
    }
    println!(
        "{} tokens in {} target passes (tau {:.2}), {:.1} ms",
        n,
        result.traces.len(),
        n as f64 / result.traces.len() as f64,
        result.times.total.as_secs_f64() * 1e3
    );
    if let Some(path) = &args.trace {
        write_trace_jsonl(fs::File::create(path)?, &result.traces)?;
    }
    Ok(())
}

fn print_bench(o: &pipeline::BenchOutcome) {
    println!(
        "{:<18} {:>9} {:>7} {:>8} {:>9} {:>9} {:>8}",
        "method", "draft_len", "tau", "speedup", "N_draft", "N_target", "N_waste"
    );
    for r in &o.main {
        let r = &r.report;
        println!(
            "{:<18} {:>9} {:>7.3} {:>8.3} {:>9} {:>9} {:>8}",
            r.method, r.draft_len, r.tau, r.speedup, r.n_draft, r.n_target, r.n_waste
        );
    }
}
