//! End-to-end stages over a workspace directory.
//!
//! Every stage reads the artifacts of the stages before it from the
//! workspace and writes its own, so the CLI can run them one at a time.
//! The corpus split is recomputed from the corpus and the master seed by
//! every stage that needs it.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::engine::{
    decode, vanilla_ar, write_trace_jsonl, DecodeConfig, DecodeResult, IterationTrace, LengthPolicy,
};
use crate::error::{Error, Result};
use crate::ldlp::{
    collect_dataset, load_dataset, save_dataset, train_ldlp, HeadKind, LdlpModel, LdlpSample,
};
use crate::lm::{train_draft, train_lm, DraftHead, Persist, TargetLm, TrainReport};
use crate::metrics::{aggregate, compute_metrics, write_csv, CostModel, RunReport};
use crate::oracle::{assumption1_probe, write_probe_csv, ProbeReport};
use crate::rng::{derive_seed, Rng};
use crate::scalar::Scalar;
use crate::vocab::{TokenSeq, Vocab};

use super::config::Config;
use super::corpus::{
    corpus_vocab, encode_documents, parse_documents, prompts, split_corpus, Split,
};
use super::report;

pub const CONFIG_FILE: &str = "speclen.conf";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TARGET_FILE: &str = "target.bin";
pub const DRAFT_FILE: &str = "draft.bin";
pub const DATA_TRAIN_FILE: &str = "ldlp_train.bin";
pub const DATA_HELDOUT_FILE: &str = "ldlp_heldout.bin";
pub const RESULTS_DIR: &str = "results";
pub const BENCH_CSV: &str = "bench.csv";
pub const SWEEP_CSV: &str = "threshold_sweep.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const HIST_CSV: &str = "length_hist.csv";
pub const PROBE_CSV: &str = "probe.csv";
pub const BENCH_MD: &str = "bench.md";

/// Decode-session seed streams, offset from the per-prompt streams.
const PROBE_STREAM: u64 = 1 << 32;

/// Length-predictor samples as stored on disk.
pub type Dataset = Vec<LdlpSample<f64>>;

/// A directory holding the corpus, the configuration and every artifact.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub dir: PathBuf,
    pub config: Config,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>, config: Config) -> Self {
        Self {
            dir: dir.into(),
            config,
        }
    }

    /// Uses `config` if given, else `speclen.conf` in the workspace if it
    /// exists, else the defaults.
    pub fn open(dir: impl Into<PathBuf>, config: Option<&Path>) -> Result<Self> {
        let dir = dir.into();
        let default_path = dir.join(CONFIG_FILE);
        let config = match config {
            Some(p) => Config::load(p)?,
            None if default_path.exists() => Config::load(&default_path)?,
            None => Config::default(),
        };
        Ok(Self { dir, config })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn results_dir(&self) -> PathBuf {
        self.dir.join(RESULTS_DIR)
    }

    pub fn result_path(&self, name: &str) -> PathBuf {
        self.results_dir().join(name)
    }

    pub fn corpus_path(&self) -> PathBuf {
        if self.config.corpus.is_absolute() {
            self.config.corpus.clone()
        } else {
            self.dir.join(&self.config.corpus)
        }
    }

    fn require(&self, name: &str, stage: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            return Err(Error::MissingArtifact {
                stage: stage.into(),
                path: p,
            });
        }
        Ok(p)
    }

    pub fn load_vocab(&self) -> Result<Vocab> {
        Vocab::load(self.require(VOCAB_FILE, "train-lm")?)
    }

    pub fn load_target(&self) -> Result<TargetLm<f64>> {
        TargetLm::load(self.require(TARGET_FILE, "train-lm")?)
    }

    pub fn load_draft(&self) -> Result<DraftHead<f64>> {
        DraftHead::load(self.require(DRAFT_FILE, "train-draft")?)
    }

    pub fn load_ldlp(&self, variant: LdlpVariant) -> Result<LdlpModel<f64>> {
        LdlpModel::load(self.require(variant.file(), "train-ldlp")?)
    }

    /// Training and held-out predictor samples.
    pub fn load_datasets(&self) -> Result<(Dataset, Dataset)> {
        Ok((
            load_dataset(self.require(DATA_TRAIN_FILE, "collect")?)?,
            load_dataset(self.require(DATA_HELDOUT_FILE, "collect")?)?,
        ))
    }
}

/// Encoded corpus split into its three parts.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub vocab: Vocab,
    pub split: Split<TokenSeq>,
}

impl Prepared {
    pub fn terminator(&self) -> Option<u32> {
        self.vocab.terminator()
    }

    pub fn train_tokens(&self) -> TokenSeq {
        self.split.train.concat()
    }
}

pub fn prepare(ws: &Workspace) -> Result<Prepared> {
    let path = ws.corpus_path();
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read corpus {}: {e}", path.display()))
    })?;
    let docs = parse_documents(&text);
    let vocab = corpus_vocab(&docs)?;
    let encoded = encode_documents(&vocab, &docs)?;
    let split = split_corpus(&encoded, ws.config.split, ws.config.seed)?;
    Ok(Prepared { vocab, split })
}

fn cap<T>(mut xs: Vec<T>, max: usize) -> Vec<T> {
    if max > 0 {
        xs.truncate(max);
    }
    xs
}

/// Evaluation prompts: the first `prompt_len` tokens of each evaluation document.
pub fn eval_prompts(ws: &Workspace, prep: &Prepared) -> Vec<TokenSeq> {
    cap(
        prompts(&prep.split.eval, ws.config.prompt_len),
        ws.config.max_eval_prompts,
    )
}

/// Length-predictor prompts, split into training and held-out parts.
pub fn ldlp_prompts(ws: &Workspace, prep: &Prepared) -> (Vec<TokenSeq>, Vec<TokenSeq>) {
    let mut all = cap(
        prompts(&prep.split.ldlp, ws.config.prompt_len),
        ws.config.max_ldlp_prompts,
    );
    let n_held = (all.len() as f64 * ws.config.ldlp_holdout).round() as usize;
    let held = all.split_off(all.len() - n_held);
    (all, held)
}

pub fn stage_train_lm(ws: &Workspace) -> Result<TrainReport> {
    // Created first so corpus paths that pass through it resolve.
    fs::create_dir_all(&ws.dir)?;
    let prep = prepare(ws)?;
    let dims = ws.config.dims(prep.vocab.len());
    let (lm, report) = train_lm::<f64>(&prep.train_tokens(), dims, &ws.config.lm)?;
    prep.vocab.save(ws.path(VOCAB_FILE))?;
    lm.save(ws.path(TARGET_FILE))?;
    Ok(report)
}

pub fn stage_train_draft(ws: &Workspace) -> Result<TrainReport> {
    let prep = prepare(ws)?;
    let lm = ws.load_target()?;
    check_vocab(ws, &prep)?;
    let (dh, report) = train_draft(&prep.train_tokens(), &lm, &ws.config.draft)?;
    dh.save(ws.path(DRAFT_FILE))?;
    Ok(report)
}

fn check_vocab(ws: &Workspace, prep: &Prepared) -> Result<()> {
    if ws.load_vocab()? != prep.vocab {
        return Err(Error::VocabMismatch(
            "corpus vocabulary differs from the trained model's; rerun train-lm".into(),
        ));
    }
    Ok(())
}

/// Number of training and held-out samples written.
pub fn stage_collect(ws: &Workspace) -> Result<(usize, usize)> {
    let prep = prepare(ws)?;
    check_vocab(ws, &prep)?;
    let lm = ws.load_target()?;
    let dh = ws.load_draft()?;
    let (train, held) = ldlp_prompts(ws, &prep);
    let c = &ws.config;
    let a = collect_dataset(
        &lm,
        &dh,
        &train,
        c.max_tokens,
        c.k_max_data,
        prep.terminator(),
    )?;
    let b = collect_dataset(
        &lm,
        &dh,
        &held,
        c.max_tokens,
        c.k_max_data,
        prep.terminator(),
    )?;
    save_dataset(&a, ws.path(DATA_TRAIN_FILE))?;
    save_dataset(&b, ws.path(DATA_HELDOUT_FILE))?;
    Ok((a.len(), b.len()))
}

/// The length-predictor trainings the harness compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LdlpVariant {
    /// Regression with the configured penalty.
    Default,
    /// Regression with the penalty disabled.
    NoPenalty,
    /// Classification head.
    Classification,
}

impl LdlpVariant {
    pub const ALL: [LdlpVariant; 3] = [Self::Default, Self::NoPenalty, Self::Classification];

    pub fn file(self) -> &'static str {
        match self {
            Self::Default => "ldlp.bin",
            Self::NoPenalty => "ldlp_no_penalty.bin",
            Self::Classification => "ldlp_classification.bin",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Default => "ldlp",
            Self::NoPenalty => "ldlp-no-penalty",
            Self::Classification => "ldlp-classification",
        }
    }

    pub fn settings(self, c: &Config) -> (f64, HeadKind) {
        match self {
            Self::Default => (c.ldlp.lambda, c.ldlp.head),
            Self::NoPenalty => (1.0, HeadKind::Regression),
            Self::Classification => (c.ldlp.lambda, HeadKind::Classification),
        }
    }
}

pub fn stage_train_ldlp(ws: &Workspace, variant: LdlpVariant) -> Result<TrainReport> {
    let lm = ws.load_target()?;
    let (train, _) = ws.load_datasets()?;
    let (lambda, head) = variant.settings(&ws.config);
    let (model, report) = train_ldlp(&train, lm.dims(), &ws.config.ldlp_config(lambda, head))?;
    model.save(ws.path(variant.file()))?;
    Ok(report)
}

/// Decode outputs and accounting of one method over every prompt.
#[derive(Clone, Debug)]
pub struct MethodRun {
    pub report: RunReport,
    pub outputs: Vec<TokenSeq>,
    pub traces: Vec<Vec<IterationTrace>>,
}

/// Runs one method over all prompts in parallel. `None` is plain
/// autoregressive decoding. Session `i` uses seed stream `i` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_method<S: Scalar>(
    lm: &TargetLm<S>,
    dh: &DraftHead<S>,
    policy: Option<&LengthPolicy<'_, S>>,
    prompts: &[TokenSeq],
    dcfg: &DecodeConfig,
    cost: &CostModel,
    seed: u64,
    method: &str,
    draft_len: Option<String>,
) -> Result<MethodRun> {
    let results: Vec<DecodeResult> = prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = Rng::new(derive_seed(seed, i as u64));
            match policy {
                None => vanilla_ar(lm, p, dcfg, &mut rng),
                Some(pol) => decode(lm, dh, pol, p, dcfg, &mut rng),
            }
        })
        .collect::<Result<_>>()?;
    let reports = results
        .iter()
        .map(|r| compute_metrics(&r.traces, &r.times, cost, r.output.len()))
        .collect::<Result<Vec<_>>>()?;
    let mut report = aggregate(&reports)?;
    report.method = method.to_string();
    report.draft_len = draft_len
        .unwrap_or_else(|| format!("{:.2}", report.n_draft as f64 / report.n_target as f64));
    let (outputs, traces) = results.into_iter().map(|r| (r.output, r.traces)).unzip();
    Ok(MethodRun {
        report,
        outputs,
        traces,
    })
}

/// Fails unless every output equals the reference output token for token.
pub fn check_lossless(run: &MethodRun, reference: &[TokenSeq]) -> Result<()> {
    if run.outputs.len() != reference.len() {
        return Err(Error::NotLossless {
            method: run.report.method.clone(),
            detail: format!(
                "{} outputs for {} prompts",
                run.outputs.len(),
                reference.len()
            ),
        });
    }
    if let Some(i) = run.outputs.iter().zip(reference).position(|(a, b)| a != b) {
        return Err(Error::NotLossless {
            method: format!("{} ({})", run.report.method, run.report.draft_len),
            detail: format!("prompt {i} differs from autoregressive decoding"),
        });
    }
    Ok(())
}

/// Held-out quality of a length predictor.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LdlpEval {
    pub mae: f64,
    pub mean_raw: f64,
    pub best_constant: usize,
    pub best_constant_mae: f64,
    pub n_samples: usize,
}

/// MAE of rounded predictions, capped at `k_max_data`, against the labels,
/// next to the best constant prediction.
pub fn evaluate_ldlp<S: Scalar>(
    model: &LdlpModel<S>,
    samples: &[LdlpSample<S>],
    k_max_data: usize,
) -> Result<LdlpEval> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = samples.len() as f64;
    let mut abs = 0.0;
    let mut raw_sum = 0.0;
    for s in samples {
        let raw = model.raw(&s.embedding, &s.feature)?;
        raw_sum += raw;
        let k = crate::ldlp::clamp_length(raw, k_max_data);
        abs += (k as f64 - s.label as f64).abs();
    }
    let (best_constant, best_constant_mae) = (0..=k_max_data)
        .map(|c| {
            let m = samples
                .iter()
                .map(|s| (c as f64 - s.label as f64).abs())
                .sum::<f64>()
                / n;
            (c, m)
        })
        .fold(
            (0, f64::INFINITY),
            |best, x| if x.1 < best.1 { x } else { best },
        );
    Ok(LdlpEval {
        mae: abs / n,
        mean_raw: raw_sum / n,
        best_constant,
        best_constant_mae,
        n_samples: samples.len(),
    })
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub theta: f64,
    pub ddd: RunReport,
    pub combined: RunReport,
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: LdlpVariant,
    pub lambda: f64,
    pub head: HeadKind,
    pub report: RunReport,
    pub eval: LdlpEval,
}

/// Everything the bench stage measured, in memory.
#[derive(Clone, Debug)]
pub struct BenchOutcome {
    /// Autoregressive baseline first, then the fixed lengths, oracle,
    /// threshold, predictor and combined policies.
    pub main: Vec<MethodRun>,
    pub sweep: Vec<SweepPoint>,
    pub sweep_runs: Vec<(MethodRun, MethodRun)>,
    pub ablation: Vec<AblationRow>,
    pub ablation_runs: Vec<MethodRun>,
    /// Rows `0..=max_len`; columns predictor, predictor without penalty, oracle.
    pub histogram: Vec<[usize; 3]>,
    pub n_prompts: usize,
}

impl BenchOutcome {
    pub fn run(&self, method: &str) -> Option<&MethodRun> {
        self.main.iter().find(|r| r.report.method == method)
    }

    pub fn fixed(&self) -> impl Iterator<Item = &MethodRun> {
        self.main.iter().filter(|r| r.report.method == "fixed")
    }
}

fn drafted_histogram(runs: &[&MethodRun], max_len: usize) -> Vec<[usize; 3]> {
    let mut h = vec![[0usize; 3]; max_len + 1];
    for (col, run) in runs.iter().enumerate() {
        for t in run.traces.iter().flatten() {
            h[t.drafted.min(max_len)][col] += 1;
        }
    }
    h
}

/// Runs every method over the evaluation prompts, checks each against the
/// autoregressive outputs and writes the result files.
pub fn stage_bench(ws: &Workspace) -> Result<BenchOutcome> {
    let prep = prepare(ws)?;
    check_vocab(ws, &prep)?;
    let lm = ws.load_target()?;
    let dh = ws.load_draft()?;
    let models: Vec<LdlpModel<f64>> = LdlpVariant::ALL
        .iter()
        .map(|&v| ws.load_ldlp(v))
        .collect::<Result<_>>()?;
    let (_, heldout) = ws.load_datasets()?;
    let c = &ws.config;
    let prompts = eval_prompts(ws, &prep);
    if prompts.is_empty() {
        return Err(Error::CorpusTooShort(format!(
            "no evaluation document is longer than {} tokens",
            c.prompt_len
        )));
    }
    let dcfg = DecodeConfig::greedy(c.max_tokens, prep.terminator());
    let run = |policy: Option<&LengthPolicy<'_, f64>>, method: &str, len: Option<String>| {
        run_method(
            &lm, &dh, policy, &prompts, &dcfg, &c.cost, c.seed, method, len,
        )
    };

    let ar = run(None, "ar", Some("-".into()))?;
    let reference = ar.outputs.clone();
    let gate = |r: MethodRun| -> Result<MethodRun> {
        check_lossless(&r, &reference)?;
        Ok(r)
    };
    let mut main = vec![gate(ar)?];
    for &k in &c.fixed_lengths {
        main.push(gate(run(
            Some(&LengthPolicy::Fixed(k)),
            "fixed",
            Some(k.to_string()),
        )?)?);
    }
    main.push(gate(run(
        Some(&LengthPolicy::Oracle {
            k_max: c.oracle_k_max,
        }),
        "oracle",
        None,
    )?)?);
    main.push(gate(run(
        Some(&LengthPolicy::Ddd {
            theta: c.theta,
            k_max: c.k_max,
        }),
        "ddd",
        None,
    )?)?);
    let ldlp = &models[0];
    main.push(gate(run(
        Some(&LengthPolicy::Ldlp {
            model: ldlp,
            k_max: c.k_max,
        }),
        "ldlp",
        None,
    )?)?);
    main.push(gate(run(
        Some(&LengthPolicy::Combined {
            model: ldlp,
            theta: c.theta,
            k_max: c.k_max,
        }),
        "ldlp-ddd",
        None,
    )?)?);

    let mut sweep = Vec::new();
    let mut sweep_runs = Vec::new();
    for &theta in &c.thetas {
        let d = gate(run(
            Some(&LengthPolicy::Ddd {
                theta,
                k_max: c.k_max,
            }),
            "ddd",
            None,
        )?)?;
        let m = gate(run(
            Some(&LengthPolicy::Combined {
                model: ldlp,
                theta,
                k_max: c.k_max,
            }),
            "ldlp-ddd",
            None,
        )?)?;
        sweep.push(SweepPoint {
            theta,
            ddd: d.report.clone(),
            combined: m.report.clone(),
        });
        sweep_runs.push((d, m));
    }

    let mut ablation = Vec::new();
    let mut ablation_runs = Vec::new();
    for (variant, model) in LdlpVariant::ALL.iter().zip(&models) {
        let r = gate(run(
            Some(&LengthPolicy::Ldlp {
                model,
                k_max: c.k_max,
            }),
            variant.label(),
            None,
        )?)?;
        let (lambda, head) = variant.settings(c);
        ablation.push(AblationRow {
            variant: *variant,
            lambda,
            head,
            report: r.report.clone(),
            eval: evaluate_ldlp(model, &heldout, c.k_max_data)?,
        });
        ablation_runs.push(r);
    }

    let oracle = main
        .iter()
        .find(|r| r.report.method == "oracle")
        .expect("oracle row");
    let max_len = c.k_max.max(c.oracle_k_max);
    let histogram = drafted_histogram(&[&ablation_runs[0], &ablation_runs[1], oracle], max_len);

    let outcome = BenchOutcome {
        n_prompts: prompts.len(),
        main,
        sweep,
        sweep_runs,
        ablation,
        ablation_runs,
        histogram,
    };
    write_bench_files(ws, &outcome)?;
    Ok(outcome)
}

fn write_bench_files(ws: &Workspace, o: &BenchOutcome) -> Result<()> {
    let dir = ws.results_dir();
    fs::create_dir_all(dir.join("traces"))?;
    let reports: Vec<RunReport> = o.main.iter().map(|r| r.report.clone()).collect();
    let mut buf = Vec::new();
    write_csv(&mut buf, &reports)?;
    fs::write(dir.join(BENCH_CSV), &buf)?;
    fs::write(dir.join(SWEEP_CSV), report::sweep_csv(&o.sweep))?;
    fs::write(dir.join(ABLATION_CSV), report::ablation_csv(&o.ablation))?;
    fs::write(dir.join(HIST_CSV), report::histogram_csv(&o.histogram))?;
    for run in &o.main {
        let name = if run.report.method == "fixed" {
            format!("fixed-{}.jsonl", run.report.draft_len)
        } else {
            format!("{}.jsonl", run.report.method)
        };
        let mut buf = Vec::new();
        for traces in &run.traces {
            write_trace_jsonl(&mut buf, traces)?;
        }
        fs::write(dir.join("traces").join(name), buf)?;
    }
    fs::write(dir.join(BENCH_MD), report::bench_markdown(&ws.config, o))?;
    Ok(())
}

pub fn stage_probe(ws: &Workspace) -> Result<ProbeReport> {
    let prep = prepare(ws)?;
    check_vocab(ws, &prep)?;
    let lm = ws.load_target()?;
    let dh = ws.load_draft()?;
    let tokens = prep.split.eval.concat();
    let mut rng = Rng::new(derive_seed(ws.config.seed, PROBE_STREAM));
    let report = assumption1_probe(
        &lm,
        &dh,
        &tokens,
        ws.config.probe_positions,
        ws.config.probe_max_gap,
        &mut rng,
    )?;
    fs::create_dir_all(ws.results_dir())?;
    let mut buf = Vec::new();
    write_probe_csv(&mut buf, &report)?;
    fs::write(ws.result_path(PROBE_CSV), buf)?;
    Ok(report)
}

/// Training reports and results of a full run.
#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub lm: TrainReport,
    pub draft: TrainReport,
    pub dataset_sizes: (usize, usize),
    pub ldlp: Vec<TrainReport>,
    pub bench: BenchOutcome,
    pub probe: ProbeReport,
}

pub fn run_all(ws: &Workspace) -> Result<PipelineOutcome> {
    let lm = stage_train_lm(ws)?;
    let draft = stage_train_draft(ws)?;
    let dataset_sizes = stage_collect(ws)?;
    let ldlp = LdlpVariant::ALL
        .iter()
        .map(|&v| stage_train_ldlp(ws, v))
        .collect::<Result<Vec<_>>>()?;
    let bench = stage_bench(ws)?;
    let probe = stage_probe(ws)?;
    Ok(PipelineOutcome {
        lm,
        draft,
        dataset_sizes,
        ldlp,
        bench,
        probe,
    })
}
