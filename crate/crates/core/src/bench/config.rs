//! `key = value` configuration file.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error so typos do not silently fall back to defaults. Lists are comma
//! separated.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ldlp::{HeadKind, LdlpTrainConfig};
use crate::lm::{DraftTrainConfig, LmDims, Schedule, TrainConfig};
use crate::metrics::CostModel;

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    /// Corpus path, relative to the workspace unless absolute.
    pub corpus: PathBuf,
    /// Fractions of documents for model training, length-predictor data and
    /// evaluation prompts.
    pub split: [f64; 3],
    pub prompt_len: usize,
    pub max_tokens: usize,
    /// Upper bound on evaluation prompts; 0 uses all.
    pub max_eval_prompts: usize,
    /// Upper bound on length-predictor prompts; 0 uses all.
    pub max_ldlp_prompts: usize,
    /// Fraction of length-predictor prompts held out for the MAE check.
    pub ldlp_holdout: f64,

    pub window: usize,
    pub embed: usize,
    pub feature: usize,
    pub lm: TrainConfig,
    pub draft: DraftTrainConfig,
    pub ldlp: LdlpTrainConfig,
    /// Learning rate, batch size and epochs of the original large-scale recipe,
    /// recorded for reference. The desk-scale values above are used.
    pub ldlp_reference: (f64, usize, usize),
    pub k_max: usize,
    pub k_max_data: usize,
    pub oracle_k_max: usize,
    pub fixed_lengths: Vec<usize>,
    pub theta: f64,
    pub thetas: Vec<f64>,
    pub cost: CostModel,
    pub probe_positions: usize,
    pub probe_max_gap: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 20240607,
            corpus: PathBuf::from("corpus.txt"),
            split: [0.7, 0.15, 0.15],
            prompt_len: 32,
            max_tokens: 128,
            max_eval_prompts: 0,
            max_ldlp_prompts: 0,
            ldlp_holdout: 0.2,
            window: LmDims::DEFAULT_WINDOW,
            embed: LmDims::DEFAULT_EMBED,
            feature: LmDims::DEFAULT_FEATURE,
            lm: TrainConfig {
                learning_rate: 0.2,
                epochs: 4,
                batch_size: 16,
                seed: 1,
                schedule: Schedule::Cosine,
            },
            draft: DraftTrainConfig {
                train: TrainConfig {
                    learning_rate: 0.2,
                    epochs: 4,
                    batch_size: 16,
                    seed: 2,
                    schedule: Schedule::Cosine,
                },
                alpha: 1.0,
            },
            ldlp: LdlpTrainConfig {
                train: TrainConfig {
                    learning_rate: 0.01,
                    epochs: 5,
                    batch_size: 32,
                    seed: 3,
                    schedule: Schedule::Cosine,
                },
                lambda: 2.0,
                head: HeadKind::Regression,
                k_max: 8,
            },
            ldlp_reference: (5e-5, 128, 5),
            k_max: 8,
            k_max_data: 10,
            oracle_k_max: 10,
            fixed_lengths: vec![2, 3, 4, 5, 6],
            theta: -0.6,
            thetas: vec![-0.2, -0.4, -0.6, -0.8, -1.0],
            cost: CostModel::default(),
            probe_positions: 2000,
            probe_max_gap: 8,
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config {
        line,
        msg: format!("cannot parse {v:?} for {key}"),
    })
}

fn parse_list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| parse(line, key, x.trim())).collect()
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected key = value, got {content:?}"),
            })?;
            let (key, v) = (key.trim(), value.trim());
            c.set(line, key, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        fn schedule(line: usize, v: &str) -> Result<Schedule> {
            match v {
                "cosine" => Ok(Schedule::Cosine),
                "constant" => Ok(Schedule::Constant),
                _ => Err(Error::Config {
                    line,
                    msg: format!("unknown schedule {v:?}, expected cosine or constant"),
                }),
            }
        }
        match key {
            "seed" => self.seed = parse(line, key, v)?,
            "corpus" => self.corpus = PathBuf::from(v),
            "split" => {
                let r: Vec<f64> = parse_list(line, key, v)?;
                if r.len() != 3 {
                    return Err(Error::Config {
                        line,
                        msg: "split needs three ratios".into(),
                    });
                }
                self.split = [r[0], r[1], r[2]];
            }
            "prompt_len" => self.prompt_len = parse(line, key, v)?,
            "max_tokens" => self.max_tokens = parse(line, key, v)?,
            "max_eval_prompts" => self.max_eval_prompts = parse(line, key, v)?,
            "max_ldlp_prompts" => self.max_ldlp_prompts = parse(line, key, v)?,
            "ldlp_holdout" => self.ldlp_holdout = parse(line, key, v)?,
            "lm.window" => self.window = parse(line, key, v)?,
            "lm.embed" => self.embed = parse(line, key, v)?,
            "lm.feature" => self.feature = parse(line, key, v)?,
            "lm.lr" => self.lm.learning_rate = parse(line, key, v)?,
            "lm.epochs" => self.lm.epochs = parse(line, key, v)?,
            "lm.batch" => self.lm.batch_size = parse(line, key, v)?,
            "lm.seed" => self.lm.seed = parse(line, key, v)?,
            "lm.schedule" => self.lm.schedule = schedule(line, v)?,
            "draft.lr" => self.draft.train.learning_rate = parse(line, key, v)?,
            "draft.epochs" => self.draft.train.epochs = parse(line, key, v)?,
            "draft.batch" => self.draft.train.batch_size = parse(line, key, v)?,
            "draft.seed" => self.draft.train.seed = parse(line, key, v)?,
            "draft.schedule" => self.draft.train.schedule = schedule(line, v)?,
            "draft.alpha" => self.draft.alpha = parse(line, key, v)?,
            "ldlp.lr" => self.ldlp.train.learning_rate = parse(line, key, v)?,
            "ldlp.epochs" => self.ldlp.train.epochs = parse(line, key, v)?,
            "ldlp.batch" => self.ldlp.train.batch_size = parse(line, key, v)?,
            "ldlp.seed" => self.ldlp.train.seed = parse(line, key, v)?,
            "ldlp.schedule" => self.ldlp.train.schedule = schedule(line, v)?,
            "ldlp.lambda" => self.ldlp.lambda = parse(line, key, v)?,
            "ldlp.reference_lr" => self.ldlp_reference.0 = parse(line, key, v)?,
            "ldlp.reference_batch" => self.ldlp_reference.1 = parse(line, key, v)?,
            "ldlp.reference_epochs" => self.ldlp_reference.2 = parse(line, key, v)?,
            "k_max" => self.k_max = parse(line, key, v)?,
            "k_max_data" => self.k_max_data = parse(line, key, v)?,
            "oracle.k_max" => self.oracle_k_max = parse(line, key, v)?,
            "fixed_lengths" => self.fixed_lengths = parse_list(line, key, v)?,
            "ddd.theta" => self.theta = parse(line, key, v)?,
            "ddd.thetas" => self.thetas = parse_list(line, key, v)?,
            "cost.target" => self.cost.c_target = parse(line, key, v)?,
            "cost.draft" => self.cost.c_draft = parse(line, key, v)?,
            "cost.policy" => self.cost.c_policy = parse(line, key, v)?,
            "probe.positions" => self.probe_positions = parse(line, key, v)?,
            "probe.max_gap" => self.probe_max_gap = parse(line, key, v)?,
            _ => {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key {key:?}"),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("config: {msg}")));
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|&r| r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return bad(format!(
                "split ratios must be >= 0 and sum to 1, got {:?}",
                self.split
            ));
        }
        if self.prompt_len == 0 || self.max_tokens == 0 {
            return bad("prompt_len and max_tokens must be positive".into());
        }
        if !(0.0..1.0).contains(&self.ldlp_holdout) {
            return bad(format!(
                "ldlp_holdout must be in [0, 1), got {}",
                self.ldlp_holdout
            ));
        }
        if self.k_max == 0 || self.k_max_data == 0 || self.oracle_k_max == 0 {
            return bad("k_max, k_max_data and oracle.k_max must be positive".into());
        }
        if self.fixed_lengths.contains(&0) {
            return bad("fixed lengths must be positive".into());
        }
        if self.theta > 0.0 || self.thetas.iter().any(|&t| t > 0.0) {
            return bad("log-probability thresholds must be <= 0".into());
        }
        if self.probe_max_gap < 2 {
            return bad("probe.max_gap must be at least 2".into());
        }
        self.lm.validate()?;
        self.draft.train.validate()?;
        let mut ldlp = self.ldlp.clone();
        ldlp.k_max = self.k_max;
        ldlp.validate()?;
        self.cost.validate()?;
        self.dims(1).validate()
    }

    pub fn dims(&self, vocab: usize) -> LmDims {
        LmDims {
            window: self.window,
            embed: self.embed,
            feature: self.feature,
            vocab,
        }
    }

    /// Length-predictor training settings with the given penalty and head.
    pub fn ldlp_config(&self, lambda: f64, head: HeadKind) -> LdlpTrainConfig {
        LdlpTrainConfig {
            lambda,
            head,
            k_max: self.k_max,
            ..self.ldlp.clone()
        }
    }

    /// Documented `key = value` rendering of every setting.
    pub fn to_text(&self) -> String {
        let sched = |s: Schedule| match s {
            Schedule::Cosine => "cosine",
            Schedule::Constant => "constant",
        };
        let join_f = |xs: &[f64]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let join_u = |xs: &[usize]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        format!(
            "# speclen configuration. Paths are relative to the workspace directory.\n\
             \n\
             # Master seed for the corpus split and all decode sessions.\n\
             seed = {}\n\
             corpus = {}\n\
             # Document fractions: model training, length-predictor data, evaluation.\n\
             split = {}\n\
             # Prompts are the first prompt_len tokens of a document.\n\
             prompt_len = {}\n\
             max_tokens = {}\n\
             # 0 means use every available prompt.\n\
             max_eval_prompts = {}\n\
             max_ldlp_prompts = {}\n\
             ldlp_holdout = {}\n\
             \n\
             # Target model.\n\
             lm.window = {}\n\
             lm.embed = {}\n\
             lm.feature = {}\n\
             lm.lr = {}\n\
             lm.epochs = {}\n\
             lm.batch = {}\n\
             lm.seed = {}\n\
             lm.schedule = {}\n\
             \n\
             # Draft head. alpha weighs the feature regression term.\n\
             draft.lr = {}\n\
             draft.epochs = {}\n\
             draft.batch = {}\n\
             draft.seed = {}\n\
             draft.schedule = {}\n\
             draft.alpha = {}\n\
             \n\
             # Length predictor. These desk-scale values are the ones used.\n\
             ldlp.lr = {}\n\
             ldlp.epochs = {}\n\
             ldlp.batch = {}\n\
             ldlp.seed = {}\n\
             ldlp.schedule = {}\n\
             ldlp.lambda = {}\n\
             # Large-scale reference recipe, recorded but not used.\n\
             ldlp.reference_lr = {}\n\
             ldlp.reference_batch = {}\n\
             ldlp.reference_epochs = {}\n\
             \n\
             # Length caps at inference, in the training labels and for the oracle.\n\
             k_max = {}\n\
             k_max_data = {}\n\
             oracle.k_max = {}\n\
             fixed_lengths = {}\n\
             \n\
             # Cumulative draft log-probability thresholds.\n\
             ddd.theta = {}\n\
             ddd.thetas = {}\n\
             \n\
             # Modeled cost per target pass, draft step and length prediction.\n\
             cost.target = {}\n\
             cost.draft = {}\n\
             cost.policy = {}\n\
             \n\
             probe.positions = {}\n\
             probe.max_gap = {}\n",
            self.seed,
            self.corpus.display(),
            join_f(&self.split),
            self.prompt_len,
            self.max_tokens,
            self.max_eval_prompts,
            self.max_ldlp_prompts,
            self.ldlp_holdout,
            self.window,
            self.embed,
            self.feature,
            self.lm.learning_rate,
            self.lm.epochs,
            self.lm.batch_size,
            self.lm.seed,
            sched(self.lm.schedule),
            self.draft.train.learning_rate,
            self.draft.train.epochs,
            self.draft.train.batch_size,
            self.draft.train.seed,
            sched(self.draft.train.schedule),
            self.draft.alpha,
            self.ldlp.train.learning_rate,
            self.ldlp.train.epochs,
            self.ldlp.train.batch_size,
            self.ldlp.train.seed,
            sched(self.ldlp.train.schedule),
            self.ldlp.lambda,
            self.ldlp_reference.0,
            self.ldlp_reference.1,
            self.ldlp_reference.2,
            self.k_max,
            self.k_max_data,
            self.oracle_k_max,
            join_u(&self.fixed_lengths),
            self.theta,
            join_f(&self.thetas),
            self.cost.c_target,
            self.cost.c_draft,
            self.cost.c_policy,
            self.probe_positions,
            self.probe_max_gap,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_text() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn overrides_and_comments() {
        let c = Config::parse(
            "# comment\n\nseed = 7\nddd.thetas = -0.1, -0.3\nlm.schedule = constant\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.thetas, vec![-0.1, -0.3]);
        assert_eq!(c.lm.schedule, Schedule::Constant);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = Config::parse("seed = 1\n\nnonsense\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }), "{e}");
        let e = Config::parse("seed = x\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }));
        let e = Config::parse("a.b = 1\n").unwrap_err();
        assert!(e.to_string().contains("line 1"));
        assert!(Config::parse("split = 0.5, 0.5, 0.5\n").is_err());
    }
}
