//! Run configuration and the command implementations behind the `jessi`
//! binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    ablation_csv, accuracy_by_length, length_csv, preset_variants, prf1, prf_csv, run_ablation, stability_csv,
    stability_stats, variant_by_name, AblationTable, AblationVariant, LengthBucketReport, Prf, StabilityRow, Subtask,
};
use crate::model::{BranchConfig, JessiModel, SentenceEncoderKind};
use crate::tensor::RngStream;
use crate::text::synth::{synth_generate, SynthSpec};
use crate::text::{
    encode_examples, load_dataset, load_embeddings, make_batches, random_table, tokenize, write_dataset, Domain,
    EmbeddingPair, EncodedExample, RawExample, Vocab,
};
use crate::training::{kfold_train, multi_seed_train, thread_pool, Ensemble, TrainConfig, TrainedModel, TrialSet, TrialSets};

pub const THREADS_ENV: &str = "JESSI_THREADS";
pub const LENGTH_BUCKET_WIDTH: usize = 10;

/// Exit status for an error: 2 for configuration and input validation
/// problems, 3 for failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::InvalidRate(_)
        | Error::UnsupportedWidth(_)
        | Error::InsufficientRuns(_) => 2,
        _ => 3,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub trial_a: Option<PathBuf>,
    pub trial_b: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings_g: Option<PathBuf>,
    pub embeddings_c: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subtask: Subtask,
    pub train: TrainConfig,
    pub paths: DataPaths,
    pub min_frequency: usize,
    pub synth: SynthSpec,
    pub stability_variants: Vec<String>,
    pub length_bucket_width: usize,
}

impl RunConfig {
    pub fn preset(subtask: Subtask) -> Self {
        let mut train = TrainConfig::default();
        match subtask {
            Subtask::A => {
                train.model.branch = BranchConfig::subtask_a();
                train.model.adversarial = false;
                train.early_stopping = TrialSet::A;
            }
            Subtask::B => {
                train.model.branch = BranchConfig::subtask_b();
                train.model.adversarial = true;
                train.early_stopping = TrialSet::B;
            }
        }
        RunConfig {
            subtask,
            train,
            paths: DataPaths {
                output_dir: PathBuf::from("out"),
                ..DataPaths::default()
            },
            min_frequency: 1,
            synth: SynthSpec::default(),
            stability_variants: ["BERT->CNN", "BERT->BiSRU", "JESSI-B", "CNN->Att"].map(String::from).to_vec(),
            length_bucket_width: LENGTH_BUCKET_WIDTH,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    /// Parses `key = value` lines (`#` starts a comment). The `subtask`
    /// preset is applied first; every other key overrides it. Relative
    /// paths are resolved against `base`.
    pub fn parse(text: &str, path: &Path, base: &Path) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected key=value, found {line:?}"),
            })?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("duplicate key {key}"),
                });
            }
        }
        let subtask = match entries.remove("subtask").map(|(_, v)| v) {
            None => Subtask::A,
            Some(v) if v.eq_ignore_ascii_case("a") => Subtask::A,
            Some(v) if v.eq_ignore_ascii_case("b") => Subtask::B,
            Some(v) => return Err(Error::Config(format!("subtask must be A or B, found {v:?}"))),
        };
        let mut cfg = Self::preset(subtask);
        for (key, (line, value)) in entries {
            cfg.apply(&key, &value, base).map_err(|msg| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            })?;
        }
        cfg.train.validate()?;
        if cfg.length_bucket_width == 0 {
            return Err(Error::Config("lengthBucketWidth must be positive".into()));
        }
        for name in &cfg.stability_variants {
            if variant_by_name(name).is_none() {
                return Err(Error::Config(format!("unknown stability variant {name:?}")));
            }
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str, base: &Path) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
        }
        fn flag(key: &str, v: &str) -> std::result::Result<bool, String> {
            match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(format!("invalid boolean {v:?} for {key}")),
            }
        }
        let path = |v: &str| Some(base.join(v));
        let t = &mut self.train;
        let m = &mut t.model;
        match key {
            "seed" => t.seed = num(key, value)?,
            "batchSize" => t.batch_size = num(key, value)?,
            "dropoutRate" => m.dropout = num(key, value)?,
            "maxNorm" => {
                m.max_norm = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "maxEpochs" => t.max_epochs = num(key, value)?,
            "patience" => t.patience = num(key, value)?,
            "folds" => t.folds = num(key, value)?,
            "topK" => t.top_k = num(key, value)?,
            "gamma" => t.gamma = num(key, value)?,
            "rho" => t.rho = num(key, value)?,
            "epsilon" => t.epsilon = num(key, value)?,
            "earlyStopping" => {
                t.early_stopping = match value {
                    "A" | "a" => TrialSet::A,
                    "B" | "b" => TrialSet::B,
                    _ => return Err(format!("earlyStopping must be A or B, found {value:?}")),
                }
            }
            "bertSentenceEncoder" => {
                m.branch.bert_sentence_encoder = match value.to_ascii_uppercase().as_str() {
                    "CNN_MAXPOOL" => SentenceEncoderKind::CnnMaxPool,
                    "BISRU" => SentenceEncoderKind::BiSru,
                    _ => return Err(format!("bertSentenceEncoder must be CNN_MAXPOOL or BISRU, found {value:?}")),
                }
            }
            "includeCnnBranch" => m.branch.include_cnn_branch = flag(key, value)?,
            "includeBertBranch" => m.branch.include_bert_branch = flag(key, value)?,
            "domAdv" => m.adversarial = flag(key, value)?,
            "gloveDim" => m.glove_dim = num(key, value)?,
            "coveDim" => m.cove_dim = num(key, value)?,
            "filterWidths" => {
                m.filter_widths = value
                    .split(',')
                    .map(|w| num(key, w.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "filterChannels" => m.filter_channels = num(key, value)?,
            "attentionWidth" => m.attention_width = num(key, value)?,
            "sruHidden" => m.sru_hidden = num(key, value)?,
            "dModel" => m.d_model = num(key, value)?,
            "transformerLayers" => m.transformer_layers = num(key, value)?,
            "heads" => m.heads = num(key, value)?,
            "dFf" => m.d_ff = num(key, value)?,
            "maxLen" => m.max_len = num(key, value)?,
            "mlpHidden" => m.mlp_hidden = num(key, value)?,
            "minFrequency" => self.min_frequency = num(key, value)?,
            "lengthBucketWidth" => self.length_bucket_width = num(key, value)?,
            "stabilityVariants" => {
                self.stability_variants = value.split(',').map(|s| s.trim().to_string()).collect();
            }
            "train" => self.paths.train = path(value),
            "trialA" => self.paths.trial_a = path(value),
            "trialB" => self.paths.trial_b = path(value),
            "test" => self.paths.test = path(value),
            "embeddingsG" => self.paths.embeddings_g = path(value),
            "embeddingsC" => self.paths.embeddings_c = path(value),
            "outputDir" => self.paths.output_dir = base.join(value),
            "synthTrain" => self.synth.train = num(key, value)?,
            "synthTrialA" => self.synth.trial_a = num(key, value)?,
            "synthTrialB" => self.synth.trial_b = num(key, value)?,
            "synthTestA" => self.synth.test_a = num(key, value)?,
            "synthTestB" => self.synth.test_b = num(key, value)?,
            "synthPositiveRate" => self.synth.positive_rate = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn test_domain(&self) -> Domain {
        match self.subtask {
            Subtask::A => Domain::Source,
            Subtask::B => Domain::Target,
        }
    }

    /// Checks that every input file the training commands read exists.
    pub fn validate_inputs(&self, need_test: bool) -> Result<()> {
        let p = &self.paths;
        let mut required = vec![("train", &p.train), ("trialA", &p.trial_a), ("trialB", &p.trial_b)];
        if need_test {
            required.push(("test", &p.test));
        }
        for (name, path) in required {
            match path {
                None => return Err(Error::Config(format!("missing required key {name}"))),
                Some(path) if !path.is_file() => {
                    return Err(Error::Config(format!("{name}: {} is not a readable file", path.display())))
                }
                _ => {}
            }
        }
        for (name, path) in [("embeddingsG", &p.embeddings_g), ("embeddingsC", &p.embeddings_c)] {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(Error::Config(format!("{name}: {} is not a readable file", path.display())));
                }
            }
        }
        Ok(())
    }
}

/// Parsed, tokenized and index-encoded inputs of a run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocab: Vocab,
    pub embeddings: EmbeddingPair,
    pub train: Vec<EncodedExample>,
    pub trial_a: Vec<EncodedExample>,
    pub trial_b: Vec<EncodedExample>,
    pub test: Option<(Vec<RawExample>, Vec<EncodedExample>)>,
}

impl Prepared {
    pub fn trials(&self) -> TrialSets<'_> {
        TrialSets {
            a: &self.trial_a,
            b: &self.trial_b,
        }
    }
}

fn tokens_of(examples: &[RawExample]) -> Result<Vec<Vec<String>>> {
    examples.iter().map(|e| Ok(tokenize(&e.sentence)?.tokens)).collect()
}

/// Builds the vocabulary from the training and trial sentences, then loads
/// or draws both static embedding tables.
pub fn prepare(cfg: &mut RunConfig, need_test: bool) -> Result<Prepared> {
    cfg.validate_inputs(need_test)?;
    let p = cfg.paths.clone();
    let req = |o: &Option<PathBuf>| o.clone().expect("validated");
    let train = load_dataset(&req(&p.train), Domain::Source, true)?;
    let trial_a = load_dataset(&req(&p.trial_a), Domain::Source, true)?;
    let trial_b = load_dataset(&req(&p.trial_b), Domain::Target, true)?;
    let test = match (&p.test, need_test) {
        (Some(path), true) => Some(load_dataset(path, cfg.test_domain(), true)?),
        _ => None,
    };
    let mut sentences = tokens_of(&train)?;
    sentences.extend(tokens_of(&trial_a)?);
    sentences.extend(tokens_of(&trial_b)?);
    let vocab = Vocab::build(sentences.iter().map(Vec::as_slice), cfg.min_frequency);
    let m = &mut cfg.train.model;
    m.vocab_size = vocab.len();
    let rng = RngStream::new(cfg.train.seed).child(100);
    let table = |path: &Option<PathBuf>, dim: usize, stream: u64| -> Result<_> {
        let mut r = rng.child(stream);
        match path {
            Some(path) => {
                let loaded = load_embeddings(path, &vocab, dim, &mut r)?;
                log::info!("{}: {} of {} words found", path.display(), loaded.found, vocab.len());
                Ok(loaded.table)
            }
            None => Ok(random_table(vocab.len(), dim, &mut r)),
        }
    };
    let embeddings = EmbeddingPair::new(table(&p.embeddings_g, m.glove_dim, 0)?, table(&p.embeddings_c, m.cove_dim, 1)?)?;
    let max_len = m.max_len;
    let test = test
        .map(|raw| {
            let enc = encode_examples(&raw, &vocab, max_len)?;
            Ok::<_, Error>((raw, enc))
        })
        .transpose()?;
    Ok(Prepared {
        train: encode_examples(&train, &vocab, max_len)?,
        trial_a: encode_examples(&trial_a, &vocab, max_len)?,
        trial_b: encode_examples(&trial_b, &vocab, max_len)?,
        test,
        vocab,
        embeddings,
    })
}

/// `JESSI_THREADS` when set to a positive integer, otherwise the number of
/// available processors.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, found {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes the five synthetic splits as CSV files into `out`.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<Vec<(String, usize, usize)>> {
    cfg.synth.validate()?;
    let corpus = synth_generate(&cfg.synth, &RngStream::new(cfg.train.seed))?;
    create_dir(out)?;
    let mut counts = Vec::new();
    for (name, split) in corpus.splits() {
        write_dataset(&out.join(format!("{name}.csv")), split)?;
        let positives = split.iter().filter(|e| e.label == Some(1)).count();
        counts.push((name.to_string(), split.len(), positives));
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FoldHistory {
    pub fold: usize,
    pub epochs: usize,
    #[serde(rename = "trialF1PerEpoch")]
    pub trial_f1_per_epoch: Vec<f64>,
    #[serde(rename = "bestF1")]
    pub best_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub fold: usize,
    pub checkpoint: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub subtask: Subtask,
    pub seed: u64,
    pub folds: usize,
    pub top_k: usize,
    pub vocab: String,
    /// Selection score of every fold model, in fold order.
    pub fold_scores: Vec<f64>,
    /// Ensemble members, best first.
    pub members: Vec<ManifestMember>,
}

fn train_variant(cfg: &RunConfig, prepared: &Prepared, variant: Option<&AblationVariant>) -> Result<Vec<TrainedModel>> {
    let mut train_cfg = cfg.train.clone();
    if let Some(v) = variant {
        train_cfg.model.branch = v.branch;
        train_cfg.model.adversarial = v.adversarial;
    }
    let pool = thread_pool(threads_from_env()?)?;
    kfold_train(&train_cfg, &prepared.train, &prepared.trials(), &prepared.embeddings, &pool)
}

/// Trains every fold and writes checkpoints, histories, the vocabulary and
/// the ensemble manifest into the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<Manifest> {
    let mut cfg = cfg.clone();
    let prepared = prepare(&mut cfg, false)?;
    let models = train_variant(&cfg, &prepared, None)
        .map_err(|e| if exit_code(&e) == 2 { e } else { Error::Training(e.to_string()) })?;
    let out = cfg.paths.output_dir.clone();
    create_dir(&out)?;
    prepared.vocab.save(&out.join("vocab.txt"))?;
    for (k, m) in models.iter().enumerate() {
        m.model.save(&out.join(format!("fold_{k}.ckpt")))?;
        let history = FoldHistory {
            fold: k,
            epochs: m.epochs(),
            trial_f1_per_epoch: m.history.clone(),
            best_f1: m.best_f1,
        };
        write(&out.join(format!("fold_{k}.json")), to_json(&history)?)?;
    }
    let scores: Vec<f64> = models.iter().map(|m| m.best_f1).collect();
    let keep = crate::training::ensemble_select(&scores, cfg.train.top_k)?;
    let manifest = Manifest {
        subtask: cfg.subtask,
        seed: cfg.train.seed,
        folds: cfg.train.folds,
        top_k: cfg.train.top_k,
        vocab: "vocab.txt".into(),
        fold_scores: scores.clone(),
        members: keep
            .iter()
            .map(|&k| ManifestMember {
                fold: k,
                checkpoint: format!("fold_{k}.ckpt"),
                score: scores[k],
            })
            .collect(),
    };
    write(&out.join("manifest.json"), to_json(&manifest)?)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub examples: usize,
    pub prf: Prf,
    pub length_buckets: LengthBucketReport,
}

/// Scores the manifest's ensemble on a labeled dataset and writes
/// `eval.json`, `eval.csv` and `length.csv` into `out`.
pub fn cmd_eval(manifest_path: &Path, data_path: &Path, domain: Domain, bucket_width: usize, out: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let vocab = Vocab::load(&dir.join(&manifest.vocab))?;
    let members = manifest
        .members
        .iter()
        .map(|m| {
            let path = dir.join(&m.checkpoint);
            if !path.is_file() {
                return Err(Error::Io {
                    path: path.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "missing ensemble member checkpoint"),
                });
            }
            JessiModel::load(&path)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_len = members.first().map_or(1, |m| m.config.max_len);
    let raw = load_dataset(data_path, domain, true)?;
    let encoded = encode_examples(&raw, &vocab, max_len)?;
    let batches = make_batches(&encoded, 32, false, &mut RngStream::new(0));
    let ensemble = Ensemble {
        scores: manifest.members.iter().map(|m| m.score).collect(),
        members,
    };
    let pred = ensemble.predict(&batches)?;
    let gold: Vec<usize> = encoded.iter().map(|e| usize::from(e.label.expect("labeled"))).collect();
    let lengths: Vec<usize> = raw
        .iter()
        .map(|e| Ok(tokenize(&e.sentence)?.len()))
        .collect::<Result<_>>()?;
    let report = EvalReport {
        examples: encoded.len(),
        prf: prf1(&pred, &gold)?,
        length_buckets: accuracy_by_length(&pred, &gold, &lengths, bucket_width)?,
    };
    create_dir(out)?;
    write(&out.join("eval.json"), to_json(&report)?)?;
    write(&out.join("eval.csv"), prf_csv(&report.prf))?;
    write(&out.join("length.csv"), length_csv(&report.length_buckets))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub runs: usize,
    pub rows: Vec<StabilityRow>,
}

/// Trains `runs` differently seeded models per listed variant and
/// summarizes their trial F1 scores.
pub fn cmd_stability(cfg: &RunConfig, runs: usize) -> Result<StabilityReport> {
    if runs < 2 {
        return Err(Error::InsufficientRuns(runs));
    }
    let mut cfg = cfg.clone();
    let prepared = prepare(&mut cfg, false)?;
    let pool = thread_pool(threads_from_env()?)?;
    let mut rows = Vec::new();
    for name in &cfg.stability_variants {
        let variant = variant_by_name(name).ok_or_else(|| Error::Config(format!("unknown variant {name:?}")))?;
        let mut train_cfg = cfg.train.clone();
        train_cfg.model.branch = variant.branch;
        train_cfg.model.adversarial = variant.adversarial;
        let models = multi_seed_train(&train_cfg, &prepared.train, &prepared.trials(), &prepared.embeddings, runs, &pool)?;
        let scores: Vec<f64> = models.iter().map(|m| m.best_f1).collect();
        rows.push(stability_stats(name, &scores)?);
    }
    let report = StabilityReport { runs, rows };
    let out = &cfg.paths.output_dir;
    create_dir(out)?;
    write(&out.join("stability.json"), to_json(&report)?)?;
    write(&out.join("stability.csv"), stability_csv(&report.rows))?;
    Ok(report)
}

/// Runs the preset's ablation rows: each variant is trained with the full
/// fold protocol and its ensemble is scored on the test set, or on the
/// early-stopping trial set when no test set is configured.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<AblationTable> {
    let mut cfg = cfg.clone();
    let need_test = cfg.paths.test.is_some();
    let prepared = prepare(&mut cfg, need_test)?;
    let eval_set: &[EncodedExample] = match &prepared.test {
        Some((_, enc)) => enc,
        None => prepared.trials().scoring(cfg.train.early_stopping),
    };
    let batches = make_batches(eval_set, 32, false, &mut RngStream::new(0));
    let gold: Vec<usize> = eval_set.iter().map(|e| usize::from(e.label.expect("labeled"))).collect();
    let table = run_ablation(&preset_variants(cfg.subtask), |v| {
        let models = train_variant(&cfg, &prepared, Some(v))?;
        let ensemble = Ensemble::from_trained(models, cfg.train.top_k)?;
        Ok(prf1(&ensemble.predict(&batches)?, &gold)?.f1)
    })?;
    let out = &cfg.paths.output_dir;
    create_dir(out)?;
    write(&out.join("ablation.json"), to_json(&table)?)?;
    write(&out.join("ablation.csv"), ablation_csv(&table))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("run.cfg"), Path::new("/data"))
    }

    #[test]
    fn presets_fix_branches() {
        let a = parse("subtask = A\n").unwrap();
        assert_eq!(a.train.model.branch, BranchConfig::subtask_a());
        assert!(!a.train.model.adversarial);
        let b = parse("# hotels\nsubtask = B\n").unwrap();
        assert_eq!(b.train.model.branch, BranchConfig::subtask_b());
        assert!(b.train.model.adversarial);
        assert_eq!(b.train.early_stopping, TrialSet::B);
    }

    #[test]
    fn keys_override_preset_regardless_of_order() {
        let c = parse("domAdv = true\nsubtask = A\nbatchSize = 16 # small\ntrain = t.csv\nmaxNorm = none\n").unwrap();
        assert!(c.train.model.adversarial);
        assert_eq!(c.train.batch_size, 16);
        assert_eq!(c.paths.train, Some(PathBuf::from("/data/t.csv")));
        assert_eq!(c.train.model.max_norm, None);
    }

    #[test]
    fn defaults_follow_training_recipe() {
        let c = parse("").unwrap();
        let t = &c.train;
        assert_eq!((t.batch_size, t.folds, t.top_k, t.patience), (32, 10, 3, 5));
        assert_eq!(t.model.dropout, 0.5);
        assert_eq!(t.model.max_norm, Some(3.0));
        assert_eq!((t.rho, t.epsilon), (0.95, 1e-6));
        assert_eq!(t.model.filter_widths, vec![3, 5, 7]);
        assert_eq!((t.model.filter_channels, t.model.sru_hidden, t.model.mlp_hidden), (200, 150, 300));
    }

    #[test]
    fn bad_input_is_a_configuration_error() {
        for text in ["bogus = 1\n", "batchSize = many\n", "subtask = C\n", "noequals\n", "topK = 11\n", "seed = 1\nseed = 2\n"] {
            let e = parse(text).unwrap_err();
            assert_eq!(exit_code(&e), 2, "{text}: {e}");
        }
        assert_eq!(exit_code(&Error::Training("x".into())), 3);
    }
}
