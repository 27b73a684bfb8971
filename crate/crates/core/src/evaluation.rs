//! Task metrics, stability statistics, length buckets, ablation tables and
//! the domain probe.

use serde::{Deserialize, Serialize};

use crate::encoders::Linear;
use crate::error::{Error, Result};
use crate::model::{BranchConfig, SentenceEncoderKind};
use crate::tensor::{Graph, ParamStore, Precision, RngStream, Tensor};
use crate::training::Adadelta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(pred: &[usize], gold: &[usize]) -> Result<Self> {
        if pred.len() != gold.len() {
            return Err(Error::LengthMismatch(pred.len(), gold.len()));
        }
        let mut c = ConfusionCounts::default();
        for (&p, &g) in pred.iter().zip(gold) {
            if p > 1 || g > 1 {
                return Err(Error::ClassIndex {
                    index: p.max(g),
                    classes: 2,
                });
            }
            match (p, g) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

impl Prf {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let (tp, fp, fn_) = (counts.tp as f64, counts.fp as f64, counts.fn_ as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Prf {
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
            counts,
        }
    }
}

/// Positive-class precision, recall and F1; `0/0` is taken as 0.
pub fn prf1(pred: &[usize], gold: &[usize]) -> Result<Prf> {
    Ok(Prf::from_counts(ConfusionCounts::from_predictions(pred, gold)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    #[serde(rename = "Model")]
    pub model: String,
    pub runs: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub scores: Vec<f64>,
}

/// Min, max, mean and sample standard deviation (divisor `N-1`).
pub fn stability_stats(model: &str, scores: &[f64]) -> Result<StabilityRow> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::InsufficientRuns(n));
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(StabilityRow {
        model: model.to_string(),
        runs: n,
        min: scores.iter().copied().fold(f64::INFINITY, f64::min),
        max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std: var.sqrt(),
        scores: scores.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    /// Inclusive lower bound.
    pub lo: usize,
    /// Exclusive upper bound.
    pub hi: usize,
    pub count: usize,
    /// `None` for empty buckets.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBucketReport {
    pub width: usize,
    pub buckets: Vec<LengthBucket>,
}

/// Accuracy per `[k·width, (k+1)·width)` length range, from 0 up to the
/// bucket holding the longest example.
pub fn accuracy_by_length(pred: &[usize], gold: &[usize], lengths: &[usize], width: usize) -> Result<LengthBucketReport> {
    if pred.len() != gold.len() || pred.len() != lengths.len() {
        return Err(Error::LengthMismatch(pred.len(), gold.len().min(lengths.len())));
    }
    if width == 0 {
        return Err(Error::Invalid("bucket width must be positive".into()));
    }
    let n_buckets = lengths.iter().max().map_or(0, |m| m / width + 1);
    let mut count = vec![0usize; n_buckets];
    let mut correct = vec![0usize; n_buckets];
    for ((&p, &g), &l) in pred.iter().zip(gold).zip(lengths) {
        count[l / width] += 1;
        correct[l / width] += usize::from(p == g);
    }
    let buckets = (0..n_buckets)
        .map(|k| LengthBucket {
            lo: k * width,
            hi: (k + 1) * width,
            count: count[k],
            accuracy: (count[k] > 0).then(|| correct[k] as f64 / count[k] as f64),
        })
        .collect();
    Ok(LengthBucketReport { width, buckets })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subtask {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub branch: BranchConfig,
    pub adversarial: bool,
}

impl AblationVariant {
    fn new(name: &str, kind: SentenceEncoderKind, cnn: bool, bert: bool, adversarial: bool) -> Self {
        AblationVariant {
            name: name.to_string(),
            branch: BranchConfig {
                bert_sentence_encoder: kind,
                include_cnn_branch: cnn,
                include_bert_branch: bert,
            },
            adversarial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.branch.validate()
    }
}

/// Rows of the ablation table for a preset, in table order.
pub fn preset_variants(subtask: Subtask) -> Vec<AblationVariant> {
    use SentenceEncoderKind::{BiSru, CnnMaxPool};
    match subtask {
        Subtask::A => vec![
            AblationVariant::new("JESSI-A", CnnMaxPool, true, true, false),
            AblationVariant::new("+ BERT->BiSRU", BiSru, true, true, false),
            AblationVariant::new("- CNN->Att", CnnMaxPool, false, true, false),
            AblationVariant::new("- BERT->CNN", CnnMaxPool, true, false, false),
        ],
        Subtask::B => vec![
            AblationVariant::new("JESSI-B", BiSru, true, true, true),
            AblationVariant::new("- CNN->Att", BiSru, false, true, true),
            AblationVariant::new("- BERT->BiSRU", BiSru, true, false, true),
            AblationVariant::new("+ BERT->CNN", CnnMaxPool, true, true, true),
            AblationVariant::new("- DomAdv", BiSru, true, true, false),
        ],
    }
}

/// Models compared in the multi-run stability table (all with the domain
/// classifier).
pub fn stability_variants() -> Vec<AblationVariant> {
    use SentenceEncoderKind::{BiSru, CnnMaxPool};
    vec![
        AblationVariant::new("BERT->CNN", CnnMaxPool, false, true, true),
        AblationVariant::new("BERT->BiSRU", BiSru, false, true, true),
        AblationVariant::new("JESSI-B", BiSru, true, true, true),
        AblationVariant::new("CNN->Att", BiSru, true, false, true),
    ]
}

/// Looks a variant up by name among the stability models and both presets.
pub fn variant_by_name(name: &str) -> Option<AblationVariant> {
    stability_variants()
        .into_iter()
        .chain(preset_variants(Subtask::A))
        .chain(preset_variants(Subtask::B))
        .find(|v| v.name == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    #[serde(rename = "Model")]
    pub model: String,
    #[serde(rename = "F-Score")]
    pub f_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

/// Runs `eval` once per variant, in order. A failing variant is recorded
/// in its row and the remaining variants still run.
pub fn run_ablation<F>(variants: &[AblationVariant], mut eval: F) -> Result<AblationTable>
where
    F: FnMut(&AblationVariant) -> Result<f64>,
{
    for v in variants {
        v.validate()?;
    }
    let rows = variants
        .iter()
        .map(|v| match eval(v) {
            Ok(f) => AblationRow {
                model: v.name.clone(),
                f_score: Some(f),
                error: None,
            },
            Err(e) => {
                log::warn!("variant {} failed: {e}", v.name);
                AblationRow {
                    model: v.name.clone(),
                    f_score: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    Ok(AblationTable { rows })
}

pub const PROBE_HIDDEN: usize = 32;
pub const PROBE_EPOCHS: usize = 60;

/// Held-out accuracy of a fresh two-layer classifier trained to recover
/// `domains` from frozen `encodings` (stratified 80/20 split, features
/// standardized with training-split statistics).
pub fn domain_probe(encodings: &[Vec<f64>], domains: &[usize], rng: &mut RngStream) -> Result<f64> {
    if encodings.len() != domains.len() {
        return Err(Error::LengthMismatch(encodings.len(), domains.len()));
    }
    let dim = encodings.first().map_or(0, Vec::len);
    if dim == 0 || encodings.iter().any(|e| e.len() != dim) {
        return Err(Error::Invalid("encodings must share a positive dimension".into()));
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..2 {
        let mut members: Vec<usize> = (0..domains.len()).filter(|&i| domains[i] == class).collect();
        if members.len() < 2 {
            return Err(Error::Invalid("domain probe needs at least two examples per domain".into()));
        }
        rng.shuffle(&mut members);
        let n_test = ((members.len() as f64) * 0.2).round().max(1.0) as usize;
        test_idx.extend_from_slice(&members[..n_test]);
        train_idx.extend_from_slice(&members[n_test..]);
    }
    if domains.iter().any(|&d| d > 1) {
        return Err(Error::ClassIndex {
            index: *domains.iter().max().expect("non-empty"),
            classes: 2,
        });
    }
    let mut mean = vec![0.0; dim];
    for &i in &train_idx {
        for (m, v) in mean.iter_mut().zip(&encodings[i]) {
            *m += v / train_idx.len() as f64;
        }
    }
    let mut sd = vec![0.0; dim];
    for &i in &train_idx {
        for ((s, v), m) in sd.iter_mut().zip(&encodings[i]).zip(&mean) {
            *s += (v - m).powi(2) / train_idx.len() as f64;
        }
    }
    let sd: Vec<f64> = sd.into_iter().map(|v| v.sqrt().max(1e-6)).collect();
    let features = |idx: &[usize]| -> Tensor {
        let data = idx
            .iter()
            .flat_map(|&i| encodings[i].iter().zip(&mean).zip(&sd).map(|((v, m), s)| (v - m) / s))
            .collect();
        Tensor::new(vec![idx.len(), dim], data).expect("shape matches data")
    };

    let mut store = ParamStore::new();
    let l1 = Linear::new(&mut store, "probe.0", dim, PROBE_HIDDEN, None, rng);
    let l2 = Linear::new(&mut store, "probe.1", PROBE_HIDDEN, 2, None, rng);
    let forward = |g: &mut Graph, store: &ParamStore, x: Tensor| -> Result<_> {
        let x = g.constant(x)?;
        let h = l1.forward(g, store, x)?;
        let h = g.tanh(h)?;
        let o = l2.forward(g, store, h)?;
        g.masked_softmax(o, None)
    };
    let mut opt = Adadelta::new(&store, 0.95, 1e-6);
    let batch = 32;
    for _ in 0..PROBE_EPOCHS {
        let mut order = train_idx.clone();
        rng.shuffle(&mut order);
        for chunk in order.chunks(batch) {
            let mut g = Graph::new(Precision::F32);
            let p = forward(&mut g, &store, features(chunk))?;
            let gold: Vec<usize> = chunk.iter().map(|&i| domains[i]).collect();
            let loss = g.cross_entropy(p, &gold)?;
            store.zero_grads();
            g.backward(loss, &mut store)?;
            opt.step(&mut store)?;
        }
    }
    let mut g = Graph::new(Precision::F32);
    let p = forward(&mut g, &store, features(&test_idx))?;
    let probs = g.value(p).data();
    let correct = test_idx
        .iter()
        .enumerate()
        .filter(|(r, &i)| usize::from(probs[2 * r + 1] > probs[2 * r]) == domains[i])
        .count();
    Ok(correct as f64 / test_idx.len() as f64)
}

/// Renders rows as comma-separated values with every column padded to a
/// common width.
pub fn aligned_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i + 1 < cols {
                s.push_str(&format!("{c:<w$},", w = widths[i]));
            } else {
                s.push_str(c);
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

pub fn stability_csv(rows: &[StabilityRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                format!("{:.4}", r.min),
                format!("{:.4}", r.max),
                format!("{:.4}", r.mean),
                format!("{:.4}", r.std),
            ]
        })
        .collect();
    aligned_csv(&["Model", "min", "max", "mean", "std"], &body)
}

pub fn ablation_csv(table: &AblationTable) -> String {
    let body: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.f_score.map_or_else(|| "failed".to_string(), |f| format!("{f:.4}")),
            ]
        })
        .collect();
    aligned_csv(&["Model", "F-Score"], &body)
}

pub fn prf_csv(p: &Prf) -> String {
    let c = p.counts;
    let row = vec![
        format!("{:.4}", p.precision),
        format!("{:.4}", p.recall),
        format!("{:.4}", p.f1),
        c.tp.to_string(),
        c.fp.to_string(),
        c.fn_.to_string(),
        c.tn.to_string(),
    ];
    aligned_csv(&["precision", "recall", "f1", "tp", "fp", "fn", "tn"], &[row])
}

pub fn length_csv(r: &LengthBucketReport) -> String {
    let body: Vec<Vec<String>> = r
        .buckets
        .iter()
        .map(|b| {
            vec![
                format!("{}-{}", b.lo, b.hi - 1),
                b.count.to_string(),
                b.accuracy.map_or_else(|| "NA".to_string(), |a| format!("{a:.4}")),
            ]
        })
        .collect();
    aligned_csv(&["length", "count", "accuracy"], &body)
}
