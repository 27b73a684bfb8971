//! The joint model: CNN/attention branch, transformer branch, heads.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversarial::{predict_domain, predict_suggestion, MlpHead};
use crate::encoders::{BiSruStack, CnnAttEncoder, ConvBank, TransformerDims, TransformerWordEncoder};
use crate::error::{Error, Result};
use crate::tensor::checkpoint::{self, bytes_to_tensor, tensor_to_bytes};
use crate::tensor::{Graph, Mode, ParamId, ParamStore, Precision, RngStream, Tensor, Var};
use crate::text::{Batch, EmbeddingPair};

pub const CONFIG_ENTRY: &str = "meta.config.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SentenceEncoderKind {
    #[serde(rename = "CNN_MAXPOOL")]
    CnnMaxPool,
    #[serde(rename = "BISRU")]
    BiSru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BranchConfig {
    pub bert_sentence_encoder: SentenceEncoderKind,
    pub include_cnn_branch: bool,
    pub include_bert_branch: bool,
}

impl BranchConfig {
    pub fn subtask_a() -> Self {
        BranchConfig {
            bert_sentence_encoder: SentenceEncoderKind::CnnMaxPool,
            include_cnn_branch: true,
            include_bert_branch: true,
        }
    }

    pub fn subtask_b() -> Self {
        BranchConfig {
            bert_sentence_encoder: SentenceEncoderKind::BiSru,
            ..Self::subtask_a()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.include_cnn_branch && !self.include_bert_branch {
            return Err(Error::Config("at least one encoder branch must be enabled".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub glove_dim: usize,
    pub cove_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filter_channels: usize,
    pub attention_width: usize,
    pub sru_hidden: usize,
    pub sru_layers: usize,
    pub d_model: usize,
    pub transformer_layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
    pub max_norm: Option<f64>,
    pub branch: BranchConfig,
    pub adversarial: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 2,
            glove_dim: 50,
            cove_dim: 50,
            filter_widths: vec![3, 5, 7],
            filter_channels: 200,
            attention_width: 600,
            sru_hidden: 150,
            sru_layers: 2,
            d_model: 64,
            transformer_layers: 2,
            heads: 4,
            d_ff: 128,
            max_len: 64,
            mlp_hidden: 300,
            dropout: 0.5,
            max_norm: Some(3.0),
            branch: BranchConfig::subtask_a(),
            adversarial: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.branch.validate()?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidRate(self.dropout));
        }
        if let Some(&h) = self.filter_widths.iter().find(|&&h| h % 2 == 0) {
            return Err(Error::UnsupportedWidth(h));
        }
        let positive = [
            ("vocab_size", self.vocab_size),
            ("glove_dim + cove_dim", self.glove_dim + self.cove_dim),
            ("filter_channels", self.filter_channels),
            ("attention_width", self.attention_width),
            ("sru_hidden", self.sru_hidden),
            ("sru_layers", self.sru_layers),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("mlp_hidden", self.mlp_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.sru_layers != 2 {
            return Err(Error::Config(format!("BiSRU stack depth must be 2, found {}", self.sru_layers)));
        }
        if self.filter_widths.is_empty() {
            return Err(Error::Config("at least one filter width is required".into()));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if matches!(self.max_norm, Some(b) if b <= 0.0) {
            return Err(Error::Config("max_norm must be positive".into()));
        }
        Ok(())
    }

    fn bank_dim(&self) -> usize {
        self.filter_widths.len() * self.filter_channels
    }

    pub fn s_c_dim(&self) -> usize {
        if self.branch.include_cnn_branch {
            self.bank_dim()
        } else {
            0
        }
    }

    pub fn s_b_dim(&self) -> usize {
        match (self.branch.include_bert_branch, self.branch.bert_sentence_encoder) {
            (false, _) => 0,
            (true, SentenceEncoderKind::CnnMaxPool) => self.bank_dim(),
            (true, SentenceEncoderKind::BiSru) => 4 * self.sru_hidden,
        }
    }

    pub fn joint_dim(&self) -> usize {
        self.s_b_dim() + self.s_c_dim()
    }
}

#[derive(Debug, Clone)]
pub enum SentenceEncoder {
    CnnMaxPool(ConvBank),
    BiSru(BiSruStack),
}

/// Sentence vectors of the enabled branches and their concatenation.
#[derive(Debug, Clone, Copy)]
pub struct JointEncoding {
    pub s_b: Option<Var>,
    pub s_c: Option<Var>,
    pub joint: Var,
    /// CNN-branch attention weights `[B×T]`.
    pub attention: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct JessiModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub glove: ParamId,
    pub cove: ParamId,
    pub cnn: Option<CnnAttEncoder>,
    pub transformer: Option<TransformerWordEncoder>,
    pub sentence: Option<SentenceEncoder>,
    pub mlp_y: MlpHead,
    pub mlp_d: Option<MlpHead>,
}

impl JessiModel {
    pub fn new(config: ModelConfig, embeddings: &EmbeddingPair, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        if embeddings.glove.shape() != [config.vocab_size, config.glove_dim]
            || embeddings.cove.shape() != [config.vocab_size, config.cove_dim]
        {
            return Err(Error::shape(
                "embedding tables",
                embeddings.glove.shape(),
                &[config.vocab_size, config.glove_dim, config.cove_dim],
            ));
        }
        let mut store = ParamStore::new();
        let table = |store: &mut ParamStore, name: &str, t: &Tensor, trainable: bool| {
            if trainable {
                store.add(name, t.clone())
            } else {
                store.add_frozen(name, t.clone())
            }
        };
        let glove = table(&mut store, "embed.glove", &embeddings.glove, embeddings.trainable_glove);
        let cove = table(&mut store, "embed.cove", &embeddings.cove, embeddings.trainable_cove);
        let c = &config;
        let cnn = c.branch.include_cnn_branch.then(|| {
            CnnAttEncoder::new(
                &mut store,
                "cnn",
                c.glove_dim + c.cove_dim,
                &c.filter_widths,
                c.filter_channels,
                c.attention_width,
                c.max_norm,
                rng,
            )
        });
        let (transformer, sentence) = if c.branch.include_bert_branch {
            let dims = TransformerDims {
                vocab_size: c.vocab_size,
                d_model: c.d_model,
                layers: c.transformer_layers,
                heads: c.heads,
                d_ff: c.d_ff,
                max_len: c.max_len,
            };
            let t = TransformerWordEncoder::new(&mut store, "bert", dims, c.max_norm, rng)?;
            let s = match c.branch.bert_sentence_encoder {
                SentenceEncoderKind::CnnMaxPool => SentenceEncoder::CnnMaxPool(ConvBank::new(
                    &mut store,
                    "bert_cnn",
                    c.d_model,
                    &c.filter_widths,
                    c.filter_channels,
                    c.max_norm,
                    rng,
                )),
                SentenceEncoderKind::BiSru => SentenceEncoder::BiSru(BiSruStack::new(
                    &mut store,
                    "bert_sru",
                    c.d_model,
                    c.sru_hidden,
                    c.sru_layers,
                    c.max_norm,
                    rng,
                )),
            };
            (Some(t), Some(s))
        } else {
            (None, None)
        };
        let joint = c.joint_dim();
        let mlp_y = MlpHead::new(&mut store, "mlp_y", joint, c.mlp_hidden, 2, c.max_norm, rng);
        let mlp_d = c
            .adversarial
            .then(|| MlpHead::new(&mut store, "mlp_d", joint, c.mlp_hidden, 2, c.max_norm, rng));
        Ok(JessiModel {
            config,
            store,
            glove,
            cove,
            cnn,
            transformer,
            sentence,
            mlp_y,
            mlp_d,
        })
    }

    /// `[B×T×(d_g+d_c)]` static embeddings of the batch tokens.
    pub fn embed_static(&self, g: &mut Graph, batch: &Batch) -> Result<Var> {
        let (b, t) = (batch.size(), batch.max_len());
        let glove = g.param(&self.store, self.glove);
        let cove = g.param(&self.store, self.cove);
        let eg = g.gather(glove, &batch.token_ids)?;
        let ec = g.gather(cove, &batch.token_ids)?;
        let e = g.concat(&[eg, ec])?;
        g.reshape(e, &[b, t, self.config.glove_dim + self.config.cove_dim])
    }

    pub fn joint_encode(&self, g: &mut Graph, batch: &Batch, mode: Mode, rng: &mut RngStream) -> Result<JointEncoding> {
        if batch.lengths.contains(&0) {
            return Err(Error::EmptySequence("joint_encode"));
        }
        let store = &self.store;
        let mask = &batch.mask;
        let (s_c, attention) = match &self.cnn {
            Some(cnn) => {
                let x = self.embed_static(g, batch)?;
                let pooled = cnn.encode(g, store, x, mask)?;
                (Some(pooled.sentence), Some(pooled.weights))
            }
            None => (None, None),
        };
        let s_b = match (&self.transformer, &self.sentence) {
            (Some(t), Some(s)) => {
                let e_b = t
                    .encode(g, store, &batch.token_ids, mask, self.config.dropout, mode, rng)?
                    .encodings;
                Some(match s {
                    SentenceEncoder::CnnMaxPool(bank) => bank.maxpool_encode(g, store, e_b, mask)?,
                    SentenceEncoder::BiSru(stack) => stack.encode(g, store, e_b, mask, &batch.lengths)?,
                })
            }
            _ => None,
        };
        let joint = match (s_b, s_c) {
            (Some(b), Some(c)) => g.concat(&[b, c])?,
            (Some(v), None) | (None, Some(v)) => v,
            (None, None) => return Err(Error::Config("no encoder branch enabled".into())),
        };
        Ok(JointEncoding {
            s_b,
            s_c,
            joint,
            attention,
        })
    }

    pub fn suggestion_probs(&self, g: &mut Graph, joint: Var, mode: Mode, rng: &mut RngStream) -> Result<Var> {
        predict_suggestion(g, &self.store, &self.mlp_y, joint, self.config.dropout, mode, rng)
    }

    pub fn domain_probs(&self, g: &mut Graph, joint: Var, mode: Mode, rng: &mut RngStream) -> Result<Var> {
        let head = self
            .mlp_d
            .as_ref()
            .ok_or_else(|| Error::Config("model has no domain classifier".into()))?;
        predict_domain(g, &self.store, head, joint, self.config.dropout, mode, rng)
    }

    /// Suggestion probabilities `[N×2]` rows in batch order (evaluation mode).
    pub fn probabilities(&self, batches: &[Batch], precision: Precision) -> Result<Vec<[f64; 2]>> {
        let mut rng = RngStream::new(0);
        let mut out = Vec::new();
        for batch in batches {
            let mut g = Graph::new(precision);
            let enc = self.joint_encode(&mut g, batch, Mode::Eval, &mut rng)?;
            let p = self.suggestion_probs(&mut g, enc.joint, Mode::Eval, &mut rng)?;
            out.extend(g.value(p).data().chunks(2).map(|r| [r[0], r[1]]));
        }
        Ok(out)
    }

    /// Argmax class per example; ties go to class 0.
    pub fn predict(&self, batches: &[Batch]) -> Result<Vec<usize>> {
        Ok(self
            .probabilities(batches, Precision::F32)?
            .into_iter()
            .map(|p| usize::from(p[1] > p[0]))
            .collect())
    }

    /// Joint encodings of every example (evaluation mode), one row each.
    pub fn encodings(&self, batches: &[Batch]) -> Result<Vec<Vec<f64>>> {
        let mut rng = RngStream::new(0);
        let mut out = Vec::new();
        for batch in batches {
            let mut g = Graph::new(Precision::F32);
            let enc = self.joint_encode(&mut g, batch, Mode::Eval, &mut rng)?;
            let v = g.value(enc.joint);
            out.extend(v.data().chunks(v.last_dim()).map(<[f64]>::to_vec));
        }
        Ok(out)
    }

    /// Config record followed by every parameter, in creation order.
    pub fn checkpoint_entries(&self) -> Result<Vec<(String, Tensor)>> {
        let meta = serde_json::to_vec(&self.config)?;
        let mut entries = vec![(CONFIG_ENTRY.to_string(), bytes_to_tensor(&meta))];
        entries.extend(self.store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())));
        Ok(entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.checkpoint_entries()?)
    }

    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let meta = entries
            .iter()
            .find(|(n, _)| n == CONFIG_ENTRY)
            .ok_or_else(|| Error::Checkpoint(format!("missing {CONFIG_ENTRY} record")))?;
        let config: ModelConfig = serde_json::from_slice(&tensor_to_bytes(&meta.1)?)?;
        let glove = Tensor::zeros(&[config.vocab_size, config.glove_dim]);
        let cove = Tensor::zeros(&[config.vocab_size, config.cove_dim]);
        let pair = EmbeddingPair::new(glove, cove)?;
        let mut model = JessiModel::new(config, &pair, &mut RngStream::new(0))?;
        let mut loaded = vec![false; model.store.len()];
        for (name, value) in entries {
            if name == CONFIG_ENTRY {
                continue;
            }
            let id = model
                .store
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
            let p = model.store.get_mut(id);
            if p.value.shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    p.value.shape()
                )));
            }
            p.value = value;
            loaded[id.index()] = true;
        }
        if let Some((_, p)) = model.store.iter().find(|(id, _)| !loaded[id.index()]) {
            return Err(Error::Checkpoint(format!("missing tensor {}", p.name)));
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_entries(checkpoint::load(path)?)
    }
}
