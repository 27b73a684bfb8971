use super::dataset::{Domain, RawExample};
use super::tokenize::tokenize;
use super::vocab::{Vocab, PAD};
use crate::error::Result;
use crate::tensor::{RngStream, Tensor};

/// A tokenized, index-encoded example.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub id: String,
    pub ids: Vec<usize>,
    pub label: Option<u8>,
    pub domain: Domain,
}

impl EncodedExample {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Tokenizes and encodes, truncating to `max_len` tokens.
pub fn encode_examples(raw: &[RawExample], vocab: &Vocab, max_len: usize) -> Result<Vec<EncodedExample>> {
    raw.iter()
        .map(|ex| {
            let toks = tokenize(&ex.sentence)?;
            let mut ids = vocab.encode(&toks.tokens);
            ids.truncate(max_len.max(1));
            Ok(EncodedExample {
                id: ex.id.clone(),
                ids,
                label: ex.label,
                domain: ex.domain,
            })
        })
        .collect()
}

/// Padded index matrix with masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[B×T]` row-major; padding cells hold PAD.
    pub token_ids: Vec<usize>,
    /// `[B×T]` with `lengths[i]` leading ones per row.
    pub mask: Tensor,
    pub labels: Option<Vec<usize>>,
    pub domains: Vec<Domain>,
    pub lengths: Vec<usize>,
    pub ids: Vec<String>,
}

impl Batch {
    pub fn collate<'a>(examples: impl IntoIterator<Item = &'a EncodedExample>) -> Batch {
        let examples: Vec<&EncodedExample> = examples.into_iter().collect();
        let b = examples.len();
        let t = examples.iter().map(|e| e.len()).max().unwrap_or(0);
        let mut token_ids = vec![PAD; b * t];
        let mut mask = vec![0.0; b * t];
        for (i, ex) in examples.iter().enumerate() {
            token_ids[i * t..i * t + ex.len()].copy_from_slice(&ex.ids);
            mask[i * t..i * t + ex.len()].iter_mut().for_each(|m| *m = 1.0);
        }
        let labels = examples
            .iter()
            .map(|e| e.label.map(usize::from))
            .collect::<Option<Vec<_>>>();
        Batch {
            token_ids,
            mask: Tensor::new(vec![b, t], mask).expect("shape matches data"),
            labels,
            domains: examples.iter().map(|e| e.domain).collect(),
            lengths: examples.iter().map(|e| e.len()).collect(),
            ids: examples.iter().map(|e| e.id.clone()).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.mask.shape()[1]
    }

    pub fn domain_classes(&self) -> Vec<usize> {
        self.domains.iter().map(|d| d.class()).collect()
    }
}

/// Partitions `examples` into batches of `batch_size` (the last may be
/// smaller). With `shuffle`, the order is a permutation drawn from `rng`.
pub fn make_batches(examples: &[EncodedExample], batch_size: usize, shuffle: bool, rng: &mut RngStream) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    order
        .chunks(batch_size.max(1))
        .map(|chunk| Batch::collate(chunk.iter().map(|&i| &examples[i])))
        .collect()
}
