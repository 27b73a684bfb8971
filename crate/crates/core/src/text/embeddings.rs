//! Static word-embedding tables in whitespace-separated text format.

use std::fs;
use std::path::Path;

use super::vocab::{Vocab, PAD, UNK, UNK_TOKEN};
use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

/// Half-width of the uniform init for words missing from a pretrained file.
pub const OOV_RANGE: f64 = 0.25;

/// Result of reading a pretrained table.
#[derive(Debug, Clone)]
pub struct LoadedTable {
    pub table: Tensor,
    /// Vocabulary rows copied from the file.
    pub found: usize,
}

/// Table with every non-PAD row drawn from `U(-0.25, 0.25)`.
pub fn random_table(vocab_size: usize, dim: usize, rng: &mut RngStream) -> Tensor {
    let mut data = vec![0.0; vocab_size * dim];
    for row in data.chunks_mut(dim.max(1)).skip(PAD + 1) {
        for v in row {
            *v = rng.uniform(-OOV_RANGE, OOV_RANGE);
        }
    }
    Tensor::new(vec![vocab_size, dim], data).expect("shape matches data")
}

/// Reads `word v1 … v_dim` lines (a `<unk>` line fills the UNK row). Rows for vocabulary words present in the
/// file are copied; the remaining rows are drawn from `U(-0.25, 0.25)` in
/// index order; the PAD row is zero.
pub fn load_embeddings(path: &Path, vocab: &Vocab, dim: usize, rng: &mut RngStream) -> Result<LoadedTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, path, vocab, dim, rng)
}

pub fn parse_embeddings(text: &str, path: &Path, vocab: &Vocab, dim: usize, rng: &mut RngStream) -> Result<LoadedTable> {
    let n = vocab.len();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: Vec<f64> = parts
            .map(str::parse::<f64>)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("bad number: {e}"),
            })?;
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected {dim} values, found {}", values.len()),
            });
        }
        let id = vocab.get(word).or((word == UNK_TOKEN).then_some(UNK));
        if let Some(id) = id {
            if rows[id].is_none() {
                rows[id] = Some(values);
            }
        }
    }
    let found = rows.iter().filter(|r| r.is_some()).count();
    let mut data = Vec::with_capacity(n * dim);
    for (id, row) in rows.into_iter().enumerate() {
        match row {
            _ if id == PAD => data.extend(std::iter::repeat_n(0.0, dim)),
            Some(v) => data.extend(v),
            None => data.extend((0..dim).map(|_| rng.uniform(-OOV_RANGE, OOV_RANGE))),
        }
    }
    Ok(LoadedTable {
        table: Tensor::new(vec![n, dim], data)?,
        found,
    })
}

/// The two static tables whose rows are concatenated per token.
#[derive(Debug, Clone)]
pub struct EmbeddingPair {
    pub glove: Tensor,
    pub cove: Tensor,
    pub trainable_glove: bool,
    pub trainable_cove: bool,
}

impl EmbeddingPair {
    pub fn new(glove: Tensor, cove: Tensor) -> Result<Self> {
        if glove.shape()[0] != cove.shape()[0] {
            return Err(Error::shape("embedding pair", glove.shape(), cove.shape()));
        }
        Ok(EmbeddingPair {
            glove,
            cove,
            trainable_glove: false,
            trainable_cove: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.glove.last_dim() + self.cove.last_dim()
    }

    /// Concatenated row `[glove[i] ; cove[i]]`.
    pub fn lookup(&self, id: usize) -> Vec<f64> {
        let mut v = self.glove.row(id).to_vec();
        v.extend_from_slice(self.cove.row(id));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        let s = [vec!["good".to_string(), "bad".into(), "ugly".into()]];
        Vocab::build(s.iter().map(Vec::as_slice), 1)
    }

    #[test]
    fn full_coverage_copies_everything() {
        let v = vocab();
        let text = "good 1 2\nbad 3 4\nugly 5 6\n<unk> 7 8\n";
        let t = parse_embeddings(text, Path::new("e.txt"), &v, 2, &mut RngStream::new(1)).unwrap();
        assert_eq!(t.found, 4);
        assert_eq!(t.table.row(v.id("bad")), &[3.0, 4.0]);
        assert_eq!(t.table.row(PAD), &[0.0, 0.0]);
    }

    #[test]
    fn missing_words_are_bounded_random() {
        let v = vocab();
        for seed in 0..20 {
            let t = parse_embeddings("good 1 2\n", Path::new("e.txt"), &v, 2, &mut RngStream::new(seed)).unwrap();
            assert_eq!(t.found, 1);
            assert_eq!(t.table.row(PAD), &[0.0, 0.0]);
            for w in ["bad", "ugly"] {
                assert!(t.table.row(v.id(w)).iter().all(|x| x.abs() <= OOV_RANGE));
            }
        }
    }

    #[test]
    fn dimension_mismatch_names_line() {
        let v = vocab();
        let err = parse_embeddings("good 1 2\nbad 1\n", Path::new("e.txt"), &v, 2, &mut RngStream::new(0)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn pair_lookup_concatenates() {
        let v = vocab();
        let mut rng = RngStream::new(3);
        let pair = EmbeddingPair::new(random_table(v.len(), 3, &mut rng), random_table(v.len(), 2, &mut rng)).unwrap();
        assert_eq!(pair.dim(), 5);
        assert_eq!(pair.lookup(PAD), vec![0.0; 5]);
        let row = pair.lookup(2);
        assert_eq!(&row[..3], pair.glove.row(2));
        assert_eq!(&row[3..], pair.cove.row(2));
    }
}
