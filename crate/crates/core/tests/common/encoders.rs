use jessi_core::encoders::SruLayer;
use jessi_core::model::{BranchConfig, JessiModel, ModelConfig, SentenceEncoderKind};
use jessi_core::tensor::{Graph, Mode, ParamStore, Precision, RngStream, Tensor, Var};
use jessi_core::text::{random_table, Batch, Domain, EmbeddingPair, EncodedExample};

pub fn random_tensor(shape: &[usize], lim: f64, rng: &mut RngStream) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-lim, lim)).collect()).unwrap()
}

pub fn example(ids: &[usize]) -> EncodedExample {
    EncodedExample {
        id: "x".into(),
        ids: ids.to_vec(),
        label: Some(1),
        domain: Domain::Source,
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Step-by-step recurrence over one sequence `x: T×d_in` (row-major).
pub fn sru_oracle(store: &ParamStore, layer: &SruLayer, x: &[Vec<f64>], reverse: bool) -> Vec<Vec<f64>> {
    let d = layer.hidden;
    let w = store.value(layer.weight).data();
    let row = |m: &[f64], r: usize, x: &[f64]| -> f64 { x.iter().enumerate().map(|(k, v)| m[r * x.len() + k] * v).sum() };
    let (vf, vr) = (store.value(layer.v_f).data(), store.value(layer.v_r).data());
    let (bf, br) = (store.value(layer.b_f).data(), store.value(layer.b_r).data());
    let t = x.len();
    let mut h = vec![vec![0.0; d]; t];
    let mut c = vec![0.0; d];
    let order: Vec<usize> = if reverse { (0..t).rev().collect() } else { (0..t).collect() };
    for ti in order {
        let xt = &x[ti];
        for j in 0..d {
            let wx = row(w, j, xt);
            let f = sigmoid(row(w, d + j, xt) + vf[j] * c[j] + bf[j]);
            let r = sigmoid(row(w, 2 * d + j, xt) + vr[j] * c[j] + br[j]);
            let cn = f * c[j] + (1.0 - f) * wx;
            let hw = match layer.projection {
                Some(p) => row(store.value(p).data(), j, xt),
                None => xt[j],
            };
            h[ti][j] = r * cn + (1.0 - r) * hw;
            c[j] = cn;
        }
    }
    h
}

/// Largest deviation between the layer and the sequential oracle over 100
/// random cases, both directions, with padded sequences.
pub fn sru_oracle_deviation() -> f64 {
    let mut rng = RngStream::new(11);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let t = 1 + rng.below(16);
        let d = 1 + rng.below(8);
        let d_in = if case % 2 == 0 { d } else { 1 + rng.below(8) };
        let b = 1 + rng.below(3);
        let mut store = ParamStore::new();
        let layer = SruLayer::new(&mut store, "s", d_in, d, None, &mut rng);
        for id in store.ids().collect::<Vec<_>>() {
            let shape = store.value(id).shape().to_vec();
            store.get_mut(id).value = random_tensor(&shape, 1.0, &mut rng);
        }
        let x = random_tensor(&[b, t, d_in], 2.0, &mut rng);
        let lengths: Vec<usize> = (0..b).map(|i| if i == 0 { t } else { 1 + rng.below(t) }).collect();
        let mut mask = vec![0.0; b * t];
        for (i, &l) in lengths.iter().enumerate() {
            mask[i * t..i * t + l].iter_mut().for_each(|m| *m = 1.0);
        }
        let mask = Tensor::new(vec![b, t], mask).unwrap();
        for reverse in [false, true] {
            let mut g = Graph::new(Precision::F64);
            let xv = g.input(x.clone()).unwrap();
            let h = layer.forward(&mut g, &store, xv, &mask, reverse).unwrap();
            let hv = g.value(h);
            for (bi, &len) in lengths.iter().enumerate() {
                let seq: Vec<Vec<f64>> = (0..len)
                    .map(|ti| x.data()[(bi * t + ti) * d_in..(bi * t + ti + 1) * d_in].to_vec())
                    .collect();
                let oracle = sru_oracle(&store, &layer, &seq, reverse);
                for ti in 0..t {
                    for j in 0..d {
                        let got = hv.data()[(bi * t + ti) * d + j];
                        let want = if ti < len { oracle[ti][j] } else { 0.0 };
                        worst = worst.max((got - want).abs());
                    }
                }
            }
        }
    }
    worst
}

pub fn small_config(branch: BranchConfig, adversarial: bool, vocab: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        glove_dim: 6,
        cove_dim: 4,
        filter_widths: vec![3, 5, 7],
        filter_channels: 8,
        attention_width: 24,
        sru_hidden: 6,
        d_model: 8,
        heads: 2,
        d_ff: 12,
        max_len: 20,
        mlp_hidden: 10,
        branch,
        adversarial,
        ..ModelConfig::default()
    }
}

pub fn small_model(branch: BranchConfig, adversarial: bool, seed: u64) -> JessiModel {
    let mut rng = RngStream::new(seed);
    let vocab = 30;
    let pair = EmbeddingPair::new(random_table(vocab, 6, &mut rng), random_table(vocab, 4, &mut rng)).unwrap();
    JessiModel::new(small_config(branch, adversarial, vocab), &pair, &mut rng).unwrap()
}

pub fn all_branches() -> Vec<BranchConfig> {
    let mut out = vec![BranchConfig::subtask_a(), BranchConfig::subtask_b()];
    for kind in [SentenceEncoderKind::CnnMaxPool, SentenceEncoderKind::BiSru] {
        out.push(BranchConfig {
            bert_sentence_encoder: kind,
            include_cnn_branch: false,
            include_bert_branch: true,
        });
    }
    out.push(BranchConfig {
        include_bert_branch: false,
        ..BranchConfig::subtask_a()
    });
    out
}

pub fn rows_of(g: &Graph, v: Var) -> Vec<Vec<f64>> {
    let t = g.value(v);
    t.data().chunks(t.last_dim()).map(<[f64]>::to_vec).collect()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest change of any encoder output when a longer sentence is added to
/// the batch, over every branch layout in both precisions.
pub fn padding_deviation() -> f64 {
    let mut worst: f64 = 0.0;
    let sentence = [4, 9, 2, 17, 5];
    for branch in all_branches() {
        let model = small_model(branch, true, 3);
        let alone = Batch::collate([&example(&sentence)]);
        let padded = Batch::collate([&example(&sentence), &example(&[3, 3, 8, 11, 12, 13, 14, 6, 7, 21])]);
        for precision in [Precision::F64, Precision::F32] {
            let mut outs = Vec::new();
            for batch in [&alone, &padded] {
                let mut g = Graph::new(precision);
                let enc = model.joint_encode(&mut g, batch, Mode::Eval, &mut RngStream::new(0)).unwrap();
                let mut parts = vec![rows_of(&g, enc.joint)[0].clone()];
                if let Some(a) = enc.attention {
                    parts.push(rows_of(&g, a)[0][..sentence.len()].to_vec());
                }
                if let Some(t) = &model.transformer {
                    let out = t
                        .encode(&mut g, &model.store, &batch.token_ids, &batch.mask, 0.0, Mode::Eval, &mut RngStream::new(0))
                        .unwrap();
                    let e = g.value(out.encodings);
                    let tt = batch.max_len();
                    parts.push(e.data()[..sentence.len() * 8].to_vec());
                    assert_eq!(e.shape(), &[batch.size(), tt, 8]);
                }
                outs.push(parts);
            }
            for (a, b) in outs[0].iter().zip(&outs[1]) {
                worst = worst.max(max_diff(a, b));
            }
        }
    }
    worst
}
