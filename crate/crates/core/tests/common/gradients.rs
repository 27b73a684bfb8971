use jessi_core::adversarial::combined_loss;
use jessi_core::model::{BranchConfig, JessiModel, ModelConfig, SentenceEncoderKind};
use jessi_core::tensor::gradcheck::gradient_check_against;
use jessi_core::tensor::{Graph, Mode, ParamId, ParamStore, Precision, RngStream, Tensor, Var};
use jessi_core::text::{random_table, Batch, Domain, EmbeddingPair, EncodedExample};
use jessi_core::Result;

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

fn random(shape: &[usize], lim: f64, rng: &mut RngStream) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-lim, lim)).collect()).unwrap()
}

/// Mask `[B×T]` with the given lengths.
fn mask(lengths: &[usize], t: usize) -> Tensor {
    let data = lengths
        .iter()
        .flat_map(|&l| (0..t).map(move |i| if i < l { 1.0 } else { 0.0 }))
        .collect();
    Tensor::new(vec![lengths.len(), t], data).unwrap()
}

/// Reduces `x` to a scalar through a fixed random weighting so every output
/// element gets a distinct upstream gradient.
fn probe(g: &mut Graph, x: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let w = g.constant(random(&shape, 1.0, &mut RngStream::new(seed)))?;
    let y = g.mul(x, w)?;
    g.sum(y)
}

type Build = Box<dyn Fn(&mut Graph, &ParamStore, &[ParamId]) -> Result<Var>>;

struct OpCase {
    name: &'static str,
    inputs: Vec<Tensor>,
    build: Build,
    /// Objective whose derivative the tape must reproduce, when it is not
    /// the forward of `build`.
    reference: Option<Build>,
}

fn case(
    name: &'static str,
    inputs: Vec<Tensor>,
    build: impl Fn(&mut Graph, &ParamStore, &[ParamId]) -> Result<Var> + 'static,
) -> OpCase {
    OpCase {
        name,
        inputs,
        build: Box::new(build),
        reference: None,
    }
}

fn p(g: &mut Graph, s: &ParamStore, ids: &[ParamId], i: usize) -> Var {
    g.param(s, ids[i])
}

fn op_cases() -> Vec<OpCase> {
    let mut r = RngStream::new(2024);
    let r = &mut r;
    let m35 = mask(&[5, 3], 5);
    let mut cases = vec![
        case("matmul", vec![random(&[3, 4], 1.0, r), random(&[4, 2], 1.0, r)], |g, s, ids| {
            let (a, b) = (p(g, s, ids, 0), p(g, s, ids, 1));
            let y = g.matmul(a, b)?;
            probe(g, y, 1)
        }),
        case("matmul_nt", vec![random(&[3, 4], 1.0, r), random(&[2, 4], 1.0, r)], |g, s, ids| {
            let (a, b) = (p(g, s, ids, 0), p(g, s, ids, 1));
            let y = g.matmul_nt(a, b)?;
            probe(g, y, 2)
        }),
        case("batch_matmul", vec![random(&[2, 3, 4], 1.0, r), random(&[2, 4, 2], 1.0, r)], |g, s, ids| {
            let (a, b) = (p(g, s, ids, 0), p(g, s, ids, 1));
            let y = g.batch_matmul(a, b, false)?;
            probe(g, y, 3)
        }),
        case("batch_matmul_nt", vec![random(&[2, 3, 4], 1.0, r), random(&[2, 5, 4], 1.0, r)], |g, s, ids| {
            let (a, b) = (p(g, s, ids, 0), p(g, s, ids, 1));
            let y = g.batch_matmul(a, b, true)?;
            probe(g, y, 4)
        }),
        case("add_mul", vec![random(&[3, 4], 1.0, r), random(&[3, 4], 1.0, r)], |g, s, ids| {
            let (a, b) = (p(g, s, ids, 0), p(g, s, ids, 1));
            let m = g.mul(a, b)?;
            let y = g.add(m, a)?;
            probe(g, y, 5)
        }),
        case("add_bias", vec![random(&[2, 3, 4], 1.0, r), random(&[4], 1.0, r)], |g, s, ids| {
            let (x, b) = (p(g, s, ids, 0), p(g, s, ids, 1));
            let y = g.add_bias(x, b)?;
            probe(g, y, 6)
        }),
        case("scale_neg", vec![random(&[5], 1.0, r)], |g, s, ids| {
            let x = p(g, s, ids, 0);
            let a = g.scale(x, -2.5)?;
            let y = g.neg(a)?;
            probe(g, y, 7)
        }),
        case("tanh", vec![random(&[6], 2.0, r)], |g, s, ids| {
            let x = p(g, s, ids, 0);
            let y = g.tanh(x)?;
            probe(g, y, 8)
        }),
        case("sigmoid", vec![random(&[6], 2.0, r)], |g, s, ids| {
            let x = p(g, s, ids, 0);
            let y = g.sigmoid(x)?;
            probe(g, y, 9)
        }),
        case("relu", vec![random(&[8], 2.0, r)], |g, s, ids| {
            let x = p(g, s, ids, 0);
            let y = g.relu(x)?;
            probe(g, y, 10)
        }),
        case("reshape_permute", vec![random(&[2, 3, 4], 1.0, r)], |g, s, ids| {
            let x = p(g, s, ids, 0);
            let y = g.permute(x, &[2, 0, 1])?;
            let z = g.reshape(y, &[4, 6])?;
            probe(g, z, 11)
        }),
        case("concat", vec![random(&[2, 3], 1.0, r), random(&[2, 2], 1.0, r)], |g, s, ids| {
            let (a, b) = (p(g, s, ids, 0), p(g, s, ids, 1));
            let y = g.concat(&[a, b])?;
            probe(g, y, 12)
        }),
        case("max_pool_time", vec![random(&[2, 5, 3], 1.0, r)], move |g, s, ids| {
            let x = p(g, s, ids, 0);
            let y = g.max_pool_time(x, &m35)?;
            probe(g, y, 14)
        }),
    ];
    for h in [3usize, 5, 7] {
        let m = mask(&[6, 4], 6);
        cases.push(case(
            "conv1d_same",
            vec![random(&[2, 6, 3], 1.0, r), random(&[h, 3, 4], 0.5, r), random(&[4], 0.5, r)],
            move |g, s, ids| {
                let (x, k, b) = (p(g, s, ids, 0), p(g, s, ids, 1), p(g, s, ids, 2));
                let y = g.conv1d_same(x, k, b, &m)?;
                probe(g, y, 13 + h as u64)
            },
        ));
    }
    let m35 = mask(&[5, 3], 5);
    let m35b = m35.clone();
    let m35c = m35.clone();
    let m35d = m35.clone();
    let m46 = mask(&[4, 6, 1], 6);
    cases.extend([
        case("masked_softmax", vec![random(&[2, 5], 2.0, r)], move |g, s, ids| {
            let x = p(g, s, ids, 0);
            let y = g.masked_softmax(x, Some(&m35))?;
            probe(g, y, 20)
        }),
        case("softmax", vec![random(&[3, 4], 2.0, r)], |g, s, ids| {
            let x = p(g, s, ids, 0);
            let y = g.masked_softmax(x, None)?;
            probe(g, y, 21)
        }),
        case("weighted_sum", vec![random(&[2, 5], 1.0, r), random(&[2, 5, 3], 1.0, r)], |g, s, ids| {
            let (w, x) = (p(g, s, ids, 0), p(g, s, ids, 1));
            let y = g.weighted_sum(w, x)?;
            probe(g, y, 22)
        }),
        case("gather", vec![random(&[7, 3], 1.0, r)], |g, s, ids| {
            let t = p(g, s, ids, 0);
            let y = g.gather(t, &[1, 4, 4, 0, 6])?;
            probe(g, y, 23)
        }),
        case("select_time", vec![random(&[2, 5, 3], 1.0, r)], |g, s, ids| {
            let x = p(g, s, ids, 0);
            let y = g.select_time(x, &[4, 2])?;
            probe(g, y, 24)
        }),
        case(
            "layer_norm",
            vec![random(&[2, 3, 5], 2.0, r), random(&[5], 1.0, r), random(&[5], 1.0, r)],
            |g, s, ids| {
                let (x, gamma, beta) = (p(g, s, ids, 0), p(g, s, ids, 1), p(g, s, ids, 2));
                let y = g.layer_norm(x, gamma, beta, 1e-5)?;
                probe(g, y, 25)
            },
        ),
        case("dropout", vec![random(&[4, 5], 1.0, r)], |g, s, ids| {
            let x = p(g, s, ids, 0);
            let y = g.dropout(x, 0.5, Mode::Train, &mut RngStream::new(26))?;
            probe(g, y, 26)
        }),
        OpCase {
            reference: Some(Box::new(|g, s, ids| {
                let x = p(g, s, ids, 0);
                let z = g.tanh(x)?;
                let y = probe(g, z, 27)?;
                g.neg(y)
            })),
            ..case("grad_reverse", vec![random(&[2, 3], 1.0, r)], |g, s, ids| {
                let x = p(g, s, ids, 0);
                let y = g.grad_reverse(x)?;
                let z = g.tanh(y)?;
                probe(g, z, 27)
            })
        },
        case("cross_entropy", vec![random(&[3, 4], 2.0, r)], |g, s, ids| {
            let x = p(g, s, ids, 0);
            let probs = g.masked_softmax(x, None)?;
            g.cross_entropy(probs, &[0, 3, 1])
        }),
        case("apply_time_mask", vec![random(&[2, 5, 3], 1.0, r)], move |g, s, ids| {
            let x = p(g, s, ids, 0);
            let y = g.apply_time_mask(x, &m35b)?;
            probe(g, y, 28)
        }),
        case("sum", vec![random(&[2, 2], 1.0, r)], |g, s, ids| {
            let x = p(g, s, ids, 0);
            let y = g.mul(x, x)?;
            g.sum(y)
        }),
    ]);
    for reverse in [false, true] {
        let ma = if reverse { m35c.clone() } else { m35d.clone() };
        cases.push(case(
            if reverse { "sru_reverse" } else { "sru" },
            vec![
                random(&[2, 5, 9], 1.0, r),
                random(&[2, 5, 3], 1.0, r),
                random(&[3], 1.0, r),
                random(&[3], 1.0, r),
                random(&[3], 0.5, r),
                random(&[3], 0.5, r),
            ],
            move |g, s, ids| {
                let v: Vec<Var> = (0..6).map(|i| p(g, s, ids, i)).collect();
                let y = g.sru(v[0], v[1], v[2], v[3], v[4], v[5], &ma, reverse)?;
                probe(g, y, 29 + reverse as u64)
            },
        ));
    }
    cases.push(case("masked_softmax_rows", vec![random(&[6, 6], 2.0, r)], move |g, s, ids| {
        let x = p(g, s, ids, 0);
        let y = g.masked_softmax(x, Some(&m46))?;
        probe(g, y, 31)
    }));
    cases
}

/// Worst relative error per differentiable operation, all coordinates.
pub fn op_errors() -> Vec<(String, f64)> {
    op_cases()
        .into_iter()
        .map(|c| {
            let mut store = ParamStore::new();
            let ids: Vec<ParamId> = c
                .inputs
                .into_iter()
                .enumerate()
                .map(|(i, t)| store.add(format!("{}.{i}", c.name), t))
                .collect();
            let build = &c.build;
            let reference = c.reference.as_ref().unwrap_or(build);
            let report = gradient_check_against(
                |g, s| build(g, s, &ids),
                |g, s, _| reference(g, s, &ids),
                &mut store,
                EPS,
                usize::MAX,
                &mut RngStream::new(0),
            )
            .unwrap_or_else(|e| panic!("{}: {e}", c.name));
            (c.name.to_string(), report.max_rel_error)
        })
        .collect()
}

pub fn example(ids: &[usize], label: u8, domain: Domain) -> EncodedExample {
    EncodedExample {
        id: "x".into(),
        ids: ids.to_vec(),
        label: Some(label),
        domain,
    }
}

pub fn tiny_config(branch: BranchConfig, adversarial: bool, vocab: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        glove_dim: 4,
        cove_dim: 3,
        filter_widths: vec![3, 5],
        filter_channels: 3,
        attention_width: 5,
        sru_hidden: 3,
        d_model: 4,
        transformer_layers: 1,
        heads: 2,
        d_ff: 6,
        max_len: 10,
        mlp_hidden: 4,
        dropout: 0.5,
        max_norm: None,
        branch,
        adversarial,
        ..ModelConfig::default()
    }
}

pub fn tiny_model(branch: BranchConfig, adversarial: bool, seed: u64) -> JessiModel {
    let mut rng = RngStream::new(seed);
    let vocab = 12;
    let mut pair = EmbeddingPair::new(random_table(vocab, 4, &mut rng), random_table(vocab, 3, &mut rng)).unwrap();
    pair.trainable_glove = true;
    pair.trainable_cove = true;
    JessiModel::new(tiny_config(branch, adversarial, vocab), &pair, &mut rng).unwrap()
}

pub fn source_batch() -> Batch {
    let a = example(&[2, 5, 7, 3], 1, Domain::Source);
    let b = example(&[4, 9, 6], 0, Domain::Source);
    Batch::collate([&a, &b])
}

pub fn target_batch() -> Batch {
    let a = example(&[8, 10, 11], 1, Domain::Target);
    let b = example(&[3, 4, 6, 10, 2], 0, Domain::Target);
    Batch::collate([&a, &b])
}

/// Training objective of one step in 64-bit mode with fixed dropout masks.
/// With `domain_sign = None` the domain term goes through gradient reversal
/// as in training; `Some(s)` builds `CE_y + s·λ·CE_d` without reversal, the
/// objective whose derivative the reversed tape reproduces (`s = -1` for
/// encoder parameters, `+1` for the domain head).
pub fn model_loss(model: &JessiModel, g: &mut Graph, store: &ParamStore, lambda: f64, domain_sign: Option<f64>) -> Result<Var> {
    let mut view = model.clone();
    view.store = store.clone();
    let mut rng = RngStream::new(77);
    let batch = source_batch();
    let enc = view.joint_encode(g, &batch, Mode::Train, &mut rng)?;
    let p_y = view.suggestion_probs(g, enc.joint, Mode::Train, &mut rng)?;
    let labels = batch.labels.clone().unwrap();
    if !model.config.adversarial {
        return combined_loss(g, Some((p_y, &labels)), None, lambda);
    }
    let db = Batch::collate([&example(&[2, 5, 7, 3], 1, Domain::Source), &example(&[8, 10, 11], 1, Domain::Target)]);
    let enc_d = view.joint_encode(g, &db, Mode::Train, &mut rng)?;
    let domains = db.domain_classes();
    match domain_sign {
        None => {
            let p_d = view.domain_probs(g, enc_d.joint, Mode::Train, &mut rng)?;
            combined_loss(g, Some((p_y, &labels)), Some((p_d, &domains)), lambda)
        }
        Some(sign) => {
            let head = view.mlp_d.as_ref().unwrap();
            let p_d = head.forward(g, &view.store, enc_d.joint, view.config.dropout, Mode::Train, &mut rng)?;
            let ce_y = g.cross_entropy(p_y, &labels)?;
            let ce_d = g.cross_entropy(p_d, &domains)?;
            let d = g.scale(ce_d, sign * lambda)?;
            g.add(ce_y, d)
        }
    }
}

pub fn branch_cases() -> Vec<(&'static str, BranchConfig, bool)> {
    let bert_only = |kind| BranchConfig {
        bert_sentence_encoder: kind,
        include_cnn_branch: false,
        include_bert_branch: true,
    };
    vec![
        (
            "CNN->Att",
            BranchConfig {
                include_bert_branch: false,
                ..BranchConfig::subtask_a()
            },
            false,
        ),
        ("transformer->CNN_MAXPOOL", bert_only(SentenceEncoderKind::CnnMaxPool), false),
        ("transformer->BiSRU", bert_only(SentenceEncoderKind::BiSru), false),
        ("JESSI-B+GradRev", BranchConfig::subtask_b(), true),
    ]
}

/// Worst relative error per full branch over every trainable coordinate.
pub fn branch_errors() -> Vec<(String, f64)> {
    branch_cases()
        .into_iter()
        .map(|(name, branch, adversarial)| {
            let model = tiny_model(branch, adversarial, 5);
            let mut store = model.store.clone();
            let report = gradient_check_against(
                |g, s| model_loss(&model, g, s, 0.7, None),
                |g, s, name| {
                    let sign = if name.starts_with("mlp_d") { 1.0 } else { -1.0 };
                    model_loss(&model, g, s, 0.7, Some(sign))
                },
                &mut store,
                EPS,
                usize::MAX,
                &mut RngStream::new(1),
            )
            .unwrap_or_else(|e| panic!("{name}: {e}"));
            (name.to_string(), report.max_rel_error)
        })
        .collect()
}

/// Outcome of comparing domain-loss gradients with and without reversal.
pub struct GradRevContract {
    pub forward_identical: bool,
    /// Largest `|g_rev + g_plain|` over encoder parameters.
    pub encoder_deviation: f64,
    /// Largest `|g_rev - g_plain|` over domain-head parameters.
    pub head_deviation: f64,
    pub encoder_coordinates: usize,
}

pub fn gradrev_contract() -> GradRevContract {
    let model = tiny_model(BranchConfig::subtask_b(), true, 9);
    let head = model.mlp_d.clone().unwrap();
    let batch = target_batch();
    let domains = batch.domain_classes();
    let grads = |reverse: bool| -> (Vec<f64>, Vec<(String, Vec<f64>)>) {
        let mut store = model.store.clone();
        store.zero_grads();
        let mut g = Graph::new(Precision::F64);
        let mut rng = RngStream::new(3);
        let enc = model.joint_encode(&mut g, &batch, Mode::Eval, &mut rng).unwrap();
        let x = if reverse { g.grad_reverse(enc.joint).unwrap() } else { enc.joint };
        let out = g.value(x).data().to_vec();
        let probs = head.forward(&mut g, &store, x, 0.0, Mode::Eval, &mut rng).unwrap();
        let loss = g.cross_entropy(probs, &domains).unwrap();
        g.backward(loss, &mut store).unwrap();
        let all = store
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(_, p)| (p.name.clone(), p.grad.data().to_vec()))
            .collect();
        (out, all)
    };
    let (fwd_rev, rev) = grads(true);
    let (fwd_plain, plain) = grads(false);
    let mut encoder_deviation: f64 = 0.0;
    let mut head_deviation: f64 = 0.0;
    let mut encoder_coordinates = 0;
    for ((name, a), (_, b)) in rev.iter().zip(&plain) {
        for (x, y) in a.iter().zip(b) {
            if name.starts_with("mlp_d") {
                head_deviation = head_deviation.max((x - y).abs());
            } else if !name.starts_with("mlp_y") {
                encoder_deviation = encoder_deviation.max((x + y).abs());
                encoder_coordinates += usize::from(*y != 0.0);
            }
        }
    }
    GradRevContract {
        forward_identical: fwd_rev == fwd_plain,
        encoder_deviation,
        head_deviation,
        encoder_coordinates,
    }
}
