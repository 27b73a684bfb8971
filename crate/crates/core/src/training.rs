//! Adadelta with max-norm constraints, early stopping on trial F1,
//! k-fold training and top-k majority-vote ensembles.

use serde::{Deserialize, Serialize};

use crate::adversarial::{combined_loss, LambdaSchedule, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::evaluation::prf1;
use crate::model::{JessiModel, ModelConfig};
use crate::tensor::{Graph, Mode, ParamStore, Precision, RngStream, Tensor};
use crate::text::{make_batches, Batch, EmbeddingPair, EncodedExample};

pub const RHO: f64 = 0.95;
pub const EPSILON: f64 = 1e-6;

/// Running averages `E[g²]` and `E[Δx²]` for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub sq_grad: Tensor,
    pub sq_delta: Tensor,
}

impl AdadeltaState {
    pub fn zeros(shape: &[usize]) -> Self {
        AdadeltaState {
            sq_grad: Tensor::zeros(shape),
            sq_delta: Tensor::zeros(shape),
        }
    }
}

/// One Adadelta update of `param` in place.
pub fn adadelta_step(param: &mut Tensor, grad: &Tensor, state: &mut AdadeltaState, rho: f64, eps: f64) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != state.sq_grad.shape() {
        return Err(Error::shape("adadelta_step", param.shape(), grad.shape()));
    }
    if !grad.all_finite() {
        return Err(Error::NonFinite("adadelta gradient".into()));
    }
    let g = grad.data();
    let eg = state.sq_grad.data_mut();
    for (e, &gi) in eg.iter_mut().zip(g) {
        *e = rho * *e + (1.0 - rho) * gi * gi;
    }
    let eg = state.sq_grad.data();
    let ed = state.sq_delta.data_mut();
    let p = param.data_mut();
    for i in 0..p.len() {
        let delta = -((ed[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * g[i];
        ed[i] = rho * ed[i] + (1.0 - rho) * delta * delta;
        p[i] += delta;
    }
    Ok(())
}

/// Adadelta over every trainable parameter of a store, followed by the
/// max-norm projection of constrained parameters.
#[derive(Debug, Clone)]
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
    states: Vec<AdadeltaState>,
}

impl Adadelta {
    pub fn new(store: &ParamStore, rho: f64, eps: f64) -> Self {
        let states = store.iter().map(|(_, p)| AdadeltaState::zeros(p.value.shape())).collect();
        Adadelta { rho, eps, states }
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.iter().any(|(_, p)| p.trainable && !p.grad.all_finite()) {
            return Err(Error::NonFinite("parameter gradient".into()));
        }
        for (p, state) in store.iter_mut().zip(&mut self.states) {
            if !p.trainable {
                continue;
            }
            adadelta_step(&mut p.value, &p.grad, state, self.rho, self.eps)?;
            p.project();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialSet {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub folds: usize,
    pub top_k: usize,
    pub gamma: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Trial set whose F1 drives early stopping and ensemble selection.
    pub early_stopping: TrialSet,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            batch_size: 32,
            max_epochs: 20,
            patience: 5,
            folds: 10,
            top_k: 3,
            gamma: DEFAULT_GAMMA,
            rho: RHO,
            epsilon: EPSILON,
            early_stopping: TrialSet::A,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 || self.folds == 0 {
            return Err(Error::Config("batch_size, max_epochs and folds must be positive".into()));
        }
        if self.top_k == 0 || self.top_k > self.folds {
            return Err(Error::Config(format!(
                "top_k {} must lie in 1..={}",
                self.top_k, self.folds
            )));
        }
        if self.gamma <= 0.0 || !(0.0..1.0).contains(&self.rho) || self.epsilon <= 0.0 {
            return Err(Error::Config("gamma and epsilon must be positive and rho in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Trial splits of both domains (labels used for early stopping, sentences
/// for the domain term).
#[derive(Debug, Clone, Copy)]
pub struct TrialSets<'a> {
    pub a: &'a [EncodedExample],
    pub b: &'a [EncodedExample],
}

impl<'a> TrialSets<'a> {
    pub fn scoring(&self, which: TrialSet) -> &'a [EncodedExample] {
        match which {
            TrialSet::A => self.a,
            TrialSet::B => self.b,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: JessiModel,
    /// Trial F1 after each completed epoch.
    pub history: Vec<f64>,
    pub best_epoch: usize,
    pub best_f1: f64,
}

impl TrainedModel {
    pub fn epochs(&self) -> usize {
        self.history.len()
    }
}

/// Positive-class F1 of `model` on labeled examples.
pub fn score(model: &JessiModel, examples: &[EncodedExample], batch_size: usize) -> Result<f64> {
    let batches = make_batches(examples, batch_size, false, &mut RngStream::new(0));
    let pred = model.predict(&batches)?;
    let gold: Vec<usize> = examples
        .iter()
        .map(|e| e.label.map(usize::from).ok_or_else(|| Error::Invalid(format!("{} has no label", e.id))))
        .collect::<Result<_>>()?;
    Ok(prf1(&pred, &gold)?.f1)
}

fn domain_batch(trials: &TrialSets, size: usize, rng: &mut RngStream) -> Result<Batch> {
    if trials.a.is_empty() || trials.b.is_empty() {
        return Err(Error::Invalid("domain adversarial training needs both trial sets".into()));
    }
    let half = (size / 2).max(1);
    let mut picks: Vec<&EncodedExample> = Vec::with_capacity(2 * half);
    for set in [trials.a, trials.b] {
        for _ in 0..half {
            picks.push(&set[rng.below(set.len())]);
        }
    }
    Ok(Batch::collate(picks))
}

fn training_error(epoch: usize, step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::Training(format!("non-finite {what} at epoch {epoch}, step {step}")),
        other => other,
    }
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    config: &TrainConfig,
    model: &mut JessiModel,
    opt: &mut Adadelta,
    batch: &Batch,
    trials: &TrialSets,
    lambda: f64,
    dropout_rng: &mut RngStream,
    domain_rng: &mut RngStream,
) -> Result<()> {
    let mut g = Graph::new(Precision::F32);
    let enc = model.joint_encode(&mut g, batch, Mode::Train, dropout_rng)?;
    let p_y = model.suggestion_probs(&mut g, enc.joint, Mode::Train, dropout_rng)?;
    let labels = batch
        .labels
        .as_ref()
        .ok_or_else(|| Error::Invalid("training batch without labels".into()))?;
    let loss = if model.config.adversarial {
        let db = domain_batch(trials, config.batch_size, domain_rng)?;
        let enc_d = model.joint_encode(&mut g, &db, Mode::Train, dropout_rng)?;
        let p_d = model.domain_probs(&mut g, enc_d.joint, Mode::Train, dropout_rng)?;
        let dc = db.domain_classes();
        combined_loss(&mut g, Some((p_y, labels)), Some((p_d, &dc)), lambda)?
    } else {
        combined_loss(&mut g, Some((p_y, labels)), None, lambda)?
    };
    model.store.zero_grads();
    g.backward(loss, &mut model.store)?;
    opt.step(&mut model.store)
}

/// Trains one model with early stopping; the returned parameters are those
/// of the best trial-F1 epoch, the latest one on ties. Only a strict
/// improvement resets the patience counter.
pub fn train_model(
    config: &TrainConfig,
    train: &[EncodedExample],
    trials: &TrialSets,
    embeddings: &EmbeddingPair,
    rng: &RngStream,
) -> Result<TrainedModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    if train.iter().any(|e| e.label.is_none()) {
        return Err(Error::Invalid("training examples must be labeled".into()));
    }
    let scoring = trials.scoring(config.early_stopping);
    let mut model = JessiModel::new(config.model.clone(), embeddings, &mut rng.child(0))?;
    let mut opt = Adadelta::new(&model.store, config.rho, config.epsilon);
    let schedule = LambdaSchedule {
        gamma: config.gamma,
        total_epochs: config.max_epochs,
    };
    let mut shuffle_rng = rng.child(1);
    let mut dropout_rng = rng.child(2);
    let mut domain_rng = rng.child(3);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut stale = 0;
    for epoch in 0..config.max_epochs {
        let lambda = schedule.at(epoch);
        let batches = make_batches(train, config.batch_size, true, &mut shuffle_rng);
        for (step, batch) in batches.iter().enumerate() {
            train_step(config, &mut model, &mut opt, batch, trials, lambda, &mut dropout_rng, &mut domain_rng)
                .map_err(|e| training_error(epoch, step, e))?;
        }
        let f1 = score(&model, scoring, config.batch_size)?;
        log::debug!("epoch {epoch}: lambda {lambda:.4}, trial F1 {f1:.4}");
        history.push(f1);
        let previous = best.as_ref().map(|(_, b, _)| *b);
        if previous.is_none_or(|b| f1 >= b) {
            best = Some((epoch, f1, model.store.clone()));
        }
        if previous.is_none_or(|b| f1 > b) {
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }
    let (best_epoch, best_f1, store) = best.expect("at least one epoch ran");
    model.store = store;
    Ok(TrainedModel {
        model,
        history,
        best_epoch,
        best_f1,
    })
}

/// Seeded partition of `0..n` into `folds` disjoint parts whose sizes
/// differ by at most one.
pub fn fold_partition(n: usize, folds: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    if folds == 0 || n < folds {
        return Err(Error::Invalid(format!("cannot split {n} examples into {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut parts = vec![Vec::with_capacity(n / folds + 1); folds];
    for (i, idx) in order.into_iter().enumerate() {
        parts[i % folds].push(idx);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Builds a rayon pool with `threads` workers (0 means the rayon default).
pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))
}

/// Model `k` trains on every fold except fold `k`. Results are in fold order
/// and independent of the number of worker threads.
pub fn kfold_train(
    config: &TrainConfig,
    train: &[EncodedExample],
    trials: &TrialSets,
    embeddings: &EmbeddingPair,
    pool: &rayon::ThreadPool,
) -> Result<Vec<TrainedModel>> {
    use rayon::prelude::*;
    config.validate()?;
    let base = RngStream::new(config.seed);
    let parts = fold_partition(train.len(), config.folds, &mut base.child(0))?;
    pool.install(|| {
        (0..config.folds)
            .into_par_iter()
            .map(|k| {
                let subset: Vec<EncodedExample> = parts
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .flat_map(|(_, p)| p.iter().map(|&i| train[i].clone()))
                    .collect();
                let trained = train_model(config, &subset, trials, embeddings, &base.child(1 + k as u64))?;
                log::info!("fold {k}: best trial F1 {:.4} at epoch {}", trained.best_f1, trained.best_epoch);
                Ok(trained)
            })
            .collect()
    })
}

/// Trains `runs` models on the full training set, run `r` seeded from
/// stream `r` of the base seed.
pub fn multi_seed_train(
    config: &TrainConfig,
    train: &[EncodedExample],
    trials: &TrialSets,
    embeddings: &EmbeddingPair,
    runs: usize,
    pool: &rayon::ThreadPool,
) -> Result<Vec<TrainedModel>> {
    use rayon::prelude::*;
    config.validate()?;
    let base = RngStream::new(config.seed);
    pool.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|r| train_model(config, train, trials, embeddings, &base.child(r as u64)))
            .collect()
    })
}

/// Indices of the `k` highest scores; ties go to the lower index.
pub fn ensemble_select(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if scores.len() < k {
        return Err(Error::NotEnoughModels {
            need: k,
            got: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

/// Most frequent class; ties go to the smaller class index.
pub fn majority_vote(votes: &[usize]) -> usize {
    let classes = votes.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes.max(1)];
    for &v in votes {
        counts[v] += 1;
    }
    let best = counts.iter().max().copied().unwrap_or(0);
    counts.iter().position(|&c| c == best).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<JessiModel>,
    pub scores: Vec<f64>,
}

impl Ensemble {
    pub fn from_trained(models: Vec<TrainedModel>, k: usize) -> Result<Self> {
        let scores: Vec<f64> = models.iter().map(|m| m.best_f1).collect();
        let keep = ensemble_select(&scores, k)?;
        let mut slots: Vec<Option<TrainedModel>> = models.into_iter().map(Some).collect();
        let members: Vec<JessiModel> = keep.iter().map(|&i| slots[i].take().expect("distinct").model).collect();
        Ok(Ensemble {
            members,
            scores: keep.iter().map(|&i| scores[i]).collect(),
        })
    }

    /// Majority vote of the members' argmax predictions.
    pub fn predict(&self, batches: &[Batch]) -> Result<Vec<usize>> {
        let votes: Vec<Vec<usize>> = self.members.iter().map(|m| m.predict(batches)).collect::<Result<_>>()?;
        let n = votes.first().map_or(0, Vec::len);
        Ok((0..n)
            .map(|i| majority_vote(&votes.iter().map(|v| v[i]).collect::<Vec<_>>()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_matches_hand_value() {
        let mut p = Tensor::scalar(0.0);
        let mut s = AdadeltaState::zeros(&[]);
        adadelta_step(&mut p, &Tensor::scalar(1.0), &mut s, RHO, EPSILON).unwrap();
        assert_abs_diff_eq!(p.item(), -0.0044721, epsilon = 1e-6);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = Tensor::vector(vec![0.3, -1.2]);
        let mut s = AdadeltaState {
            sq_grad: Tensor::zeros(&[2]),
            sq_delta: Tensor::zeros(&[2]),
        };
        let before = (p.clone(), s.clone());
        adadelta_step(&mut p, &Tensor::zeros(&[2]), &mut s, RHO, EPSILON).unwrap();
        assert_eq!((p, s), before);
    }

    // Trajectory of f(x) = x² from x = 1 under the update equations,
    // evaluated independently in double precision.
    #[test]
    fn parabola_trajectory_matches_reference() {
        let mut x = Tensor::scalar(1.0);
        let mut s = AdadeltaState::zeros(&[]);
        let mut at = Vec::new();
        for step in 1..=400 {
            let g = Tensor::scalar(2.0 * x.item());
            adadelta_step(&mut x, &g, &mut s, RHO, EPSILON).unwrap();
            if step == 200 || step == 400 {
                at.push(x.item());
            }
        }
        assert_abs_diff_eq!(at[0], 0.31460493385769905, epsilon = 1e-12);
        assert_abs_diff_eq!(at[1], 0.015575536934659892, epsilon = 1e-12);
        assert!(at[1].powi(2) < 1e-2);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = Tensor::scalar(0.0);
        let mut s = AdadeltaState::zeros(&[]);
        assert!(adadelta_step(&mut p, &Tensor::scalar(f64::NAN), &mut s, RHO, EPSILON).is_err());
        assert_eq!(p.item(), 0.0);
    }

    #[test]
    fn folds_partition_the_set() {
        let parts = fold_partition(103, 10, &mut RngStream::new(1)).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert!(fold_partition(5, 10, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn selection_and_votes() {
        assert_eq!(ensemble_select(&[0.7, 0.9, 0.6, 0.8], 3).unwrap(), vec![1, 3, 0]);
        assert_eq!(ensemble_select(&[0.5, 0.8, 0.9, 0.8], 2).unwrap(), vec![2, 1]);
        assert!(ensemble_select(&[0.5, 0.8], 3).is_err());
        assert_eq!(majority_vote(&[1, 1, 0]), 1);
        assert_eq!(majority_vote(&[0, 0, 0]), 0);
        assert_eq!(majority_vote(&[0, 1, 0]), 0);
    }
}
