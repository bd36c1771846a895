use rand::Rng;

use super::adam::Adam;
use super::network::{QNetwork, Workspace};
use super::replay::{ReplayBuffer, Transition};
use super::{argmax, Normalizer};
use crate::config::TrainingConfig;
use crate::error::Result;
use crate::exec::Execution;

/// Samples per gradient chunk. Fixed so that summation order, and hence the
/// result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Smooth-L1 loss with unit threshold.
pub fn huber(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

fn huber_grad(d: f64) -> f64 {
    d.clamp(-1.0, 1.0)
}

/// TD targets `r + γ max_a' Q_target(s', a')`, or `r` on terminal transitions.
pub fn td_targets(target: &QNetwork, batch: &[&Transition], gamma: f64, norm: &Normalizer) -> Vec<f64> {
    let mut ws = Workspace::default();
    batch
        .iter()
        .map(|t| {
            if t.done {
                t.r
            } else {
                let q = target.forward_into(&t.s_next.normalized(norm), &mut ws);
                t.r + gamma * q[argmax(q)]
            }
        })
        .collect()
}

/// Mean Huber loss of `Q(s, a)` against fixed `targets`, with its gradient
/// with respect to every parameter of `online`.
pub fn loss_and_gradient(
    online: &QNetwork,
    batch: &[&Transition],
    targets: &[f64],
    norm: &Normalizer,
    exec: Execution,
) -> (f64, QNetwork) {
    assert_eq!(batch.len(), targets.len());
    let n = batch.len() as f64;
    let pairs: Vec<(&Transition, f64)> = batch.iter().copied().zip(targets.iter().copied()).collect();
    let partials = exec.map_chunks(&pairs, GRAD_CHUNK, |chunk| {
        let mut grads = online.zeros_like();
        let mut ws = Workspace::default();
        let mut loss = 0.0;
        let mut upstream = vec![0.0; online.output_dim()];
        for &(t, y) in chunk {
            let x = t.s.normalized(norm);
            let q = online.forward_into(&x, &mut ws)[t.a.id()];
            let d = q - y;
            loss += huber(d);
            upstream.iter_mut().for_each(|u| *u = 0.0);
            upstream[t.a.id()] = huber_grad(d) / n;
            online.accumulate_gradient(&x, &upstream, &mut grads, &mut ws);
        }
        (loss, grads)
    });
    let mut total = 0.0;
    let mut grads = online.zeros_like();
    for (loss, g) in &partials {
        total += loss;
        grads.add_assign(g);
    }
    (total / n, grads)
}

/// Mean Huber loss only; used by finite-difference checks.
pub fn batch_loss(online: &QNetwork, batch: &[&Transition], targets: &[f64], norm: &Normalizer) -> f64 {
    let mut ws = Workspace::default();
    let sum: f64 = batch
        .iter()
        .zip(targets)
        .map(|(t, y)| huber(online.forward_into(&t.s.normalized(norm), &mut ws)[t.a.id()] - y))
        .sum();
    sum / batch.len() as f64
}

/// Online and target networks plus optimizer state.
#[derive(Debug, Clone)]
pub struct DqnLearner {
    pub online: QNetwork,
    pub target: QNetwork,
    optimizer: Adam,
    pub gamma: f64,
    pub batch_size: usize,
    pub normalizer: Normalizer,
    pub exec: Execution,
}

impl DqnLearner {
    pub fn new(online: QNetwork, tc: &TrainingConfig, normalizer: Normalizer) -> Self {
        let optimizer = Adam::new(&online, tc.learning_rate);
        Self {
            target: online.clone(),
            online,
            optimizer,
            gamma: tc.gamma,
            batch_size: tc.batch_size,
            normalizer,
            exec: Execution::default(),
        }
    }

    /// One gradient step on a uniformly sampled batch. Returns `None`
    /// without touching anything if the buffer holds fewer than a batch.
    pub fn train_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Option<f64> {
        let batch = buffer.sample(self.batch_size, rng)?;
        Some(self.train_on(&batch))
    }

    pub fn train_on(&mut self, batch: &[&Transition]) -> f64 {
        let targets = td_targets(&self.target, batch, self.gamma, &self.normalizer);
        let (loss, grads) = loss_and_gradient(&self.online, batch, &targets, &self.normalizer, self.exec);
        self.optimizer.step(&mut self.online, &grads);
        loss
    }

    pub fn sync_target(&mut self) -> Result<()> {
        self.target.copy_from(&self.online)
    }
}

/// Whether the target network is refreshed after `global_step` (1-based).
pub fn sync_due(global_step: u64, every: u64) -> bool {
    global_step > 0 && global_step.is_multiple_of(every)
}
