//! Mini-batched objectives over a finite dataset.
//!
//! Each epoch draws a fresh permutation of the dataset and walks through it in
//! consecutive batches of `batch_size`; the last batch of an epoch may be
//! shorter. One batch is consumed per solver iteration, so an epoch lasts
//! `ceil(len / batch_size)` iterations.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::problem::BiLevelProblem;
use crate::rng::RngStream;
use crate::Scalar;

use super::run::ProblemSource;

#[derive(Clone, Debug)]
pub struct MiniBatchSampler {
    len: usize,
    batch_size: usize,
    rng: RngStream,
    perm: Vec<usize>,
    cursor: usize,
    epoch: usize,
    started: bool,
    current: Arc<Vec<usize>>,
}

impl MiniBatchSampler {
    pub fn new(len: usize, batch_size: usize, rng: RngStream) -> Result<Self> {
        if batch_size == 0 || batch_size > len {
            return Err(Error::Config(format!(
                "batch size {batch_size} must be in 1..={len} (dataset size)"
            )));
        }
        Ok(Self {
            len,
            batch_size,
            rng,
            perm: Vec::new(),
            cursor: 0,
            epoch: 0,
            started: false,
            current: Arc::new(Vec::new()),
        })
    }

    /// Iterations per epoch.
    pub fn epoch_len(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }

    /// Completed epochs before the current batch.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Advances to the next batch and returns its indices.
    pub fn next_batch(&mut self) -> Arc<Vec<usize>> {
        if !self.started || self.cursor >= self.len {
            if self.started {
                self.epoch += 1;
            }
            self.started = true;
            self.perm = self.rng.permutation(self.len);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.len);
        self.current = Arc::new(self.perm[self.cursor..end].to_vec());
        self.cursor = end;
        Arc::clone(&self.current)
    }

    pub fn current(&self) -> Arc<Vec<usize>> {
        Arc::clone(&self.current)
    }
}

pub type DatasetObjective<T> = Arc<dyn Fn(&[T], &[usize]) -> T + Send + Sync>;

/// An objective evaluated on the current mini-batch.
#[derive(Clone)]
pub struct MiniBatchObjective<T> {
    full: DatasetObjective<T>,
    sampler: MiniBatchSampler,
}

impl<T: Scalar> MiniBatchObjective<T> {
    pub fn new(
        full: impl Fn(&[T], &[usize]) -> T + Send + Sync + 'static,
        dataset_len: usize,
        batch_size: usize,
        rng: RngStream,
    ) -> Result<Self> {
        Ok(Self {
            full: Arc::new(full),
            sampler: MiniBatchSampler::new(dataset_len, batch_size, rng)?,
        })
    }

    pub fn advance(&mut self) -> Arc<Vec<usize>> {
        self.sampler.next_batch()
    }

    pub fn eval(&self, theta: &[T]) -> T {
        (self.full)(theta, &self.sampler.current)
    }

    pub fn epoch(&self) -> usize {
        self.sampler.epoch()
    }

    pub fn epoch_len(&self) -> usize {
        self.sampler.epoch_len()
    }

    /// Snapshot of the objective on the current batch.
    pub fn current_fn(&self) -> impl Fn(&[T]) -> T + Send + Sync + 'static {
        let full = Arc::clone(&self.full);
        let batch = self.sampler.current();
        move |x: &[T]| full(x, &batch)
    }
}

/// Per-iteration evaluator of `full` on successive mini-batches.
pub fn minibatch_objective<T: Scalar>(
    full: impl Fn(&[T], &[usize]) -> T + Send + Sync + 'static,
    dataset_len: usize,
    batch_size: usize,
    rng: RngStream,
) -> Result<MiniBatchObjective<T>> {
    MiniBatchObjective::new(full, dataset_len, batch_size, rng)
}

/// A bi-level problem whose two objectives share one mini-batch per iteration.
pub struct MiniBatchProblem<T> {
    lower: DatasetObjective<T>,
    upper: DatasetObjective<T>,
    sampler: MiniBatchSampler,
    template: BiLevelProblem<T>,
    current: BiLevelProblem<T>,
    last_iter: Option<usize>,
}

impl<T: Scalar> MiniBatchProblem<T> {
    /// `template` carries the metadata (dimension, `theta_good`, ...); its
    /// objectives are replaced by the batched ones.
    pub fn new(
        lower: impl Fn(&[T], &[usize]) -> T + Send + Sync + 'static,
        upper: impl Fn(&[T], &[usize]) -> T + Send + Sync + 'static,
        template: BiLevelProblem<T>,
        sampler: MiniBatchSampler,
    ) -> Self {
        Self {
            lower: Arc::new(lower),
            upper: Arc::new(upper),
            sampler,
            current: template.clone(),
            template,
            last_iter: None,
        }
    }

    fn rebuild(&mut self) {
        let batch = self.sampler.next_batch();
        let (l, u) = (Arc::clone(&self.lower), Arc::clone(&self.upper));
        let b2 = Arc::clone(&batch);
        let mut p = self.template.clone();
        p.lower = Arc::new(move |x: &[T]| l(x, &batch));
        p.upper = Arc::new(move |x: &[T]| u(x, &b2));
        self.current = p;
    }
}

impl<T: Scalar> ProblemSource<T> for MiniBatchProblem<T> {
    fn problem(&mut self, iter: usize) -> &BiLevelProblem<T> {
        if self.last_iter != Some(iter) {
            self.rebuild();
            self.last_iter = Some(iter);
        }
        &self.current
    }

    fn epoch(&self) -> Option<usize> {
        Some(self.sampler.epoch())
    }
}
