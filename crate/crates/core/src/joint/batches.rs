use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::util::Rng;

/// Endless reshuffled index stream over one task's samples.
#[derive(Debug, Clone)]
struct TaskStream {
    order: Vec<usize>,
    pos: usize,
}

impl TaskStream {
    fn new(n: usize, rng: &mut Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        TaskStream { order, pos: 0 }
    }

    fn take(&mut self, k: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Mixed minibatches over several tasks: every batch holds
/// `batch_size / k` samples from each of the `k` tasks.
///
/// Each task is an independent shuffle that reshuffles whenever it runs out;
/// an epoch is `ceil(largest task / per-task share)` batches.
#[derive(Debug, Clone)]
pub struct MixedBatcher {
    streams: Vec<TaskStream>,
    per_task: usize,
    batches_per_epoch: usize,
}

impl MixedBatcher {
    pub fn per_task(&self) -> usize {
        self.per_task
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.batches_per_epoch
    }

    /// Indices for the next batch, one list per task.
    pub fn next_batch(&mut self, rng: &mut Rng) -> Vec<Vec<usize>> {
        let k = self.per_task;
        self.streams.iter_mut().map(|s| s.take(k, rng)).collect()
    }

    pub fn epoch(&mut self, rng: &mut Rng) -> Vec<Vec<Vec<usize>>> {
        (0..self.batches_per_epoch).map(|_| self.next_batch(rng)).collect()
    }
}

pub fn interleave_batches(task_sizes: &[usize], batch_size: usize, rng: &mut Rng) -> Result<MixedBatcher> {
    let k = task_sizes.len();
    if k == 0 {
        return Err(Error::invalid("no tasks to interleave"));
    }
    if batch_size == 0 || !batch_size.is_multiple_of(k) {
        return Err(Error::invalid(format!(
            "batch size {batch_size} is not divisible by {k} tasks"
        )));
    }
    if task_sizes.contains(&0) {
        return Err(Error::invalid("every task needs at least one sample"));
    }
    let per_task = batch_size / k;
    let largest = task_sizes.iter().copied().max().unwrap_or(0);
    Ok(MixedBatcher {
        streams: task_sizes.iter().map(|&n| TaskStream::new(n, rng)).collect(),
        per_task,
        batches_per_epoch: largest.div_ceil(per_task),
    })
}
