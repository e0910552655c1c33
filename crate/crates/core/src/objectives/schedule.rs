//! Deterministic interleaved task schedule realizing exact proportions.

use crate::batch::TaskKind;
use crate::error::{Error, Result};

/// Repeating pattern of task kinds; `next` is a pure function of the
/// cursor, so a checkpointed cursor replays exactly.
#[derive(Debug, Clone)]
pub struct TaskSchedule {
    pattern: Vec<TaskKind>,
    pub cursor: u64,
}

impl TaskSchedule {
    /// Build from integer proportions. The pattern interleaves tasks by
    /// largest remainder, so every window of one cycle length contains
    /// exactly the stated counts.
    pub fn new(proportions: &[(TaskKind, u32)]) -> Result<Self> {
        let total: u32 = proportions.iter().map(|(_, w)| w).sum();
        if total == 0 {
            return Err(Error::contract("task schedule: empty proportions"));
        }
        let mut emitted = vec![0u32; proportions.len()];
        let mut pattern = Vec::with_capacity(total as usize);
        for slot in 0..total {
            // pick the task with the largest deficit against its quota
            let mut best = 0;
            let mut best_deficit = f64::NEG_INFINITY;
            for (i, (_, w)) in proportions.iter().enumerate() {
                if *w == 0 {
                    continue;
                }
                let quota = *w as f64 * (slot + 1) as f64 / total as f64;
                let deficit = quota - emitted[i] as f64;
                if deficit > best_deficit {
                    best_deficit = deficit;
                    best = i;
                }
            }
            emitted[best] += 1;
            pattern.push(proportions[best].0);
        }
        Ok(TaskSchedule { pattern, cursor: 0 })
    }

    /// MTLM:ISM:ATTP = 9:2:1
    pub fn standard() -> Self {
        Self::new(&[
            (TaskKind::Mtlm, 9),
            (TaskKind::Ism, 2),
            (TaskKind::Attp, 1),
        ])
        .expect("static proportions")
    }

    /// MTLM:ISM = 3:1 for corpora without attributes
    pub fn no_attributes() -> Self {
        Self::new(&[(TaskKind::Mtlm, 3), (TaskKind::Ism, 1)]).expect("static proportions")
    }

    pub fn cycle_len(&self) -> usize {
        self.pattern.len()
    }

    pub fn task_at(&self, cursor: u64) -> TaskKind {
        self.pattern[(cursor % self.pattern.len() as u64) as usize]
    }

    pub fn next_task(&mut self) -> TaskKind {
        let task = self.task_at(self.cursor);
        self.cursor += 1;
        task
    }
}
