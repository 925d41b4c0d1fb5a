//! Fixed-step time grid shared by the propagators.

use crate::error::{Error, Result};
use crate::model::ProtocolSpec;

/// One integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub stage: usize,
    /// Step start, relative to the stage start.
    pub local_start: f64,
    pub dt: f64,
    /// Global time at the end of the step.
    pub time_end: f64,
    /// Whether an observable sample is taken after this step.
    pub record: bool,
}

/// Splits every stage into an integer number of equal steps no longer than
/// the requested `dt`, so stage boundaries fall exactly on the grid.
#[derive(Debug, Clone)]
pub struct Timeline {
    stages: Vec<(f64, usize, f64)>,
    sample_every: usize,
}

impl Timeline {
    pub fn new(spec: &ProtocolSpec, dt: f64, sample_every: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if sample_every == 0 {
            return Err(Error::InvalidParameter(
                "sample_every must be at least 1".into(),
            ));
        }
        let mut start = 0.0;
        let stages = spec
            .stages
            .iter()
            .map(|s| {
                let n = ((s.duration / dt) - 1e-9).ceil().max(1.0) as usize;
                let entry = (start, n, s.duration / n as f64);
                start += s.duration;
                entry
            })
            .collect();
        Ok(Timeline {
            stages,
            sample_every,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.stages.iter().map(|s| s.1).sum()
    }

    pub fn steps(&self) -> impl Iterator<Item = Step> + '_ {
        let total = self.total_steps();
        let every = self.sample_every;
        self.stages
            .iter()
            .enumerate()
            .flat_map(|(k, &(start, n, dt))| (0..n).map(move |i| (k, start, n, dt, i)))
            .enumerate()
            .map(move |(global, (stage, start, n, dt, i))| {
                let local_end = if i + 1 == n {
                    n as f64 * dt
                } else {
                    (i + 1) as f64 * dt
                };
                Step {
                    stage,
                    local_start: i as f64 * dt,
                    dt,
                    time_end: start + local_end,
                    record: (global + 1) % every == 0 || global + 1 == total,
                }
            })
    }
}
