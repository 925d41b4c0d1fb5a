//! Observables of a run: trap populations, dark-state projection, coherence
//! and the reduced-model versus grid comparison.
//!
//! Trap populations are raw overlaps with displaced oscillator states and are
//! not orthogonalized, so their sum can exceed one while traps are close.
//! In 2D every quantity is traced over the transverse coordinate.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, oscillator, oscillator_overlap, NumericalPolicy, Snapshot, WaveFunction};
use crate::model::{ProtocolSpec, Trap, TrapPositions};
use crate::three_mode;

pub const CSV_HEADER: &str = "t,p_L,p_M,p_R,p_dark,coherence,norm";

/// Observables at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSample {
    pub time: f64,
    pub p_l: f64,
    pub p_m: f64,
    pub p_r: f64,
    pub p_dark: f64,
    pub coherence: f64,
    pub norm: f64,
}

impl PopulationSample {
    pub fn populations(&self) -> [f64; 3] {
        [self.p_l, self.p_m, self.p_r]
    }

    pub fn population(&self, trap: Trap) -> f64 {
        self.populations()[trap.index()]
    }
}

/// Sampled time series of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunResult {
    pub samples: Vec<PopulationSample>,
    pub snapshots: Vec<Snapshot>,
}

impl RunResult {
    pub fn new(samples: Vec<PopulationSample>) -> Self {
        RunResult {
            samples,
            snapshots: Vec::new(),
        }
    }

    pub fn final_sample(&self) -> &PopulationSample {
        self.samples
            .last()
            .expect("runs record at least the initial sample")
    }

    /// Largest value of `f` over all samples.
    pub fn max_of<F: Fn(&PopulationSample) -> f64>(&self, f: F) -> f64 {
        self.samples.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest value of `f` over samples with `t_from <= t <= t_to`.
    pub fn min_over<F: Fn(&PopulationSample) -> f64>(&self, t_from: f64, t_to: f64, f: F) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.time >= t_from - 1e-9 && s.time <= t_to + 1e-9)
            .map(f)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.max_of(|s| (s.norm - 1.0).abs())
    }

    /// Sample closest to `t`.
    pub fn at(&self, t: f64) -> &PopulationSample {
        self.samples
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
            .expect("runs record at least the initial sample")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.samples.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                s.time, s.p_l, s.p_m, s.p_r, s.p_dark, s.coherence, s.norm
            );
        }
        out
    }
}

/// Row-wise overlaps of `psi` with `phi_n(x - x_i)` for the three traps.
fn trap_overlaps(psi: &WaveFunction, positions: &TrapPositions, n: u32) -> [Vec<Complex64>; 3] {
    positions
        .as_array()
        .map(|c| psi.x_overlaps(|x| oscillator(n, x - c)))
}

fn row_weight(psi: &WaveFunction) -> f64 {
    psi.grid.y.map_or(1.0, |y| y.spacing())
}

/// `(p_L, p_M, p_R)` as raw squared overlaps with `|n>` of each trap.
pub fn populations(psi: &WaveFunction, positions: &TrapPositions, n: u32) -> [f64; 3] {
    let w = row_weight(psi);
    trap_overlaps(psi, positions, n).map(|rows| rows.iter().map(|a| a.norm_sqr()).sum::<f64>() * w)
}

fn dark_from_overlaps(
    ov: &[Vec<Complex64>; 3],
    positions: &TrapPositions,
    theta: f64,
    n: u32,
    w: f64,
) -> f64 {
    let (s, c) = theta.sin_cos();
    let projected: f64 = ov[0]
        .iter()
        .zip(&ov[2])
        .map(|(l, r)| (l * c - r * s).norm_sqr())
        .sum::<f64>()
        * w;
    // Norm of cos(theta) phi(x - x_L) - sin(theta) phi(x - x_R), which drops
    // below one once the outer traps overlap.
    let gram = 1.0 - 2.0 * s * c * oscillator_overlap(n, positions.x_r - positions.x_l);
    projected / gram
}

fn coherence_from_overlaps(ov: &[Vec<Complex64>; 3], w: f64) -> f64 {
    (ov[0]
        .iter()
        .zip(&ov[2])
        .map(|(l, r)| l * r.conj())
        .sum::<Complex64>()
        * w)
        .norm()
}

/// Probability of the ground-level dark state
/// `cos(theta) |0>_L - sin(theta) |0>_R`, normalized as a position-space
/// state.
pub fn dark_population(psi: &WaveFunction, positions: &TrapPositions, theta: f64) -> f64 {
    dark_population_level(psi, positions, theta, 0)
}

/// As [`dark_population`] built from `|n>` of the outer traps.
pub fn dark_population_level(
    psi: &WaveFunction,
    positions: &TrapPositions,
    theta: f64,
    n: u32,
) -> f64 {
    let ov = trap_overlaps(psi, positions, n);
    dark_from_overlaps(&ov, positions, theta, n, row_weight(psi))
}

/// `|c_L c_R^*|` for the ground level.
pub fn coherence(psi: &WaveFunction, positions: &TrapPositions) -> f64 {
    coherence_level(psi, positions, 0)
}

pub fn coherence_level(psi: &WaveFunction, positions: &TrapPositions, n: u32) -> f64 {
    let ov = trap_overlaps(psi, positions, n);
    coherence_from_overlaps(&ov, row_weight(psi))
}

/// All observables of one grid state.
pub fn sample(
    psi: &WaveFunction,
    positions: &TrapPositions,
    n: u32,
    dark_theta: f64,
) -> PopulationSample {
    let w = row_weight(psi);
    let ov = trap_overlaps(psi, positions, n);
    let [p_l, p_m, p_r] = ov
        .each_ref()
        .map(|rows| rows.iter().map(|a| a.norm_sqr()).sum::<f64>() * w);
    PopulationSample {
        time: psi.time,
        p_l,
        p_m,
        p_r,
        p_dark: dark_from_overlaps(&ov, positions, dark_theta, n, w),
        coherence: coherence_from_overlaps(&ov, w),
        norm: psi.norm_sqr(),
    }
}

/// Final population of the right trap.
pub fn transfer_efficiency(result: &RunResult) -> f64 {
    result.final_sample().p_r
}

/// Differences between the reduced model and the 1D grid solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelComparison {
    pub times: Vec<f64>,
    /// `|p_grid - p_three_mode|` per sample for L, M, R.
    pub differences: Vec<[f64; 3]>,
    pub max_abs: [f64; 3],
    pub final_abs: [f64; 3],
}

impl ModelComparison {
    pub fn from_runs(reduced: &RunResult, full: &RunResult) -> Result<Self> {
        if reduced.samples.len() != full.samples.len() {
            return Err(Error::InvalidParameter(format!(
                "runs have {} and {} samples",
                reduced.samples.len(),
                full.samples.len()
            )));
        }
        let mut times = Vec::with_capacity(full.samples.len());
        let mut differences = Vec::with_capacity(full.samples.len());
        for (a, b) in reduced.samples.iter().zip(&full.samples) {
            if (a.time - b.time).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "sample times differ: {} vs {}",
                    a.time, b.time
                )));
            }
            let pa = a.populations();
            let pb = b.populations();
            times.push(b.time);
            differences.push([0, 1, 2].map(|i| (pa[i] - pb[i]).abs()));
        }
        let max_abs = [0, 1, 2].map(|i| differences.iter().map(|d| d[i]).fold(0.0, f64::max));
        let final_abs = *differences.last().expect("at least one sample");
        Ok(ModelComparison {
            times,
            differences,
            max_abs,
            final_abs,
        })
    }
}

/// Runs both models on the same schedule and sample times.
pub fn compare_models(spec: &ProtocolSpec, policy: &NumericalPolicy) -> Result<ModelComparison> {
    if spec.level != 0 || spec.dims != 1 {
        return Err(Error::InvalidProtocol(
            "model comparison needs a 1D ground-level protocol".into(),
        ));
    }
    let reduced = three_mode::evolve_three_mode(spec, policy.dt, policy.sample_every)?;
    let full = grid::run(spec, policy)?;
    ModelComparison::from_runs(&reduced, &full)
}
