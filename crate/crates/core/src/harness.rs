//! Sweeps, convergence studies and file export.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{self, PopulationSample, RunResult};
use crate::error::{Error, Result};
use crate::grid::{self, NumericalPolicy, Snapshot};
use crate::model::ProtocolSpec;
use crate::three_mode;

pub const SWEEP_CSV_HEADER: &str = "value,efficiency,p_L,p_M,p_R,p_dark";

/// Largest tolerated change of a terminal observable between the two finest
/// resolution levels.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-3;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    ThreeMode,
    Grid1d,
    Grid2d,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::ThreeMode => "three_mode",
            SolverKind::Grid1d => "grid_1d",
            SolverKind::Grid2d => "grid_2d",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "three_mode" => Ok(SolverKind::ThreeMode),
            "grid_1d" => Ok(SolverKind::Grid1d),
            "grid_2d" => Ok(SolverKind::Grid2d),
            _ => Err(Error::InvalidParameter(format!(
                "unknown solver `{s}` (expected three_mode, grid_1d or grid_2d)"
            ))),
        }
    }
}

/// Runs `spec` with the chosen solver. The grid solvers override
/// `spec.dims` to match.
pub fn run_solver(
    spec: &ProtocolSpec,
    solver: SolverKind,
    policy: &NumericalPolicy,
) -> Result<RunResult> {
    run_solver_with_snapshots(spec, solver, policy, &[])
}

pub fn run_solver_with_snapshots(
    spec: &ProtocolSpec,
    solver: SolverKind,
    policy: &NumericalPolicy,
    snapshot_times: &[f64],
) -> Result<RunResult> {
    match solver {
        SolverKind::ThreeMode => {
            three_mode::evolve_three_mode(spec, policy.dt, policy.sample_every)
        }
        SolverKind::Grid1d => {
            let spec = ProtocolSpec {
                dims: 1,
                ..spec.clone()
            };
            grid::simulate(
                &spec,
                &grid::RunConfig {
                    policy: *policy,
                    snapshot_times: snapshot_times.to_vec(),
                    ..Default::default()
                },
            )
        }
        SolverKind::Grid2d => {
            let spec = ProtocolSpec {
                dims: 2,
                ..spec.clone()
            };
            grid::run_2d(&spec, policy, snapshot_times)
        }
    }
}

/// Protocol parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// `lm.t_start - mr.t_start` of the first stage.
    Delay,
    /// Ramp time of every schedule.
    TRamp,
    /// Closest distance of every schedule.
    DMin,
    /// Resting distance of every schedule.
    DMax,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Delay => "delay",
            SweepParam::TRamp => "t_ramp",
            SweepParam::DMin => "d_min",
            SweepParam::DMax => "d_max",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delay" => Ok(SweepParam::Delay),
            "t_ramp" => Ok(SweepParam::TRamp),
            "d_min" => Ok(SweepParam::DMin),
            "d_max" => Ok(SweepParam::DMax),
            _ => Err(Error::InvalidParameter(format!(
                "unknown sweep parameter `{s}` (expected delay, t_ramp, d_min or d_max)"
            ))),
        }
    }
}

/// `base` with `param` set to `value`. The last stage grows to fit longer
/// schedules; earlier stages keep their duration.
pub fn apply_parameter(base: &ProtocolSpec, param: SweepParam, value: f64) -> Result<ProtocolSpec> {
    let mut spec = base.clone();
    let invalid = |reason: String| Error::InvalidSweepValue {
        parameter: param.name().to_string(),
        value,
        reason,
    };
    if !value.is_finite() {
        return Err(invalid("value is not finite".into()));
    }
    match param {
        SweepParam::Delay => {
            let stage = spec
                .stages
                .first_mut()
                .ok_or_else(|| invalid("protocol has no stages".into()))?;
            let first = stage.lm.t_start.min(stage.mr.t_start);
            if value >= 0.0 {
                stage.mr.t_start = first;
                stage.lm.t_start = first + value;
            } else {
                stage.lm.t_start = first;
                stage.mr.t_start = first - value;
            }
        }
        SweepParam::TRamp | SweepParam::DMin | SweepParam::DMax => {
            for stage in &mut spec.stages {
                for s in [&mut stage.lm, &mut stage.mr] {
                    match param {
                        SweepParam::TRamp => s.t_ramp = value,
                        SweepParam::DMin => s.d_min = value,
                        _ => s.d_max = value,
                    }
                }
            }
        }
    }
    if let Some(last) = spec.stages.last_mut() {
        last.duration = last.duration.max(last.natural_end());
    }
    spec.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(spec)
}

/// Terminal observables of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub efficiency: f64,
    pub p_l: f64,
    pub p_m: f64,
    pub p_r: f64,
    pub p_dark: f64,
}

impl SweepRow {
    pub fn from_run(value: f64, run: &RunResult) -> Self {
        let last = run.final_sample();
        SweepRow {
            value,
            efficiency: analysis::transfer_efficiency(run),
            p_l: last.p_l,
            p_m: last.p_m,
            p_r: last.p_r,
            p_dark: last.p_dark,
        }
    }
}

/// What produced a sweep or a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub preset: Option<String>,
    pub solver: SolverKind,
    pub policy: NumericalPolicy,
    pub version: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub parameter: SweepParam,
    pub rows: Vec<SweepRow>,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                r.value, r.efficiency, r.p_l, r.p_m, r.p_r, r.p_dark
            );
        }
        out
    }

    /// Longest run of consecutive rows satisfying `pred`, as `(first, last)`
    /// values, among those containing `value`.
    pub fn window_containing<F>(&self, value: f64, pred: F) -> Option<(f64, f64)>
    where
        F: Fn(&SweepRow) -> bool,
    {
        let idx = self
            .rows
            .iter()
            .position(|r| (r.value - value).abs() < 1e-9)?;
        if !pred(&self.rows[idx]) {
            return None;
        }
        let mut lo = idx;
        while lo > 0 && pred(&self.rows[lo - 1]) {
            lo -= 1;
        }
        let mut hi = idx;
        while hi + 1 < self.rows.len() && pred(&self.rows[hi + 1]) {
            hi += 1;
        }
        Some((self.rows[lo].value, self.rows[hi].value))
    }
}

/// A sweep request as issued from the command line.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ProtocolSpec,
    pub preset: Option<String>,
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    pub solver: SolverKind,
    pub policy: NumericalPolicy,
    pub jobs: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParameter(
                "sweep needs at least one value".into(),
            ));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "sweep values must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn run(&self) -> Result<SweepResult> {
        self.validate()?;
        let mut result = sweep(
            &self.base,
            self.parameter,
            &self.values,
            self.solver,
            &self.policy,
            self.jobs,
        )?;
        result.provenance.preset = self.preset.clone();
        Ok(result)
    }
}

/// Runs one simulation per value, up to `jobs` at a time, and returns the
/// rows in input order.
pub fn sweep(
    base: &ProtocolSpec,
    parameter: SweepParam,
    values: &[f64],
    solver: SolverKind,
    policy: &NumericalPolicy,
    jobs: usize,
) -> Result<SweepResult> {
    // Reject bad values before spending time on the good ones.
    let specs = values
        .iter()
        .map(|&v| apply_parameter(base, parameter, v))
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    let rows = pool.install(|| {
        specs
            .par_iter()
            .zip(values.par_iter())
            .map(|(spec, &v)| {
                run_solver(spec, solver, policy).map(|run| SweepRow::from_run(v, &run))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(SweepResult {
        parameter,
        rows,
        provenance: Provenance {
            preset: None,
            solver,
            policy: *policy,
            version: VERSION,
        },
    })
}

/// Terminal observables as a function of the delay between the two
/// approaches.
pub fn delay_scan(
    base: &ProtocolSpec,
    delays: &[f64],
    solver: SolverKind,
    policy: &NumericalPolicy,
    jobs: usize,
) -> Result<SweepResult> {
    sweep(base, SweepParam::Delay, delays, solver, policy, jobs)
}

/// Terminal observables of one resolution level. A level whose run failed
/// carries the error and NaN observables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceLevel {
    pub spacing: f64,
    pub dt: f64,
    pub points: usize,
    pub p_l: f64,
    pub p_m: f64,
    pub p_r: f64,
    pub p_dark: f64,
    pub coherence: f64,
    pub max_norm_drift: f64,
    pub failure: Option<String>,
}

impl ConvergenceLevel {
    fn observables(&self) -> [f64; 5] {
        [self.p_l, self.p_m, self.p_r, self.p_dark, self.coherence]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub levels: Vec<ConvergenceLevel>,
    /// Largest change of any terminal observable between successive levels.
    pub deltas: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl ConvergenceReport {
    pub fn finest_delta(&self) -> f64 {
        *self
            .deltas
            .last()
            .expect("reports have at least two levels")
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                delta: self.finest_delta(),
                limit: self.tolerance,
            })
        }
    }
}

/// `policy` coarsened once and refined once, each by a factor of two in both
/// spacing and time step.
pub fn default_ladder(policy: &NumericalPolicy) -> Vec<NumericalPolicy> {
    let coarse = NumericalPolicy {
        spacing: 2.0 * policy.spacing,
        dt: 2.0 * policy.dt,
        sample_every: (policy.sample_every / 2).max(1),
        ..*policy
    };
    vec![coarse, *policy, policy.refined()]
}

/// Runs `spec` at every level of `ladder` and compares terminal observables.
pub fn convergence_report(
    spec: &ProtocolSpec,
    ladder: &[NumericalPolicy],
    solver: SolverKind,
) -> Result<ConvergenceReport> {
    if ladder.len() < 2 {
        return Err(Error::InvalidParameter(
            "a convergence study needs at least two resolution levels".into(),
        ));
    }
    let mut levels = Vec::with_capacity(ladder.len());
    for policy in ladder {
        let points = match solver {
            SolverKind::ThreeMode => 3,
            _ => policy.grid_for(spec)?.x.n,
        };
        let level = match run_solver(spec, solver, policy) {
            Ok(run) => {
                let last = run.final_sample();
                ConvergenceLevel {
                    spacing: policy.spacing,
                    dt: policy.dt,
                    points,
                    p_l: last.p_l,
                    p_m: last.p_m,
                    p_r: last.p_r,
                    p_dark: last.p_dark,
                    coherence: last.coherence,
                    max_norm_drift: run.max_norm_drift(),
                    failure: None,
                }
            }
            // Too coarse to keep the atom on the grid.
            Err(e @ Error::ContainmentViolation { .. }) => ConvergenceLevel {
                spacing: policy.spacing,
                dt: policy.dt,
                points,
                p_l: f64::NAN,
                p_m: f64::NAN,
                p_r: f64::NAN,
                p_dark: f64::NAN,
                coherence: f64::NAN,
                max_norm_drift: f64::NAN,
                failure: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        levels.push(level);
    }
    let deltas: Vec<f64> = levels
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].observables(), w[1].observables());
            a.iter()
                .zip(&b)
                .map(|(x, y)| (x - y).abs())
                .fold(
                    0.0,
                    |m, d| if d.is_nan() { f64::INFINITY } else { m.max(d) },
                )
        })
        .collect();
    let finest = *deltas.last().expect("at least two levels");
    Ok(ConvergenceReport {
        passed: finest < CONVERGENCE_TOLERANCE,
        levels,
        deltas,
        tolerance: CONVERGENCE_TOLERANCE,
    })
}

/// Sidecar record describing a run file.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub provenance: Provenance,
    pub protocol: ProtocolSpec,
    pub total_duration: f64,
    pub samples: usize,
    pub max_norm_drift: f64,
    pub final_sample: PopulationSample,
}

impl RunMetadata {
    pub fn new(provenance: Provenance, protocol: &ProtocolSpec, run: &RunResult) -> Self {
        RunMetadata {
            provenance,
            protocol: protocol.clone(),
            total_duration: protocol.total_duration(),
            samples: run.samples.len(),
            max_norm_drift: run.max_norm_drift(),
            final_sample: *run.final_sample(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SnapshotMetadata {
    time: f64,
    positions: [f64; 3],
    norm: f64,
    grid: grid::Grid,
}

/// `x,density` (1D) or `x,y,density` (2D) rows of a snapshot.
pub fn snapshot_csv(snap: &Snapshot) -> String {
    let g = &snap.grid;
    let mut out = String::new();
    match g.y {
        None => {
            out.push_str("x,density\n");
            for (ix, d) in snap.density.iter().enumerate() {
                let _ = writeln!(out, "{:.15e},{:.15e}", g.x.coord(ix), d);
            }
        }
        Some(y) => {
            out.push_str("x,y,density\n");
            for (i, d) in snap.density.iter().enumerate() {
                let (ix, iy) = (i % g.nx(), i / g.nx());
                let _ = writeln!(
                    out,
                    "{:.15e},{:.15e},{:.15e}",
                    g.x.coord(ix),
                    y.coord(iy),
                    d
                );
            }
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("metadata always serializes");
    s.push('\n');
    s
}

/// Writes `<stem>.csv`, `<stem>.meta.json` and one CSV plus sidecar per
/// snapshot. Returns the paths written.
pub fn write_run(
    dir: &Path,
    stem: &str,
    run: &RunResult,
    meta: &RunMetadata,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let csv = dir.join(format!("{stem}.csv"));
    write_file(&csv, &run.to_csv())?;
    written.push(csv);
    let side = dir.join(format!("{stem}.meta.json"));
    write_file(&side, &to_json(meta))?;
    written.push(side);
    for (k, snap) in run.snapshots.iter().enumerate() {
        let path = dir.join(format!("{stem}_snapshot{k}.csv"));
        write_file(&path, &snapshot_csv(snap))?;
        written.push(path);
        let path = dir.join(format!("{stem}_snapshot{k}.meta.json"));
        let m = SnapshotMetadata {
            time: snap.time,
            positions: snap.positions.as_array(),
            norm: snap.norm,
            grid: snap.grid,
        };
        write_file(&path, &to_json(&m))?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `<stem>.csv` and `<stem>.meta.json` for a sweep.
pub fn write_sweep(
    dir: &Path,
    stem: &str,
    result: &SweepResult,
    base: &ProtocolSpec,
) -> Result<Vec<PathBuf>> {
    #[derive(Serialize)]
    struct SweepMetadata<'a> {
        parameter: SweepParam,
        values: Vec<f64>,
        provenance: &'a Provenance,
        base_protocol: &'a ProtocolSpec,
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    write_file(&csv, &result.to_csv())?;
    let side = dir.join(format!("{stem}.meta.json"));
    let meta = SweepMetadata {
        parameter: result.parameter,
        values: result.rows.iter().map(|r| r.value).collect(),
        provenance: &result.provenance,
        base_protocol: base,
    };
    write_file(&side, &to_json(&meta))?;
    Ok(vec![csv, side])
}
