//! Acceptance suite: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;

use tlao::analysis::{self, RunResult};
use tlao::grid::{self, Grid, NumericalPolicy, Parity, Propagator};
use tlao::harness::{self, SolverKind, SweepParam};
use tlao::model::{Preset, TrapPositions, UnitSystem};
use tlao::three_mode;
use tlao::Result;

// Tolerances.
const RABI_REL: f64 = 0.10;
const STIRAP_MIN_P_R: f64 = 0.99;
const STIRAP_MAX_P_M: f64 = 0.05;
const PLATEAU_EFFICIENCY: f64 = 0.95;
const INTUITIVE_MAX: f64 = 0.9;
const CPT_POP_TOL: f64 = 0.05;
const CPT_COHERENCE_TOL: f64 = 0.05;
const DARK_MIN: f64 = 0.95;
const EIT_MIN_P_L: f64 = 0.95;
const EXCITED_MIN: f64 = 0.95;
const SPLIT_TOL: f64 = 0.07;
const SPLIT_MIN_SPAN: f64 = 50.0;
const DIMENSION_TOL: f64 = 0.02;
const NORM_DRIFT_MAX: f64 = 1e-8;
const ROBUST_TOL: f64 = 0.01;
const STIRAP_MS: f64 = 3.6;
const UNITS_TOL_MS: f64 = 1e-9;
const MODEL_TOL: f64 = 0.05;

type Outcome = Result<(bool, String)>;

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Double well with traps at `-d/2` and `d/2`; the third trap sits on top of
/// the second.
fn double_well(d: f64) -> TrapPositions {
    TrapPositions::new(-0.5 * d, 0.5 * d, 0.5 * d)
}

/// Lowest two eigenvalues of the fourth-order finite-difference Hamiltonian.
fn dense_splitting(d: f64) -> f64 {
    let (half, h) = (0.5 * d + 9.0, 0.04);
    let n = (2.0 * half / h) as usize;
    let pos = double_well(d);
    let c = 1.0 / (24.0 * h * h);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let x = -half + (i as f64 + 0.5) * h;
        m[(i, i)] = 30.0 * c + grid::potential(&pos, x);
        if i + 1 < n {
            m[(i, i + 1)] = -16.0 * c;
            m[(i + 1, i)] = -16.0 * c;
        }
        if i + 2 < n {
            m[(i, i + 2)] = c;
            m[(i + 2, i)] = c;
        }
    }
    let mut e: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e[1] - e[0]
}

fn relaxed_splitting(d: f64) -> Result<f64> {
    let g = Grid::new_1d(-16.0, 16.0, 1024)?;
    let pos = double_well(d);
    let left = grid::eigenstate(0, -0.5 * d, &g)?;
    let right = grid::eigenstate(0, 0.5 * d, &g)?;
    let mut even = left.clone();
    let mut odd = left.clone();
    for i in 0..g.len() {
        even.amps[i] = left.amps[i] + right.amps[i];
        odd.amps[i] = left.amps[i] - right.amps[i];
    }
    let e0 = grid::relax_with_parity(&pos, &even, 200_000, 0.01, Parity::Even)?.energy;
    let e1 = grid::relax_with_parity(&pos, &odd, 200_000, 0.01, Parity::Odd)?.energy;
    Ok(e1 - e0)
}

/// Time of the first return of the atom from the left well, found as the
/// minimum of `p_L` before the second one.
fn half_period(d: f64, omega: f64) -> Result<f64> {
    let g = Grid::new_1d(-16.0, 16.0, 512)?;
    let pos = double_well(d);
    let dt = 0.01;
    let every = 10;
    let mut psi = grid::eigenstate(0, -0.5 * d, &g)?;
    let mut prop = Propagator::new(&g, dt, 1.0)?;
    let horizon = 1.8 * PI / omega;
    let (mut best_t, mut best_p) = (0.0, f64::INFINITY);
    let mut k = 0usize;
    while (k as f64) * dt < horizon {
        prop.step(&mut psi, &pos);
        k += 1;
        if k % every == 0 {
            let p_l = analysis::populations(&psi, &pos, 0)[0];
            if p_l < best_p {
                best_p = p_l;
                best_t = k as f64 * dt;
            }
        }
    }
    Ok(best_t)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_1() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [3.0, 4.0, 5.0] {
        let omega = three_mode::rabi(d)?;
        let relaxed = relaxed_splitting(d)?;
        let dense = dense_splitting(d);
        let t_half = half_period(d, omega)?;
        let t_expected = PI / omega;
        let errs = [
            rel(omega, relaxed),
            rel(omega, dense),
            rel(t_half, t_expected),
        ];
        ok &= errs.iter().all(|&e| e <= RABI_REL);
        parts.push(format!(
            "d={d}: rabi {omega:.4e}, relaxed {relaxed:.4e}, dense {dense:.4e}, half-period {t_half:.1} vs {t_expected:.1}"
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_2() -> Outcome {
    let policy = NumericalPolicy::default();
    let run = grid::run(&Preset::Stirap.spec(), &policy)?;
    let p_r = analysis::transfer_efficiency(&run);
    let p_m = run.max_of(|s| s.p_m);
    let delays: Vec<f64> = (-8..=10).map(|k| 15.0 * k as f64).collect();
    let scan = harness::delay_scan(
        &Preset::Stirap.spec(),
        &delays,
        SolverKind::Grid1d,
        &policy,
        jobs(),
    )?;
    let window = scan.window_containing(60.0, |r| r.efficiency >= PLATEAU_EFFICIENCY);
    let intuitive = scan
        .rows
        .iter()
        .find(|r| r.value == -60.0)
        .map(|r| r.efficiency)
        .unwrap_or(f64::NAN);
    let ok = p_r >= STIRAP_MIN_P_R
        && p_m <= STIRAP_MAX_P_M
        && window.is_some_and(|(lo, hi)| lo < hi)
        && intuitive < INTUITIVE_MAX;
    Ok((
        ok,
        format!("final p_R {p_r:.4}, max p_M {p_m:.4}, plateau {window:?}, delay -60 efficiency {intuitive:.3}"),
    ))
}

fn criterion_3() -> Outcome {
    let policy = NumericalPolicy::default();
    let split = grid::run(&Preset::CptSplit.spec(), &policy)?;
    let last = split.final_sample();
    let dark = grid::run(&Preset::CptDarkTest.spec(), &policy)?;
    let min_dark = dark.min_over(600.0, 1000.0, |s| s.p_dark);
    let ok = (last.p_l - 0.5).abs() <= CPT_POP_TOL
        && (last.p_r - 0.5).abs() <= CPT_POP_TOL
        && (last.coherence - 0.5).abs() <= CPT_COHERENCE_TOL
        && min_dark >= DARK_MIN;
    Ok((
        ok,
        format!(
            "p_L {:.4}, p_R {:.4}, coherence {:.4}, min p_dark on [600, 1000] {min_dark:.4}",
            last.p_l, last.p_r, last.coherence
        ),
    ))
}

fn criterion_4() -> Outcome {
    let policy = NumericalPolicy::default();
    let run = grid::run(&Preset::Eit.spec(), &policy)?;
    let p_l = run.final_sample().p_l;
    let delays: Vec<f64> = (-4..=10).map(|k| 15.0 * k as f64).collect();
    let scan = harness::delay_scan(
        &Preset::Eit.spec(),
        &delays,
        SolverKind::Grid1d,
        &policy,
        jobs(),
    )?;
    let window = scan.window_containing(60.0, |r| r.p_l >= EIT_MIN_P_L);
    let ok = p_l >= EIT_MIN_P_L && window.is_some_and(|(lo, hi)| lo < hi);
    Ok((
        ok,
        format!("final p_L {p_l:.4}, inhibition plateau {window:?}"),
    ))
}

/// Longest stretch of consecutive samples satisfying `pred`, as `(start, end)`.
fn longest_stretch<F>(run: &RunResult, pred: F) -> Option<(f64, f64)>
where
    F: Fn(&analysis::PopulationSample) -> bool,
{
    let mut best: Option<(f64, f64)> = None;
    let mut start = None;
    for s in &run.samples {
        if pred(s) {
            let t0 = *start.get_or_insert(s.time);
            if best.is_none_or(|(a, b)| s.time - t0 > b - a) {
                best = Some((t0, s.time));
            }
        } else {
            start = None;
        }
    }
    best
}

fn criterion_5() -> Outcome {
    let policy = NumericalPolicy::default();
    let excited = Preset::StirapExcited.spec();
    let eff1 = analysis::transfer_efficiency(&grid::run(&excited, &policy)?);
    let ground = tlao::model::ProtocolSpec {
        level: 0,
        ..excited
    };
    let eff0 = analysis::transfer_efficiency(&grid::run(&ground, &policy)?);
    let split_spec = Preset::SplitExcited.spec();
    let split = grid::run(&split_spec, &policy)?;
    let plateau = longest_stretch(&split, |s| {
        (s.p_l - 0.5).abs() <= SPLIT_TOL && (s.p_m - 0.5).abs() <= SPLIT_TOL
    });
    let separated = split_spec.stages[0].lm.end_time();
    let ok = eff1 >= EXCITED_MIN
        && eff0 >= EXCITED_MIN
        && plateau.is_some_and(|(a, b)| b - a >= SPLIT_MIN_SPAN && a < separated);
    Ok((
        ok,
        format!(
            "excited efficiency {eff1:.4}, ground efficiency at same parameters {eff0:.4}, split plateau {plateau:?} (L-M separation ends at {separated})"
        ),
    ))
}

fn criterion_6() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [Preset::Stirap, Preset::CptSplit, Preset::Eit] {
        let spec = p.spec();
        let one = grid::run(&spec, &NumericalPolicy::default())?;
        let two = harness::run_solver(&spec, SolverKind::Grid2d, &NumericalPolicy::default_2d())?;
        let cmp = analysis::ModelComparison::from_runs(&one, &two)?;
        let worst = cmp.max_abs.iter().copied().fold(0.0, f64::max);
        ok &= worst <= DIMENSION_TOL;
        parts.push(format!(
            "{p}: max |dp| {worst:.2e} over {} samples",
            cmp.times.len()
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_7() -> Outcome {
    let mut ok = true;
    let mut worst_drift = 0.0f64;
    let mut worst_delta = 0.0f64;
    let policy = NumericalPolicy {
        sample_every: 1000,
        ..Default::default()
    };
    for p in Preset::ALL {
        let report = harness::convergence_report(
            &p.spec(),
            &harness::default_ladder(&policy),
            SolverKind::Grid1d,
        )?;
        ok &= report.passed;
        worst_delta = worst_delta.max(report.finest_delta());
        for l in &report.levels {
            worst_drift = worst_drift.max(l.max_norm_drift);
        }
    }
    ok &= worst_drift < NORM_DRIFT_MAX;

    let spec = Preset::Stirap.spec();
    let a = grid::run(&spec, &NumericalPolicy::default())?.to_csv();
    let b = grid::run(&spec, &NumericalPolicy::default())?.to_csv();
    let coarse = NumericalPolicy {
        spacing: 0.1,
        dt: 0.01,
        sample_every: 100,
        ..Default::default()
    };
    let values = [30.0, 60.0, 90.0];
    let s1 = harness::delay_scan(&spec, &values, SolverKind::Grid1d, &coarse, 1)?.to_csv();
    let s2 = harness::delay_scan(&spec, &values, SolverKind::Grid1d, &coarse, 3)?.to_csv();
    let deterministic = a == b && s1 == s2;
    ok &= deterministic;
    Ok((
        ok,
        format!(
            "worst norm drift {worst_drift:.2e}, worst finest-level delta {worst_delta:.2e}, repeat runs identical: {deterministic}"
        ),
    ))
}

fn criterion_8() -> Outcome {
    let policy = NumericalPolicy::default();
    let base = Preset::Stirap.spec();
    let reference = analysis::transfer_efficiency(&grid::run(&base, &policy)?);
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    let t_ramp = base.stages[0].lm.t_ramp;
    let d_min = base.stages[0].lm.d_min;
    let cases = [
        (SweepParam::TRamp, 0.8 * t_ramp),
        (SweepParam::TRamp, 1.2 * t_ramp),
        (SweepParam::DMin, d_min - 0.5),
        (SweepParam::DMin, d_min + 0.5),
    ];
    for (param, value) in cases {
        let spec = harness::apply_parameter(&base, param, value)?;
        let eff = analysis::transfer_efficiency(&grid::run(&spec, &policy)?);
        worst = worst.max((eff - reference).abs());
        parts.push(format!("{param}={value}: {eff:.4}"));
    }
    Ok((
        worst < ROBUST_TOL,
        format!(
            "reference {reference:.4}, {}, worst change {worst:.4}",
            parts.join(", ")
        ),
    ))
}

fn criterion_9() -> Outcome {
    let units = UnitSystem::rubidium87(1e5)?;
    let ms = 1e3 * units.to_physical_time(Preset::Stirap.spec().total_duration());
    Ok((
        (ms - STIRAP_MS).abs() < UNITS_TOL_MS,
        format!("stirap lasts {ms} ms"),
    ))
}

fn criterion_10() -> Outcome {
    let cmp = analysis::compare_models(&Preset::Stirap.spec(), &NumericalPolicy::default())?;
    let worst = cmp.final_abs.iter().copied().fold(0.0, f64::max);
    Ok((
        worst <= MODEL_TOL,
        format!(
            "final |dp| L {:.4}, M {:.4}, R {:.4}",
            cmp.final_abs[0], cmp.final_abs[1], cmp.final_abs[2]
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("tunnelling rate oracle", criterion_1),
        ("stirap transfer", criterion_2),
        ("coherent splitting and dark state", criterion_3),
        ("tunnelling inhibition", criterion_4),
        ("excited-state protocols", criterion_5),
        ("2D consistency", criterion_6),
        ("numerical hygiene", criterion_7),
        ("robustness", criterion_8),
        ("physical units", criterion_9),
        ("reduced model vs grid", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {:<36} {} ({detail}) [{:.1}s]",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
