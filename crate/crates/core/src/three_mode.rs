//! Reduced three-level model of the three traps.
//!
//! Each trap contributes one localized vibrational state; tunnelling between
//! neighbouring traps is described by the two-trap tunnelling frequency and
//! the three amplitudes `(c_L, c_M, c_R)` evolve under
//! `H = -1/2 [Omega_LM (|L><M| + h.c.) + Omega_MR (|M><R| + h.c.)]`.

use std::f64::consts::PI;

use libm::erfc;
use num_complex::Complex64;

use crate::analysis::{PopulationSample, RunResult};
use crate::error::{Error, Result};
use crate::model::{ProtocolSpec, Trap};
use crate::timeline::Timeline;

const SERIES_LIMIT: f64 = 1e-3;
const DIRECT_LIMIT: f64 = 1.0;

/// Tunnelling frequency of the closed-form double-oscillator result as a
/// function of the well-to-barrier distance `x` (half the trap separation),
/// in units of `omega_x`.
///
/// Uses a Taylor series near zero and an overflow-free rearrangement for
/// `x > 1`, so it is finite for every non-negative input.
pub fn rabi_closed_form(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::NegativeSeparation(x));
    }
    let sqrt_pi = PI.sqrt();
    if x < SERIES_LIMIT {
        let a0 = 1.0 / sqrt_pi;
        let a1 = 1.0 / sqrt_pi - 2.0 / PI;
        let a3 = 2.0 / (3.0 * PI) - 0.5 / sqrt_pi;
        let a4 = -1.0 / (6.0 * sqrt_pi);
        return Ok(a0 + x * (a1 + x * x * (a3 + x * a4)));
    }
    let x2 = x * x;
    let value = if x <= DIRECT_LIMIT {
        let num = -1.0 + x2.exp() * (1.0 + x * erfc(x));
        let den = sqrt_pi * (2.0 * x2).exp_m1() / (2.0 * x);
        num / den
    } else {
        // Numerator and denominator divided by exp(2 x^2).
        let num = (-x2).exp() * (1.0 + x * erfc(x)) - (-2.0 * x2).exp();
        let den = sqrt_pi * -(-2.0 * x2).exp_m1() / (2.0 * x);
        num / den
    };
    Ok(value.max(0.0))
}

/// Tunnelling "Rabi" frequency between the ground states of two traps whose
/// centres are `separation` apart (units `1/alpha`); result in units of
/// `omega_x`.
///
/// The closed form is written in the well-to-barrier distance, which for two
/// identical traps is half the centre-to-centre separation.
pub fn rabi(separation: f64) -> Result<f64> {
    if !(separation >= 0.0) {
        return Err(Error::NegativeSeparation(separation));
    }
    rabi_closed_form(0.5 * separation)
}

/// Tunnelling frequencies of the two neighbouring pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingPair {
    pub omega_lm: f64,
    pub omega_mr: f64,
}

impl CouplingPair {
    pub fn new(omega_lm: f64, omega_mr: f64) -> Self {
        CouplingPair { omega_lm, omega_mr }
    }

    /// Rms coupling `sqrt(omega_lm^2 + omega_mr^2)`.
    pub fn magnitude(&self) -> f64 {
        self.omega_lm.hypot(self.omega_mr)
    }
}

pub fn couplings(spec: &ProtocolSpec, t: f64) -> CouplingPair {
    let (stage, local) = spec.stage_at(t);
    // Distances from validated schedules are positive.
    let omega = |d: f64| rabi(d).expect("schedule distances are positive");
    CouplingPair::new(
        omega(stage.lm.distance(local)),
        omega(stage.mr.distance(local)),
    )
}

/// Real symmetric three-level Hamiltonian in units of `hbar omega_x`.
pub fn hamiltonian(c: CouplingPair) -> [[f64; 3]; 3] {
    let a = -0.5 * c.omega_lm;
    let b = -0.5 * c.omega_mr;
    [[0.0, a, 0.0], [a, 0.0, b], [0.0, b, 0.0]]
}

/// Mixing angle `Theta` with `tan Theta = omega_lm / omega_mr`.
pub fn mixing_angle(c: CouplingPair) -> Result<f64> {
    if c.omega_lm == 0.0 && c.omega_mr == 0.0 {
        return Err(Error::UndefinedMixingAngle);
    }
    Ok(c.omega_lm.atan2(c.omega_mr))
}

/// Amplitudes on the three trap states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeModeState {
    pub amps: [Complex64; 3],
}

impl ThreeModeState {
    pub fn new(c_l: Complex64, c_m: Complex64, c_r: Complex64) -> Self {
        ThreeModeState {
            amps: [c_l, c_m, c_r],
        }
    }

    pub fn localized(trap: Trap) -> Self {
        let mut amps = [Complex64::new(0.0, 0.0); 3];
        amps[trap.index()] = Complex64::new(1.0, 0.0);
        ThreeModeState { amps }
    }

    pub fn c_l(&self) -> Complex64 {
        self.amps[0]
    }

    pub fn c_m(&self) -> Complex64 {
        self.amps[1]
    }

    pub fn c_r(&self) -> Complex64 {
        self.amps[2]
    }

    pub fn populations(&self) -> [f64; 3] {
        self.amps.map(|c| c.norm_sqr())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.populations().iter().sum()
    }

    /// `|c_L c_R^*|`.
    pub fn coherence(&self) -> f64 {
        (self.c_l() * self.c_r().conj()).norm()
    }

    /// `|<D(theta)|c>|^2`.
    pub fn dark_population(&self, theta: f64) -> f64 {
        (theta.cos() * self.c_l() - theta.sin() * self.c_r()).norm_sqr()
    }

    pub fn sample(&self, time: f64, dark_theta: f64) -> PopulationSample {
        let [p_l, p_m, p_r] = self.populations();
        PopulationSample {
            time,
            p_l,
            p_m,
            p_r,
            p_dark: self.dark_population(dark_theta),
            coherence: self.coherence(),
            norm: self.norm_sqr(),
        }
    }
}

/// The coupling-free eigenstate `cos Theta |L> - sin Theta |R>`.
pub fn dark_state(theta: f64) -> ThreeModeState {
    ThreeModeState::new(
        Complex64::new(theta.cos(), 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(-theta.sin(), 0.0),
    )
}

/// `-i H c`.
fn derivative(h: &[[f64; 3]; 3], c: &[Complex64; 3]) -> [Complex64; 3] {
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for (i, row) in h.iter().enumerate() {
        let hc: Complex64 = row.iter().zip(c).map(|(&hij, &cj)| cj * hij).sum();
        out[i] = Complex64::new(hc.im, -hc.re);
    }
    out
}

fn axpy(c: &[Complex64; 3], k: &[Complex64; 3], s: f64) -> [Complex64; 3] {
    [c[0] + k[0] * s, c[1] + k[1] * s, c[2] + k[2] * s]
}

/// One classical RK4 step of `i dc/dt = H(t) c` from `t` to `t + dt`.
pub fn rk4_step<F>(c: &ThreeModeState, t: f64, dt: f64, h_at: F) -> ThreeModeState
where
    F: Fn(f64) -> [[f64; 3]; 3],
{
    let y = &c.amps;
    let h0 = h_at(t);
    let hm = h_at(t + 0.5 * dt);
    let h1 = h_at(t + dt);
    let k1 = derivative(&h0, y);
    let k2 = derivative(&hm, &axpy(y, &k1, 0.5 * dt));
    let k3 = derivative(&hm, &axpy(y, &k2, 0.5 * dt));
    let k4 = derivative(&h1, &axpy(y, &k3, dt));
    let mut amps = *y;
    for i in 0..3 {
        amps[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
    }
    ThreeModeState { amps }
}

/// Evolves the three amplitudes through every stage of `spec`, starting in
/// the basis state of `spec.initial_trap`.
pub fn evolve_three_mode(spec: &ProtocolSpec, dt: f64, sample_every: usize) -> Result<RunResult> {
    evolve_from(
        spec,
        ThreeModeState::localized(spec.initial_trap),
        dt,
        sample_every,
    )
}

/// As [`evolve_three_mode`] from an arbitrary initial state.
pub fn evolve_from(
    spec: &ProtocolSpec,
    initial: ThreeModeState,
    dt: f64,
    sample_every: usize,
) -> Result<RunResult> {
    spec.validate()?;
    let timeline = Timeline::new(spec, dt, sample_every)?;
    let mut state = initial;
    let mut samples = vec![state.sample(0.0, spec.dark_theta)];
    for step in timeline.steps() {
        let stage = &spec.stages[step.stage];
        let h_at = |local: f64| {
            let c = CouplingPair::new(
                rabi(stage.lm.distance(local)).expect("positive distance"),
                rabi(stage.mr.distance(local)).expect("positive distance"),
            );
            hamiltonian(c)
        };
        state = rk4_step(&state, step.local_start, step.dt, h_at);
        if step.record {
            samples.push(state.sample(step.time_end, spec.dark_theta));
        }
    }
    Ok(RunResult::new(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    use crate::model::{PairSchedule, Preset, Stage};

    #[test]
    fn closed_form_matches_high_precision_values() {
        // 40-digit evaluations of the closed form.
        let table = [
            (1e-3, 0.564_117_153_288_954_271_75),
            (0.75, 0.461_851_378_008_047_293_33),
            (1.5, 0.170_557_446_171_894_562_55),
            (2.0, 0.040_977_357_720_335_368_025),
            (2.5, 0.005_440_758_514_459_031_865_1),
            (6.0, 1.570_380_743_549_558_736e-15),
            (12.0, 3.919_502_188_678_564_816_7e-62),
        ];
        for (x, want) in table {
            assert_relative_eq!(rabi_closed_form(x).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_separation_limit() {
        let limit = 1.0 / PI.sqrt();
        assert_relative_eq!(rabi(0.0).unwrap(), limit, epsilon = 1e-15);
        assert_relative_eq!(rabi_closed_form(1e-4).unwrap(), limit, epsilon = 1e-4);
    }

    #[test]
    fn seams_are_continuous() {
        for seam in [SERIES_LIMIT, DIRECT_LIMIT] {
            let below = rabi_closed_form(seam * (1.0 - 1e-12)).unwrap();
            let above = rabi_closed_form(seam * (1.0 + 1e-12)).unwrap();
            assert!(
                (below - above).abs() < 1e-12,
                "seam {seam}: {below} vs {above}"
            );
        }
    }

    #[test]
    fn large_arguments_vanish_without_overflow() {
        assert!(rabi_closed_form(12.0).unwrap() < 1e-30);
        assert!(rabi(24.0).unwrap() < 1e-30);
        assert_eq!(rabi_closed_form(1e3).unwrap(), 0.0);
        assert!(rabi(f64::MAX).unwrap().is_finite());
    }

    #[test]
    fn negative_separation_is_rejected() {
        assert!(matches!(rabi(-0.1), Err(Error::NegativeSeparation(_))));
        assert!(rabi(f64::NAN).is_err());
    }

    #[test]
    fn positive_and_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..=800 {
            let d = i as f64 * 0.01;
            let w = rabi(d).unwrap();
            assert!(w > 0.0, "rabi({d}) = {w}");
            if d >= 0.5 {
                assert!(w < prev, "not decreasing at {d}");
            }
            prev = w;
        }
    }

    #[test]
    fn mixing_angles() {
        assert_eq!(mixing_angle(CouplingPair::new(0.0, 0.3)).unwrap(), 0.0);
        assert_relative_eq!(
            mixing_angle(CouplingPair::new(0.3, 0.3)).unwrap(),
            FRAC_PI_4
        );
        assert_relative_eq!(
            mixing_angle(CouplingPair::new(0.3, 0.0)).unwrap(),
            FRAC_PI_2
        );
        assert!(matches!(
            mixing_angle(CouplingPair::new(0.0, 0.0)),
            Err(Error::UndefinedMixingAngle)
        ));
    }

    #[test]
    fn dark_states() {
        let d0 = dark_state(0.0);
        assert_eq!(d0.populations(), [1.0, 0.0, 0.0]);
        let d90 = dark_state(FRAC_PI_2);
        assert_relative_eq!(d90.c_r().re, -1.0);
        assert!(d90.c_l().norm() < 1e-15);
        let d45 = dark_state(FRAC_PI_4);
        assert_relative_eq!(d45.coherence(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(d45.norm_sqr(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn dark_state_is_null_vector() {
        for (a, b) in [(0.1, 0.4), (0.5, 0.5), (0.3, 1e-6), (0.0, 0.2)] {
            let c = CouplingPair::new(a, b);
            let h = hamiltonian(c);
            let d = dark_state(mixing_angle(c).unwrap());
            for row in h {
                let hd: Complex64 = row.iter().zip(&d.amps).map(|(&x, &y)| y * x).sum();
                assert!(hd.norm() < 1e-15);
            }
        }
        let zero = hamiltonian(CouplingPair::new(0.0, 0.0));
        assert!(zero.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn eigenvalues_closed_form() {
        let c = CouplingPair::new(0.37, 0.21);
        let m = nalgebra::Matrix3::from_fn(|i, j| hamiltonian(c)[i][j]);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let half = 0.5 * c.magnitude();
        assert_relative_eq!(ev[0], -half, epsilon = 1e-14);
        assert_relative_eq!(ev[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(ev[2], half, epsilon = 1e-14);
    }

    #[test]
    fn two_level_rabi_oscillation() {
        let omega = rabi(3.0).unwrap();
        let h = hamiltonian(CouplingPair::new(omega, 0.0));
        let dt = 0.01;
        let mut state = ThreeModeState::localized(Trap::Left);
        for i in 1..=20_000 {
            state = rk4_step(&state, 0.0, dt, |_| h);
            if i % 500 == 0 {
                let t = i as f64 * dt;
                let expected = (0.5 * omega * t).sin().powi(2);
                assert!((state.populations()[1] - expected).abs() < 1e-9, "t = {t}");
            }
        }
    }

    #[test]
    fn decoupled_state_is_constant() {
        let far = PairSchedule::new(12.0, 11.0, 10.0, 0.0, 0.0).unwrap();
        let spec = ProtocolSpec::single(Stage::new(far, far));
        let run = evolve_three_mode(&spec, 0.01, 100).unwrap();
        let last = run.samples.last().unwrap();
        assert!((last.p_l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dark_state_stationary_under_fixed_ratio() {
        let theta: f64 = 0.6;
        for magnitude in [0.01, 0.2, 0.5] {
            let c = CouplingPair::new(magnitude * theta.sin(), magnitude * theta.cos());
            let h = hamiltonian(c);
            let mut state = dark_state(theta);
            for i in 0..5000 {
                state = rk4_step(&state, i as f64 * 0.01, 0.01, |_| h);
            }
            let p = state.populations();
            assert!((p[0] - theta.cos().powi(2)).abs() < 1e-6);
            assert!((p[2] - theta.sin().powi(2)).abs() < 1e-6);
        }
    }

    #[test]
    fn stirap_transfers_to_right() {
        let run = evolve_three_mode(&Preset::Stirap.spec(), 0.01, 100).unwrap();
        let last = run.samples.last().unwrap();
        assert!(last.p_r >= 0.99, "p_R = {}", last.p_r);
        assert_relative_eq!(last.time, 360.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_step() {
        assert!(evolve_three_mode(&Preset::Stirap.spec(), 0.0, 1).is_err());
        assert!(evolve_three_mode(&Preset::Stirap.spec(), -0.1, 1).is_err());
    }
}
