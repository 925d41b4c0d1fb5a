//! Full quantum dynamics on a uniform periodic grid.
//!
//! The atom moves in the piecewise-harmonic potential
//! `V(x) = 1/2 min_i (x - x_i)^2` (plus `1/2 (omega_y/omega_x)^2 y^2` in 2D)
//! and is propagated with the symmetric split-step Fourier scheme. The same
//! spectral machinery in imaginary time relaxes static ground states.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, RunResult};
use crate::error::{Error, Result};
use crate::model::{ProtocolSpec, TrapPositions};
use crate::timeline::Timeline;

/// Smallest number of points allowed along the trap axis.
pub const MIN_POINTS: usize = 256;

/// Distance from an eigenstate centre, or an extreme trap, to the grid edge.
pub const EDGE_MARGIN: f64 = 6.0;

/// Fraction of the grid at each end that counts as "boundary".
pub const EDGE_FRACTION: f64 = 0.05;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// One periodic axis `[min, max)` sampled at `n` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min < max && min.is_finite() && max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "axis bounds must satisfy min < max, got [{min}, {max}]"
            )));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "axis point count must be a power of two, got {n}"
            )));
        }
        Ok(Axis { min, max, n })
    }

    /// `[-half, half)` with the smallest power-of-two point count (at least
    /// `min_points`) whose spacing does not exceed `spacing`.
    pub fn symmetric(half: f64, spacing: f64, min_points: usize) -> Result<Self> {
        if !(spacing > 0.0 && half > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need positive spacing and half-span, got {spacing} and {half}"
            )));
        }
        let needed = (2.0 * half / spacing - 1e-9).ceil() as usize;
        let n = needed.max(min_points).next_power_of_two();
        Axis::new(-half, half, n)
    }

    pub fn length(&self) -> f64 {
        self.max - self.min
    }

    pub fn spacing(&self) -> f64 {
        self.length() / self.n as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let dk = 2.0 * PI / self.length();
        (0..self.n)
            .map(|j| {
                if j < self.n / 2 {
                    j as f64 * dk
                } else {
                    (j as f64 - self.n as f64) * dk
                }
            })
            .collect()
    }

    fn is_symmetric(&self) -> bool {
        (self.min + self.max).abs() < 1e-12 * self.length()
    }
}

/// Uniform grid along the trap axis, optionally with a transverse axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x: Axis,
    pub y: Option<Axis>,
}

impl Grid {
    pub fn new_1d(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        let x = Axis::new(x_min, x_max, n_points)?;
        Self::check_points(&x)?;
        Ok(Grid { x, y: None })
    }

    pub fn new_2d(x: Axis, y: Axis) -> Result<Self> {
        Self::check_points(&x)?;
        if y.n < 16 {
            return Err(Error::InvalidParameter(format!(
                "transverse axis needs at least 16 points, got {}",
                y.n
            )));
        }
        Ok(Grid { x, y: Some(y) })
    }

    fn check_points(x: &Axis) -> Result<()> {
        if x.n < MIN_POINTS {
            return Err(Error::InvalidParameter(format!(
                "trap axis needs at least {MIN_POINTS} points, got {}",
                x.n
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> u8 {
        if self.y.is_some() {
            2
        } else {
            1
        }
    }

    pub fn nx(&self) -> usize {
        self.x.n
    }

    pub fn ny(&self) -> usize {
        self.y.map_or(1, |y| y.n)
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Area (or length) element of one grid cell.
    pub fn cell(&self) -> f64 {
        self.x.spacing() * self.y.map_or(1.0, |y| y.spacing())
    }

    /// Transverse coordinate of row `iy` (zero in 1D).
    pub fn y_coord(&self, iy: usize) -> f64 {
        self.y.map_or(0.0, |y| y.coord(iy))
    }
}

/// Trap-axis potential `1/2 min_i (x - x_i)^2`.
pub fn potential(positions: &TrapPositions, x: f64) -> f64 {
    positions
        .as_array()
        .iter()
        .map(|&c| (x - c) * (x - c))
        .fold(f64::INFINITY, f64::min)
        * 0.5
}

pub fn potential_2d(positions: &TrapPositions, omega_y_ratio: f64, x: f64, y: f64) -> f64 {
    potential(positions, x) + 0.5 * omega_y_ratio * omega_y_ratio * y * y
}

/// Normalized harmonic-oscillator eigenfunction `phi_n(x)` of unit width.
pub fn oscillator(n: u32, x: f64) -> f64 {
    let g = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if n == 0 {
        return g;
    }
    let (mut prev, mut cur) = (g, 2f64.sqrt() * x * g);
    for k in 1..n {
        let k = k as f64;
        let next = (2.0 / (k + 1.0)).sqrt() * x * cur - (k / (k + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Overlap `<phi_n(x)|phi_n(x - s)>` of two displaced oscillator states.
pub fn oscillator_overlap(n: u32, s: f64) -> f64 {
    // exp(-u/2) L_n(u) with u = s^2 / 2.
    let u = 0.5 * s * s;
    let (mut prev, mut cur) = (1.0, 1.0 - u);
    if n == 0 {
        return (-0.5 * u).exp();
    }
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 - u) * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    (-0.5 * u).exp() * cur
}

/// Complex amplitudes on a grid, row-major with `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub grid: Grid,
    pub amps: Vec<Complex64>,
    pub time: f64,
}

impl WaveFunction {
    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(f64, f64) -> Complex64,
    {
        let xs = grid.x.coords();
        let mut amps = Vec::with_capacity(grid.len());
        for iy in 0..grid.ny() {
            let y = grid.y_coord(iy);
            amps.extend(xs.iter().map(|&x| f(x, y)));
        }
        WaveFunction {
            grid,
            amps,
            time: 0.0,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.cell()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.norm_sqr();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidParameter(
                "cannot normalize a vanishing wavefunction".into(),
            ));
        }
        let scale = norm.sqrt().recip();
        self.amps.iter_mut().for_each(|a| *a *= scale);
        Ok(())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &WaveFunction) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * self.grid.cell()
    }

    pub fn density(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Marginal density along `x`.
    pub fn x_marginal(&self) -> Vec<f64> {
        let nx = self.grid.nx();
        let dy = self.grid.y.map_or(1.0, |y| y.spacing());
        let mut out = vec![0.0; nx];
        for row in self.amps.chunks(nx) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.norm_sqr() * dy;
            }
        }
        out
    }

    /// Marginal density along `y` (a single entry in 1D).
    pub fn y_marginal(&self) -> Vec<f64> {
        let dx = self.grid.x.spacing();
        self.amps
            .chunks(self.grid.nx())
            .map(|row| row.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx)
            .collect()
    }

    /// `(<x>, rms width)` along the trap axis.
    pub fn x_moments(&self) -> (f64, f64) {
        moments(&self.grid.x, &self.x_marginal())
    }

    /// `(<y>, rms width)` along the transverse axis.
    pub fn y_moments(&self) -> Option<(f64, f64)> {
        self.grid.y.map(|y| moments(&y, &self.y_marginal()))
    }

    /// Probability within the outer `fraction` of the grid at either end of
    /// any axis.
    pub fn edge_probability(&self, fraction: f64) -> f64 {
        let edge = |axis: &Axis, i: usize| {
            let k = ((axis.n as f64) * fraction).ceil() as usize;
            i < k || i >= axis.n - k
        };
        let nx = self.grid.nx();
        let mut p = 0.0;
        for (iy, row) in self.amps.chunks(nx).enumerate() {
            let y_edge = self.grid.y.is_some_and(|y| edge(&y, iy));
            for (ix, a) in row.iter().enumerate() {
                if y_edge || edge(&self.grid.x, ix) {
                    p += a.norm_sqr();
                }
            }
        }
        p * self.grid.cell()
    }

    /// `integral profile(x) psi(x, y) dx` for every row `y`.
    pub fn x_overlaps<F>(&self, profile: F) -> Vec<Complex64>
    where
        F: Fn(f64) -> f64,
    {
        let dx = self.grid.x.spacing();
        let weights: Vec<f64> = self.grid.x.coords().into_iter().map(profile).collect();
        self.amps
            .chunks(self.grid.nx())
            .map(|row| {
                row.iter()
                    .zip(&weights)
                    .map(|(a, &w)| a * w)
                    .sum::<Complex64>()
                    * dx
            })
            .collect()
    }
}

fn moments(axis: &Axis, marginal: &[f64]) -> (f64, f64) {
    let h = axis.spacing();
    let total: f64 = marginal.iter().sum::<f64>() * h;
    let mean = marginal
        .iter()
        .enumerate()
        .map(|(i, p)| axis.coord(i) * p)
        .sum::<f64>()
        * h
        / total;
    let var = marginal
        .iter()
        .enumerate()
        .map(|(i, p)| (axis.coord(i) - mean).powi(2) * p)
        .sum::<f64>()
        * h
        / total;
    (mean, var.sqrt())
}

/// Oscillator eigenstate `phi_n(x - center)` normalized on the grid; on a 2D
/// grid the transverse factor is the ground state of an isotropic trap.
pub fn eigenstate(n: u32, center: f64, grid: &Grid) -> Result<WaveFunction> {
    eigenstate_2d(n, center, grid, 1.0)
}

/// As [`eigenstate`] with a transverse trap frequency `omega_y_ratio omega_x`.
pub fn eigenstate_2d(n: u32, center: f64, grid: &Grid, omega_y_ratio: f64) -> Result<WaveFunction> {
    if center - EDGE_MARGIN < grid.x.min || center + EDGE_MARGIN > grid.x.max {
        return Err(Error::CenterTooCloseToBoundary {
            center,
            margin: EDGE_MARGIN,
            x_min: grid.x.min,
            x_max: grid.x.max,
        });
    }
    let sr = omega_y_ratio.sqrt();
    let mut psi = WaveFunction::from_fn(*grid, |x, y| {
        let transverse = if grid.y.is_some() {
            sr.sqrt() * oscillator(0, sr * y)
        } else {
            1.0
        };
        Complex64::new(oscillator(n, x - center) * transverse, 0.0)
    });
    psi.normalize()?;
    Ok(psi)
}

/// FFT plans plus the buffers needed to move a grid function to momentum
/// space and back. In 2D the momentum-space layout is transposed (`y`
/// fastest).
struct Spectral {
    nx: usize,
    ny: usize,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Option<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
    scratch: Vec<Complex64>,
    work: Vec<Complex64>,
    /// `|k|^2` in momentum-space layout.
    k2: Vec<f64>,
}

impl Spectral {
    fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let nx = grid.nx();
        let ny = grid.ny();
        let fft_x = planner.plan_fft_forward(nx);
        let ifft_x = planner.plan_fft_inverse(nx);
        let fft_y = grid
            .y
            .map(|y| (planner.plan_fft_forward(y.n), planner.plan_fft_inverse(y.n)));
        let kx = grid.x.wavenumbers();
        let k2 = match grid.y {
            None => kx.iter().map(|k| k * k).collect(),
            Some(y) => {
                let ky = y.wavenumbers();
                kx.iter()
                    .flat_map(|a| ky.iter().map(move |b| a * a + b * b))
                    .collect()
            }
        };
        let scratch_len = [
            fft_x.get_inplace_scratch_len(),
            ifft_x.get_inplace_scratch_len(),
            fft_y.as_ref().map_or(0, |(f, i)| {
                f.get_inplace_scratch_len().max(i.get_inplace_scratch_len())
            }),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        Spectral {
            nx,
            ny,
            fft_x,
            ifft_x,
            fft_y,
            scratch: vec![ZERO; scratch_len],
            work: vec![ZERO; if ny > 1 { nx * ny } else { 0 }],
            k2,
        }
    }

    fn len(&self) -> usize {
        self.nx * self.ny
    }

    fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
        for r in 0..rows {
            for c in 0..cols {
                dst[c * rows + r] = src[r * cols + c];
            }
        }
    }

    /// Multiplies the momentum-space representation of `data` by `factor`
    /// (given in momentum-space layout, including the `1/N` of the inverse
    /// transform).
    fn apply_diagonal(&mut self, data: &mut [Complex64], factor: &[Complex64]) {
        self.fft_x.process_with_scratch(data, &mut self.scratch);
        match &self.fft_y {
            None => {
                data.iter_mut().zip(factor).for_each(|(a, f)| *a *= f);
            }
            Some((fwd, inv)) => {
                Self::transpose(data, &mut self.work, self.ny, self.nx);
                fwd.process_with_scratch(&mut self.work, &mut self.scratch);
                self.work.iter_mut().zip(factor).for_each(|(a, f)| *a *= f);
                inv.process_with_scratch(&mut self.work, &mut self.scratch);
                Self::transpose(&self.work, data, self.nx, self.ny);
            }
        }
        self.ifft_x.process_with_scratch(data, &mut self.scratch);
    }

    /// `sum_k |k|^2 |psi_k|^2 / N`, which equals `sum_j |grad psi|^2_j` on
    /// the grid.
    fn k2_weight(&mut self, data: &[Complex64]) -> f64 {
        let mut buf = data.to_vec();
        self.fft_x.process_with_scratch(&mut buf, &mut self.scratch);
        let spectrum: &[Complex64] = match &self.fft_y {
            None => &buf,
            Some((fwd, _)) => {
                Self::transpose(&buf, &mut self.work, self.ny, self.nx);
                fwd.process_with_scratch(&mut self.work, &mut self.scratch);
                &self.work
            }
        };
        spectrum
            .iter()
            .zip(&self.k2)
            .map(|(a, k2)| a.norm_sqr() * k2)
            .sum::<f64>()
            / self.len() as f64
    }
}

/// Real-time split-step propagator for a fixed grid.
pub struct Propagator {
    grid: Grid,
    spectral: Spectral,
    dt: f64,
    kinetic: Vec<Complex64>,
    xs: Vec<f64>,
    x_phase: Vec<Complex64>,
    y_phase: Vec<Complex64>,
    omega_y_ratio: f64,
}

impl Propagator {
    pub fn new(grid: &Grid, dt: f64, omega_y_ratio: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let spectral = Spectral::new(grid);
        let mut prop = Propagator {
            grid: *grid,
            xs: grid.x.coords(),
            x_phase: vec![ZERO; grid.nx()],
            y_phase: Vec::new(),
            kinetic: Vec::new(),
            spectral,
            dt: 0.0,
            omega_y_ratio,
        };
        prop.set_dt(dt);
        Ok(prop)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn set_dt(&mut self, dt: f64) {
        if dt == self.dt {
            return;
        }
        self.dt = dt;
        let inv_n = 1.0 / self.spectral.len() as f64;
        self.kinetic = self
            .spectral
            .k2
            .iter()
            .map(|k2| Complex64::from_polar(inv_n, -0.5 * k2 * dt))
            .collect();
        let r2 = self.omega_y_ratio * self.omega_y_ratio;
        self.y_phase = (0..self.grid.ny())
            .map(|iy| {
                let y = self.grid.y_coord(iy);
                Complex64::from_polar(1.0, -0.25 * r2 * y * y * dt)
            })
            .collect();
    }

    /// One step in the three-trap potential.
    pub fn step(&mut self, psi: &mut WaveFunction, positions: &TrapPositions) {
        self.step_in(psi, |x| potential(positions, x));
    }

    /// One step in an arbitrary trap-axis potential.
    pub fn step_in<V>(&mut self, psi: &mut WaveFunction, v: V)
    where
        V: Fn(f64) -> f64,
    {
        let half = 0.5 * self.dt;
        for (p, &x) in self.x_phase.iter_mut().zip(&self.xs) {
            *p = Complex64::from_polar(1.0, -v(x) * half);
        }
        self.apply_potential(&mut psi.amps);
        self.spectral.apply_diagonal(&mut psi.amps, &self.kinetic);
        self.apply_potential(&mut psi.amps);
        psi.time += self.dt;
    }

    fn apply_potential(&self, amps: &mut [Complex64]) {
        let nx = self.grid.nx();
        for (row, yp) in amps.chunks_mut(nx).zip(&self.y_phase) {
            if self.grid.y.is_some() {
                for (a, xp) in row.iter_mut().zip(&self.x_phase) {
                    *a *= xp * yp;
                }
            } else {
                for (a, xp) in row.iter_mut().zip(&self.x_phase) {
                    *a *= xp;
                }
            }
        }
    }
}

/// Single split-step of length `dt` (plans the FFT on every call; use a
/// [`Propagator`] in loops).
pub fn step(psi: &WaveFunction, positions: &TrapPositions, dt: f64) -> Result<WaveFunction> {
    let mut prop = Propagator::new(&psi.grid, dt, 1.0)?;
    let mut out = psi.clone();
    prop.step(&mut out, positions);
    Ok(out)
}

/// Energy expectation `<psi|H|psi>` for a normalized `psi` in the
/// three-trap potential.
pub fn energy(psi: &WaveFunction, positions: &TrapPositions, omega_y_ratio: f64) -> f64 {
    let mut spectral = Spectral::new(&psi.grid);
    energy_with(&mut spectral, psi, positions, omega_y_ratio)
}

fn energy_with(
    spectral: &mut Spectral,
    psi: &WaveFunction,
    positions: &TrapPositions,
    omega_y_ratio: f64,
) -> f64 {
    let grid = &psi.grid;
    let kinetic = 0.5 * spectral.k2_weight(&psi.amps) * grid.cell();
    let xs = grid.x.coords();
    let vx: Vec<f64> = xs.iter().map(|&x| potential(positions, x)).collect();
    let r2 = omega_y_ratio * omega_y_ratio;
    let mut pot = 0.0;
    for (iy, row) in psi.amps.chunks(grid.nx()).enumerate() {
        let vy = if grid.y.is_some() {
            0.5 * r2 * grid.y_coord(iy).powi(2)
        } else {
            0.0
        };
        pot += row
            .iter()
            .zip(&vx)
            .map(|(a, v)| a.norm_sqr() * (v + vy))
            .sum::<f64>();
    }
    (kinetic + pot * grid.cell()) / psi.norm_sqr()
}

/// Symmetry sector enforced during relaxation, about `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Any,
    Even,
    Odd,
}

#[derive(Debug, Clone)]
pub struct Relaxed {
    pub psi: WaveFunction,
    pub energy: f64,
    pub steps: usize,
}

/// Energy change per step below which relaxation counts as converged.
pub const RELAX_TOLERANCE: f64 = 1e-10;

/// Imaginary-time relaxation to the ground state of the static potential.
pub fn relax(
    positions: &TrapPositions,
    guess: &WaveFunction,
    steps: usize,
    dtau: f64,
) -> Result<Relaxed> {
    relax_with_parity(positions, guess, steps, dtau, Parity::Any)
}

/// As [`relax`], projecting onto a parity sector after every step. Parity
/// needs a 1D grid symmetric about the origin.
pub fn relax_with_parity(
    positions: &TrapPositions,
    guess: &WaveFunction,
    steps: usize,
    dtau: f64,
    parity: Parity,
) -> Result<Relaxed> {
    const CHECK_EVERY: usize = 10;
    if !(dtau > 0.0 && dtau.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "imaginary time step must be positive, got {dtau}"
        )));
    }
    let grid = guess.grid;
    if parity != Parity::Any && (grid.y.is_some() || !grid.x.is_symmetric()) {
        return Err(Error::InvalidParameter(
            "parity projection needs a 1D grid symmetric about x = 0".into(),
        ));
    }
    let mut psi = guess.clone();
    project_parity(&mut psi.amps, parity);
    psi.normalize()?;

    let mut spectral = Spectral::new(&grid);
    let inv_n = 1.0 / spectral.len() as f64;
    let kinetic: Vec<Complex64> = spectral
        .k2
        .iter()
        .map(|k2| Complex64::new(inv_n * (-0.5 * k2 * dtau).exp(), 0.0))
        .collect();
    let nx = grid.nx();
    let half_v: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.x.coord(i % nx);
            let y = grid.y_coord(i / nx);
            (-0.5 * dtau * potential_2d(positions, 1.0, x, y)).exp()
        })
        .collect();

    let mut last = energy_with(&mut spectral, &psi, positions, 1.0);
    let mut change = f64::INFINITY;
    for k in 1..=steps {
        psi.amps.iter_mut().zip(&half_v).for_each(|(a, v)| *a *= v);
        spectral.apply_diagonal(&mut psi.amps, &kinetic);
        psi.amps.iter_mut().zip(&half_v).for_each(|(a, v)| *a *= v);
        project_parity(&mut psi.amps, parity);
        psi.normalize()?;
        if k % CHECK_EVERY == 0 {
            let e = energy_with(&mut spectral, &psi, positions, 1.0);
            change = (e - last).abs() / CHECK_EVERY as f64;
            last = e;
            if change < RELAX_TOLERANCE {
                return Ok(Relaxed {
                    psi,
                    energy: e,
                    steps: k,
                });
            }
        }
    }
    Err(Error::RelaxationDiverged {
        steps,
        last_change: change,
    })
}

fn project_parity(amps: &mut [Complex64], parity: Parity) {
    let sign = match parity {
        Parity::Any => return,
        Parity::Even => 1.0,
        Parity::Odd => -1.0,
    };
    // On [-L/2, L/2) the mirror of index i is (n - i) mod n.
    let n = amps.len();
    let orig = amps.to_vec();
    for (i, a) in amps.iter_mut().enumerate() {
        *a = 0.5 * (orig[i] + sign * orig[(n - i) % n]);
    }
}

/// Resolution and bookkeeping knobs of a grid run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericalPolicy {
    /// Largest allowed grid spacing along the trap axis.
    pub spacing: f64,
    pub dt: f64,
    pub sample_every: usize,
    /// Grid extent beyond the outermost trap positions.
    pub margin: f64,
    /// Transverse points (2D only).
    pub y_points: usize,
    /// Transverse half-extent for `omega_y = omega_x` (2D only).
    pub y_half_span: f64,
    /// Largest tolerated edge probability.
    pub containment_limit: f64,
}

impl Default for NumericalPolicy {
    fn default() -> Self {
        NumericalPolicy {
            spacing: 0.05,
            dt: 0.005,
            sample_every: 200,
            margin: EDGE_MARGIN,
            y_points: 32,
            y_half_span: 8.0,
            containment_limit: 1e-4,
        }
    }
}

impl NumericalPolicy {
    /// Coarser default for 2D runs.
    pub fn default_2d() -> Self {
        NumericalPolicy {
            spacing: 0.1,
            dt: 0.01,
            sample_every: 100,
            ..Self::default()
        }
    }

    /// Halved spacing and time step, same sample times.
    pub fn refined(&self) -> Self {
        NumericalPolicy {
            spacing: 0.5 * self.spacing,
            dt: 0.5 * self.dt,
            sample_every: 2 * self.sample_every,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.spacing > 0.0
            && self.dt > 0.0
            && self.sample_every > 0
            && self.margin >= EDGE_MARGIN
            && self.y_points >= 16
            && self.y_half_span > 0.0
            && self.containment_limit > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid numerical policy {self:?}"
            )))
        }
    }

    /// Grid symmetric about the middle trap covering every trap position
    /// with `margin` to spare.
    pub fn grid_for(&self, spec: &ProtocolSpec) -> Result<Grid> {
        self.validate()?;
        let half = spec.max_distance() + self.margin;
        let x = Axis::symmetric(half, self.spacing, MIN_POINTS)?;
        if spec.dims == 2 {
            let y_half = self.y_half_span / spec.omega_y_ratio.sqrt();
            let y = Axis::new(-y_half, y_half, self.y_points.next_power_of_two())?;
            Grid::new_2d(x, y)
        } else {
            Ok(Grid { x, y: None })
        }
    }
}

/// Stored `|psi|^2` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub positions: TrapPositions,
    pub norm: f64,
    pub grid: Grid,
    pub density: Vec<f64>,
}

impl Snapshot {
    fn of(psi: &WaveFunction, positions: TrapPositions) -> Self {
        Snapshot {
            time: psi.time,
            positions,
            norm: psi.norm_sqr(),
            grid: psi.grid,
            density: psi.density(),
        }
    }
}

/// Everything that configures a grid run beyond the protocol itself.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub policy: NumericalPolicy,
    /// Explicit grid; derived from the policy when absent.
    pub grid: Option<Grid>,
    /// Rigid shift of all trap centres.
    pub offset: f64,
    pub snapshot_times: Vec<f64>,
}

impl RunConfig {
    pub fn with_policy(policy: NumericalPolicy) -> Self {
        RunConfig {
            policy,
            ..Default::default()
        }
    }
}

/// 1D propagation of `spec` at the given policy.
pub fn run(spec: &ProtocolSpec, policy: &NumericalPolicy) -> Result<RunResult> {
    if spec.dims != 1 {
        return Err(Error::InvalidProtocol(format!(
            "run expects a 1D protocol, got dims = {}",
            spec.dims
        )));
    }
    simulate(spec, &RunConfig::with_policy(*policy))
}

/// 2D propagation, storing `|psi|^2` at the requested times.
pub fn run_2d(
    spec: &ProtocolSpec,
    policy: &NumericalPolicy,
    snapshot_times: &[f64],
) -> Result<RunResult> {
    if spec.dims != 2 {
        return Err(Error::InvalidProtocol(format!(
            "run_2d expects a 2D protocol, got dims = {}",
            spec.dims
        )));
    }
    simulate(
        spec,
        &RunConfig {
            policy: *policy,
            snapshot_times: snapshot_times.to_vec(),
            ..Default::default()
        },
    )
}

/// Propagates the atom through every stage of `spec`, starting in
/// `|level>` of the initial trap.
pub fn simulate(spec: &ProtocolSpec, cfg: &RunConfig) -> Result<RunResult> {
    spec.validate()?;
    let policy = &cfg.policy;
    policy.validate()?;
    let grid = match cfg.grid {
        Some(g) => g,
        None => policy.grid_for(spec)?,
    };
    if grid.dims() != spec.dims {
        return Err(Error::InvalidParameter(format!(
            "grid is {}D but the protocol is {}D",
            grid.dims(),
            spec.dims
        )));
    }
    let reach = spec.max_distance() + EDGE_MARGIN;
    if grid.x.min > cfg.offset - reach || grid.x.max < cfg.offset + reach {
        return Err(Error::InvalidParameter(format!(
            "grid [{}, {}] does not cover the traps with a margin of {EDGE_MARGIN}",
            grid.x.min, grid.x.max
        )));
    }

    let positions_at =
        |stage: usize, local: f64| spec.stages[stage].positions(local).shifted(cfg.offset);
    let level = spec.level as u32;
    let start = positions_at(0, 0.0);
    let mut psi = eigenstate_2d(
        level,
        start.center(spec.initial_trap),
        &grid,
        spec.omega_y_ratio,
    )?;

    let timeline = Timeline::new(spec, policy.dt, policy.sample_every)?;
    let mut prop = Propagator::new(&grid, policy.dt, spec.omega_y_ratio)?;
    let mut samples = vec![analysis::sample(&psi, &start, level, spec.dark_theta)];
    let mut snapshot_times: Vec<f64> = cfg.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    let mut pending = snapshot_times.into_iter().peekable();
    let mut snapshots = Vec::new();
    while let Some(&t) = pending.peek() {
        if t > 1e-9 {
            break;
        }
        snapshots.push(Snapshot::of(&psi, start));
        pending.next();
    }

    for step in timeline.steps() {
        prop.set_dt(step.dt);
        let mid = positions_at(step.stage, step.local_start + 0.5 * step.dt);
        prop.step(&mut psi, &mid);
        psi.time = step.time_end;
        let wants_snapshot = pending.peek().is_some_and(|&t| t <= step.time_end + 1e-9);
        if step.record || wants_snapshot {
            let end = positions_at(step.stage, step.local_start + step.dt);
            if step.record {
                let edge = psi.edge_probability(EDGE_FRACTION);
                if edge > policy.containment_limit {
                    return Err(Error::ContainmentViolation {
                        time: step.time_end,
                        edge_probability: edge,
                        limit: policy.containment_limit,
                    });
                }
                samples.push(analysis::sample(&psi, &end, level, spec.dark_theta));
            }
            while pending.peek().is_some_and(|&t| t <= step.time_end + 1e-9) {
                snapshots.push(Snapshot::of(&psi, end));
                pending.next();
            }
        }
    }
    let mut result = RunResult::new(samples);
    result.snapshots = snapshots;
    Ok(result)
}
