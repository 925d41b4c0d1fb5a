//! Dimensionless unit system, trap-distance schedules and protocol presets.
//!
//! Lengths are measured in units of the oscillator length `1/alpha =
//! sqrt(hbar / (m omega_x))`, times in units of `1/omega_x` and energies in
//! units of `hbar omega_x`. The middle trap sits at the origin; the outer
//! traps move along the axis according to one [`PairSchedule`] each.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Mass of a 87Rb atom in kg.
pub const RB87_MASS: f64 = 1.443_160_648e-25;

/// Physical scales behind the dimensionless units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// Trap angular frequency along the trap axis, rad/s.
    pub omega_x: f64,
    /// Atomic mass, kg.
    pub mass: f64,
}

impl UnitSystem {
    pub fn new(omega_x: f64, mass: f64) -> Result<Self> {
        if !(omega_x > 0.0 && omega_x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "omega_x must be positive, got {omega_x}"
            )));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mass must be positive, got {mass}"
            )));
        }
        Ok(UnitSystem { omega_x, mass })
    }

    pub fn rubidium87(omega_x: f64) -> Result<Self> {
        Self::new(omega_x, RB87_MASS)
    }

    /// Oscillator length `1/alpha` in metres.
    pub fn inv_alpha(&self) -> f64 {
        (HBAR / (self.mass * self.omega_x)).sqrt()
    }

    /// Converts a dimensionless time `t omega_x` to seconds.
    pub fn to_physical_time(&self, t: f64) -> f64 {
        t / self.omega_x
    }

    /// Converts a dimensionless length `alpha d` to metres.
    pub fn to_physical_length(&self, d: f64) -> f64 {
        d * self.inv_alpha()
    }
}

/// Time course of one inter-trap distance: rest at `d_max`, half-cosine
/// approach to `d_min` over `t_ramp`, hold for `t_hold`, mirrored separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSchedule {
    #[serde(rename = "d_max_alpha")]
    pub d_max: f64,
    #[serde(rename = "d_min_alpha")]
    pub d_min: f64,
    #[serde(rename = "t_ramp_omega")]
    pub t_ramp: f64,
    #[serde(rename = "t_hold_omega")]
    pub t_hold: f64,
    #[serde(rename = "t_start_omega")]
    pub t_start: f64,
}

impl PairSchedule {
    pub fn new(d_max: f64, d_min: f64, t_ramp: f64, t_hold: f64, t_start: f64) -> Result<Self> {
        let s = PairSchedule {
            d_max,
            d_min,
            t_ramp,
            t_hold,
            t_start,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProtocol(msg));
        if !(self.d_min > 0.0 && self.d_min < self.d_max && self.d_max.is_finite()) {
            return bad(format!(
                "need 0 < d_min < d_max, got d_min = {}, d_max = {}",
                self.d_min, self.d_max
            ));
        }
        if !(self.t_ramp > 0.0 && self.t_ramp.is_finite()) {
            return bad(format!("t_ramp must be positive, got {}", self.t_ramp));
        }
        if !(self.t_hold >= 0.0 && self.t_hold.is_finite()) {
            return bad(format!("t_hold must be non-negative, got {}", self.t_hold));
        }
        if !(self.t_start >= 0.0 && self.t_start.is_finite()) {
            return bad(format!(
                "t_start must be non-negative, got {}",
                self.t_start
            ));
        }
        Ok(())
    }

    /// Time at which the traps are back at `d_max`.
    pub fn end_time(&self) -> f64 {
        self.t_start + 2.0 * self.t_ramp + self.t_hold
    }

    /// Time at which `d_min` is first reached.
    pub fn closest_time(&self) -> f64 {
        self.t_start + self.t_ramp
    }

    /// Distance between the two traps at time `t`.
    pub fn distance(&self, t: f64) -> f64 {
        let tau = t - self.t_start;
        let span = self.d_max - self.d_min;
        if tau <= 0.0 {
            self.d_max
        } else if tau < self.t_ramp {
            self.d_min + span * 0.5 * (1.0 + (PI * tau / self.t_ramp).cos())
        } else if tau <= self.t_ramp + self.t_hold {
            self.d_min
        } else if tau < 2.0 * self.t_ramp + self.t_hold {
            let back = tau - self.t_ramp - self.t_hold;
            self.d_min + span * 0.5 * (1.0 - (PI * back / self.t_ramp).cos())
        } else {
            self.d_max
        }
    }
}

/// Free function form of [`PairSchedule::distance`].
pub fn pair_distance(s: &PairSchedule, t: f64) -> f64 {
    s.distance(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trap {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "M")]
    Middle,
    #[serde(rename = "R")]
    Right,
}

impl Trap {
    pub fn index(self) -> usize {
        match self {
            Trap::Left => 0,
            Trap::Middle => 1,
            Trap::Right => 2,
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Trap::Left => Trap::Right,
            Trap::Middle => Trap::Middle,
            Trap::Right => Trap::Left,
        }
    }
}

/// Coordinates of the three trap centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapPositions {
    pub x_l: f64,
    pub x_m: f64,
    pub x_r: f64,
}

impl TrapPositions {
    pub fn new(x_l: f64, x_m: f64, x_r: f64) -> Self {
        TrapPositions { x_l, x_m, x_r }
    }

    /// Middle trap at the origin, outer traps at the given distances.
    pub fn from_distances(d_lm: f64, d_mr: f64) -> Self {
        TrapPositions {
            x_l: -d_lm,
            x_m: 0.0,
            x_r: d_mr,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x_l, self.x_m, self.x_r]
    }

    pub fn center(&self, trap: Trap) -> f64 {
        self.as_array()[trap.index()]
    }

    pub fn shifted(&self, offset: f64) -> Self {
        TrapPositions {
            x_l: self.x_l + offset,
            x_m: self.x_m + offset,
            x_r: self.x_r + offset,
        }
    }
}

/// One stage of a protocol. Schedule times are relative to the stage start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub lm: PairSchedule,
    pub mr: PairSchedule,
    #[serde(rename = "duration_omega")]
    pub duration: f64,
}

impl Stage {
    /// A stage lasting exactly until both pairs are separated again.
    pub fn new(lm: PairSchedule, mr: PairSchedule) -> Self {
        let duration = lm.end_time().max(mr.end_time());
        Stage { lm, mr, duration }
    }

    pub fn with_duration(lm: PairSchedule, mr: PairSchedule, duration: f64) -> Self {
        Stage { lm, mr, duration }
    }

    /// Time at which both pairs are back at `d_max`.
    pub fn natural_end(&self) -> f64 {
        self.lm.end_time().max(self.mr.end_time())
    }

    pub fn positions(&self, t: f64) -> TrapPositions {
        TrapPositions::from_distances(self.lm.distance(t), self.mr.distance(t))
    }
}

fn default_dims() -> u8 {
    1
}

fn default_omega_y_ratio() -> f64 {
    1.0
}

fn default_initial_trap() -> Trap {
    Trap::Left
}

fn default_dark_theta() -> f64 {
    FRAC_PI_4
}

/// A complete experiment: stages of trap motion plus the physical setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub stages: Vec<Stage>,
    /// Vibrational level of the three-mode basis, 0 or 1.
    #[serde(default)]
    pub level: u8,
    #[serde(default = "default_dims")]
    pub dims: u8,
    /// `omega_y / omega_x`, only used in 2D.
    #[serde(default = "default_omega_y_ratio")]
    pub omega_y_ratio: f64,
    #[serde(default = "default_initial_trap")]
    pub initial_trap: Trap,
    /// Mixing angle of the dark state reported as `p_dark`, radians.
    #[serde(default = "default_dark_theta")]
    pub dark_theta: f64,
}

impl ProtocolSpec {
    /// Single-stage, 1D, ground-level protocol starting in the left trap.
    pub fn single(stage: Stage) -> Self {
        ProtocolSpec {
            stages: vec![stage],
            level: 0,
            dims: 1,
            omega_y_ratio: 1.0,
            initial_trap: Trap::Left,
            dark_theta: FRAC_PI_4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProtocol(msg));
        if self.stages.is_empty() {
            return bad("protocol has no stages".into());
        }
        for (k, stage) in self.stages.iter().enumerate() {
            stage
                .lm
                .validate()
                .and_then(|_| stage.mr.validate())
                .map_err(|e| Error::InvalidProtocol(format!("stage {k}: {e}")))?;
            if !(stage.duration > 0.0 && stage.duration.is_finite()) {
                return bad(format!("stage {k}: duration must be positive"));
            }
            if stage.natural_end() > stage.duration + 1e-9 {
                return bad(format!(
                    "stage {k}: schedules end at {} after the stage end {}",
                    stage.natural_end(),
                    stage.duration
                ));
            }
        }
        if self.level > 1 {
            return bad(format!("level must be 0 or 1, got {}", self.level));
        }
        if !(self.dims == 1 || self.dims == 2) {
            return bad(format!("dims must be 1 or 2, got {}", self.dims));
        }
        if !(self.omega_y_ratio > 0.0 && self.omega_y_ratio.is_finite()) {
            return bad(format!(
                "omega_y_ratio must be positive, got {}",
                self.omega_y_ratio
            ));
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.stages.iter().map(|s| s.duration).sum()
    }

    /// Start time of every stage.
    pub fn stage_starts(&self) -> Vec<f64> {
        let mut t0 = 0.0;
        self.stages
            .iter()
            .map(|s| {
                let start = t0;
                t0 += s.duration;
                start
            })
            .collect()
    }

    /// Stage active at `t` and the time relative to its start. Times past the
    /// end map into the last stage.
    pub fn stage_at(&self, t: f64) -> (&Stage, f64) {
        let mut t0 = 0.0;
        for (k, stage) in self.stages.iter().enumerate() {
            if t < t0 + stage.duration || k + 1 == self.stages.len() {
                return (stage, t - t0);
            }
            t0 += stage.duration;
        }
        unreachable!("validated protocols have at least one stage")
    }

    pub fn trap_positions(&self, t: f64) -> TrapPositions {
        let (stage, local) = self.stage_at(t);
        stage.positions(local)
    }

    /// Largest trap distance reached anywhere in the protocol.
    pub fn max_distance(&self) -> f64 {
        self.stages
            .iter()
            .flat_map(|s| [s.lm.d_max, s.mr.d_max])
            .fold(0.0, f64::max)
    }

    /// Reflection `x -> -x`: exchanges the two schedules and the outer traps.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for stage in &mut out.stages {
            std::mem::swap(&mut stage.lm, &mut stage.mr);
        }
        out.initial_trap = self.initial_trap.mirrored();
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ProtocolSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("protocol specs always serialize")
    }
}

/// Free function form of [`ProtocolSpec::trap_positions`].
pub fn trap_positions(spec: &ProtocolSpec, t: f64) -> TrapPositions {
    spec.trap_positions(t)
}

/// Built-in protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Stirap,
    CptSplit,
    CptDarkTest,
    Eit,
    StirapExcited,
    SplitExcited,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Stirap,
        Preset::CptSplit,
        Preset::CptDarkTest,
        Preset::Eit,
        Preset::StirapExcited,
        Preset::SplitExcited,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Stirap => "stirap",
            Preset::CptSplit => "cpt_split",
            Preset::CptDarkTest => "cpt_darktest",
            Preset::Eit => "eit",
            Preset::StirapExcited => "stirap_excited",
            Preset::SplitExcited => "split_excited",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Stirap => "ground-state transfer L -> R, counterintuitive ordering",
            Preset::CptSplit => "coherent 50/50 splitting between L and R",
            Preset::CptDarkTest => {
                "cpt_split followed by a simultaneous approach of both outer traps"
            }
            Preset::Eit => "inhibition of L -> M tunnelling by a strong M-R coupling",
            Preset::StirapExcited => "first-excited-state transfer |1>_L -> |1>_R",
            Preset::SplitExcited => "first-excited-state 50/50 splitting between L and M",
        }
    }

    pub fn spec(self) -> ProtocolSpec {
        let sched = |d_max, t_ramp, t_hold, t_start| PairSchedule {
            d_max,
            d_min: 1.5,
            t_ramp,
            t_hold,
            t_start,
        };
        match self {
            Preset::Stirap => ProtocolSpec::single(Stage::new(
                sched(6.0, 150.0, 0.0, 60.0),
                sched(6.0, 150.0, 0.0, 0.0),
            )),
            Preset::CptSplit => ProtocolSpec::single(Stage::with_duration(
                sched(7.0, 200.0, 0.0, 120.0),
                sched(7.0, 200.0, 120.0, 0.0),
                600.0,
            )),
            Preset::CptDarkTest => {
                let mut spec = Preset::CptSplit.spec();
                spec.stages.push(Stage::new(
                    sched(7.0, 200.0, 0.0, 0.0),
                    sched(7.0, 200.0, 0.0, 0.0),
                ));
                spec
            }
            Preset::Eit => ProtocolSpec::single(Stage::new(
                sched(6.0, 150.0, 30.0, 60.0),
                sched(6.0, 150.0, 150.0, 0.0),
            )),
            Preset::StirapExcited => ProtocolSpec {
                level: 1,
                ..ProtocolSpec::single(Stage::new(
                    sched(9.0, 300.0, 0.0, 120.0),
                    sched(9.0, 300.0, 0.0, 0.0),
                ))
            },
            Preset::SplitExcited => ProtocolSpec {
                level: 1,
                ..ProtocolSpec::single(Stage::new(
                    sched(9.0, 550.0, 75.0, 200.0),
                    sched(9.0, 400.0, 400.0, 0.0),
                ))
            },
        }
    }

    fn valid_names() -> String {
        Preset::ALL
            .iter()
            .map(|p| p.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset {
                name: s.to_string(),
                valid: Preset::valid_names(),
            })
    }
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Result<ProtocolSpec> {
    Ok(name.parse::<Preset>()?.spec())
}
