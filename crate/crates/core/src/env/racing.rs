//! Car racing on a closed track built from straights and circular arcs.
//!
//! The car is a point mass in curvilinear track coordinates: arc position
//! `s`, lateral offset `ℓ` (positive to the left) and heading offset `ψ` from
//! the centerline tangent. Gears shift automatically on fixed speed
//! thresholds. Fitness is the distance raced in `N` steps, discounted for
//! steps spent off the track and for spinning out.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::Deserialize;

use super::{check_conditions, EnvError, Environment};
use crate::net::{Controller, NetworkTopology};
use crate::protocol::ConditionRanges;

pub const DT: f64 = 0.004;
pub const DEFAULT_STEPS: usize = 50_000;
/// Curvature that saturates the curvature sensors (10 m radius).
pub const KAPPA_MAX: f64 = 0.1;
/// Consecutive steps with `|ψ| > π/2` that count as a tailspin.
pub const TAILSPIN_STEPS: usize = 25;

/// Upshift speeds (km/h) out of gears 1..=5.
pub const UPSHIFT_KMH: [f64; 5] = [67.0, 114.0, 166.0, 212.0, 246.0];
/// Downshift speeds (km/h) out of gears 6..=2.
pub const DOWNSHIFT_KMH: [f64; 5] = [232.0, 198.0, 152.0, 100.0, 53.0];

pub const DEFAULT_TRACK: &str = include_str!("../../data/club.track");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentClass {
    Straight,
    Left,
    Right,
}

impl SegmentClass {
    /// Two-unit class code: straight 00, right 01, left 10.
    pub fn code(self) -> [f64; 2] {
        match self {
            SegmentClass::Straight => [0.0, 0.0],
            SegmentClass::Right => [0.0, 1.0],
            SegmentClass::Left => [1.0, 0.0],
        }
    }

    fn mirrored(self) -> Self {
        match self {
            SegmentClass::Straight => SegmentClass::Straight,
            SegmentClass::Left => SegmentClass::Right,
            SegmentClass::Right => SegmentClass::Left,
        }
    }
}

impl FromStr for SegmentClass {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "straight" => Ok(SegmentClass::Straight),
            "left" => Ok(SegmentClass::Left),
            "right" => Ok(SegmentClass::Right),
            other => Err(EnvError::Setup(format!("unknown segment class '{other}'"))),
        }
    }
}

impl fmt::Display for SegmentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentClass::Straight => "straight",
            SegmentClass::Left => "left",
            SegmentClass::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub class: SegmentClass,
    pub length: f64,
    /// Signed curvature, positive for left turns.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSpec {
    width: f64,
    segments: Vec<Segment>,
    /// Arc position at which each segment starts.
    starts: Vec<f64>,
    length: f64,
}

impl TrackSpec {
    /// Builds a closed track. Curvatures may be given signed or as
    /// magnitudes; the class decides the sign.
    pub fn new(width: f64, segments: Vec<(SegmentClass, f64, f64)>) -> Result<Self, EnvError> {
        let track = Self::assemble(width, segments)?;
        let turning: f64 = track.segments.iter().map(|s| s.kappa * s.length).sum();
        let turns = (turning / (2.0 * PI)).round();
        if turns == 0.0 || (turning - turns * 2.0 * PI).abs() > 1e-4 {
            return Err(EnvError::Setup(format!(
                "track heading changes by {turning} rad, not a multiple of 2π"
            )));
        }
        Ok(track)
    }

    /// A periodic all-straight track of the given length. It does not close
    /// geometrically and only serves to isolate the longitudinal model.
    pub fn straight_loop(length: f64, width: f64) -> Result<Self, EnvError> {
        Self::assemble(width, vec![(SegmentClass::Straight, length, 0.0)])
    }

    fn assemble(width: f64, raw: Vec<(SegmentClass, f64, f64)>) -> Result<Self, EnvError> {
        if raw.is_empty() {
            return Err(EnvError::Setup("track has no segments".into()));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(EnvError::Setup(format!("track width {width}")));
        }
        let mut segments = Vec::with_capacity(raw.len());
        let mut starts = Vec::with_capacity(raw.len());
        let mut length = 0.0;
        for (i, (class, len, k)) in raw.into_iter().enumerate() {
            if !(len.is_finite() && len > 0.0) {
                return Err(EnvError::Setup(format!("segment {i}: length {len}")));
            }
            let kappa = match class {
                SegmentClass::Straight if k != 0.0 => {
                    return Err(EnvError::Setup(format!("segment {i}: straight with curvature {k}")))
                }
                SegmentClass::Straight => 0.0,
                SegmentClass::Left => k.abs(),
                SegmentClass::Right => -k.abs(),
            };
            if class != SegmentClass::Straight && !(kappa.is_finite() && kappa != 0.0) {
                return Err(EnvError::Setup(format!("segment {i}: curve with curvature {k}")));
            }
            if kappa.abs() * width / 2.0 >= 1.0 {
                return Err(EnvError::Setup(format!(
                    "segment {i}: radius {} narrower than half the width",
                    1.0 / kappa.abs()
                )));
            }
            starts.push(length);
            length += len;
            segments.push(Segment {
                class,
                length: len,
                kappa,
            });
        }
        Ok(TrackSpec {
            width,
            segments,
            starts,
            length,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Index of the segment containing arc position `s` (wrapped).
    pub fn segment_index(&self, s: f64) -> usize {
        let s = s.rem_euclid(self.length);
        match self.starts.binary_search_by(|st| st.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    pub fn segment_at(&self, s: f64) -> (&Segment, &Segment) {
        let i = self.segment_index(s);
        (&self.segments[i], &self.segments[(i + 1) % self.segments.len()])
    }

    /// The same track with every turn reversed.
    pub fn mirrored(&self) -> Self {
        let mut t = self.clone();
        for s in &mut t.segments {
            s.class = s.class.mirrored();
            s.kappa = -s.kappa;
        }
        t
    }

    /// Track file text: a `width w` header and one `class length curvature`
    /// line per segment. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| EnvError::Setup("empty track file".into()))?;
        let width = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["width", w] => w
                .parse::<f64>()
                .map_err(|e| EnvError::Setup(format!("width: {e}")))?,
            _ => return Err(EnvError::Setup(format!("expected 'width w', got '{header}'"))),
        };
        let mut segments = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(EnvError::Setup(format!("bad segment line '{line}'")));
            }
            let num = |f: &str| {
                f.parse::<f64>()
                    .map_err(|e| EnvError::Setup(format!("'{line}': {e}")))
            };
            segments.push((fields[0].parse()?, num(fields[1])?, num(fields[2])?));
        }
        Self::new(width, segments)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("width {}\n", self.width);
        for s in &self.segments {
            out.push_str(&format!("{} {} {}\n", s.class, s.length, s.kappa.abs()));
        }
        out
    }
}

/// Car model constants.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarParams {
    /// Full-throttle acceleration per gear (m/s²).
    pub accel: [f64; 6],
    /// Quadratic drag coefficient (1/m).
    pub drag: f64,
    /// Full-brake deceleration (m/s²).
    pub brake: f64,
    /// Maximum steering angle (rad).
    pub steer_gain: f64,
    pub wheelbase: f64,
    /// Lateral grip limit μg (m/s²).
    pub grip: f64,
    /// Seconds of outward drift per m/s² of lateral acceleration beyond grip.
    pub slip: f64,
    /// Extra linear drag off the track (1/s).
    pub grass_drag: f64,
    /// Distance beyond the track edge where the barrier stands (m).
    pub barrier: f64,
    /// Speed kept per step of barrier contact.
    pub barrier_damping: f64,
}

impl Default for CarParams {
    fn default() -> Self {
        CarParams {
            accel: [9.0, 7.5, 6.5, 5.8, 5.4, 5.12],
            drag: 0.0008,
            brake: 12.0,
            steer_gain: 0.5,
            wheelbase: 2.6,
            grip: 14.0,
            slip: 0.05,
            grass_drag: 0.5,
            barrier: 2.0,
            barrier_damping: 0.9,
        }
    }
}

impl CarParams {
    /// Top speed in sixth gear, `√(A(6)/c_d)`.
    pub fn terminal_speed(&self) -> f64 {
        (self.accel[5] / self.drag).sqrt()
    }

    fn validate(&self, track: &TrackSpec) -> Result<(), EnvError> {
        let positive = self.accel.iter().all(|a| *a > 0.0)
            && [self.drag, self.brake, self.steer_gain, self.wheelbase, self.grip]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0)
            && self.slip >= 0.0
            && self.grass_drag >= 0.0
            && self.barrier >= 0.0
            && (0.0..=1.0).contains(&self.barrier_damping);
        if !positive {
            return Err(EnvError::Setup(format!("invalid car parameters {self:?}")));
        }
        let reach = track.width / 2.0 + self.barrier;
        if let Some(s) = track.segments.iter().find(|s| s.kappa.abs() * reach >= 1.0) {
            return Err(EnvError::Setup(format!(
                "barrier lies beyond the centre of a {} m radius curve",
                1.0 / s.kappa.abs()
            )));
        }
        Ok(())
    }
}

/// Which reading of the off-track penalty to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyForm {
    /// `1 - 0.25 n_out² / N`
    #[default]
    Literal,
    /// `1 - 0.25 (n_out / N)²`
    Squared,
}

/// `d · max(0, 1 - 0.25 n_out²/N) · (1 - 0.25 a)`.
pub fn race_fitness(d: f64, n_out: usize, n: usize, tailspin: bool) -> f64 {
    race_fitness_with(PenaltyForm::Literal, d, n_out, n, tailspin)
}

pub fn race_fitness_with(form: PenaltyForm, d: f64, n_out: usize, n: usize, tailspin: bool) -> f64 {
    assert!(n > 0 && n_out <= n, "need 0 <= n_out <= N, N > 0");
    let (o, n) = (n_out as f64, n as f64);
    let ratio = match form {
        PenaltyForm::Literal => o * o / n,
        PenaltyForm::Squared => (o / n) * (o / n),
    };
    let a = if tailspin { 1.0 } else { 0.0 };
    d * (1.0 - 0.25 * ratio).max(0.0) * (1.0 - 0.25 * a)
}

/// Automatic gearbox: at most one shift per call, upshifts checked first.
pub fn gear_update(v_kmh: f64, gear: u8) -> u8 {
    assert!((1..=6).contains(&gear), "gear {gear} out of range");
    if gear < 6 && v_kmh > UPSHIFT_KMH[gear as usize - 1] {
        return gear + 1;
    }
    if gear > 1 && v_kmh < DOWNSHIFT_KMH[6 - gear as usize] {
        return gear - 1;
    }
    gear
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarState {
    pub s: f64,
    pub lateral: f64,
    pub heading: f64,
    pub speed: f64,
    pub gear: u8,
    pub steps_out: usize,
    /// Current run of steps with `|ψ| > π/2`.
    pub spin_run: usize,
    pub tailspin: bool,
    /// Net centerline distance covered since the start.
    pub distance: f64,
}

impl CarState {
    pub fn at(s: f64) -> Self {
        CarState {
            s,
            lateral: 0.0,
            heading: 0.0,
            speed: 0.0,
            gear: 1,
            steps_out: 0,
            spin_run: 0,
            tailspin: false,
            distance: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.s, self.lateral, self.heading, self.speed, self.distance]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn off_track(&self, track: &TrackSpec) -> bool {
        self.lateral.abs() > track.width / 2.0
    }
}

/// Brings an angle back into `[-π, π]`; exact for mirrored inputs.
fn wrap_angle(a: f64) -> f64 {
    if a > PI {
        a - 2.0 * PI
    } else if a < -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

/// The twelve sensor values, all in `[0, 1]`.
pub fn sensors(car: &CarState, track: &TrackSpec, params: &CarParams) -> [f64; 12] {
    let half = track.width / 2.0;
    let (seg, next) = track.segment_at(car.s);
    let curvature = |k: f64| {
        let m = (k.abs() / KAPPA_MAX).min(1.0);
        if k > 0.0 {
            [m, 0.0]
        } else {
            [0.0, m]
        }
    };
    let left = (0.4 * (1.0 + car.lateral / half)).clamp(0.0, 1.0);
    let right = (0.4 * (1.0 - car.lateral / half)).clamp(0.0, 1.0);
    let [c0, c1] = seg.class.code();
    let [k0, k1] = curvature(seg.kappa);
    let [n0, n1] = next.class.code();
    let [nk0, nk1] = curvature(next.kappa);
    [
        left,
        right,
        (wrap_angle(car.heading) + PI) / (2.0 * PI),
        (car.speed / params.terminal_speed()).min(1.0),
        c0,
        c1,
        k0,
        k1,
        n0,
        n1,
        nk0,
        nk1,
    ]
}

/// Advances the car by `dt` with `steer ∈ [-1, 1]` and `pedal ∈ [0, 1]`.
pub fn car_step(
    car: &CarState,
    steer: f64,
    pedal: f64,
    track: &TrackSpec,
    params: &CarParams,
    dt: f64,
) -> CarState {
    let steer = steer.clamp(-1.0, 1.0);
    let pedal = pedal.clamp(0.0, 1.0);
    let (seg, _) = track.segment_at(car.s);
    let kappa = seg.kappa;
    let v = car.speed;
    let half = track.width / 2.0;

    let mut accel = if pedal > 0.5 {
        params.accel[car.gear as usize - 1] * 2.0 * (pedal - 0.5)
    } else {
        -params.brake * 2.0 * (0.5 - pedal)
    } - params.drag * v * v;
    if car.off_track(track) {
        accel -= params.grass_drag * v;
    }

    let path_kappa = params.steer_gain * steer / params.wheelbase;
    let lateral_accel = v * v * path_kappa.abs();
    let (turn, drift) = if lateral_accel > params.grip {
        let sign = path_kappa.signum();
        (sign * params.grip / (v * v), -sign * params.slip * (lateral_accel - params.grip))
    } else {
        (path_kappa, 0.0)
    };

    let (sin_h, cos_h) = car.heading.sin_cos();
    let along = v * cos_h / (1.0 - car.lateral * kappa);
    let heading_rate = turn * v - kappa * along;
    let lateral_rate = v * sin_h + drift;

    let mut next = *car;
    next.s = (car.s + along * dt).rem_euclid(track.length);
    next.distance = car.distance + along * dt;
    next.heading = wrap_angle(car.heading + heading_rate * dt);
    next.lateral = car.lateral + lateral_rate * dt;
    next.speed = (v + accel * dt).max(0.0);

    let wall = half + params.barrier;
    if next.lateral.abs() > wall {
        next.lateral = wall.copysign(next.lateral);
        next.speed *= params.barrier_damping;
    }
    if next.off_track(track) {
        next.steps_out += 1;
    }
    if next.heading.abs() > PI / 2.0 {
        next.spin_run += 1;
        if next.spin_run >= TAILSPIN_STEPS {
            next.tailspin = true;
        }
    } else {
        next.spin_run = 0;
    }
    next.gear = gear_update(next.speed * 3.6, car.gear);
    next
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaceTraceRow {
    pub step: usize,
    pub car: CarState,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RacingConfig {
    /// Track file; the shipped club circuit when absent.
    pub track: Option<std::path::PathBuf>,
    pub steps: usize,
    pub penalty: PenaltyForm,
    pub car: CarParams,
}

impl Default for RacingConfig {
    fn default() -> Self {
        RacingConfig {
            track: None,
            steps: DEFAULT_STEPS,
            penalty: PenaltyForm::Literal,
            car: CarParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Racing {
    track: TrackSpec,
    params: CarParams,
    steps: usize,
    penalty: PenaltyForm,
}

impl Racing {
    pub fn new(track: TrackSpec, params: CarParams, steps: usize) -> Result<Self, EnvError> {
        if steps == 0 {
            return Err(EnvError::Setup("episode needs at least one step".into()));
        }
        params.validate(&track)?;
        Ok(Racing {
            track,
            params,
            steps,
            penalty: PenaltyForm::Literal,
        })
    }

    pub fn with_penalty(mut self, penalty: PenaltyForm) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn default_track() -> Self {
        let track = TrackSpec::parse(DEFAULT_TRACK).expect("shipped track is valid");
        Racing::new(track, CarParams::default(), DEFAULT_STEPS).expect("shipped car is valid")
    }

    pub fn from_config(config: &RacingConfig) -> Result<Self, EnvError> {
        let track = match &config.track {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| EnvError::Setup(format!("{}: {e}", path.display())))?;
                TrackSpec::parse(&text)?
            }
            None => TrackSpec::parse(DEFAULT_TRACK)?,
        };
        Ok(Racing::new(track, config.car.clone(), config.steps)?.with_penalty(config.penalty))
    }

    pub fn track(&self) -> &TrackSpec {
        &self.track
    }

    pub fn params(&self) -> &CarParams {
        &self.params
    }

    fn drive<C: Controller + Clone>(
        &self,
        controller: &C,
        conditions: &[f64],
        mut trace: Option<&mut Vec<RaceTraceRow>>,
    ) -> Result<f64, EnvError> {
        check_conditions(&self.condition_ranges(), conditions)?;
        let mut ctrl = controller.clone();
        ctrl.reset();
        let mut car = CarState::at(conditions[0].rem_euclid(self.track.length));
        let mut motors = [0.0; 2];
        for step in 0..self.steps {
            let input = sensors(&car, &self.track, &self.params);
            ctrl.act(&input, &mut motors);
            car = car_step(&car, 2.0 * motors[0] - 1.0, motors[1], &self.track, &self.params, DT);
            if !car.is_finite() {
                log::warn!("racing episode aborted at step {step}: non-finite car state");
                return Ok(0.0);
            }
            if let Some(rows) = trace.as_deref_mut() {
                rows.push(RaceTraceRow { step, car });
            }
        }
        Ok(race_fitness_with(
            self.penalty,
            car.distance,
            car.steps_out,
            self.steps,
            car.tailspin,
        ))
    }

    pub fn run_episode_traced<C: Controller + Clone>(
        &self,
        controller: &C,
        conditions: &[f64],
    ) -> Result<(f64, Vec<RaceTraceRow>), EnvError> {
        let mut rows = Vec::with_capacity(self.steps);
        let f = self.drive(controller, conditions, Some(&mut rows))?;
        Ok((f, rows))
    }
}

impl Environment for Racing {
    fn name(&self) -> &'static str {
        "racing"
    }

    fn topology(&self) -> NetworkTopology {
        NetworkTopology::new(12, 10, 2).expect("non-zero counts")
    }

    fn condition_ranges(&self) -> ConditionRanges {
        ConditionRanges::new(vec![(0.0, self.track.length)]).expect("positive track length")
    }

    fn run_episode<C: Controller + Clone>(
        &self,
        controller: &C,
        conditions: &[f64],
    ) -> Result<f64, EnvError> {
        self.drive(controller, conditions, None)
    }
}

pub fn write_trace_csv<W: Write>(mut out: W, rows: &[RaceTraceRow], track: &TrackSpec) -> io::Result<()> {
    writeln!(out, "step,s,lateral,heading,speed,gear,out")?;
    for r in rows {
        let c = &r.car;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            c.s,
            c.lateral,
            c.heading,
            c.speed,
            c.gear,
            u8::from(c.off_track(track))
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Network;

    /// Replays fixed `(steer, pedal)` outputs.
    #[derive(Clone)]
    struct Fixed(f64, f64);
    impl Controller for Fixed {
        fn reset(&mut self) {}
        fn act(&mut self, _: &[f64], motors: &mut [f64]) {
            motors[0] = (self.0 + 1.0) / 2.0;
            motors[1] = self.1;
        }
    }

    fn straight() -> TrackSpec {
        TrackSpec::straight_loop(1000.0, 12.0).unwrap()
    }

    #[test]
    fn fitness_examples() {
        assert_eq!(race_fitness(1000.0, 0, 50_000, false), 1000.0);
        assert!((race_fitness(1000.0, 100, 50_000, true) - 712.5).abs() < 1e-9);
        assert_eq!(race_fitness(1000.0, 50_000, 50_000, false), 0.0);
        let sq = race_fitness_with(PenaltyForm::Squared, 1000.0, 25_000, 50_000, false);
        assert!((sq - 937.5).abs() < 1e-9);
    }

    #[test]
    fn gear_thresholds() {
        assert_eq!(gear_update(70.0, 1), 2);
        assert_eq!(gear_update(230.0, 6), 5);
        assert_eq!(gear_update(60.0, 1), 1);
        for g in 1..=5u8 {
            assert!(UPSHIFT_KMH[g as usize - 1] > DOWNSHIFT_KMH[5 - g as usize]);
        }
    }

    #[test]
    fn neutral_controls_stay_put() {
        let t = straight();
        let p = CarParams::default();
        let mut car = CarState::at(10.0);
        for _ in 0..1000 {
            car = car_step(&car, 0.0, 0.5, &t, &p, DT);
        }
        assert_eq!(car, CarState::at(10.0));
    }

    #[test]
    fn full_throttle_approaches_terminal_speed() {
        let t = straight();
        let p = CarParams::default();
        let vt = p.terminal_speed();
        let mut car = CarState::at(0.0);
        for _ in 0..20_000 {
            let next = car_step(&car, 0.0, 1.0, &t, &p, DT);
            assert!(next.speed > car.speed);
            assert!(next.speed < vt);
            car = next;
        }
        assert_eq!(car.gear, 6);
        assert!(vt - car.speed < 1e-4 * vt, "{} vs {vt}", car.speed);
    }

    #[test]
    fn full_throttle_distance_matches_longitudinal_integration() {
        // explicit Euler of v' = A(gear) - c_d v² with the shift schedule, 50,000 steps
        const ORACLE: f64 = 15373.955912237867;
        let env = Racing::new(straight(), CarParams::default(), DEFAULT_STEPS).unwrap();
        let f = env.run_episode(&Fixed(0.0, 1.0), &[0.0]).unwrap();
        assert!((f - ORACLE).abs() < 1e-9 * ORACLE, "{f}");
    }

    #[test]
    fn sensor_neutral_and_edge_values() {
        let t = straight();
        let p = CarParams::default();
        let s = sensors(&CarState::at(0.0), &t, &p);
        assert_eq!(s, [0.4, 0.4, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let edge = CarState {
            lateral: 6.0,
            ..CarState::at(0.0)
        };
        assert!((sensors(&edge, &t, &p)[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn right_curve_encoding() {
        let t = TrackSpec::new(
            10.0,
            vec![
                (SegmentClass::Right, 2.0 * PI / KAPPA_MAX * 0.5, KAPPA_MAX),
                (SegmentClass::Right, 2.0 * PI / KAPPA_MAX * 0.5, KAPPA_MAX),
            ],
        )
        .unwrap();
        let s = sensors(&CarState::at(1.0), &t, &CarParams { barrier: 1.0, ..Default::default() });
        assert_eq!(&s[4..8], &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(&s[8..12], &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn shipped_track_parses_and_round_trips() {
        let t = TrackSpec::parse(DEFAULT_TRACK).unwrap();
        assert_eq!(t.segments().len(), 12);
        assert!((t.length() - 1725.4).abs() < 1.0);
        assert_eq!(TrackSpec::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn rejects_broken_tracks() {
        use SegmentClass::*;
        assert!(TrackSpec::new(10.0, vec![(Straight, 100.0, 0.0)]).is_err());
        assert!(TrackSpec::new(10.0, vec![(Left, -1.0, 0.1)]).is_err());
        assert!(TrackSpec::new(10.0, vec![(Straight, 10.0, 0.1)]).is_err());
        assert!(TrackSpec::new(30.0, vec![(Left, 2.0 * PI * 10.0, 0.1)]).is_err());
        assert!(TrackSpec::parse("wide 3\nstraight 1 0").is_err());
        assert!(TrackSpec::parse("width 3\nzigzag 1 0").is_err());
    }

    #[test]
    fn segment_lookup_wraps() {
        let t = TrackSpec::parse(DEFAULT_TRACK).unwrap();
        assert_eq!(t.segment_index(0.0), 0);
        assert_eq!(t.segment_index(400.0), 1);
        assert_eq!(t.segment_index(t.length() + 1.0), 0);
        assert_eq!(t.segment_index(-1.0), 11);
    }

    #[test]
    fn zero_controller_scores_zero() {
        let env = Racing::default_track();
        let net = Network::zeros(env.topology());
        assert_eq!(env.run_episode(&net, &[123.0]).unwrap(), 0.0);
    }

    #[test]
    fn mirrored_track_mirrors_the_trajectory() {
        let env = Racing::new(TrackSpec::parse(DEFAULT_TRACK).unwrap(), CarParams::default(), 5000).unwrap();
        let mirror = Racing::new(env.track().mirrored(), CarParams::default(), 5000).unwrap();
        let (fa, a) = env.run_episode_traced(&Fixed(1.0, 0.8), &[300.0]).unwrap();
        let (fb, b) = mirror.run_episode_traced(&Fixed(-1.0, 0.8), &[300.0]).unwrap();
        assert_eq!(fa, fb);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.car.s, y.car.s);
            assert_eq!(x.car.lateral, -y.car.lateral);
            assert_eq!(x.car.heading, -y.car.heading);
            assert_eq!(x.car.speed, y.car.speed);
        }
    }

    #[test]
    fn start_position_does_not_matter_on_a_ring() {
        let k = 0.02;
        let t = TrackSpec::new(12.0, vec![(SegmentClass::Left, 2.0 * PI / k, k)]).unwrap();
        let env = Racing::new(t, CarParams::default(), 2000).unwrap();
        // steering curvature matches the ring
        let ctrl = Fixed(k * 2.6 / 0.5, 0.6);
        let a = env.run_episode(&ctrl, &[0.0]).unwrap();
        let b = env.run_episode(&ctrl, &[100.0]).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-9 * a, "{a} vs {b}");
    }

    #[test]
    fn conditions_are_checked() {
        let env = Racing::default_track();
        let net = Network::zeros(env.topology());
        assert!(env.run_episode(&net, &[-1.0]).is_err());
        assert!(env.run_episode(&net, &[1.0, 2.0]).is_err());
    }
}
