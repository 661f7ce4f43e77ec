//! Collective foraging with ten differential-drive robots.
//!
//! Invisible food sits one element per 0.25 m cell of a 5×5 m walled arena.
//! Robots collect an element when their center enters a cell that still
//! holds one, provided their energy is above zero, and drop everything they
//! carry once inside the circular nest. Energy is full inside the nest and
//! drains by 0.01 per 100 ms step outside it. Fitness is the number of
//! elements released in the nest.
//!
//! Each robot senses 36 infrared rays (8 groups of 4 used), a camera
//! reporting red and blue LED coverage in its front-left and front-right 45°
//! sectors, two ground sensors that see the gray nest, and its energy.

use std::f64::consts::{FRAC_PI_4, PI};
use std::io::{self, Write};

use serde::Deserialize;

use super::{check_conditions, EnvError, Environment};
use crate::net::{Controller, NetworkTopology};
use crate::protocol::ConditionRanges;

pub const ARENA: f64 = 5.0;
pub const ROBOTS: usize = 10;
pub const ROBOT_RADIUS: f64 = 0.17;
pub const NEST_RADIUS: f64 = 0.4;
/// Minimum distance between the nest center and any wall.
pub const NEST_MARGIN: f64 = 1.0;
pub const CELLS_PER_SIDE: usize = 20;
pub const CELL: f64 = ARENA / CELLS_PER_SIDE as f64;
pub const FOOD_TOTAL: usize = CELLS_PER_SIDE * CELLS_PER_SIDE;
pub const DT: f64 = 0.1;
pub const DEFAULT_STEPS: usize = 1000;
pub const MAX_WHEEL_SPEED: f64 = 0.3;
pub const AXLE: f64 = 0.29;
pub const IR_RAYS: usize = 36;
pub const IR_RANGE: f64 = 0.15;
pub const GROUND_OFFSET: f64 = 0.1;
/// Energy is kept as whole steps of autonomy.
pub const ENERGY_TICKS: u32 = 100;
pub const N_SENSORS: usize = 15;

const CAMERA_BINS: usize = 45;

#[derive(Debug, Clone, PartialEq)]
pub struct Robot {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    energy_ticks: u32,
    pub carried: u32,
    /// Front LEDs lit red.
    pub red: bool,
    /// Rear LEDs lit blue.
    pub blue: bool,
    cell: usize,
}

impl Robot {
    pub fn energy(&self) -> f64 {
        f64::from(self.energy_ticks) / f64::from(ENERGY_TICKS)
    }
}

fn cell_of(x: f64, y: f64) -> usize {
    let idx = |v: f64| ((v / CELL).floor().max(0.0) as usize).min(CELLS_PER_SIDE - 1);
    idx(y) * CELLS_PER_SIDE + idx(x)
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Distance along a unit ray from `(ox, oy)` to the near side of a circle, if hit.
fn ray_circle(ox: f64, oy: f64, dx: f64, dy: f64, cx: f64, cy: f64, r: f64) -> Option<f64> {
    let (fx, fy) = (ox - cx, oy - cy);
    let b = fx * dx + fy * dy;
    let c = fx * fx + fy * fy - r * r;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

/// Distance along a unit ray from inside the arena to the nearest wall.
fn ray_walls(ox: f64, oy: f64, dx: f64, dy: f64) -> f64 {
    let along = |o: f64, d: f64| {
        if d > 0.0 {
            (ARENA - o) / d
        } else if d < 0.0 {
            -o / d
        } else {
            f64::INFINITY
        }
    };
    along(ox, dx).min(along(oy, dy))
}

/// Indices of the four rays forming IR group `g` (centered on `g · 45°`).
/// Rays sit at `5° + 10° k`; a group takes the rays in `[g·45° - 20°, g·45° + 20°)`.
pub fn ir_group(g: usize) -> [usize; 4] {
    let center = g as f64 * 45.0;
    let first = ((center - 20.0 - 5.0) / 10.0).ceil() as i64;
    std::array::from_fn(|i| (first + i as i64).rem_euclid(IR_RAYS as i64) as usize)
}

fn ray_angle(k: usize) -> f64 {
    (5.0 + 10.0 * k as f64).to_radians()
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub nest: (f64, f64),
    pub robots: Vec<Robot>,
    food: Vec<bool>,
    pub released: u32,
}

impl World {
    /// Builds a world from explicit robot poses. Overlapping robots or robots
    /// touching walls are rejected.
    pub fn new(nest: (f64, f64), poses: &[(f64, f64, f64)]) -> Result<Self, EnvError> {
        let lo = NEST_MARGIN;
        let hi = ARENA - NEST_MARGIN;
        if !(lo..=hi).contains(&nest.0) || !(lo..=hi).contains(&nest.1) {
            return Err(EnvError::Setup(format!("nest {nest:?} closer than 1 m to a wall")));
        }
        for (i, a) in poses.iter().enumerate() {
            let inside = |v: f64| (ROBOT_RADIUS..=ARENA - ROBOT_RADIUS).contains(&v);
            if !(inside(a.0) && inside(a.1) && a.2.is_finite()) {
                return Err(EnvError::Setup(format!("robot {i} at {a:?} leaves the arena")));
            }
            for b in &poses[..i] {
                if (a.0 - b.0).hypot(a.1 - b.1) < 2.0 * ROBOT_RADIUS {
                    return Err(EnvError::Setup(format!("robot {i} overlaps another")));
                }
            }
        }
        let mut world = World {
            nest,
            robots: poses
                .iter()
                .map(|&(x, y, heading)| Robot {
                    x,
                    y,
                    heading,
                    energy_ticks: ENERGY_TICKS,
                    carried: 0,
                    red: false,
                    blue: false,
                    cell: cell_of(x, y),
                })
                .collect(),
            food: vec![true; FOOD_TOTAL],
            released: 0,
        };
        for i in 0..world.robots.len() {
            world.release(i);
        }
        Ok(world)
    }

    /// Builds a world from a condition row: nest center, then `(dx, dy,
    /// heading)` per robot relative to the nest. Overlaps are removed by a
    /// symmetric push-apart relaxation.
    pub fn from_conditions(row: &[f64]) -> Result<Self, EnvError> {
        let nest = (row[0], row[1]);
        let mut pos: Vec<(f64, f64)> = row[2..]
            .chunks(3)
            .map(|c| (nest.0 + c[0], nest.1 + c[1]))
            .collect();
        separate(&mut pos);
        let poses: Vec<(f64, f64, f64)> = pos
            .iter()
            .zip(row[2..].chunks(3))
            .map(|(&(x, y), c)| (x, y, c[2]))
            .collect();
        World::new(nest, &poses)
    }

    pub fn food_in_cells(&self) -> usize {
        self.food.iter().filter(|f| **f).count()
    }

    pub fn carried(&self) -> u32 {
        self.robots.iter().map(|r| r.carried).sum()
    }

    pub fn has_food(&self, cell: usize) -> bool {
        self.food[cell]
    }

    pub fn in_nest(&self, x: f64, y: f64) -> bool {
        (x - self.nest.0).hypot(y - self.nest.1) <= NEST_RADIUS
    }

    fn release(&mut self, i: usize) {
        let r = &self.robots[i];
        if self.in_nest(r.x, r.y) {
            self.released += r.carried;
            let r = &mut self.robots[i];
            r.carried = 0;
            r.energy_ticks = ENERGY_TICKS;
        }
    }

    /// Sensor vector of robot `i`: 8 IR groups, camera (red-left, blue-left,
    /// red-right, blue-right), ground (left, right), energy.
    pub fn sense(&self, i: usize) -> [f64; N_SENSORS] {
        let me = &self.robots[i];
        let mut out = [0.0; N_SENSORS];

        let mut rays = [0.0; IR_RAYS];
        for (k, ray) in rays.iter_mut().enumerate() {
            let (dy, dx) = (me.heading + ray_angle(k)).sin_cos();
            let mut dist = ray_walls(me.x, me.y, dx, dy);
            for (j, other) in self.robots.iter().enumerate() {
                if j != i {
                    if let Some(t) = ray_circle(me.x, me.y, dx, dy, other.x, other.y, ROBOT_RADIUS) {
                        dist = dist.min(t);
                    }
                }
            }
            let gap = (dist - ROBOT_RADIUS).max(0.0);
            *ray = (1.0 - gap / IR_RANGE).max(0.0);
        }
        for (g, o) in out[..8].iter_mut().enumerate() {
            *o = ir_group(g).iter().map(|&k| rays[k]).sum::<f64>() / 4.0;
        }

        // bins 0..45 cover the right sector, 45..90 the left one
        let mut red = [false; 2 * CAMERA_BINS];
        let mut blue = [false; 2 * CAMERA_BINS];
        for (j, other) in self.robots.iter().enumerate() {
            if j == i || !(other.red || other.blue) {
                continue;
            }
            let (rx, ry) = (other.x - me.x, other.y - me.y);
            let d = rx.hypot(ry);
            let bearing = wrap(ry.atan2(rx) - me.heading);
            let half = (ROBOT_RADIUS / d).min(1.0).asin();
            if bearing.abs() > FRAC_PI_4 + half {
                continue;
            }
            let (oy, ox) = other.heading.sin_cos();
            for b in 0..2 * CAMERA_BINS {
                let phi = (b as f64 + 0.5 - CAMERA_BINS as f64).to_radians();
                if wrap(phi - bearing).abs() > half {
                    continue;
                }
                let (dy, dx) = (me.heading + phi).sin_cos();
                if let Some(t) = ray_circle(me.x, me.y, dx, dy, other.x, other.y, ROBOT_RADIUS) {
                    let (hx, hy) = (me.x + t * dx - other.x, me.y + t * dy - other.y);
                    if hx * ox + hy * oy >= 0.0 {
                        red[b] |= other.red;
                    } else {
                        blue[b] |= other.blue;
                    }
                }
            }
        }
        let frac = |bins: &[bool]| bins.iter().filter(|v| **v).count() as f64 / CAMERA_BINS as f64;
        out[8] = frac(&red[CAMERA_BINS..]);
        out[9] = frac(&blue[CAMERA_BINS..]);
        out[10] = frac(&red[..CAMERA_BINS]);
        out[11] = frac(&blue[..CAMERA_BINS]);

        let (s, c) = me.heading.sin_cos();
        let ground = |side: f64| {
            let (gx, gy) = (me.x - side * GROUND_OFFSET * s, me.y + side * GROUND_OFFSET * c);
            f64::from(u8::from(self.in_nest(gx, gy)))
        };
        out[12] = ground(1.0);
        out[13] = ground(-1.0);
        out[14] = me.energy();
        out
    }

    /// Advances the world by one 100 ms step. `controls[i]` holds robot `i`'s
    /// motors: left wheel, right wheel, red front LEDs, blue rear LEDs.
    pub fn step(&mut self, controls: &[[f64; 4]]) {
        assert_eq!(controls.len(), self.robots.len(), "one control row per robot");
        let r_min = ROBOT_RADIUS;
        let r_max = ARENA - ROBOT_RADIUS;
        let mut proposed = Vec::with_capacity(self.robots.len());
        for (r, m) in self.robots.iter_mut().zip(controls) {
            let m = m.map(|v| v.clamp(0.0, 1.0));
            let left = (2.0 * m[0] - 1.0) * MAX_WHEEL_SPEED;
            let right = (2.0 * m[1] - 1.0) * MAX_WHEEL_SPEED;
            let v = 0.5 * (left + right);
            let omega = (right - left) / AXLE;
            let mid = r.heading + 0.5 * omega * DT;
            r.heading = wrap(r.heading + omega * DT);
            r.red = m[2] > 0.5;
            r.blue = m[3] > 0.5;
            proposed.push((
                (r.x + v * mid.cos() * DT).clamp(r_min, r_max),
                (r.y + v * mid.sin() * DT).clamp(r_min, r_max),
            ));
        }

        // Cancel the translation of every robot that would overlap another.
        // Cancelled robots return to non-overlapping positions, so this settles.
        let mut blocked = vec![false; self.robots.len()];
        loop {
            let mut changed = false;
            for i in 0..proposed.len() {
                for j in i + 1..proposed.len() {
                    let (a, b) = (proposed[i], proposed[j]);
                    if (a.0 - b.0).hypot(a.1 - b.1) < 2.0 * ROBOT_RADIUS {
                        for k in [i, j] {
                            if !blocked[k] {
                                blocked[k] = true;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
            for (k, p) in proposed.iter_mut().enumerate() {
                if blocked[k] {
                    *p = (self.robots[k].x, self.robots[k].y);
                }
            }
        }

        let mut entering: Vec<(usize, usize)> = Vec::new();
        for (i, (r, &(x, y))) in self.robots.iter_mut().zip(&proposed).enumerate() {
            r.x = x;
            r.y = y;
            let inside = (x - self.nest.0).hypot(y - self.nest.1) <= NEST_RADIUS;
            r.energy_ticks = if inside {
                ENERGY_TICKS
            } else {
                r.energy_ticks.saturating_sub(1)
            };
            let cell = cell_of(x, y);
            if cell != r.cell && r.energy_ticks > 0 && self.food[cell] {
                entering.push((cell, i));
            }
            r.cell = cell;
        }
        // Several robots entering the same cell: the one with the smallest
        // (x, y) takes the food.
        let robots = &self.robots;
        entering.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(robots[a.1].x.total_cmp(&robots[b.1].x))
                .then(robots[a.1].y.total_cmp(&robots[b.1].y))
        });
        for (cell, i) in entering {
            if self.food[cell] {
                self.food[cell] = false;
                self.robots[i].carried += 1;
            }
        }
        for i in 0..self.robots.len() {
            self.release(i);
        }
    }
}

/// Pushes overlapping discs apart until none overlap, moving every pair
/// symmetrically from the same snapshot so the result does not depend on
/// robot order.
fn separate(pos: &mut [(f64, f64)]) {
    let target = 2.0 * ROBOT_RADIUS + 1e-3;
    let lo = ROBOT_RADIUS;
    let hi = ARENA - ROBOT_RADIUS;
    for p in pos.iter_mut() {
        *p = (p.0.clamp(lo, hi), p.1.clamp(lo, hi));
    }
    for _ in 0..10_000 {
        let mut shift = vec![(0.0, 0.0); pos.len()];
        let mut overlap = false;
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                let (dx, dy) = (pos[j].0 - pos[i].0, pos[j].1 - pos[i].1);
                let d = dx.hypot(dy);
                if d < target {
                    overlap = true;
                    let (ux, uy) = if d > 1e-12 { (dx / d, dy / d) } else { (1.0, 0.0) };
                    let push = 0.5 * (target - d) + 1e-6;
                    shift[i].0 -= ux * push;
                    shift[i].1 -= uy * push;
                    shift[j].0 += ux * push;
                    shift[j].1 += uy * push;
                }
            }
        }
        if !overlap {
            return;
        }
        for (p, s) in pos.iter_mut().zip(&shift) {
            *p = ((p.0 + s.0).clamp(lo, hi), (p.1 + s.1).clamp(lo, hi));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmFrame {
    pub step: usize,
    pub robots: Vec<Robot>,
    pub released: u32,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmConfig {
    pub steps: usize,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            steps: DEFAULT_STEPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Swarm {
    steps: usize,
}

impl Default for Swarm {
    fn default() -> Self {
        Swarm {
            steps: DEFAULT_STEPS,
        }
    }
}

impl Swarm {
    pub fn new(steps: usize) -> Result<Self, EnvError> {
        if steps == 0 {
            return Err(EnvError::Setup("episode needs at least one step".into()));
        }
        Ok(Swarm { steps })
    }

    pub fn from_config(config: &SwarmConfig) -> Result<Self, EnvError> {
        Swarm::new(config.steps)
    }

    fn simulate<C: Controller + Clone>(
        &self,
        controller: &C,
        conditions: &[f64],
        mut frames: Option<&mut Vec<SwarmFrame>>,
    ) -> Result<f64, EnvError> {
        check_conditions(&self.condition_ranges(), conditions)?;
        let mut world = World::from_conditions(conditions)?;
        let mut brains: Vec<C> = (0..ROBOTS)
            .map(|_| {
                let mut c = controller.clone();
                c.reset();
                c
            })
            .collect();
        let mut controls = vec![[0.5; 4]; ROBOTS];
        for step in 0..self.steps {
            for (i, (brain, m)) in brains.iter_mut().zip(controls.iter_mut()).enumerate() {
                brain.act(&world.sense(i), m);
            }
            world.step(&controls);
            if let Some(f) = frames.as_deref_mut() {
                f.push(SwarmFrame {
                    step,
                    robots: world.robots.clone(),
                    released: world.released,
                });
            }
        }
        Ok(f64::from(world.released))
    }

    pub fn run_episode_traced<C: Controller + Clone>(
        &self,
        controller: &C,
        conditions: &[f64],
    ) -> Result<(f64, Vec<SwarmFrame>), EnvError> {
        let mut frames = Vec::with_capacity(self.steps);
        let f = self.simulate(controller, conditions, Some(&mut frames))?;
        Ok((f, frames))
    }
}

impl Environment for Swarm {
    fn name(&self) -> &'static str {
        "swarm"
    }

    fn topology(&self) -> NetworkTopology {
        NetworkTopology::new(N_SENSORS, 10, 4).expect("non-zero counts")
    }

    fn condition_ranges(&self) -> ConditionRanges {
        let mut b = vec![(NEST_MARGIN, ARENA - NEST_MARGIN); 2];
        for _ in 0..ROBOTS {
            b.extend([(-0.5, 0.5), (-0.5, 0.5), (-PI, PI)]);
        }
        ConditionRanges::new(b).expect("constant ranges")
    }

    fn run_episode<C: Controller + Clone>(
        &self,
        controller: &C,
        conditions: &[f64],
    ) -> Result<f64, EnvError> {
        self.simulate(controller, conditions, None)
    }
}

/// Replay CSV, one row per robot per step.
pub fn write_replay_csv<W: Write>(mut out: W, frames: &[SwarmFrame]) -> io::Result<()> {
    writeln!(out, "step,robot,x,y,heading,red,blue,energy,carried,released")?;
    for f in frames {
        for (i, r) in f.robots.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                f.step,
                i,
                r.x,
                r.y,
                r.heading,
                u8::from(r.red),
                u8::from(r.blue),
                r.energy(),
                r.carried,
                f.released
            )?;
        }
    }
    Ok(())
}
