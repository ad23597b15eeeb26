//! Random-waypoint agents in a square arena.
//!
//! Agents alternate between moving in a straight line toward a uniformly
//! drawn waypoint and waiting. Two agents are linked while they are within
//! `r_link` of each other; an agent is pinned while it is inside the control
//! region (boundary included).

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matlin::{Matrix, MetzlerZeroRowSum};
use crate::rng::StreamRng;

/// Closed axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn square(side: f64) -> Self {
        Self { x0: 0.0, y0: 0.0, x1: side, y1: side }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.x0..=self.x1).contains(&p[0]) && (self.y0..=self.y1).contains(&p[1])
    }

    pub fn diameter(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn within(&self, outer: &Rect) -> bool {
        self.x0 >= outer.x0 && self.y0 >= outer.y0 && self.x1 <= outer.x1 && self.y1 <= outer.y1
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    /// Side `W` of the arena `[0, W]²`.
    pub arena_width: f64,
    pub control: Rect,
    pub r_link: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub agents: usize,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            arena_width: 100.0,
            control: Rect::square(50.0),
            r_link: 10.0,
            v_min: 500.0,
            v_max: 1000.0,
            w_min: 0.29,
            w_max: 0.33,
            agents: 10,
        }
    }
}

impl MobilityConfig {
    pub fn arena(&self) -> Rect {
        Rect::square(self.arena_width)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.arena_width, self.r_link, self.v_min, self.v_max, self.w_min, self.w_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("mobility configuration"));
        }
        if !(self.arena_width > 0.0) {
            return Err(Error::Domain("arena width must be positive".into()));
        }
        if !self.control.within(&self.arena()) || self.control.x0 > self.control.x1 || self.control.y0 > self.control.y1
        {
            return Err(Error::Domain("control region must be a rectangle inside the arena".into()));
        }
        if !(self.r_link > 0.0) {
            return Err(Error::Domain("r_link must be positive".into()));
        }
        if !(0.0 < self.v_min && self.v_min <= self.v_max) {
            return Err(Error::Domain(format!("need 0 < v_min ≤ v_max, got {} and {}", self.v_min, self.v_max)));
        }
        if !(0.0 <= self.w_min && self.w_min <= self.w_max) {
            return Err(Error::Domain(format!("need 0 ≤ w_min ≤ w_max, got {} and {}", self.w_min, self.w_max)));
        }
        if self.agents == 0 {
            return Err(Error::Domain("need at least one agent".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Waiting { remaining: f64 },
    Moving,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: [f64; 2],
    pub target: [f64; 2],
    pub speed: f64,
    pub mode: Mode,
}

fn draw_point(arena: &Rect, rng: &mut StreamRng) -> [f64; 2] {
    [rng.random_range(arena.x0..=arena.x1), rng.random_range(arena.y0..=arena.y1)]
}

fn draw_range(lo: f64, hi: f64, rng: &mut StreamRng) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Uniform positions, each agent already moving toward a fresh waypoint.
pub fn initial_agents(cfg: &MobilityConfig, rng: &mut StreamRng) -> Vec<AgentState> {
    let arena = cfg.arena();
    (0..cfg.agents)
        .map(|_| {
            let position = draw_point(&arena, rng);
            AgentState {
                position,
                target: draw_point(&arena, rng),
                speed: draw_range(cfg.v_min, cfg.v_max, rng),
                mode: Mode::Moving,
            }
        })
        .collect()
}

/// Bound on mode changes processed within a single step.
const MAX_PHASES_PER_STEP: usize = 64;

/// Advances every agent by `dt`, carrying leftover time across arrivals and
/// expiries so that a zero wait means no idle time at all.
pub fn rwp_step(agents: &mut [AgentState], cfg: &MobilityConfig, dt: f64, rng: &mut StreamRng) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt = {dt} must be positive")));
    }
    let arena = cfg.arena();
    for a in agents.iter_mut() {
        let mut left = dt;
        for _ in 0..MAX_PHASES_PER_STEP {
            if left <= 0.0 {
                break;
            }
            match a.mode {
                Mode::Moving => {
                    let dx = a.target[0] - a.position[0];
                    let dy = a.target[1] - a.position[1];
                    let dist = dx.hypot(dy);
                    let reach = a.speed * left;
                    if reach >= dist {
                        a.position = a.target;
                        left -= dist / a.speed;
                        a.mode = Mode::Waiting { remaining: draw_range(cfg.w_min, cfg.w_max, rng) };
                    } else {
                        let f = reach / dist;
                        a.position = [a.position[0] + f * dx, a.position[1] + f * dy];
                        left = 0.0;
                    }
                }
                Mode::Waiting { remaining } => {
                    if remaining > left {
                        a.mode = Mode::Waiting { remaining: remaining - left };
                        left = 0.0;
                    } else {
                        left -= remaining;
                        a.target = draw_point(&arena, rng);
                        a.speed = draw_range(cfg.v_min, cfg.v_max, rng);
                        a.mode = Mode::Moving;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Unweighted proximity graph: `l_ij = 1` iff `i ≠ j` and the distance is at
/// most `r_link`; the diagonal balances each row.
pub fn proximity_topology(positions: &[[f64; 2]], r_link: f64) -> MetzlerZeroRowSum {
    let m = positions.len();
    let mut l = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let d = (positions[i][0] - positions[j][0]).hypot(positions[i][1] - positions[j][1]);
            if d <= r_link {
                l[(i, j)] = 1.0;
                l[(j, i)] = 1.0;
                l[(i, i)] -= 1.0;
                l[(j, j)] -= 1.0;
            }
        }
    }
    MetzlerZeroRowSum::rebalanced(l).expect("proximity graph is Metzler with zero row sums")
}

/// Pinning diagonal: 1 inside the closed control region, 0 outside.
pub fn spatial_pinning(positions: &[[f64; 2]], region: &Rect) -> Vec<f64> {
    positions.iter().map(|&p| if region.contains(p) { 1.0 } else { 0.0 }).collect()
}

/// Upper bounds on the expected time for a pair of agents to meet
/// (`w_bound`) and for an agent to enter the control region (`e_bound`):
/// `d/(p v_min) + (1-p) w_max / p`.
pub fn escape_bounds(cfg: &MobilityConfig, p_bar: f64, p_tilde: f64, d: f64, d_tilde: f64) -> Result<(f64, f64)> {
    for (name, p) in [("p̄", p_bar), ("p̃", p_tilde)] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!("{name} = {p} must lie in (0, 1]")));
        }
    }
    if !(cfg.v_min > 0.0) {
        return Err(Error::Domain("v_min must be positive".into()));
    }
    let bound = |dist: f64, p: f64| dist / (p * cfg.v_min) + (1.0 - p) * cfg.w_max / p;
    Ok((bound(d, p_bar), bound(d_tilde, p_tilde)))
}

/// A running agent population.
#[derive(Debug, Clone)]
pub struct Mobility {
    pub config: MobilityConfig,
    pub agents: Vec<AgentState>,
    pub t: f64,
    rng: StreamRng,
}

impl Mobility {
    pub fn new(config: MobilityConfig, mut rng: StreamRng) -> Result<Self> {
        config.validate()?;
        let agents = initial_agents(&config, &mut rng);
        Ok(Self { config, agents, t: 0.0, rng })
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        rwp_step(&mut self.agents, &self.config, dt, &mut self.rng)?;
        self.t += dt;
        Ok(())
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.agents.iter().map(|a| a.position).collect()
    }

    pub fn topology(&self) -> MetzlerZeroRowSum {
        proximity_topology(&self.positions(), self.config.r_link)
    }

    pub fn pinning(&self) -> Vec<f64> {
        spatial_pinning(&self.positions(), &self.config.control)
    }
}

/// Time-averaged pinning and link occupancy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MobilityStats {
    pub samples: usize,
    pinned_sum: f64,
    link_sum: f64,
    pairs: usize,
}

impl MobilityStats {
    pub fn observe(&mut self, positions: &[[f64; 2]], cfg: &MobilityConfig) {
        let m = positions.len();
        self.samples += 1;
        self.pinned_sum += spatial_pinning(positions, &cfg.control).iter().sum::<f64>() / m as f64;
        if m > 1 {
            let l = proximity_topology(positions, cfg.r_link);
            let links: f64 = (0..m).map(|i| -l.matrix()[(i, i)]).sum();
            self.link_sum += links / (m * (m - 1)) as f64;
            self.pairs = m * (m - 1) / 2;
        }
    }

    /// Mean fraction of agents inside the control region.
    pub fn pinned_fraction(&self) -> f64 {
        self.pinned_sum / self.samples.max(1) as f64
    }

    /// Mean fraction of ordered pairs `i ≠ j` that are linked.
    pub fn link_frequency(&self) -> f64 {
        self.link_sum / self.samples.max(1) as f64
    }
}

/// Uniform-density approximation `πr²/W²` of the link frequency.
pub fn uniform_link_frequency(cfg: &MobilityConfig) -> f64 {
    std::f64::consts::PI * cfg.r_link.powi(2) / cfg.arena_width.powi(2)
}

/// Writes `t,agent,x,y,pinned` rows (agents 1-based).
pub struct PositionWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> PositionWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "agent", "x", "y", "pinned"])?;
        Ok(Self { out })
    }

    pub fn write(&mut self, t: f64, positions: &[[f64; 2]], region: &Rect) -> Result<()> {
        for (i, p) in positions.iter().enumerate() {
            let pinned = u8::from(region.contains(*p));
            self.out.write_record([
                t.to_string(),
                (i + 1).to_string(),
                p[0].to_string(),
                p[1].to_string(),
                pinned.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, streams};

    fn agent_at(position: [f64; 2], target: [f64; 2], speed: f64) -> AgentState {
        AgentState { position, target, speed, mode: Mode::Moving }
    }

    #[test]
    fn arrival_snaps_and_waits() {
        let cfg = MobilityConfig { v_min: 1.0, v_max: 10.0, ..Default::default() };
        let mut rng = rng::stream(1, streams::MOBILITY);
        let mut agents = vec![agent_at([0.0, 0.0], [3.0, 4.0], 5.0)];
        rwp_step(&mut agents, &cfg, 1.0, &mut rng).unwrap();
        assert_eq!(agents[0].position, [3.0, 4.0]);
        let Mode::Waiting { remaining } = agents[0].mode else { panic!("expected waiting") };
        assert!((cfg.w_min..=cfg.w_max).contains(&remaining));
    }

    #[test]
    fn partial_move_is_along_segment() {
        let cfg = MobilityConfig { v_min: 1.0, v_max: 10.0, ..Default::default() };
        let mut rng = rng::stream(1, streams::MOBILITY);
        let mut agents = vec![agent_at([0.0, 0.0], [30.0, 40.0], 5.0)];
        rwp_step(&mut agents, &cfg, 1.0, &mut rng).unwrap();
        assert!((agents[0].position[0] - 3.0).abs() < 1e-12);
        assert!((agents[0].position[1] - 4.0).abs() < 1e-12);
        assert_eq!(agents[0].mode, Mode::Moving);
    }

    #[test]
    fn zero_wait_never_idles() {
        let cfg = MobilityConfig { w_min: 0.0, w_max: 0.0, ..Default::default() };
        let mut m = Mobility::new(cfg, rng::stream(3, streams::MOBILITY)).unwrap();
        for _ in 0..2000 {
            m.step(1e-3).unwrap();
            assert!(m.agents.iter().all(|a| a.mode == Mode::Moving));
        }
    }

    #[test]
    fn agents_stay_in_arena_and_are_deterministic() {
        let cfg = MobilityConfig::default();
        let mut a = Mobility::new(cfg.clone(), rng::stream(7, streams::MOBILITY)).unwrap();
        let mut b = Mobility::new(cfg.clone(), rng::stream(7, streams::MOBILITY)).unwrap();
        let arena = cfg.arena();
        for _ in 0..5000 {
            a.step(1e-3).unwrap();
            b.step(1e-3).unwrap();
            assert!(a.positions().iter().all(|&p| arena.contains(p)));
        }
        assert_eq!(a.positions(), b.positions());
        let mut c = Mobility::new(cfg, rng::stream(8, streams::MOBILITY)).unwrap();
        c.step(1e-3).unwrap();
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn proximity_examples() {
        let l = proximity_topology(&[[0.0, 0.0], [5.0, 0.0], [20.0, 0.0]], 10.0);
        let want = Matrix::from_rows(&[[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(l.matrix(), &want);
        let l = proximity_topology(&[[1.0, 1.0]; 4], 10.0);
        for i in 0..4 {
            assert_eq!(l.matrix()[(i, i)], -3.0);
        }
        let l = proximity_topology(&[[0.0, 0.0], [10.0, 0.0]], 10.0);
        assert_eq!(l.matrix()[(0, 1)], 1.0);
    }

    #[test]
    fn pinning_is_closed_region() {
        let region = Rect::square(50.0);
        assert_eq!(spatial_pinning(&[[10.0, 10.0], [60.0, 10.0], [50.0, 50.0]], &region), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn escape_bound_examples() {
        let cfg = MobilityConfig::default();
        let d = 100.0 * 2f64.sqrt();
        let (w, e) = escape_bounds(&cfg, 0.99, 0.99, d, 50.0 * 2f64.sqrt()).unwrap();
        let expected = d / (0.99 * 500.0) + 0.01 * 0.33 / 0.99;
        assert_eq!(w, expected);
        assert!((w - 0.2890).abs() < 5e-5);
        assert!(w < 750.0 * 4e-4);
        assert!(e < w);
        let (w1, _) = escape_bounds(&cfg, 1.0, 1.0, d, d).unwrap();
        assert_eq!(w1, d / 500.0);
        let fast = MobilityConfig { v_min: 1e300, v_max: 1e300, ..cfg.clone() };
        let (wf, _) = escape_bounds(&fast, 0.5, 0.5, d, d).unwrap();
        assert!((wf - 0.33).abs() < 1e-12);
        assert!(escape_bounds(&cfg, 0.0, 0.5, d, d).is_err());
        assert!(escape_bounds(&cfg, 0.5, 0.0, d, d).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = [
            MobilityConfig { r_link: 0.0, ..Default::default() },
            MobilityConfig { v_min: 0.0, ..Default::default() },
            MobilityConfig { v_min: 2000.0, ..Default::default() },
            MobilityConfig { w_min: 0.5, ..Default::default() },
            MobilityConfig { control: Rect { x0: 0.0, y0: 0.0, x1: 150.0, y1: 50.0 }, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        MobilityConfig::default().validate().unwrap();
    }

    #[test]
    fn position_csv_header_and_rows() {
        let mut w = PositionWriter::new(Vec::new()).unwrap();
        w.write(0.5, &[[10.0, 10.0], [60.0, 1.0]], &Rect::square(50.0)).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(text, "t,agent,x,y,pinned\n0.5,1,10,10,1\n0.5,2,60,1,0\n");
    }
}
