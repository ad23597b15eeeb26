//! Finite-state continuous-time Markov chains.
//!
//! A chain is described by its generator `Q` (off-diagonal rates, diagonal
//! `-q_i`). The embedded jump chain is `p_ij = q_ij / q_i` and sojourns in
//! state `i` are `Exp(q_i)`. The invariant distribution is obtained from the
//! embedded stationary vector weighted by mean sojourn time, and is checked
//! against `πQ = 0` directly.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matlin::{self, Matrix, MetzlerZeroRowSum};
use crate::rng::{self, streams, StreamRng};

/// Jump-destination matrix: row-stochastic with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedChain(Matrix);

impl EmbeddedChain {
    pub fn new(p: Matrix) -> Result<Self> {
        if !p.is_square() || p.rows() == 0 {
            return Err(Error::Dimension(format!("transition matrix is {}x{}", p.rows(), p.cols())));
        }
        for i in 0..p.rows() {
            if p[(i, i)] != 0.0 {
                return Err(Error::Validation(format!("transition matrix diagonal ({0},{0}) is nonzero", i + 1)));
            }
            if p.row(i).iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Validation(format!("row {} has entries outside [0,1]", i + 1)));
            }
            let sum: f64 = p.row(i).iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("transition row {} sums to {sum}", i + 1)));
            }
        }
        Ok(Self(p))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn states(&self) -> usize {
        self.0.rows()
    }

    /// Irreducible and aperiodic. Primitivity uses Wielandt's bound: an
    /// irreducible nonnegative matrix is primitive iff its `((N-1)²+1)`-th
    /// power is positive.
    pub fn check_primitive(&self) -> Result<()> {
        let p = &self.0;
        let n = p.rows();
        if !matlin::support_strongly_connected(n, |from, to| p[(from, to)] > 0.0) {
            return Err(Error::Ergodicity("embedded chain is reducible".into()));
        }
        let support: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| p[(i, j)] > 0.0).collect()).collect();
        let mut power = support.clone();
        let exponent = (n - 1) * (n - 1) + 1;
        for _ in 1..exponent {
            if power.iter().flatten().all(|&b| b) {
                break;
            }
            power = (0..n).map(|i| (0..n).map(|j| (0..n).any(|k| power[i][k] && support[k][j])).collect()).collect();
        }
        if power.iter().flatten().all(|&b| b) {
            Ok(())
        } else {
            Err(Error::Ergodicity("embedded chain is periodic".into()))
        }
    }
}

/// Rate matrix of a continuous-time chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGenerator(Matrix);

impl MarkovGenerator {
    /// Validates off-diagonal rates `≥ 0`, zero row sums within
    /// `1e-12·max rate`, and `q_i > 0` for every state.
    pub fn new(q: Matrix) -> Result<Self> {
        if !q.is_square() || q.rows() == 0 {
            return Err(Error::Dimension(format!("generator is {}x{}", q.rows(), q.cols())));
        }
        let scale = q.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..q.rows() {
            if q[(i, i)] >= 0.0 {
                return Err(Error::Domain(format!("state {} has nonpositive exit rate", i + 1)));
            }
            for j in 0..q.cols() {
                if i != j && q[(i, j)] < 0.0 {
                    return Err(Error::Validation(format!("negative rate at ({}, {})", i + 1, j + 1)));
                }
            }
            let sum: f64 = q.row(i).iter().sum();
            if sum.abs() > 1e-12 * scale {
                return Err(Error::Validation(format!("generator row {} sums to {sum}", i + 1)));
            }
        }
        Ok(Self(q))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn states(&self) -> usize {
        self.0.rows()
    }

    /// Exit rates `q_i = -q_ii`.
    pub fn rates(&self) -> Vec<f64> {
        self.0.diagonal().into_iter().map(|v| -v).collect()
    }

    pub fn max_rate(&self) -> f64 {
        self.rates().into_iter().fold(0.0, f64::max)
    }

    pub fn embedded(&self) -> EmbeddedChain {
        let n = self.states();
        let rates = self.rates();
        let mut p = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    p[(i, j)] = self.0[(i, j)] / rates[i];
                }
            }
        }
        EmbeddedChain(p)
    }
}

/// `q_ij = q_i p_ij` off the diagonal and `q_ii = -Σ_{j≠i} q_ij`, so rows sum
/// to zero exactly.
pub fn assemble_generator(p: &EmbeddedChain, rates: &[f64]) -> Result<MarkovGenerator> {
    let n = p.states();
    if rates.len() != n {
        return Err(Error::Dimension(format!("{} rates for {n} states", rates.len())));
    }
    if let Some(i) = rates.iter().position(|&q| !(q > 0.0 && q.is_finite())) {
        return Err(Error::Domain(format!("rate q_{} = {} must be positive", i + 1, rates[i])));
    }
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i != j {
                let v = rates[i] * p.matrix()[(i, j)];
                q[(i, j)] = v;
                off += v;
            }
        }
        q[(i, i)] = -off;
    }
    MarkovGenerator::new(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantDistribution {
    /// Stationary occupancy of the continuous-time chain, `πQ = 0`.
    pub pi: Vec<f64>,
    /// Stationary vector of the embedded chain, `π̄ = π̄P`.
    pub embedded: Vec<f64>,
}

fn stationary_of_zero_row_sum(m: Matrix) -> Result<Vec<f64>> {
    let metzler = MetzlerZeroRowSum::rebalanced(m)?;
    let p = matlin::left_null_vector(&metzler)?;
    Ok(p.into_iter().map(|v| v.max(0.0)).collect())
}

/// Stationary vector of a row-stochastic matrix (null space of `Pᵀ - I`).
pub fn embedded_stationary(p: &EmbeddedChain) -> Result<Vec<f64>> {
    let n = p.states();
    let mut m = p.matrix().clone();
    m.axpy(-1.0, &Matrix::identity(n))?;
    stationary_of_zero_row_sum(m)
}

/// Requires a primitive embedded chain. Builds `π_j ∝ π̄_j / q_j` and verifies
/// `‖πQ‖∞ ≤ 1e-9·max rate`.
pub fn invariant_distribution(q: &MarkovGenerator) -> Result<InvariantDistribution> {
    if q.states() < 2 {
        return Err(Error::Ergodicity("a single-state chain has no positive exit rate".into()));
    }
    let embedded_chain = q.embedded();
    embedded_chain.check_primitive()?;
    let embedded = embedded_stationary(&embedded_chain)?;
    let rates = q.rates();
    let weights: Vec<f64> = embedded.iter().zip(&rates).map(|(p, r)| p / r).collect();
    let total: f64 = weights.iter().sum();
    let pi: Vec<f64> = weights.iter().map(|w| w / total).collect();

    let residual = left_residual(q.matrix(), &pi);
    if residual > 1e-9 * q.max_rate() {
        return Err(Error::Numeric(format!("invariant distribution residual ‖πQ‖∞ = {residual:e}")));
    }
    Ok(InvariantDistribution { pi, embedded })
}

/// `πQ = 0` solved directly on the generator, without the embedded chain.
pub fn invariant_distribution_direct(q: &MarkovGenerator) -> Result<Vec<f64>> {
    stationary_of_zero_row_sum(q.matrix().clone())
}

fn left_residual(m: &Matrix, v: &[f64]) -> f64 {
    (0..m.cols()).map(|j| (0..m.rows()).map(|i| v[i] * m[(i, j)]).sum::<f64>().abs()).fold(0.0, f64::max)
}

/// `π0 · P^k`
pub fn kstep_distribution(p: &EmbeddedChain, pi0: &[f64], k: usize) -> Result<Vec<f64>> {
    let pt = p.matrix().transpose();
    let mut dist = pi0.to_vec();
    for _ in 0..k {
        dist = pt.mul_vec(&dist)?;
    }
    Ok(dist)
}

/// Where a sampled path starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    State(usize),
    Distribution(Vec<f64>),
}

/// Piecewise-constant trajectory of the chain on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchPath {
    /// `(state, entry_time)`, entry times strictly increasing from 0.
    pub jumps: Vec<(usize, f64)>,
    pub horizon: f64,
}

impl SwitchPath {
    /// A path that stays in `state` forever.
    pub fn constant(state: usize, horizon: f64) -> Self {
        Self { jumps: vec![(state, 0.0)], horizon }
    }

    pub fn state_at(&self, t: f64) -> usize {
        let idx = self.jumps.partition_point(|&(_, entry)| entry <= t);
        self.jumps[idx.saturating_sub(1)].0
    }

    /// Jump times after the initial entry.
    pub fn jump_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.jumps.iter().skip(1).map(|&(_, t)| t)
    }

    /// Time spent in each of `n` states, divided by the horizon.
    pub fn occupancy(&self, n: usize) -> Vec<f64> {
        let mut occ = vec![0.0; n];
        for (k, &(s, entry)) in self.jumps.iter().enumerate() {
            let exit = self.jumps.get(k + 1).map_or(self.horizon, |&(_, t)| t).min(self.horizon);
            if exit > entry {
                occ[s] += exit - entry;
            }
        }
        occ.iter_mut().for_each(|o| *o /= self.horizon);
        occ
    }

    /// Per-state completed sojourns and jump counts (the last, censored
    /// sojourn is excluded).
    pub fn stats(&self, n: usize) -> PathStats {
        let mut sojourn_sum = vec![0.0; n];
        let mut visits = vec![0usize; n];
        let mut transitions = vec![vec![0usize; n]; n];
        for pair in self.jumps.windows(2) {
            let ((from, t0), (to, t1)) = (pair[0], pair[1]);
            sojourn_sum[from] += t1 - t0;
            visits[from] += 1;
            transitions[from][to] += 1;
        }
        PathStats { sojourn_sum, visits, transitions }
    }

    /// CSV with header `entry_time,state`; states are written 1-based.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["entry_time", "state"])?;
        for &(s, t) in &self.jumps {
            out.write_record([format!("{t}"), format!("{}", s + 1)])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathStats {
    pub sojourn_sum: Vec<f64>,
    pub visits: Vec<usize>,
    pub transitions: Vec<Vec<usize>>,
}

impl PathStats {
    pub fn mean_sojourn(&self, state: usize) -> f64 {
        self.sojourn_sum[state] / self.visits[state] as f64
    }
}

/// Exact jump-by-jump sampler: `Exp(q_i)` sojourns by inverse CDF, next
/// state from row `i` of the embedded chain.
pub struct JumpSampler {
    rates: Vec<f64>,
    embedded: EmbeddedChain,
    rng: StreamRng,
    state: usize,
    clock: f64,
}

impl JumpSampler {
    pub fn new(q: &MarkovGenerator, initial: &InitialState, mut rng: StreamRng) -> Result<Self> {
        let n = q.states();
        let state = match initial {
            InitialState::State(s) if *s < n => *s,
            InitialState::State(s) => return Err(Error::Dimension(format!("initial state {} of {n}", s + 1))),
            InitialState::Distribution(d) => {
                if d.len() != n {
                    return Err(Error::Dimension(format!("initial distribution of length {}", d.len())));
                }
                draw_categorical(&mut rng, d)
            }
        };
        Ok(Self { rates: q.rates(), embedded: q.embedded(), rng, state, clock: 0.0 })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Draws the sojourn in the current state and the next state; returns
    /// `(next_state, jump_time)` and advances.
    pub fn next_jump(&mut self) -> (usize, f64) {
        let u: f64 = 1.0 - self.rng.random::<f64>();
        self.clock += -u.ln() / self.rates[self.state];
        self.state = draw_categorical(&mut self.rng, self.embedded.matrix().row(self.state));
        (self.state, self.clock)
    }
}

fn draw_categorical(rng: &mut StreamRng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}

/// Samples a path on `[0, horizon]`, deterministic in `seed`.
pub fn sample_path(q: &MarkovGenerator, initial: &InitialState, horizon: f64, seed: u64) -> Result<SwitchPath> {
    sample_path_with(q, initial, horizon, rng::stream(seed, streams::SWITCHING))
}

pub fn sample_path_with(
    q: &MarkovGenerator,
    initial: &InitialState,
    horizon: f64,
    rng: StreamRng,
) -> Result<SwitchPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon {horizon} must be positive")));
    }
    let mut sampler = JumpSampler::new(q, initial, rng)?;
    let mut jumps = vec![(sampler.state(), 0.0)];
    loop {
        let (s, t) = sampler.next_jump();
        if t > horizon {
            break;
        }
        jumps.push((s, t));
    }
    Ok(SwitchPath { jumps, horizon })
}

/// Samples exactly `count` jumps; the horizon is the last jump time.
pub fn sample_jumps(q: &MarkovGenerator, initial: &InitialState, count: usize, seed: u64) -> Result<SwitchPath> {
    let mut sampler = JumpSampler::new(q, initial, rng::stream(seed, streams::SWITCHING))?;
    let mut jumps = Vec::with_capacity(count + 1);
    jumps.push((sampler.state(), 0.0));
    for _ in 0..count {
        jumps.push(sampler.next_jump());
    }
    let horizon = jumps.last().map_or(0.0, |&(_, t)| t);
    Ok(SwitchPath { jumps, horizon })
}
