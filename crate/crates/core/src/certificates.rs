//! Stabilization certificates for the switched pinned network.
//!
//! * Slow switching: for each Markov state `i` the matrix
//!   `sym(P_i[αI + κL(i) - κεC(i)] ⊗ GΓ) + Σ_j q_ij P_j ⊗ G` must be negative
//!   semidefinite. [`slow_switching_check`] evaluates it for given weights and
//!   [`decay_rate`] returns the guaranteed mean-square rate.
//! * Perron weights: when every `L(i)` is strongly connected, the diagonal of
//!   its positive left null vector gives admissible weights
//!   ([`perron_weights`]) and a per-state ceiling on the exit rate
//!   ([`perron_rate_bound`]).
//! * Fast switching: constants `K1..K4`, `ρ` built around the averaged
//!   network ([`fast_constants`]), the window condition on `Δ`
//!   ([`delta_condition`]) and its largest admissible `Δ`
//!   ([`feasible_delta`]).
//!
//! Semidefiniteness is accepted when `λ_max ≤ 1e-9·max(1, ‖M‖∞)`.

use crate::error::{Error, Result};
use crate::matlin::{self, kron, symmetric_part, Matrix, MetzlerZeroRowSum, Tolerances};
use crate::report::Section;
use crate::switchnet::{CouplingParams, SwitchedTopology};

/// Positive diagonal Lyapunov weights, one diagonal per Markov state.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovWeights(Vec<Vec<f64>>);

impl LyapunovWeights {
    pub fn new(diagonals: Vec<Vec<f64>>) -> Result<Self> {
        if diagonals.is_empty() {
            return Err(Error::Validation("no weights given".into()));
        }
        let m = diagonals[0].len();
        for (i, d) in diagonals.iter().enumerate() {
            if d.len() != m {
                return Err(Error::Dimension(format!("weight {} has {} entries, expected {m}", i + 1, d.len())));
            }
            if d.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::Domain(format!("weight {} is not positive definite", i + 1)));
            }
        }
        Ok(Self(diagonals))
    }

    /// `P_i = I_m` for every state.
    pub fn identity(states: usize, nodes: usize) -> Self {
        Self(vec![vec![1.0; nodes]; states])
    }

    pub fn states(&self) -> usize {
        self.0.len()
    }

    pub fn nodes(&self) -> usize {
        self.0[0].len()
    }

    pub fn diagonal(&self, state: usize) -> &[f64] {
        &self.0[state]
    }

    pub fn matrix(&self, state: usize) -> Matrix {
        Matrix::from_diag(&self.0[state])
    }

    fn max_entry(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }

    fn min_entry(&self) -> f64 {
        self.0.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

/// `αI + κL - κεC` for one state.
fn closed_loop(l: &Matrix, pins: &[f64], alpha: f64, cp: CouplingParams) -> Result<Matrix> {
    let mut a = l.scale(cp.kappa);
    for (i, &c) in pins.iter().enumerate() {
        a[(i, i)] += alpha - cp.kappa * cp.epsilon * c;
    }
    Ok(a)
}

/// Left-multiplies by a diagonal matrix.
fn diag_mul(d: &[f64], a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            out[(i, j)] *= d[i];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlowCertificate {
    /// `λ_max` of the per-state matrix.
    pub lambda_max: Vec<f64>,
    /// Acceptance threshold used for each state.
    pub tolerance: Vec<f64>,
    pub pass: bool,
    /// Guaranteed mean-square rate `δ` (only meaningful when `pass`).
    pub decay_rate: f64,
}

impl SlowCertificate {
    pub fn to_section(&self, name: &str) -> Section {
        let mut s = Section::new(name);
        s.push("pass", self.pass);
        for (i, v) in self.lambda_max.iter().enumerate() {
            s.push(format!("lambda_max.{}", i + 1), v);
        }
        s.push("decay_rate", self.decay_rate);
        s
    }
}

fn check_dims(topo: &SwitchedTopology, weights: &LyapunovWeights, g: &Matrix, gamma: &Matrix) -> Result<()> {
    if weights.states() != topo.states() || weights.nodes() != topo.nodes() {
        return Err(Error::Dimension(format!(
            "weights are {}x{} (states x nodes), topology is {}x{}",
            weights.states(),
            weights.nodes(),
            topo.states(),
            topo.nodes()
        )));
    }
    if !g.is_square() || g.rows() != gamma.rows() || !gamma.is_square() {
        return Err(Error::Dimension("G and Γ must be square of the same size".into()));
    }
    Ok(())
}

/// Per-state negative semidefiniteness of
/// `sym(P_i[αI+κL(i)-κεC(i)] ⊗ GΓ) + Σ_j q_ij P_j ⊗ G`.
///
/// `rates` is the `N×N` rate matrix; the all-zero matrix (a frozen chain) is
/// accepted.
#[allow(clippy::too_many_arguments)]
pub fn slow_switching_check(
    topo: &SwitchedTopology,
    weights: &LyapunovWeights,
    rates: &Matrix,
    alpha: f64,
    beta: f64,
    cp: CouplingParams,
    g: &Matrix,
    gamma: &Matrix,
    tol: Tolerances,
) -> Result<SlowCertificate> {
    check_dims(topo, weights, g, gamma)?;
    let states = topo.states();
    if rates.rows() != states || rates.cols() != states {
        return Err(Error::Dimension(format!("rate matrix must be {states}x{states}")));
    }
    let g_gamma = g.matmul(gamma)?;
    let weighted_g: Vec<Matrix> = (0..states).map(|j| kron(&weights.matrix(j), g)).collect();

    let mut lambda_max = Vec::with_capacity(states);
    let mut tolerance = Vec::with_capacity(states);
    for i in 0..states {
        let a = closed_loop(topo.coupling(i).matrix(), topo.pinning(i), alpha, cp)?;
        let mut m = symmetric_part(&kron(&diag_mul(weights.diagonal(i), &a), &g_gamma))?;
        for (j, pg) in weighted_g.iter().enumerate() {
            let q = rates[(i, j)];
            if q != 0.0 {
                m.axpy(q, pg)?;
            }
        }
        let (_, hi) = matlin::sym_eig_extremes(&m)?;
        lambda_max.push(hi);
        tolerance.push(tol.bound(m.max_abs()));
    }
    let pass = lambda_max.iter().zip(&tolerance).all(|(l, t)| l <= t);
    Ok(SlowCertificate { lambda_max, tolerance, pass, decay_rate: decay_rate(weights, beta, g)? })
}

/// `δ = 2β min_{i,j}(P_j)_ii / max_i λ_max(P_i ⊗ G)`
pub fn decay_rate(weights: &LyapunovWeights, beta: f64, g: &Matrix) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("β = {beta} must be positive")));
    }
    let (_, g_max) = matlin::sym_eig_extremes(&symmetric_part(g)?)?;
    // λ_max(P ⊗ G) = λ_max(P)·λ_max(G) for positive diagonal P and G > 0
    Ok(2.0 * beta * weights.min_entry() / (weights.max_entry() * g_max))
}

/// `P_i = diag(perron_left_vector(L(i)))`, verified to make `sym(P_i L(i))`
/// negative semidefinite with a simple zero eigenvalue.
pub fn perron_weights(topo: &SwitchedTopology) -> Result<LyapunovWeights> {
    let mut diagonals = Vec::with_capacity(topo.states());
    for (i, l) in topo.couplings().iter().enumerate() {
        let p = matlin::perron_left_vector(l).map_err(|e| match e {
            Error::Connectivity(_) => Error::Connectivity(format!("L({}) is reducible", i + 1)),
            other => other,
        })?;
        let s = symmetric_part(&diag_mul(&p, l.matrix()))?;
        let eig = matlin::sym_eigenvalues(&s)?;
        let tol = matlin::TOL.bound(s.max_abs());
        let top = eig[eig.len() - 1];
        let second = if eig.len() > 1 { eig[eig.len() - 2] } else { f64::NEG_INFINITY };
        if top > tol || second >= -tol {
            return Err(Error::Numeric(format!("sym(P L({})) has spectrum top {top:e}, second {second:e}", i + 1)));
        }
        diagonals.push(p);
    }
    LyapunovWeights::new(diagonals)
}

/// Per-state ceiling `-λ_max(sym(P_i[αI+κL(i)-κεC(i)])) / max_j λ_max(P_j)`
/// on the exit rate `q_i`.
pub fn perron_rate_bound(
    topo: &SwitchedTopology,
    weights: &LyapunovWeights,
    alpha: f64,
    cp: CouplingParams,
) -> Result<Vec<f64>> {
    if weights.states() != topo.states() || weights.nodes() != topo.nodes() {
        return Err(Error::Dimension("weights do not match topology".into()));
    }
    let denom = weights.max_entry();
    (0..topo.states())
        .map(|i| {
            let a = closed_loop(topo.coupling(i).matrix(), topo.pinning(i), alpha, cp)?;
            let s = symmetric_part(&diag_mul(weights.diagonal(i), &a))?;
            let (_, hi) = matlin::sym_eig_extremes(&s)?;
            if hi >= 0.0 {
                return Err(Error::CertificateInapplicable(format!(
                    "state {} closed loop is not negative definite (λ_max = {hi:e})",
                    i + 1
                )));
            }
            Ok(-hi / denom)
        })
        .collect()
}

/// `L̄ = Σ π_i L(i)`, `C̄ = Σ π_i C(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageNetwork {
    pub coupling: MetzlerZeroRowSum,
    /// Diagonal of `C̄`.
    pub pinning: Vec<f64>,
}

pub fn average_matrices(pi: &[f64], topo: &SwitchedTopology) -> Result<AverageNetwork> {
    if pi.len() != topo.states() {
        return Err(Error::Dimension(format!("{} weights for {} states", pi.len(), topo.states())));
    }
    let m = topo.nodes();
    let mut l = Matrix::zeros(m, m);
    let mut c = vec![0.0; m];
    for (i, &w) in pi.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        l.axpy(w, topo.coupling(i).matrix())?;
        for (acc, &ci) in c.iter_mut().zip(topo.pinning(i)) {
            *acc += w * ci;
        }
    }
    Ok(AverageNetwork { coupling: MetzlerZeroRowSum::rebalanced(l)?, pinning: c })
}

/// Constants of the fast-switching certificate for a single weight `P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    /// `max_i ‖A(i)‖∞ (1 + Lf²)` part of `K4 / (mn)`.
    pub k4_field_term: f64,
    /// `max_{i,j} ‖A(i)·((κL(j) - κεC(j)) ⊗ Γ)‖∞` part of `K4 / (mn)`.
    pub k4_mixed_term: f64,
    pub rho: f64,
    /// `λ_min(P ⊗ G)`, `λ_max(P ⊗ G)`.
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl FastConstants {
    pub fn window(&self) -> DeltaWindow {
        DeltaWindow {
            gap: self.k1 - self.k3,
            k4: self.k4,
            rho: self.rho,
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
        }
    }

    pub fn to_section(&self, name: &str) -> Section {
        let mut s = Section::new(name);
        s.push("K1", self.k1);
        s.push("K2", self.k2);
        s.push("K3", self.k3);
        s.push("K1_minus_K3", self.k1 - self.k3);
        s.push("K4", self.k4);
        s.push("K4_field_term", self.k4_field_term);
        s.push("K4_mixed_term", self.k4_mixed_term);
        s.push("rho", self.rho);
        s.push("lambda_min_P", self.lambda_min);
        s.push("lambda_max_P", self.lambda_max);
        s
    }
}

/// Inputs of the fast-switching certificate besides the topology.
#[derive(Debug, Clone)]
pub struct FastInputs<'a> {
    /// Diagonal of the single weight matrix `P`.
    pub weight: &'a [f64],
    pub alpha: f64,
    pub beta: f64,
    pub lipschitz: f64,
    pub params: CouplingParams,
    pub g: &'a Matrix,
    pub gamma: &'a Matrix,
}

/// `K1 = β min p_ii`, `K2 = max_i ρ(sym(P(αI+κL(i)-κεC(i)) ⊗ GΓ))`,
/// `K3 = λ_max(sym(P(αI+κL̄-κεC̄) ⊗ GΓ))`,
/// `K4 = mn[max_i ‖A(i)‖∞(1+Lf²) + max_{i,j} ‖A(i)((κL(j)-κεC(j)) ⊗ Γ)‖∞]`
/// with `A(i) = sym(P[κ(L(i)-L̄) - κε(C(i)-C̄)] ⊗ GΓ)`, and
/// `ρ = 2K2/λ_min(P⊗G) + 2K1/λ_max(P⊗G)`.
pub fn fast_constants(
    topo: &SwitchedTopology,
    average: &AverageNetwork,
    inp: &FastInputs<'_>,
) -> Result<FastConstants> {
    let m = topo.nodes();
    let n = inp.g.rows();
    if inp.weight.len() != m || average.pinning.len() != m || average.coupling.dim() != m {
        return Err(Error::Dimension("weight or average network does not match topology".into()));
    }
    if inp.weight.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Domain("weight P must be positive diagonal".into()));
    }
    if !inp.gamma.is_square() || inp.gamma.rows() != n {
        return Err(Error::Dimension("G and Γ must be square of the same size".into()));
    }
    let CouplingParams { kappa, epsilon } = inp.params;
    let g_gamma = inp.g.matmul(inp.gamma)?;
    let (g_min, g_max) = matlin::sym_eig_extremes(&symmetric_part(inp.g)?)?;
    let p_min = inp.weight.iter().copied().fold(f64::INFINITY, f64::min);
    let p_max = inp.weight.iter().copied().fold(0.0, f64::max);
    let (lambda_min, lambda_max) = (p_min * g_min, p_max * g_max);

    let k1 = inp.beta * p_min;
    let mut k2: f64 = 0.0;
    for i in 0..topo.states() {
        let a = closed_loop(topo.coupling(i).matrix(), topo.pinning(i), inp.alpha, inp.params)?;
        let s = symmetric_part(&kron(&diag_mul(inp.weight, &a), &g_gamma))?;
        k2 = k2.max(matlin::sym_spectral_radius(&s)?);
    }
    let a_bar = closed_loop(average.coupling.matrix(), &average.pinning, inp.alpha, inp.params)?;
    let (_, k3) = matlin::sym_eig_extremes(&symmetric_part(&kron(&diag_mul(inp.weight, &a_bar), &g_gamma))?)?;

    let deviations: Vec<Matrix> = (0..topo.states())
        .map(|i| {
            let mut d = topo.coupling(i).matrix().sub(average.coupling.matrix())?.scale(kappa);
            for (k, (&c, &cb)) in topo.pinning(i).iter().zip(&average.pinning).enumerate() {
                d[(k, k)] -= kappa * epsilon * (c - cb);
            }
            symmetric_part(&kron(&diag_mul(inp.weight, &d), &g_gamma))
        })
        .collect::<Result<_>>()?;
    let drives: Vec<Matrix> = (0..topo.states())
        .map(|j| {
            let a = closed_loop(topo.coupling(j).matrix(), topo.pinning(j), 0.0, inp.params)?;
            Ok(kron(&a, inp.gamma))
        })
        .collect::<Result<_>>()?;
    let k4_field_term = deviations.iter().map(Matrix::max_abs).fold(0.0, f64::max) * (1.0 + inp.lipschitz.powi(2));
    let mut k4_mixed_term: f64 = 0.0;
    for a in &deviations {
        if a.max_abs() == 0.0 {
            continue;
        }
        for b in &drives {
            k4_mixed_term = k4_mixed_term.max(a.matmul(b)?.max_abs());
        }
    }
    let k4 = (m * n) as f64 * (k4_field_term + k4_mixed_term);
    let rho = 2.0 * k2 / lambda_min + 2.0 * k1 / lambda_max;
    Ok(FastConstants { k1, k2, k3, k4, k4_field_term, k4_mixed_term, rho, lambda_min, lambda_max })
}

/// The pieces of the `Δ` window condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaWindow {
    /// `K1 - K3`
    pub gap: f64,
    pub k4: f64,
    pub rho: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// `-(K1-K3)λ_m/(ρλ_M)(1-e^{-ρΔ}) + K4 λ_M Δ/(ρλ_m)(e^{ρΔ}-1)`; the
/// condition holds iff the value is negative.
pub fn delta_condition(w: &DeltaWindow, delta: f64) -> f64 {
    let x = w.rho * delta;
    -(w.gap * w.lambda_min) / (w.rho * w.lambda_max) * (-(-x).exp_m1())
        + (w.k4 * w.lambda_max * delta) / (w.rho * w.lambda_min) * x.exp_m1()
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleDelta {
    /// Largest `Δ` with a negative window value, located by bisection.
    Boundary(f64),
    /// The condition held over the whole scan range.
    Unbounded {
        scanned_to: f64,
    },
    Infeasible(String),
}

impl FeasibleDelta {
    pub fn delta(&self) -> Option<f64> {
        match self {
            Self::Boundary(d) => Some(*d),
            Self::Unbounded { scanned_to } => Some(*scanned_to),
            Self::Infeasible(_) => None,
        }
    }
}

pub const DELTA_SCAN: (f64, f64) = (1e-8, 1.0);

/// Log-spaced scan of `[1e-8, 1]` for the first sign change, then bisection
/// to `1e-12` relative width.
pub fn feasible_delta(w: &DeltaWindow) -> FeasibleDelta {
    if !(w.rho > 0.0 && w.lambda_min > 0.0 && w.lambda_max > 0.0) {
        return FeasibleDelta::Infeasible("ρ and the weight eigenvalues must be positive".into());
    }
    if w.gap <= 0.0 {
        return FeasibleDelta::Infeasible(format!("K1 - K3 = {} is not positive", w.gap));
    }
    const POINTS: usize = 801;
    let (lo_end, hi_end) = DELTA_SCAN;
    let ratio = (hi_end / lo_end).ln();
    let grid = (0..POINTS).map(|k| lo_end * (ratio * k as f64 / (POINTS - 1) as f64).exp());
    let mut prev: Option<f64> = None;
    for d in grid {
        if delta_condition(w, d) >= 0.0 {
            let Some(mut lo) = prev else {
                return FeasibleDelta::Infeasible(format!("condition already fails at Δ = {lo_end:e}"));
            };
            let mut hi = d;
            while hi - lo > 1e-12 * hi {
                let mid = 0.5 * (lo + hi);
                if delta_condition(w, mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return FeasibleDelta::Boundary(lo);
        }
        prev = Some(d);
    }
    FeasibleDelta::Unbounded { scanned_to: hi_end }
}

/// `1/(r·Δ)`: the exit rates must all exceed this.
pub fn min_rate_required(delta: f64, r_steps: u64) -> f64 {
    1.0 / (r_steps as f64 * delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FastSwitchCertificate {
    pub constants: FastConstants,
    pub delta: f64,
    pub r_steps: u64,
    pub lhs: f64,
    pub q_min_required: f64,
    pub feasible: FeasibleDelta,
    /// `lhs(Δ) < 0`
    pub pass: bool,
}

pub fn fast_certificate(constants: FastConstants, delta: f64, r_steps: u64) -> FastSwitchCertificate {
    let w = constants.window();
    let lhs = delta_condition(&w, delta);
    FastSwitchCertificate {
        constants,
        delta,
        r_steps,
        lhs,
        q_min_required: min_rate_required(delta, r_steps),
        feasible: feasible_delta(&w),
        pass: lhs < 0.0,
    }
}

impl FastSwitchCertificate {
    pub fn to_section(&self, name: &str) -> Section {
        let mut s = self.constants.to_section(name);
        s.push("delta", self.delta);
        s.push("r_steps", self.r_steps);
        s.push("window_lhs", self.lhs);
        s.push("pass", self.pass);
        s.push("q_min_required", self.q_min_required);
        match &self.feasible {
            FeasibleDelta::Boundary(d) => {
                s.push("delta_star", d);
                s.push("q_min_required_at_delta_star", min_rate_required(*d, self.r_steps));
            }
            FeasibleDelta::Unbounded { scanned_to } => s.push("delta_star_unbounded_to", scanned_to),
            FeasibleDelta::Infeasible(why) => s.push("delta_star_infeasible", why),
        }
        s
    }
}
