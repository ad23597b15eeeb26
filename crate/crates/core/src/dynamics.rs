//! Node dynamics and function-class checks.
//!
//! The reference node is a three-cell cellular neural network
//! `dx/dt = -Dx + T g(x)` with the saturating activation
//! `g(s) = (|s+1| - |s-1|)/2`. QUAD membership is only ever *falsified* by
//! sampling; nothing here proves it.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matlin::{self, Matrix};
use crate::rng::{self, streams};

/// Vector field `f(x, t)` of a single node.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]);
}

/// `(|s+1| - |s-1|)/2`, evaluated as a clamp to stay exactly within `[-1, 1]`.
pub fn activation(s: f64) -> f64 {
    s.clamp(-1.0, 1.0)
}

/// Weights of `-Dx + T g(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub d: Matrix,
    pub t: Matrix,
}

impl CnnParams {
    /// Double-scroll instance: `D = I₃` and the reference weight matrix.
    pub fn double_scroll() -> Self {
        Self {
            d: Matrix::identity(3),
            t: Matrix::from_rows(&[[1.25, -3.2, -3.2], [-3.2, 1.1, -4.4], [-3.2, 4.4, 1.0]]).expect("static matrix"),
        }
    }

    pub fn new(d: Matrix, t: Matrix) -> Result<Self> {
        if !d.is_square() || !t.is_square() || d.rows() != t.rows() {
            return Err(Error::Dimension(format!("D is {}x{}, T is {}x{}", d.rows(), d.cols(), t.rows(), t.cols())));
        }
        Ok(Self { d, t })
    }

    pub fn dim(&self) -> usize {
        self.d.rows()
    }
}

pub fn cnn_rhs(x: &[f64], params: &CnnParams) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    Cnn(params.clone()).eval(x, 0.0, &mut out);
    out
}

#[derive(Debug, Clone)]
pub struct Cnn(pub CnnParams);

impl VectorField for Cnn {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let (d, t) = (&self.0.d, &self.0.t);
        for (i, o) in out.iter_mut().enumerate() {
            *o = x.iter().enumerate().map(|(j, &xj)| t[(i, j)] * activation(xj) - d[(i, j)] * xj).sum();
        }
    }
}

/// `f(x) = A x`
#[derive(Debug, Clone)]
pub struct LinearField(pub Matrix);

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.0.rows()
    }

    fn eval(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Parameters of the QUAD(G, αΓ, β) inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadData {
    pub g: Matrix,
    pub alpha: f64,
    pub beta: f64,
}

/// Everything the network needs to know about a node.
#[derive(Clone)]
pub struct DynamicsSpec {
    pub field: Arc<dyn VectorField>,
    /// Inner coupling matrix Γ (n×n).
    pub gamma: Matrix,
    pub quad: QuadData,
    pub lipschitz: Option<f64>,
}

impl std::fmt::Debug for DynamicsSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicsSpec")
            .field("n", &self.field.dim())
            .field("gamma", &self.gamma)
            .field("quad", &self.quad)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl DynamicsSpec {
    pub fn new(field: Arc<dyn VectorField>, gamma: Matrix, quad: QuadData, lipschitz: Option<f64>) -> Result<Self> {
        let n = field.dim();
        if gamma.rows() != n || gamma.cols() != n || quad.g.rows() != n || quad.g.cols() != n {
            return Err(Error::Dimension(format!("Γ and G must be {n}x{n}")));
        }
        if !(quad.beta > 0.0) {
            return Err(Error::Domain(format!("β = {} must be positive", quad.beta)));
        }
        let (g_min, _) = matlin::sym_eig_extremes(&matlin::symmetric_part(&quad.g)?)?;
        if g_min <= 0.0 {
            return Err(Error::Domain("G must be positive definite".into()));
        }
        Ok(Self { field, gamma, quad, lipschitz })
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }
}

/// Axis-aligned sampling box `[lo, hi]^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBox {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest observed `(ξ-ζ)ᵀG[f(ξ)-f(ζ)-αΓ(ξ-ζ)] + β‖ξ-ζ‖²`; positive
    /// means the inequality failed at that pair.
    pub worst_margin: f64,
    /// Worst margin divided by `‖ξ-ζ‖²`.
    pub worst_normalized_margin: f64,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
}

impl QuadReport {
    pub fn found_violation(&self) -> bool {
        self.violations > 0
    }
}

/// Samples `samples` random pairs in the box and evaluates the QUAD margin.
/// A clean report only means no counterexample was sampled.
pub fn quad_falsifier(spec: &DynamicsSpec, samples: usize, domain: SampleBox, seed: u64) -> Result<QuadReport> {
    if samples == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    if !(domain.lo < domain.hi && domain.lo.is_finite() && domain.hi.is_finite()) {
        return Err(Error::Domain(format!("empty or unbounded box [{}, {}]", domain.lo, domain.hi)));
    }
    let n = spec.dim();
    let mut rng = rng::stream(seed, streams::FALSIFIER);
    let (mut xi, mut zeta) = (vec![0.0; n], vec![0.0; n]);
    let (mut fxi, mut fzeta) = (vec![0.0; n], vec![0.0; n]);
    let mut report = QuadReport {
        samples,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
        worst_normalized_margin: f64::NEG_INFINITY,
        worst_pair: None,
    };
    let QuadData { g, alpha, beta } = &spec.quad;
    for _ in 0..samples {
        xi.iter_mut().for_each(|v| *v = rng.random_range(domain.lo..domain.hi));
        zeta.iter_mut().for_each(|v| *v = rng.random_range(domain.lo..domain.hi));
        spec.field.eval(&xi, 0.0, &mut fxi);
        spec.field.eval(&zeta, 0.0, &mut fzeta);
        let e: Vec<f64> = xi.iter().zip(&zeta).map(|(a, b)| a - b).collect();
        let ge = spec.gamma.mul_vec(&e)?;
        let w: Vec<f64> = (0..n).map(|k| fxi[k] - fzeta[k] - alpha * ge[k]).collect();
        let gw = g.mul_vec(&w)?;
        let e2: f64 = e.iter().map(|v| v * v).sum();
        if e2 == 0.0 {
            continue;
        }
        let margin = e.iter().zip(&gw).map(|(a, b)| a * b).sum::<f64>() + beta * e2;
        if margin > 1e-12 * e2 {
            report.violations += 1;
        }
        if margin / e2 > report.worst_normalized_margin {
            report.worst_normalized_margin = margin / e2;
            report.worst_pair = Some((xi.clone(), zeta.clone()));
        }
        report.worst_margin = report.worst_margin.max(margin);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    /// Provable global bound `‖D‖₂ + ‖T‖₂`.
    pub safe_bound: f64,
    /// `‖-D + T diag(σ)‖₂` for each activation-slope pattern σ ∈ {0,1}ⁿ.
    /// Diagnostic only: the maximum over vertices is not a bound in general.
    pub pattern_norms: Vec<(Vec<bool>, f64)>,
    /// `max_σ λ_max(sym(-D + T diag(σ)))`: the one-sided Lipschitz constant of
    /// the field (exact, since `λ_max` of an affine symmetric family is convex
    /// and the slopes range over `[0,1]ⁿ`).
    pub one_sided: f64,
}

pub fn lipschitz_bound(params: &CnnParams) -> Result<LipschitzReport> {
    let n = params.dim();
    let safe_bound = matlin::spectral_norm(&params.d)? + matlin::spectral_norm(&params.t)?;
    let mut pattern_norms = Vec::with_capacity(1 << n);
    let mut one_sided = f64::NEG_INFINITY;
    for mask in 0..(1usize << n) {
        let sigma: Vec<bool> = (0..n).map(|k| mask & (1 << k) != 0).collect();
        let slopes: Vec<f64> = sigma.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
        let jac = params.t.matmul(&Matrix::from_diag(&slopes))?.sub(&params.d)?;
        let (_, hi) = matlin::sym_eig_extremes(&matlin::symmetric_part(&jac)?)?;
        one_sided = one_sided.max(hi);
        pattern_norms.push((sigma, matlin::spectral_norm(&jac)?));
    }
    Ok(LipschitzReport { safe_bound, pattern_norms, one_sided })
}
