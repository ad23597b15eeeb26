//! The pinned network with Markov-switched coupling and pinning sets.
//!
//! Node `i` evolves as
//!
//! ```text
//! dxⁱ/dt = f(xⁱ,t) + κ Σ_j l_ij(σ) Γ xʲ + κ ε c_i(σ) Γ (s - xⁱ)
//! ds/dt  = f(s,t)
//! ```
//!
//! The coupling sum is evaluated in difference form `Σ_{j≠i} l_ij Γ(xʲ - xⁱ)`,
//! which is the same quantity for zero-row-sum `L` and keeps the synchronous
//! subspace invariant to the last bit.
//!
//! Integration is fixed-step RK4 on a uniform grid; any grid step that
//! contains a jump of the switching path is split at the jump so that every
//! RK4 stage sees a single topology.

use std::io::Write;

use crate::dynamics::DynamicsSpec;
use crate::error::{Error, Result};
use crate::markov::SwitchPath;
use crate::matlin::{Matrix, MetzlerZeroRowSum};

/// Coupling matrices `L(i)` and pinning sets `C(i)`, one pair per state.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedTopology {
    couplings: Vec<MetzlerZeroRowSum>,
    pinning: Vec<Vec<f64>>,
}

impl SwitchedTopology {
    /// `pinning[i]` is the diagonal of `C(i)`; entries must be 0 or 1.
    pub fn new(couplings: Vec<MetzlerZeroRowSum>, pinning: Vec<Vec<f64>>) -> Result<Self> {
        if couplings.is_empty() {
            return Err(Error::Validation("topology family is empty".into()));
        }
        if couplings.len() != pinning.len() {
            return Err(Error::Dimension(format!(
                "{} coupling matrices but {} pinning sets",
                couplings.len(),
                pinning.len()
            )));
        }
        let m = couplings[0].dim();
        for (i, (l, c)) in couplings.iter().zip(&pinning).enumerate() {
            if l.dim() != m || c.len() != m {
                return Err(Error::Dimension(format!("state {} is not {m}-node", i + 1)));
            }
            if c.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Validation(format!("pinning set {} has entries other than 0/1", i + 1)));
            }
        }
        Ok(Self { couplings, pinning })
    }

    /// Same as [`SwitchedTopology::new`] with pinning given as diagonal matrices.
    pub fn from_matrices(couplings: Vec<MetzlerZeroRowSum>, pinning: &[Matrix]) -> Result<Self> {
        let diags = pinning
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if c.is_diagonal() {
                    Ok(c.diagonal())
                } else {
                    Err(Error::Validation(format!("pinning matrix {} is not diagonal", i + 1)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(couplings, diags)
    }

    pub fn nodes(&self) -> usize {
        self.couplings[0].dim()
    }

    pub fn states(&self) -> usize {
        self.couplings.len()
    }

    pub fn coupling(&self, state: usize) -> &MetzlerZeroRowSum {
        &self.couplings[state]
    }

    pub fn couplings(&self) -> &[MetzlerZeroRowSum] {
        &self.couplings
    }

    pub fn pinning(&self, state: usize) -> &[f64] {
        &self.pinning[state]
    }

    pub fn pinning_matrix(&self, state: usize) -> Matrix {
        Matrix::from_diag(&self.pinning[state])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams {
    pub kappa: f64,
    pub epsilon: f64,
}

impl CouplingParams {
    pub fn new(kappa: f64, epsilon: f64) -> Result<Self> {
        if !(kappa > 0.0 && epsilon > 0.0) {
            return Err(Error::Domain(format!("κ = {kappa} and ε = {epsilon} must be positive")));
        }
        Ok(Self { kappa, epsilon })
    }
}

/// Stacked node states, target state and time.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// `m·n` entries, node-major.
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub t: f64,
}

/// `max_i max_k |xⁱ_k - s_k|`. (The max-abs norm, whatever name the
/// literature gives it.)
pub fn varsigma(x: &[f64], s: &[f64]) -> f64 {
    let n = s.len();
    x.chunks(n).flat_map(|node| node.iter().zip(s).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max)
}

/// `(1/m) Σ_i ‖xⁱ - s‖²`
pub fn mean_square_node_error(x: &[f64], s: &[f64]) -> f64 {
    let n = s.len();
    let m = x.len() / n;
    let total: f64 = x.chunks(n).map(|node| node.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum();
    total / m as f64
}

fn node_max_errors(x: &[f64], s: &[f64]) -> Vec<f64> {
    x.chunks(s.len()).map(|node| node.iter().zip(s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).collect()
}

/// Evaluates the network right-hand side on the flat state `[x; s]`.
pub struct NetworkRhs<'a> {
    dynamics: &'a DynamicsSpec,
    params: CouplingParams,
    m: usize,
    n: usize,
    gamma_x: Vec<f64>,
}

impl<'a> NetworkRhs<'a> {
    pub fn new(dynamics: &'a DynamicsSpec, params: CouplingParams, nodes: usize) -> Self {
        let n = dynamics.dim();
        Self { dynamics, params, m: nodes, n, gamma_x: vec![0.0; nodes * n] }
    }

    pub fn state_len(&self) -> usize {
        (self.m + 1) * self.n
    }

    /// `dy = rhs(t, y)` under coupling `l` and pinning diagonal `pins`.
    pub fn eval(&mut self, t: f64, y: &[f64], l: &Matrix, pins: &[f64], dy: &mut [f64]) {
        let (m, n) = (self.m, self.n);
        let gamma = &self.dynamics.gamma;
        let (x, s) = y.split_at(m * n);
        let (dx, ds) = dy.split_at_mut(m * n);
        self.dynamics.field.eval(s, t, ds);
        for (node, gx) in x.chunks(n).zip(self.gamma_x.chunks_mut(n)) {
            for (k, g) in gx.iter_mut().enumerate() {
                *g = gamma.row(k).iter().zip(node).map(|(a, b)| a * b).sum();
            }
        }
        let CouplingParams { kappa, epsilon } = self.params;
        for i in 0..m {
            let xi = &x[i * n..(i + 1) * n];
            let out = &mut dx[i * n..(i + 1) * n];
            self.dynamics.field.eval(xi, t, out);
            let gxi = &self.gamma_x[i * n..(i + 1) * n];
            for j in 0..m {
                let lij = l[(i, j)];
                if j == i || lij == 0.0 {
                    continue;
                }
                let gxj = &self.gamma_x[j * n..(j + 1) * n];
                for k in 0..n {
                    out[k] += kappa * lij * (gxj[k] - gxi[k]);
                }
            }
            if pins[i] != 0.0 {
                let w = kappa * epsilon * pins[i];
                for k in 0..n {
                    let gs: f64 = gamma.row(k).iter().zip(s).map(|(a, b)| a * b).sum();
                    out[k] += w * (gs - gxi[k]);
                }
            }
        }
    }
}

/// Derivatives of `x` and `s` at `state` with the topology of Markov state `sigma`.
pub fn coupled_rhs(
    state: &SystemState,
    sigma: usize,
    topo: &SwitchedTopology,
    dynamics: &DynamicsSpec,
    params: CouplingParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (m, n) = (topo.nodes(), dynamics.dim());
    if state.x.len() != m * n || state.s.len() != n {
        return Err(Error::Dimension(format!(
            "state has {} node entries and {} target entries, expected {} and {n}",
            state.x.len(),
            state.s.len(),
            m * n
        )));
    }
    if sigma >= topo.states() {
        return Err(Error::Dimension(format!("state index {} of {}", sigma + 1, topo.states())));
    }
    let mut rhs = NetworkRhs::new(dynamics, params, m);
    let y: Vec<f64> = state.x.iter().chain(&state.s).copied().collect();
    let mut dy = vec![0.0; y.len()];
    rhs.eval(state.t, &y, topo.coupling(sigma).matrix(), topo.pinning(sigma), &mut dy);
    let ds = dy.split_off(m * n);
    Ok((dy, ds))
}

/// Scratch space for one RK4 step.
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(dim: usize) -> Self {
        Self { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }
}

/// One classical RK4 step of `dy/dt = rhs(t, y)`, in place.
pub fn rk4_step<F>(rhs: &mut F, t: f64, y: &mut [f64], h: f64, ws: &mut Rk4Workspace) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(h > 0.0) {
        return Err(Error::Domain(format!("step size {h} must be positive")));
    }
    let Rk4Workspace { k1, k2, k3, k4, tmp } = ws;
    rhs(t, y, k1);
    for (o, (a, k)) in tmp.iter_mut().zip(y.iter().zip(k1.iter())) {
        *o = a + 0.5 * h * k;
    }
    rhs(t + 0.5 * h, tmp, k2);
    for (o, (a, k)) in tmp.iter_mut().zip(y.iter().zip(k2.iter())) {
        *o = a + 0.5 * h * k;
    }
    rhs(t + 0.5 * h, tmp, k3);
    for (o, (a, k)) in tmp.iter_mut().zip(y.iter().zip(k3.iter())) {
        *o = a + h * k;
    }
    rhs(t + h, tmp, k4);
    for (i, v) in y.iter_mut().enumerate() {
        *v += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite state after RK4 step at t = {t}")));
    }
    Ok(())
}

/// Sampled output of one simulation run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Active switching state at each sample (0-based).
    pub states: Vec<usize>,
    pub varsigma: Vec<f64>,
    /// Node-averaged squared 2-norm error `(1/m) Σ_i ‖xⁱ - s‖²`.
    pub mean_sq: Vec<f64>,
    /// Per-node max-abs errors, when requested.
    pub node_errors: Option<Vec<Vec<f64>>>,
    /// Set when `‖x‖∞` exceeded the divergence guard; the record stops there.
    pub diverged: bool,
    /// Number of grid steps that were split at a jump.
    pub split_steps: usize,
    /// Every sub-step endpoint, when requested (for jump-alignment checks).
    pub step_endpoints: Option<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn push(&mut self, t: f64, state: usize, x: &[f64], s: &[f64]) {
        self.times.push(t);
        self.states.push(state);
        self.varsigma.push(varsigma(x, s));
        self.mean_sq.push(mean_square_node_error(x, s));
        if let Some(errs) = self.node_errors.as_mut() {
            errs.push(node_max_errors(x, s));
        }
    }

    pub fn final_varsigma(&self) -> f64 {
        self.varsigma.last().copied().unwrap_or(0.0)
    }

    /// CSV with header `t,sigma_state,varsigma[,err_node_1..err_node_m]`;
    /// states are written 1-based.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let nodes = self.node_errors.as_ref().and_then(|e| e.first()).map_or(0, Vec::len);
        let mut header = vec!["t".to_string(), "sigma_state".into(), "varsigma".into()];
        header.extend((1..=nodes).map(|i| format!("err_node_{i}")));
        out.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![
                format!("{}", self.times[k]),
                format!("{}", self.states[k] + 1),
                format!("{:e}", self.varsigma[k]),
            ];
            if let Some(errs) = &self.node_errors {
                row.extend(errs[k].iter().map(|e| format!("{e:e}")));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// Record every `stride`-th grid step; `None` picks the smallest stride
    /// that keeps the record at or below 100 000 samples.
    pub record_stride: Option<usize>,
    pub record_node_errors: bool,
    pub collect_step_endpoints: bool,
    pub divergence_guard: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { record_stride: None, record_node_errors: false, collect_step_endpoints: false, divergence_guard: 1e12 }
    }
}

impl SimOptions {
    pub fn stride_for(&self, steps: usize) -> usize {
        self.record_stride.unwrap_or_else(|| steps.div_ceil(100_000)).max(1)
    }
}

/// Number of grid steps for `horizon` at step `h` (the last one may be short).
pub fn grid_steps(horizon: f64, h: f64) -> usize {
    let ratio = horizon / h;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Integrates the network along a sampled switching path.
///
/// The integration state is `[x; s]`: the target is co-integrated with the
/// same step sequence as the nodes.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    topo: &SwitchedTopology,
    dynamics: &DynamicsSpec,
    params: CouplingParams,
    path: &SwitchPath,
    x0: &[f64],
    s0: &[f64],
    h: f64,
    horizon: f64,
    opts: &SimOptions,
) -> Result<TrajectoryRecord> {
    let (m, n) = (topo.nodes(), dynamics.dim());
    if x0.len() != m * n || s0.len() != n {
        return Err(Error::Dimension(format!(
            "initial state has {} node entries and {} target entries, expected {} and {n}",
            x0.len(),
            s0.len(),
            m * n
        )));
    }
    if !(h > 0.0 && horizon > 0.0) {
        return Err(Error::Domain(format!("step {h} and horizon {horizon} must be positive")));
    }
    if path.horizon < horizon {
        return Err(Error::Domain(format!(
            "switching path covers {} but the simulation needs {horizon}",
            path.horizon
        )));
    }
    if let Some(&(bad, _)) = path.jumps.iter().find(|&&(s, _)| s >= topo.states()) {
        return Err(Error::Dimension(format!("path visits state {} of {}", bad + 1, topo.states())));
    }

    let steps = grid_steps(horizon, h);
    let stride = opts.stride_for(steps);
    let mut rhs = NetworkRhs::new(dynamics, params, m);
    let mut ws = Rk4Workspace::new(rhs.state_len());
    let mut y: Vec<f64> = x0.iter().chain(s0).copied().collect();

    let mut record = TrajectoryRecord {
        node_errors: opts.record_node_errors.then(Vec::new),
        step_endpoints: opts.collect_step_endpoints.then(|| vec![0.0]),
        ..Default::default()
    };
    let mut jump_idx = 0;
    record.push(0.0, path.jumps[0].0, &y[..m * n], &y[m * n..]);

    let mut advance = |y: &mut [f64], t0: f64, t1: f64, state: usize, ends: &mut Option<Vec<f64>>| {
        let l = topo.coupling(state).matrix();
        let pins = topo.pinning(state);
        let mut f = |t: f64, yy: &[f64], dy: &mut [f64]| rhs.eval(t, yy, l, pins, dy);
        rk4_step(&mut f, t0, y, t1 - t0, &mut ws)?;
        if let Some(e) = ends.as_mut() {
            e.push(t1);
        }
        Ok::<(), Error>(())
    };

    for k in 0..steps {
        let t0 = k as f64 * h;
        let t1 = if k + 1 == steps { horizon } else { (k + 1) as f64 * h };
        let mut t = t0;
        let mut split = false;
        while let Some(&(next_state, tj)) = path.jumps.get(jump_idx + 1) {
            if tj > t1 {
                break;
            }
            if tj > t {
                advance(&mut y, t, tj, path.jumps[jump_idx].0, &mut record.step_endpoints)?;
                t = tj;
                split = tj < t1;
            }
            debug_assert!(next_state < topo.states());
            jump_idx += 1;
        }
        if t1 > t {
            advance(&mut y, t, t1, path.jumps[jump_idx].0, &mut record.step_endpoints)?;
        }
        if split {
            record.split_steps += 1;
        }

        let (x, s) = y.split_at(m * n);
        if x.iter().chain(s).any(|v| v.abs() > opts.divergence_guard) {
            record.push(t1, path.jumps[jump_idx].0, x, s);
            record.diverged = true;
            return Ok(record);
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            record.push(t1, path.jumps[jump_idx].0, x, s);
        }
    }
    Ok(record)
}

/// Ensemble-averaged `E‖xⁱ - s‖²` on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSquareSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn mean_square_error(runs: &[TrajectoryRecord]) -> Result<MeanSquareSeries> {
    let first = runs.first().ok_or_else(|| Error::Domain("empty ensemble".into()))?;
    for (k, r) in runs.iter().enumerate() {
        if r.times.len() != first.times.len()
            || r.times.iter().zip(&first.times).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs().max(1.0))
        {
            return Err(Error::Dimension(format!("run {k} is on a different time grid")));
        }
    }
    let count = runs.len() as f64;
    let values = (0..first.times.len()).map(|i| runs.iter().map(|r| r.mean_sq[i]).sum::<f64>() / count).collect();
    Ok(MeanSquareSeries { times: first.times.clone(), values })
}

/// Least-squares fit of `ln v = a + rate·t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits over samples with `t` in `[t_lo, t_hi]` and strictly positive value;
/// fewer than two usable points yields rate 0.
pub fn fit_exponential_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> RateFit {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|&(&t, &v)| t >= window.0 && t <= window.1 && v > 0.0 && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return RateFit { rate: 0.0, intercept: 0.0, points: pts.len() };
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    if sxx == 0.0 {
        return RateFit { rate: 0.0, intercept: mv, points: pts.len() };
    }
    let rate = sxy / sxx;
    RateFit { rate, intercept: mv - rate * mt, points: pts.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{LinearField, QuadData};
    use std::sync::Arc;

    fn scalar_spec(a: f64) -> DynamicsSpec {
        DynamicsSpec::new(
            Arc::new(LinearField(Matrix::from_rows(&[[a]]).unwrap())),
            Matrix::identity(1),
            QuadData { g: Matrix::identity(1), alpha: 1.0, beta: 1.0 },
            None,
        )
        .unwrap()
    }

    fn two_node_topology() -> SwitchedTopology {
        let l = MetzlerZeroRowSum::new(Matrix::from_rows(&[[-1.0, 1.0], [1.0, -1.0]]).unwrap()).unwrap();
        SwitchedTopology::new(vec![l], vec![vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn hand_computed_rhs() {
        let state = SystemState { x: vec![2.0, 0.0], s: vec![0.0], t: 0.0 };
        let (dx, ds) =
            coupled_rhs(&state, 0, &two_node_topology(), &scalar_spec(0.0), CouplingParams::new(1.0, 1.0).unwrap())
                .unwrap();
        assert_eq!(dx, vec![-4.0, 2.0]);
        assert_eq!(ds, vec![0.0]);
    }

    #[test]
    fn rhs_dimension_errors() {
        let topo = two_node_topology();
        let spec = scalar_spec(0.0);
        let cp = CouplingParams::new(1.0, 1.0).unwrap();
        let state = SystemState { x: vec![1.0; 3], s: vec![0.0], t: 0.0 };
        assert!(matches!(coupled_rhs(&state, 0, &topo, &spec, cp), Err(Error::Dimension(_))));
        let state = SystemState { x: vec![1.0; 2], s: vec![0.0], t: 0.0 };
        assert!(matches!(coupled_rhs(&state, 3, &topo, &spec, cp), Err(Error::Dimension(_))));
    }

    #[test]
    fn tiny_kappa_decouples() {
        let topo = two_node_topology();
        let spec = scalar_spec(-3.0);
        let state = SystemState { x: vec![2.0, 5.0], s: vec![1.0], t: 0.0 };
        let (dx, ds) = coupled_rhs(&state, 0, &topo, &spec, CouplingParams::new(1e-300, 1.0).unwrap()).unwrap();
        assert_eq!(dx, vec![-6.0, -15.0]);
        assert_eq!(ds, vec![-3.0]);
    }

    #[test]
    fn rk4_closed_form_and_identity() {
        let mut ws = Rk4Workspace::new(1);
        let mut y = [1.0];
        let mut decay = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        rk4_step(&mut decay, 0.0, &mut y, 0.1, &mut ws).unwrap();
        let h: f64 = 0.1;
        let poly = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((y[0] - poly).abs() < 1e-15);
        assert!((y[0] - 0.9048375).abs() < 1e-7);

        let mut still = [3.5, -1.0];
        let mut ws = Rk4Workspace::new(2);
        let mut zero = |_t: f64, _y: &[f64], dy: &mut [f64]| dy.iter_mut().for_each(|v| *v = 0.0);
        rk4_step(&mut zero, 0.0, &mut still, 0.5, &mut ws).unwrap();
        assert_eq!(still, [3.5, -1.0]);
    }

    #[test]
    fn rk4_error_shrinks_sixteenfold() {
        let err = |h: f64| {
            let steps = (1.0 / h).round() as usize;
            let mut y = [1.0];
            let mut ws = Rk4Workspace::new(1);
            let mut decay = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
            for k in 0..steps {
                rk4_step(&mut decay, k as f64 * h, &mut y, h, &mut ws).unwrap();
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rk4_flags_nan_and_bad_step() {
        let mut ws = Rk4Workspace::new(1);
        let mut y = [1.0];
        let mut blowup = |_t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = f64::NAN;
        assert!(matches!(rk4_step(&mut blowup, 0.0, &mut y, 0.1, &mut ws), Err(Error::Numeric(_))));
        let mut y = [1.0];
        assert!(rk4_step(&mut blowup, 0.0, &mut y, 0.0, &mut ws).is_err());
    }

    #[test]
    fn varsigma_examples() {
        assert_eq!(varsigma(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(varsigma(&[1.0, -3.0, 2.0], &[0.0, 0.0, 0.0]), 3.0);
        assert_eq!(varsigma(&[1.0, 0.0, 0.0, 0.0, 2.0, 0.0], &[0.0, 0.0, 0.0]), 2.0);
    }

    #[test]
    fn rate_fit_examples() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.05).collect();
        let sq: Vec<f64> = times.iter().map(|t| (-t).exp().powi(2)).collect();
        let fit = fit_exponential_rate(&times, &sq, (0.0, 5.0));
        assert!((fit.rate + 2.0).abs() < 1e-3);
        let zero = vec![0.0; times.len()];
        assert_eq!(fit_exponential_rate(&times, &zero, (0.0, 5.0)).rate, 0.0);
    }

    #[test]
    fn mean_square_rejects_mismatched_grids() {
        let a = TrajectoryRecord { times: vec![0.0, 1.0], mean_sq: vec![1.0, 1.0], ..Default::default() };
        let b = TrajectoryRecord { times: vec![0.0, 2.0], mean_sq: vec![1.0, 1.0], ..Default::default() };
        assert!(mean_square_error(&[a.clone(), b]).is_err());
        assert!(mean_square_error(&[]).is_err());
        assert_eq!(mean_square_error(&[a]).unwrap().values, vec![1.0, 1.0]);
    }

    #[test]
    fn topology_validation() {
        let l = MetzlerZeroRowSum::new(Matrix::zeros(2, 2)).unwrap();
        assert!(SwitchedTopology::new(vec![], vec![]).is_err());
        assert!(SwitchedTopology::new(vec![l.clone()], vec![vec![0.5, 0.0]]).is_err());
        assert!(SwitchedTopology::new(vec![l.clone()], vec![vec![1.0]]).is_err());
        assert!(
            SwitchedTopology::from_matrices(vec![l], &[Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]).unwrap()]).is_err()
        );
        assert!(CouplingParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn grid_step_counts() {
        assert_eq!(grid_steps(10.0, 0.01), 1000);
        assert_eq!(grid_steps(1.0, 1e-4), 10_000);
        assert_eq!(grid_steps(1.05, 0.1), 11);
    }
}
