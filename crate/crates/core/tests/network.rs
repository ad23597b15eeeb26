use std::sync::Arc;

use markov_pinning::dynamics::{DynamicsSpec, LinearField, QuadData};
use markov_pinning::markov::SwitchPath;
use markov_pinning::matlin::{Matrix, MetzlerZeroRowSum};
use markov_pinning::switchnet::{simulate, CouplingParams, SimOptions, SwitchedTopology};

const A: f64 = 0.4;
const KAPPA: f64 = 2.0;
const EPSILON: f64 = 1.5;

fn scalar_linear() -> DynamicsSpec {
    let one = Matrix::identity(1);
    let quad = QuadData { g: one.clone(), alpha: A, beta: 0.1 };
    DynamicsSpec::new(Arc::new(LinearField(Matrix::from_rows(&[[A]]).unwrap())), one, quad, None).unwrap()
}

fn pair(w: f64) -> MetzlerZeroRowSum {
    MetzlerZeroRowSum::new(Matrix::from_rows(&[[-w, w], [w, -w]]).unwrap()).unwrap()
}

fn topology() -> SwitchedTopology {
    SwitchedTopology::new(vec![pair(1.0), pair(3.0)], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
}

/// `exp(t·M)·v` for a symmetric 2×2 `M` by explicit eigendecomposition.
fn expm_sym2(m: [[f64; 2]; 2], t: f64, v: [f64; 2]) -> [f64; 2] {
    let (a, b, c) = (m[0][0], m[0][1], m[1][1]);
    let mid = (a + c) / 2.0;
    let rad = ((a - c) / 2.0).hypot(b);
    let (l1, l2) = (mid + rad, mid - rad);
    // Unit eigenvector for l1.
    let (ux, uy) = if b.abs() > 0.0 {
        (b, l1 - a)
    } else if a >= c {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = ux.hypot(uy);
    let (ux, uy) = (ux / norm, uy / norm);
    let p1 = ux * v[0] + uy * v[1];
    let p2 = -uy * v[0] + ux * v[1];
    let (e1, e2) = ((l1 * t).exp() * p1, (l2 * t).exp() * p2);
    [ux * e1 - uy * e2, uy * e1 + ux * e2]
}

/// Error dynamics `e' = (aI + κL - κεC) e` for state `i` of [`topology`].
fn error_matrix(i: usize) -> [[f64; 2]; 2] {
    let topo = topology();
    let l = topo.coupling(i).matrix();
    let c = topo.pinning(i);
    let mut m = [[0.0; 2]; 2];
    for r in 0..2 {
        for k in 0..2 {
            m[r][k] = KAPPA * l[(r, k)];
        }
        m[r][r] += A - KAPPA * EPSILON * c[r];
    }
    m
}

fn run(path: &SwitchPath, h: f64, opts: &SimOptions) -> markov_pinning::switchnet::TrajectoryRecord {
    let params = CouplingParams::new(KAPPA, EPSILON).unwrap();
    simulate(&topology(), &scalar_linear(), params, path, &[1.0, -0.5], &[0.25], h, 1.0, opts).unwrap()
}

#[test]
fn constant_topology_matches_matrix_exponential() {
    let rec = run(&SwitchPath::constant(0, 1.0), 1e-3, &SimOptions::default());
    let e = expm_sym2(error_matrix(0), 1.0, [0.75, -0.75]);
    let expect = e[0].abs().max(e[1].abs());
    assert!((rec.final_varsigma() - expect).abs() < 1e-10 * expect, "{} vs {expect}", rec.final_varsigma());
}

#[test]
fn off_grid_jump_matches_piecewise_exponential() {
    let tj = 0.313_7;
    let path = SwitchPath { jumps: vec![(0, 0.0), (1, tj)], horizon: 1.0 };
    let opts = SimOptions { collect_step_endpoints: true, ..SimOptions::default() };
    let rec = run(&path, 1e-3, &opts);
    let e = expm_sym2(error_matrix(0), tj, [0.75, -0.75]);
    let e = expm_sym2(error_matrix(1), 1.0 - tj, e);
    let expect = e[0].abs().max(e[1].abs());
    assert!((rec.final_varsigma() - expect).abs() < 1e-10 * expect, "{} vs {expect}", rec.final_varsigma());
    assert_eq!(rec.split_steps, 1);
    let ends = rec.step_endpoints.unwrap();
    assert!(ends.contains(&tj));
    assert_eq!(ends.len(), 1000 + 2);
}

#[test]
fn synchronized_start_stays_synchronized() {
    let params = CouplingParams::new(KAPPA, EPSILON).unwrap();
    let path = SwitchPath { jumps: vec![(0, 0.0), (1, 0.2), (0, 0.55)], horizon: 1.0 };
    let rec =
        simulate(&topology(), &scalar_linear(), params, &path, &[0.3, 0.3], &[0.3], 1e-2, 1.0, &SimOptions::default())
            .unwrap();
    assert!(rec.varsigma.iter().all(|&v| v == 0.0));
}

#[test]
fn recorded_states_follow_the_path() {
    let path = SwitchPath { jumps: vec![(0, 0.0), (1, 0.25), (0, 0.75)], horizon: 1.0 };
    let opts = SimOptions { record_stride: Some(1), ..SimOptions::default() };
    let rec = run(&path, 0.125, &opts);
    assert_eq!(rec.times.len(), 9);
    for (t, s) in rec.times.iter().zip(&rec.states) {
        assert_eq!(*s, path.state_at(*t), "t = {t}");
    }
}

#[test]
fn identical_inputs_give_identical_records() {
    let path = SwitchPath { jumps: vec![(0, 0.0), (1, 0.41)], horizon: 1.0 };
    let a = run(&path, 1e-3, &SimOptions::default());
    let b = run(&path, 1e-3, &SimOptions::default());
    assert_eq!(a, b);
}

#[test]
fn path_shorter_than_horizon_is_rejected() {
    let params = CouplingParams::new(KAPPA, EPSILON).unwrap();
    let path = SwitchPath::constant(0, 0.5);
    let err =
        simulate(&topology(), &scalar_linear(), params, &path, &[0.0, 0.0], &[0.0], 1e-2, 1.0, &SimOptions::default());
    assert!(err.is_err());
}
