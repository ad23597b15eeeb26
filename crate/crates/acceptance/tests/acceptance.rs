//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero if any fails.

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use markov_pinning::certificates::{self as cert, DeltaWindow, FeasibleDelta, LyapunovWeights};
use markov_pinning::config::ExperimentConfig;
use markov_pinning::dynamics::{self, DynamicsSpec, LinearField, QuadData, SampleBox};
use markov_pinning::experiment::{self, Scenario, Setup};
use markov_pinning::markov::{self, InitialState};
use markov_pinning::matlin::{self, symmetric_part, Matrix};
use markov_pinning::mobility::{self, MobilityConfig};
use markov_pinning::switchnet::{self, rk4_step, Rk4Workspace, SimOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn slow_setup() -> Setup {
    Setup::new(ExperimentConfig::slow_switching(), Path::new(".")).unwrap()
}

fn switched(setup: &Setup) -> &experiment::SwitchedScenario {
    match &setup.scenario {
        Scenario::Switched(s) => s,
        Scenario::Mobile(_) => unreachable!(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

/// 1. Identity-weight closed loops are bounded by -0.75.
fn identity_closed_loops() -> Outcome {
    let start = Instant::now();
    let setup = slow_setup();
    let topo = &switched(&setup).data.topology;
    let mut worst = f64::NEG_INFINITY;
    let mut lambdas = Vec::new();
    for i in 0..topo.states() {
        let mut a = topo.coupling(i).matrix().scale(10.0);
        for (k, &c) in topo.pinning(i).iter().enumerate() {
            a[(k, k)] += 1.0 - 10.0 * c;
        }
        let (_, hi) = matlin::sym_eig_extremes(&symmetric_part(&a).unwrap()).unwrap();
        lambdas.push(hi);
        worst = worst.max(hi);
    }
    let elapsed = start.elapsed();
    let pass = worst <= -0.75 + 1e-9 && within(elapsed, Duration::from_secs(1));
    let shown: Vec<String> = lambdas.iter().map(|l| format!("{l:.4}")).collect();
    outcome(pass, format!("lambda_max = [{}], worst {worst:.4} vs -0.75, {elapsed:?}", shown.join(", ")))
}

/// 2. The slow-switching check passes at q = 0.74 and fails at q = 10.
fn slow_check_rate_sensitivity() -> Outcome {
    let start = Instant::now();
    let setup = slow_setup();
    let sw = switched(&setup);
    let topo = &sw.data.topology;
    let id3 = Matrix::identity(3);
    let w = LyapunovWeights::identity(topo.states(), topo.nodes());
    let check = |q: f64| {
        let g = markov::assemble_generator(&sw.data.embedded, &vec![q; topo.states()]).unwrap();
        cert::slow_switching_check(topo, &w, g.matrix(), 1.0, 0.5, setup.params, &id3, &id3, matlin::TOL).unwrap()
    };
    let slow = check(0.74);
    let fast = check(10.0);
    let elapsed = start.elapsed();
    let pass = slow.pass && !fast.pass && within(elapsed, Duration::from_secs(1));
    let worst = |c: &cert::SlowCertificate| c.lambda_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        pass,
        format!(
            "q=0.74 pass={} (worst lambda {:.4}); q=10 pass={} (worst lambda {:.4}); {elapsed:?}",
            slow.pass,
            worst(&slow),
            fast.pass,
            worst(&fast)
        ),
    )
}

/// 3. Ensemble of 20 slow-switching runs decays in mean square.
fn slow_ensemble() -> Outcome {
    let start = Instant::now();
    let setup = slow_setup();
    let runs = experiment::run_ensemble(&setup, 20).unwrap();
    let ens = experiment::summarize(&runs, setup.config.integration.horizon).unwrap();
    let elapsed = start.elapsed();
    let pass =
        ens.rate_ci.1 < 0.0 && ens.two_orders >= 18 && ens.diverged == 0 && within(elapsed, Duration::from_secs(60));
    outcome(
        pass,
        format!(
            "mean rate {:.3}, 95% CI [{:.3}, {:.3}], {}/20 runs with varsigma(10)/varsigma(0) < 1e-2, {elapsed:?}",
            ens.rate_mean, ens.rate_ci.0, ens.rate_ci.1, ens.two_orders
        ),
    )
}

/// 4. Window arithmetic with the quoted fast-switching constants.
fn window_arithmetic() -> Outcome {
    let start = Instant::now();
    let w = DeltaWindow { gap: 1.0, k4: 2500.0, rho: 33.0, lambda_min: 1.0, lambda_max: 1.0 };
    let at3 = cert::delta_condition(&w, 3e-4);
    let at4 = cert::delta_condition(&w, 4e-4);
    let star = cert::feasible_delta(&w);
    let elapsed = start.elapsed();
    let star_ok = matches!(star, FeasibleDelta::Boundary(d) if (3.9e-4..=4.0e-4).contains(&d));
    let pass = at3 < 0.0 && at4 > 0.0 && star_ok && within(elapsed, Duration::from_millis(1));
    outcome(pass, format!("lhs(3e-4) = {at3:.3e}, lhs(4e-4) = {at4:.3e}, delta* = {:?}, {elapsed:?}", star.delta()))
}

/// 5. Jump sampler sojourns, invariant distribution routes, k-step convergence.
fn markov_engine() -> Outcome {
    let setup = slow_setup();
    let sw = switched(&setup);
    let q = &sw.generator;
    let path = markov::sample_jumps(q, &InitialState::State(0), 100_000, 42).unwrap();
    let stats = path.stats(q.states());
    let rates = q.rates();
    let worst_rel = (0..q.states()).map(|i| (stats.mean_sojourn(i) * rates[i] - 1.0).abs()).fold(0.0, f64::max);
    let inv = markov::invariant_distribution(q).unwrap();
    let direct = markov::invariant_distribution_direct(q).unwrap();
    let route_gap = inv.pi.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut e1 = vec![0.0; q.states()];
    e1[0] = 1.0;
    let p50 = markov::kstep_distribution(&sw.data.embedded, &e1, 50).unwrap();
    let l1: f64 = p50.iter().zip(&inv.embedded).map(|(a, b)| (a - b).abs()).sum();
    let pass = worst_rel < 0.02 && route_gap < 1e-9 && l1 < 1e-6;
    let visits: Vec<String> = stats.visits.iter().map(|v| v.to_string()).collect();
    outcome(
        pass,
        format!(
            "worst sojourn deviation {:.2}% (visits {}), route gap {route_gap:.1e}, |pi(50) - pi_bar|_1 = {l1:.1e}",
            100.0 * worst_rel,
            visits.join("/")
        ),
    )
}

/// 6. RK4 convergence order on a forced linear equation.
fn rk4_order() -> Outcome {
    let exact = |t: f64| 1.5 * (-t).exp() + (t.sin() - t.cos()) / 2.0;
    let horizon = 5.0;
    let err = |h: f64| {
        let mut y = [1.0];
        let mut ws = Rk4Workspace::new(1);
        let mut f = |t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0] + t.sin();
        let steps = (horizon / h).round() as usize;
        for k in 0..steps {
            rk4_step(&mut f, k as f64 * h, &mut y, h, &mut ws).unwrap();
        }
        (y[0] - exact(horizon)).abs()
    };
    let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&h| err(h)).collect();
    let orders = [(e[0] / e[1]).log2(), (e[1] / e[2]).log2()];
    let pass = orders.iter().all(|o| (3.7..=4.3).contains(o));
    outcome(pass, format!("errors {:.2e} {:.2e} {:.2e}, orders {:.3} {:.3}", e[0], e[1], e[2], orders[0], orders[1]))
}

/// 7. Long-run pinned fraction and link frequency of the waypoint agents.
fn mobility_statistics() -> Outcome {
    let cfg = MobilityConfig::default();
    let (stats, _) = experiment::sample_mobility(&cfg, 42, 1e-3, 2000.0, |_, _, _| Ok(())).unwrap();
    let pin = stats.pinned_fraction();
    let link = stats.link_frequency();
    let reference = mobility::uniform_link_frequency(&cfg);
    let pass = (pin - 0.25).abs() <= 0.02 && (link / reference - 1.0).abs() <= 0.2;
    outcome(pass, format!("pinned fraction {pin:.4} (target 0.25 +- 0.02), link frequency {link:.4} vs {reference:.4}"))
}

/// 8. Mobile network runs decay by two orders within horizon 1.
fn mobile_runs() -> Outcome {
    let start = Instant::now();
    let setup = Setup::new(ExperimentConfig::mobile_spatial(), Path::new(".")).unwrap();
    let runs = experiment::run_ensemble(&setup, 5).unwrap();
    let ratios: Vec<f64> = runs.iter().map(|r| r.decay_ratio()).collect();
    let decayed = ratios.iter().filter(|&&r| r <= 1e-2).count();
    let elapsed = start.elapsed();
    let pass = decayed >= 4 && within(elapsed, Duration::from_secs(300));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3e}")).collect();
    outcome(
        pass,
        format!("varsigma(1)/varsigma(0) = [{}], {decayed}/5 decayed two orders, {elapsed:?}", shown.join(", ")),
    )
}

/// 9. Synchrony invariance, averaging, Perron residuals, QUAD controls.
fn property_suites() -> Outcome {
    let setup = slow_setup();
    let sw = switched(&setup);
    let topo = &sw.data.topology;

    // Everything starts on the target: the error must stay at zero.
    let path = markov::sample_path(&sw.generator, &sw.data.initial, 10.0, 3).unwrap();
    let s0 = vec![0.3, -0.2, 0.1];
    let x0: Vec<f64> = (0..topo.nodes()).flat_map(|_| s0.clone()).collect();
    let rec =
        switchnet::simulate(topo, &setup.dynamics, setup.params, &path, &x0, &s0, 0.01, 10.0, &SimOptions::default())
            .unwrap();
    let sync = rec.varsigma.iter().copied().fold(0.0, f64::max);

    let pi = markov::invariant_distribution(&sw.generator).unwrap();
    let avg = cert::average_matrices(&pi.pi, topo).unwrap();
    let l = avg.coupling.matrix();
    let n = l.rows();
    let row_sum_exact = (0..n).all(|i| l.row(i).iter().sum::<f64>().abs() <= 1e-14 * l.max_abs());
    let metzler = (0..n).all(|i| (0..n).all(|j| i == j || l[(i, j)] >= 0.0));

    let mut residual: f64 = 0.0;
    let mut reducible = Vec::new();
    for (i, c) in topo.couplings().iter().enumerate() {
        let v = match matlin::perron_left_vector(c) {
            Ok(v) => v,
            Err(_) => {
                reducible.push(i + 1);
                matlin::left_null_vector(c).unwrap()
            }
        };
        residual = residual.max(matlin::left_residual(c, &v));
    }

    let id = Matrix::identity(3);
    let positive = DynamicsSpec::new(
        Arc::new(LinearField(Matrix::identity(3))),
        id.clone(),
        QuadData { g: id.clone(), alpha: 1.0, beta: 0.5 },
        None,
    )
    .unwrap();
    let negative = DynamicsSpec::new(
        Arc::new(LinearField(Matrix::identity(3).scale(-2.0))),
        id.clone(),
        QuadData { g: id, alpha: 0.0, beta: 1.0 },
        None,
    )
    .unwrap();
    let dom = SampleBox { lo: -5.0, hi: 5.0 };
    let pos = dynamics::quad_falsifier(&positive, 10_000, dom, 1).unwrap();
    let neg = dynamics::quad_falsifier(&negative, 10_000, dom, 1).unwrap();

    let pass =
        sync < 1e-10 && row_sum_exact && metzler && residual <= 1e-9 && pos.found_violation() && !neg.found_violation();
    outcome(
        pass,
        format!(
            "sync drift {sync:.1e}, averaged Metzler={metzler} zero-rows={row_sum_exact}, null-vector residual {residual:.1e} \
             (reducible: {reducible:?}), QUAD controls +{} / -{}",
            pos.violations, neg.violations
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("identity-weight closed loops bounded by -0.75", identity_closed_loops),
        ("slow-switching check: q=0.74 passes, q=10 fails", slow_check_rate_sensitivity),
        ("slow-switching ensemble decays", slow_ensemble),
        ("fast-switching window arithmetic", window_arithmetic),
        ("Markov engine statistics", markov_engine),
        ("RK4 order", rk4_order),
        ("mobility statistics", mobility_statistics),
        ("mobile network decays two orders by t=1", mobile_runs),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {tag} {name}: {}", k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
