//! Experiment drivers.
//!
//! A [`Setup`] is a validated, fully resolved configuration. The drivers run
//! single trajectories, ensembles and certificate reports on top of it and
//! write their artifacts into an output directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::certificates::{self as cert, DeltaWindow, FastInputs, FeasibleDelta, LyapunovWeights};
use crate::config::{ExperimentConfig, ExperimentKind, SwitchingData, WeightChoice};
use crate::dynamics::{self, CnnParams, DynamicsSpec, SampleBox};
use crate::error::{Error, Result};
use crate::markov::{self, MarkovGenerator, SwitchPath};
use crate::matlin::{self, Matrix, MetzlerZeroRowSum};
use crate::mobility::{self, Mobility, MobilityConfig, MobilityStats, PositionWriter};
use crate::output::{gnuplot_script, write_atomic, write_text};
use crate::report::{Section, Summary};
use crate::rng::{self, streams};
use crate::switchnet::{
    self, grid_steps, rk4_step, CouplingParams, MeanSquareSeries, NetworkRhs, RateFit, Rk4Workspace, SimOptions,
    TrajectoryRecord,
};

/// Switched-topology data with its exit rates.
#[derive(Debug, Clone)]
pub struct SwitchedScenario {
    pub data: SwitchingData,
    pub rates: Vec<f64>,
    /// Whether the rates were drawn from the configured range.
    pub rates_drawn: bool,
    pub generator: MarkovGenerator,
}

#[derive(Debug, Clone)]
pub enum Scenario {
    Switched(SwitchedScenario),
    Mobile(MobilityConfig),
}

#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub dynamics: DynamicsSpec,
    pub cnn: Option<CnnParams>,
    pub params: CouplingParams,
    pub scenario: Scenario,
}

/// Exit rates drawn once from `(lo, hi)`; zero draws are rejected so every
/// state has a finite mean sojourn.
pub fn draw_rates(states: usize, range: [f64; 2], seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, streams::RATES);
    (0..states)
        .map(|_| loop {
            let q = r.random_range(range[0]..range[1]);
            if q > 0.0 {
                break q;
            }
        })
        .collect()
}

/// Node states `x` (`m·n` entries) and target `s` (`n` entries), uniform in `[lo, hi]`.
pub fn initial_condition(m: usize, n: usize, lo: f64, hi: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng::stream(seed, streams::INITIAL_STATE);
    let x = (0..m * n).map(|_| r.random_range(lo..hi)).collect();
    let s = (0..n).map(|_| r.random_range(lo..hi)).collect();
    (x, s)
}

impl Setup {
    pub fn new(config: ExperimentConfig, base: &Path) -> Result<Self> {
        config.validate_common()?;
        let dynamics = config.dynamics.resolve(base)?;
        let cnn = config.dynamics.cnn_params(base)?;
        let params = config.coupling_params()?;
        let scenario = match config.kind {
            ExperimentKind::SlowSwitching | ExperimentKind::Custom => {
                let sw = config
                    .switching
                    .as_ref()
                    .ok_or_else(|| Error::Config("this experiment needs a [switching] table".into()))?;
                let data = sw.resolve(base)?;
                let states = data.topology.states();
                let (rates, rates_drawn) = match (&sw.rates, sw.rate_range) {
                    (Some(r), _) => (r.clone(), false),
                    (None, Some(range)) => (draw_rates(states, range, config.seed), true),
                    (None, None) => unreachable!("checked by SwitchingConfig::resolve"),
                };
                let generator = markov::assemble_generator(&data.embedded, &rates)?;
                Scenario::Switched(SwitchedScenario { data, rates, rates_drawn, generator })
            }
            ExperimentKind::MobileSpatial => {
                let m = config
                    .mobility
                    .clone()
                    .ok_or_else(|| Error::Config("this experiment needs a [mobility] table".into()))?;
                m.validate()?;
                Scenario::Mobile(m)
            }
        };
        Ok(Self { config, dynamics, cnn, params, scenario })
    }

    pub fn nodes(&self) -> usize {
        match &self.scenario {
            Scenario::Switched(s) => s.data.topology.nodes(),
            Scenario::Mobile(m) => m.agents,
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions { record_stride: self.config.integration.record_stride, ..SimOptions::default() }
    }

    fn initial(&self, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let b = self.config.initial;
        initial_condition(self.nodes(), self.dynamics.dim(), b.lo, b.hi, seed)
    }
}

/// Distinct (coupling, pinning) pairs met along a mobility run, with the
/// time spent in each.
#[derive(Debug, Clone, Default)]
pub struct TopologyFamily {
    index: HashMap<Vec<u8>, usize>,
    members: Vec<(MetzlerZeroRowSum, Vec<f64>)>,
    occupancy: Vec<f64>,
    coupling_sum: Option<Matrix>,
    pinning_sum: Vec<f64>,
    total: f64,
}

impl TopologyFamily {
    /// Records `duration` spent in the given topology and returns its id.
    pub fn observe(&mut self, l: &MetzlerZeroRowSum, pins: &[f64], duration: f64) -> usize {
        let m = l.dim();
        let mut key = Vec::with_capacity(m * m + m);
        for i in 0..m {
            for j in 0..m {
                key.push(u8::from(i != j && l.matrix()[(i, j)] != 0.0));
            }
        }
        key.extend(pins.iter().map(|&c| u8::from(c != 0.0)));
        let next = self.members.len();
        let id = *self.index.entry(key).or_insert(next);
        if id == next {
            self.members.push((l.clone(), pins.to_vec()));
            self.occupancy.push(0.0);
        }
        self.occupancy[id] += duration;
        match self.coupling_sum.as_mut() {
            Some(acc) => acc.axpy(duration, l.matrix()).expect("same dimension"),
            None => self.coupling_sum = Some(l.matrix().scale(duration)),
        }
        self.pinning_sum.resize(pins.len(), 0.0);
        for (acc, &c) in self.pinning_sum.iter_mut().zip(pins) {
            *acc += duration * c;
        }
        self.total += duration;
        id
    }

    pub fn distinct(&self) -> usize {
        self.members.len()
    }

    /// Time-averaged `L̄`, `C̄` over everything observed.
    pub fn average(&self) -> Result<cert::AverageNetwork> {
        let sum = self.coupling_sum.as_ref().ok_or_else(|| Error::Domain("empty topology family".into()))?;
        Ok(cert::AverageNetwork {
            coupling: MetzlerZeroRowSum::rebalanced(sum.scale(1.0 / self.total))?,
            pinning: self.pinning_sum.iter().map(|c| c / self.total).collect(),
        })
    }

    /// The `cap` most-occupied members and the fraction of time they cover.
    pub fn most_occupied(&self, cap: usize) -> Result<(switchnet::SwitchedTopology, f64)> {
        let mut order: Vec<usize> = (0..self.members.len()).collect();
        order.sort_by(|&a, &b| self.occupancy[b].total_cmp(&self.occupancy[a]).then(a.cmp(&b)));
        order.truncate(cap);
        let covered: f64 = order.iter().map(|&i| self.occupancy[i]).sum();
        let couplings = order.iter().map(|&i| self.members[i].0.clone()).collect();
        let pinning = order.iter().map(|&i| self.members[i].1.clone()).collect();
        Ok((switchnet::SwitchedTopology::new(couplings, pinning)?, covered / self.total))
    }
}

/// Runs the agents alone for `horizon` at step `dt`, collecting statistics
/// and the visited topologies; `visit` sees `(step, t, positions)` before each
/// step and once more at `t = horizon`.
pub fn sample_mobility<F>(
    cfg: &MobilityConfig,
    seed: u64,
    dt: f64,
    horizon: f64,
    mut visit: F,
) -> Result<(MobilityStats, TopologyFamily)>
where
    F: FnMut(usize, f64, &[[f64; 2]]) -> Result<()>,
{
    let mut mob = Mobility::new(cfg.clone(), rng::stream(seed, streams::MOBILITY))?;
    let mut stats = MobilityStats::default();
    let mut family = TopologyFamily::default();
    let steps = grid_steps(horizon, dt);
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let t1 = if k + 1 == steps { horizon } else { (k + 1) as f64 * dt };
        let pos = mob.positions();
        visit(k, t0, &pos)?;
        stats.observe(&pos, cfg);
        family.observe(&mob.topology(), &mob.pinning(), t1 - t0);
        mob.step(t1 - t0)?;
    }
    visit(steps, horizon, &mob.positions())?;
    Ok((stats, family))
}

/// One network run among mobile agents: topology and pinning are read off
/// the agent positions at the start of every step and held over the step.
pub fn run_mobile(
    setup: &Setup,
    cfg: &MobilityConfig,
    seed: u64,
    opts: &SimOptions,
) -> Result<(TrajectoryRecord, MobilityStats)> {
    let (m, n) = (cfg.agents, setup.dynamics.dim());
    let IntegrationParams { h, horizon } = setup.integration();
    let mut mob = Mobility::new(cfg.clone(), rng::stream(seed, streams::MOBILITY))?;
    let (x0, s0) = setup.initial(seed);
    let mut y: Vec<f64> = x0.into_iter().chain(s0).collect();
    let mut rhs = NetworkRhs::new(&setup.dynamics, setup.params, m);
    let mut ws = Rk4Workspace::new(rhs.state_len());
    let mut family = TopologyFamily::default();
    let mut stats = MobilityStats::default();
    let steps = grid_steps(horizon, h);
    let stride = opts.stride_for(steps);
    let mut record = TrajectoryRecord { node_errors: opts.record_node_errors.then(Vec::new), ..Default::default() };

    let mut l = mob.topology();
    let mut pins = mob.pinning();
    let mut id = family.observe(&l, &pins, 0.0);
    record.push(0.0, id, &y[..m * n], &y[m * n..]);
    for k in 0..steps {
        let t0 = k as f64 * h;
        let t1 = if k + 1 == steps { horizon } else { (k + 1) as f64 * h };
        stats.observe(&mob.positions(), cfg);
        let mut f = |t: f64, yy: &[f64], dy: &mut [f64]| rhs.eval(t, yy, l.matrix(), &pins, dy);
        rk4_step(&mut f, t0, &mut y, t1 - t0, &mut ws)?;
        mob.step(t1 - t0)?;
        l = mob.topology();
        pins = mob.pinning();
        id = family.observe(&l, &pins, t1 - t0);

        let (x, s) = y.split_at(m * n);
        if x.iter().chain(s).any(|v| v.abs() > opts.divergence_guard) {
            record.push(t1, id, x, s);
            record.diverged = true;
            break;
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            record.push(t1, id, x, s);
        }
    }
    Ok((record, stats))
}

#[derive(Debug, Clone, Copy)]
struct IntegrationParams {
    h: f64,
    horizon: f64,
}

impl Setup {
    fn integration(&self) -> IntegrationParams {
        IntegrationParams { h: self.config.integration.h, horizon: self.config.integration.horizon }
    }
}

/// Output of one run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub index: usize,
    pub seed: u64,
    pub record: TrajectoryRecord,
    pub path: Option<SwitchPath>,
    pub mobility: Option<MobilityStats>,
}

impl RunResult {
    /// `ς(T)/ς(0)`.
    pub fn decay_ratio(&self) -> f64 {
        self.record.final_varsigma() / self.record.varsigma[0]
    }
}

/// Runs one trajectory with the given seed.
pub fn run_once(setup: &Setup, index: usize, seed: u64) -> Result<RunResult> {
    let opts = setup.sim_options();
    let IntegrationParams { h, horizon } = setup.integration();
    match &setup.scenario {
        Scenario::Switched(sw) => {
            let path = markov::sample_path(&sw.generator, &sw.data.initial, horizon, seed)?;
            let (x0, s0) = setup.initial(seed);
            let record = switchnet::simulate(
                &sw.data.topology,
                &setup.dynamics,
                setup.params,
                &path,
                &x0,
                &s0,
                h,
                horizon,
                &opts,
            )?;
            Ok(RunResult { index, seed, record, path: Some(path), mobility: None })
        }
        Scenario::Mobile(cfg) => {
            let (record, stats) = run_mobile(setup, cfg, seed, &opts)?;
            Ok(RunResult { index, seed, record, path: None, mobility: Some(stats) })
        }
    }
}

/// Runs `runs` trajectories with seeds `run_seed(master, i)`, in parallel.
pub fn run_ensemble(setup: &Setup, runs: usize) -> Result<Vec<RunResult>> {
    let master = setup.config.seed;
    (0..runs).into_par_iter().map(|i| run_once(setup, i, rng::run_seed(master, i as u64))).collect()
}

/// Aggregate statistics of an ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub diverged: usize,
    /// Per-run fitted rates of the node-averaged squared error.
    pub rates: Vec<f64>,
    pub rate_mean: f64,
    /// Normal-approximation 95% interval of the mean rate.
    pub rate_ci: (f64, f64),
    /// Fit of the ensemble mean-square series.
    pub ensemble_fit: Option<RateFit>,
    pub series: Option<MeanSquareSeries>,
    /// Runs with `ς(T)/ς(0) < 1e-2`.
    pub two_orders: usize,
    pub fit_window: (f64, f64),
}

/// Rates are fitted on `[0.1·T, T]` to skip the initial transient.
pub fn summarize(results: &[RunResult], horizon: f64) -> Result<EnsembleSummary> {
    let window = (0.1 * horizon, horizon);
    let kept: Vec<&RunResult> = results.iter().filter(|r| !r.record.diverged).collect();
    let rates: Vec<f64> =
        kept.iter().map(|r| switchnet::fit_exponential_rate(&r.record.times, &r.record.mean_sq, window).rate).collect();
    let k = rates.len() as f64;
    let rate_mean = if rates.is_empty() { f64::NAN } else { rates.iter().sum::<f64>() / k };
    let half = if rates.len() > 1 {
        let var = rates.iter().map(|r| (r - rate_mean).powi(2)).sum::<f64>() / (k - 1.0);
        1.96 * (var / k).sqrt()
    } else {
        0.0
    };
    let series = if kept.is_empty() {
        None
    } else {
        let records: Vec<TrajectoryRecord> = kept.iter().map(|r| r.record.clone()).collect();
        Some(switchnet::mean_square_error(&records)?)
    };
    let ensemble_fit = series.as_ref().map(|s| switchnet::fit_exponential_rate(&s.times, &s.values, window));
    Ok(EnsembleSummary {
        runs: results.len(),
        diverged: results.len() - kept.len(),
        rates,
        rate_mean,
        rate_ci: (rate_mean - half, rate_mean + half),
        ensemble_fit,
        series,
        two_orders: kept.iter().filter(|r| r.decay_ratio() < 1e-2).count(),
        fit_window: window,
    })
}

impl EnsembleSummary {
    pub fn to_section(&self) -> Section {
        let mut s = Section::new("ensemble");
        s.push("runs", self.runs);
        s.push("diverged", self.diverged);
        s.push("fit_window", format!("{} {}", self.fit_window.0, self.fit_window.1));
        s.push("rate_mean", self.rate_mean);
        s.push("rate_ci95_low", self.rate_ci.0);
        s.push("rate_ci95_high", self.rate_ci.1);
        if let Some(f) = self.ensemble_fit {
            s.push("mean_square_rate", f.rate);
        }
        s.push("runs_decayed_two_orders", self.two_orders);
        s
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Certificate sections and whether the requested certificate passed.
#[derive(Debug, Clone)]
pub struct CertificateOutcome {
    pub sections: Vec<Section>,
    pub pass: bool,
}

/// Pairs sampled by the QUAD falsifier in the reports, on `[-5, 5]^n`.
pub const QUAD_SAMPLES: usize = 100_000;

fn quad_sections(setup: &Setup) -> Result<Vec<Section>> {
    let rep =
        dynamics::quad_falsifier(&setup.dynamics, QUAD_SAMPLES, SampleBox { lo: -5.0, hi: 5.0 }, setup.config.seed)?;
    let mut s = Section::new("quad_falsifier");
    s.push("alpha", setup.dynamics.quad.alpha);
    s.push("beta", setup.dynamics.quad.beta);
    s.push("samples", rep.samples);
    s.push("violations", rep.violations);
    s.push("worst_normalized_margin", rep.worst_normalized_margin);
    let mut out = vec![s];
    if let Some(p) = &setup.cnn {
        let lip = dynamics::lipschitz_bound(p)?;
        let mut s = Section::new("lipschitz");
        s.push("safe_bound", lip.safe_bound);
        s.push("one_sided", lip.one_sided);
        if let Some(lf) = setup.dynamics.lipschitz {
            s.push("configured", lf);
        }
        out.push(s);
    }
    Ok(out)
}

/// Slow-switching check, rate ceilings and averaged network.
pub fn switched_certificates(setup: &Setup, sw: &SwitchedScenario) -> Result<CertificateOutcome> {
    let topo = &sw.data.topology;
    let d = &setup.dynamics;
    let (alpha, beta) = (d.quad.alpha, d.quad.beta);
    let mut sections = Vec::new();

    let mut s = Section::new("switching");
    s.push("states", topo.states());
    s.push("nodes", topo.nodes());
    s.push("rates", join(&sw.rates));
    s.push("rates_drawn", sw.rates_drawn);
    let pi = markov::invariant_distribution(&sw.generator);
    match &pi {
        Ok(p) => s.push("invariant_distribution", join(&p.pi)),
        Err(e) => s.push("invariant_distribution", format!("unavailable: {e}")),
    }
    sections.push(s);

    let perron = cert::perron_weights(topo);
    let weights = match setup.config.certificates.weights {
        WeightChoice::Identity => LyapunovWeights::identity(topo.states(), topo.nodes()),
        WeightChoice::Perron => match &perron {
            Ok(w) => w.clone(),
            Err(e) => return Err(Error::CertificateInapplicable(format!("Perron weights requested: {e}"))),
        },
    };
    let slow = cert::slow_switching_check(
        topo,
        &weights,
        sw.generator.matrix(),
        alpha,
        beta,
        setup.params,
        &d.quad.g,
        &d.gamma,
        matlin::TOL,
    )?;
    let mut s = slow.to_section("slow_switching");
    s.push("weights", format!("{:?}", setup.config.certificates.weights).to_lowercase());
    sections.push(s);

    let mut s = Section::new("rate_bound_identity");
    let identity = LyapunovWeights::identity(topo.states(), topo.nodes());
    match cert::perron_rate_bound(topo, &identity, alpha, setup.params) {
        Ok(b) => {
            s.push("bounds", join(&b));
            s.push("rates_below_bounds", sw.rates.iter().zip(&b).all(|(q, b)| q < b));
        }
        Err(e) => s.push("status", format!("inapplicable: {e}")),
    }
    sections.push(s);

    let mut s = Section::new("rate_bound_perron");
    match &perron {
        Ok(w) => match cert::perron_rate_bound(topo, w, alpha, setup.params) {
            Ok(b) => {
                s.push("bounds", join(&b));
                s.push("rates_below_bounds", sw.rates.iter().zip(&b).all(|(q, b)| q < b));
            }
            Err(e) => s.push("status", format!("inapplicable: {e}")),
        },
        Err(e) => s.push("status", format!("unavailable: {e}")),
    }
    sections.push(s);

    if let Ok(p) = &pi {
        let avg = cert::average_matrices(&p.pi, topo)?;
        let mut s = Section::new("average_network");
        for (i, row) in avg.coupling.matrix().to_rows().iter().enumerate() {
            s.push(format!("coupling.{}", i + 1), join(row));
        }
        s.push("pinning", join(&avg.pinning));
        sections.push(s);
    }
    sections.extend(quad_sections(setup)?);
    Ok(CertificateOutcome { sections, pass: slow.pass })
}

/// Reference constants quoted for the mobile experiment: `K1 - K3 = 1`,
/// `K4 = 2500`, `ρ = 33`, `P̃ = I`.
pub const REFERENCE_WINDOW: DeltaWindow =
    DeltaWindow { gap: 1.0, k4: 2500.0, rho: 33.0, lambda_min: 1.0, lambda_max: 1.0 };

/// Fast-switching check on a sampled topology family, escape-time bounds
/// and mobility statistics.
pub fn mobile_certificates(setup: &Setup, mcfg: &MobilityConfig) -> Result<CertificateOutcome> {
    let cc = &setup.config.certificates;
    let d = &setup.dynamics;
    let lipschitz =
        d.lipschitz.ok_or_else(|| Error::Config("the fast-switching check needs dynamics.lipschitz".into()))?;
    let (stats, family) =
        sample_mobility(mcfg, setup.config.seed, setup.config.integration.h, cc.family_horizon, |_, _, _| Ok(()))?;
    let avg = family.average()?;
    let (topo, coverage) = family.most_occupied(cc.family_cap)?;
    let weight = vec![1.0; mcfg.agents];
    let inputs = FastInputs {
        weight: &weight,
        alpha: d.quad.alpha,
        beta: d.quad.beta,
        lipschitz,
        params: setup.params,
        g: &d.quad.g,
        gamma: &d.gamma,
    };
    let constants = cert::fast_constants(&topo, &avg, &inputs)?;
    let fast = cert::fast_certificate(constants, cc.delta, cc.r_steps);

    let mut sections = Vec::new();
    let mut s = Section::new("mobility");
    s.push("sample_horizon", cc.family_horizon);
    s.push("pinned_fraction", stats.pinned_fraction());
    s.push("link_frequency", stats.link_frequency());
    s.push("uniform_link_frequency", mobility::uniform_link_frequency(mcfg));
    s.push("distinct_topologies", family.distinct());
    s.push("topologies_used", topo.states());
    s.push("occupancy_covered", coverage);
    sections.push(s);
    sections.push(fast.to_section("fast_switching"));

    // Uniform-density averages: l̄ = πr²/W² off the diagonal, C̄ = I/4.
    let m = mcfg.agents;
    let l = mobility::uniform_link_frequency(mcfg);
    let mut lbar = Matrix::from_diag(&vec![-(m as f64 - 1.0) * l; m]);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                lbar[(i, j)] = l;
            }
        }
    }
    let region_share = mcfg.control.area() / mcfg.arena().area();
    let uniform_avg =
        cert::AverageNetwork { coupling: MetzlerZeroRowSum::rebalanced(lbar)?, pinning: vec![region_share; m] };
    let uniform = cert::fast_constants(&topo, &uniform_avg, &inputs)?;
    let mut s = Section::new("fast_switching_uniform_average");
    s.push("K3", uniform.k3);
    s.push("K1_minus_K3", uniform.k1 - uniform.k3);
    sections.push(s);

    let lhs = cert::delta_condition(&REFERENCE_WINDOW, cc.delta);
    let mut s = Section::new("fast_switching_reference");
    s.push("K1_minus_K3", REFERENCE_WINDOW.gap);
    s.push("K4", REFERENCE_WINDOW.k4);
    s.push("rho", REFERENCE_WINDOW.rho);
    s.push("delta", cc.delta);
    s.push("window_lhs", lhs);
    s.push("marginal", lhs >= 0.0);
    if let FeasibleDelta::Boundary(ds) = cert::feasible_delta(&REFERENCE_WINDOW) {
        s.push("delta_star", ds);
    }
    sections.push(s);

    let arena_d = mcfg.arena().diameter();
    let region_d = mcfg.control.diameter();
    let (w, e) = mobility::escape_bounds(mcfg, cc.p_bar, cc.p_tilde, arena_d, region_d)?;
    let budget = cc.r_steps as f64 * cc.delta;
    let mut s = Section::new("escape_bounds");
    s.push("meeting_bound", w);
    s.push("entry_bound", e);
    s.push("r_delta", budget);
    s.push("within_budget", w < budget && e < budget);
    sections.push(s);
    sections.extend(quad_sections(setup)?);

    Ok(CertificateOutcome { sections, pass: fast.pass && w < budget && e < budget })
}

pub fn certificates(setup: &Setup) -> Result<CertificateOutcome> {
    match &setup.scenario {
        Scenario::Switched(sw) => switched_certificates(setup, sw),
        Scenario::Mobile(m) => mobile_certificates(setup, m),
    }
}

/// Result of a driver: the summary written to disk and whether the run
/// should be reported as a failure (certificate failed or divergence).
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub summary: Summary,
    pub failed: bool,
    pub files: Vec<PathBuf>,
}

fn experiment_section(setup: &Setup) -> Section {
    let c = &setup.config;
    let mut s = Section::new("experiment");
    s.push("kind", c.kind);
    s.push("seed", c.seed);
    s.push("runs", c.runs);
    s.push("kappa", c.network.kappa);
    s.push("epsilon", c.network.epsilon);
    s.push("h", c.integration.h);
    s.push("horizon", c.integration.horizon);
    s
}

fn write_summary(out: &Path, summary: &Summary, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = out.join("summary.txt");
    write_text(&p, &summary.to_string())?;
    files.push(p);
    Ok(())
}

fn write_series(out: &Path, series: &MeanSquareSeries, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = out.join("mean_square.csv");
    write_atomic(&p, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["t", "mean_square"])?;
        for (t, v) in series.times.iter().zip(&series.values) {
            c.write_record([t.to_string(), format!("{v:e}")])?;
        }
        c.flush()?;
        Ok(())
    })?;
    let gp = out.join("mean_square.gp");
    write_text(&gp, &gnuplot_script("mean_square.csv", "mean_square", "ensemble mean-square error"))?;
    files.extend([p, gp]);
    Ok(())
}

fn run_section(r: &RunResult) -> Section {
    let mut s = Section::new(format!("run.{}", r.index + 1));
    s.push("seed", r.seed);
    s.push("varsigma_initial", r.record.varsigma[0]);
    s.push("varsigma_final", r.record.final_varsigma());
    s.push("decay_ratio", r.decay_ratio());
    s.push("diverged", r.record.diverged);
    s.push("split_steps", r.record.split_steps);
    if let Some(p) = &r.path {
        s.push("jumps", p.jumps.len() - 1);
    }
    if let Some(m) = &r.mobility {
        s.push("pinned_fraction", m.pinned_fraction());
        s.push("link_frequency", m.link_frequency());
    }
    s
}

/// Runs `config.runs` trajectories and writes one `trajectory_NNN.csv`
/// (plus plot script and, for Markov switching, `switching_NNN.csv`) per
/// run, the ensemble mean square and a summary including certificates.
pub fn simulate(setup: &Setup, out: &Path) -> Result<Artifacts> {
    let results = run_ensemble(setup, setup.config.runs)?;
    let mut files = Vec::new();
    for r in &results {
        let name = format!("trajectory_{:03}.csv", r.index + 1);
        let p = out.join(&name);
        write_atomic(&p, |w| r.record.write_csv(w))?;
        let gp = out.join(format!("trajectory_{:03}.gp", r.index + 1));
        write_text(&gp, &gnuplot_script(&name, "varsigma", &format!("run {}", r.index + 1)))?;
        files.extend([p, gp]);
        if let Some(path) = &r.path {
            let p = out.join(format!("switching_{:03}.csv", r.index + 1));
            write_atomic(&p, |w| path.write_csv(w))?;
            files.push(p);
        }
    }
    let ens = summarize(&results, setup.config.integration.horizon)?;
    if let Some(series) = &ens.series {
        write_series(out, series, &mut files)?;
    }
    let certs = certificates(setup)?;
    let mut summary = Summary::default();
    summary.push(experiment_section(setup));
    summary.sections.extend(certs.sections);
    for r in &results {
        summary.push(run_section(r));
    }
    summary.push(ens.to_section());
    write_summary(out, &summary, &mut files)?;
    Ok(Artifacts { summary, failed: ens.diverged > 0, files })
}

/// Every applicable certificate; fails iff the requested one fails.
pub fn report_certificates(setup: &Setup, out: &Path) -> Result<Artifacts> {
    let certs = certificates(setup)?;
    let mut summary = Summary::default();
    summary.push(experiment_section(setup));
    let mut s = Section::new("verdict");
    s.push("pass", certs.pass);
    summary.push(s);
    summary.sections.extend(certs.sections);
    let mut files = Vec::new();
    write_summary(out, &summary, &mut files)?;
    Ok(Artifacts { summary, failed: !certs.pass, files })
}

/// Ensemble statistics only: `mean_square.csv` and the summary.
pub fn montecarlo(setup: &Setup, out: &Path) -> Result<Artifacts> {
    let results = run_ensemble(setup, setup.config.runs)?;
    let ens = summarize(&results, setup.config.integration.horizon)?;
    let mut files = Vec::new();
    if let Some(series) = &ens.series {
        write_series(out, series, &mut files)?;
    }
    let mut summary = Summary::default();
    summary.push(experiment_section(setup));
    summary.push(ens.to_section());
    let mut s = Section::new("per_run_rates");
    for (r, rate) in results.iter().filter(|r| !r.record.diverged).zip(&ens.rates) {
        s.push(format!("run.{}", r.index + 1), rate);
    }
    summary.push(s);
    write_summary(out, &summary, &mut files)?;
    Ok(Artifacts { summary, failed: ens.diverged > 0, files })
}

/// Agents only: `positions.csv` every `stride` steps and pin/link statistics.
pub fn mobility_report(setup: &Setup, out: &Path, dt: f64, horizon: f64, stride: usize) -> Result<Artifacts> {
    let Scenario::Mobile(mcfg) = &setup.scenario else {
        return Err(Error::Config("the mobility command needs a mobile-spatial config".into()));
    };
    if !(dt > 0.0 && horizon > 0.0) || stride == 0 {
        return Err(Error::Domain("dt, horizon and stride must be positive".into()));
    }
    let p = out.join("positions.csv");
    let mut result = None;
    write_atomic(&p, |w| {
        let mut pw = PositionWriter::new(w)?;
        let sampled = sample_mobility(mcfg, setup.config.seed, dt, horizon, |k, t, pos| {
            if k % stride == 0 || t == horizon {
                pw.write(t, pos, &mcfg.control)?;
            }
            Ok(())
        })?;
        pw.finish()?;
        result = Some(sampled);
        Ok(())
    })?;
    let (stats, family) = result.expect("filled by the writer");
    let mut summary = Summary::default();
    summary.push(experiment_section(setup));
    let mut s = Section::new("mobility");
    s.push("dt", dt);
    s.push("horizon", horizon);
    s.push("samples", stats.samples);
    s.push("pinned_fraction", stats.pinned_fraction());
    s.push("link_frequency", stats.link_frequency());
    s.push("uniform_link_frequency", mobility::uniform_link_frequency(mcfg));
    s.push("distinct_topologies", family.distinct());
    summary.push(s);
    let mut files = vec![p];
    write_summary(out, &summary, &mut files)?;
    Ok(Artifacts { summary, failed: false, files })
}
