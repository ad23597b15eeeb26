//! Experiment configuration files.
//!
//! A config is a TOML document with one table per concern. Matrices are given
//! inline as row lists or as `{ file = "path" }`, pointing at a plain-text
//! file of whitespace-separated decimals, one row per line. Relative paths are
//! resolved against the config file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Cnn, CnnParams, DynamicsSpec, LinearField, QuadData};
use crate::error::{Error, Result};
use crate::markov::{EmbeddedChain, InitialState};
use crate::matlin::{Matrix, MetzlerZeroRowSum};
use crate::mobility::MobilityConfig;
use crate::switchnet::{CouplingParams, SwitchedTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SlowSwitching,
    MobileSpatial,
    Custom,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SlowSwitching => "slow-switching",
            Self::MobileSpatial => "mobile-spatial",
            Self::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Inline(Vec<Vec<f64>>),
    File { file: PathBuf },
}

impl MatrixSource {
    pub fn resolve(&self, base: &Path) -> Result<Matrix> {
        match self {
            Self::Inline(rows) => Matrix::from_rows(rows),
            Self::File { file } => {
                let path = base.join(file);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                parse_matrix_text(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            }
        }
    }
}

/// Parses whitespace-separated rows; blank lines and `#` comments are ignored.
pub fn parse_matrix_text(text: &str) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|tok| tok.parse::<f64>().map_err(|_| Error::Config(format!("not a number: {tok:?}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Config("empty matrix".into()));
    }
    Matrix::from_rows(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeModel {
    /// `-Dx + T g(x)`.
    Cnn,
    /// `Ax`.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub node: NodeModel,
    /// `D` for the CNN node (default identity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<MatrixSource>,
    /// `T` for the CNN node, `A` for the linear node (CNN default: double scroll).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<MatrixSource>,
    /// Inner coupling Γ (default identity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<MatrixSource>,
    /// QUAD weight G (default identity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<MatrixSource>,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            node: NodeModel::Cnn,
            d: None,
            weights: None,
            gamma: None,
            g: None,
            alpha: 1.0,
            beta: 0.5,
            lipschitz: None,
        }
    }
}

impl DynamicsConfig {
    /// CNN weights, or `None` for other node models.
    pub fn cnn_params(&self, base: &Path) -> Result<Option<CnnParams>> {
        if self.node != NodeModel::Cnn {
            return Ok(None);
        }
        let mut p = CnnParams::double_scroll();
        if let Some(t) = self.weights.as_ref().map(|s| s.resolve(base)).transpose()? {
            p.d = Matrix::identity(t.rows());
            p.t = t;
        }
        if let Some(d) = self.d.as_ref().map(|s| s.resolve(base)).transpose()? {
            p.d = d;
        }
        CnnParams::new(p.d, p.t).map(Some)
    }

    pub fn resolve(&self, base: &Path) -> Result<DynamicsSpec> {
        let opt = |m: &Option<MatrixSource>| m.as_ref().map(|s| s.resolve(base)).transpose();
        let field: Arc<dyn crate::dynamics::VectorField> = match self.node {
            NodeModel::Cnn => Arc::new(Cnn(self.cnn_params(base)?.expect("cnn node"))),
            NodeModel::Linear => {
                let a = opt(&self.weights)?.ok_or_else(|| Error::Config("linear node needs `weights`".into()))?;
                if !a.is_square() {
                    return Err(Error::Dimension("linear node matrix must be square".into()));
                }
                Arc::new(LinearField(a))
            }
        };
        let n = field.dim();
        let gamma = opt(&self.gamma)?.unwrap_or_else(|| Matrix::identity(n));
        let g = opt(&self.g)?.unwrap_or_else(|| Matrix::identity(n));
        if let Some(lf) = self.lipschitz {
            if !(lf >= 0.0 && lf.is_finite()) {
                return Err(Error::Domain(format!("Lipschitz constant {lf} must be finite and nonnegative")));
            }
        }
        DynamicsSpec::new(field, gamma, QuadData { g, alpha: self.alpha, beta: self.beta }, self.lipschitz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub kappa: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub h: f64,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
}

/// Initial node and target states are drawn uniformly from `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub lo: f64,
    pub hi: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { lo: -2.0, hi: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingConfig {
    /// Embedded jump chain.
    pub embedded: MatrixSource,
    /// Exit rates; when absent they are drawn once from `rate_range`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_range: Option<[f64; 2]>,
    /// 1-based starting state; absent means uniform over states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<usize>,
    pub couplings: Vec<MatrixSource>,
    /// Pinning diagonals, one per state.
    pub pinning: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightChoice {
    Identity,
    Perron,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    /// Weights used by the slow-switching check.
    pub weights: WeightChoice,
    /// Window length `Δ` and integer `r` of the fast-switching check.
    pub delta: f64,
    pub r_steps: u64,
    /// Probabilities in the meeting/entry time bounds.
    pub p_bar: f64,
    pub p_tilde: f64,
    /// Most-occupied distinct topologies kept when sampling a mobile family.
    pub family_cap: usize,
    /// Length of the mobility run used to sample that family.
    pub family_horizon: f64,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self {
            weights: WeightChoice::Identity,
            delta: 4e-4,
            r_steps: 750,
            p_bar: 0.99,
            p_tilde: 0.75,
            family_cap: 64,
            family_horizon: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub dynamics: DynamicsConfig,
    pub network: NetworkConfig,
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub certificates: CertificateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching: Option<SwitchingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mobility: Option<MobilityConfig>,
}

fn inline(rows: &[&[f64]]) -> MatrixSource {
    MatrixSource::Inline(rows.iter().map(|r| r.to_vec()).collect())
}

impl ExperimentConfig {
    /// Five-state switched network with stable pinned subsystems.
    pub fn slow_switching() -> Self {
        let couplings = vec![
            inline(&[
                &[-3.0, 0.0, 1.0, 1.0, 1.0],
                &[0.0, -2.0, 0.0, 1.0, 1.0],
                &[1.0, 1.0, -3.0, 0.0, 1.0],
                &[0.0, 0.0, 0.0, -1.0, 1.0],
                &[1.0, 1.0, 0.0, 0.0, -2.0],
            ]),
            inline(&[
                &[-2.0, 0.0, 0.0, 1.0, 1.0],
                &[1.0, -2.0, 0.0, 0.0, 1.0],
                &[0.0, 1.0, -2.0, 0.0, 1.0],
                &[0.0, 1.0, 0.0, -2.0, 1.0],
                &[0.0, 0.0, 0.0, 1.0, -1.0],
            ]),
            inline(&[
                &[-3.0, 0.0, 1.0, 1.0, 1.0],
                &[1.0, -1.0, 0.0, 0.0, 0.0],
                &[1.0, 0.0, -2.0, 0.0, 1.0],
                &[0.0, 0.0, 0.0, -1.0, 1.0],
                &[1.0, 1.0, 1.0, 1.0, -4.0],
            ]),
            inline(&[
                &[-2.0, 1.0, 0.0, 0.0, 1.0],
                &[1.0, -2.0, 0.0, 0.0, 1.0],
                &[0.0, 1.0, -3.0, 1.0, 1.0],
                &[0.0, 1.0, 1.0, -2.0, 0.0],
                &[1.0, 0.0, 0.0, 1.0, -2.0],
            ]),
            inline(&[
                &[-2.0, 1.0, 1.0, 0.0, 0.0],
                &[0.0, -3.0, 1.0, 1.0, 1.0],
                &[1.0, 1.0, -4.0, 1.0, 1.0],
                &[0.0, 1.0, 1.0, -3.0, 1.0],
                &[0.0, 1.0, 1.0, 1.0, -3.0],
            ]),
        ];
        Self {
            kind: ExperimentKind::SlowSwitching,
            seed: 42,
            runs: 20,
            output: None,
            dynamics: DynamicsConfig::default(),
            network: NetworkConfig { kappa: 10.0, epsilon: 1.0 },
            integration: IntegrationConfig { h: 0.01, horizon: 10.0, record_stride: None },
            initial: InitialConfig::default(),
            certificates: CertificateConfig::default(),
            switching: Some(SwitchingConfig {
                embedded: inline(&[
                    &[0.0, 0.65, 0.0, 0.35, 0.0],
                    &[0.0, 0.0, 0.7, 0.0, 0.3],
                    &[0.0, 0.1, 0.0, 0.9, 0.0],
                    &[0.4, 0.6, 0.0, 0.0, 0.0],
                    &[0.0, 0.3, 0.0, 0.7, 0.0],
                ]),
                rates: None,
                rate_range: Some([0.0, 0.75]),
                initial_state: None,
                couplings,
                pinning: vec![
                    vec![1.0, 1.0, 0.0, 0.0, 1.0],
                    vec![1.0, 1.0, 1.0, 1.0, 1.0],
                    vec![0.0, 0.0, 0.0, 1.0, 1.0],
                    vec![0.0, 1.0, 0.0, 1.0, 0.0],
                    vec![1.0, 1.0, 1.0, 0.0, 0.0],
                ],
            }),
            mobility: None,
        }
    }

    /// Ten random-waypoint agents pinned inside a quadrant of the arena.
    pub fn mobile_spatial() -> Self {
        Self {
            kind: ExperimentKind::MobileSpatial,
            seed: 7,
            runs: 5,
            output: None,
            dynamics: DynamicsConfig { lipschitz: Some(4.68), ..DynamicsConfig::default() },
            network: NetworkConfig { kappa: 0.5, epsilon: 12.0 },
            integration: IntegrationConfig { h: 1e-4, horizon: 1.0, record_stride: None },
            initial: InitialConfig::default(),
            certificates: CertificateConfig::default(),
            switching: None,
            mobility: Some(MobilityConfig::default()),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "slow-switching" => Some(Self::slow_switching()),
            "mobile-spatial" => Some(Self::mobile_spatial()),
            _ => None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config and returns it with the directory used to resolve
    /// relative matrix files.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn coupling_params(&self) -> Result<CouplingParams> {
        CouplingParams::new(self.network.kappa, self.network.epsilon)
    }

    /// Checks scalar fields shared by all experiment kinds.
    pub fn validate_common(&self) -> Result<()> {
        self.coupling_params()?;
        let IntegrationConfig { h, horizon, record_stride } = self.integration;
        if !(h > 0.0 && h.is_finite() && horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("step {h} and horizon {horizon} must be positive and finite")));
        }
        if record_stride == Some(0) {
            return Err(Error::Domain("record_stride must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Domain("runs must be at least 1".into()));
        }
        if !(self.initial.lo < self.initial.hi) {
            return Err(Error::Domain("initial box must satisfy lo < hi".into()));
        }
        let c = &self.certificates;
        if !(c.delta > 0.0 && c.family_horizon > 0.0) || c.r_steps == 0 || c.family_cap == 0 {
            return Err(Error::Domain("delta, r_steps, family_cap and family_horizon must be positive".into()));
        }
        Ok(())
    }
}

/// Resolved switching data of a switched-topology experiment.
#[derive(Debug, Clone)]
pub struct SwitchingData {
    pub embedded: EmbeddedChain,
    pub topology: SwitchedTopology,
    pub initial: InitialState,
}

impl SwitchingConfig {
    pub fn resolve(&self, base: &Path) -> Result<SwitchingData> {
        if self.couplings.is_empty() {
            return Err(Error::Validation("topology list is empty".into()));
        }
        let couplings = self
            .couplings
            .iter()
            .enumerate()
            .map(|(i, src)| {
                MetzlerZeroRowSum::new(src.resolve(base)?)
                    .map_err(|e| Error::Validation(format!("coupling matrix {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let topology = SwitchedTopology::new(couplings, self.pinning.clone())?;
        let embedded = EmbeddedChain::new(self.embedded.resolve(base)?)?;
        let n = topology.states();
        if embedded.states() != n {
            return Err(Error::Dimension(format!(
                "embedded chain has {} states, topology list {n}",
                embedded.states()
            )));
        }
        if let Some(r) = &self.rates {
            if r.len() != n {
                return Err(Error::Dimension(format!("{} rates for {n} states", r.len())));
            }
        } else {
            match self.rate_range {
                Some([lo, hi]) if 0.0 <= lo && lo < hi && hi.is_finite() => {}
                _ => return Err(Error::Config("need `rates` or a valid `rate_range = [lo, hi]`".into())),
            }
        }
        let initial = match self.initial_state {
            Some(s) if (1..=n).contains(&s) => InitialState::State(s - 1),
            Some(s) => return Err(Error::Dimension(format!("initial state {s} outside 1..={n}"))),
            None => InitialState::Distribution(vec![1.0 / n as f64; n]),
        };
        Ok(SwitchingData { embedded, topology, initial })
    }
}
