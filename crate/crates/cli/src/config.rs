//! TOML experiment configuration shared by every subcommand.

use std::path::Path;

use commqcd::channels::{DiscreteSensingPair, MimoGaussianPair, ScalarGaussianPair, ScalarVariant};
use commqcd::{ChannelMatrix, Distribution};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub region: RegionConfig,
    #[serde(default)]
    pub codebook: CodebookConfig,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub campaign: CampaignConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelConfig {
    /// BSC(eps) for data, Z(eps0) -> Z(eps1) for sensing.
    Binary { eps: f64, eps0: f64, eps1: f64 },
    /// Row-stochastic matrices indexed `[x][y]`.
    Discrete { comm: Vec<Vec<f64>>, pre: Vec<Vec<f64>>, post: Vec<Vec<f64>> },
    /// `variant` is `gain_change` (with `gain`) or `variance_change` (with
    /// `var0`, `var1`).
    ScalarGaussian {
        power: f64,
        variant: ScalarKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gain: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        var0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        var1: Option<f64>,
    },
    /// Either `g_diff` alone (pre-change gain zero) or both `g0` and `g1`.
    Mimo {
        power: f64,
        g_comm: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g_diff: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g0: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g1: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarKind {
    GainChange,
    VarianceChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    /// Geometric multiplier knots on `[lambda_min, lambda_max]`, plus zero.
    pub lambda_knots: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub max_gap_fraction: f64,
    pub max_refinements: usize,
    /// Knots for the Gaussian regions.
    pub knots: usize,
    pub mimo_max_iter: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            lambda_knots: 60,
            lambda_min: 1e-3,
            lambda_max: 1e3,
            tol: 1e-10,
            max_iter: 100_000,
            max_gap_fraction: 0.02,
            max_refinements: 400,
            knots: 80,
            mimo_max_iter: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    /// Input law `pX`; uniform when empty.
    pub input: Vec<f64>,
    pub subblock_len: usize,
    pub subblocks: usize,
    pub messages: usize,
    /// Codebook seed; derived from the master seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Load this codebook instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub symbol_cap: usize,
    pub window_eps: f64,
    /// Window lengths are searched over multiples of this; defaults to L.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_step: Option<usize>,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        CodebookConfig {
            input: Vec::new(),
            subblock_len: 2,
            subblocks: 100,
            messages: 16,
            seed: None,
            path: None,
            symbol_cap: 1 << 28,
            window_eps: 0.05,
            window_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    /// Target false-alarm rate; sets `b = |ln alpha| + ln L`.
    pub alpha: f64,
    /// Explicit threshold, overriding `alpha`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection { alpha: 0.01, threshold: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub far_runs: usize,
    pub far_cap: usize,
    pub delay_runs: usize,
    /// Blocks (0-based) whose boundary and middle serve as change points.
    pub change_blocks: Vec<usize>,
    /// Thresholds for the delay-slope fit; the detector threshold alone when
    /// empty.
    pub thresholds: Vec<f64>,
    pub codeword_subset: usize,
    pub max_censored_fraction: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            far_runs: 200,
            far_cap: commqcd::simulator::DEFAULT_FAR_CAP,
            delay_runs: 1000,
            change_blocks: vec![0, 5],
            thresholds: Vec::new(),
            codeword_subset: commqcd::simulator::DEFAULT_CODEWORD_SUBSET,
            max_censored_fraction: 0.01,
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {msg}"))
}

pub fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    let cfg: Config = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<ChannelMatrix, CliError> {
    ChannelMatrix::new(rows.to_vec()).map_err(|e| invalid(field, e))
}

fn dense(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(invalid(field, "matrix is empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(invalid(field, format!("row {i} has {} entries, expected {cols}", rows[i].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid(field, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// A finite-alphabet channel: data matrix and sensing pair.
pub struct DiscreteSetup {
    pub comm: ChannelMatrix,
    pub pair: DiscreteSensingPair,
}

pub enum Channel {
    Discrete(DiscreteSetup),
    Scalar(ScalarGaussianPair),
    Mimo(MimoGaussianPair),
}

impl ChannelConfig {
    pub fn build(&self) -> Result<Channel, CliError> {
        match self {
            ChannelConfig::Binary { eps, eps0, eps1 } => {
                let comm = ChannelMatrix::bsc(*eps).map_err(|e| invalid("channel.eps", e))?;
                let pre = ChannelMatrix::z_channel(*eps0).map_err(|e| invalid("channel.eps0", e))?;
                let post = ChannelMatrix::z_channel(*eps1).map_err(|e| invalid("channel.eps1", e))?;
                let pair = DiscreteSensingPair::new(pre, post).map_err(|e| invalid("channel", e))?;
                Ok(Channel::Discrete(DiscreteSetup { comm, pair }))
            }
            ChannelConfig::Discrete { comm, pre, post } => {
                let comm = matrix("channel.comm", comm)?;
                let pre = matrix("channel.pre", pre)?;
                let post = matrix("channel.post", post)?;
                if comm.inputs() != pre.inputs() {
                    return Err(invalid(
                        "channel.comm",
                        format!("{} inputs but the sensing channel has {}", comm.inputs(), pre.inputs()),
                    ));
                }
                let pair = DiscreteSensingPair::new(pre, post).map_err(|e| invalid("channel.post", e))?;
                Ok(Channel::Discrete(DiscreteSetup { comm, pair }))
            }
            ChannelConfig::ScalarGaussian { power, variant, gain, var0, var1 } => {
                let need = |v: &Option<f64>, name: &str| v.ok_or_else(|| invalid(&format!("channel.{name}"), "missing"));
                let variant = match variant {
                    ScalarKind::GainChange => ScalarVariant::GainChange { gain: need(gain, "gain")? },
                    ScalarKind::VarianceChange => {
                        ScalarVariant::VarianceChange { var0: need(var0, "var0")?, var1: need(var1, "var1")? }
                    }
                };
                ScalarGaussianPair::new(variant, *power).map(Channel::Scalar).map_err(|e| invalid("channel", e))
            }
            ChannelConfig::Mimo { power, g_comm, g_diff, g0, g1 } => {
                let g_comm = dense("channel.g_comm", g_comm)?;
                let model = match (g_diff, g0, g1) {
                    (Some(d), None, None) => MimoGaussianPair::from_difference(dense("channel.g_diff", d)?, g_comm, *power),
                    (None, Some(a), Some(b)) => {
                        MimoGaussianPair::new(dense("channel.g0", a)?, dense("channel.g1", b)?, g_comm, *power)
                    }
                    _ => return Err(invalid("channel", "give either g_diff or both g0 and g1")),
                };
                model.map(Channel::Mimo).map_err(|e| invalid("channel", e))
            }
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), CliError> {
        let channel = self.channel.build()?;
        let r = &self.region;
        if !(r.lambda_min > 0.0 && r.lambda_max >= r.lambda_min && r.lambda_max.is_finite()) {
            return Err(invalid("region.lambda_min", "need 0 < lambda_min <= lambda_max < inf"));
        }
        if r.lambda_knots < 2 {
            return Err(invalid("region.lambda_knots", "need at least 2 knots"));
        }
        if !(r.tol > 0.0) || r.max_iter == 0 {
            return Err(invalid("region.tol", "tolerance and iteration cap must be positive"));
        }
        if !(r.max_gap_fraction > 0.0) {
            return Err(invalid("region.max_gap_fraction", "must be positive"));
        }
        if r.knots == 0 || r.mimo_max_iter == 0 {
            return Err(invalid("region.knots", "must be positive"));
        }
        let c = &self.codebook;
        if c.subblock_len == 0 {
            return Err(invalid("codebook.subblock_len", "must be positive"));
        }
        if c.subblocks == 0 {
            return Err(invalid("codebook.subblocks", "must be positive"));
        }
        if c.messages == 0 && c.path.is_none() {
            return Err(invalid("codebook.messages", "need at least one message"));
        }
        if !(c.window_eps > 0.0) {
            return Err(invalid("codebook.window_eps", "must be positive"));
        }
        if c.window_step == Some(0) {
            return Err(invalid("codebook.window_step", "must be positive"));
        }
        if let Channel::Discrete(d) = &channel {
            if !c.input.is_empty() && c.input.len() != d.comm.inputs() {
                return Err(invalid(
                    "codebook.input",
                    format!("{} entries for an alphabet of {}", c.input.len(), d.comm.inputs()),
                ));
            }
        }
        if !c.input.is_empty() {
            Distribution::new(c.input.clone()).map_err(|e| invalid("codebook.input", e))?;
        }
        let d = &self.detector;
        match d.threshold {
            Some(b) if !(b.is_finite() && b >= 0.0) => return Err(invalid("detector.threshold", "must be finite and >= 0")),
            None if !(d.alpha > 0.0 && d.alpha < 1.0) => return Err(invalid("detector.alpha", "must lie in (0, 1)")),
            _ => {}
        }
        let k = &self.campaign;
        if k.far_runs == 0 || k.delay_runs == 0 {
            return Err(invalid("campaign", "run counts must be positive"));
        }
        if k.far_cap < c.subblock_len {
            return Err(invalid("campaign.far_cap", "shorter than one subblock"));
        }
        if k.change_blocks.is_empty() {
            return Err(invalid("campaign.change_blocks", "need at least one change block"));
        }
        if k.codeword_subset == 0 {
            return Err(invalid("campaign.codeword_subset", "must be positive"));
        }
        if k.thresholds.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(invalid("campaign.thresholds", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&k.max_censored_fraction) {
            return Err(invalid("campaign.max_censored_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn input_law(&self, alphabet: usize) -> Distribution {
        if self.codebook.input.is_empty() {
            Distribution::uniform(alphabet)
        } else {
            Distribution::new(self.codebook.input.clone()).expect("validated")
        }
    }

    pub fn threshold(&self) -> f64 {
        self.detector
            .threshold
            .unwrap_or_else(|| commqcd::detectors::threshold_for_far(self.detector.alpha, self.codebook.subblock_len))
    }
}
