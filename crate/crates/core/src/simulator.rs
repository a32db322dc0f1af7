//! Monte Carlo estimation of false-alarm rate, worst-case detection delay
//! and decoding error.
//!
//! Every run draws from its own stream, derived from the master seed and the
//! run's coordinates (experiment tag, codeword, change point, replicate), so
//! the numbers do not depend on thread scheduling.

use rand::Rng;
use serde::Serialize;

use crate::channels::{ChangePoint, DiscreteSensingPair, SensingModel, SensingState};
use crate::cscc::{sample_subblock, CsccCodebook, SubblockType};
use crate::detectors::{scs_trace, ScsTrace};
use crate::prob::{ChannelMatrix, ExtReal};
use crate::rng::task_stream;
use crate::{par, Error, Result};

const TAG_FAR: u64 = 1;
const TAG_DELAY: u64 = 2;
const TAG_DECODE: u64 = 3;
const TAG_WALD: u64 = 4;

/// Default number of codewords over which worst cases are taken.
pub const DEFAULT_CODEWORD_SUBSET: usize = 16;

/// Default cap on a single false-alarm run, in samples.
pub const DEFAULT_FAR_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorConfig {
    pub subblock_len: usize,
    pub threshold: f64,
}

impl DetectorConfig {
    pub fn new(subblock_len: usize, threshold: f64) -> Result<Self> {
        if subblock_len == 0 {
            return Err(Error::InvalidParameter("subblock length must be positive".into()));
        }
        if !threshold.is_finite() || threshold < 0.0 {
            return Err(Error::InvalidParameter(format!("threshold must be finite and >= 0, got {threshold}")));
        }
        Ok(DetectorConfig { subblock_len, threshold })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRun<O> {
    /// Stopping index, `n + 1` if no alarm.
    pub stop: usize,
    /// `(N - nu + 1)^+` when the change happens and the detector fires.
    pub delay: Option<usize>,
    pub observations: Vec<O>,
    pub trace: ScsTrace,
}

/// Draws one observation stream with the state switching at `nu` and runs
/// the subblock CuSum on it.
pub fn simulate_run<M: SensingModel, R: Rng + ?Sized>(
    codeword: &[M::Input],
    model: &M,
    nu: ChangePoint,
    det: DetectorConfig,
    rng: &mut R,
) -> Result<DetectorRun<M::Obs>> {
    if let ChangePoint::At(0) = nu {
        return Err(Error::InvalidParameter("change point is 1-based".into()));
    }
    for x in codeword {
        model.check_input(x)?;
    }
    let observations: Vec<M::Obs> = codeword
        .iter()
        .enumerate()
        .map(|(i, x)| model.sample(nu.state_at(i + 1), x, rng))
        .collect();
    let trace = scs_trace(codeword, &observations, model, det.subblock_len, det.threshold)?;
    let n = codeword.len();
    let delay = match nu {
        ChangePoint::At(v) if trace.stop <= n => Some((trace.stop + 1).saturating_sub(v)),
        _ => None,
    };
    Ok(DetectorRun { stop: trace.stop, delay, observations, trace })
}

/// Runs the subblock statistic from `W = 0` at the start of block
/// `first_block` (0-based), cycling through the codeword if `wrap`, until it
/// fires or sample `limit` has been consumed. Returns the stopping index.
#[allow(clippy::too_many_arguments)]
fn scs_stream<M: SensingModel, R: Rng + ?Sized>(
    codeword: &[M::Input],
    model: &M,
    nu: ChangePoint,
    det: DetectorConfig,
    first_block: usize,
    limit: usize,
    wrap: bool,
    rng: &mut R,
) -> Option<usize> {
    let n = codeword.len();
    let l = det.subblock_len;
    let mut w = 0.0f64;
    let mut block = first_block;
    loop {
        let end = (block + 1) * l;
        if end > limit || (!wrap && end > n) {
            return None;
        }
        let mut z = ExtReal::ZERO;
        let (mut pos, mut neg) = (false, false);
        let mut sum = 0.0;
        for i in block * l + 1..=end {
            let x = &codeword[(i - 1) % n];
            let y = model.sample(nu.state_at(i), x, rng);
            match model.llr(x, &y) {
                ExtReal::Finite(v) => sum += v,
                ExtReal::PosInf => pos = true,
                ExtReal::NegInf => neg = true,
            }
        }
        z = match (pos, neg) {
            (true, false) => ExtReal::PosInf,
            (false, true) => ExtReal::NegInf,
            (true, true) => z,
            (false, false) => ExtReal::Finite(sum),
        };
        w = (w + z.to_f64()).max(0.0);
        if w >= det.threshold {
            return Some(end);
        }
        block += 1;
    }
}

/// Indices of the codewords over which worst cases are taken: all of them
/// when there are at most `subset`, otherwise a seeded sample.
pub fn codeword_subset(messages: usize, subset: usize, seed: u64) -> Vec<usize> {
    if messages <= subset {
        return (0..messages).collect();
    }
    let mut rng = task_stream(seed, &[0x5eed]);
    let mut idx = rand::seq::index::sample(&mut rng, messages, subset).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FarConfig {
    pub detector: DetectorConfig,
    pub runs_per_codeword: usize,
    /// Runs that have not fired after this many samples are censored.
    pub cap: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodewordFar {
    pub codeword: usize,
    /// Mean stopping time, censored runs counted at the cap.
    pub mean_stop: f64,
    pub se_stop: f64,
    pub far: f64,
    pub far_se: f64,
    pub censored: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FarEstimate {
    /// Worst codeword's `1 / E_inf(N)`.
    pub far: f64,
    pub far_se: f64,
    /// 95% interval from the delta method on the mean stopping time.
    pub ci: (f64, f64),
    pub worst_codeword: usize,
    pub per_codeword: Vec<CodewordFar>,
    /// Every run reached the cap: `far` is then only an upper bound.
    pub all_censored: bool,
    pub censored: usize,
}

impl FarEstimate {
    /// `far - 1.96 se <= alpha`: the target lies inside or above the 95%
    /// interval.
    pub fn consistent_with(&self, alpha: f64) -> bool {
        self.ci.0 <= alpha
    }
}

/// Pre-change runs of the subblock statistic over the codeword repeated
/// periodically, carrying `W` across repetitions, up to `cap` samples.
pub fn estimate_far<M: SensingModel>(
    codewords: &[Vec<M::Input>],
    indices: &[usize],
    model: &M,
    cfg: &FarConfig,
) -> Result<FarEstimate> {
    if cfg.runs_per_codeword == 0 || indices.is_empty() {
        return Err(Error::InvalidParameter("need at least one run and one codeword".into()));
    }
    if cfg.cap < cfg.detector.subblock_len {
        return Err(Error::InvalidParameter("cap shorter than one subblock".into()));
    }
    for &m in indices {
        check_codeword(codewords, m, cfg.detector.subblock_len)?;
    }
    let per_codeword = par::map(indices, |&m| {
        let cw = &codewords[m];
        let stops: Vec<(f64, bool)> = (0..cfg.runs_per_codeword)
            .map(|r| {
                let mut rng = task_stream(cfg.seed, &[TAG_FAR, m as u64, r as u64]);
                match scs_stream(cw, model, ChangePoint::Never, cfg.detector, 0, cfg.cap, true, &mut rng) {
                    Some(n) => (n as f64, false),
                    None => (cfg.cap as f64, true),
                }
            })
            .collect();
        let censored = stops.iter().filter(|s| s.1).count();
        let (mean, se) = mean_se(stops.iter().map(|s| s.0));
        let far = 1.0 / mean;
        CodewordFar {
            codeword: m,
            mean_stop: mean,
            se_stop: se,
            far: if censored == stops.len() { 0.0 } else { far },
            far_se: se / (mean * mean),
            censored,
            runs: stops.len(),
        }
    });
    let censored: usize = per_codeword.iter().map(|c| c.censored).sum();
    let total = cfg.runs_per_codeword * indices.len();
    let worst = per_codeword
        .iter()
        .max_by(|a, b| a.far.total_cmp(&b.far))
        .expect("nonempty")
        .clone();
    let all_censored = censored == total;
    let (far, far_se, ci) = if all_censored {
        (0.0, 0.0, (0.0, 1.0 / cfg.cap as f64))
    } else {
        (worst.far, worst.far_se, ((worst.far - 1.96 * worst.far_se).max(0.0), worst.far + 1.96 * worst.far_se))
    };
    Ok(FarEstimate { far, far_se, ci, worst_codeword: worst.codeword, per_codeword, all_censored, censored })
}

fn check_codeword<T>(codewords: &[Vec<T>], m: usize, l: usize) -> Result<()> {
    let cw = codewords
        .get(m)
        .ok_or_else(|| Error::InvalidParameter(format!("codeword {m} out of range")))?;
    if cw.is_empty() || cw.len() % l != 0 {
        return Err(Error::InvalidParameter(format!(
            "codeword {m} has length {}, not a positive multiple of {l}",
            cw.len()
        )));
    }
    Ok(())
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Boundary offsets `jL + 1` and mid-subblock offsets `jL + floor(L/2) + 1`
/// for each listed block `j` (0-based). For `L = 1` the two coincide.
pub fn default_change_points(subblock_len: usize, blocks: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = blocks
        .iter()
        .flat_map(|&j| [j * subblock_len + 1, j * subblock_len + subblock_len / 2 + 1])
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayConfig {
    pub detector: DetectorConfig,
    /// 1-based change points.
    pub change_points: Vec<usize>,
    pub runs_per_cell: usize,
    /// Cells with a larger censored fraction flag the estimate.
    pub max_censored_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellEstimate {
    pub codeword: usize,
    pub change_point: usize,
    /// Mean of `(N - nu + 1)^+` over uncensored runs; a lower bound on the
    /// true mean when some runs are censored. `None` if all were.
    pub mean: Option<f64>,
    pub se: f64,
    pub runs: usize,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayEstimate {
    /// Worst cell's mean delay.
    pub mean: f64,
    pub se: f64,
    pub censored: usize,
    pub worst: (usize, usize),
    pub cells: Vec<CellEstimate>,
    /// Some cell exceeded the censoring allowance.
    pub flagged: bool,
}

/// Worst-case average detection delay over `(codeword, nu)` cells. Each run
/// starts the statistic at `W = 0` at the beginning of the subblock holding
/// `nu`, which is the worst pre-change history for a clamped statistic.
pub fn estimate_wadd<M: SensingModel>(
    codewords: &[Vec<M::Input>],
    indices: &[usize],
    model: &M,
    cfg: &DelayConfig,
) -> Result<DelayEstimate> {
    if cfg.runs_per_cell == 0 || indices.is_empty() || cfg.change_points.is_empty() {
        return Err(Error::InvalidParameter("need runs, codewords and change points".into()));
    }
    let l = cfg.detector.subblock_len;
    for &m in indices {
        check_codeword(codewords, m, l)?;
        if let Some(&nu) = cfg.change_points.iter().find(|&&nu| nu == 0 || nu > codewords[m].len()) {
            return Err(Error::InvalidParameter(format!("change point {nu} outside [1, {}]", codewords[m].len())));
        }
    }
    let cells: Vec<(usize, usize)> = indices
        .iter()
        .flat_map(|&m| cfg.change_points.iter().map(move |&nu| (m, nu)))
        .collect();
    let cells = par::map(&cells, |&(m, nu)| {
        let cw = &codewords[m];
        let delays: Vec<Option<usize>> = (0..cfg.runs_per_cell)
            .map(|r| {
                let mut rng = task_stream(cfg.seed, &[TAG_DELAY, m as u64, nu as u64, r as u64]);
                let first = (nu - 1) / l;
                scs_stream(cw, model, ChangePoint::At(nu), cfg.detector, first, cw.len(), false, &mut rng)
                    .map(|stop| stop + 1 - nu)
            })
            .collect();
        let done = delays.iter().flatten().map(|&d| d as f64);
        let censored = delays.iter().filter(|d| d.is_none()).count();
        let (mean, se) = if censored == delays.len() { (None, 0.0) } else {
            let (m, s) = mean_se(done);
            (Some(m), s)
        };
        CellEstimate { codeword: m, change_point: nu, mean, se, runs: delays.len(), censored }
    });
    let flagged = cells
        .iter()
        .any(|c| c.censored as f64 > cfg.max_censored_fraction * c.runs as f64);
    let worst = cells
        .iter()
        .filter(|c| c.mean.is_some())
        .max_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap());
    let censored = cells.iter().map(|c| c.censored).sum();
    let (mean, se, worst) = match worst {
        Some(c) => (c.mean.unwrap_or(0.0), c.se, (c.codeword, c.change_point)),
        None => (f64::INFINITY, 0.0, (cells[0].codeword, cells[0].change_point)),
    };
    Ok(DelayEstimate { mean, se, censored, worst, cells, flagged })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityReport {
    pub pooled_mean: f64,
    /// Largest `|mean_i - pooled| / se_i` over the cells.
    pub max_z: f64,
    pub within_3se: bool,
}

/// Compares per-cell mean delays against their pooled mean.
pub fn codeword_uniformity(cells: &[CellEstimate]) -> Option<UniformityReport> {
    let used: Vec<&CellEstimate> = cells.iter().filter(|c| c.mean.is_some() && c.se > 0.0).collect();
    if used.len() < 2 {
        return None;
    }
    let weight: f64 = used.iter().map(|c| (c.runs - c.censored) as f64).sum();
    let pooled = used.iter().map(|c| c.mean.unwrap() * (c.runs - c.censored) as f64).sum::<f64>() / weight;
    let max_z = used
        .iter()
        .map(|c| (c.mean.unwrap() - pooled).abs() / c.se)
        .fold(0.0, f64::max);
    Some(UniformityReport { pooled_mean: pooled, max_z, within_3se: max_z <= 3.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

/// Least-squares line through `(b, wadd)`.
pub fn fit_delay_slope(thresholds: &[f64], wadd: &[f64]) -> Result<SlopeFit> {
    if thresholds.len() != wadd.len() {
        return Err(Error::LengthMismatch { expected: thresholds.len(), found: wadd.len() });
    }
    if thresholds.len() < 3 || thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("need at least 3 strictly increasing thresholds".into()));
    }
    if wadd.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidParameter("delay estimates must be finite".into()));
    }
    let n = thresholds.len() as f64;
    let mb = thresholds.iter().sum::<f64>() / n;
    let mw = wadd.iter().sum::<f64>() / n;
    let sxy: f64 = thresholds.iter().zip(wadd).map(|(b, w)| (b - mb) * (w - mw)).sum();
    let sxx: f64 = thresholds.iter().map(|b| (b - mb).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mw - slope * mb;
    let residuals = thresholds.iter().zip(wadd).map(|(b, w)| w - (intercept + slope * b)).collect();
    Ok(SlopeFit { slope, intercept, residuals })
}

fn log_table(comm: &ChannelMatrix) -> Vec<Vec<f64>> {
    comm.rows()
        .iter()
        .map(|r| r.probs().iter().map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect())
        .collect()
}

/// Maximum-likelihood message estimate; ties go to the smaller index.
pub fn ml_decode(codewords: &[Vec<usize>], comm: &ChannelMatrix, obs: &[usize]) -> usize {
    decode_with(codewords, &log_table(comm), obs)
}

fn decode_with(codewords: &[Vec<usize>], logp: &[Vec<f64>], obs: &[usize]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (m, cw) in codewords.iter().enumerate() {
        let s: f64 = cw.iter().zip(obs).map(|(&x, &y)| logp[x][y]).sum();
        if s > best.1 {
            best = (m, s);
        }
    }
    best.0
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (y, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return y;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodingEstimate {
    pub per_message: Vec<f64>,
    /// Maximum over messages of the empirical error probability.
    pub max_error: f64,
    pub runs_per_message: usize,
}

/// Error probability of ML decoding for every message of a codebook.
pub fn estimate_ml_error(
    codebook: &CsccCodebook,
    comm: &ChannelMatrix,
    runs_per_message: usize,
    seed: u64,
) -> Result<DecodingEstimate> {
    if comm.inputs() != codebook.subblock_type().alphabet() {
        return Err(Error::AlphabetMismatch { expected: codebook.subblock_type().alphabet(), found: comm.inputs() });
    }
    if runs_per_message == 0 {
        return Err(Error::InvalidParameter("need at least one run".into()));
    }
    let logp = log_table(comm);
    let messages: Vec<usize> = (0..codebook.messages()).collect();
    let per_message = par::map(&messages, |&m| {
        let cw = codebook.codeword(m);
        let errors = (0..runs_per_message)
            .filter(|&r| {
                let mut rng = task_stream(seed, &[TAG_DECODE, m as u64, r as u64]);
                let obs: Vec<usize> = cw.iter().map(|&x| sample_row(comm.row(x).probs(), &mut rng)).collect();
                decode_with(codebook.codewords(), &logp, &obs) != m
            })
            .count();
        errors as f64 / runs_per_message as f64
    });
    let max_error = per_message.iter().copied().fold(0.0, f64::max);
    Ok(DecodingEstimate { per_message, max_error, runs_per_message })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WaldStopping {
    /// One-sided SPRT on block sums, truncated at `max_blocks` (a bounded
    /// stopping time, so the identity still holds exactly).
    Sprt { threshold: f64, max_blocks: usize },
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldConfig {
    pub block: SubblockType,
    /// Number of pre-change samples at the start of the first block.
    pub pre_in_first: usize,
    pub stopping: WaldStopping,
    pub runs: usize,
    /// Independent draws used to estimate `E[Z1]` and `E[Z2]`.
    pub law_draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldReport {
    /// `E[sum_{i <= N} Z_i]`
    pub lhs: f64,
    pub lhs_se: f64,
    /// `E[Z2] E[N] + (E[Z1] - E[Z2]) P(N >= 1)`
    pub rhs: f64,
    pub rhs_se: f64,
    pub mean_z1: f64,
    pub mean_z2: f64,
    pub mean_n: f64,
    pub p_stop: f64,
    /// `|lhs - rhs|` in combined standard errors.
    pub z: f64,
    pub within_3se: bool,
    /// `lhs >= E[Z2] E[N] - 2 gamma L`
    pub lower_bound_holds: bool,
    pub gamma: f64,
}

fn draw_block<R: Rng + ?Sized>(pair: &DiscreteSensingPair, t: &SubblockType, pre: usize, rng: &mut R) -> f64 {
    let xs = sample_subblock(t, rng);
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let state = if i < pre { SensingState::Pre } else { SensingState::Post };
            let y = pair.sample(state, x, rng);
            pair.llr(x, &y).to_f64()
        })
        .sum()
}

/// Checks the modified Wald identity for block log-likelihood ratios where
/// the first block may straddle the change.
pub fn wald_identity_harness(pair: &DiscreteSensingPair, cfg: &WaldConfig) -> Result<WaldReport> {
    let gamma = pair.llr_bound().ok_or(Error::UnboundedLlr)?;
    if cfg.block.alphabet() != pair.inputs() {
        return Err(Error::AlphabetMismatch { expected: pair.inputs(), found: cfg.block.alphabet() });
    }
    if cfg.runs < 2 || cfg.law_draws < 2 {
        return Err(Error::InvalidParameter("need at least two runs and two law draws".into()));
    }
    let l = cfg.block.len();
    if cfg.pre_in_first > l {
        return Err(Error::InvalidParameter("first block has fewer samples than requested".into()));
    }
    let runs: Vec<usize> = (0..cfg.runs).collect();
    let outcomes = par::map(&runs, |&r| {
        let mut rng = task_stream(cfg.seed, &[TAG_WALD, 0, r as u64]);
        let mut sum = 0.0;
        let mut n = 0usize;
        loop {
            let pre = if n == 0 { cfg.pre_in_first } else { 0 };
            sum += draw_block(pair, &cfg.block, pre, &mut rng);
            n += 1;
            let stop = match cfg.stopping {
                WaldStopping::Sprt { threshold, max_blocks } => sum >= threshold || n >= max_blocks,
                WaldStopping::Fixed(k) => n >= k.max(1),
            };
            if stop {
                return (sum, n as f64);
            }
        }
    });
    let draws = |which: u64, pre: usize| -> Vec<f64> {
        let idx: Vec<usize> = (0..cfg.law_draws).collect();
        par::map(&idx, |&d| {
            let mut rng = task_stream(cfg.seed, &[TAG_WALD, which, d as u64]);
            draw_block(pair, &cfg.block, pre, &mut rng)
        })
    };
    let z1 = draws(1, cfg.pre_in_first);
    let z2 = draws(2, 0);
    let (lhs, lhs_se) = mean_se(outcomes.iter().map(|o| o.0));
    let (mean_n, n_se) = mean_se(outcomes.iter().map(|o| o.1));
    let (mean_z1, z1_se) = mean_se(z1.iter().copied());
    let (mean_z2, z2_se) = mean_se(z2.iter().copied());
    let p_stop = 1.0;
    let rhs = mean_z2 * mean_n + (mean_z1 - mean_z2) * p_stop;
    let rhs_se = ((mean_n - p_stop).powi(2) * z2_se.powi(2) + mean_z2.powi(2) * n_se.powi(2) + z1_se.powi(2)).sqrt();
    let combined = (lhs_se.powi(2) + rhs_se.powi(2)).sqrt();
    let z = if combined > 0.0 { (lhs - rhs).abs() / combined } else if lhs == rhs { 0.0 } else { f64::INFINITY };
    Ok(WaldReport {
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        mean_z1,
        mean_z2,
        mean_n,
        p_stop,
        z,
        within_3se: z <= 3.0,
        lower_bound_holds: lhs >= mean_z2 * mean_n - 2.0 * gamma * l as f64,
        gamma,
    })
}
