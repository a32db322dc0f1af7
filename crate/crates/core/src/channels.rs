//! Observation models for the sensing side of the broadcast channel.
//!
//! Each model pairs a pre-change law and a post-change law for the output
//! seen by the detector, given the transmitted input. The detector knows the
//! input, so everything is conditioned on it.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::prob::{symbol_costs, ChannelMatrix, ExtReal};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensingState {
    Pre,
    Post,
}

impl SensingState {
    pub fn index(self) -> usize {
        match self {
            SensingState::Pre => 0,
            SensingState::Post => 1,
        }
    }
}

/// A pre/post-change pair of conditional observation laws.
pub trait SensingModel: Sync {
    type Input: Clone + Send + Sync;
    type Obs;

    /// Rejects inputs outside the model's input space.
    fn check_input(&self, _x: &Self::Input) -> Result<()> {
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, state: SensingState, x: &Self::Input, rng: &mut R) -> Self::Obs;

    /// `log p1(y|x) - log p0(y|x)`.
    fn llr(&self, x: &Self::Input, y: &Self::Obs) -> ExtReal;
}

/// One draw from the law of `state` given input `x`.
pub fn sample_observation<M: SensingModel, R: Rng + ?Sized>(
    model: &M,
    state: SensingState,
    x: &M::Input,
    rng: &mut R,
) -> Result<M::Obs> {
    model.check_input(x)?;
    Ok(model.sample(state, x, rng))
}

/// Change point of the state sequence, 1-based: samples `i >= nu` are post-change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChangePoint {
    At(usize),
    Never,
}

impl ChangePoint {
    pub fn at(nu: usize) -> Result<Self> {
        if nu == 0 {
            return Err(Error::InvalidParameter("change point is 1-based".into()));
        }
        Ok(ChangePoint::At(nu))
    }

    /// State of sample `i` (1-based).
    pub fn state_at(self, i: usize) -> SensingState {
        match self {
            ChangePoint::At(nu) if i >= nu => SensingState::Post,
            _ => SensingState::Pre,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSequence {
    pub change_point: ChangePoint,
    pub horizon: usize,
}

impl StateSequence {
    pub fn states(&self) -> impl Iterator<Item = SensingState> + '_ {
        (1..=self.horizon).map(|i| self.change_point.state_at(i))
    }
}

/// Discrete pre/post-change channel pair over finite alphabets.
#[derive(Debug, Clone)]
pub struct DiscreteSensingPair {
    p0: ChannelMatrix,
    p1: ChannelMatrix,
    llr: Vec<Vec<ExtReal>>,
    // cumulative row sums, indexed [state][x][y]
    cdf: [Vec<Vec<f64>>; 2],
}

impl DiscreteSensingPair {
    pub fn new(p0: ChannelMatrix, p1: ChannelMatrix) -> Result<Self> {
        p0.same_shape(&p1)?;
        let llr = (0..p0.inputs())
            .map(|x| {
                (0..p0.outputs())
                    .map(|y| log_ratio(p1.prob(x, y), p0.prob(x, y)))
                    .collect()
            })
            .collect();
        let cdf = [cumulative(&p0), cumulative(&p1)];
        Ok(DiscreteSensingPair { p0, p1, llr, cdf })
    }

    /// The binary example pair: Z-channels with crossover `eps0` before and
    /// `eps1` after the change.
    pub fn z_pair(eps0: f64, eps1: f64) -> Result<Self> {
        DiscreteSensingPair::new(ChannelMatrix::z_channel(eps0)?, ChannelMatrix::z_channel(eps1)?)
    }

    pub fn pre(&self) -> &ChannelMatrix {
        &self.p0
    }

    pub fn post(&self) -> &ChannelMatrix {
        &self.p1
    }

    pub fn inputs(&self) -> usize {
        self.p0.inputs()
    }

    pub fn outputs(&self) -> usize {
        self.p0.outputs()
    }

    pub fn law(&self, state: SensingState) -> &ChannelMatrix {
        match state {
            SensingState::Pre => &self.p0,
            SensingState::Post => &self.p1,
        }
    }

    pub fn costs(&self) -> Vec<ExtReal> {
        symbol_costs(&self.p1, &self.p0).expect("shapes checked at construction")
    }

    pub fn llr_table(&self) -> &[Vec<ExtReal>] {
        &self.llr
    }

    /// Largest `|llr|` over reachable `(x, y)`; `None` marks an unbounded-LLR
    /// model (some reachable output has zero probability under one law).
    pub fn llr_bound(&self) -> Option<f64> {
        let mut gamma: f64 = 0.0;
        for x in 0..self.inputs() {
            for y in 0..self.outputs() {
                if self.p0.prob(x, y) == 0.0 && self.p1.prob(x, y) == 0.0 {
                    continue;
                }
                gamma = gamma.max(self.llr[x][y].finite()?.abs());
            }
        }
        Some(gamma)
    }

    pub fn is_bounded(&self) -> bool {
        self.llr_bound().is_some()
    }
}

fn log_ratio(num: f64, den: f64) -> ExtReal {
    match (num > 0.0, den > 0.0) {
        (true, true) => ExtReal::Finite(num.ln() - den.ln()),
        (true, false) => ExtReal::PosInf,
        (false, true) => ExtReal::NegInf,
        (false, false) => ExtReal::ZERO,
    }
}

fn cumulative(ch: &ChannelMatrix) -> Vec<Vec<f64>> {
    ch.rows()
        .iter()
        .map(|row| {
            let mut acc = 0.0;
            let mut c: Vec<f64> = row
                .probs()
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            // pin the last reachable entry to 1 so rounding cannot leave a gap
            if let Some(last) = row.probs().iter().rposition(|p| *p > 0.0) {
                c[last..].iter_mut().for_each(|v| *v = 1.0);
            }
            c
        })
        .collect()
}

impl SensingModel for DiscreteSensingPair {
    type Input = usize;
    type Obs = usize;

    fn check_input(&self, x: &usize) -> Result<()> {
        if *x < self.inputs() {
            Ok(())
        } else {
            Err(Error::SymbolOutOfRange { symbol: *x, size: self.inputs() })
        }
    }

    fn sample<R: Rng + ?Sized>(&self, state: SensingState, x: &usize, rng: &mut R) -> usize {
        let row = &self.cdf[state.index()][*x];
        let u: f64 = rng.random();
        row.iter().position(|&c| u < c).unwrap_or(row.len() - 1)
    }

    fn llr(&self, x: &usize, y: &usize) -> ExtReal {
        self.llr[*x][*y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ScalarVariant {
    /// `Y = x + Z` before the change, `Y = gain * x + Z` after.
    GainChange { gain: f64 },
    /// `Y = x + Z0` before, `Y = x + Z1` after, `Zs ~ N(0, var_s)`.
    VarianceChange { var0: f64, var1: f64 },
}

/// Scalar Gaussian sensing pair with unit-variance noise unless the change is
/// in the noise variance itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarGaussianPair {
    pub variant: ScalarVariant,
    pub power: f64,
}

impl ScalarGaussianPair {
    pub fn new(variant: ScalarVariant, power: f64) -> Result<Self> {
        if !(power > 0.0) {
            return Err(Error::InvalidParameter(format!("power must be positive, got {power}")));
        }
        if let ScalarVariant::VarianceChange { var0, var1 } = variant {
            if !(var0 > 0.0 && var1 > 0.0) {
                return Err(Error::InvalidParameter("noise variances must be positive".into()));
            }
        }
        if let ScalarVariant::GainChange { gain } = variant {
            if !gain.is_finite() {
                return Err(Error::InvalidParameter("gain must be finite".into()));
            }
        }
        Ok(ScalarGaussianPair { variant, power })
    }

    /// Output for a given standard-normal noise draw. Passing `0.0` gives the
    /// noiseless response.
    pub fn observe(&self, state: SensingState, x: f64, std_noise: f64) -> f64 {
        match (self.variant, state) {
            (ScalarVariant::GainChange { .. }, SensingState::Pre) => x + std_noise,
            (ScalarVariant::GainChange { gain }, SensingState::Post) => gain * x + std_noise,
            (ScalarVariant::VarianceChange { var0, .. }, SensingState::Pre) => x + var0.sqrt() * std_noise,
            (ScalarVariant::VarianceChange { var1, .. }, SensingState::Post) => x + var1.sqrt() * std_noise,
        }
    }

    /// `D(p1 || p0 | X = x)`.
    pub fn symbol_cost(&self, x: f64) -> f64 {
        match self.variant {
            ScalarVariant::GainChange { gain } => 0.5 * (gain - 1.0).powi(2) * x * x,
            ScalarVariant::VarianceChange { var0, var1 } => variance_change_kl(var0, var1),
        }
    }

    pub fn capacity(&self) -> f64 {
        0.5 * (1.0 + self.power).ln()
    }

    pub fn delta_star(&self) -> f64 {
        match self.variant {
            ScalarVariant::GainChange { gain } => 0.5 * (gain - 1.0).powi(2) * self.power,
            ScalarVariant::VarianceChange { var0, var1 } => variance_change_kl(var0, var1),
        }
    }
}

fn variance_change_kl(var0: f64, var1: f64) -> f64 {
    0.5 * (var0 / var1).ln() + var1 / (2.0 * var0) - 0.5
}

impl SensingModel for ScalarGaussianPair {
    type Input = f64;
    type Obs = f64;

    fn sample<R: Rng + ?Sized>(&self, state: SensingState, x: &f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.observe(state, *x, z)
    }

    fn llr(&self, x: &f64, y: &f64) -> ExtReal {
        let v = match self.variant {
            ScalarVariant::GainChange { gain } => (gain - 1.0) * x * y + x * x * (1.0 - gain * gain) / 2.0,
            ScalarVariant::VarianceChange { var0, var1 } => {
                let r2 = (y - x) * (y - x);
                0.5 * (var0 / var1).ln() - r2 / (2.0 * var1) + r2 / (2.0 * var0)
            }
        };
        ExtReal::Finite(v)
    }
}

/// Post-processed passive-radar model: `Y ~ CN(0, 1)` before the change and
/// `Y ~ CN(h x, 1)` after.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarSensingPair {
    pub gain: Complex64,
    pub power: f64,
}

impl RadarSensingPair {
    pub fn capacity(&self) -> f64 {
        (1.0 + self.power).ln()
    }

    pub fn delta_star(&self) -> f64 {
        self.gain.norm_sqr() * self.power
    }
}

impl SensingModel for RadarSensingPair {
    type Input = Complex64;
    type Obs = Complex64;

    fn sample<R: Rng + ?Sized>(&self, state: SensingState, x: &Complex64, rng: &mut R) -> Complex64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let z = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        match state {
            SensingState::Pre => z,
            SensingState::Post => self.gain * x + z,
        }
    }

    fn llr(&self, x: &Complex64, y: &Complex64) -> ExtReal {
        ExtReal::Finite(y.norm_sqr() - (y - self.gain * x).norm_sqr())
    }
}

/// Known parameters of the passive-radar front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarParams {
    pub direct_gain: Complex64,
    pub direct_delay: usize,
    pub target_gain: Complex64,
    /// Normalised Doppler frequency of the target path.
    pub doppler: f64,
    pub target_delay: usize,
}

impl RadarParams {
    pub fn reduced_model(&self, power: f64) -> RadarSensingPair {
        RadarSensingPair { gain: self.target_gain, power }
    }
}

/// Removes the direct path, undoes the Doppler rotation and realigns the
/// target path so that output `i` corresponds to transmitted sample `i`:
///
/// `Y_i = exp(-j 2 pi f (i + tau)) * (Ybar_{i+tau} - h0 x_{i+tau-tau_d})`.
///
/// Indices are 0-based and the transmitted signal is zero outside
/// `0..tx.len()`, so the direct-path term never underflows. The output has
/// `min(raw.len() - tau, tx.len())` samples (zero if `raw` is shorter than
/// the target delay).
pub fn passive_radar_preprocess(raw: &[Complex64], tx: &[Complex64], params: &RadarParams) -> Vec<Complex64> {
    let tau = params.target_delay;
    let len = raw.len().saturating_sub(tau).min(tx.len());
    (0..len)
        .map(|i| {
            let k = i + tau;
            let direct = k
                .checked_sub(params.direct_delay)
                .and_then(|j| tx.get(j))
                .map_or(Complex64::new(0.0, 0.0), |x| params.direct_gain * x);
            let rot = Complex64::from_polar(1.0, -2.0 * PI * params.doppler * k as f64);
            rot * (raw[k] - direct)
        })
        .collect()
}

/// MIMO Gaussian pair: `Y = G_s x + Z`, `Z ~ N(0, I)`; communication output
/// `Ytilde = Gtilde x + Ztilde`.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoGaussianPair {
    pub g0: DMatrix<f64>,
    pub g1: DMatrix<f64>,
    pub g_comm: DMatrix<f64>,
    pub power: f64,
}

impl MimoGaussianPair {
    pub fn new(g0: DMatrix<f64>, g1: DMatrix<f64>, g_comm: DMatrix<f64>, power: f64) -> Result<Self> {
        if g0.shape() != g1.shape() {
            return Err(Error::InvalidParameter(format!(
                "sensing gains differ in shape: {:?} vs {:?}",
                g0.shape(),
                g1.shape()
            )));
        }
        if g_comm.ncols() != g0.ncols() {
            return Err(Error::InvalidParameter(
                "communication gain must have one column per transmit antenna".into(),
            ));
        }
        if !(power > 0.0) {
            return Err(Error::InvalidParameter(format!("power must be positive, got {power}")));
        }
        Ok(MimoGaussianPair { g0, g1, g_comm, power })
    }

    /// Convenience constructor from the gain difference alone (`G0 = 0`).
    pub fn from_difference(g_diff: DMatrix<f64>, g_comm: DMatrix<f64>, power: f64) -> Result<Self> {
        let g0 = DMatrix::zeros(g_diff.nrows(), g_diff.ncols());
        MimoGaussianPair::new(g0, g_diff, g_comm, power)
    }

    pub fn transmit_dim(&self) -> usize {
        self.g0.ncols()
    }

    /// `Gamma = (G1 - G0)^T (G1 - G0)`.
    pub fn gamma(&self) -> DMatrix<f64> {
        let diff = &self.g1 - &self.g0;
        diff.transpose() * diff
    }

    pub fn symbol_cost(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * self.gamma() * x)[(0, 0)]
    }
}

impl SensingModel for MimoGaussianPair {
    type Input = DVector<f64>;
    type Obs = DVector<f64>;

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() == self.transmit_dim() {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected: self.transmit_dim(), found: x.len() })
        }
    }

    fn sample<R: Rng + ?Sized>(&self, state: SensingState, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let g = match state {
            SensingState::Pre => &self.g0,
            SensingState::Post => &self.g1,
        };
        let noise = DVector::from_fn(g.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
        g * x + noise
    }

    fn llr(&self, x: &DVector<f64>, y: &DVector<f64>) -> ExtReal {
        let r0 = y - &self.g0 * x;
        let r1 = y - &self.g1 * x;
        ExtReal::Finite(0.5 * (r0.norm_squared() - r1.norm_squared()))
    }
}
