//! Finite-alphabet probability primitives.
//!
//! Logarithms are natural throughout. Divergences that blow up because of a
//! support mismatch are returned as [`ExtReal::PosInf`], never as a large
//! float.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A real number extended with explicit infinities.
///
/// Addition saturates. The indeterminate sum `+inf + -inf` resolves to zero:
/// it only arises for an observation that is impossible under both laws,
/// which carries no evidence either way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
    NegInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// IEEE view of the value; infinities map to `f64::INFINITY` and
    /// `f64::NEG_INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
            ExtReal::NegInf => f64::NEG_INFINITY,
        }
    }

    /// Multiplies by a non-negative weight with the convention `0 * inf = 0`.
    pub fn scale(self, weight: f64) -> ExtReal {
        debug_assert!(weight >= 0.0);
        if weight == 0.0 {
            return ExtReal::ZERO;
        }
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(v * weight),
            inf => inf,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtReal::PosInf
        } else if v == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(v)
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        use ExtReal::*;
        match (self, rhs) {
            (Finite(a), Finite(b)) => Finite(a + b),
            (PosInf, NegInf) | (NegInf, PosInf) => ExtReal::ZERO,
            (PosInf, _) | (_, PosInf) => PosInf,
            (NegInf, _) | (_, NegInf) => NegInf,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => f.write_str("inf"),
            ExtReal::NegInf => f.write_str("-inf"),
        }
    }
}

/// Probability vector over `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates and renormalises. Entries must be finite and non-negative,
    /// and the sum must be within [`SUM_TOLERANCE`] of one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {bad} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(Distribution { probs: probs.into_iter().map(|p| p / sum).collect() })
    }

    /// Normalises arbitrary non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDistribution("weights must be non-negative with a positive sum".into()));
        }
        Distribution::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0, "alphabet size must be positive");
        Distribution { probs: vec![1.0 / size as f64; size] }
    }

    pub fn point_mass(size: usize, symbol: usize) -> Self {
        assert!(symbol < size, "symbol outside alphabet");
        let mut probs = vec![0.0; size];
        probs[symbol] = 1.0;
        Distribution { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, symbol: usize) -> f64 {
        self.probs[symbol]
    }

    /// Convex combination `weight * self + (1 - weight) * other`.
    pub fn mix(&self, other: &Distribution, weight: f64) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Distribution::from_weights(
            &self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| weight * a + (1.0 - weight) * b)
                .collect::<Vec<_>>(),
        )
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Distribution::new(probs)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

/// Row-stochastic conditional law `p(y|x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    rows: Vec<Distribution>,
}

impl ChannelMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let rows = rows.into_iter().map(Distribution::new).collect::<Result<Vec<_>>>()?;
        ChannelMatrix::from_rows(rows)
    }

    pub fn from_rows(rows: Vec<Distribution>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidDistribution("channel has no input symbols".into()))?
            .len();
        for row in &rows {
            check_len(first, row.len())?;
        }
        Ok(ChannelMatrix { rows })
    }

    /// Binary symmetric channel with crossover probability `eps`.
    pub fn bsc(eps: f64) -> Result<Self> {
        ChannelMatrix::new(vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]])
    }

    /// Z-channel: input 0 always yields 0, input 1 yields 0 with probability `eps`.
    pub fn z_channel(eps: f64) -> Result<Self> {
        ChannelMatrix::new(vec![vec![1.0, 0.0], vec![eps, 1.0 - eps]])
    }

    pub fn identity(size: usize) -> Self {
        ChannelMatrix { rows: (0..size).map(|x| Distribution::point_mass(size, x)).collect() }
    }

    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn outputs(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, x: usize) -> &Distribution {
        &self.rows[x]
    }

    pub fn rows(&self) -> &[Distribution] {
        &self.rows
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.rows[x].prob(y)
    }

    pub fn same_shape(&self, other: &ChannelMatrix) -> Result<()> {
        check_len(self.inputs(), other.inputs())?;
        check_len(self.outputs(), other.outputs())
    }

    /// Output law induced by the input law `px`.
    pub fn output_law(&self, px: &Distribution) -> Result<Distribution> {
        check_len(self.inputs(), px.len())?;
        let mut out = vec![0.0; self.outputs()];
        for (row, &w) in self.rows.iter().zip(px.probs()) {
            for (o, p) in out.iter_mut().zip(row.probs()) {
                *o += w * p;
            }
        }
        Distribution::from_weights(&out)
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::AlphabetMismatch { expected, found })
    }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

pub fn entropy(p: &Distribution) -> f64 {
    (-p.probs().iter().map(|&v| plogp(v)).sum::<f64>()).max(0.0)
}

/// `D(p || q)`; `+inf` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<ExtReal> {
    check_len(p.len(), q.len())?;
    let mut sum = 0.0;
    for (&a, &b) in p.probs().iter().zip(q.probs()) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(ExtReal::PosInf);
        }
        sum += a * (a / b).ln();
    }
    Ok(ExtReal::Finite(sum.max(0.0)))
}

/// Per-input-symbol sensing cost `c(x) = D(p1(.|x) || p0(.|x))`.
pub fn symbol_costs(p1: &ChannelMatrix, p0: &ChannelMatrix) -> Result<Vec<ExtReal>> {
    p1.same_shape(p0)?;
    p1.rows().iter().zip(p0.rows()).map(|(a, b)| kl_divergence(a, b)).collect()
}

/// `D(p1 || p0 | px) = sum_x px(x) c(x)`. Infinite costs only count on the
/// support of `px`.
pub fn conditional_kl(p1: &ChannelMatrix, p0: &ChannelMatrix, px: &Distribution) -> Result<ExtReal> {
    check_len(p1.inputs(), px.len())?;
    let costs = symbol_costs(p1, p0)?;
    Ok(weighted_cost(&costs, px))
}

/// `sum_x px(x) costs[x]` with `0 * inf = 0`.
pub fn weighted_cost(costs: &[ExtReal], px: &Distribution) -> ExtReal {
    costs
        .iter()
        .zip(px.probs())
        .fold(ExtReal::ZERO, |acc, (c, &w)| acc + c.scale(w))
}

/// `I(px, ch) = H(Y) - H(Y|X)`.
pub fn mutual_information(px: &Distribution, ch: &ChannelMatrix) -> Result<f64> {
    let py = ch.output_law(px)?;
    let conditional: f64 = px
        .probs()
        .iter()
        .zip(ch.rows())
        .map(|(&w, row)| w * entropy(row))
        .sum();
    Ok((entropy(&py) - conditional).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-6;

    fn d(p: &[f64]) -> Distribution {
        Distribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&Distribution::uniform(2)) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&Distribution::point_mass(3, 1)), 0.0);
        assert!((entropy(&d(&[0.3, 0.7])) - 0.610864).abs() < TOL);
    }

    #[test]
    fn kl_examples() {
        let p = d(&[0.5, 0.5]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), ExtReal::ZERO);
        let v = kl_divergence(&p, &d(&[0.1, 0.9])).unwrap().finite().unwrap();
        assert!((v - 0.510826).abs() < TOL);
        assert_eq!(kl_divergence(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), ExtReal::PosInf);
        assert!(matches!(
            kl_divergence(&p, &Distribution::uniform(3)),
            Err(Error::AlphabetMismatch { .. })
        ));
    }

    #[test]
    fn conditional_kl_examples() {
        let p0 = ChannelMatrix::z_channel(0.1).unwrap();
        let p1 = ChannelMatrix::z_channel(0.5).unwrap();
        let v = conditional_kl(&p1, &p0, &Distribution::uniform(2)).unwrap();
        assert!((v.to_f64() - 0.255413).abs() < TOL);

        let at_one = conditional_kl(&p1, &p0, &Distribution::point_mass(2, 1)).unwrap();
        let direct = kl_divergence(p1.row(1), p0.row(1)).unwrap();
        assert_eq!(at_one, direct);

        let any = d(&[0.2, 0.8]);
        assert_eq!(conditional_kl(&p1, &p1, &any).unwrap(), ExtReal::ZERO);
    }

    #[test]
    fn infinite_cost_only_counts_on_support() {
        let p0 = ChannelMatrix::new(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let p1 = ChannelMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(
            conditional_kl(&p1, &p0, &Distribution::point_mass(2, 0)).unwrap(),
            ExtReal::ZERO
        );
        assert_eq!(conditional_kl(&p1, &p0, &Distribution::uniform(2)).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn mutual_information_examples() {
        let u = Distribution::uniform(2);
        assert!((mutual_information(&u, &ChannelMatrix::identity(2)).unwrap() - 2f64.ln()).abs() < 1e-12);
        let bsc = ChannelMatrix::bsc(0.3).unwrap();
        assert!((mutual_information(&u, &bsc).unwrap() - 0.0822828785050518).abs() < 1e-12);
        let constant = ChannelMatrix::new(vec![vec![0.4, 0.6], vec![0.4, 0.6]]).unwrap();
        assert!(mutual_information(&d(&[0.9, 0.1]), &constant).unwrap().abs() < 1e-15);
    }

    #[test]
    fn symbol_cost_examples() {
        let p0 = ChannelMatrix::z_channel(0.1).unwrap();
        let p1 = ChannelMatrix::z_channel(0.5).unwrap();
        let c = symbol_costs(&p1, &p0).unwrap();
        assert_eq!(c[0], ExtReal::ZERO);
        assert!((c[1].to_f64() - 0.510826).abs() < TOL);
        assert!(symbol_costs(&p0, &p0).unwrap().iter().all(|c| *c == ExtReal::ZERO));
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new(vec![]).is_err());
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![-0.1, 1.1]).is_err());
        let nearly = Distribution::new(vec![0.3, 0.7 + 5e-13]).unwrap();
        assert!((nearly.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ext_real_arithmetic_saturates() {
        use ExtReal::*;
        assert_eq!(Finite(1.0) + PosInf, PosInf);
        assert_eq!(NegInf + Finite(3.0), NegInf);
        assert_eq!(PosInf + NegInf, ExtReal::ZERO);
        assert_eq!(PosInf.scale(0.0), ExtReal::ZERO);
        assert!(Finite(1e300) < PosInf);
        assert!(NegInf < Finite(-1e300));
        assert_eq!(ExtReal::from(f64::INFINITY), PosInf);
    }

    fn arb_dist(n: usize) -> impl Strategy<Value = Distribution> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|w| Distribution::from_weights(&w).unwrap())
    }

    fn arb_channel(inputs: usize, outputs: usize) -> impl Strategy<Value = ChannelMatrix> {
        prop::collection::vec(arb_dist(outputs), inputs).prop_map(|rows| ChannelMatrix::from_rows(rows).unwrap())
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative_and_zero_on_diagonal(p in arb_dist(4), q in arb_dist(4)) {
            let v = kl_divergence(&p, &q).unwrap().to_f64();
            prop_assert!(v >= 0.0);
            prop_assert!(kl_divergence(&p, &p).unwrap().to_f64().abs() < 1e-15);
            if p.probs().iter().zip(q.probs()).any(|(a, b)| (a - b).abs() > 1e-3) {
                prop_assert!(v > 0.0);
            }
        }

        #[test]
        fn conditional_kl_is_linear(
            p1 in arb_channel(3, 3), p0 in arb_channel(3, 3),
            a in arb_dist(3), b in arb_dist(3), lam in 0.0f64..1.0,
        ) {
            let mixed = a.mix(&b, lam).unwrap();
            let lhs = conditional_kl(&p1, &p0, &mixed).unwrap().to_f64();
            let rhs = lam * conditional_kl(&p1, &p0, &a).unwrap().to_f64()
                + (1.0 - lam) * conditional_kl(&p1, &p0, &b).unwrap().to_f64();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn mutual_information_is_concave(
            ch in arb_channel(3, 4), a in arb_dist(3), b in arb_dist(3), lam in 0.0f64..1.0,
        ) {
            let mixed = a.mix(&b, lam).unwrap();
            let lhs = mutual_information(&mixed, &ch).unwrap();
            let rhs = lam * mutual_information(&a, &ch).unwrap()
                + (1.0 - lam) * mutual_information(&b, &ch).unwrap();
            prop_assert!(lhs >= rhs - 1e-10);
        }

        #[test]
        fn costs_dot_input_law_is_conditional_kl(p1 in arb_channel(3, 2), p0 in arb_channel(3, 2), px in arb_dist(3)) {
            let costs = symbol_costs(&p1, &p0).unwrap();
            let dot: f64 = costs.iter().zip(px.probs()).map(|(c, w)| c.to_f64() * w).sum();
            let direct = conditional_kl(&p1, &p0, &px).unwrap().to_f64();
            prop_assert!((dot - direct).abs() < 1e-12);
        }
    }
}
