//! Sequential change detectors.
//!
//! [`CusumState`] is Page's per-sample recursion. [`ScsState`] is the
//! subblock variant: it accumulates the log-likelihood ratio of a whole
//! subblock and updates (and clamps) only at subblock boundaries, so its
//! stopping index is always a multiple of the subblock length or the
//! no-alarm sentinel `n + 1`.

use std::io::{self, Write};

use crate::channels::SensingModel;
use crate::prob::ExtReal;
use crate::{Error, Result};

/// Threshold that targets false-alarm rate `alpha` with subblock length `L`:
/// `b = |ln alpha| + ln L`. Overshoot is ignored.
pub fn threshold_for_far(alpha: f64, subblock_len: usize) -> f64 {
    alpha.ln().abs() + (subblock_len as f64).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CusumState {
    statistic: f64,
    index: usize,
    threshold: f64,
    stopped_at: Option<usize>,
}

impl CusumState {
    pub fn new(threshold: f64) -> Self {
        CusumState { statistic: 0.0, index: 0, threshold, stopped_at: None }
    }

    pub fn with_statistic(mut self, w: f64) -> Self {
        self.statistic = w.max(0.0);
        self
    }

    /// `W <- (W + llr)^+`; stops once `W >= b`.
    pub fn step(&mut self, llr: ExtReal) -> Result<Option<usize>> {
        if let Some(at) = self.stopped_at {
            return Err(Error::AlreadyStopped(at));
        }
        self.index += 1;
        self.statistic = (self.statistic + llr.to_f64()).max(0.0);
        if self.statistic >= self.threshold {
            self.stopped_at = Some(self.index);
        }
        Ok(self.stopped_at)
    }

    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn stopped_at(&self) -> Option<usize> {
        self.stopped_at
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScsState {
    statistic: f64,
    block_len: usize,
    blocks: usize,
    threshold: f64,
    stopped_at: Option<usize>,
}

impl ScsState {
    pub fn new(block_len: usize, threshold: f64) -> Self {
        assert!(block_len > 0, "subblock length must be positive");
        ScsState { statistic: 0.0, block_len, blocks: 0, threshold, stopped_at: None }
    }

    /// Starts from a non-zero statistic, as if left over from earlier blocks.
    pub fn with_statistic(mut self, w: f64) -> Self {
        self.statistic = w.max(0.0);
        self
    }

    /// Absorbs one completed subblock. The stopping index, if any, is the
    /// sample index of the subblock's last symbol.
    pub fn update(&mut self, block_llr: ExtReal) -> Result<Option<usize>> {
        if let Some(at) = self.stopped_at {
            return Err(Error::AlreadyStopped(at));
        }
        self.blocks += 1;
        self.statistic = (self.statistic + block_llr.to_f64()).max(0.0);
        if self.statistic >= self.threshold {
            self.stopped_at = Some(self.blocks * self.block_len);
        }
        Ok(self.stopped_at)
    }

    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn stopped_at(&self) -> Option<usize> {
        self.stopped_at
    }
}

/// Sum of per-sample LLRs over one subblock. A block holding both a `+inf`
/// and a `-inf` sample has zero likelihood under both laws and contributes 0.
pub fn block_llr<M: SensingModel>(model: &M, inputs: &[M::Input], obs: &[M::Obs]) -> ExtReal {
    let mut sum = 0.0;
    let (mut pos, mut neg) = (false, false);
    for (x, y) in inputs.iter().zip(obs) {
        match model.llr(x, y) {
            ExtReal::Finite(v) => sum += v,
            ExtReal::PosInf => pos = true,
            ExtReal::NegInf => neg = true,
        }
    }
    match (pos, neg) {
        (true, true) => ExtReal::ZERO,
        (true, false) => ExtReal::PosInf,
        (false, true) => ExtReal::NegInf,
        (false, false) => ExtReal::Finite(sum),
    }
}

fn check_stream(codeword_len: usize, obs_len: usize, block_len: usize) -> Result<()> {
    if codeword_len != obs_len {
        return Err(Error::LengthMismatch { expected: codeword_len, found: obs_len });
    }
    if block_len == 0 || !codeword_len.is_multiple_of(block_len) {
        return Err(Error::InvalidParameter(format!(
            "length {codeword_len} is not a whole number of subblocks of length {block_len}"
        )));
    }
    Ok(())
}

/// Per-subblock LLRs of an aligned codeword/observation stream.
pub fn block_llrs<M: SensingModel>(
    model: &M,
    codeword: &[M::Input],
    obs: &[M::Obs],
    block_len: usize,
) -> Result<Vec<ExtReal>> {
    check_stream(codeword.len(), obs.len(), block_len)?;
    Ok(codeword
        .chunks(block_len)
        .zip(obs.chunks(block_len))
        .map(|(x, y)| block_llr(model, x, y))
        .collect())
}

/// First subblock index `j` (1-based) at which the clamped statistic started
/// from `start` reaches `threshold`.
pub fn scs_stop_block(block_llrs: &[ExtReal], threshold: f64, start: f64) -> Option<usize> {
    let mut w = start.max(0.0);
    for (j, z) in block_llrs.iter().enumerate() {
        w = (w + z.to_f64()).max(0.0);
        if w >= threshold {
            return Some(j + 1);
        }
    }
    None
}

/// Subblock CuSum stopping time `N` over one codeword: a multiple of
/// `block_len`, or `n + 1` when no alarm is raised.
pub fn run_scs<M: SensingModel>(
    codeword: &[M::Input],
    obs: &[M::Obs],
    model: &M,
    block_len: usize,
    threshold: f64,
) -> Result<usize> {
    let z = block_llrs(model, codeword, obs, block_len)?;
    Ok(scs_stop_block(&z, threshold, 0.0).map_or(codeword.len() + 1, |j| j * block_len))
}

/// Parallel SCS tests, one per alternative state; the earliest alarm wins.
pub fn run_multi_state_scs<M: SensingModel>(
    codeword: &[M::Input],
    obs: &[M::Obs],
    models: &[M],
    block_len: usize,
    threshold: f64,
) -> Result<usize> {
    if models.is_empty() {
        return Err(Error::InvalidParameter("need at least one alternative state".into()));
    }
    models
        .iter()
        .map(|m| run_scs(codeword, obs, m, block_len, threshold))
        .try_fold(usize::MAX, |acc, n| n.map(|n| acc.min(n)))
}

/// One-sided SPRT on subblock LLRs: first `j` (1-based) where the unclamped
/// cumulative sum reaches `threshold`; `None` if it never does.
pub fn sprt_stop(block_llrs: &[ExtReal], threshold: f64) -> Option<usize> {
    let mut s = ExtReal::ZERO;
    for (j, z) in block_llrs.iter().enumerate() {
        s = s + *z;
        if s.to_f64() >= threshold {
            return Some(j + 1);
        }
    }
    None
}

pub fn run_sprt<M: SensingModel>(
    codeword: &[M::Input],
    obs: &[M::Obs],
    model: &M,
    block_len: usize,
    threshold: f64,
) -> Result<Option<usize>> {
    let z = block_llrs(model, codeword, obs, block_len)?;
    Ok(sprt_stop(&z, threshold))
}

/// Per-sample view of an SCS run for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct ScsTrace {
    pub stop: usize,
    /// `(i, W_i)` for `i = 1..=min(stop, n)`.
    pub statistic: Vec<(usize, f64)>,
}

pub fn scs_trace<M: SensingModel>(
    codeword: &[M::Input],
    obs: &[M::Obs],
    model: &M,
    block_len: usize,
    threshold: f64,
) -> Result<ScsTrace> {
    let z = block_llrs(model, codeword, obs, block_len)?;
    let mut state = ScsState::new(block_len, threshold);
    let mut statistic = Vec::with_capacity(codeword.len());
    for zj in z {
        let before = state.statistic();
        let stopped = state.update(zj)?;
        let base = (state.blocks() - 1) * block_len;
        statistic.extend((1..block_len).map(|o| (base + o, before)));
        statistic.push((base + block_len, state.statistic()));
        if stopped.is_some() {
            break;
        }
    }
    Ok(ScsTrace { stop: state.stopped_at().unwrap_or(codeword.len() + 1), statistic })
}

/// Writes `i,W_i` rows with a header.
pub fn write_trace_csv<W: Write>(out: &mut W, trace: &ScsTrace) -> io::Result<()> {
    writeln!(out, "i,w")?;
    for (i, w) in &trace.statistic {
        writeln!(out, "{i},{w}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::DiscreteSensingPair;
    use crate::prob::ChannelMatrix;
    use proptest::prelude::*;

    fn fin(v: &[f64]) -> Vec<ExtReal> {
        v.iter().map(|&x| ExtReal::Finite(x)).collect()
    }

    #[test]
    fn cusum_examples() {
        let mut s = CusumState::new(10.0).with_statistic(0.5);
        s.step(ExtReal::Finite(-1.0)).unwrap();
        assert_eq!(s.statistic(), 0.0);

        let mut s = CusumState::new(0.0);
        assert_eq!(s.step(ExtReal::ZERO).unwrap(), Some(1));

        let mut s = CusumState::new(3.0).with_statistic(1.7);
        assert_eq!(s.step(ExtReal::Finite(1.61)).unwrap(), Some(1));
        assert!((s.statistic() - 3.31).abs() < 1e-12);
        assert!(matches!(s.step(ExtReal::ZERO), Err(Error::AlreadyStopped(1))));
    }

    #[test]
    fn cusum_handles_infinite_llr() {
        let mut s = CusumState::new(5.0).with_statistic(4.0);
        s.step(ExtReal::NegInf).unwrap();
        assert_eq!(s.statistic(), 0.0);
        assert_eq!(s.step(ExtReal::PosInf).unwrap(), Some(2));
    }

    #[test]
    fn scs_z_channel_example() {
        let pair = DiscreteSensingPair::z_pair(0.1, 0.5).unwrap();
        let z = pair.llr_table()[1][0];
        let mut s = ScsState::new(1, 3.0);
        assert_eq!(s.update(z).unwrap(), None);
        assert_eq!(s.update(z).unwrap(), Some(2));
        assert!((s.statistic() - 2.0 * 5f64.ln()).abs() < 1e-12);
        assert!(s.update(z).is_err());

        assert_eq!(run_scs(&[1, 1], &[0, 0], &pair, 1, 3.0).unwrap(), 2);
        assert_eq!(run_scs(&[1, 1, 1], &[0, 0, 0], &pair, 1, 3.0).unwrap(), 2);
    }

    #[test]
    fn scs_never_stops_on_zero_llr() {
        let mut s = ScsState::new(4, 1.0);
        for _ in 0..1000 {
            assert_eq!(s.update(ExtReal::ZERO).unwrap(), None);
        }
        let bsc = ChannelMatrix::bsc(0.2).unwrap();
        let same = DiscreteSensingPair::new(bsc.clone(), bsc).unwrap();
        assert_eq!(run_scs(&[0, 1, 1, 0], &[1, 1, 0, 0], &same, 2, 0.5).unwrap(), 5);
    }

    #[test]
    fn scs_zero_threshold_fires_at_first_boundary() {
        let mut s = ScsState::new(3, 0.0);
        assert_eq!(s.update(ExtReal::Finite(-2.0)).unwrap(), Some(3));
    }

    #[test]
    fn scs_stops_only_on_boundaries() {
        let pair = DiscreteSensingPair::z_pair(0.1, 0.5).unwrap();
        let cw = [1, 0, 0, 1, 1, 0];
        let obs = [0, 0, 0, 0, 0, 0];
        let n = run_scs(&cw, &obs, &pair, 2, 3.0).unwrap();
        assert_eq!(n, 4);
        assert!(run_scs(&cw, &obs[..5], &pair, 2, 3.0).is_err());
        assert!(run_scs(&cw[..5], &obs[..5], &pair, 2, 3.0).is_err());
    }

    #[test]
    fn block_llr_infinity_rules() {
        let p0 = ChannelMatrix::new(vec![vec![0.5, 0.0, 0.5], vec![0.0, 0.5, 0.5]]).unwrap();
        let p1 = ChannelMatrix::new(vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5]]).unwrap();
        let pair = DiscreteSensingPair::new(p0, p1).unwrap();
        assert_eq!(block_llr(&pair, &[0], &[1]), ExtReal::PosInf);
        assert_eq!(block_llr(&pair, &[0], &[0]), ExtReal::NegInf);
        assert_eq!(block_llr(&pair, &[0, 0], &[0, 1]), ExtReal::ZERO);
    }

    #[test]
    fn multi_state_reductions() {
        let a = DiscreteSensingPair::z_pair(0.1, 0.5).unwrap();
        let b = DiscreteSensingPair::z_pair(0.1, 0.3).unwrap();
        let cw = [1, 0, 1, 0, 1, 0, 1, 0];
        let obs = [0, 0, 1, 0, 0, 0, 0, 0];
        let single = run_scs(&cw, &obs, &a, 2, 3.0).unwrap();
        assert_eq!(run_multi_state_scs(&cw, &obs, std::slice::from_ref(&a), 2, 3.0).unwrap(), single);
        assert_eq!(run_multi_state_scs(&cw, &obs, &[a.clone(), a.clone()], 2, 3.0).unwrap(), single);
        // llr(1,0) = ln 5 for a and ln 3 for b: a dominates sample-wise on zeros
        assert_eq!(run_multi_state_scs(&cw, &obs, &[b.clone(), a.clone()], 2, 3.0).unwrap(), single);
        assert!(run_scs(&cw, &obs, &b, 2, 3.0).unwrap() >= single);
        let empty: [DiscreteSensingPair; 0] = [];
        assert!(run_multi_state_scs(&cw, &obs, &empty, 2, 3.0).is_err());
    }

    #[test]
    fn sprt_examples() {
        assert_eq!(sprt_stop(&fin(&[0.0; 50]), 1.0), None);
        assert_eq!(sprt_stop(&fin(&[2.0, -5.0]), 1.5), Some(1));
        assert_eq!(sprt_stop(&fin(&[1.0, -3.0, 2.5, 1.0]), 1.5), Some(4));
    }

    #[test]
    fn threshold_calibration() {
        assert!((threshold_for_far(0.01, 2) - (100f64.ln() + 2f64.ln())).abs() < 1e-12);
        assert!((threshold_for_far(0.1, 1) - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn trace_matches_run_and_writes_csv() {
        let pair = DiscreteSensingPair::z_pair(0.1, 0.5).unwrap();
        let cw = [1, 0, 0, 1, 1, 0];
        let obs = [0, 0, 0, 0, 0, 0];
        let t = scs_trace(&cw, &obs, &pair, 2, 3.0).unwrap();
        assert_eq!(t.stop, 4);
        assert_eq!(t.statistic.len(), 4);
        assert_eq!(t.statistic[0], (1, 0.0));
        assert!((t.statistic[1].1 - 5f64.ln()).abs() < 1e-12);
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,w\n1,0\n"));
        assert_eq!(text.lines().count(), 5);
    }

    fn arb_trace() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, 1..60)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn scs_is_earliest_sprt_restart(trace in arb_trace(), b in 0.01f64..6.0) {
            let z = fin(&trace);
            let scs = scs_stop_block(&z, b, 0.0);
            let via_sprt = (0..z.len())
                .filter_map(|j| sprt_stop(&z[j..], b).map(|n| n + j))
                .min();
            prop_assert_eq!(scs, via_sprt);
        }

        #[test]
        fn higher_start_never_delays(trace in arb_trace(), b in 0.01f64..6.0, w0 in 0.0f64..6.0) {
            let z = fin(&trace);
            let base = scs_stop_block(&z, b, 0.0).unwrap_or(usize::MAX);
            let raised = scs_stop_block(&z, b, w0).unwrap_or(usize::MAX);
            prop_assert!(raised <= base);
        }

        #[test]
        fn larger_llr_never_delays(trace in arb_trace(), b in 0.01f64..6.0, idx in any::<prop::sample::Index>(), bump in 0.0f64..4.0) {
            let z = fin(&trace);
            let mut bumped = z.clone();
            let i = idx.index(z.len());
            bumped[i] = ExtReal::Finite(trace[i] + bump);
            let base = scs_stop_block(&z, b, 0.0).unwrap_or(usize::MAX);
            let after = scs_stop_block(&bumped, b, 0.0).unwrap_or(usize::MAX);
            prop_assert!(after <= base);
        }
    }
}
