//! Constant subblock-composition codes.
//!
//! A codeword of length `n = k L` is split into `k` subblocks of length `L`,
//! and every subblock of every codeword has the same symbol composition.
//! Each subblock is drawn uniformly from the type class, independently.

use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::prob::{mutual_information, ChannelMatrix, Distribution};
use crate::rng::{stream, SimRng};
use crate::{Error, Result};

/// Default cap on `messages * k * L` stored symbols.
pub const DEFAULT_SYMBOL_CAP: usize = 1 << 26;

/// Composition of a length-`L` subblock: `counts[a]` copies of symbol `a`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubblockType {
    counts: Vec<usize>,
}

impl SubblockType {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() || counts.iter().sum::<usize>() == 0 {
            return Err(Error::InvalidParameter("subblock type needs a positive length".into()));
        }
        Ok(SubblockType { counts })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn alphabet(&self) -> usize {
        self.counts.len()
    }

    /// Number of symbols with a positive count.
    pub fn support(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn distribution(&self) -> Distribution {
        let l = self.len() as f64;
        Distribution::new(self.counts.iter().map(|&c| c as f64 / l).collect())
            .expect("counts form a valid type")
    }

    /// Composition of `block` over this type's alphabet.
    pub fn composition_of(&self, block: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.alphabet()];
        for &s in block {
            if s < counts.len() {
                counts[s] += 1;
            }
        }
        counts
    }

    fn multiset(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(a, &c)| std::iter::repeat_n(a, c))
            .collect()
    }
}

/// Largest-remainder rounding of `L * px` to a type with denominator `L`.
/// Remainder ties go to the lower symbol index.
pub fn quantize_type(px: &Distribution, len: usize) -> Result<SubblockType> {
    if len == 0 {
        return Err(Error::InvalidParameter("subblock length must be at least 1".into()));
    }
    let scaled: Vec<f64> = px.probs().iter().map(|p| p * len as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &a in order.iter().take(len.saturating_sub(assigned)) {
        counts[a] += 1;
    }
    SubblockType::new(counts)
}

/// Uniform draw from the type class: a Fisher-Yates shuffle of the fixed
/// multiset. Every distinct arrangement is produced by the same number of
/// permutations, so the induced law on arrangements is uniform.
pub fn sample_subblock<R: Rng + ?Sized>(t: &SubblockType, rng: &mut R) -> Vec<usize> {
    let mut block = t.multiset();
    block.shuffle(rng);
    block
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsccCodebook {
    subblock_type: SubblockType,
    subblocks: usize,
    seed: u64,
    codewords: Vec<Vec<usize>>,
}

impl CsccCodebook {
    pub fn subblock_type(&self) -> &SubblockType {
        &self.subblock_type
    }

    pub fn subblock_len(&self) -> usize {
        self.subblock_type.len()
    }

    pub fn subblocks(&self) -> usize {
        self.subblocks
    }

    pub fn blocklength(&self) -> usize {
        self.subblocks * self.subblock_len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn codewords(&self) -> &[Vec<usize>] {
        &self.codewords
    }

    pub fn codeword(&self, m: usize) -> &[usize] {
        &self.codewords[m]
    }

    pub fn messages(&self) -> usize {
        self.codewords.len()
    }

    /// Checks that every subblock of every codeword has the codebook's type.
    pub fn verify_composition(&self) -> Result<()> {
        let l = self.subblock_len();
        for (m, cw) in self.codewords.iter().enumerate() {
            if cw.len() != self.blocklength() {
                return Err(Error::LengthMismatch { expected: self.blocklength(), found: cw.len() });
            }
            if let Some(&s) = cw.iter().find(|&&s| s >= self.subblock_type.alphabet()) {
                return Err(Error::SymbolOutOfRange { symbol: s, size: self.subblock_type.alphabet() });
            }
            for (j, block) in cw.chunks(l).enumerate() {
                if self.subblock_type.composition_of(block) != self.subblock_type.counts() {
                    return Err(Error::InvalidParameter(format!(
                        "codeword {m} subblock {j} breaks the composition"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Flat text form: one header line of `key=value` pairs, then one
    /// codeword per line as space-separated symbol indices.
    pub fn to_text(&self, extra_header: &[(&str, String)]) -> String {
        let counts: Vec<String> = self.subblock_type.counts().iter().map(|c| c.to_string()).collect();
        let mut out = format!(
            "L={} k={} alphabet={} seed={} counts={} messages={}",
            self.subblock_len(),
            self.subblocks,
            self.subblock_type.alphabet(),
            self.seed,
            counts.join(","),
            self.messages()
        );
        for (k, v) in extra_header {
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
        for cw in &self.codewords {
            let line: Vec<String> = cw.iter().map(|s| s.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses [`CsccCodebook::to_text`] output and verifies the composition
    /// invariant. Unknown header keys are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Format { line: 1, message: "empty codebook".into() })?;
        let mut len = None;
        let mut k = None;
        let mut alphabet = None;
        let mut seed = None;
        let mut counts = None;
        let mut messages = None;
        let fmt_err = |message: String| Error::Format { line: 1, message };
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| fmt_err(format!("header field `{field}` is not key=value")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|e| fmt_err(format!("{key}: {e}")));
            match key {
                "L" => len = Some(num(value)? as usize),
                "k" => k = Some(num(value)? as usize),
                "alphabet" => alphabet = Some(num(value)? as usize),
                "seed" => seed = Some(num(value)?),
                "messages" => messages = Some(num(value)? as usize),
                "counts" => {
                    counts = Some(
                        value
                            .split(',')
                            .map(|c| num(c).map(|v| v as usize))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                _ => {}
            }
        }
        let missing = |name: &str| fmt_err(format!("header is missing `{name}`"));
        let subblock_type = SubblockType::new(counts.ok_or_else(|| missing("counts"))?)?;
        let len = len.ok_or_else(|| missing("L"))?;
        let subblocks = k.ok_or_else(|| missing("k"))?;
        if subblock_type.len() != len {
            return Err(fmt_err(format!("counts sum to {} but L={len}", subblock_type.len())));
        }
        if alphabet.is_some_and(|a| a != subblock_type.alphabet()) {
            return Err(fmt_err("alphabet disagrees with counts".into()));
        }
        let mut codewords = Vec::new();
        for (i, line) in lines {
            let cw = line
                .split_whitespace()
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|e| Error::Format { line: i + 1, message: format!("symbol `{s}`: {e}") })
                })
                .collect::<Result<Vec<_>>>()?;
            codewords.push(cw);
        }
        if messages.is_some_and(|m| m != codewords.len()) {
            return Err(fmt_err(format!("header declares {} messages, found {}", messages.unwrap(), codewords.len())));
        }
        let book = CsccCodebook { subblock_type, subblocks, seed: seed.unwrap_or(0), codewords };
        book.verify_composition()?;
        Ok(book)
    }
}

/// Random CSCC codebook from `seed`, capped at [`DEFAULT_SYMBOL_CAP`] symbols.
pub fn generate_codebook(t: &SubblockType, subblocks: usize, messages: usize, seed: u64) -> Result<CsccCodebook> {
    generate_codebook_capped(t, subblocks, messages, seed, DEFAULT_SYMBOL_CAP)
}

pub fn generate_codebook_capped(
    t: &SubblockType,
    subblocks: usize,
    messages: usize,
    seed: u64,
    cap: usize,
) -> Result<CsccCodebook> {
    if subblocks == 0 || messages == 0 {
        return Err(Error::InvalidParameter("need at least one subblock and one message".into()));
    }
    let requested = messages
        .checked_mul(subblocks)
        .and_then(|v| v.checked_mul(t.len()))
        .unwrap_or(usize::MAX);
    if requested > cap {
        return Err(Error::CapExceeded { requested, cap });
    }
    let mut rng: SimRng = stream(seed);
    let codewords = (0..messages)
        .map(|_| (0..subblocks).flat_map(|_| sample_subblock(t, &mut rng)).collect())
        .collect();
    Ok(CsccCodebook { subblock_type: t.clone(), subblocks, seed, codewords })
}

/// Rate penalty of a CSCC with subblock type `t`, in nats per channel use,
/// evaluated with the bounded correction factor `u` at its upper end, 1:
///
/// `r = (s - 1) ln(2 pi L) / (2L) + sum_{a: p(a) > 0} ln p(a) / (2L) + s / (12 L ln 2)`
///
/// where `s` is the support size and `p = counts / L`.
pub fn rate_penalty(t: &SubblockType) -> f64 {
    let l = t.len() as f64;
    let s = t.support() as f64;
    let log_sum: f64 = t
        .counts()
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| (c as f64 / l).ln())
        .sum();
    (s - 1.0) * (2.0 * PI * l).ln() / (2.0 * l) + log_sum / (2.0 * l) + s / (12.0 * l * LN_2)
}

/// Both ends of the CSCC achievable-rate sandwich for one type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub subblock_len: usize,
    pub mutual_information: f64,
    pub penalty: f64,
    pub lower: f64,
}

pub fn rate_report(t: &SubblockType, comm: &ChannelMatrix) -> Result<RateReport> {
    let mi = mutual_information(&t.distribution(), comm)?;
    let penalty = rate_penalty(t);
    Ok(RateReport { subblock_len: t.len(), mutual_information: mi, penalty, lower: mi - penalty })
}

/// Smallest window length `L0`, searched over multiples of `step`, such that
/// every length-`L0` window `w` of `codeword` satisfies
/// `|count_a(w) / L0 - px(a)| <= eps * px(a)` for all symbols `a`.
/// Returns `None` when no window up to the codeword length qualifies.
pub fn sliding_window_check(codeword: &[usize], px: &Distribution, eps: f64, step: usize) -> Option<usize> {
    let n = codeword.len();
    let alphabet = px.len();
    if n == 0 || step == 0 || codeword.iter().any(|&s| s >= alphabet) {
        return None;
    }
    // prefix[i][a] = occurrences of a in codeword[..i]
    let mut prefix = vec![vec![0usize; alphabet]; n + 1];
    for (i, &s) in codeword.iter().enumerate() {
        prefix[i + 1] = prefix[i].clone();
        prefix[i + 1][s] += 1;
    }
    (step..=n).step_by(step).find(|&w| {
        (0..=n - w).all(|start| {
            (0..alphabet).all(|a| {
                let frac = (prefix[start + w][a] - prefix[start][a]) as f64 / w as f64;
                let p = px.prob(a);
                (frac - p).abs() <= eps * p + 1e-12
            })
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::collections::HashMap;

    fn counts(v: &[usize]) -> SubblockType {
        SubblockType::new(v.to_vec()).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let q = |p: &[f64], l| quantize_type(&Distribution::new(p.to_vec()).unwrap(), l).unwrap();
        assert_eq!(q(&[0.5, 0.5], 2).counts(), &[1, 1]);
        assert_eq!(q(&[0.3, 0.7], 10).counts(), &[3, 7]);
        assert_eq!(q(&[1.0 / 3.0, 2.0 / 3.0], 4).counts(), &[1, 3]);
        // equal remainders go to the lower index
        assert_eq!(q(&[0.25, 0.25, 0.5], 2).counts(), &[1, 0, 1]);
        assert!(quantize_type(&Distribution::uniform(2), 0).is_err());
    }

    #[test]
    fn quantize_tv_distance_bound() {
        let mut rng = stream(11);
        for _ in 0..200 {
            let w: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 1e-3).collect();
            let px = Distribution::from_weights(&w).unwrap();
            for l in [1, 3, 7, 20, 101] {
                let t = quantize_type(&px, l).unwrap();
                assert_eq!(t.len(), l);
                let tv: f64 = t
                    .distribution()
                    .probs()
                    .iter()
                    .zip(px.probs())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / 2.0;
                assert!(tv <= 4.0 / (2.0 * l as f64) + 1e-12);
            }
        }
    }

    #[test]
    fn singleton_type_class() {
        let mut rng = stream(0);
        for _ in 0..10 {
            assert_eq!(sample_subblock(&counts(&[2, 0]), &mut rng), vec![0, 0]);
        }
    }

    // Pearson chi-square against a uniform law over `cells` outcomes.
    fn chi_square_uniform(tally: &HashMap<Vec<usize>, usize>, cells: usize, draws: usize) -> f64 {
        assert_eq!(tally.len(), cells);
        let expected = draws as f64 / cells as f64;
        tally.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum()
    }

    #[test]
    fn two_arrangements_are_equally_likely() {
        let mut rng = stream(21);
        let mut tally = HashMap::new();
        for _ in 0..10_000 {
            *tally.entry(sample_subblock(&counts(&[1, 1]), &mut rng)).or_insert(0) += 1;
        }
        // chi-square critical value, 1 dof, 1% level
        assert!(chi_square_uniform(&tally, 2, 10_000) < 6.635);
    }

    #[test]
    fn six_arrangements_are_equally_likely() {
        let mut rng = stream(22);
        let mut tally = HashMap::new();
        for _ in 0..60_000 {
            *tally.entry(sample_subblock(&counts(&[2, 2]), &mut rng)).or_insert(0) += 1;
        }
        // chi-square critical value, 5 dof, 1% level
        assert!(chi_square_uniform(&tally, 6, 60_000) < 15.086);
    }

    #[test]
    fn codebook_composition_and_determinism() {
        let t = counts(&[1, 1]);
        let book = generate_codebook(&t, 3, 4, 7).unwrap();
        assert_eq!(book.messages(), 4);
        for cw in book.codewords() {
            assert_eq!(cw.len(), 6);
            assert_eq!(cw.iter().filter(|&&s| s == 0).count(), 3);
            for block in cw.chunks(2) {
                assert_eq!(t.composition_of(block), vec![1, 1]);
            }
        }
        book.verify_composition().unwrap();
        assert_eq!(book, generate_codebook(&t, 3, 4, 7).unwrap());
    }

    #[test]
    fn small_type_class_allows_duplicates() {
        let book = generate_codebook(&counts(&[1, 1]), 1, 16, 3).unwrap();
        let distinct: std::collections::HashSet<_> = book.codewords().iter().collect();
        assert!(distinct.len() <= 2);
        assert_eq!(book.messages(), 16);
    }

    #[test]
    fn codebook_cap_and_validation() {
        let t = counts(&[4, 4]);
        assert!(matches!(
            generate_codebook_capped(&t, 100, 100, 0, 10_000),
            Err(Error::CapExceeded { requested: 80_000, cap: 10_000 })
        ));
        assert!(generate_codebook(&t, 0, 4, 0).is_err());
        assert!(generate_codebook(&t, 4, 0, 0).is_err());
    }

    #[test]
    fn text_round_trip_and_tamper_detection() {
        let book = generate_codebook(&counts(&[2, 1, 1]), 5, 6, 99).unwrap();
        let text = book.to_text(&[("manifest", "abc".into())]);
        assert_eq!(CsccCodebook::from_text(&text).unwrap(), book);

        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[1] = lines[1].replacen('0', "1", 1);
        let tampered = lines.join("\n");
        assert!(CsccCodebook::from_text(&tampered).is_err());
        assert!(matches!(CsccCodebook::from_text("L=2 k=1\n0 1\n"), Err(Error::Format { .. })));
    }

    #[test]
    fn rate_penalty_examples() {
        assert!((rate_penalty(&counts(&[1, 1])) - 0.40641).abs() < 1e-5);
        // point-mass type: first term vanishes, log term is ln 1 = 0
        let l = 5.0;
        let expected = 1.0 / (12.0 * l * LN_2);
        assert!((rate_penalty(&counts(&[5, 0])) - expected).abs() < 1e-15);
    }

    #[test]
    fn rate_penalty_decreases_for_uniform_binary() {
        for l in (8..=512).step_by(2) {
            let r1 = rate_penalty(&counts(&[l / 2, l / 2]));
            let r2 = rate_penalty(&counts(&[l, l]));
            assert!(r2 < r1, "L = {l}");
        }
    }

    #[test]
    fn quantized_mutual_information_converges() {
        let px = Distribution::new(vec![0.37, 0.63]).unwrap();
        let comm = ChannelMatrix::bsc(0.3).unwrap();
        let target = mutual_information(&px, &comm).unwrap();
        let mut prev_gap = f64::INFINITY;
        for l in [4, 16, 64, 256, 1024] {
            let rep = rate_report(&quantize_type(&px, l).unwrap(), &comm).unwrap();
            let gap = (rep.mutual_information - target).abs();
            // TV distance <= |X|/(2L) bounds the drift in mutual information
            assert!(gap <= 1.0 / l as f64, "L = {l}: gap {gap}");
            assert!(rep.lower <= rep.mutual_information);
            prev_gap = prev_gap.min(gap);
        }
        assert!(prev_gap < 1e-3);
    }

    // Worst-case relative deviation of a 2L window over a CSCC codeword,
    // from the interval of possible counts at each offset into a subblock.
    fn two_block_window_bound(t: &SubblockType) -> f64 {
        let l = t.len();
        let mut worst: f64 = 0.0;
        for &c in t.counts().iter().filter(|&&c| c > 0) {
            let p = c as f64 / l as f64;
            for o in 0..l {
                let lo = c + c.saturating_sub(o) + c.saturating_sub(l - o);
                let hi = c + c.min(l - o) + c.min(o);
                for count in [lo, hi] {
                    worst = worst.max(((count as f64 / (2 * l) as f64) - p).abs() / p);
                }
            }
        }
        worst
    }

    #[test]
    fn cscc_codeword_passes_window_check_at_two_subblocks() {
        let t = counts(&[3, 2, 3]);
        let book = generate_codebook(&t, 12, 3, 5).unwrap();
        let eps = two_block_window_bound(&t);
        for cw in book.codewords() {
            let l0 = sliding_window_check(cw, &t.distribution(), eps, 1).unwrap();
            assert!(l0 <= 2 * t.len(), "L0 = {l0}");
        }
    }

    #[test]
    fn constant_codeword_fails_window_check() {
        let cw = vec![0; 64];
        assert_eq!(sliding_window_check(&cw, &Distribution::uniform(2), 0.9, 1), None);
    }

    #[test]
    fn large_eps_gives_unit_window() {
        let px = Distribution::new(vec![0.3, 0.7]).unwrap();
        let eps = 1.0 / 0.3 - 1.0;
        let cw = vec![0, 1, 1, 0, 1, 1, 1, 0];
        assert_eq!(sliding_window_check(&cw, &px, eps, 1), Some(1));
        assert_ne!(sliding_window_check(&cw, &px, eps - 0.01, 1), Some(1));
    }
}
