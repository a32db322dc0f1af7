//! Achievable rate-delay regions.
//!
//! For a discrete input alphabet the boundary `R(Delta)` is traced by a
//! Blahut-Arimoto iteration in which the per-symbol sensing cost enters as a
//! reward weighted by a multiplier `lambda >= 0`. Scalar Gaussian models
//! have a closed-form rectangular region and the MIMO Gaussian region is
//! solved as a convex program over input covariances.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::channels::{DiscreteSensingPair, MimoGaussianPair, RadarSensingPair, ScalarGaussianPair};
use crate::prob::{mutual_information, ChannelMatrix, Distribution, ExtReal};
use crate::{par, Error, Result};

/// Slack used by the monotonicity, concavity and chord checks.
pub const CHECK_SLACK: f64 = 1e-9;

/// Input law that attains a boundary point.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputLaw {
    Discrete { probs: Vec<f64> },
    /// i.i.d. `N(0, power)` input.
    Gaussian { power: f64 },
    Covariance { matrix: Vec<Vec<f64>> },
}

impl InputLaw {
    fn covariance(m: &DMatrix<f64>) -> Self {
        InputLaw::Covariance { matrix: m.row_iter().map(|r| r.iter().copied().collect()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint {
    /// nats per channel use
    pub rate: f64,
    /// nats
    pub delta: f64,
    pub input: InputLaw,
    /// Multiplier that produced the point; `None` for endpoints computed
    /// directly.
    pub lambda: Option<f64>,
    pub converged: bool,
}

/// Straight line from `(Delta, R) = (0, C)` to `(Delta_star, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimesharingChord {
    pub capacity: f64,
    pub delta_star: f64,
}

impl TimesharingChord {
    pub fn new(capacity: f64, delta_star: f64) -> Result<Self> {
        if !(capacity >= 0.0 && delta_star >= 0.0) {
            return Err(Error::InvalidParameter("capacity and delta_star must be nonnegative".into()));
        }
        Ok(TimesharingChord { capacity, delta_star })
    }

    /// `(Delta, R)` when a fraction `share` of the time carries data.
    pub fn point(&self, share: f64) -> (f64, f64) {
        ((1.0 - share) * self.delta_star, share * self.capacity)
    }

    pub fn rate_at(&self, delta: f64) -> f64 {
        if self.delta_star <= 0.0 {
            return self.capacity;
        }
        (self.capacity * (1.0 - delta / self.delta_star)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCurve {
    /// Sorted by `delta`, `rate` nonincreasing.
    pub points: Vec<TradeoffPoint>,
    /// `(C, Delta(C))`
    pub capacity_point: TradeoffPoint,
    /// `(R(Delta_star), Delta_star)`
    pub sensing_point: TradeoffPoint,
    pub chord: TimesharingChord,
    /// Symbols with infinite sensing cost, left out of every input law.
    pub excluded_symbols: Vec<usize>,
}

impl RegionCurve {
    pub fn capacity(&self) -> f64 {
        self.capacity_point.rate
    }

    pub fn delta_star(&self) -> f64 {
        self.sensing_point.delta
    }

    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.converged)
    }

    /// Boundary rate at `delta` by linear interpolation between knots; `C`
    /// below `Delta(C)`, `None` beyond `Delta_star`.
    pub fn rate_at(&self, delta: f64) -> Option<f64> {
        let first = self.points.first()?;
        if delta <= first.delta {
            return Some(first.rate);
        }
        if delta > self.delta_star() + 1e-12 {
            return None;
        }
        let k = self.points.partition_point(|p| p.delta < delta);
        if k >= self.points.len() {
            return self.points.last().map(|p| p.rate);
        }
        let (a, b) = (&self.points[k - 1], &self.points[k]);
        if b.delta - a.delta <= 0.0 {
            return Some(b.rate);
        }
        let t = (delta - a.delta) / (b.delta - a.delta);
        Some(a.rate + t * (b.rate - a.rate))
    }

    /// Monotonicity, concavity over consecutive knots, and dominance of the
    /// timesharing chord, all with slack [`CHECK_SLACK`].
    pub fn check(&self) -> Result<()> {
        let pts = &self.points;
        for w in pts.windows(2) {
            if w[1].delta < w[0].delta {
                return Err(Error::RegionInvariant(format!("knots out of order at delta {}", w[1].delta)));
            }
            if w[1].rate > w[0].rate + CHECK_SLACK {
                return Err(Error::RegionInvariant(format!(
                    "rate increases from {} to {} at delta {}",
                    w[0].rate, w[1].rate, w[1].delta
                )));
            }
        }
        for w in pts.windows(3) {
            let span = w[2].delta - w[0].delta;
            if span <= 0.0 {
                continue;
            }
            let t = (w[1].delta - w[0].delta) / span;
            let chord = w[0].rate + t * (w[2].rate - w[0].rate);
            if w[1].rate < chord - CHECK_SLACK {
                return Err(Error::RegionInvariant(format!(
                    "not concave at delta {}: {} below chord {}",
                    w[1].delta, w[1].rate, chord
                )));
            }
        }
        for p in pts {
            if p.rate < self.chord.rate_at(p.delta) - CHECK_SLACK {
                return Err(Error::RegionInvariant(format!("below timesharing line at delta {}", p.delta)));
            }
        }
        Ok(())
    }

    fn assemble(
        mut points: Vec<TradeoffPoint>,
        capacity_point: TradeoffPoint,
        sensing_point: TradeoffPoint,
        excluded_symbols: Vec<usize>,
    ) -> Result<Self> {
        points.push(capacity_point.clone());
        points.push(sensing_point.clone());
        points.sort_by(|a, b| a.delta.total_cmp(&b.delta).then(b.rate.total_cmp(&a.rate)));
        points.dedup_by(|b, a| (b.delta - a.delta).abs() < 1e-12 && (b.rate - a.rate).abs() < 1e-12);
        let chord = TimesharingChord::new(capacity_point.rate, sensing_point.delta)?;
        let curve = RegionCurve { points, capacity_point, sensing_point, chord, excluded_symbols };
        curve.check()?;
        Ok(curve)
    }
}

/// Largest finite symbol cost and the lowest symbol index attaining it.
pub fn delta_star(pair: &DiscreteSensingPair) -> Result<(f64, usize)> {
    max_finite_cost(&pair.costs())
}

fn max_finite_cost(costs: &[ExtReal]) -> Result<(f64, usize)> {
    costs
        .iter()
        .enumerate()
        .filter_map(|(x, c)| c.finite().map(|v| (v, x)))
        .fold(None, |best: Option<(f64, usize)>, (v, x)| match best {
            Some((b, _)) if b >= v => best,
            _ => Some((v, x)),
        })
        .ok_or(Error::AllCostsInfinite)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BaOptions {
    fn default() -> Self {
        BaOptions { tol: 1e-10, max_iter: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaOutcome {
    pub point: TradeoffPoint,
    pub iterations: usize,
    /// Lagrangian `I(r) + lambda * sum r c` at each iterate.
    pub objective: Vec<f64>,
}

/// Maximizes `I(X; Ytilde) + lambda * E[c(X)]` by alternating the posterior
/// and input updates. Symbols with infinite cost never enter the support.
///
/// Stops once the gap between the objective and its upper bound
/// `max_x D(p(.|x) || p_Y) + lambda c(x)` is below `tol`; this also bounds
/// the change between successive iterates.
pub fn blahut_arimoto_constrained(
    comm: &ChannelMatrix,
    costs: &[ExtReal],
    lambda: f64,
    opts: BaOptions,
) -> Result<BaOutcome> {
    if costs.len() != comm.inputs() {
        return Err(Error::AlphabetMismatch { expected: comm.inputs(), found: costs.len() });
    }
    let support: Vec<bool> = costs.iter().map(|c| c.is_finite()).collect();
    ba_on_support(comm, costs, &support, lambda, opts)
}

fn ba_on_support(
    comm: &ChannelMatrix,
    costs: &[ExtReal],
    support: &[bool],
    lambda: f64,
    opts: BaOptions,
) -> Result<BaOutcome> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let active = support.iter().filter(|&&s| s).count();
    if active == 0 {
        return Err(Error::AllCostsInfinite);
    }
    let n = comm.inputs();
    let cost: Vec<f64> = costs.iter().map(|c| c.finite().unwrap_or(0.0)).collect();
    let mut log_r: Vec<f64> = support
        .iter()
        .map(|&s| if s { -(active as f64).ln() } else { f64::NEG_INFINITY })
        .collect();
    let mut objective: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut divergence = vec![0.0; n];
    while iterations < opts.max_iter {
        let r: Vec<f64> = log_r.iter().map(|l| l.exp()).collect();
        per_symbol_divergence(comm, &r, &mut divergence);
        let j: f64 = (0..n).filter(|&x| r[x] > 0.0).map(|x| r[x] * (divergence[x] + lambda * cost[x])).sum();
        // max_x (D_x + lambda c_x) bounds the optimal objective from above
        let bound = (0..n)
            .filter(|&x| support[x])
            .map(|x| divergence[x] + lambda * cost[x])
            .fold(f64::NEG_INFINITY, f64::max);
        iterations += 1;
        if let Some(&prev) = objective.last() {
            debug_assert!(j >= prev - 1e-12 * (1.0 + prev.abs()), "objective fell from {prev} to {j}");
        }
        if bound - j < opts.tol {
            objective.push(j);
            converged = true;
            break;
        }
        objective.push(j);
        let e: Vec<f64> = (0..n).map(|x| log_r[x] + divergence[x] + lambda * cost[x]).collect();
        let z = log_sum_exp(&e);
        for x in 0..n {
            log_r[x] = e[x] - z;
        }
    }
    let px = Distribution::from_weights(&log_r.iter().map(|l| l.exp()).collect::<Vec<_>>())?;
    let rate = mutual_information(&px, comm)?;
    let delta = (0..n).map(|x| px.prob(x) * cost[x]).sum();
    Ok(BaOutcome {
        point: TradeoffPoint {
            rate,
            delta,
            input: InputLaw::Discrete { probs: px.probs().to_vec() },
            lambda: Some(lambda),
            converged,
        },
        iterations,
        objective,
    })
}

/// `D(p(.|x) || p_r)` for every input symbol `x`.
fn per_symbol_divergence(comm: &ChannelMatrix, r: &[f64], out: &mut [f64]) {
    let mut py = vec![0.0; comm.outputs()];
    for (x, &rx) in r.iter().enumerate() {
        for (y, &p) in comm.row(x).probs().iter().enumerate() {
            py[y] += rx * p;
        }
    }
    for (x, d) in out.iter_mut().enumerate() {
        *d = comm
            .row(x)
            .probs()
            .iter()
            .zip(&py)
            .filter(|(&p, _)| p > 0.0)
            .map(|(&p, &q)| p * (p / q).ln())
            .sum();
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// 60 geometric knots over `[1e-3, 1e3]` plus `lambda = 0`.
pub fn default_lambda_grid() -> Vec<f64> {
    let knots = 60;
    let (lo, hi) = (1e-3f64.ln(), 1e3f64.ln());
    std::iter::once(0.0)
        .chain((0..knots).map(|k| (lo + (hi - lo) * k as f64 / (knots - 1) as f64).exp()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub ba: BaOptions,
    /// Insert extra multipliers where consecutive knots are further apart in
    /// `Delta` than this fraction of `Delta_star`.
    pub max_gap_fraction: f64,
    pub max_refinements: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { ba: BaOptions::default(), max_gap_fraction: 0.02, max_refinements: 400 }
    }
}

/// Traces the discrete boundary `R(Delta)` over a multiplier grid and
/// appends both endpoints.
pub fn region_sweep(
    comm: &ChannelMatrix,
    pair: &DiscreteSensingPair,
    lambda_grid: &[f64],
    opts: SweepOptions,
) -> Result<RegionCurve> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    if comm.inputs() != pair.inputs() {
        return Err(Error::AlphabetMismatch { expected: pair.inputs(), found: comm.inputs() });
    }
    let costs = pair.costs();
    let excluded: Vec<usize> = (0..costs.len()).filter(|&x| !costs[x].is_finite()).collect();
    let (d_star, _) = max_finite_cost(&costs)?;

    let solve = |lambdas: &[f64]| -> Result<Vec<TradeoffPoint>> {
        par::map(lambdas, |&l| blahut_arimoto_constrained(comm, &costs, l, opts.ba).map(|o| o.point))
            .into_iter()
            .collect()
    };
    let mut points = solve(lambda_grid)?;

    let gap = opts.max_gap_fraction * d_star;
    let mut added = 0;
    while d_star > 0.0 && added < opts.max_refinements {
        points.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
        let mids: Vec<f64> = points
            .windows(2)
            .filter(|w| (w[1].delta - w[0].delta).abs() > gap)
            .filter_map(|w| {
                let (a, b) = (w[0].lambda?, w[1].lambda?);
                let mid = if a > 0.0 { (a * b).sqrt() } else { b / 2.0 };
                (mid > a && mid < b).then_some(mid)
            })
            .take(opts.max_refinements - added)
            .collect();
        if mids.is_empty() {
            break;
        }
        added += mids.len();
        points.extend(solve(&mids)?);
    }

    let capacity_point = if let Some(p) = points.iter().find(|p| p.lambda == Some(0.0)) {
        p.clone()
    } else {
        blahut_arimoto_constrained(comm, &costs, 0.0, opts.ba)?.point
    };
    let argmax: Vec<bool> = costs.iter().map(|c| c.finite().is_some_and(|v| v >= d_star - 1e-12)).collect();
    let mut sensing_point = ba_on_support(comm, &costs, &argmax, 0.0, opts.ba)?.point;
    sensing_point.lambda = None;
    RegionCurve::assemble(points, capacity_point, sensing_point, excluded)
}

/// Knots spread evenly over `[0, Delta_star]` on a flat boundary.
fn flat_region(capacity: f64, d_star: f64, knots: usize, input: InputLaw) -> Result<RegionCurve> {
    let point = |delta: f64| TradeoffPoint { rate: capacity, delta, input: input.clone(), lambda: None, converged: true };
    let knots = knots.max(2);
    let points = (0..knots).map(|k| point(d_star * k as f64 / (knots - 1) as f64)).collect();
    RegionCurve::assemble(points, point(0.0), point(d_star), Vec::new())
}

/// Gain or variance change in scalar Gaussian noise. Full-power Gaussian
/// input attains capacity and `Delta_star` at once, so `R(Delta) = C` on
/// the whole range.
pub fn scalar_gaussian_region(model: &ScalarGaussianPair, knots: usize) -> Result<RegionCurve> {
    flat_region(model.capacity(), model.delta_star(), knots, InputLaw::Gaussian { power: model.power })
}

/// Post-processed passive-radar model with complex Gaussian input.
pub fn radar_region(model: &RadarSensingPair, knots: usize) -> Result<RegionCurve> {
    flat_region(model.capacity(), model.delta_star(), knots, InputLaw::Gaussian { power: model.power })
}

/// Waterfilling powers for channel gains `gains` under total power `power`.
pub fn waterfill(gains: &[f64], power: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let mut level = 0.0;
    let mut used = 0;
    for k in 1..=order.len() {
        let inv: f64 = order[..k].iter().map(|&i| 1.0 / gains[i]).sum();
        let candidate = (power + inv) / k as f64;
        if candidate > 1.0 / gains[order[k - 1]] {
            level = candidate;
            used = k;
        } else {
            break;
        }
    }
    let mut p = vec![0.0; gains.len()];
    for &i in &order[..used] {
        p[i] = (level - 1.0 / gains[i]).max(0.0);
    }
    p
}

/// Euclidean projection onto `{v >= 0, sum v <= cap}`.
fn project_capped_simplex(v: &mut [f64], cap: f64) {
    let clipped: f64 = v.iter().map(|x| x.max(0.0)).sum();
    if clipped <= cap {
        v.iter_mut().for_each(|x| *x = x.max(0.0));
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, s) in sorted.iter().enumerate() {
        acc += s;
        let t = (acc - cap) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MimoOptions {
    /// Number of `Delta` knots between `Delta(C)` and `Delta_star`.
    pub knots: usize,
    pub max_iter: usize,
}

impl Default for MimoOptions {
    fn default() -> Self {
        MimoOptions { knots: 80, max_iter: 5_000 }
    }
}

/// Relative duality gap at which the covariance ascent stops. Rebuilding
/// the covariance from its eigenbasis adds ~1e-15 noise per step, which
/// limits how far below this the gap can be pushed.
const GAP_TOL: f64 = 1e-8;

struct MimoProgram {
    /// `Gtilde^T Gtilde`
    a: DMatrix<f64>,
    gamma: DMatrix<f64>,
    power: f64,
    /// Orthonormal basis that diagonalizes both `a` and `gamma`, if one
    /// exists.
    joint_basis: Option<DMatrix<f64>>,
}

impl MimoProgram {
    fn new(model: &MimoGaussianPair) -> Self {
        let a = model.g_comm.transpose() * &model.g_comm;
        let gamma = model.gamma();
        let scale = 1.0 + a.norm() * gamma.norm();
        let commutes = (&a * &gamma - &gamma * &a).norm() <= 1e-10 * scale;
        let joint_basis = commutes.then(|| {
            // a generic combination splits any shared degenerate eigenspace
            let mix = &gamma + &a * 0.618_033_988_749_894_9;
            SymmetricEigen::new(mix).eigenvectors
        });
        MimoProgram { a, gamma, power: model.power, joint_basis }
    }

    fn rate(&self, sigma: &DMatrix<f64>) -> f64 {
        let n = sigma.nrows();
        let m = DMatrix::identity(n, n) + &self.a * sigma;
        0.5 * m.determinant().max(f64::MIN_POSITIVE).ln()
    }

    fn delta(&self, sigma: &DMatrix<f64>) -> f64 {
        0.5 * (&self.gamma * sigma).trace()
    }

    fn objective(&self, sigma: &DMatrix<f64>, mu: f64) -> f64 {
        self.rate(sigma) + mu * self.delta(sigma)
    }

    fn gradient(&self, sigma: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
        let n = sigma.nrows();
        // d/dSigma of 1/2 ln|I + A Sigma| = 1/2 (I + A Sigma)^{-1} A
        let inv = (DMatrix::identity(n, n) + &self.a * sigma)
            .try_inverse()
            .unwrap_or_else(|| DMatrix::identity(n, n));
        let g = &inv * &self.a * 0.5;
        (&g + g.transpose()) * 0.5 + &self.gamma * (0.5 * mu)
    }

    fn project(&self, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        let sym = (sigma + sigma.transpose()) * 0.5;
        let (basis, mut v) = match &self.joint_basis {
            Some(u) => {
                let d = u.transpose() * &sym * u;
                (u.clone(), d.diagonal().iter().copied().collect::<Vec<_>>())
            }
            None => {
                let eig = SymmetricEigen::new(sym);
                (eig.eigenvectors, eig.eigenvalues.iter().copied().collect())
            }
        };
        project_capped_simplex(&mut v, self.power);
        &basis * DMatrix::from_diagonal(&DVector::from_vec(v)) * basis.transpose()
    }

    /// `max_{S feasible} <grad, S - sigma>`, an upper bound on the
    /// suboptimality of `sigma` for a concave objective.
    fn duality_gap(&self, sigma: &DMatrix<f64>, grad: &DMatrix<f64>) -> f64 {
        let top = match &self.joint_basis {
            Some(u) => (u.transpose() * grad * u).diagonal().max(),
            None => SymmetricEigen::new(grad.clone()).eigenvalues.max(),
        };
        self.power * top.max(0.0) - grad.dot(sigma)
    }

    /// Projected gradient ascent on `R + mu * Delta` from `start`, stopped
    /// by the duality gap.
    fn ascend(&self, start: &DMatrix<f64>, mu: f64, max_iter: usize) -> DMatrix<f64> {
        let mut sigma = self.project(start);
        let mut f = self.objective(&sigma, mu);
        // the Hessian of 1/2 ln|I + A S| is bounded by 1/2 |A|^2
        let a2 = self.a.norm_squared();
        let min_step = if a2 > 0.0 { 1.0 / a2 } else { 1.0 };
        let mut step = min_step;
        for _ in 0..max_iter {
            let grad = self.gradient(&sigma, mu);
            if self.duality_gap(&sigma, &grad) <= GAP_TOL * (1.0 + f.abs()) {
                break;
            }
            // f is concave along [sigma, cand], so a nonnegative slope at cand
            // means f rose over the whole step; at or below the 1/L step the
            // rise is guaranteed anyway
            loop {
                let cand = self.project(&(&sigma + &grad * step));
                if step <= min_step || self.gradient(&cand, mu).dot(&(&cand - &sigma)) >= 0.0 {
                    sigma = cand;
                    break;
                }
                step = (step * 0.5).max(min_step);
            }
            f = self.objective(&sigma, mu);
            step *= 2.0;
        }
        sigma
    }

    fn is_optimal(&self, sigma: &DMatrix<f64>, mu: f64) -> bool {
        let f = self.objective(sigma, mu);
        self.duality_gap(sigma, &self.gradient(sigma, mu)) <= GAP_TOL * (1.0 + f.abs())
    }

    fn solve(&self, mu: f64, starts: &[DMatrix<f64>], max_iter: usize) -> DMatrix<f64> {
        starts
            .iter()
            .map(|s| self.ascend(s, mu, max_iter))
            .max_by(|x, y| self.objective(x, mu).total_cmp(&self.objective(y, mu)))
            .expect("at least one start")
    }

    fn capacity_covariance(&self) -> DMatrix<f64> {
        let eig = SymmetricEigen::new(self.a.clone());
        let gains: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let p = waterfill(&gains, self.power);
        &eig.eigenvectors * DMatrix::from_diagonal(&DVector::from_vec(p)) * eig.eigenvectors.transpose()
    }

    /// Full power on the top eigenspace of `gamma`, waterfilled within it.
    fn sensing_covariance(&self) -> DMatrix<f64> {
        let n = self.gamma.nrows();
        let eig = SymmetricEigen::new(self.gamma.clone());
        let top = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] >= top - 1e-9 * (1.0 + top.abs())).collect();
        let u1 = DMatrix::from_fn(n, cols.len(), |r, c| eig.eigenvectors[(r, cols[c])]);
        let sub = u1.transpose() * &self.a * &u1;
        let sub_eig = SymmetricEigen::new(sub);
        let gains: Vec<f64> = sub_eig.eigenvalues.iter().copied().collect();
        let mut p = waterfill(&gains, self.power);
        if p.iter().sum::<f64>() < self.power {
            // no rate to gain; spend the remaining power on the eigenspace anyway
            let rest = (self.power - p.iter().sum::<f64>()) / p.len() as f64;
            p.iter_mut().for_each(|x| *x += rest);
        }
        let v = &u1 * &sub_eig.eigenvectors;
        &v * DMatrix::from_diagonal(&DVector::from_vec(p)) * v.transpose()
    }

    fn point(&self, sigma: &DMatrix<f64>, lambda: Option<f64>, converged: bool) -> TradeoffPoint {
        TradeoffPoint {
            rate: self.rate(sigma).max(0.0),
            delta: self.delta(sigma).max(0.0),
            input: InputLaw::covariance(sigma),
            lambda,
            converged,
        }
    }
}

/// MIMO Gaussian boundary: maximize `1/2 ln|I + Gt S Gt^T|` subject to
/// `1/2 tr(Gamma S) >= Delta`, `tr S <= P`, `S >= 0`. Each `Delta` knot is
/// hit by bisecting the multiplier `mu` of the Lagrangian
/// `R(S) + mu * Delta(S)`, whose maximizer is found by projected gradient
/// ascent with several starts.
pub fn mimo_region(model: &MimoGaussianPair, opts: MimoOptions) -> Result<RegionCurve> {
    let prog = MimoProgram::new(model);
    let n = model.transmit_dim();
    let cap_sigma = prog.capacity_covariance();
    let sense_sigma = prog.sensing_covariance();
    let capacity_point = prog.point(&cap_sigma, None, true);
    let sensing_point = prog.point(&sense_sigma, None, true);
    let (d0, d1) = (capacity_point.delta, sensing_point.delta);
    let tol = 1e-9 * d1.max(1.0);

    let starts = vec![DMatrix::identity(n, n) * (model.power / n as f64), cap_sigma.clone(), sense_sigma.clone()];
    let targets: Vec<f64> = if d1 - d0 > tol {
        (1..opts.knots.max(1)).map(|k| d0 + (d1 - d0) * k as f64 / opts.knots as f64).collect()
    } else {
        Vec::new()
    };
    let points = par::map(&targets, |&target| {
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut below = cap_sigma.clone();
        let mut best = prog.solve(hi, &starts, opts.max_iter);
        while prog.delta(&best) < target && hi < 1e9 {
            lo = hi;
            hi *= 2.0;
            below = best;
            best = prog.solve(hi, &starts, opts.max_iter);
        }
        for _ in 0..100 {
            if (prog.delta(&best) - target).abs() <= tol || hi - lo <= 1e-14 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let s = prog.solve(mid, &[best.clone(), starts[0].clone()], opts.max_iter);
            if prog.delta(&s) >= target {
                hi = mid;
                best = s;
            } else {
                lo = mid;
                below = s;
            }
        }
        if prog.delta(&best) - target > tol {
            // Delta(mu) jumps across the target: mix the two bracketing
            // solutions, which hits the target exactly and loses no rate
            // relative to the chord between them
            let (d_lo, d_hi) = (prog.delta(&below), prog.delta(&best));
            let t = ((target - d_lo) / (d_hi - d_lo)).clamp(0.0, 1.0);
            best = &below * (1.0 - t) + &best * t;
        }
        let hit = (prog.delta(&best) - target).abs() <= 1e-6 * d1.max(1.0);
        prog.point(&best, Some(hi), hit && prog.is_optimal(&best, hi))
    });
    RegionCurve::assemble(points, capacity_point, sensing_point, Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::symbol_costs;
    use proptest::prelude::*;

    const MI_BSC03: f64 = 0.08228287850505178;
    const C_Z: f64 = 0.5108256237659907;

    fn fig5() -> (ChannelMatrix, DiscreteSensingPair) {
        (ChannelMatrix::bsc(0.3).unwrap(), DiscreteSensingPair::z_pair(0.1, 0.5).unwrap())
    }

    #[test]
    fn ba_capacity_of_bsc() {
        let (comm, pair) = fig5();
        let out = blahut_arimoto_constrained(&comm, &pair.costs(), 0.0, BaOptions::default()).unwrap();
        assert!((out.point.rate - MI_BSC03).abs() < 1e-9);
        assert!((out.point.delta - C_Z / 2.0).abs() < 1e-9);
        assert!(out.point.converged);
    }

    #[test]
    fn ba_uniform_is_fixed_point_for_symmetric_channel() {
        let comm = ChannelMatrix::new(vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.7, 0.2],
            vec![0.2, 0.1, 0.7],
        ])
        .unwrap();
        let costs = vec![ExtReal::ZERO; 3];
        let out = blahut_arimoto_constrained(&comm, &costs, 0.0, BaOptions::default()).unwrap();
        let InputLaw::Discrete { probs } = &out.point.input else { panic!() };
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ba_large_lambda_goes_to_costly_symbol() {
        let (comm, pair) = fig5();
        let out = blahut_arimoto_constrained(&comm, &pair.costs(), 1e3, BaOptions::default()).unwrap();
        assert!((out.point.delta - C_Z).abs() < 1e-6);
        assert!(out.point.rate < 1e-6);
    }

    #[test]
    fn ba_objective_is_monotone() {
        let (comm, pair) = fig5();
        for lambda in [0.0, 0.05, 0.3, 2.0, 40.0] {
            let out = blahut_arimoto_constrained(&comm, &pair.costs(), lambda, BaOptions::default()).unwrap();
            for w in out.objective.windows(2) {
                assert!(w[1] >= w[0] - 1e-13, "lambda {lambda}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn ba_rejects_bad_input() {
        let (comm, pair) = fig5();
        let costs = pair.costs();
        assert!(blahut_arimoto_constrained(&comm, &costs, -1.0, BaOptions::default()).is_err());
        assert!(blahut_arimoto_constrained(&comm, &costs, 1.0, BaOptions { tol: 0.0, max_iter: 10 }).is_err());
        let inf = vec![ExtReal::PosInf; 2];
        assert_eq!(
            blahut_arimoto_constrained(&comm, &inf, 0.0, BaOptions::default()).unwrap_err(),
            Error::AllCostsInfinite
        );
    }

    #[test]
    fn ba_flags_iteration_cap() {
        let (comm, pair) = fig5();
        let out = blahut_arimoto_constrained(&comm, &pair.costs(), 0.5, BaOptions { tol: 1e-300, max_iter: 3 }).unwrap();
        assert!(!out.point.converged);
        assert_eq!(out.iterations, 3);
    }

    #[test]
    fn delta_star_examples() {
        let (_, pair) = fig5();
        let (d, x) = delta_star(&pair).unwrap();
        assert!((d - C_Z).abs() < 1e-12);
        assert_eq!(x, 1);

        let bsc = ChannelMatrix::bsc(0.2).unwrap();
        let same = DiscreteSensingPair::new(bsc.clone(), bsc).unwrap();
        assert_eq!(delta_star(&same).unwrap(), (0.0, 0));

        let tie = [ExtReal::Finite(0.2), ExtReal::Finite(0.2)];
        assert_eq!(max_finite_cost(&tie).unwrap(), (0.2, 0));
        assert!(max_finite_cost(&[ExtReal::PosInf]).is_err());
    }

    #[test]
    fn chord_examples() {
        let c = TimesharingChord::new(2.0, 4.0).unwrap();
        assert_eq!(c.point(0.5), (2.0, 1.0));
        assert_eq!(c.point(0.0), (4.0, 0.0));
        assert_eq!(c.point(1.0), (0.0, 2.0));
        assert!(TimesharingChord::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn sweep_endpoints_and_checks() {
        let (comm, pair) = fig5();
        let curve = region_sweep(&comm, &pair, &default_lambda_grid(), SweepOptions::default()).unwrap();
        assert!((curve.capacity() - MI_BSC03).abs() < 1e-9);
        assert!((curve.capacity_point.delta - C_Z / 2.0).abs() < 1e-9);
        assert!((curve.delta_star() - C_Z).abs() < 1e-12);
        assert!(curve.sensing_point.rate.abs() < 1e-12);
        assert!(curve.all_converged());
        for w in curve.points.windows(2) {
            assert!(w[1].delta - w[0].delta <= 0.02 * C_Z + 1e-12);
        }
        // self-consistency against prob
        let costs = symbol_costs(pair.post(), pair.pre()).unwrap();
        for p in &curve.points {
            let InputLaw::Discrete { probs } = &p.input else { panic!() };
            let px = Distribution::new(probs.clone()).unwrap();
            assert!((mutual_information(&px, &comm).unwrap() - p.rate).abs() < 1e-9);
            let d: f64 = probs.iter().zip(&costs).map(|(p, c)| p * c.to_f64()).sum();
            assert!((d - p.delta).abs() < 1e-9);
        }
        assert_eq!(curve.rate_at(0.0), Some(curve.capacity()));
        assert_eq!(curve.rate_at(0.6), None);
    }

    #[test]
    fn sweep_matches_closed_form_bsc_curve() {
        // with costs (0, c1) the boundary is I(BSC(0.3), Bern(q)) at Delta = q c1
        let (comm, pair) = fig5();
        let curve = region_sweep(&comm, &pair, &default_lambda_grid(), SweepOptions::default()).unwrap();
        let h2 = |p: f64| if p <= 0.0 || p >= 1.0 { 0.0 } else { -p * p.ln() - (1.0 - p) * (1.0 - p).ln() };
        for k in 0..=50 {
            let q = 0.5 + 0.5 * k as f64 / 50.0;
            let exact = h2(q * 0.7 + (1.0 - q) * 0.3) - h2(0.3);
            let got = curve.rate_at(q * C_Z).unwrap();
            assert!((got - exact).abs() < 1e-4, "q {q}: {got} vs {exact}");
        }
    }

    #[test]
    fn degenerate_regions() {
        let bsc = ChannelMatrix::bsc(0.2).unwrap();
        let same = DiscreteSensingPair::new(bsc.clone(), bsc.clone()).unwrap();
        let curve = region_sweep(&bsc, &same, &default_lambda_grid(), SweepOptions::default()).unwrap();
        let cap = mutual_information(&Distribution::uniform(2), &bsc).unwrap();
        for p in &curve.points {
            assert_eq!(p.delta, 0.0);
            assert!((p.rate - cap).abs() < 1e-9);
        }

        let useless = ChannelMatrix::bsc(0.5).unwrap();
        let (_, pair) = fig5();
        let curve = region_sweep(&useless, &pair, &default_lambda_grid(), SweepOptions::default()).unwrap();
        assert!(curve.points.iter().all(|p| p.rate.abs() < 1e-12));
        assert!((curve.delta_star() - C_Z).abs() < 1e-12);
    }

    #[test]
    fn infinite_cost_symbols_are_reported() {
        let p0 = ChannelMatrix::new(vec![vec![0.5, 0.5], vec![1.0, 0.0], vec![0.2, 0.8]]).unwrap();
        let p1 = ChannelMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.6, 0.4]]).unwrap();
        let pair = DiscreteSensingPair::new(p0, p1).unwrap();
        let comm = ChannelMatrix::new(vec![vec![0.9, 0.1], vec![0.1, 0.9], vec![0.5, 0.5]]).unwrap();
        let curve = region_sweep(&comm, &pair, &default_lambda_grid(), SweepOptions::default()).unwrap();
        assert_eq!(curve.excluded_symbols, vec![1]);
        for p in &curve.points {
            let InputLaw::Discrete { probs } = &p.input else { panic!() };
            assert_eq!(probs[1], 0.0);
        }
    }

    #[test]
    fn sweep_rejects_empty_grid() {
        let (comm, pair) = fig5();
        assert!(region_sweep(&comm, &pair, &[], SweepOptions::default()).is_err());
    }

    #[test]
    fn check_catches_violations() {
        let (comm, pair) = fig5();
        let mut curve = region_sweep(&comm, &pair, &[0.0, 1.0], SweepOptions::default()).unwrap();
        let k = curve.points.len() / 2;
        curve.points[k].rate -= 0.01;
        assert!(matches!(curve.check(), Err(Error::RegionInvariant(_))));
    }

    #[test]
    fn scalar_regions_are_flat() {
        use crate::channels::ScalarVariant;
        let gain = ScalarGaussianPair::new(ScalarVariant::GainChange { gain: 2.0 }, 3.0).unwrap();
        let curve = scalar_gaussian_region(&gain, 25).unwrap();
        assert!((curve.capacity() - 2f64.ln()).abs() < 1e-12);
        assert!((curve.delta_star() - 1.5).abs() < 1e-12);
        assert!(curve.points.iter().all(|p| (p.rate - curve.capacity()).abs() < 1e-12));

        let var = ScalarGaussianPair::new(ScalarVariant::VarianceChange { var0: 1.0, var1: 4.0 }, 1.0).unwrap();
        let curve = scalar_gaussian_region(&var, 25).unwrap();
        assert!((curve.delta_star() - 0.8068528194400546).abs() < 1e-12);

        let unity = ScalarGaussianPair::new(ScalarVariant::GainChange { gain: 1.0 }, 3.0).unwrap();
        assert_eq!(scalar_gaussian_region(&unity, 5).unwrap().delta_star(), 0.0);
    }

    #[test]
    fn waterfill_examples() {
        assert_eq!(waterfill(&[1.0, 1.0], 10.0), vec![5.0, 5.0]);
        let p = waterfill(&[4.0, 1.0], 0.5);
        assert_eq!(p, vec![0.5, 0.0]);
        let p = waterfill(&[2.0, 1.0, 0.0], 3.0);
        assert!((p[0] - 1.75).abs() < 1e-12 && (p[1] - 1.25).abs() < 1e-12 && p[2] == 0.0);
    }

    fn fig6() -> MimoGaussianPair {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        MimoGaussianPair::from_difference(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[s, s, s, -s]),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn mimo_endpoints() {
        let curve = mimo_region(&fig6(), MimoOptions { knots: 8, ..Default::default() }).unwrap();
        assert!((curve.capacity() - 6f64.ln()).abs() < 1e-9);
        assert!((curve.capacity_point.delta - 12.5).abs() < 1e-9);
        assert!((curve.delta_star() - 20.0).abs() < 1e-9);
        assert!((curve.sensing_point.rate - 0.5 * 11f64.ln()).abs() < 1e-9);
        assert!(curve.all_converged());
    }

    #[test]
    fn mimo_without_sensing_gain_collapses() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = MimoGaussianPair::from_difference(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[s, s, s, -s]),
            10.0,
        )
        .unwrap();
        let curve = mimo_region(&m, MimoOptions::default()).unwrap();
        assert!(curve.points.iter().all(|p| p.delta.abs() < 1e-12));
        assert!((curve.capacity() - 6f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn mimo_non_commuting_matches_diagonal_scan() {
        // Gamma not diagonal in the eigenbasis of Gt^T Gt
        let m = MimoGaussianPair::from_difference(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]),
            4.0,
        )
        .unwrap();
        let prog = MimoProgram::new(&m);
        assert!(prog.joint_basis.is_none());
        let curve = mimo_region(&m, MimoOptions { knots: 6, ..Default::default() }).unwrap();
        assert!(curve.all_converged());
        // brute force over rank-2 covariances with full power
        for p in curve.points.iter().filter(|p| p.lambda.is_some()) {
            let mut best: f64 = 0.0;
            for i in 0..=200 {
                let th = std::f64::consts::PI * i as f64 / 200.0;
                let (c, s) = (th.cos(), th.sin());
                let u = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
                for j in 0..=200 {
                    let a = 4.0 * j as f64 / 200.0;
                    let sig = &u * DMatrix::from_diagonal(&DVector::from_vec(vec![a, 4.0 - a])) * u.transpose();
                    if prog.delta(&sig) >= p.delta {
                        best = best.max(prog.rate(&sig));
                    }
                }
            }
            assert!(p.rate >= best - 1e-6, "delta {}: {} < grid {}", p.delta, p.rate, best);
            assert!(p.rate <= best + 5e-3, "delta {}: {} >> grid {}", p.delta, p.rate, best);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_sweeps_pass_checks(
            rows in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 3), 3),
            pre in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 2), 3),
            post in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 2), 3),
        ) {
            let norm = |r: Vec<Vec<f64>>| r.into_iter().map(|v| {
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect()
            }).collect::<Vec<Vec<f64>>>();
            let comm = ChannelMatrix::new(norm(rows)).unwrap();
            let pair = DiscreteSensingPair::new(
                ChannelMatrix::new(norm(pre)).unwrap(),
                ChannelMatrix::new(norm(post)).unwrap(),
            ).unwrap();
            let grid: Vec<f64> = default_lambda_grid().into_iter().step_by(4).collect();
            let curve = region_sweep(&comm, &pair, &grid, SweepOptions::default()).unwrap();
            prop_assert!(curve.check().is_ok());
        }

        #[test]
        fn capped_simplex_projection_is_feasible(v in prop::collection::vec(-5.0f64..5.0, 1..6), cap in 0.1f64..4.0) {
            let mut w = v.clone();
            project_capped_simplex(&mut w, cap);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!(w.iter().sum::<f64>() <= cap + 1e-12);
        }
    }
}
