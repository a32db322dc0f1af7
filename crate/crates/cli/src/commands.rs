use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use commqcd::cscc::{generate_codebook_capped, quantize_type, rate_report, sliding_window_check, CsccCodebook};
use commqcd::prob::conditional_kl;
use commqcd::rng::derive_seed;
use commqcd::simulator::{
    codeword_subset, codeword_uniformity, default_change_points, estimate_far, estimate_wadd, fit_delay_slope,
    DelayConfig, DelayEstimate, DetectorConfig, FarConfig,
};
use commqcd::tradeoff::{mimo_region, region_sweep, scalar_gaussian_region, BaOptions, MimoOptions, RegionCurve, SweepOptions};
use serde_json::json;

use crate::config::{Channel, Config, DiscreteSetup};
use crate::manifest::RunManifest;
use crate::{CliError, Context};

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write(path, &text)
}

/// Writes the resolved config next to the outputs so a run can be repeated
/// from its output directory alone.
fn echo_config(cfg: &Config, ctx: &Context, m: &RunManifest) -> Result<serde_json::Value, CliError> {
    let toml = toml::to_string(cfg).map_err(|e| CliError::Io(e.to_string()))?;
    write(&ctx.out.join("config.resolved.toml"), &format!("# manifest {}\n{toml}", m.hash))?;
    serde_json::to_value(cfg).map_err(|e| CliError::Io(e.to_string()))
}

fn lambda_grid(cfg: &Config) -> Vec<f64> {
    let r = &cfg.region;
    let (lo, hi) = (r.lambda_min.ln(), r.lambda_max.ln());
    let n = r.lambda_knots;
    std::iter::once(0.0)
        .chain((0..n).map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp()))
        .collect()
}

pub fn compute_region(cfg: &Config) -> Result<RegionCurve, CliError> {
    let r = &cfg.region;
    let curve = match cfg.channel.build()? {
        Channel::Discrete(DiscreteSetup { comm, pair }) => {
            let opts = SweepOptions {
                ba: BaOptions { tol: r.tol, max_iter: r.max_iter },
                max_gap_fraction: r.max_gap_fraction,
                max_refinements: r.max_refinements,
            };
            region_sweep(&comm, &pair, &lambda_grid(cfg), opts)?
        }
        Channel::Scalar(model) => scalar_gaussian_region(&model, r.knots)?,
        Channel::Mimo(model) => mimo_region(&model, MimoOptions { knots: r.knots, max_iter: r.mimo_max_iter })?,
    };
    Ok(curve)
}

pub fn region(cfg: &Config, ctx: &Context) -> Result<(), CliError> {
    let m = RunManifest::new("region", &ctx.config_path, &ctx.out, cfg, ctx.units);
    let curve = compute_region(cfg)?;
    let u = ctx.units;
    let mut csv = m.csv_comment();
    let _ = writeln!(csv, "lambda,delta_{0},rate_{0}", u.name());
    for p in &curve.points {
        let lambda = p.lambda.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{lambda},{},{}", u.from_nats(p.delta), u.from_nats(p.rate));
    }
    write(&ctx.out.join("region.csv"), &csv)?;
    let unconverged = curve.points.iter().filter(|p| !p.converged).count();
    let point = |p: &commqcd::tradeoff::TradeoffPoint| {
        json!({ "delta": u.from_nats(p.delta), "rate": u.from_nats(p.rate), "input": p.input })
    };
    let config = echo_config(cfg, ctx, &m)?;
    let summary = json!({
        "manifest": m,
        "config": config,
        "units": u.name(),
        "capacity": u.from_nats(curve.capacity()),
        "delta_star": u.from_nats(curve.delta_star()),
        "capacity_point": point(&curve.capacity_point),
        "sensing_point": point(&curve.sensing_point),
        "chord": { "capacity": u.from_nats(curve.chord.capacity), "delta_star": u.from_nats(curve.chord.delta_star) },
        "points": curve.points.len(),
        "converged": unconverged == 0,
        "unconverged_points": unconverged,
        "excluded_symbols": curve.excluded_symbols,
    });
    write_json(&ctx.out.join("region.json"), &summary)?;
    if unconverged > 0 {
        return Err(CliError::NonConvergence(format!("{unconverged} region points hit the iteration cap")));
    }
    Ok(())
}

fn discrete(cfg: &Config, command: &str) -> Result<DiscreteSetup, CliError> {
    match cfg.channel.build()? {
        Channel::Discrete(d) => Ok(d),
        _ => Err(CliError::Validation(format!("`{command}` needs a binary or discrete channel"))),
    }
}

fn make_codebook(cfg: &Config, setup: &DiscreteSetup) -> Result<CsccCodebook, CliError> {
    let c = &cfg.codebook;
    let book = match &c.path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
            CsccCodebook::from_text(&text).map_err(|e| CliError::Validation(format!("{path}: {e}")))?
        }
        None => {
            let t = quantize_type(&cfg.input_law(setup.comm.inputs()), c.subblock_len)?;
            let seed = c.seed.unwrap_or_else(|| derive_seed(cfg.seed, &[0xc0de]));
            generate_codebook_capped(&t, c.subblocks, c.messages, seed, c.symbol_cap)?
        }
    };
    if book.subblock_type().alphabet() != setup.comm.inputs() {
        return Err(CliError::Validation(format!(
            "codebook alphabet {} does not match the channel's {}",
            book.subblock_type().alphabet(),
            setup.comm.inputs()
        )));
    }
    Ok(book)
}

pub fn codebook(cfg: &Config, ctx: &Context) -> Result<(), CliError> {
    let m = RunManifest::new("codebook", &ctx.config_path, &ctx.out, cfg, ctx.units);
    let setup = discrete(cfg, "codebook")?;
    let book = make_codebook(cfg, &setup)?;
    let text = book.to_text(&[("manifest", m.hash.clone())]);
    let reread = CsccCodebook::from_text(&text)?;
    if reread.codewords() != book.codewords() {
        return Err(CliError::Io("codebook did not survive a write/read round trip".into()));
    }
    write(&ctx.out.join("codebook.txt"), &text)?;

    let t = book.subblock_type();
    let rate = rate_report(t, &setup.comm)?;
    let px = t.distribution();
    let step = cfg.codebook.window_step.unwrap_or(book.subblock_len());
    let windows: Vec<Option<usize>> = book
        .codewords()
        .iter()
        .map(|cw| sliding_window_check(cw, &px, cfg.codebook.window_eps, step))
        .collect();
    let failed = windows.iter().filter(|w| w.is_none()).count();
    let l0 = windows.iter().flatten().max().copied();
    let u = ctx.units;
    let config = echo_config(cfg, ctx, &m)?;
    let summary = json!({
        "manifest": m,
        "config": config,
        "units": u.name(),
        "subblock_counts": t.counts(),
        "subblock_len": book.subblock_len(),
        "subblocks": book.subblocks(),
        "blocklength": book.blocklength(),
        "messages": book.messages(),
        "composition_verified": true,
        "rate": {
            "mutual_information": u.from_nats(rate.mutual_information),
            "penalty": u.from_nats(rate.penalty),
            "lower": u.from_nats(rate.lower),
        },
        "window": {
            "eps": cfg.codebook.window_eps,
            "step": step,
            "min_window_worst_codeword": l0,
            "codewords_without_window": failed,
        },
    });
    write_json(&ctx.out.join("codebook.json"), &summary)
}

pub fn simulate(cfg: &Config, ctx: &Context) -> Result<(), CliError> {
    let m = RunManifest::new("simulate", &ctx.config_path, &ctx.out, cfg, ctx.units);
    let setup = discrete(cfg, "simulate")?;
    let book = make_codebook(cfg, &setup)?;
    let k = &cfg.campaign;
    let l = book.subblock_len();
    let n = book.blocklength();
    let u = ctx.units;
    let b = cfg.threshold();
    let indices = codeword_subset(book.messages(), k.codeword_subset, derive_seed(cfg.seed, &[0x5b5e7]));

    let far_cfg = FarConfig {
        detector: DetectorConfig::new(l, b)?,
        runs_per_codeword: k.far_runs,
        cap: k.far_cap,
        seed: derive_seed(cfg.seed, &[1]),
    };
    let far = estimate_far(book.codewords(), &indices, &setup.pair, &far_cfg)?;

    let change_points: Vec<usize> =
        default_change_points(l, &k.change_blocks).into_iter().filter(|&nu| nu <= n).collect();
    if change_points.is_empty() {
        return Err(CliError::Validation(format!("campaign.change_blocks: no change point inside the blocklength {n}")));
    }
    let thresholds = if k.thresholds.is_empty() { vec![b] } else { k.thresholds.clone() };
    let delays: Vec<DelayEstimate> = thresholds
        .iter()
        .enumerate()
        .map(|(i, &bi)| {
            let dc = DelayConfig {
                detector: DetectorConfig::new(l, bi)?,
                change_points: change_points.clone(),
                runs_per_cell: k.delay_runs,
                max_censored_fraction: k.max_censored_fraction,
                seed: derive_seed(cfg.seed, &[2, i as u64]),
            };
            estimate_wadd(book.codewords(), &indices, &setup.pair, &dc)
        })
        .collect::<commqcd::Result<_>>()?;

    let px = book.subblock_type().distribution();
    let d = conditional_kl(setup.pair.post(), setup.pair.pre(), &px)?.to_f64();
    let wadd: Vec<f64> = delays.iter().map(|e| e.mean).collect();
    let fit = if thresholds.len() >= 3 { fit_delay_slope(&thresholds, &wadd).ok() } else { None };
    let alpha = cfg.detector.threshold.is_none().then_some(cfg.detector.alpha);

    let mut delay_csv = m.csv_comment();
    delay_csv.push_str("threshold,codeword,change_point,mean_delay,se,runs,censored\n");
    for (bi, est) in thresholds.iter().zip(&delays) {
        for c in &est.cells {
            let mean = c.mean.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(delay_csv, "{bi},{},{},{mean},{},{},{}", c.codeword, c.change_point, c.se, c.runs, c.censored);
        }
    }
    write(&ctx.out.join("delay.csv"), &delay_csv)?;
    let mut far_csv = m.csv_comment();
    far_csv.push_str("codeword,mean_stop,se_stop,far,far_se,runs,censored\n");
    for c in &far.per_codeword {
        let _ = writeln!(far_csv, "{},{},{},{},{},{},{}", c.codeword, c.mean_stop, c.se_stop, c.far, c.far_se, c.runs, c.censored);
    }
    write(&ctx.out.join("far.csv"), &far_csv)?;

    let per_threshold: Vec<_> = thresholds
        .iter()
        .zip(&delays)
        .map(|(bi, e)| {
            let boundary: Vec<_> = e.cells.iter().filter(|c| (c.change_point - 1) % l == 0).cloned().collect();
            json!({
                "threshold": bi,
                "wadd": e.mean,
                "se": e.se,
                "worst": { "codeword": e.worst.0, "change_point": e.worst.1 },
                "censored": e.censored,
                "flagged": e.flagged,
                "uniformity": codeword_uniformity(&boundary),
            })
        })
        .collect();
    let config = echo_config(cfg, ctx, &m)?;
    let report = json!({
        "manifest": m,
        "config": config,
        "units": u.name(),
        "blocklength": n,
        "codewords_used": indices,
        "threshold": b,
        "far": {
            "estimate": far.far,
            "se": far.far_se,
            "ci95": [far.ci.0, far.ci.1],
            "worst_codeword": far.worst_codeword,
            "censored": far.censored,
            "all_censored": far.all_censored,
            "target_alpha": alpha,
            "calibrated": alpha.map(|a| far.consistent_with(a)),
        },
        "delay": per_threshold,
        "conditional_kl": u.from_nats(d),
        "slope_fit": fit.as_ref().map(|f| json!({
            "slope_samples_per_nat": f.slope,
            "intercept": f.intercept,
            "residuals": f.residuals,
            "slope_times_kl": f.slope * d,
        })),
    });
    write_json(&ctx.out.join("simulate.json"), &report)?;

    if far.all_censored {
        return Err(CliError::Censored("every false-alarm run reached the cap".into()));
    }
    if let Some(e) = delays.iter().find(|e| e.flagged) {
        return Err(CliError::Censored(format!("{} delay runs censored; see delay.csv", e.censored)));
    }
    Ok(())
}
