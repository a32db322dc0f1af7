//! Browser bindings: region curves and a single detector trace.
//!
//! The plain functions return flat `[x0, y0, x1, y1, ...]` vectors so the
//! page can plot them without any glue beyond a `Float64Array`.

use commqcd::channels::{ChangePoint, DiscreteSensingPair, MimoGaussianPair};
use commqcd::cscc::{generate_codebook, quantize_type};
use commqcd::rng::stream;
use commqcd::simulator::{simulate_run, DetectorConfig};
use commqcd::tradeoff::{default_lambda_grid, mimo_region, region_sweep, MimoOptions, RegionCurve, SweepOptions};
use commqcd::{ChannelMatrix, Distribution};
use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

fn flatten(curve: &RegionCurve) -> Vec<f64> {
    curve.points.iter().flat_map(|p| [p.delta, p.rate]).collect()
}

/// `(Delta, R)` pairs for a BSC(`eps`) data channel and Z(`eps0`) -> Z(`eps1`)
/// sensing channel.
pub fn binary_region_points(eps: f64, eps0: f64, eps1: f64) -> Result<Vec<f64>, String> {
    let comm = ChannelMatrix::bsc(eps).map_err(|e| e.to_string())?;
    let pair = DiscreteSensingPair::z_pair(eps0, eps1).map_err(|e| e.to_string())?;
    let curve = region_sweep(&comm, &pair, &default_lambda_grid(), SweepOptions::default()).map_err(|e| e.to_string())?;
    Ok(flatten(&curve))
}

fn square(name: &str, entries: &[f64]) -> Result<DMatrix<f64>, String> {
    let n = (entries.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != entries.len() {
        return Err(format!("{name} must be a square matrix in row-major order"));
    }
    Ok(DMatrix::from_row_slice(n, n, entries))
}

/// `(Delta, R)` pairs for a MIMO pair with zero pre-change sensing gain.
/// Matrices are square and row-major.
pub fn mimo_region_points(power: f64, g_diff: &[f64], g_comm: &[f64], knots: usize) -> Result<Vec<f64>, String> {
    let model = MimoGaussianPair::from_difference(square("g_diff", g_diff)?, square("g_comm", g_comm)?, power)
        .map_err(|e| e.to_string())?;
    let curve = mimo_region(&model, MimoOptions { knots, ..MimoOptions::default() }).map_err(|e| e.to_string())?;
    Ok(flatten(&curve))
}

/// Detector statistic along one simulated codeword.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct TraceData {
    stop: usize,
    points: Vec<f64>,
}

#[wasm_bindgen]
impl TraceData {
    /// Alarm index, `n + 1` if none.
    #[wasm_bindgen(getter)]
    pub fn stop(&self) -> usize {
        self.stop
    }

    /// `[i0, W0, i1, W1, ...]` for every sample up to the alarm; `W` only
    /// moves at subblock ends.
    #[wasm_bindgen(getter)]
    pub fn points(&self) -> Vec<f64> {
        self.points.clone()
    }
}

/// Subblock CuSum on a uniform-type codeword of `subblocks` blocks of length
/// `l` over the Z(`eps0`) -> Z(`eps1`) pair, change at `nu` (0 = never).
pub fn scs_trace_points(
    eps0: f64,
    eps1: f64,
    l: usize,
    subblocks: usize,
    threshold: f64,
    nu: usize,
    seed: u64,
) -> Result<TraceData, String> {
    let pair = DiscreteSensingPair::z_pair(eps0, eps1).map_err(|e| e.to_string())?;
    let t = quantize_type(&Distribution::uniform(2), l).map_err(|e| e.to_string())?;
    let book = generate_codebook(&t, subblocks, 1, seed).map_err(|e| e.to_string())?;
    let det = DetectorConfig::new(l, threshold).map_err(|e| e.to_string())?;
    let change = if nu == 0 { ChangePoint::Never } else { ChangePoint::at(nu).map_err(|e| e.to_string())? };
    let run = simulate_run(book.codeword(0), &pair, change, det, &mut stream(seed ^ 0x9e37)).map_err(|e| e.to_string())?;
    let points = run.trace.statistic.iter().flat_map(|&(i, w)| [i as f64, w]).collect();
    Ok(TraceData { stop: run.stop, points })
}

#[wasm_bindgen(js_name = binaryRegion)]
pub fn binary_region(eps: f64, eps0: f64, eps1: f64) -> Result<Vec<f64>, JsError> {
    binary_region_points(eps, eps0, eps1).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = mimoRegion)]
pub fn mimo_region_js(power: f64, g_diff: &[f64], g_comm: &[f64], knots: usize) -> Result<Vec<f64>, JsError> {
    mimo_region_points(power, g_diff, g_comm, knots).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = scsTrace)]
pub fn scs_trace(
    eps0: f64,
    eps1: f64,
    l: usize,
    subblocks: usize,
    threshold: f64,
    nu: usize,
    seed: u64,
) -> Result<TraceData, JsError> {
    scs_trace_points(eps0, eps1, l, subblocks, threshold, nu, seed).map_err(|e| JsError::new(&e))
}
