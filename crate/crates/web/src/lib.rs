//! Browser bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string; failures surface as JavaScript errors.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use trals::als::{run, AlsConfig, InitMethod, Report};
use trals::diagnostics::{rank_one_check, Partition};
use trals::oracle::{
    ising_oracle, pde_oracle, synthetic_tr_oracle, toy_oracle, ISING_BETA, ISING_LEVELS, PDE_LEVELS,
};
use trals::{BlackBox, TensorRing};

#[derive(Debug, Serialize)]
pub struct Curve {
    pub e_skeleton: Vec<f64>,
    pub e_heldout: Vec<f64>,
    pub e_init: f64,
    pub e: f64,
    pub calls: u64,
    pub fraction: f64,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub oracle: String,
    pub d: usize,
    pub n: usize,
    pub proposed: Curve,
    pub random: Curve,
}

#[derive(Debug, Serialize)]
pub struct Profile {
    pub axis: usize,
    pub exact: Vec<f64>,
    pub fitted: Vec<f64>,
    pub e: f64,
}

#[derive(Debug, Serialize)]
pub struct PartitionRow {
    pub start: usize,
    pub alpha: f64,
    pub kappa: f64,
    pub ratio_a: f64,
    pub ratio_b: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Oracle and fit settings shared by the demo operations.
#[derive(Debug, Clone)]
pub struct FitSettings {
    pub oracle: String,
    pub d: usize,
    pub n: usize,
    pub r: usize,
    pub s: usize,
    pub seed: u64,
}

fn make_oracle(settings: &FitSettings) -> Result<BlackBox, String> {
    let (d, n, seed) = (settings.d, settings.n, settings.seed);
    let oracle = match settings.oracle.as_str() {
        "toy" => toy_oracle(d, n),
        "pde" => pde_oracle(d, &PDE_LEVELS),
        "ising" => ising_oracle(d, ISING_BETA, &ISING_LEVELS),
        "gibbs" => Ok(synthetic_tr_oracle(TensorRing::gibbs_chain(
            d, n, 2, 0.5, seed,
        ))),
        other => return Err(format!("unknown oracle {other:?}")),
    };
    oracle.map_err(|e| e.to_string())
}

fn config(settings: &FitSettings, init: InitMethod) -> AlsConfig {
    AlsConfig {
        r: settings.r,
        s: settings.s,
        seed: settings.seed,
        init,
        eval_count: 2_000,
        max_sweeps: 12,
        track_heldout: true,
        ..AlsConfig::default()
    }
}

fn curve(report: &Report) -> Curve {
    Curve {
        e_skeleton: report.history.iter().map(|h| h.e_skeleton).collect(),
        e_heldout: report.history.iter().filter_map(|h| h.e_heldout).collect(),
        e_init: report.e_skeleton_init.unwrap_or(f64::NAN),
        e: report.e.unwrap_or(f64::NAN),
        calls: report.calls,
        fraction: report.fraction,
        seconds: report.times.total(),
    }
}

/// Fits the same oracle from the proposed and from a random start.
pub fn compare_starts(settings: &FitSettings) -> Result<Comparison, String> {
    let fit = |init| {
        let oracle = make_oracle(settings)?;
        run(&oracle, &config(settings, init))
            .map(|o| curve(&o.report))
            .map_err(|f| f.to_string())
    };
    let oracle = make_oracle(settings)?;
    Ok(Comparison {
        oracle: settings.oracle.clone(),
        d: oracle.dims(),
        n: oracle.size(),
        proposed: fit(InitMethod::Proposed)?,
        random: fit(InitMethod::RandomGaussian)?,
    })
}

/// Values along one axis with the others held at `base`, exact and fitted.
pub fn axis_profile(
    settings: &FitSettings,
    axis: usize,
    base: &[usize],
) -> Result<Profile, String> {
    let oracle = make_oracle(settings)?;
    let (d, n) = (oracle.dims(), oracle.size());
    if axis >= d || base.len() != d || base.iter().any(|&v| v >= n) {
        return Err(format!("need axis < {d} and {d} base values below {n}"));
    }
    let out = run(&oracle, &config(settings, InitMethod::Proposed)).map_err(|f| f.to_string())?;
    let mut x = base.to_vec();
    let (mut exact, mut fitted) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for v in 0..n {
        x[axis] = v;
        exact.push(oracle.function().eval(&x));
        fitted.push(out.ring.eval(&x));
    }
    Ok(Profile {
        axis,
        exact,
        fitted,
        e: out.report.e.unwrap_or(f64::NAN),
    })
}

/// Rank-one measurements of a Gibbs chain for every rotation of an even split.
pub fn gibbs_rank_one(
    d: usize,
    n: usize,
    r: usize,
    mixing: f64,
    seed: u64,
) -> Result<Vec<PartitionRow>, String> {
    if d < 4 || n == 0 || r == 0 || !mixing.is_finite() || mixing < 0.0 {
        return Err("need d >= 4, n >= 1, r >= 1 and finite mixing >= 0".into());
    }
    let ring = TensorRing::gibbs_chain(d, n, r, mixing, seed);
    let mut lengths = [d / 4; 4];
    for l in lengths.iter_mut().take(d % 4) {
        *l += 1;
    }
    let z: Vec<usize> = (0..d).map(|k| (k * 7 + seed as usize) % n).collect();
    (0..d)
        .map(|start| {
            let part = Partition::consecutive(lengths, start, d).map_err(|e| e.to_string())?;
            let c = rank_one_check(&ring, &part, &z).map_err(|e| e.to_string())?;
            Ok(PartitionRow {
                start: start + 1,
                alpha: c.alpha,
                kappa: c.kappa_c1.max(c.kappa_c2),
                ratio_a: c.ratio_a,
                ratio_b: c.ratio_b,
                bound: c.bound(),
                holds: c.holds(),
            })
        })
        .collect()
}

fn settings(oracle: &str, d: usize, n: usize, r: usize, s: usize, seed: u32) -> FitSettings {
    FitSettings {
        oracle: oracle.to_string(),
        d,
        n,
        r,
        s,
        seed: seed as u64,
    }
}

fn to_js<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn compress(
    oracle: &str,
    d: usize,
    n: usize,
    r: usize,
    s: usize,
    seed: u32,
) -> Result<String, JsError> {
    to_js(compare_starts(&settings(oracle, d, n, r, s, seed)))
}

/// `base` lists one 0-based value per axis; `axis` is 0-based too.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn profile(
    oracle: &str,
    d: usize,
    n: usize,
    r: usize,
    s: usize,
    seed: u32,
    axis: usize,
    base: Vec<usize>,
) -> Result<String, JsError> {
    to_js(axis_profile(
        &settings(oracle, d, n, r, s, seed),
        axis,
        &base,
    ))
}

#[wasm_bindgen]
pub fn rank_one(d: usize, n: usize, r: usize, mixing: f64, seed: u32) -> Result<String, JsError> {
    to_js(gibbs_rank_one(d, n, r, mixing, seed as u64))
}
