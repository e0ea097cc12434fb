use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use trals::als::{run, AlsConfig, Report, RunOutcome};
use trals::diagnostics::{alpha_ratio, condition_kappa, rank1_ratio, segment_product, Partition};
use trals::ring::{error_e, sample_eval_set};
use trals::skeleton::dump_envs;
use trals::TensorRing;

use crate::config::{Config, OracleName};
use crate::error::CliError;

pub const CSV_HEADER: &str = "run,E,E_skeleton,calls,fraction,sweeps,seconds";

/// What a command printed and, with `--out`, the files it wants written.
#[derive(Debug, Default)]
pub struct Output {
    pub stdout: String,
    pub files: Vec<(String, String)>,
    pub failure: Option<CliError>,
}

impl Output {
    pub fn write_files(&self, dir: &Path) -> Result<(), CliError> {
        let fail = |path: PathBuf| move |source| CliError::Write { path, source };
        std::fs::create_dir_all(dir).map_err(fail(dir.to_path_buf()))?;
        for (name, body) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(fail(path.clone()))?;
        }
        Ok(())
    }
}

/// Seeds of the individual repeats, derived from the configured seed.
pub fn run_seeds(seed: u64, repeats: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..repeats).map(|_| rng.random()).collect()
}

struct RunRow {
    report: Report,
    seconds: f64,
    outcome: Result<RunOutcome, String>,
}

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6e}"),
        None => "nan".into(),
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

fn ranks_text(ranks: &[usize]) -> String {
    let inner: Vec<String> = ranks.iter().map(|r| r.to_string()).collect();
    format!("({})", inner.join(","))
}

pub fn decompose(cfg: &Config) -> Result<Output, CliError> {
    let als = cfg.als()?;
    // Fail on a bad oracle description before spending any time.
    let probe = cfg.oracle()?;
    let (d, n) = (probe.dims(), probe.size());
    trals::skeleton::tree_levels(d).map_err(|e| CliError::Config(e.to_string()))?;

    let seeds = run_seeds(cfg.seed, cfg.repeats);
    let rows: Vec<RunRow> = seeds
        .par_iter()
        .map(|&seed| {
            let clock = Instant::now();
            let result = match cfg.oracle() {
                Ok(oracle) => run(
                    &oracle,
                    &AlsConfig {
                        seed,
                        ..als.clone()
                    },
                )
                .map_err(|f| (f.report, f.error.to_string())),
                Err(e) => Err((Report::default(), e.to_string())),
            };
            let seconds = clock.elapsed().as_secs_f64();
            match result {
                Ok(out) => RunRow {
                    report: out.report.clone(),
                    seconds,
                    outcome: Ok(out),
                },
                Err((report, msg)) => RunRow {
                    report,
                    seconds,
                    outcome: Err(msg),
                },
            }
        })
        .collect();

    let mut out = Output::default();
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut table = String::new();
    let _ = writeln!(
        table,
        "oracle {:?}  d {d}  n {n}  r {}  s {}  repeats {}  seed {}",
        cfg.oracle, cfg.r, cfg.s, cfg.repeats, cfg.seed
    );
    let _ = writeln!(
        table,
        "{:>6} {:>13} {:>13} {:>13} {:>9} {:>13} {:>6} {:>9}  ranks",
        "run", "E", "E_skeleton", "E_init", "calls", "fraction", "sweeps", "seconds"
    );
    let mut failures = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let rep = &row.report;
        let run = i + 1;
        let _ = writeln!(
            csv,
            "{run},{},{},{},{},{},{:.3}",
            num(rep.e),
            num(rep.e_skeleton),
            rep.calls,
            num(Some(rep.fraction)),
            rep.sweeps,
            row.seconds
        );
        let _ = writeln!(
            table,
            "{run:>6} {:>13} {:>13} {:>13} {:>9} {:>13} {:>6} {:>9.3}  {}",
            num(rep.e),
            num(rep.e_skeleton),
            num(rep.e_skeleton_init),
            rep.calls,
            num(Some(rep.fraction)),
            rep.sweeps,
            row.seconds,
            ranks_text(&rep.ranks)
        );
        match &row.outcome {
            Ok(o) => {
                out.files.push((format!("ring-{run}.tr"), o.ring.to_text()));
                if cfg.dump_skeleton {
                    out.files
                        .push((format!("skeleton-{run}.txt"), dump_envs(&o.envs)));
                }
            }
            Err(msg) => failures.push(format!("run {run}: {msg}")),
        }
    }
    let ok: Vec<&RunRow> = rows.iter().filter(|r| r.outcome.is_ok()).collect();
    let med = |f: &dyn Fn(&RunRow) -> f64| median(ok.iter().map(|r| f(r)).collect());
    let m_e = med(&|r| r.report.e.unwrap_or(f64::NAN));
    let m_sk = med(&|r| r.report.e_skeleton.unwrap_or(f64::NAN));
    let m_calls = med(&|r| r.report.calls as f64);
    let m_frac = med(&|r| r.report.fraction);
    let m_sweeps = med(&|r| r.report.sweeps as f64);
    let m_secs = med(&|r| r.seconds);
    let _ = writeln!(
        csv,
        "median,{},{},{},{},{},{}",
        num(m_e),
        num(m_sk),
        m_calls.map_or("nan".into(), |c| format!("{c}")),
        num(m_frac),
        m_sweeps.map_or("nan".into(), |s| format!("{s}")),
        m_secs.map_or("nan".into(), |s| format!("{s:.3}"))
    );
    let _ = writeln!(
        table,
        "{:>6} {:>13} {:>13} {:>13} {:>9} {:>13} {:>6} {:>9}",
        "median",
        num(m_e),
        num(m_sk),
        "",
        m_calls.map_or("nan".into(), |c| format!("{c}")),
        num(m_frac),
        m_sweeps.map_or("nan".into(), |s| format!("{s}")),
        m_secs.map_or("nan".into(), |s| format!("{s:.3}"))
    );
    out.stdout = format!("{table}\n{csv}");
    out.files.push(("report.txt".into(), table));
    out.files.push(("report.csv".into(), csv));
    if !failures.is_empty() {
        out.failure = Some(CliError::Numerical(failures.join("; ")));
    }
    Ok(out)
}

pub fn evaluate(
    cfg: Option<&Config>,
    oracle: Option<OracleName>,
    ring_path: &Path,
    count: Option<usize>,
    seed: Option<u64>,
) -> Result<Output, CliError> {
    let text = std::fs::read_to_string(ring_path).map_err(|source| CliError::Read {
        path: ring_path.to_path_buf(),
        source,
    })?;
    let ring = TensorRing::from_text(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", ring_path.display())))?;
    let mut cfg = match (cfg, oracle) {
        (Some(c), _) => c.clone(),
        (None, Some(name)) => toml::from_str::<Config>(&format!(
            "oracle = \"{}\"",
            format!("{name:?}").to_lowercase()
        ))
        .map_err(|e| CliError::Config(e.to_string()))?,
        (None, None) => {
            return Err(CliError::Config(
                "evaluate needs --config or --oracle".into(),
            ))
        }
    };
    if let Some(name) = oracle {
        cfg.oracle = name;
    }
    if cfg.d.is_some_and(|d| d != ring.dims()) || cfg.n.is_some_and(|n| n != ring.size()) {
        return Err(CliError::Config(format!(
            "ring has d = {}, n = {} but the configuration disagrees",
            ring.dims(),
            ring.size()
        )));
    }
    cfg.d = Some(ring.dims());
    cfg.n = Some(ring.size());
    let oracle = cfg.oracle()?;
    if oracle.size() != ring.size() {
        return Err(CliError::Config(format!(
            "oracle has n = {} but the ring has n = {}",
            oracle.size(),
            ring.size()
        )));
    }
    let count = count.unwrap_or(cfg.eval_count);
    let seed = seed.unwrap_or(cfg.seed);
    if count == 0 {
        return Err(CliError::Config("count must be positive".into()));
    }
    let points = sample_eval_set(ring.dims(), ring.size(), count, seed);
    let e = error_e(&ring, oracle.function(), &points)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let body = format!(
        "oracle {:?}  d {}  n {}  ranks {}\nE {e:.6e} over {} points (seed {seed})\n",
        cfg.oracle,
        ring.dims(),
        ring.size(),
        ranks_text(&ring.ranks()),
        points.len()
    );
    Ok(Output {
        stdout: body.clone(),
        files: vec![("evaluate.txt".into(), body)],
        failure: None,
    })
}

fn even_split(d: usize) -> [usize; 4] {
    let mut l = [d / 4; 4];
    for item in l.iter_mut().take(d % 4) {
        *item += 1;
    }
    l
}

fn span(dims: &[usize]) -> String {
    match (dims.first(), dims.last()) {
        (Some(a), Some(b)) if a == b => format!("{}", a + 1),
        (Some(a), Some(b)) => format!("{}-{}", a + 1, b + 1),
        _ => String::new(),
    }
}

pub fn diagnose(cfg: &Config) -> Result<Output, CliError> {
    let oracle = cfg.oracle()?;
    let (d, n) = (oracle.dims(), oracle.size());
    let lengths = cfg.diagnose.lengths.unwrap_or_else(|| even_split(d));
    let samples = cfg.diagnose.samples.unwrap_or(4);
    if d < 4 || samples == 0 {
        return Err(CliError::Config(
            "diagnose needs d >= 4 and diagnose.samples >= 1".into(),
        ));
    }
    Partition::consecutive(lengths, 0, d).map_err(|e| CliError::Config(e.to_string()))?;

    let (ring, source) = match cfg.oracle {
        OracleName::Synthetic => (cfg.synthetic_ring()?, "generating ring".to_string()),
        _ => {
            let als = cfg.als()?;
            let fitted =
                run(&oracle, &als).map_err(|f| CliError::Numerical(f.error.to_string()))?;
            let e = fitted.report.e.unwrap_or(f64::NAN);
            (fitted.ring, format!("fitted ring, E {e:.3e}"))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));

    let mut table = String::new();
    let _ = writeln!(
        table,
        "oracle {:?}  d {d}  n {n}  lengths {lengths:?}  samples {samples}  ({source})",
        cfg.oracle
    );
    let _ = writeln!(
        table,
        "{:>5} {:>7} {:>7} {:>7} {:>7} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13}",
        "start",
        "c1",
        "a",
        "c2",
        "b",
        "alpha",
        "kappa_c1",
        "kappa_c2",
        "ratio_a",
        "ratio_b",
        "bound"
    );
    let mut csv = String::from("start,c1,a,c2,b,alpha,kappa_c1,kappa_c2,ratio_a,ratio_b,bound\n");
    for start in 0..d {
        let part = Partition::consecutive(lengths, start, d)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mut alpha = f64::INFINITY;
        let mut ratio_a = f64::INFINITY;
        let mut ratio_b = f64::INFINITY;
        for _ in 0..samples {
            let z: Vec<usize> = (0..d).map(|_| rng.random_range(0..n)).collect();
            let a = alpha_ratio(oracle.function(), &part.c1, &part.c2, &z)
                .map_err(|e| CliError::Config(e.to_string()))?;
            alpha = alpha.min(a);
            let pick = |dims: &[usize]| dims.iter().map(|&j| z[j]).collect::<Vec<_>>();
            for (region, slot) in [(&part.a, &mut ratio_a), (&part.b, &mut ratio_b)] {
                let b = segment_product(&ring, region, &pick(region))
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                let r = rank1_ratio(&b).unwrap_or(f64::NAN);
                *slot = slot.min(r);
            }
        }
        let kappa_c1 = condition_kappa(&ring, &part.c1).ok();
        let kappa_c2 = condition_kappa(&ring, &part.c2).ok();
        let bound = match (kappa_c1, kappa_c2) {
            (Some(k1), Some(k2)) => Some(alpha / k1.max(k2).powi(4)),
            _ => None,
        };
        let cells = [
            format!("{alpha:.6e}"),
            fmt_opt(kappa_c1),
            fmt_opt(kappa_c2),
            format!("{ratio_a:.6e}"),
            format!("{ratio_b:.6e}"),
            fmt_opt(bound),
        ];
        let _ = writeln!(
            table,
            "{:>5} {:>7} {:>7} {:>7} {:>7} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13}",
            start + 1,
            span(&part.c1),
            span(&part.a),
            span(&part.c2),
            span(&part.b),
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            cells[4],
            cells[5]
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            start + 1,
            span(&part.c1),
            span(&part.a),
            span(&part.c2),
            span(&part.b),
            cells.join(",")
        );
    }
    Ok(Output {
        stdout: table.clone(),
        files: vec![("diagnose.txt".into(), table), ("diagnose.csv".into(), csv)],
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_split_covers_d() {
        assert_eq!(even_split(12), [3, 3, 3, 3]);
        assert_eq!(even_split(6), [2, 2, 1, 1]);
    }

    #[test]
    fn spans_are_one_based() {
        assert_eq!(span(&[11, 0, 1]), "12-2");
        assert_eq!(span(&[4]), "5");
    }

    #[test]
    fn seeds_are_reproducible() {
        assert_eq!(run_seeds(3, 4), run_seeds(3, 4));
        assert_ne!(run_seeds(3, 2), run_seeds(4, 2));
    }
}
