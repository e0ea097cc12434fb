use std::path::{Path, PathBuf};

use serde::Deserialize;

use trals::als::{AlsConfig, InitMethod, RankGrowth};
use trals::init::FrozenSource;
use trals::oracle::{
    ising_oracle, pde_oracle, synthetic_tr_oracle, toy_oracle, ISING_BETA, ISING_LEVELS, PDE_LEVELS,
};
use trals::{BlackBox, TensorRing};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleName {
    Toy,
    Ising,
    Pde,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitName {
    #[default]
    Proposed,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrozenName {
    #[default]
    Shared,
    Random,
    Envs,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankIncrease {
    #[serde(default)]
    pub enabled: bool,
    pub target_r: Option<usize>,
    #[serde(default = "default_variance")]
    pub variance: f64,
}

impl Default for RankIncrease {
    fn default() -> Self {
        Self {
            enabled: false,
            target_r: None,
            variance: default_variance(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synthetic {
    /// Bond dimension of the generating ring; defaults to `r`.
    pub rank: Option<usize>,
    #[serde(default = "default_mixing")]
    pub mixing: f64,
    #[serde(default)]
    pub seed: u64,
    /// Ring file to use instead of a generated Gibbs chain.
    pub ring: Option<PathBuf>,
}

impl Default for Synthetic {
    fn default() -> Self {
        Self {
            rank: None,
            mixing: default_mixing(),
            seed: 0,
            ring: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnose {
    /// Lengths of `c1, a, c2, b`; an even split of `d` when absent.
    pub lengths: Option<[usize; 4]>,
    /// Frozen configurations per partition.
    pub samples: Option<usize>,
}

/// Contents of a configuration file. Every key is optional except `oracle`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub oracle: OracleName,
    pub d: Option<usize>,
    pub n: Option<usize>,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_s")]
    pub s: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub passes: usize,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_count")]
    pub eval_count: usize,
    #[serde(default = "default_extra_factor")]
    pub extra_factor: usize,
    #[serde(default)]
    pub init: InitName,
    #[serde(default)]
    pub frozen: FrozenName,
    #[serde(default)]
    pub dump_skeleton: bool,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub levels: Option<Vec<f64>>,
    #[serde(default)]
    pub rank_increase: RankIncrease,
    #[serde(default)]
    pub synthetic: Synthetic,
    #[serde(default)]
    pub diagnose: Diagnose,
}

fn default_r() -> usize {
    3
}
fn default_s() -> usize {
    4
}
fn default_lambda() -> f64 {
    1e-9
}
fn one() -> usize {
    1
}
fn default_max_sweeps() -> usize {
    30
}
fn default_rel_tol() -> f64 {
    1e-3
}
fn default_repeats() -> usize {
    5
}
fn default_eval_count() -> usize {
    100_000
}
fn default_extra_factor() -> usize {
    5
}
fn default_beta() -> f64 {
    ISING_BETA
}
fn default_variance() -> f64 {
    1e-8
}
fn default_mixing() -> f64 {
    1.0
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Config = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(ring) = cfg.synthetic.ring.take() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.synthetic.ring = Some(base.join(ring));
        }
        Ok(cfg)
    }

    pub fn als(&self) -> Result<AlsConfig, CliError> {
        let rank_growth = match (self.rank_increase.enabled, self.rank_increase.target_r) {
            (false, _) => None,
            (true, Some(target_r)) => Some(RankGrowth {
                target_r,
                variance: self.rank_increase.variance,
            }),
            (true, None) => {
                return Err(CliError::Config(
                    "rank_increase.enabled needs rank_increase.target_r".into(),
                ))
            }
        };
        let cfg = AlsConfig {
            r: self.r,
            s: self.s,
            lambda: self.lambda,
            passes: self.passes,
            max_sweeps: self.max_sweeps,
            rel_tol: self.rel_tol,
            seed: self.seed,
            eval_count: self.eval_count,
            extra_factor: self.extra_factor,
            rank_growth,
            init: match self.init {
                InitName::Proposed => InitMethod::Proposed,
                InitName::Random => InitMethod::RandomGaussian,
            },
            frozen: match self.frozen {
                FrozenName::Shared => FrozenSource::Shared,
                FrozenName::Random => FrozenSource::Random,
                FrozenName::Envs => FrozenSource::Envs,
            },
            track_heldout: false,
        };
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.repeats == 0 {
            return Err(CliError::Config("repeats must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn dims(&self) -> Result<usize, CliError> {
        self.d
            .ok_or_else(|| CliError::Config("missing key d".into()))
    }

    fn levels(&self, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let levels = self.levels.clone().unwrap_or_else(|| default.to_vec());
        match self.n {
            Some(n) if n != levels.len() => Err(CliError::Config(format!(
                "n = {n} but {} levels are configured",
                levels.len()
            ))),
            _ => Ok(levels),
        }
    }

    fn size(&self) -> Result<usize, CliError> {
        self.n
            .ok_or_else(|| CliError::Config(format!("oracle {:?} needs n", self.oracle)))
    }

    /// The generating ring of the synthetic oracle.
    pub fn synthetic_ring(&self) -> Result<TensorRing, CliError> {
        if let Some(path) = &self.synthetic.ring {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
                path: path.clone(),
                source,
            })?;
            let ring = TensorRing::from_text(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if self.d.is_some_and(|d| d != ring.dims()) || self.n.is_some_and(|n| n != ring.size())
            {
                return Err(CliError::Config(
                    "d or n disagrees with synthetic.ring".into(),
                ));
            }
            return Ok(ring);
        }
        let d = self.dims()?;
        let n = self.size()?;
        let rank = self.synthetic.rank.unwrap_or(self.r);
        if rank == 0 || !self.synthetic.mixing.is_finite() || self.synthetic.mixing < 0.0 {
            return Err(CliError::Config(
                "synthetic.rank must be positive and synthetic.mixing finite and >= 0".into(),
            ));
        }
        Ok(TensorRing::gibbs_chain(
            d,
            n,
            rank,
            self.synthetic.mixing,
            self.synthetic.seed,
        ))
    }

    /// A fresh oracle with its own cache and call counter.
    pub fn oracle(&self) -> Result<BlackBox, CliError> {
        let invalid = |e: trals::TrError| CliError::Config(e.to_string());
        match self.oracle {
            OracleName::Toy => toy_oracle(self.dims()?, self.size()?).map_err(invalid),
            OracleName::Ising => {
                ising_oracle(self.dims()?, self.beta, &self.levels(&ISING_LEVELS)?).map_err(invalid)
            }
            OracleName::Pde => {
                pde_oracle(self.dims()?, &self.levels(&PDE_LEVELS)?).map_err(invalid)
            }
            OracleName::Synthetic => Ok(synthetic_tr_oracle(self.synthetic_ring()?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config, toml::de::Error> {
        toml::from_str(text)
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let cfg = parse("oracle = \"pde\"\nd = 12\n").unwrap();
        assert_eq!(
            (cfg.r, cfg.s, cfg.passes, cfg.max_sweeps, cfg.repeats),
            (3, 4, 1, 30, 5)
        );
        assert_eq!(cfg.lambda, 1e-9);
        assert_eq!(cfg.rel_tol, 1e-3);
        assert_eq!(cfg.eval_count, 100_000);
        assert_eq!(cfg.rank_increase.variance, 1e-8);
        assert!(!cfg.rank_increase.enabled);
        let oracle = cfg.oracle().unwrap();
        assert_eq!((oracle.dims(), oracle.size()), (12, 3));
    }

    #[test]
    fn dotted_keys_reach_sections() {
        let cfg = parse(
            "oracle = \"toy\"\nd = 6\nn = 10\nrank_increase.enabled = true\nrank_increase.target_r = 4\n",
        )
        .unwrap();
        let als = cfg.als().unwrap();
        assert_eq!(als.rank_growth.unwrap().target_r, 4);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(parse("oracle = \"pde\"\nd = 12\nsweeps = 3\n").is_err());
        assert!(parse("oracle = \"nope\"\nd = 12\n").is_err());
        let cfg = parse("oracle = \"pde\"\nd = 12\nn = 4\n").unwrap();
        assert!(cfg.oracle().is_err());
        let cfg = parse("oracle = \"toy\"\nd = 6\n").unwrap();
        assert!(cfg.oracle().is_err());
        let cfg = parse("oracle = \"pde\"\nd = 12\nlambda = -1.0\n").unwrap();
        assert!(cfg.als().is_err());
        let cfg = parse("oracle = \"pde\"\nd = 12\nrank_increase.enabled = true\n").unwrap();
        assert!(cfg.als().is_err());
    }
}
