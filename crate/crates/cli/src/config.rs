//! Settings resolution, spec loading and design parsing.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use eti_core::chain::{Chain, ChainAnalysis, ChainSpec};
use eti_core::design;
use eti_core::io::{self, SpecIoError};
use eti_core::online::{Eti2Config, EtiConfig, ResolveSchedule};
use eti_core::policies::PolicyConfig;
use eti_core::simulator::Design;

use crate::{AdaptiveArgs, Cli, ResolveArg};

pub const SEED_ENV: &str = "ETI_SEED";

/// Failure classes, mapped to exit codes 1, 2 and 3.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Spec(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Spec(e) | Failure::Runtime(e) => e,
        }
    }
}

pub fn config_err(msg: impl std::fmt::Display) -> Failure {
    Failure::Config(anyhow!("{msg}"))
}

pub fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

/// Optional defaults read from `--config`. Command-line flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: Option<PathBuf>,
    pub policy: Option<String>,
    pub n: Option<u64>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub checkpoint: Option<u64>,
    pub x0: Option<usize>,
    pub beta: Option<f64>,
    pub resolve: Option<ResolveSchedule>,
    pub xr: Option<usize>,
    pub s: Option<Vec<usize>>,
    pub q1: Option<f64>,
    pub q2: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Fully resolved global settings.
pub struct Settings {
    pub file: ExperimentConfig,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn resolve(cli: &Cli) -> Result<Settings, Failure> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(Failure::Config)?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))
                .map_err(Failure::Config)?;
            // Relative paths in a config file are relative to the file.
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.spec = cfg.spec.map(|p| base.join(p));
            cfg.out = cfg.out.map(|p| base.join(p));
            cfg
        }
        None => ExperimentConfig::default(),
    };
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<u64>()
                .map_err(|_| config_err(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    if cli.threads == Some(0) {
        return Err(config_err("--threads must be at least 1"));
    }
    Ok(Settings {
        seed: cli.seed.or(env_seed).or(file.seed).unwrap_or(0),
        threads: cli.threads,
        out: cli.out.clone().or_else(|| file.out.clone()),
        file,
    })
}

pub fn load_spec(flag: &Option<PathBuf>, ctx: &Settings) -> Result<ChainSpec, Failure> {
    let path = flag
        .clone()
        .or_else(|| ctx.file.spec.clone())
        .ok_or_else(|| config_err("a chain spec is required (--spec)"))?;
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading spec {}", path.display()))
        .map_err(Failure::Config)?;
    io::parse_spec(&text).map_err(|e| match e {
        SpecIoError::Invalid(_) | SpecIoError::ChainCount(_) | SpecIoError::Json(_) => {
            Failure::Spec(anyhow::Error::new(e).context(format!("spec {}", path.display())))
        }
    })
}

/// 1-based state number from the command line to a 0-based index.
pub fn state_index(label: usize, n_states: usize, what: &str) -> Result<usize, Failure> {
    if label == 0 || label > n_states {
        return Err(config_err(format!(
            "{what} must be a state number between 1 and {n_states}, got {label}"
        )));
    }
    Ok(label - 1)
}

pub fn probability(v: f64, what: &str) -> Result<f64, Failure> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(config_err(format!("{what} must lie in [0, 1], got {v}")))
    }
}

pub fn adaptive_settings(args: &AdaptiveArgs, ctx: &Settings) -> Result<(f64, ResolveSchedule), Failure> {
    let beta = args.beta.or(ctx.file.beta).unwrap_or(0.5);
    if !(beta > 0.0 && beta < 1.0) {
        return Err(config_err(format!("--beta must lie in (0, 1), got {beta}")));
    }
    let resolve = match args.resolve {
        Some(ResolveArg::EveryStep) => ResolveSchedule::EveryStep,
        Some(ResolveArg::Pow2) => ResolveSchedule::Pow2,
        None => ctx.file.resolve.unwrap_or_default(),
    };
    Ok((beta, resolve))
}

fn parse_f64(s: &str, what: &str) -> Result<f64, Failure> {
    s.trim()
        .parse()
        .map_err(|_| config_err(format!("{what}: cannot parse {s:?} as a number")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize, Failure> {
    s.trim()
        .parse()
        .map_err(|_| config_err(format!("{what}: cannot parse {s:?} as an integer")))
}

/// Parses a design shorthand (see `eti simulate --help`).
pub fn parse_design(
    text: &str,
    spec: &ChainSpec,
    analysis: &ChainAnalysis,
    beta: f64,
    resolve: ResolveSchedule,
) -> Result<Design, Failure> {
    let n = spec.n_states();
    let mut parts = text.split(':');
    let kind = parts.next().unwrap_or_default().trim();
    let rest: Vec<&str> = parts.collect();
    let arity = |k: usize| -> Result<(), Failure> {
        if rest.len() == k {
            Ok(())
        } else {
            Err(config_err(format!("design {text:?}: expected {k} argument(s) after {kind:?}")))
        }
    };
    let design = match kind {
        "markov" => {
            arity(1)?;
            let p = rest[0]
                .split(',')
                .map(|v| parse_f64(v, "markov probability").and_then(|p| probability(p, "markov probability")))
                .collect::<Result<Vec<_>, _>>()?;
            if p.len() != n {
                return Err(config_err(format!("markov design needs {n} probabilities, got {}", p.len())));
            }
            Design::Static(PolicyConfig::StationaryMarkov { p_first: p })
        }
        "regenerative" => {
            arity(2)?;
            let xr = state_index(parse_usize(rest[0], "regeneration state")?, n, "regeneration state")?;
            let pr = probability(parse_f64(rest[1], "regeneration probability")?, "regeneration probability")?;
            Design::Static(PolicyConfig::Regenerative { xr, pr })
        }
        "switchback" => {
            let block_length = match rest.as_slice() {
                [] => 100,
                [d] => parse_usize(d, "block length")? as u64,
                _ => return Err(config_err("switchback takes at most one argument")),
            };
            Design::Static(PolicyConfig::Switchback { block_length })
        }
        "single" => {
            arity(1)?;
            let label = parse_usize(rest[0], "chain")?;
            let chain = Chain::from_label(label as u8)
                .filter(|_| label <= 2)
                .ok_or_else(|| config_err("chain must be 1 or 2"))?;
            Design::Static(PolicyConfig::SingleChain { chain })
        }
        "coop" => {
            arity(0)?;
            Design::Static(PolicyConfig::CoopAlternating)
        }
        "optimal" => {
            arity(0)?;
            let sol = design::optimal_design(spec, analysis).map_err(runtime)?;
            Design::Static(PolicyConfig::StationaryMarkov {
                p_first: sol.p_star[0].clone(),
            })
        }
        "optimal-regenerative" => {
            arity(1)?;
            let xr = state_index(parse_usize(rest[0], "regeneration state")?, n, "regeneration state")?;
            let r = design::optimal_regenerative(analysis, xr).map_err(runtime)?;
            Design::Static(PolicyConfig::Regenerative { xr, pr: r.p_star })
        }
        "eti" => {
            arity(0)?;
            Design::OnlineEti(EtiConfig { beta, resolve })
        }
        "eti2" => {
            arity(1)?;
            let xr = state_index(parse_usize(rest[0], "regeneration state")?, n, "regeneration state")?;
            Design::OnlineEti2(Eti2Config { xr, beta })
        }
        other => return Err(config_err(format!("unknown design {other:?}"))),
    };
    if let Design::Static(p) = &design {
        p.validate(n).map_err(config_err)?;
    }
    Ok(design)
}

/// Short hex digest of the canonical JSON of an effective configuration.
/// Thread count and output location are deliberately not part of it.
pub fn config_hash(effective: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(effective).expect("values serialize");
    let digest = Sha256::digest(&bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
