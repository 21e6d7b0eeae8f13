//! JSON and CSV artifacts. Every artifact carries the config hash and seed.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use eti_core::simulator::Checkpoint;

use crate::config::{Failure, Settings};

#[derive(Clone, Debug)]
pub struct Provenance {
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    result: &'a T,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::Runtime)?;
    let path = dir.join(name);
    std::fs::write(&path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Runtime)
}

/// Prints the result to stdout and, with an output directory, writes it to
/// `name` there.
pub fn emit_json<T: Serialize>(settings: &Settings, prov: &Provenance, name: &str, result: &T) -> Result<(), Failure> {
    let env = Envelope {
        command: prov.command,
        config_hash: &prov.config_hash,
        seed: prov.seed,
        result,
    };
    let mut text = serde_json::to_string_pretty(&env).context("serializing result").map_err(Failure::Runtime)?;
    text.push('\n');
    std::io::stdout()
        .lock()
        .write_all(text.as_bytes())
        .context("writing stdout")
        .map_err(Failure::Runtime)?;
    if let Some(dir) = &settings.out {
        write_file(dir, name, text.as_bytes())?;
    }
    Ok(())
}

/// Checkpoint series. The first four columns are fixed; the policy snapshot
/// and provenance follow.
pub fn checkpoints_csv(prov: &Provenance, checkpoints: &[Checkpoint]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let row = |w: &mut csv::Writer<Vec<u8>>, fields: &[String]| w.write_record(fields);
    let header = ["n", "alpha_hat_mle", "alpha_hat_sae", "gamma_hat_json", "policy_json", "config_hash", "seed"];
    row(&mut w, &header.map(String::from)).map_err(|e| Failure::Runtime(e.into()))?;
    for c in checkpoints {
        let fields = [
            c.n.to_string(),
            c.alpha_hat_mle.to_string(),
            c.alpha_hat_sae.to_string(),
            serde_json::to_string(&c.gamma_hat.values).map_err(|e| Failure::Runtime(e.into()))?,
            c.policy.as_ref().map(|p| p.to_string()).unwrap_or_default(),
            prov.config_hash.clone(),
            prov.seed.to_string(),
        ];
        row(&mut w, &fields).map_err(|e| Failure::Runtime(e.into()))?;
    }
    w.into_inner().map_err(|e| Failure::Runtime(anyhow::anyhow!("{e}")))
}

pub fn emit_csv(settings: &Settings, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = &settings.out {
        write_file(dir, name, bytes)?;
    }
    Ok(())
}
