//! On-disk corpus layout.
//!
//! ```text
//! out/
//!   queue/id_000000           seed bytes
//!   queue/id_000000.json      seed metadata sidecar
//!   crashes/key_<digest>/input
//!   crashes/key_<digest>/meta.json
//!   campaign.json
//! ```

use super::campaign::{CampaignOutcome, SeedMeta};
use super::select::FuzzParams;
use std::fs;
use std::io;
use std::path::Path;

pub fn seed_file_name(id: u64) -> String {
    format!("id_{id:06}")
}

/// Writes the queue, crash corpus, and campaign report under `dir`.
pub fn persist_campaign(outcome: &CampaignOutcome, dir: &Path) -> io::Result<()> {
    let queue_dir = dir.join("queue");
    fs::create_dir_all(&queue_dir)?;
    let mode = outcome.report.config.mode;
    let params = outcome.report.config.params;
    for seed in &outcome.queue {
        let name = seed_file_name(seed.id);
        fs::write(queue_dir.join(&name), &seed.bytes)?;
        let meta = SeedMeta::from_seed(seed, mode, &params);
        fs::write(
            queue_dir.join(format!("{name}.json")),
            serde_json::to_string_pretty(&meta)?,
        )?;
    }
    let crash_root = dir.join("crashes");
    fs::create_dir_all(&crash_root)?;
    for rec in &outcome.crashes {
        let crash_dir = crash_root.join(format!("key_{}", rec.key.digest()));
        fs::create_dir_all(&crash_dir)?;
        fs::write(crash_dir.join("input"), &rec.input)?;
        fs::write(crash_dir.join("meta.json"), serde_json::to_string_pretty(rec)?)?;
    }
    fs::write(
        dir.join("campaign.json"),
        serde_json::to_string_pretty(&outcome.report)?,
    )?;
    Ok(())
}

/// Reads seed files from a directory in file-name order. Skips `.json`
/// sidecars and subdirectories.
pub fn load_seed_dir(dir: &Path) -> io::Result<Vec<(String, Vec<u8>)>> {
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".json") {
            continue;
        }
        names.push(name);
    }
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let bytes = fs::read(dir.join(&name))?;
            Ok((name, bytes))
        })
        .collect()
}

/// One replayable corpus entry: bytes plus the repetition count recorded at
/// fuzzing time (defaulting to the base count when no sidecar exists).
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSeed {
    pub name: String,
    pub bytes: Vec<u8>,
    pub is_mt: bool,
    pub c_m: u32,
    pub repetition_count: u32,
}

/// Loads a queue directory with sidecar metadata for replay.
pub fn load_corpus(queue_dir: &Path, params: &FuzzParams) -> io::Result<Vec<CorpusSeed>> {
    let mut out = Vec::new();
    for (name, bytes) in load_seed_dir(queue_dir)? {
        let sidecar = queue_dir.join(format!("{name}.json"));
        let (is_mt, c_m, repetition_count) = match fs::read_to_string(&sidecar) {
            Ok(text) => match serde_json::from_str::<SeedMeta>(&text) {
                Ok(meta) => (meta.is_mt, meta.c_m, meta.repetition_count),
                Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidData, e)),
            },
            Err(_) => (false, 0, params.n0),
        };
        out.push(CorpusSeed { name, bytes, is_mt, c_m, repetition_count });
    }
    Ok(out)
}

/// Highest queue id already present in a corpus directory, if any.
pub fn max_existing_id(queue_dir: &Path) -> io::Result<Option<u64>> {
    if !queue_dir.exists() {
        return Ok(None);
    }
    let mut max = None;
    for (name, _) in load_seed_dir(queue_dir)? {
        if let Some(rest) = name.strip_prefix("id_") {
            if let Ok(id) = rest.parse::<u64>() {
                max = Some(max.map_or(id, |m: u64| m.max(id)));
            }
        }
    }
    Ok(max)
}
