//! Crash deduplication: a vulnerability is keyed by its tag and the last
//! (innermost) three backtrace frames. Same key, same root cause.

use crate::executor::{ExitStatus, Frame};
use crate::rng::Fnv1a;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const TRIAGE_FRAMES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CrashKey {
    pub tag: String,
    /// Suffix of the backtrace closest to the crash site, at most
    /// [`TRIAGE_FRAMES`] frames, outermost of those first.
    pub frames: Vec<Frame>,
}

impl CrashKey {
    pub fn from_crash(tag: &str, backtrace: &[Frame]) -> CrashKey {
        let start = backtrace.len().saturating_sub(TRIAGE_FRAMES);
        CrashKey { tag: tag.to_string(), frames: backtrace[start..].to_vec() }
    }

    /// Short stable identifier used for crash directory names.
    pub fn digest(&self) -> String {
        let mut h = Fnv1a::new();
        h.write(self.tag.as_bytes());
        for f in &self.frames {
            h.write(f.function.as_bytes());
            h.write(f.block.as_bytes());
            h.write(&(f.instr as u32).to_le_bytes());
        }
        format!("{:016x}", h.finish())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub key: CrashKey,
    /// Whether the first exposing execution ran multithreaded.
    pub is_mt: bool,
    /// Campaign execution clock at first exposure.
    pub discovered_at: u64,
    pub exposures: u64,
    #[serde(skip)]
    pub input: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriageOutcome {
    New,
    Duplicate,
}

/// Deduplicated crash corpus.
#[derive(Debug, Default)]
pub struct CrashCorpus {
    records: BTreeMap<CrashKey, CrashRecord>,
}

impl CrashCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Triages one crashing execution. New keys store the proof-of-crash
    /// input; duplicates only bump the exposure count.
    pub fn triage(
        &mut self,
        exit: &ExitStatus,
        input: &[u8],
        is_mt: bool,
        clock: u64,
    ) -> (CrashKey, TriageOutcome) {
        let (tag, backtrace) = match exit {
            ExitStatus::Crash { tag, backtrace } => (tag, backtrace),
            other => panic!("triage on non-crash status {other:?}"),
        };
        let key = CrashKey::from_crash(tag, backtrace);
        match self.records.get_mut(&key) {
            Some(rec) => {
                rec.exposures += 1;
                (key, TriageOutcome::Duplicate)
            }
            None => {
                self.records.insert(
                    key.clone(),
                    CrashRecord {
                        key: key.clone(),
                        is_mt,
                        discovered_at: clock,
                        exposures: 1,
                        input: input.to_vec(),
                    },
                );
                (key, TriageOutcome::New)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &CrashRecord> {
        self.records.values()
    }

    pub fn mt_count(&self) -> usize {
        self.records.values().filter(|r| r.is_mt).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(f: &str, i: usize) -> Frame {
        Frame { function: f.into(), block: "b".into(), instr: i }
    }

    fn crash(tag: &str, fns: &[&str]) -> ExitStatus {
        ExitStatus::Crash {
            tag: tag.into(),
            backtrace: fns.iter().enumerate().map(|(i, f)| frame(f, i)).collect(),
        }
    }

    #[test]
    fn same_last_three_frames_deduplicate() {
        let mut corpus = CrashCorpus::new();
        // Outermost frame differs, innermost three match.
        let a = crash("overflow", &["main", "p", "q", "r", "s"]);
        let b = crash("overflow", &["other", "x", "q", "r", "s"]);
        assert_eq!(corpus.triage(&a, &[1], true, 0).1, TriageOutcome::New);
        assert_eq!(corpus.triage(&b, &[2], true, 1).1, TriageOutcome::Duplicate);
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.records().next().unwrap().exposures, 2);
    }

    #[test]
    fn different_tags_are_distinct() {
        let mut corpus = CrashCorpus::new();
        let a = crash("div-by-zero", &["main", "f"]);
        let b = crash("overflow", &["main", "f"]);
        assert_eq!(corpus.triage(&a, &[], false, 0).1, TriageOutcome::New);
        assert_eq!(corpus.triage(&b, &[], false, 0).1, TriageOutcome::New);
        assert_eq!(corpus.len(), 2);
    }

    #[test]
    fn single_threaded_crash_counted_separately() {
        let mut corpus = CrashCorpus::new();
        corpus.triage(&crash("a", &["main"]), &[], false, 0);
        corpus.triage(&crash("b", &["main", "w"]), &[], true, 0);
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.mt_count(), 1);
    }

    #[test]
    fn short_backtraces_use_all_frames() {
        let key = CrashKey::from_crash("t", &[frame("main", 0)]);
        assert_eq!(key.frames.len(), 1);
        let key5 = CrashKey::from_crash("t", &(0..5).map(|i| frame("f", i)).collect::<Vec<_>>());
        assert_eq!(key5.frames.len(), 3);
        assert_eq!(key5.frames[0].instr, 2);
    }
}
