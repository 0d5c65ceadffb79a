//! The grey-box fuzzing loop: context-aware seed selection, repeated
//! execution with schedule diversification, mutation, triage, and corpus
//! persistence.

mod campaign;
mod corpus;
mod mutate;
mod queue;
mod select;
mod triage;

pub use campaign::{
    run_campaign, CampaignConfig, CampaignOutcome, CampaignReport, CrashSummary, SeedMeta,
};
pub use corpus::{load_corpus, load_seed_dir, max_existing_id, persist_campaign, CorpusSeed};
pub use mutate::{mutate, INTERESTING};
pub use queue::{bucket_bit, GlobalState, Seed};
pub use select::{
    mutation_chance, repetition_count, select_next_seed, FuzzMode, FuzzParams,
};
pub use triage::{CrashCorpus, CrashKey, CrashRecord, TriageOutcome, TRIAGE_FRAMES};

#[cfg(test)]
mod tests;
