//! Experiment orchestration: run configs, matrix execution, JSON-lines logs
//! and fixture replay.

mod config;
mod engine;
mod fixture;
mod matrix;
mod record;

pub use config::{
    ClearConfig, ConfigError, EmbedderConfig, RemoteSettings, RunConfig, SectionConfig, MOCK_MODEL_ID,
};
pub use engine::{canonical_json, sha256_hex, Engine, EngineSettings};
pub use fixture::{
    builtin_fixture, load_results, parse_fixture, replay_fixture, results_from_records, Fixture, FixtureCell,
    FixtureError, FixtureNote, ResultSet, BUILTIN_TABLE2, FIXTURE_SCHEMA_VERSION,
};
pub use matrix::{
    prompt_hash, run_matrix, Matrix, RunError, RunOutcome, EXIT_CONFIG, EXIT_FAILED, EXIT_OK, EXIT_PARTIAL,
};
pub use record::{parse_jsonl, read_jsonl, record_line, write_jsonl, LogError, RunRecord, STATUS_OK};
