//! Seeded training runs: configuration, the outer loop and artifact emission.

mod config;
mod run;
mod weights;

pub use config::{EnvConfig, RunConfig, ENV_PREFIX};
pub use run::{
    build_id, correlation_arms, csv_version_line, eval_seed, evaluate_suites, load_policy,
    run_experiment, sha256_hex, write_correlation_arms, write_correlation_report, CorrelationArms,
    RunManifest, RunStatus, CHECKPOINT_DIR, FORMAT_VERSION, MANIFEST_FILE,
};
pub use weights::{read_weights_csv, write_weights_csv};
