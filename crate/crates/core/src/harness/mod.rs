//! Configuration, experiment orchestration and reporting behind the `fspde` CLI.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::ExperimentConfig;
pub use experiments::{
    run_classcheck, run_conjugation, run_galerkin, run_harnack_campaign, run_nonexplosion, run_simulate, run_solver, run_trace,
    run_uniqueness,
};
pub use report::{aggregate, Aggregate, CriterionVerdict, ExperimentResult, Table};
