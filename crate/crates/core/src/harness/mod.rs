//! Configuration, data files, replication studies and reports.

pub mod config;
pub mod io;
pub mod report;
pub mod study;

pub use config::{init_text, DataSource, RunConfig};
pub use io::{read_dataset, write_dataset};
pub use report::{
    compare_priors, render_comparisons, render_estimates, render_selection, summarize, write_outputs, PairedComparison,
    SelectionSummary, TableFormat,
};
pub use study::{run_study, ReplicateFit, ReplicateResult, StudyResult};
