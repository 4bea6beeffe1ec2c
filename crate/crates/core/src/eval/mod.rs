//! Linear evaluation of frozen node embeddings.

mod metrics;
mod probe;
mod protocol;
mod report;

pub use metrics::{classification_metrics, MetricRecord};
pub use probe::{argmax, train_linear_probe, ProbeHyper, ProbeObjective, ProbeParams};
pub use protocol::{run_protocol, MetricsReport, ProtocolConfig, RepeatRecord};
pub use report::{
    format_cell, read_report_csv, render_csv, render_markdown, render_sweep_csv, render_sweep_markdown, report_rows,
    write_report, ReportFormat, ReportRow,
};

use crate::numerics::NumericsError;
use crate::tag::GraphError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid evaluation input: {0}")]
    Config(String),
    #[error("the train split contains fewer than two classes")]
    SingleClassTrain,
    #[error("the test split is empty")]
    EmptyTestSet,
    #[error("report has no repeats")]
    EmptyReport,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Split(#[from] GraphError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
