//! File formats and report serialization.

mod moment_file;
mod report;
mod returns;

pub use moment_file::{
    format_number, parse_moment_file, parse_moment_stream, MomentFile, MomentRecord, RecordSource, RecordWeights,
    MOMENT_HEADER,
};
pub use report::{
    render_text, run_diagnostics, run_diagnostics_on_file, DateOutput, DiagnosticsOutput, Metadata, RunConfig,
    SampleCheck, SharpeRatios, Summary, SCHEMA_VERSION,
};
pub use returns::{ReturnsFile, RETURNS_HEADER};
