//! Sharding of hedge paths over workers: each path travels as one request
//! frame and comes back as one result frame.

pub mod pool;
pub mod protocol;
pub mod study;
pub mod worker;

pub use pool::{Connection, Connector, InProc, RetryPolicy, Subprocess, Tcp, WorkerPool};
pub use protocol::{
    decode_request, decode_result, encode, read_frame, write_frame, RequestMsg, ResultMsg, ResultRow, Status,
    StudySpec, PROTOCOL_VERSION,
};
pub use study::{
    build_requests, reference_price, run_study, study_dates, study_report, validate_study, StudyReport,
    StudyResults,
};
pub use worker::{build_pricer, serve_stream, serve_tcp, Executor};
