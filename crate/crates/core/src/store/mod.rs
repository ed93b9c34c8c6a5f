//! Round-report files and model checkpoints.

mod checkpoint;
mod report;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta,
};
pub use report::{append_report, parse_reports, read_reports, RoundReport, FIELDS};
