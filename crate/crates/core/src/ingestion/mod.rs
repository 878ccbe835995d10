//! Dataset creation: NVD feed entries plus fix-commit code become
//! [`EnrichedRecord`](crate::model::EnrichedRecord)s.

pub mod commit;
pub mod cve2cwe;
pub mod diff;
pub mod nvd;
pub mod split;

mod assemble;

pub use assemble::assemble_record;
pub use commit::{
    fetch_commit, fetch_with_retry, CommitClient, CommitData, CommitUrl, FixtureCommitClient,
    GithubClient,
};
pub use cve2cwe::{Cve2CweEntry, Cve2CweStore, SeverityEntry};
pub use diff::parse_unified_diff;
pub use nvd::{parse_nvd_feed, CvssEntry, RawCveEntry};
pub use split::{sample_evaluation, split_dataset};
