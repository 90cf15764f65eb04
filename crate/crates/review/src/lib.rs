//! HTTP review service over detection runs: candidate queue, verdict ledger,
//! keyword promotion and reruns.

mod api;
pub mod store;

pub use api::{router, serve, RerunRequest, ServeError, VerdictRequest};
pub use store::{
    replay, transition_allowed, CandidatePage, ExampleContext, ItemState, LedgerEntry, Promotion, RerunState,
    ReviewError, ReviewItem, ReviewStatus, ReviewStore, RunStatus, Verdict,
};
