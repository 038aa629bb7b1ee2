//! Session orchestration: query, rank, summarize, learn from feedback, and
//! navigate the branching history of learning rounds.

mod result;
mod session;
mod tree;

pub use result::{RetrievalResult, NON_CANDIDATE_SCORE};
pub use session::{SampleSet, Session, SessionDocument, SESSION_FORMAT_VERSION};
pub use tree::{ExplorationTree, TreeNode};
