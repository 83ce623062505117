//! Exact counting of reasoning shortcuts in discrete neuro-symbolic tasks.

pub mod cnf;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod extremality;
pub mod format;
pub mod hungarian;
pub mod intended;
pub mod maps;
pub mod metrics;
pub mod mitigations;
pub(crate) mod perm;
pub mod task;

pub use engine::{
    count_jrs, count_rs, count_with_mitigations, enumerate_optimal_alphas, Arithmetic, CountOptions, CountReport,
    Method, Mode,
};
pub use error::{Error, Result};
pub use intended::SubtrahendPolicy;
pub use maps::{AlphaMap, BetaMap, IntendedWitness};
pub use mitigations::MitigationSet;
pub use task::{AlphaFamily, ConceptSpace, KnowledgeTable, SupportSet, TaskSpec, World};
