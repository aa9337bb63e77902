//! Rule-guided inductive process discovery.
//!
//! The crate is organised bottom-up:
//!
//! * [`log`] parses CSV and XES files into an [`EventLog`].
//! * [`declare`] holds the eight supported Declare templates, their per-trace
//!   semantics and the support/confidence statistics.
//! * [`dfg`] builds directly-follows graphs with artificial start/end nodes.
//! * [`cut`] enumerates binary cuts, prunes them against rules and scores them.
//! * [`discovery`] runs the recursive cut search and produces a [`ProcessTree`].
//! * [`tree`] defines process trees, their language and their serialisations.
//!
//! Numeric code that mixes counts with the `sup` weight is generic over
//! [`Scalar`], so the same cost functions run on `f64` and on exact rationals.

pub mod cut;
pub mod declare;
pub mod dfg;
pub mod discovery;
pub mod log;
pub mod scalar;
pub mod tree;

pub use cut::{cut_cost, enumerate_cuts, explore, violates, CostTerms, Cut, CutError};
pub use declare::{
    batch_stats, evaluate_trace, stats, Evaluation, RawRule, Rule, RuleError, RuleSet, RuleStats,
    StatsError, Template,
};
pub use dfg::{Dfg, Node};
pub use discovery::{
    check_base_case, discover, split_log, Discovery, DiscoveryConfig, DiscoveryError,
    FallbackPolicy,
};
pub use log::{parse_csv, parse_xes, Activity, CsvConfig, EventLog, LogError, Trace, XesImport};
pub use scalar::Scalar;
pub use tree::{Operator, ProcessTree, TreeParseError};

/// Exact ratio used for rule statistics.
pub type Fraction = num_rational::Ratio<u64>;

/// Floating-point cut cost, the default for discovery runs.
pub type Cost = f64;

/// Exact cut cost, useful when comparing costs for equality.
pub type ExactCost = num_rational::Ratio<i64>;

/// Discovery configuration over `f64`.
pub type Config = DiscoveryConfig<f64>;

/// Discovery configuration over exact rationals.
pub type ExactConfig = DiscoveryConfig<ExactCost>;
