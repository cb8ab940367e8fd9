//! Convex linear probing and the information relations built on it.

pub mod format;
pub mod info;
pub mod solver;

pub use info::{
    classify_information, mixture_cost, union_cost, verdict_from_costs, InfoVerdict, Relation,
    DEFAULT_MARGIN,
};
pub use solver::{
    expected_loss, fit_probe, fit_probe_eval, fit_probe_k, optimal_cost, ProbeConfig, ProbeResult,
};
