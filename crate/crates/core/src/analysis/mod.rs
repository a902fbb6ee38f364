//! Comparing networks and measuring how their outputs respond to inputs.

mod compare;
mod sobol;

pub use compare::{
    classify_graph, classify_nodes, comparison_dot, shared_variables, shared_variables_with,
    structural_compare, ClassCounts, ComparisonReport, NodeClass, NodeGraph, NodeRole, SharedPair,
    SideReport,
};
pub use sobol::{
    mc_epsilon, pairwise_sum, sobol_indices, top_pair, top_pair_surface, AnalysisError, Bounds,
    InputIndex, SensitivityReport, Surface,
};
