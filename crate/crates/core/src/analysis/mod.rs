//! χ² cross-moments, Le Cam bounds, G(s) overlap combinatorics and Hermite expansions.

mod bounds;
mod chi2;
mod combinatorics;
mod hermite;

pub use bounds::{
    lecam_risk_lower_bound, lemma54_bound, mixture_chi2, mixture_chi2_gs, tolerance_gap_bound, tolerance_gap_check,
    GAP_DENOM_PROVABLE, GAP_DENOM_STATED,
};
pub use chi2::{
    chi2_cross_gmm_known, chi2_cross_gmm_unknown, chi2_cross_reg, cross_moment, mc_cross_moment, CrossMomentKind,
    CrossMomentResult, McEstimate,
};
pub use combinatorics::{cj_counts_by_enumeration, cj_table, growth_check, CjTable, GrowthReport};
pub use hermite::{hermite_coeffs, hermite_cross_moment, CoeffMethod};
