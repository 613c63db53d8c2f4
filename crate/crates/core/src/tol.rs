//! Numerical tolerances shared across modules.

/// Probability vectors: sum-to-one slack before an input is rejected.
pub const SIMPLEX: f64 = 1e-9;
/// Mixture reconstruction and neighborhood-membership slack.
pub const RECONSTRUCTION: f64 = 1e-10;
/// Exact algebraic identities (row sums, marginals, closed forms).
pub const IDENTITY: f64 = 1e-12;
/// Null-constraint audit: a table is valid iff its worst expectation is below `1 + AUDIT`.
pub const AUDIT: f64 = 1e-10;
/// Coupling entries above `-CLAMP` are treated as rounding noise and set to 0.
pub const CLAMP: f64 = 1e-14;
