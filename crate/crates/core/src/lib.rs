//! Dual-engine toolkit for one-parameter families of polynomials degenerating
//! at `t = 0`.
//!
//! The exact engine works over the field of Laurent series with rational
//! coefficients, normalized so that `|t| = e^{-1}`. It computes t-adic
//! valuations, the rational escape rate of a marked point, and orbit
//! certificates over the tree of closed ultrametric balls. The floating
//! engine evaluates the same family at concrete complex parameters and
//! measures Green functions, critical points and Lyapunov exponents, so the
//! two can be cross-checked against each other near the degeneration.
//!
//! Modules follow the pipeline order: [`series`] (field arithmetic),
//! [`formal_dyn`] (iteration and escape rates), [`balls`] (the ball tree),
//! [`classifier`] (orbit trichotomy certificates), [`complex_dyn`] (numeric
//! Green/Lyapunov values), [`puiseux`] (rational Newton-polygon branches),
//! and [`degeneration`] (sampling, fitting and the case decision).

pub mod balls;
pub mod classifier;
pub mod complex_dyn;
pub mod degeneration;
pub mod formal_dyn;
pub mod par;
pub mod puiseux;
pub mod series;

pub use num_bigint::BigInt;
pub use num_complex::Complex64;
pub use num_rational::BigRational;
