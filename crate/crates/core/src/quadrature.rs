//! Triangle quadrature rules in barycentric coordinates.
//!
//! Weights sum to one; an integral is `area * sum_i w_i f(x_i)`. The midpoint
//! rule is exact for quadratics, which covers every integrand assembled here
//! (products of linear basis functions with piecewise-constant coefficients).
//! The 7-point rule (degree 5) exists to cross-check that exactness.

/// One rule: `(lambda0, lambda1, lambda2, weight)` per point.
pub(crate) type TriRule = &'static [(f64, f64, f64, f64)];

/// Edge-midpoint rule, exact for polynomials of degree 2.
pub(crate) const MIDPOINT3: TriRule = &[
    (0.5, 0.5, 0.0, 1.0 / 3.0),
    (0.0, 0.5, 0.5, 1.0 / 3.0),
    (0.5, 0.0, 0.5, 1.0 / 3.0),
];

// Degree-5 rule; interior coordinates (6 -+ sqrt(15)) / 21.
#[cfg(test)]
const A: f64 = 0.101_286_507_323_456_34;
#[cfg(test)]
const B: f64 = 0.470_142_064_105_115_1;
#[cfg(test)]
const WA: f64 = 0.125_939_180_544_827_15;
#[cfg(test)]
const WB: f64 = 0.132_394_152_788_506_2;

/// 7-point rule, exact for polynomials of degree 5; used by tests to
/// cross-check exactness of the default rule.
#[cfg(test)]
pub(crate) const DUNAVANT7: TriRule = &[
    (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.225),
    (1.0 - 2.0 * A, A, A, WA),
    (A, 1.0 - 2.0 * A, A, WA),
    (A, A, 1.0 - 2.0 * A, WA),
    (1.0 - 2.0 * B, B, B, WB),
    (B, 1.0 - 2.0 * B, B, WB),
    (B, B, 1.0 - 2.0 * B, WB),
];
