//! Robust orientation and in-circle predicates.
//!
//! Both predicates evaluate a floating-point determinant first and accept its
//! sign whenever the magnitude exceeds a conservative forward-error bound on
//! that determinant (the classic semi-static filter). Otherwise they fall
//! back to exact arithmetic over arbitrary-precision rationals; every `f64`
//! converts to a rational exactly, so the fallback sign is always correct.
//! The fallback triggers only for nearly degenerate configurations, which
//! keeps the common path allocation-free.

use num_rational::BigRational;
use num_traits::Zero;

// Machine epsilon for f64 rounding steps (2^-53) and the resulting filter
// constants for the two determinants.
const EPS: f64 = 1.110_223_024_625_156_5e-16;
const ORIENT_BOUND: f64 = (3.0 + 16.0 * EPS) * EPS;
const INCIRCLE_BOUND: f64 = (10.0 + 96.0 * EPS) * EPS;

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("predicate input must be finite")
}

/// Sign of the orientation determinant of `(a, b, c)`.
///
/// `+1` if the triple turns counter-clockwise, `-1` if clockwise, `0` if
/// exactly collinear.
pub fn orient2d(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> i8 {
    let acx = a[0] - c[0];
    let bcx = b[0] - c[0];
    let acy = a[1] - c[1];
    let bcy = b[1] - c[1];
    let l = acx * bcy;
    let r = acy * bcx;
    let det = l - r;
    let detsum = l.abs() + r.abs();
    if det.abs() > ORIENT_BOUND * detsum {
        return if det > 0.0 { 1 } else { -1 };
    }
    if det == 0.0 && detsum == 0.0 {
        // All differences vanished exactly; the points coincide pairwise.
        return 0;
    }
    orient2d_exact(a, b, c)
}

fn orient2d_exact(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> i8 {
    let det = (rat(a[0]) - rat(c[0])) * (rat(b[1]) - rat(c[1]))
        - (rat(a[1]) - rat(c[1])) * (rat(b[0]) - rat(c[0]));
    sign_of(&det)
}

/// Sign of the in-circle determinant for the counter-clockwise triangle
/// `(a, b, c)` and query point `d`.
///
/// `+1` if `d` lies strictly inside the circumcircle, `-1` strictly outside,
/// `0` if exactly cocircular. The triangle must be counter-clockwise for the
/// sign convention to hold.
pub fn in_circle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> i8 {
    let adx = a[0] - d[0];
    let ady = a[1] - d[1];
    let bdx = b[0] - d[0];
    let bdy = b[1] - d[1];
    let cdx = c[0] - d[0];
    let cdy = c[1] - d[1];

    let alift = adx * adx + ady * ady;
    let blift = bdx * bdx + bdy * bdy;
    let clift = cdx * cdx + cdy * cdy;

    let bxcy = bdx * cdy;
    let cxby = cdx * bdy;
    let cxay = cdx * ady;
    let axcy = adx * cdy;
    let axby = adx * bdy;
    let bxay = bdx * ady;

    let det = alift * (bxcy - cxby) + blift * (cxay - axcy) + clift * (axby - bxay);
    let permanent = alift * (bxcy.abs() + cxby.abs())
        + blift * (cxay.abs() + axcy.abs())
        + clift * (axby.abs() + bxay.abs());
    if det.abs() > INCIRCLE_BOUND * permanent {
        return if det > 0.0 { 1 } else { -1 };
    }
    if det == 0.0 && permanent == 0.0 {
        return 0;
    }
    in_circle_exact(a, b, c, d)
}

fn in_circle_exact(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> i8 {
    let adx = rat(a[0]) - rat(d[0]);
    let ady = rat(a[1]) - rat(d[1]);
    let bdx = rat(b[0]) - rat(d[0]);
    let bdy = rat(b[1]) - rat(d[1]);
    let cdx = rat(c[0]) - rat(d[0]);
    let cdy = rat(c[1]) - rat(d[1]);

    let alift = adx.clone() * adx.clone() + ady.clone() * ady.clone();
    let blift = bdx.clone() * bdx.clone() + bdy.clone() * bdy.clone();
    let clift = cdx.clone() * cdx.clone() + cdy.clone() * cdy.clone();

    let det = alift * (bdx.clone() * cdy.clone() - cdx.clone() * bdy.clone())
        + blift * (cdx * ady.clone() - adx.clone() * cdy)
        + clift * (adx * bdy - bdx * ady);
    sign_of(&det)
}

fn sign_of(x: &BigRational) -> i8 {
    if x.is_zero() {
        0
    } else if x > &BigRational::zero() {
        1
    } else {
        -1
    }
}
