//! Derivative-free one-dimensional searches: golden-section minimization and
//! bisection root finding.

use crate::Real;

/// Result of a bracketed scalar minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum<T> {
    pub x: T,
    pub value: T,
    pub evaluations: usize,
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
///
/// Iterates until the bracket is narrower than `tol`, then returns the
/// better of the two interior probes. The sequence of evaluations depends
/// only on the inputs, so results are bit-reproducible.
pub fn golden_section<T, F>(mut f: F, lo: T, hi: T, tol: T) -> Minimum<T>
where
    T: Real,
    F: FnMut(T) -> T,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    // 1/φ
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) * T::lit(0.5);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evaluations = 2;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        evaluations += 1;
    }
    if fc <= fd {
        Minimum { x: c, value: fc, evaluations }
    } else {
        Minimum { x: d, value: fd, evaluations }
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Returns `None` when `f(lo)` and `f(hi)` have the same strict sign.
pub fn bisect<T, F>(mut f: F, lo: T, hi: T, tol: T) -> Option<T>
where
    T: Real,
    F: FnMut(T) -> T,
{
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let fb = f(b);
    if fa == T::zero() {
        return Some(a);
    }
    if fb == T::zero() {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let m = a + (b - a) * T::lit(0.5);
        let fm = f(m);
        if fm == T::zero() {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(a + (b - a) * T::lit(0.5))
}
