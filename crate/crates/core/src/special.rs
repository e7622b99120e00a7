//! Special functions: normalized sinc and integer-order Bessel functions.

use crate::Real;

/// Normalized sinc, `sin(πx)/(πx)` with `sinc(0) = 1`.
pub fn sinc<T: Real>(x: T) -> T {
    if x == T::zero() {
        return T::one();
    }
    let px = T::PI() * x;
    px.sin() / px
}

/// Bessel function of the first kind `J_n(x)` for integer order.
///
/// Evaluated from the ascending power series. Accurate to near machine
/// precision for the modulation depths used here (|x| ≲ 10); cancellation
/// grows like `e^|x|` beyond that.
pub fn bessel_j<T: Real>(order: i32, x: T) -> T {
    let n = order.unsigned_abs();
    let mut value = bessel_j_nonneg(n, x);
    // J_{-n}(x) = (-1)^n J_n(x)
    if order < 0 && n % 2 == 1 {
        value = -value;
    }
    value
}

fn bessel_j_nonneg<T: Real>(n: u32, x: T) -> T {
    let half = x * T::lit(0.5);
    // leading term (x/2)^n / n!
    let mut term = T::one();
    for k in 1..=n {
        term = term * half / T::from_u32(k).unwrap();
    }
    let q = -(half * half);
    let mut sum = term;
    for m in 1..200u32 {
        term = term * q / (T::from_u32(m).unwrap() * T::from_u32(m + n).unwrap());
        sum = sum + term;
        if term.abs() <= T::epsilon() * sum.abs() * T::lit(0.01) {
            break;
        }
    }
    sum
}
