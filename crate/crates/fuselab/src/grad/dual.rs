//! Scalar abstraction for the tape: plain `f64` for first-order gradients,
//! dual numbers for forward-over-reverse second-order products.

use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

/// Arithmetic the tape needs, implemented by `f64` and [`Dual`]. Running the
/// whole forward + backward pass on duals yields exact Hessian-vector
/// products: the tangent channel of a parameter's adjoint is `(H v)` for the
/// tangent direction `v` seeded into the leaves.
pub trait Scalar:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    /// Construct with an explicit tangent; `f64` discards the tangent.
    fn with_tangent(v: f64, t: f64) -> Self;
    fn primal(self) -> f64;
    fn tangent(self) -> f64;
    fn exp(self) -> Self;
    fn recip(self) -> Self;
    /// Multiply by an f64 constant.
    fn scale(self, c: f64) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;
    #[inline]
    fn from_f64(v: f64) -> f64 {
        v
    }
    #[inline]
    fn with_tangent(v: f64, _t: f64) -> f64 {
        v
    }
    #[inline]
    fn primal(self) -> f64 {
        self
    }
    #[inline]
    fn tangent(self) -> f64 {
        0.0
    }
    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    #[inline]
    fn recip(self) -> f64 {
        1.0 / self
    }
    #[inline]
    fn scale(self, c: f64) -> f64 {
        self * c
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// First-order dual number `v + t eps` with `eps^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub t: f64,
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            t: self.t + o.t,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            t: self.t - o.t,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            t: self.v * o.t + self.t * o.v,
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            t: -self.t,
        }
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Dual) {
        self.v += o.v;
        self.t += o.t;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, o: Dual) {
        self.v -= o.v;
        self.t -= o.t;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, o: Dual) {
        *self = *self * o;
    }
}

impl Scalar for Dual {
    const ZERO: Dual = Dual { v: 0.0, t: 0.0 };
    const ONE: Dual = Dual { v: 1.0, t: 0.0 };
    #[inline]
    fn from_f64(v: f64) -> Dual {
        Dual { v, t: 0.0 }
    }
    #[inline]
    fn with_tangent(v: f64, t: f64) -> Dual {
        Dual { v, t }
    }
    #[inline]
    fn primal(self) -> f64 {
        self.v
    }
    #[inline]
    fn tangent(self) -> f64 {
        self.t
    }
    #[inline]
    fn exp(self) -> Dual {
        let e = self.v.exp();
        Dual {
            v: e,
            t: self.t * e,
        }
    }
    #[inline]
    fn recip(self) -> Dual {
        let r = 1.0 / self.v;
        Dual {
            v: r,
            t: -self.t * r * r,
        }
    }
    #[inline]
    fn scale(self, c: f64) -> Dual {
        Dual {
            v: self.v * c,
            t: self.t * c,
        }
    }
    #[inline]
    fn is_finite(self) -> bool {
        self.v.is_finite() && self.t.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        // d/dx (x^2) at x = 3 with tangent 1.
        let x = Dual { v: 3.0, t: 1.0 };
        let y = x * x;
        assert_eq!(y.v, 9.0);
        assert_eq!(y.t, 6.0);
    }

    #[test]
    fn dual_exp_and_recip() {
        let x = Dual { v: 0.7, t: 1.0 };
        let e = x.exp();
        assert!((e.t - 0.7f64.exp()).abs() < 1e-15);
        let r = x.recip();
        assert!((r.t + 1.0 / (0.7 * 0.7)).abs() < 1e-12);
    }
}
