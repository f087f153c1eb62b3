//! Double-double arithmetic (~31 significant digits): an unevaluated sum of
//! two f64 values, with the usual error-free transformations. Used where f64
//! eigenvalue conditioning breaks down, not as a general numeric type.

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, f64::mul_add(a, b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact product of two f64 values.
    #[inline]
    pub fn from_prod(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, other: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, other.hi);
        let (t1, t2) = two_sum(self.lo, other.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    #[inline]
    pub fn sub(self, other: Dd) -> Dd {
        self.add(other.neg())
    }

    #[inline]
    pub fn mul(self, other: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, other.hi);
        let p2 = p2 + self.hi * other.lo + self.lo * other.hi;
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul_f64(self, f: f64) -> Dd {
        let (p1, p2) = two_prod(self.hi, f);
        let (hi, lo) = quick_two_sum(p1, p2 + self.lo * f);
        Dd { hi, lo }
    }

    /// Multiplication by a power of two is exact.
    #[inline]
    pub fn scale_pow2(self, f: f64) -> Dd {
        Dd { hi: self.hi * f, lo: self.lo * f }
    }

    #[inline]
    pub fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul_f64(q1));
        let q2 = r.hi / other.hi;
        let r = r.sub(other.mul_f64(q2));
        let q3 = r.hi / other.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from_f64(q3))
    }

    #[inline]
    pub fn abs(self) -> f64 {
        self.to_f64().abs()
    }

    /// Square root by Newton refinement of the f64 estimate.
    pub fn sqrt(self) -> Dd {
        if self.hi == 0.0 && self.lo == 0.0 {
            return Dd::ZERO;
        }
        let mut s = Dd::from_f64(self.hi.sqrt());
        for _ in 0..2 {
            s = s.add(self.div(s)).scale_pow2(0.5);
        }
        s
    }
}

/// Complex number with double-double components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CDd {
    pub re: Dd,
    pub im: Dd,
}

impl CDd {
    pub const ZERO: CDd = CDd { re: Dd::ZERO, im: Dd::ZERO };

    pub fn new(re: Dd, im: Dd) -> Self {
        CDd { re, im }
    }

    pub fn from_f64(re: f64, im: f64) -> Self {
        CDd { re: Dd::from_f64(re), im: Dd::from_f64(im) }
    }

    pub fn to_c64(self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn add(self, o: CDd) -> CDd {
        CDd { re: self.re.add(o.re), im: self.im.add(o.im) }
    }

    pub fn sub(self, o: CDd) -> CDd {
        CDd { re: self.re.sub(o.re), im: self.im.sub(o.im) }
    }

    pub fn neg(self) -> CDd {
        CDd { re: self.re.neg(), im: self.im.neg() }
    }

    pub fn mul(self, o: CDd) -> CDd {
        CDd {
            re: self.re.mul(o.re).sub(self.im.mul(o.im)),
            im: self.re.mul(o.im).add(self.im.mul(o.re)),
        }
    }

    pub fn div(self, o: CDd) -> CDd {
        let den = o.re.mul(o.re).add(o.im.mul(o.im));
        let num = self.mul(CDd { re: o.re, im: o.im.neg() });
        CDd { re: num.re.div(den), im: num.im.div(den) }
    }

    pub fn scale_pow2(self, f: f64) -> CDd {
        CDd { re: self.re.scale_pow2(f), im: self.im.scale_pow2(f) }
    }

    /// |z| estimated in plain f64 (enough for thresholds).
    pub fn abs_f64(self) -> f64 {
        self.re.to_f64().hypot(self.im.to_f64())
    }

    pub fn is_zero(self) -> bool {
        self.re.hi == 0.0 && self.re.lo == 0.0 && self.im.hi == 0.0 && self.im.lo == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_recovers_lost_bits() {
        let a = Dd::from_f64(1.0);
        let b = Dd::from_f64(1e-25);
        let s = a.add(b).sub(a);
        assert!((s.to_f64() - 1e-25).abs() < 1e-40);
    }

    #[test]
    fn prod_is_error_free() {
        let x = 1.0 + 2f64.powi(-30);
        let p = Dd::from_prod(x, x);
        // (1 + 2^-30)^2 = 1 + 2^-29 + 2^-60 exactly
        let expect_hi = 1.0 + 2f64.powi(-29);
        assert_eq!(p.hi, expect_hi);
        assert_eq!(p.lo, 2f64.powi(-60));
    }

    #[test]
    fn division_round_trip() {
        let a = Dd::from_f64(3.0);
        let b = Dd::from_f64(7.0);
        let q = a.div(b).mul(b).sub(a);
        assert!(q.abs() < 1e-30);
    }

    #[test]
    fn sqrt_round_trip() {
        let x = Dd::from_f64(184756.0); // C(20,10)
        let r = x.sqrt().mul(x.sqrt()).sub(x);
        assert!(r.abs() < 1e-25);
    }

    #[test]
    fn complex_division_round_trip() {
        let a = CDd::from_f64(1.25, -2.5);
        let b = CDd::from_f64(-0.75, 0.3);
        let r = a.div(b).mul(b).sub(a);
        assert!(r.abs_f64() < 1e-29);
    }
}
