use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;
use rug::float::Constant;
use rug::Float;
use serde::{Deserialize, Serialize};

/// Significand precision in bits, shared by every value of one solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Precision(u32);

impl Precision {
    /// IEEE double.
    pub const DOUBLE: Precision = Precision(53);
    pub const SERIES: Precision = Precision(256);

    pub fn new(bits: u32) -> Self {
        Precision(bits.max(rug::float::prec_min()).min(1 << 20))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// `2^(-p/2)`, the default relative tolerance for "equal to precision".
    pub fn half_eps(self) -> f64 {
        (-(self.0 as f64) / 2.0).exp2()
    }

    /// `2^(-p)`.
    pub fn eps(self) -> f64 {
        (-(self.0 as f64)).exp2()
    }

    /// Decimal digits needed to print a value at this precision.
    pub fn decimal_digits(self) -> usize {
        (self.0 as usize / 3).max(17)
    }
}

impl Default for Precision {
    fn default() -> Self {
        Precision::SERIES
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} bits", self.0)
    }
}

/// Complex number with MPFR real and imaginary parts.
///
/// Every arithmetic result takes the precision of the left operand, so all
/// values created from one [`Precision`] stay at that precision.
#[derive(Clone, PartialEq)]
pub struct PComplex {
    pub re: Float,
    pub im: Float,
}

impl PComplex {
    pub fn zero(prec: Precision) -> Self {
        PComplex {
            re: Float::new(prec.0),
            im: Float::new(prec.0),
        }
    }

    pub fn one(prec: Precision) -> Self {
        Self::from_f64(prec, 1.0, 0.0)
    }

    pub fn from_f64(prec: Precision, re: f64, im: f64) -> Self {
        PComplex {
            re: Float::with_val(prec.0, re),
            im: Float::with_val(prec.0, im),
        }
    }

    pub fn from_c64(prec: Precision, z: Complex64) -> Self {
        Self::from_f64(prec, z.re, z.im)
    }

    pub fn from_parts(re: Float, im: Float) -> Self {
        PComplex { re, im }
    }

    /// Unit-modulus value `exp(i*theta)` at the given precision.
    pub fn cis(prec: Precision, theta: &Float) -> Self {
        let (s, c) = Float::with_val(prec.0, theta).sin_cos(Float::new(prec.0));
        PComplex { re: c, im: s }
    }

    /// `exp(2*pi*i*num/den)`, computed at full precision.
    pub fn root_of_unity(prec: Precision, num: f64, den: f64) -> Self {
        let mut theta = Float::with_val(prec.0, Constant::Pi);
        theta *= 2.0 * num;
        theta /= den;
        Self::cis(prec, &theta)
    }

    pub fn prec(&self) -> Precision {
        Precision(self.re.prec())
    }

    /// Copy of `self` rounded to another precision.
    pub fn with_prec(&self, prec: Precision) -> Self {
        PComplex {
            re: Float::with_val(prec.0, &self.re),
            im: Float::with_val(prec.0, &self.im),
        }
    }

    pub fn conj(&self) -> Self {
        PComplex {
            re: self.re.clone(),
            im: Float::with_val(self.im.prec(), -&self.im),
        }
    }

    pub fn norm_sqr(&self) -> Float {
        Float::with_val(self.re.prec(), &self.re * &self.re + &self.im * &self.im)
    }

    pub fn abs(&self) -> Float {
        Float::with_val(self.re.prec(), self.re.hypot_ref(&self.im))
    }

    pub fn arg(&self) -> Float {
        Float::with_val(self.re.prec(), self.im.atan2_ref(&self.re))
    }

    pub fn recip(&self) -> Self {
        let p = self.re.prec();
        let den = self.norm_sqr();
        PComplex {
            re: Float::with_val(p, &self.re / &den),
            im: Float::with_val(p, -Float::with_val(p, &self.im / &den)),
        }
    }

    pub fn scale(&self, k: &Float) -> Self {
        let p = self.re.prec();
        PComplex {
            re: Float::with_val(p, &self.re * k),
            im: Float::with_val(p, &self.im * k),
        }
    }

    pub fn scale_f64(&self, k: f64) -> Self {
        let p = self.re.prec();
        PComplex {
            re: Float::with_val(p, &self.re * k),
            im: Float::with_val(p, &self.im * k),
        }
    }

    /// `self += a * b`.
    pub fn add_mul(&mut self, a: &PComplex, b: &PComplex) {
        let p = self.re.prec();
        let re = Float::with_val(p, &a.re * &b.re - &a.im * &b.im);
        let im = Float::with_val(p, &a.re * &b.im + &a.im * &b.re);
        self.re += re;
        self.im += im;
    }

    /// `self -= a * b`.
    pub fn sub_mul(&mut self, a: &PComplex, b: &PComplex) {
        let p = self.re.prec();
        let re = Float::with_val(p, &a.re * &b.re - &a.im * &b.im);
        let im = Float::with_val(p, &a.re * &b.im + &a.im * &b.re);
        self.re -= re;
        self.im -= im;
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    /// `|self|` as `f64`; saturates to infinity outside the double range.
    pub fn abs_f64(&self) -> f64 {
        self.abs().to_f64()
    }

    /// `log2 |self|`, valid far outside the double range. `-inf` for zero.
    pub fn log2_abs(&self) -> f64 {
        let a = self.abs();
        if a.is_zero() {
            return f64::NEG_INFINITY;
        }
        let (mant, exp) = a.to_f64_exp();
        mant.log2() + exp as f64
    }
}

impl fmt::Debug for PComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let z = self.to_c64();
        write!(f, "({:e}{:+e}i)", z.re, z.im)
    }
}

impl fmt::Display for PComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl<'a> Add<&'a PComplex> for &'a PComplex {
    type Output = PComplex;
    fn add(self, rhs: &'a PComplex) -> PComplex {
        let p = self.re.prec();
        PComplex {
            re: Float::with_val(p, &self.re + &rhs.re),
            im: Float::with_val(p, &self.im + &rhs.im),
        }
    }
}

impl<'a> Sub<&'a PComplex> for &'a PComplex {
    type Output = PComplex;
    fn sub(self, rhs: &'a PComplex) -> PComplex {
        let p = self.re.prec();
        PComplex {
            re: Float::with_val(p, &self.re - &rhs.re),
            im: Float::with_val(p, &self.im - &rhs.im),
        }
    }
}

impl<'a> Mul<&'a PComplex> for &'a PComplex {
    type Output = PComplex;
    fn mul(self, rhs: &'a PComplex) -> PComplex {
        let p = self.re.prec();
        PComplex {
            re: Float::with_val(p, &self.re * &rhs.re - &self.im * &rhs.im),
            im: Float::with_val(p, &self.re * &rhs.im + &self.im * &rhs.re),
        }
    }
}

impl<'a> Div<&'a PComplex> for &'a PComplex {
    type Output = PComplex;
    fn div(self, rhs: &'a PComplex) -> PComplex {
        let p = self.re.prec();
        let den = rhs.norm_sqr();
        let re = Float::with_val(p, &self.re * &rhs.re + &self.im * &rhs.im);
        let im = Float::with_val(p, &self.im * &rhs.re - &self.re * &rhs.im);
        PComplex {
            re: re / &den,
            im: im / &den,
        }
    }
}

impl Neg for &PComplex {
    type Output = PComplex;
    fn neg(self) -> PComplex {
        let p = self.re.prec();
        PComplex {
            re: Float::with_val(p, -&self.re),
            im: Float::with_val(p, -&self.im),
        }
    }
}

impl Neg for PComplex {
    type Output = PComplex;
    fn neg(self) -> PComplex {
        PComplex {
            re: -self.re,
            im: -self.im,
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<PComplex> for PComplex {
            type Output = PComplex;
            fn $m(self, rhs: PComplex) -> PComplex {
                (&self).$m(&rhs)
            }
        }
        impl<'a> $tr<&'a PComplex> for PComplex {
            type Output = PComplex;
            fn $m(self, rhs: &'a PComplex) -> PComplex {
                (&self).$m(rhs)
            }
        }
        impl<'a> $tr<PComplex> for &'a PComplex {
            type Output = PComplex;
            fn $m(self, rhs: PComplex) -> PComplex {
                self.$m(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl AddAssign<&PComplex> for PComplex {
    fn add_assign(&mut self, rhs: &PComplex) {
        self.re += &rhs.re;
        self.im += &rhs.im;
    }
}

impl SubAssign<&PComplex> for PComplex {
    fn sub_assign(&mut self, rhs: &PComplex) {
        self.re -= &rhs.re;
        self.im -= &rhs.im;
    }
}

impl MulAssign<&PComplex> for PComplex {
    fn mul_assign(&mut self, rhs: &PComplex) {
        *self = &*self * rhs;
    }
}

/// Largest `|z|` in a slice, as an MPFR value at the slice's precision.
pub fn max_abs(values: &[PComplex], prec: Precision) -> Float {
    let mut m = Float::new(prec.bits());
    for v in values {
        let a = v.abs();
        if a > m {
            m = a;
        }
    }
    m
}
