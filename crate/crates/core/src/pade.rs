//! Padé approximants of a coefficient stream, built either from the
//! denominator linear system or from the corresponding C-fraction, plus
//! evaluation and zero/pole extraction.

use std::fmt::Write as _;

use num_complex::Complex64;
use rug::Float;
use thiserror::Error;

use crate::helm::decimal;
use crate::numerics::{lu_factor, lu_solve, poly_roots, CMatrix, NumericsError, PComplex, Polynomial, Precision};

#[derive(Debug, Error, PartialEq)]
pub enum PadeError {
    #[error("need {needed} coefficients, got {got}")]
    TooFewCoefficients { needed: usize, got: usize },
    #[error("empty coefficient sequence")]
    Empty,
    #[error("evaluation point is within rounding distance of a pole")]
    NearPole,
    #[error("convergent {requested} exceeds continued-fraction depth {depth}")]
    BeyondDepth { requested: usize, depth: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Rational approximant `numerator(s) / denominator(s)` with
/// `denominator(0) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PadeApproximant {
    /// Requested degrees.
    pub l: usize,
    pub m: usize,
    numerator: Polynomial,
    denominator: Polynomial,
    /// Denominator degree actually used after degeneracy fallback.
    pub effective_m: usize,
}

impl PadeApproximant {
    pub fn numerator(&self) -> &Polynomial {
        &self.numerator
    }

    pub fn denominator(&self) -> &Polynomial {
        &self.denominator
    }

    /// Degrees of the trimmed numerator and denominator.
    pub fn effective_degree(&self) -> (usize, usize) {
        (self.numerator.degree(), self.denominator.degree())
    }

    pub fn is_defective(&self) -> bool {
        self.effective_m < self.m
    }

    pub fn precision(&self) -> Precision {
        self.numerator.precision()
    }

    /// `numerator(s) / denominator(s)`; refuses points where the denominator
    /// vanishes to within `2^(-p/2)` of its coefficient scale.
    pub fn eval(&self, s: &PComplex) -> Result<PComplex, PadeError> {
        let den = self.denominator.eval(s);
        let scale = self.denominator.abs_eval(s);
        let tol = Float::with_val(scale.prec(), &scale * self.precision().half_eps());
        if den.abs() <= tol {
            return Err(PadeError::NearPole);
        }
        Ok(&self.numerator.eval(s) / &den)
    }

    /// First `count` Taylor coefficients of the approximant.
    pub fn taylor(&self, count: usize) -> Vec<PComplex> {
        let prec = self.precision();
        let a = self.numerator.coeffs();
        let b = self.denominator.coeffs();
        let b0 = b[0].recip();
        let mut out: Vec<PComplex> = Vec::with_capacity(count);
        for n in 0..count {
            let mut acc = a.get(n).cloned().unwrap_or_else(|| PComplex::zero(prec));
            for j in 1..=n.min(b.len() - 1) {
                acc.sub_mul(&b[j], &out[n - j]);
            }
            out.push(&acc * &b0);
        }
        out
    }
}

/// `2^k` closest to the apparent radius of convergence of `coeffs`, used to
/// balance the denominator system. Exact, so rescaling adds no rounding.
fn balancing_exponent(coeffs: &[PComplex]) -> i64 {
    let nz: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(n, c)| (n, c.log2_abs()))
        .collect();
    match (nz.first(), nz.last()) {
        (Some(&(j, lj)), Some(&(k, lk))) if k > j => (-(lk - lj) / (k - j) as f64).round() as i64,
        _ => 0,
    }
}

fn scale_pow2(z: &PComplex, e: i64) -> PComplex {
    let mut out = z.clone();
    let e = e as i32;
    out.re <<= e;
    out.im <<= e;
    out
}

/// PA[L/M] from `coeffs[0..=L+M]`. When the denominator system is singular
/// to working precision the denominator degree is lowered until it is not;
/// the degree used is recorded in `effective_m`.
pub fn pade_from_series(coeffs: &[PComplex], l: usize, m: usize) -> Result<PadeApproximant, PadeError> {
    if coeffs.len() < l + m + 1 {
        return Err(PadeError::TooFewCoefficients {
            needed: l + m + 1,
            got: coeffs.len(),
        });
    }
    let prec = coeffs[0].prec();
    // Work in t = s / 2^e so the coefficients neither grow nor decay.
    let e = balancing_exponent(&coeffs[..=l + m]);
    let scaled: Vec<PComplex> = coeffs[..=l + m]
        .iter()
        .enumerate()
        .map(|(n, c)| scale_pow2(c, e * n as i64))
        .collect();
    let at = |k: isize| -> PComplex {
        if k < 0 {
            PComplex::zero(prec)
        } else {
            scaled[k as usize].clone()
        }
    };

    let mut mm = m;
    let b = loop {
        if mm == 0 {
            break vec![PComplex::one(prec)];
        }
        let t = CMatrix::from_fn(mm, mm, |i, j| at(l as isize + i as isize - j as isize));
        match lu_factor(&t) {
            Ok(lu) => {
                let rhs: Vec<PComplex> = (0..mm).map(|i| -at((l + 1 + i) as isize)).collect();
                let mut b = vec![PComplex::one(prec)];
                b.extend(lu_solve(&lu, &rhs));
                break b;
            }
            Err(NumericsError::Singular { .. }) => mm -= 1,
            Err(other) => return Err(other.into()),
        }
    };
    let a: Vec<PComplex> = (0..=l)
        .map(|k| {
            let mut acc = PComplex::zero(prec);
            for (j, bj) in b.iter().enumerate().take(k.min(mm) + 1) {
                acc.add_mul(bj, &scaled[k - j]);
            }
            acc
        })
        .collect();
    // Back to the original variable: coefficient k picks up 2^(-e k).
    let unscale = |v: Vec<PComplex>| -> Vec<PComplex> {
        v.into_iter()
            .enumerate()
            .map(|(k, z)| scale_pow2(&z, -e * k as i64))
            .collect()
    };
    Ok(PadeApproximant {
        l,
        m,
        numerator: Polynomial::new(unscale(a)),
        denominator: Polynomial::new(unscale(b)),
        effective_m: mm,
    })
}

/// `c0 + a1 s / (1 + a2 s / (1 + a3 s / (1 + ...)))`.
#[derive(Clone, Debug, PartialEq)]
pub struct CFraction {
    pub c0: PComplex,
    /// `a1, a2, ...`; `a1` is the linear series coefficient.
    pub partial_numerators: Vec<PComplex>,
    /// The construction stopped because the next partial numerator vanished
    /// (the fraction terminates) rather than because coefficients ran out.
    pub terminated: bool,
}

impl CFraction {
    pub fn depth(&self) -> usize {
        self.partial_numerators.len()
    }

    pub fn precision(&self) -> Precision {
        self.c0.prec()
    }

    /// Values `A_k(s) / B_k(s)` of every convergent `k = 0..=depth`, by the
    /// three-term recurrence evaluated at the point `s`. `None` where
    /// `B_k(s)` vanishes.
    pub fn convergent_values(&self, s: &PComplex) -> Vec<Option<PComplex>> {
        let prec = self.precision();
        let (mut a_prev, mut b_prev) = (PComplex::one(prec), PComplex::zero(prec));
        let (mut a_cur, mut b_cur) = (self.c0.clone(), PComplex::one(prec));
        let mut out = vec![Some(self.c0.clone())];
        for ak in &self.partial_numerators {
            let w = ak * s;
            let a_next = &a_cur + &(&w * &a_prev);
            let b_next = &b_cur + &(&w * &b_prev);
            a_prev = std::mem::replace(&mut a_cur, a_next);
            b_prev = std::mem::replace(&mut b_cur, b_next);
            out.push((!b_cur.is_zero()).then(|| &a_cur / &b_cur));
            // Keep magnitudes bounded; only the ratio matters.
            let e = -(b_cur.log2_abs().max(a_cur.log2_abs()).round() as i64);
            if e.abs() > 64 {
                a_cur = scale_pow2(&a_cur, e);
                b_cur = scale_pow2(&b_cur, e);
                a_prev = scale_pow2(&a_prev, e);
                b_prev = scale_pow2(&b_prev, e);
            }
        }
        out
    }
}

/// C-fraction of the series by successive reciprocals, carried out on a
/// numerator/denominator pair so each level costs one pass over the
/// remaining coefficients. Stops early if a partial numerator vanishes.
pub fn cfraction_from_series(coeffs: &[PComplex], depth: usize) -> Result<CFraction, PadeError> {
    let Some(c0) = coeffs.first() else {
        return Err(PadeError::Empty);
    };
    let prec = c0.prec();
    let depth = depth.min(coeffs.len() - 1);
    let mut cf = CFraction {
        c0: c0.clone(),
        partial_numerators: Vec::with_capacity(depth),
        terminated: false,
    };
    if depth == 0 {
        return Ok(cf);
    }
    let a1 = coeffs[1].clone();
    if a1.is_zero() {
        cf.terminated = coeffs[2..].iter().all(|c| c.is_zero());
        return Ok(cf);
    }
    cf.partial_numerators.push(a1.clone());
    // The tail after level k is g = p / q with p(0) = q(0) = 1.
    let inv = a1.recip();
    let mut p: Vec<PComplex> = coeffs[1..].iter().map(|c| c * &inv).collect();
    let mut q: Vec<PComplex> = vec![PComplex::one(prec)];
    let cutoff = (-(prec.bits() as f64) * 0.9).exp2();
    while cf.depth() < depth && p.len() > 1 {
        // 1/g = 1 + a s g', with g' = ((q - p) / (a s)) / p.
        let diff = |n: usize| -> PComplex {
            let qn = q.get(n).cloned().unwrap_or_else(|| PComplex::zero(prec));
            &qn - &p[n]
        };
        let d1 = diff(1);
        let scale = p[1].abs_f64().max(q.get(1).map_or(0.0, |z| z.abs_f64()));
        if d1.is_zero() || d1.abs_f64() <= cutoff * scale {
            cf.terminated = true;
            break;
        }
        let a = d1.clone();
        let inv = a.recip();
        let next: Vec<PComplex> = (1..p.len()).map(|n| &diff(n) * &inv).collect();
        q = std::mem::replace(&mut p, next);
        q.truncate(p.len());
        cf.partial_numerators.push(a);
    }
    Ok(cf)
}

/// Convergent `A_k / B_k` as explicit polynomials, normalized `B_k(0) = 1`.
/// `k = 2M` is the diagonal PA[M/M].
pub fn convergent(cf: &CFraction, k: usize) -> Result<PadeApproximant, PadeError> {
    if k > cf.depth() {
        return Err(PadeError::BeyondDepth {
            requested: k,
            depth: cf.depth(),
        });
    }
    let prec = cf.precision();
    let mut a_prev = vec![PComplex::one(prec)];
    let mut b_prev = vec![PComplex::zero(prec)];
    let mut a_cur = vec![cf.c0.clone()];
    let mut b_cur = vec![PComplex::one(prec)];
    let step = |cur: &[PComplex], prev: &[PComplex], ak: &PComplex| -> Vec<PComplex> {
        let len = cur.len().max(prev.len() + 1);
        let mut out = vec![PComplex::zero(prec); len];
        for (n, z) in cur.iter().enumerate() {
            out[n] += z;
        }
        for (n, z) in prev.iter().enumerate() {
            out[n + 1].add_mul(ak, z);
        }
        out
    };
    for ak in &cf.partial_numerators[..k] {
        let a_next = step(&a_cur, &a_prev, ak);
        let b_next = step(&b_cur, &b_prev, ak);
        a_prev = std::mem::replace(&mut a_cur, a_next);
        b_prev = std::mem::replace(&mut b_cur, b_next);
    }
    Ok(PadeApproximant {
        l: k.div_ceil(2),
        m: k / 2,
        numerator: Polynomial::new(a_cur),
        denominator: Polynomial::new(b_cur),
        effective_m: k / 2,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Root {
    pub value: PComplex,
    /// Part of a zero/pole pair closer than `10^(-p/8)`.
    pub froissart: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroPoleSet {
    pub zeros: Vec<Root>,
    pub poles: Vec<Root>,
    pub l: usize,
    pub m: usize,
    pub bus: Option<String>,
    pub tag: Option<String>,
}

impl ZeroPoleSet {
    /// Non-flagged poles.
    pub fn genuine_poles(&self) -> impl Iterator<Item = &PComplex> {
        self.poles.iter().filter(|r| !r.froissart).map(|r| &r.value)
    }

    /// Smallest real part among genuine poles lying within `width` of the
    /// positive real axis.
    pub fn nearest_positive_real_pole(&self, width: f64) -> Option<f64> {
        self.genuine_poles()
            .map(|z| z.to_c64())
            .filter(|z| z.re > 0.0 && z.im.abs() <= width)
            .map(|z| z.re)
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Genuine pole of smallest modulus.
    pub fn nearest_pole(&self) -> Option<Complex64> {
        self.genuine_poles()
            .map(|z| z.to_c64())
            .min_by(|a, b| a.norm().total_cmp(&b.norm()))
    }

    pub fn csv_header() -> &'static str {
        "bus,L,M,kind,re,im,froissart_flag\n"
    }

    /// Rows for the zero-pole CSV, without the header.
    pub fn csv_rows(&self) -> String {
        let bus = self.bus.as_deref().unwrap_or("");
        let mut out = String::new();
        for (kind, roots) in [("zero", &self.zeros), ("pole", &self.poles)] {
            for r in roots {
                let digits = r.value.prec().decimal_digits();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    bus,
                    self.l,
                    self.m,
                    kind,
                    decimal(&r.value.re, digits),
                    decimal(&r.value.im, digits),
                    u8::from(r.froissart)
                );
            }
        }
        out
    }
}

fn roots_of(q: &Polynomial) -> Result<Vec<PComplex>, PadeError> {
    if q.degree() == 0 {
        return Ok(Vec::new());
    }
    Ok(poly_roots(q)?)
}

/// Zeros and poles of `pa`, with near-coincident zero/pole pairs flagged.
pub fn zero_pole(pa: &PadeApproximant) -> Result<ZeroPoleSet, PadeError> {
    let zeros = roots_of(pa.numerator())?;
    let poles = roots_of(pa.denominator())?;
    let tol = 10f64.powf(-(pa.precision().bits() as f64) / 8.0);
    let mut zf = vec![false; zeros.len()];
    let mut pf = vec![false; poles.len()];
    for (i, z) in zeros.iter().enumerate() {
        for (j, p) in poles.iter().enumerate() {
            let d = (z - p).abs_f64();
            if d <= tol * p.abs_f64().max(1.0) {
                zf[i] = true;
                pf[j] = true;
            }
        }
    }
    let wrap = |v: Vec<PComplex>, f: Vec<bool>| {
        v.into_iter()
            .zip(f)
            .map(|(value, froissart)| Root { value, froissart })
            .collect()
    };
    Ok(ZeroPoleSet {
        zeros: wrap(zeros, zf),
        poles: wrap(poles, pf),
        l: pa.l,
        m: pa.m,
        bus: None,
        tag: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::helm::ratio_diagnostics;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p() -> Precision {
        Precision::new(256)
    }

    fn reals(xs: &[f64]) -> Vec<PComplex> {
        xs.iter().map(|&x| PComplex::from_f64(p(), x, 0.0)).collect()
    }

    fn c64s(v: &[PComplex]) -> Vec<Complex64> {
        v.iter().map(|z| z.to_c64()).collect()
    }

    fn random_series(rng: &mut ChaCha8Rng, len: usize) -> Vec<PComplex> {
        (0..len)
            .map(|_| PComplex::from_f64(p(), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    /// Coefficients of `sqrt(1 - s/sigma)`.
    fn sqrt_branch(sigma: Complex64, len: usize, prec: Precision) -> Vec<PComplex> {
        let inv = PComplex::from_c64(prec, -sigma.inv());
        let mut out = vec![PComplex::one(prec)];
        for n in 1..len {
            // binom(1/2, n) = binom(1/2, n-1) * (1/2 - (n-1)) / n
            let k = Float::with_val(prec.bits(), 0.5 - (n as f64 - 1.0)) / n as u32;
            let next = &out[n - 1].scale(&k) * &inv;
            out.push(next);
        }
        out
    }

    fn max_rel_gap(a: &[PComplex], b: &[PComplex]) -> f64 {
        let scale = a.iter().chain(b).map(|z| z.abs_f64()).fold(0.0, f64::max).max(1e-300);
        let len = a.len().max(b.len());
        (0..len)
            .map(|k| {
                let za = a.get(k).cloned().unwrap_or_else(|| PComplex::zero(p()));
                let zb = b.get(k).cloned().unwrap_or_else(|| PComplex::zero(p()));
                (&za - &zb).abs_f64() / scale
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn geometric_one_one() {
        let pa = pade_from_series(&reals(&[1.0, 1.0, 1.0]), 1, 1).unwrap();
        assert_eq!(c64s(pa.numerator().coeffs()), vec![Complex64::new(1.0, 0.0)]);
        assert_eq!(
            c64s(pa.denominator().coeffs()),
            vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]
        );
        let v = pa.eval(&PComplex::from_f64(p(), 0.5, 0.0)).unwrap();
        assert_eq!(v.to_c64(), Complex64::new(2.0, 0.0));
        assert!(matches!(pa.eval(&PComplex::one(p())), Err(PadeError::NearPole)));
    }

    #[test]
    fn one_one_matches_closed_form_convergent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_series(&mut rng, 3);
        let pa = pade_from_series(&c, 1, 1).unwrap();
        let k1 = -(&c[2] / &c[1]);
        let num1 = &(&c[0] * &k1) + &c[1];
        let expect_num = [c[0].clone(), num1];
        let expect_den = [PComplex::one(p()), k1];
        assert!(max_rel_gap(pa.numerator().coeffs(), &expect_num) < 1e-70);
        assert!(max_rel_gap(pa.denominator().coeffs(), &expect_den) < 1e-70);
        let conv = convergent(&cfraction_from_series(&c, 2).unwrap(), 2).unwrap();
        assert!(max_rel_gap(conv.numerator().coeffs(), &expect_num) < 1e-70);
    }

    #[test]
    fn exponential_two_two_matches_through_fourth_order() {
        let mut fact = 1.0;
        let c: Vec<f64> = (0..5)
            .map(|n| {
                if n > 0 {
                    fact *= n as f64;
                }
                1.0 / fact
            })
            .collect();
        let c = reals(&c);
        let pa = pade_from_series(&c, 2, 2).unwrap();
        assert!(max_rel_gap(&pa.taylor(5), &c) < 1e-70);
    }

    #[test]
    fn value_at_origin_is_leading_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = random_series(&mut rng, 9);
        let pa = pade_from_series(&c, 4, 4).unwrap();
        let v = pa.eval(&PComplex::zero(p())).unwrap();
        assert!((&v - &c[0]).abs_f64() < 1e-70);
    }

    #[test]
    fn geometric_cfraction_terminates() {
        let cf = cfraction_from_series(&reals(&[1.0, 1.0, 1.0, 1.0]), 3).unwrap();
        assert_eq!(c64s(&cf.partial_numerators), vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
        assert!(cf.terminated);
    }

    #[test]
    fn second_partial_numerator_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_series(&mut rng, 4);
        let cf = cfraction_from_series(&c, 3).unwrap();
        let k2 = &(&(&c[2] * &c[2]) - &(&c[1] * &c[3])) / &(&c[1] * &c[2]);
        assert!((&cf.partial_numerators[2] - &k2).abs_f64() < 1e-70 * k2.abs_f64());
    }

    #[test]
    fn constant_series_has_no_partial_numerators() {
        let cf = cfraction_from_series(&reals(&[2.5]), 4).unwrap();
        assert_eq!(cf.depth(), 0);
        let k0 = convergent(&cf, 0).unwrap();
        assert_eq!(k0.effective_degree(), (0, 0));
        assert_eq!(k0.numerator().coeffs()[0].to_c64().re, 2.5);
        assert!(matches!(convergent(&cf, 1), Err(PadeError::BeyondDepth { .. })));

        let flat = cfraction_from_series(&reals(&[2.5, 0.0, 0.0]), 2).unwrap();
        assert_eq!(flat.depth(), 0);
        assert!(flat.terminated);
    }

    #[test]
    fn first_convergents() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = random_series(&mut rng, 6);
        let cf = cfraction_from_series(&c, 5).unwrap();
        let k1 = convergent(&cf, 1).unwrap();
        assert!(max_rel_gap(k1.numerator().coeffs(), &c[..2]) < 1e-70);
        assert_eq!(k1.effective_degree().1, 0);
        let k3 = convergent(&cf, 3).unwrap();
        let pa = pade_from_series(&c, 2, 1).unwrap();
        assert!(max_rel_gap(k3.numerator().coeffs(), pa.numerator().coeffs()) < 1e-60);
        assert!(max_rel_gap(k3.denominator().coeffs(), pa.denominator().coeffs()) < 1e-60);
    }

    #[test]
    fn convergent_values_match_polynomial_convergents() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = random_series(&mut rng, 13);
        let cf = cfraction_from_series(&c, 12).unwrap();
        let s = PComplex::from_f64(p(), 0.3, -0.2);
        let values = cf.convergent_values(&s);
        for (k, v) in values.iter().enumerate() {
            let direct = convergent(&cf, k).unwrap().eval(&s).unwrap();
            let v = v.as_ref().unwrap();
            assert!((v - &direct).abs_f64() < 1e-60 * direct.abs_f64().max(1.0));
        }
    }

    #[test]
    fn defective_system_lowers_denominator_degree() {
        // Exact geometric data makes every M >= 2 system singular.
        let c = reals(&[1.0; 11]);
        let pa = pade_from_series(&c, 5, 5).unwrap();
        assert!(pa.is_defective());
        assert_eq!(pa.effective_m, 1);
        assert_eq!(pa.effective_degree(), (0, 1));
    }

    #[test]
    fn simple_zero_and_pole() {
        // (s - 2) / (s - 3), normalized to b0 = 1.
        let num = reals(&[2.0 / 3.0, -1.0 / 3.0]);
        let den = reals(&[1.0, -1.0 / 3.0]);
        let pa = PadeApproximant {
            l: 1,
            m: 1,
            numerator: Polynomial::new(num),
            denominator: Polynomial::new(den),
            effective_m: 1,
        };
        let zp = zero_pole(&pa).unwrap();
        assert_eq!(zp.zeros.len(), 1);
        assert!((zp.zeros[0].value.to_c64() - Complex64::new(2.0, 0.0)).norm() < 1e-60);
        assert!((zp.poles[0].value.to_c64() - Complex64::new(3.0, 0.0)).norm() < 1e-60);
        assert!(!zp.zeros[0].froissart && !zp.poles[0].froissart);
    }

    #[test]
    fn noisy_geometric_has_one_genuine_pole() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for m in 2..=5 {
            let c: Vec<PComplex> = (0..=2 * m)
                .map(|_| PComplex::from_f64(p(), 1.0, 0.0) + &PComplex::from_f64(p(), rng.gen_range(-1.0..1.0) * 1e-60, rng.gen_range(-1.0..1.0) * 1e-60))
                .collect();
            let pa = pade_from_series(&c, m, m).unwrap();
            let zp = zero_pole(&pa).unwrap();
            let genuine: Vec<Complex64> = zp.genuine_poles().map(|z| z.to_c64()).collect();
            assert_eq!(genuine.len(), 1, "M = {m}: {:?}", zp.poles);
            assert!((genuine[0] - Complex64::new(1.0, 0.0)).norm() < 1e-20);
            assert_eq!(zp.poles.iter().filter(|r| r.froissart).count(), pa.effective_degree().1 - 1);
        }
    }

    #[test]
    fn zero_pole_csv_layout() {
        let pa = pade_from_series(&reals(&[1.0, 0.5, 0.25]), 1, 1).unwrap();
        let mut zp = zero_pole(&pa).unwrap();
        zp.bus = Some("bus6".into());
        let rows = zp.csv_rows();
        assert!(rows.starts_with("bus6,1,1,pole,"), "{rows}");
        assert!(rows.trim_end().ends_with(",0"));
    }

    #[test]
    fn sqrt_branch_pole_and_fabry_agree() {
        for sigma in [Complex64::new(1.5, 0.0), Complex64::new(-0.5, 0.0), Complex64::from_polar(0.8, 1.0)] {
            let c = sqrt_branch(sigma, 61, p());
            let pa = pade_from_series(&c, 30, 30).unwrap();
            let zp = zero_pole(&pa).unwrap();
            let nearest = zp.nearest_pole().unwrap();
            let angle = (nearest / sigma).arg().abs();
            assert!(angle < 1e-6, "sigma {sigma}: nearest pole {nearest}");
            assert!(nearest.norm() >= sigma.norm() * (1.0 - 1e-9));
            assert!((nearest - sigma).norm() < 0.05 * sigma.norm());
            let sb = ratio_diagnostics(&c).branch_point.unwrap();
            assert!((sb - sigma).norm() < 0.05 * sigma.norm(), "sigma {sigma}: sb {sb}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn series_strategy(max_len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
            proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..=max_len)
        }

        fn to_series(v: &[(f64, f64)]) -> Vec<PComplex> {
            v.iter().map(|&(re, im)| PComplex::from_f64(p(), re, im)).collect()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn denominator_times_series_matches_numerator(raw in series_strategy(13), split in 0usize..100) {
                let c = to_series(&raw);
                let total = c.len() - 1;
                let m = split % (total + 1);
                let l = total - m;
                let pa = pade_from_series(&c, l, m).unwrap();
                prop_assume!(!pa.is_defective());
                let b = pa.denominator().coeffs();
                let a = pa.numerator().coeffs();
                let scale = c.iter().map(|z| z.abs_f64()).fold(0.0, f64::max)
                    * b.iter().map(|z| z.abs_f64()).sum::<f64>();
                for n in 0..=l + m {
                    let mut conv = PComplex::zero(p());
                    for (j, bj) in b.iter().enumerate().take(n + 1) {
                        conv.add_mul(bj, &c[n - j]);
                    }
                    let target = if n <= l { a.get(n).cloned().unwrap_or_else(|| PComplex::zero(p())) } else { PComplex::zero(p()) };
                    prop_assert!((&conv - &target).abs_f64() <= scale * p().half_eps());
                }
            }

            #[test]
            fn diagonal_convergent_equals_diagonal_pade(raw in series_strategy(13)) {
                let c = to_series(&raw);
                let m = (c.len() - 1) / 2;
                let cf = cfraction_from_series(&c, 2 * m).unwrap();
                prop_assume!(cf.depth() == 2 * m);
                let k = convergent(&cf, 2 * m).unwrap();
                let pa = pade_from_series(&c, m, m).unwrap();
                prop_assert!(max_rel_gap(k.numerator().coeffs(), pa.numerator().coeffs()) < 1e-40);
                prop_assert!(max_rel_gap(k.denominator().coeffs(), pa.denominator().coeffs()) < 1e-40);
            }

            #[test]
            fn inside_disk_agrees_with_partial_sum(ratio in 0.2f64..0.9, m in 2usize..8, frac in 0.0f64..0.9) {
                // Two-pole rational series, radius 1/ratio.
                let c: Vec<PComplex> = (0..=2 * m + 1)
                    .map(|n| PComplex::from_f64(p(), ratio.powi(n as i32) + (-0.5 * ratio).powi(n as i32), 0.0))
                    .collect();
                let s = PComplex::from_f64(p(), frac / ratio * 0.9, 0.0);
                let pa = pade_from_series(&c[..=2 * m], m, m).unwrap();
                let v = pa.eval(&s).unwrap();
                let mut partial = PComplex::zero(p());
                let mut power = PComplex::one(p());
                for cn in &c[..=2 * m] {
                    partial.add_mul(cn, &power);
                    power = &power * &s;
                }
                // Next-term magnitude of each geometric component, widened by
                // the tail factor.
                let q = ratio * s.abs_f64();
                let next = q.powi(2 * m as i32 + 1) * (1.0 + 0.5f64.powi(2 * m as i32 + 1));
                prop_assert!((&v - &partial).abs_f64() <= next / (1.0 - q) * 1.01 + 1e-60);
            }
        }
    }
}
