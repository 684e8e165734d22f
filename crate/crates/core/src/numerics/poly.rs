use rug::{Assign, Float};

use super::{NumericsError, PComplex, Precision};

/// Polynomial with ascending-degree coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<PComplex>,
}

impl Polynomial {
    /// Builds a polynomial, dropping exactly-zero leading coefficients.
    pub fn new(mut coeffs: Vec<PComplex>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs at least one coefficient");
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    /// Monic product `prod (s - r)`.
    pub fn from_roots(roots: &[PComplex], prec: Precision) -> Self {
        let mut coeffs = vec![PComplex::one(prec)];
        for r in roots {
            let mut next = vec![PComplex::zero(prec); coeffs.len() + 1];
            for (k, c) in coeffs.iter().enumerate() {
                next[k + 1] += c;
                next[k].sub_mul(c, r);
            }
            coeffs = next;
        }
        Polynomial::new(coeffs)
    }

    pub fn coeffs(&self) -> &[PComplex] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_zero()
    }

    pub fn precision(&self) -> Precision {
        self.coeffs[0].prec()
    }

    pub fn leading(&self) -> &PComplex {
        self.coeffs.last().unwrap()
    }

    /// Horner evaluation.
    pub fn eval(&self, s: &PComplex) -> PComplex {
        let mut acc = self.leading().clone();
        let mut scratch = HornerScratch::new(self.precision());
        for c in self.coeffs.iter().rev().skip(1) {
            scratch.step(&mut acc, s, c);
        }
        acc
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_derivative(&self, s: &PComplex) -> (PComplex, PComplex) {
        let prec = self.precision();
        let mut val = self.leading().clone();
        let mut der = PComplex::zero(prec);
        let mut scratch = HornerScratch::new(prec);
        for c in self.coeffs.iter().rev().skip(1) {
            scratch.step(&mut der, s, &val);
            scratch.step(&mut val, s, c);
        }
        (val, der)
    }

    /// `sum |a_k| |s|^k`, the scale against which `|q(s)|` is judged.
    pub fn abs_eval(&self, s: &PComplex) -> Float {
        let r = s.abs();
        let mut acc = self.leading().abs();
        for c in self.coeffs.iter().rev().skip(1) {
            acc *= &r;
            acc += c.abs();
        }
        acc
    }

    /// Copy with every coefficient rounded to `prec`.
    pub fn with_prec(&self, prec: Precision) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c.with_prec(prec)).collect())
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> Float {
        let mut s = Float::new(self.precision().bits());
        for c in &self.coeffs {
            s += c.norm_sqr();
        }
        s.sqrt()
    }
}

/// Temporaries for `acc <- acc * s + c` without per-step allocation.
struct HornerScratch {
    t1: Float,
    t2: Float,
    t3: Float,
}

impl HornerScratch {
    fn new(prec: Precision) -> Self {
        let p = prec.bits();
        HornerScratch {
            t1: Float::new(p),
            t2: Float::new(p),
            t3: Float::new(p),
        }
    }

    fn step(&mut self, acc: &mut PComplex, s: &PComplex, c: &PComplex) {
        self.t1.assign(&acc.re * &s.re);
        self.t2.assign(&acc.im * &s.im);
        self.t3.assign(&acc.re * &s.im);
        acc.im *= &s.re;
        acc.im += &self.t3;
        acc.im += &c.im;
        acc.re.assign(&self.t1 - &self.t2);
        acc.re += &c.re;
    }
}

/// Tuning for [`poly_roots`].
#[derive(Clone, Copy, Debug)]
pub struct RootOptions {
    pub max_sweeps: usize,
    pub polish_steps: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            max_sweeps: 500,
            polish_steps: 8,
        }
    }
}

pub fn poly_roots(q: &Polynomial) -> Result<Vec<PComplex>, NumericsError> {
    poly_roots_with(q, RootOptions::default())
}

/// All roots of `q` by simultaneous Aberth-Ehrlich iteration at the
/// polynomial's precision, followed by Newton polishing of each root.
///
/// A root is accepted when its backward error `|q(z)| / sum |a_k||z|^k`
/// is below `2^(-p/2)`.
pub fn poly_roots_with(q: &Polynomial, opts: RootOptions) -> Result<Vec<PComplex>, NumericsError> {
    let prec = q.precision();
    if q.degree() == 0 {
        return Err(NumericsError::ConstantPolynomial);
    }
    // Exact zeros at the origin are split off first.
    let zeros_at_origin = q.coeffs.iter().take_while(|c| c.is_zero()).count();
    let reduced = Polynomial::new(q.coeffs[zeros_at_origin..].to_vec());
    let mut roots = vec![PComplex::zero(prec); zeros_at_origin];
    if reduced.degree() == 0 {
        return Ok(roots);
    }
    roots.extend(aberth(&reduced, opts)?);
    Ok(roots)
}

fn aberth(q: &Polynomial, opts: RootOptions) -> Result<Vec<PComplex>, NumericsError> {
    let prec = q.precision();
    let d = q.degree();
    if d == 1 {
        return Ok(vec![-(&q.coeffs[0] / &q.coeffs[1])]);
    }
    let accept = prec.half_eps();
    // Most sweeps are spent travelling from the initial circle; do that at
    // double precision and refine through doubling precisions.
    let mut stage = Precision::DOUBLE;
    let mut z = initial_guesses(&q.with_prec(stage));
    while stage.bits() < prec.bits() {
        let coarse = q.with_prec(stage);
        aberth_sweeps(&coarse, &deriv_of(&coarse), &mut z, opts.max_sweeps);
        stage = Precision::new((stage.bits() * 2).min(prec.bits()));
        z = z.iter().map(|zk| zk.with_prec(stage)).collect();
    }
    aberth_sweeps(q, &deriv_of(q), &mut z, opts.max_sweeps);
    let errors = polish(q, &mut z, opts.polish_steps);

    let failed: Vec<usize> = errors
        .iter()
        .enumerate()
        .filter(|(_, e)| !(**e < accept))
        .map(|(k, _)| k)
        .collect();
    if failed.is_empty() {
        Ok(z)
    } else {
        Err(NumericsError::RootsNotConverged {
            failed,
            degree: d,
        })
    }
}

fn deriv_of(q: &Polynomial) -> Polynomial {
    Polynomial::new(
        q.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c.scale_f64(k as f64))
            .collect(),
    )
}

/// Guesses on the circle of radius |a_0/a_d|^(1/d), rotated by an
/// irrational offset so no guess sits on a symmetry axis of the data.
fn initial_guesses(q: &Polynomial) -> Vec<PComplex> {
    let prec = q.precision();
    let d = q.degree();
    let log_r = (q.coeffs[0].log2_abs() - q.leading().log2_abs()) / d as f64;
    let radius = Float::with_val(prec.bits(), log_r).exp2();
    let offset = std::f64::consts::SQRT_2 / d as f64;
    (0..d)
        .map(|k| PComplex::root_of_unity(prec, k as f64 + offset, d as f64).scale(&radius))
        .collect()
}

fn aberth_sweeps(q: &Polynomial, deriv: &Polynomial, z: &mut [PComplex], max_sweeps: usize) {
    let prec = q.precision();
    let d = q.degree();
    let step_tol = (-(prec.bits() as f64) * 0.75).exp2();
    let accept = prec.half_eps();
    let scale_coeffs = abs_coeffs(q);

    let mut done = vec![false; d];
    for _sweep in 0..max_sweeps {
        let mut all_done = true;
        for k in 0..d {
            if done[k] {
                continue;
            }
            let val = q.eval(&z[k]);
            if val.is_zero() {
                done[k] = true;
                continue;
            }
            let der = deriv.eval(&z[k]);
            let w = &val / &der;
            let mut sum = PComplex::zero(prec);
            for j in 0..d {
                if j != k {
                    sum += &(&z[k] - &z[j]).recip();
                }
            }
            let one = PComplex::one(prec);
            let corr = &w / &(&one - &(&w * &sum));
            if !corr.is_finite() {
                // Coincident iterates; nudge and retry next sweep.
                z[k] = z[k].scale_f64(1.0 + 1e-3);
                all_done = false;
                continue;
            }
            // The pre-step residual is free; a root that already met it
            // only gets better from the step.
            let small = scaled_residual(&scale_coeffs, &val, &z[k]) < accept * 1e-3;
            z[k] = &z[k] - &corr;
            let scale = z[k].abs_f64().max(f64::MIN_POSITIVE);
            if small || corr.abs_f64() <= step_tol * scale {
                done[k] = true;
            } else {
                all_done = false;
            }
        }
        if all_done {
            break;
        }
    }
}

/// Newton steps per root while the backward error keeps falling. Returns
/// the final backward error of every root.
fn polish(q: &Polynomial, z: &mut [PComplex], steps: usize) -> Vec<f64> {
    let step_tol = (-(q.precision().bits() as f64) * 0.75).exp2();
    let scale = abs_coeffs(q);
    z.iter_mut()
        .map(|zk| {
            let (mut val, mut der) = q.eval_with_derivative(zk);
            let mut err = scaled_residual(&scale, &val, zk);
            for _ in 0..steps {
                if val.is_zero() || der.is_zero() {
                    break;
                }
                let step = &val / &der;
                let candidate = &*zk - &step;
                let (cval, cder) = q.eval_with_derivative(&candidate);
                let cerr = scaled_residual(&scale, &cval, &candidate);
                if cerr > err {
                    break;
                }
                (*zk, val, der, err) = (candidate, cval, cder, cerr);
                if step.abs_f64() <= step_tol * zk.abs_f64() {
                    break;
                }
            }
            err
        })
        .collect()
}

/// `|q(z)| / sum |a_k| |z|^k`.
pub fn backward_error(q: &Polynomial, z: &PComplex) -> f64 {
    scaled_residual(&abs_coeffs(q), &q.eval(z), z)
}

/// Only the magnitude of a backward error matters, so its scale is
/// accumulated at low precision.
const SCALE_BITS: u32 = 64;

fn abs_coeffs(q: &Polynomial) -> Vec<Float> {
    let lo = Precision::new(SCALE_BITS);
    q.coeffs.iter().map(|c| c.with_prec(lo).abs()).collect()
}

/// Backward error from an already computed value `q(z)`.
fn scaled_residual(abs_coeffs: &[Float], val: &PComplex, z: &PComplex) -> f64 {
    let lo = Precision::new(SCALE_BITS);
    let r = z.with_prec(lo).abs();
    let mut den = abs_coeffs.last().unwrap().clone();
    for c in abs_coeffs.iter().rev().skip(1) {
        den *= &r;
        den += c;
    }
    if den.is_zero() {
        return 0.0;
    }
    Float::with_val(SCALE_BITS, val.with_prec(lo).abs() / &den).to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn real(p: Precision, xs: &[f64]) -> Polynomial {
        Polynomial::new(xs.iter().map(|&x| PComplex::from_f64(p, x, 0.0)).collect())
    }

    fn sorted_re(mut v: Vec<PComplex>) -> Vec<f64> {
        let mut out: Vec<f64> = v.drain(..).map(|z| z.to_c64().re).collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    #[test]
    fn linear_root() {
        let p = Precision::new(128);
        let r = poly_roots(&real(p, &[-2.0, 1.0])).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].to_c64().re - 2.0).abs() < 1e-30);
    }

    #[test]
    fn factored_quadratic() {
        let p = Precision::new(128);
        let r = sorted_re(poly_roots(&real(p, &[6.0, -5.0, 1.0])).unwrap());
        assert!((r[0] - 2.0).abs() < 1e-25 && (r[1] - 3.0).abs() < 1e-25);
    }

    #[test]
    fn trailing_zeros_are_trimmed() {
        let p = Precision::new(64);
        let q = real(p, &[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(q.degree(), 1);
    }

    #[test]
    fn roots_at_origin() {
        let p = Precision::new(128);
        let r = sorted_re(poly_roots(&real(p, &[0.0, 0.0, -1.0, 1.0])).unwrap());
        assert_eq!(r, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_has_no_roots() {
        let p = Precision::new(64);
        assert!(matches!(
            poly_roots(&real(p, &[3.0])),
            Err(NumericsError::ConstantPolynomial)
        ));
    }

    #[test]
    fn degree_twelve_from_known_factors() {
        let p = Precision::new(256);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let chosen: Vec<PComplex> = (0..12)
            .map(|_| PComplex::from_f64(p, rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let q = Polynomial::from_roots(&chosen, p);
        let found = poly_roots(&q).unwrap();
        assert_eq!(found.len(), 12);
        for c in &chosen {
            let best = found
                .iter()
                .map(|f| (f - c).abs_f64() / c.abs_f64())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-15, "root {c:?} matched only to {best}");
        }
    }

    #[test]
    fn derivative_pass_matches_finite_difference() {
        let p = Precision::new(128);
        let q = real(p, &[1.0, -3.0, 0.5, 2.0]);
        let s = PComplex::from_f64(p, 0.3, -0.7);
        let (v, d) = q.eval_with_derivative(&s);
        assert_eq!(v, q.eval(&s));
        // q'(s) = -3 + s + 6 s^2
        let s2 = &s * &s;
        let expect = &(&PComplex::from_f64(p, -3.0, 0.0) + &s) + &s2.scale_f64(6.0);
        assert!((&d - &expect).abs_f64() < 1e-30);
    }
}
