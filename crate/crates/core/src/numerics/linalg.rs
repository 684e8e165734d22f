use rug::Float;

use super::{NumericsError, PComplex, Precision};

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<PComplex>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize, prec: Precision) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![PComplex::zero(prec); rows * cols],
        }
    }

    pub fn identity(n: usize, prec: Precision) -> Self {
        let mut m = Self::zeros(n, n, prec);
        for i in 0..n {
            m[(i, i)] = PComplex::one(prec);
        }
        m
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> PComplex,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[PComplex] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Infinity norm (largest absolute row sum).
    pub fn norm_inf(&self) -> Float {
        let prec = self.data.first().map(|z| z.prec()).unwrap_or_default();
        let mut best = Float::new(prec.bits());
        for i in 0..self.rows {
            let mut s = Float::new(prec.bits());
            for z in self.row(i) {
                s += z.abs();
            }
            if s > best {
                best = s;
            }
        }
        best
    }

    pub fn mul_vec(&self, x: &[PComplex]) -> Vec<PComplex> {
        assert_eq!(x.len(), self.cols, "dimension mismatch");
        (0..self.rows)
            .map(|i| {
                let mut acc = PComplex::zero(self.data[i * self.cols].prec());
                for (a, b) in self.row(i).iter().zip(x) {
                    acc.add_mul(a, b);
                }
                acc
            })
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = PComplex;
    fn index(&self, (i, j): (usize, usize)) -> &PComplex {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut PComplex {
        &mut self.data[i * self.cols + j]
    }
}

/// `PA = LU` with partial pivoting. `L` has a unit diagonal and shares
/// storage with `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct LuFactors {
    n: usize,
    lu: CMatrix,
    /// `perm[i]` is the original row placed at position `i`.
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn precision(&self) -> Precision {
        if self.n == 0 {
            Precision::default()
        } else {
            self.lu[(0, 0)].prec()
        }
    }
}

pub fn lu_factor(a: &CMatrix) -> Result<LuFactors, NumericsError> {
    if a.rows != a.cols {
        return Err(NumericsError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    if n == 0 {
        return Ok(LuFactors { n, lu, perm });
    }
    let prec = a[(0, 0)].prec();
    let norm = a.norm_inf();
    let mut threshold = Float::with_val(prec.bits(), &norm * (n as f64));
    threshold *= prec.eps();

    for k in 0..n {
        let mut piv = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..n {
            let m = lu[(i, k)].abs();
            if m > best {
                best = m;
                piv = i;
            }
        }
        if best.is_zero() || best <= threshold {
            return Err(NumericsError::Singular {
                column: k,
                pivot: best.to_f64(),
                threshold: threshold.to_f64(),
            });
        }
        if piv != k {
            for j in 0..n {
                lu.data.swap(k * n + j, piv * n + j);
            }
            perm.swap(k, piv);
        }
        let inv = lu[(k, k)].recip();
        for i in k + 1..n {
            let l = &lu[(i, k)] * &inv;
            if l.is_zero() {
                lu[(i, k)] = l;
                continue;
            }
            for j in k + 1..n {
                let (upper, lower) = lu.data.split_at_mut(i * n);
                lower[j].sub_mul(&l, &upper[k * n + j]);
            }
            lu[(i, k)] = l;
        }
    }
    Ok(LuFactors { n, lu, perm })
}

pub fn lu_solve(f: &LuFactors, b: &[PComplex]) -> Vec<PComplex> {
    assert_eq!(b.len(), f.n, "right-hand side has wrong length");
    let n = f.n;
    let mut x: Vec<PComplex> = f.perm.iter().map(|&p| b[p].clone()).collect();
    for i in 0..n {
        for j in 0..i {
            let (head, tail) = x.split_at_mut(i);
            tail[0].sub_mul(&f.lu[(i, j)], &head[j]);
        }
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            let (head, tail) = x.split_at_mut(j);
            head[i].sub_mul(&f.lu[(i, j)], &tail[0]);
        }
        x[i] = &x[i] / &f.lu[(i, i)];
    }
    x
}
