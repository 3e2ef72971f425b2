//! Small dense linear algebra.
//!
//! Every matrix in this crate is at most a few dozen rows wide (the process
//! dimension, or `p·d` for multi-marginal covariances), so the kernels here
//! favour robustness and exactness checks over asymptotic speed.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};

/// Condition estimate above which [`inverse`] and [`solve`] refuse to answer.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative tolerance used to decide whether a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Dense row-major real matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LabError::Dimension(
                "matrix must have at least one row and column".into(),
            ));
        }
        if rows * cols != data.len() {
            return Err(LabError::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "non-finite matrix entry {bad}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(LabError::Dimension(format!(
                    "row {i} has {} entries, expected {n_cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(n_rows, n_cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Matrix product; panics on incompatible shapes.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "shape mismatch"
        );
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.sub(other).max_abs()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(LabError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

// Matrices travel as nested row arrays in every JSON document.
impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Eigenvalues of a square matrix: elimination to upper Hessenberg form
/// followed by shifted (Francis double-shift) QR iteration.
///
/// Complex eigenvalues come in conjugate pairs. Order is unspecified.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    let n = m.require_square()?;
    // 1-based working copy keeps the index arithmetic of the classical
    // algorithm readable.
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = m[(i, j)];
        }
    }
    hessenberg(&mut a, n);
    hessenberg_qr(&mut a, n)
}

#[allow(clippy::needless_range_loop)]
fn hessenberg(a: &mut [Vec<f64>], n: usize) {
    for m in 2..n {
        let mut x: f64 = 0.0;
        let mut i = m;
        for j in m..=n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                let tmp = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = tmp;
            }
            for row in a.iter_mut().skip(1) {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..=n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        a[i][j] -= y * a[m][j];
                    }
                    for j in 1..=n {
                        a[j][m] += y * a[j][i];
                    }
                }
            }
        }
    }
    for i in 3..=n {
        for j in 1..(i - 1) {
            a[i][j] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

#[allow(clippy::needless_range_loop)]
fn hessenberg_qr(a: &mut [Vec<f64>], n: usize) -> Result<Vec<Complex64>> {
    const MAX_ITS: usize = 60;
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }

    let mut nn = n as isize;
    let mut t = 0.0;
    while nn >= 1 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            // Look for a single small subdiagonal element.
            let mut l = nu;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
            } else {
                let mut y = a[nu - 1][nu - 1];
                let mut w = a[nu][nu - 1] * a[nu - 1][nu];
                if l == nu - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nu - 1] = x + z;
                        wr[nu] = x + z;
                        if z != 0.0 {
                            wr[nu] = x - w / z;
                        }
                        wi[nu - 1] = 0.0;
                        wi[nu] = 0.0;
                    } else {
                        wr[nu - 1] = x + p;
                        wr[nu] = x + p;
                        wi[nu - 1] = -z;
                        wi[nu] = z;
                    }
                    nn -= 2;
                } else {
                    if its == MAX_ITS {
                        return Err(LabError::NoConvergence);
                    }
                    if its > 0 && its % 10 == 0 {
                        // Exceptional shift.
                        t += x;
                        for i in 1..=nu {
                            a[i][i] -= x;
                        }
                        let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;

                    let (mut p, mut q, mut r): (f64, f64, f64);
                    let mut z;
                    let mut m = nu - 2;
                    loop {
                        z = a[m][m];
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - rr - ss;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nu {
                        a[i][i - 2] = 0.0;
                        if i != m + 2 {
                            a[i][i - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = 0.0;
                            if k != nu - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nu - 1 {
                                    p += r * a[k + 2][j];
                                    a[k + 2][j] -= p * z;
                                }
                                a[k + 1][j] -= p * y;
                                a[k][j] -= p * x;
                            }
                            let mmin = nu.min(k + 3);
                            for i in l..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k != nu - 1 {
                                    p += z * a[i][k + 2];
                                    a[i][k + 2] -= p * r;
                                }
                                a[i][k + 1] -= p * q;
                                a[i][k] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 1 || l as isize + 1 >= nn {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `e^{tM}` by scaling and squaring around a degree-13 Taylor polynomial.
pub fn mat_exp(m: &Matrix, t: f64) -> Result<Matrix> {
    let n = m.require_square()?;
    if !t.is_finite() {
        return Err(LabError::InvalidParameter(format!(
            "time {t} is not finite"
        )));
    }
    let scaled = m.scale(t);
    let norm = scaled.norm_1();
    if !norm.is_finite() {
        return Err(LabError::Overflow(norm));
    }
    // Scale so the series argument has 1-norm at most 1/2; the degree-13
    // remainder is then below 2^-52 relative.
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    if squarings > 1100 {
        return Err(LabError::Overflow(norm));
    }
    let x = scaled.scale(0.5f64.powi(squarings));

    // Horner evaluation of Σ_{k=0}^{13} X^k / k!.
    let identity = Matrix::identity(n);
    let mut acc = identity.clone();
    for k in (1..=13).rev() {
        acc = identity.add(&x.matmul(&acc).scale(1.0 / k as f64));
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc);
    }
    if acc.data.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Overflow(norm));
    }
    Ok(acc)
}

/// LU factorization with partial pivoting, stored compactly.
struct Lu {
    n: usize,
    lu: Matrix,
    perm: Vec<usize>,
    swaps: usize,
}

impl Lu {
    fn factor(m: &Matrix) -> Result<Self> {
        let n = m.require_square()?;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        let scale = m.max_abs();
        for k in 0..n {
            let (pivot_row, pivot) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold(
                        (k, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pivot <= f64::EPSILON * scale * n as f64 || pivot == 0.0 {
                return Err(LabError::Singular {
                    condition: f64::INFINITY,
                });
            }
            if pivot_row != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(pivot_row, j)];
                    lu[(pivot_row, j)] = tmp;
                }
                perm.swap(k, pivot_row);
                swaps += 1;
            }
            let diag = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / diag;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Self { n, lu, perm, swaps })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    fn inverse(&self) -> Matrix {
        let n = self.n;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    fn determinant(&self) -> f64 {
        let d: f64 = (0..self.n).map(|i| self.lu[(i, i)]).product();
        if self.swaps.is_multiple_of(2) {
            d
        } else {
            -d
        }
    }
}

/// Inverse with a 1-norm condition check.
pub fn inverse(m: &Matrix) -> Result<Matrix> {
    let lu = Lu::factor(m)?;
    let inv = lu.inverse();
    let condition = m.norm_1() * inv.norm_1();
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(LabError::Singular { condition });
    }
    Ok(inv)
}

/// Solves `M x = b`.
pub fn solve(m: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != m.rows() {
        return Err(LabError::Dimension(format!(
            "right-hand side has length {}, matrix has {} rows",
            b.len(),
            m.rows()
        )));
    }
    let lu = Lu::factor(m)?;
    let condition = m.norm_1() * lu.inverse().norm_1();
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(LabError::Singular { condition });
    }
    Ok(lu.solve(b))
}

pub fn determinant(m: &Matrix) -> Result<f64> {
    match Lu::factor(m) {
        Ok(lu) => Ok(lu.determinant()),
        Err(LabError::Singular { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Lower Cholesky factor together with a note on rank deficiency.
#[derive(Debug, Clone)]
pub struct Cholesky {
    pub lower: Matrix,
    /// Pivots that were numerically zero and handled as exact zeros.
    pub zero_pivots: Vec<usize>,
}

impl Cholesky {
    pub fn warning(&self) -> Option<String> {
        (!self.zero_pivots.is_empty()).then(|| {
            format!(
                "matrix is singular positive semidefinite; zero pivots at {:?}",
                self.zero_pivots
            )
        })
    }
}

/// Cholesky factorization `S = L Lᵀ` of a symmetric positive semidefinite
/// matrix.
///
/// Pivots within `1e-12·scale` of zero are treated as exact zeros (their
/// column is zeroed), which keeps the factorization exact for singular PSD
/// inputs such as the zero matrix.
pub fn cholesky(s: &Matrix) -> Result<Cholesky> {
    let n = s.require_square()?;
    let scale = s.max_abs().max(1.0);
    let asym = s.max_asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(LabError::NotSymmetric(asym));
    }
    let zero_tol = 1e-12 * scale;
    let indefinite_tol = 1e-10 * scale;
    let mut l = Matrix::zeros(n, n);
    let mut zero_pivots = Vec::new();
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -indefinite_tol {
            return Err(LabError::NotPositiveSemidefinite { pivot: j, value: d });
        }
        if d <= zero_tol {
            // Off-diagonal residuals in this column must vanish too.
            for i in (j + 1)..n {
                let mut v = s[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                if v.abs() > indefinite_tol.sqrt() * scale.sqrt() {
                    return Err(LabError::NotPositiveSemidefinite { pivot: j, value: d });
                }
            }
            zero_pivots.push(j);
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / djj;
        }
    }
    Ok(Cholesky {
        lower: l,
        zero_pivots,
    })
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn operator_norm(m: &Matrix) -> f64 {
    if m.max_abs() == 0.0 {
        return 0.0;
    }
    let gram = m.transpose().matmul(m);
    let n = gram.rows();
    // Two deterministic starting vectors guard against a start orthogonal
    // to the dominant singular direction.
    let starts: [Vec<f64>; 2] = [
        (0..n).map(|i| 1.0 + 0.1 * i as f64).collect(),
        (0..n)
            .map(|i| ((i as f64 + 1.0) * 2.399_963).sin() + 0.05)
            .collect(),
    ];
    starts
        .iter()
        .map(|start| power_iteration(&gram, start))
        .fold(0.0, f64::max)
        .sqrt()
}

fn power_iteration(sym: &Matrix, start: &[f64]) -> f64 {
    let mut v = start.to_vec();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = norm(&v);
    if nv == 0.0 {
        return 0.0;
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut estimate = 0.0;
    for _ in 0..100_000 {
        let w = sym.matvec(&v);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let rayleigh: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        v = w.into_iter().map(|x| x / nw).collect();
        if (rayleigh - estimate).abs() <= 1e-15 * rayleigh.abs() {
            return rayleigh;
        }
        estimate = rayleigh;
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn sorted_re(eigs: &[Complex64]) -> Vec<f64> {
        let mut re: Vec<f64> = eigs.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        re
    }

    #[test]
    fn spectral_radius_examples() {
        assert_abs_diff_eq!(
            spectral_radius(&m(&[&[0.5, 2.0], &[2.0, 0.5]])).unwrap(),
            2.5,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            spectral_radius(&Matrix::identity(5)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(spectral_radius(&Matrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn spectral_radius_rejects_rectangular() {
        assert!(matches!(
            spectral_radius(&Matrix::zeros(2, 3)),
            Err(LabError::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn eigenvalues_of_reference_model_v() {
        let v = m(&[&[3.5, -2.0], &[-2.0, 3.5]]);
        let re = sorted_re(&eigenvalues(&v).unwrap());
        assert_abs_diff_eq!(re[0], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(re[1], 5.5, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_of_rotation_are_complex() {
        let r = m(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let eigs = eigenvalues(&r).unwrap();
        assert!(eigs
            .iter()
            .all(|z| z.re.abs() < 1e-14 && (z.im.abs() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn eigenvalues_of_triangular_and_larger_matrices() {
        let t = m(&[&[1.0, 5.0, -2.0], &[0.0, 2.0, 7.0], &[0.0, 0.0, 3.0]]);
        let re = sorted_re(&eigenvalues(&t).unwrap());
        for (got, want) in re.iter().zip([1.0, 2.0, 3.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-10);
        }
        // Companion matrix of (x-1)(x-2)(x-3)(x-4).
        let c = m(&[
            &[10.0, -35.0, 50.0, -24.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0],
        ]);
        let re = sorted_re(&eigenvalues(&c).unwrap());
        for (got, want) in re.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn mat_exp_examples() {
        let e = mat_exp(&Matrix::zeros(3, 3), 1.0).unwrap();
        assert_eq!(e, Matrix::identity(3));

        let d = mat_exp(&Matrix::diag(&[0.3, -1.7]), 1.0).unwrap();
        assert_abs_diff_eq!(d[(0, 0)], 0.3f64.exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(d[(1, 1)], (-1.7f64).exp(), epsilon = 1e-14);
        assert_eq!(d[(0, 1)], 0.0);

        let n = mat_exp(&m(&[&[0.0, 1.0], &[0.0, 0.0]]), 1.0).unwrap();
        assert_abs_diff_eq!(
            n.max_abs_diff(&m(&[&[1.0, 1.0], &[0.0, 1.0]])),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn mat_exp_overflow_is_an_error() {
        assert!(matches!(
            mat_exp(&Matrix::identity(2), 1e6),
            Err(LabError::Overflow(_))
        ));
        assert!(mat_exp(&Matrix::identity(2), f64::NAN).is_err());
    }

    #[test]
    fn mat_exp_decays_for_reference_model_v() {
        let v = m(&[&[3.5, -2.0], &[-2.0, 3.5]]);
        let e = mat_exp(&v, -100.0).unwrap();
        assert!(e.max_abs() < 1e-60);
    }

    #[test]
    fn inverse_examples() {
        let v = m(&[&[3.5, -2.0], &[-2.0, 3.5]]);
        let want = m(&[&[3.5, 2.0], &[2.0, 3.5]]).scale(1.0 / 8.25);
        assert_abs_diff_eq!(
            inverse(&v).unwrap().max_abs_diff(&want),
            0.0,
            epsilon = 1e-14
        );
        assert_eq!(inverse(&Matrix::identity(4)).unwrap(), Matrix::identity(4));
        assert!(matches!(
            inverse(&m(&[&[1.0, 1.0], &[1.0, 1.0]])),
            Err(LabError::Singular { .. })
        ));
    }

    #[test]
    fn ill_conditioned_inverse_reports_condition() {
        let near = m(&[&[1.0, 1.0], &[1.0, 1.0 + 1e-14]]);
        match inverse(&near) {
            Err(LabError::Singular { condition }) => assert!(condition > MAX_CONDITION),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn solve_matches_inverse() {
        let v = m(&[&[3.5, -2.0], &[-2.0, 3.5]]);
        let x = solve(&v, &[8.0, 12.0]).unwrap();
        assert_abs_diff_eq!(x[0], 52.0 / 8.25, epsilon = 1e-13);
        assert_abs_diff_eq!(x[1], 58.0 / 8.25, epsilon = 1e-13);
        assert!(solve(&v, &[1.0]).is_err());
    }

    #[test]
    fn determinant_examples() {
        assert_abs_diff_eq!(
            determinant(&m(&[&[3.5, -2.0], &[-2.0, 3.5]])).unwrap(),
            8.25,
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(
            determinant(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
        assert_eq!(determinant(&m(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap(), 0.0);
    }

    #[test]
    fn cholesky_examples() {
        let c = cholesky(&Matrix::diag(&[4.0, 9.0])).unwrap();
        assert_eq!(c.lower, Matrix::diag(&[2.0, 3.0]));

        let c = cholesky(&m(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        let want = m(&[&[2f64.sqrt(), 0.0], &[1.0 / 2f64.sqrt(), 1.5f64.sqrt()]]);
        assert_abs_diff_eq!(c.lower.max_abs_diff(&want), 0.0, epsilon = 1e-15);
        assert!(c.warning().is_none());

        assert!(matches!(
            cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]])),
            Err(LabError::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn cholesky_of_singular_psd() {
        let c = cholesky(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(c.lower, Matrix::zeros(2, 2));
        assert!(c.warning().is_some());

        let s = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let c = cholesky(&s).unwrap();
        assert_eq!(c.zero_pivots, vec![1]);
        let back = c.lower.matmul(&c.lower.transpose());
        assert!(back.max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        assert!(matches!(
            cholesky(&m(&[&[2.0, 1.0], &[0.0, 2.0]])),
            Err(LabError::NotSymmetric(_))
        ));
    }

    #[test]
    fn operator_norm_examples() {
        assert_abs_diff_eq!(
            operator_norm(&Matrix::diag(&[3.0, -5.0])),
            5.0,
            epsilon = 1e-12
        );
        assert_eq!(operator_norm(&Matrix::zeros(2, 3)), 0.0);
        assert_abs_diff_eq!(
            operator_norm(&m(&[&[0.0, 2.0], &[0.0, 0.0]])),
            2.0,
            epsilon = 1e-12
        );
        // Rectangular: singular values of [[1,2,3]] → √14.
        assert_abs_diff_eq!(
            operator_norm(&m(&[&[1.0, 2.0, 3.0]])),
            14f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn construction_errors() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn serde_uses_nested_rows() {
        let a = m(&[&[0.5, 2.0], &[2.0, 0.5]]);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "[[0.5,2.0],[2.0,0.5]]");
        let back: Matrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<Matrix>("[[1.0],[2.0,3.0]]").is_err());
    }
}
