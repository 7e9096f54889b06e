//! Dense linear algebra for the PCA and clustering stages: a small row-major
//! matrix, population covariance, a cyclic Jacobi eigensolver for symmetric
//! matrices, and Spearman rank correlation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from row slices. All rows must share one length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_diagonal(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, columns.len());
        for i in 0..self.rows {
            let src = self.row(i);
            for (dst, &j) in out.row_mut(i).iter_mut().zip(columns) {
                *dst = src[j];
            }
        }
        out
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / self.cols, p % self.cols))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// A square matrix whose entries are finite and mirror across the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SymmetricMatrix(Matrix);

const SYMMETRY_TOL: f64 = 1e-12;

impl SymmetricMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::DimensionMismatch {
                expected: m.rows,
                found: m.cols,
            });
        }
        if let Some((row, col)) = m.first_non_finite() {
            return Err(Error::NonFiniteInput { row, col });
        }
        let scale = m.data.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        for i in 0..m.rows {
            for j in (i + 1)..m.cols {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidParams(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(SymmetricMatrix(m))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)]).sum()
    }
}

impl TryFrom<Matrix> for SymmetricMatrix {
    type Error = Error;
    fn try_from(m: Matrix) -> Result<Self> {
        SymmetricMatrix::new(m)
    }
}

impl From<SymmetricMatrix> for Matrix {
    fn from(s: SymmetricMatrix) -> Matrix {
        s.0
    }
}

/// Eigenpairs of a symmetric matrix. `vectors` holds unit eigenvectors as
/// columns, ordered to match `values` (non-increasing).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenDecomposition {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }

    /// V diag(values) Vᵀ.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            for i in 0..n {
                let vik = self.vectors[(i, k)] * lambda;
                if vik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += vik * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

/// Population covariance `BᵀB / N` of a column-centered matrix.
pub fn covariance_matrix(b: &Matrix) -> Result<SymmetricMatrix> {
    let n = b.rows();
    if n == 0 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    if let Some((row, col)) = b.first_non_finite() {
        return Err(Error::NonFiniteInput { row, col });
    }
    let means = b.column_means();
    for (j, &mean) in means.iter().enumerate() {
        let scale = (0..n).fold(1.0_f64, |a, i| a.max(b[(i, j)].abs()));
        if mean.abs() > 1e-9 * scale {
            return Err(Error::NotCentered { column: j, mean });
        }
    }
    let m = b.cols();
    let mut c = Matrix::zeros(m, m);
    for row in b.iter_rows() {
        for i in 0..m {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in i..m {
                c[(i, j)] += ri * row[j];
            }
        }
    }
    let inv = 1.0 / n as f64;
    for i in 0..m {
        for j in i..m {
            let v = c[(i, j)] * inv;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(SymmetricMatrix(c))
}

const MAX_SWEEPS: usize = 100;

/// Full eigendecomposition by cyclic Jacobi rotations.
///
/// Values come back sorted non-increasing; tiny negative values in
/// `(-1e-10, 0)` are clipped to zero. Each eigenvector is oriented so that its
/// largest-magnitude component is positive.
pub fn symmetric_eigen(c: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let n = c.dim();
    let mut a = c.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let norm = a.frobenius_norm();

    let mut sweep = 0;
    while n > 1 && norm != 0.0 {
        if sweep == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
        }
        sweep += 1;
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)] * a[(p, q)])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-2 * norm {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                rotate(&mut a, &mut v, p, q, cos, sin);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));

    let mut values = Vec::with_capacity(n);
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut lambda = diag[src];
        if lambda < 0.0 && lambda > -1e-10 {
            lambda = 0.0;
        }
        values.push(lambda);
        let mut col = v.column(src);
        orient(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition { values, vectors })
}

fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, cos: f64, sin: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = cos * akp - sin * akq;
        a[(k, q)] = sin * akp + cos * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = cos * apk - sin * aqk;
        a[(q, k)] = sin * apk + cos * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = cos * vkp - sin * vkq;
        v[(k, q)] = sin * vkp + cos * vkq;
    }
}

/// Flip so the largest-magnitude entry (first one on exact ties) is positive.
fn orient(col: &mut [f64]) {
    let mut best = 0;
    for (i, x) in col.iter().enumerate() {
        if x.abs() > col[best].abs() {
            best = i;
        }
    }
    if col.get(best).is_some_and(|&x| x < 0.0) {
        col.iter_mut().for_each(|x| *x = -*x);
    }
}

/// 1-based ranks; tied values share the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
    }
}

/// Spearman rank correlation between all column pairs of `x`.
///
/// Constant columns correlate 0 with everything else; the diagonal is 1.
pub fn spearman_correlation(x: &Matrix) -> Result<SymmetricMatrix> {
    if x.rows() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: x.rows(),
        });
    }
    if let Some((row, col)) = x.first_non_finite() {
        return Err(Error::NonFiniteInput { row, col });
    }
    let m = x.cols();
    let ranks: Vec<Vec<f64>> = (0..m).map(|j| average_ranks(&x.column(j))).collect();
    let mut c = Matrix::identity(m);
    for i in 0..m {
        for j in (i + 1)..m {
            let rho = pearson(&ranks[i], &ranks[j]).unwrap_or(0.0);
            c[(i, j)] = rho;
            c[(j, i)] = rho;
        }
    }
    Ok(SymmetricMatrix(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(rows: &[&[f64]]) -> SymmetricMatrix {
        SymmetricMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn covariance_of_two_point_line() {
        let b = Matrix::from_rows(&[[1.0, 1.0], [-1.0, -1.0]]).unwrap();
        let c = covariance_matrix(&b).unwrap();
        assert_eq!(c.as_matrix(), &Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap());
    }

    #[test]
    fn covariance_single_column() {
        let b = Matrix::from_rows(&[[1.0], [-1.0]]).unwrap();
        let c = covariance_matrix(&b).unwrap();
        assert_eq!(c.get(0, 0), 1.0);
    }

    #[test]
    fn covariance_rejects_uncentered() {
        let b = Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0]]).unwrap();
        assert!(matches!(covariance_matrix(&b), Err(Error::NotCentered { column: 0, .. })));
    }

    #[test]
    fn eigen_two_by_two() {
        let e = symmetric_eigen(&sym(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vector(0);
        assert!((v0[0] - h).abs() < 1e-12 && (v0[1] - h).abs() < 1e-12);
        let v1 = e.vector(1);
        assert!((v1[0].abs() - h).abs() < 1e-12);
        assert!((v1[0] + v1[1]).abs() < 1e-12);
    }

    #[test]
    fn eigen_identity_and_diagonal() {
        let e = symmetric_eigen(&SymmetricMatrix::new(Matrix::identity(4)).unwrap()).unwrap();
        assert_eq!(e.values, vec![1.0; 4]);

        let d = SymmetricMatrix::new(Matrix::from_diagonal(&[2.0, 5.0, 0.0])).unwrap();
        let e = symmetric_eigen(&d).unwrap();
        assert_eq!(e.values, vec![5.0, 2.0, 0.0]);
        assert_eq!(e.vector(0), vec![0.0, 1.0, 0.0]);
        assert_eq!(e.vector(1), vec![1.0, 0.0, 0.0]);
        assert_eq!(e.vector(2), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn eigen_clips_tiny_negative() {
        let d = SymmetricMatrix::new(Matrix::from_diagonal(&[1.0, -1e-12])).unwrap();
        let e = symmetric_eigen(&d).unwrap();
        assert_eq!(e.values, vec![1.0, 0.0]);
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    fn spearman_pair(a: &[f64], b: &[f64]) -> f64 {
        let rows: Vec<[f64; 2]> = a.iter().zip(b).map(|(&x, &y)| [x, y]).collect();
        spearman_correlation(&Matrix::from_rows(&rows).unwrap()).unwrap().get(0, 1)
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman_pair(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman_pair(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]) + 1.0).abs() < 1e-15);
        // centered ranks (-1.5, 0, 0, 1.5) vs (-1.5, -0.5, 0.5, 1.5)
        let expected = 4.5 / (4.5_f64 * 5.0).sqrt();
        let got = spearman_pair(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]);
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.9487).abs() < 1e-3);
    }

    #[test]
    fn spearman_constant_column_and_too_few_rows() {
        assert_eq!(spearman_pair(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
        let one = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(spearman_correlation(&one), Err(Error::TooFewRows { .. })));
    }

    fn random_symmetric() -> impl Strategy<Value = SymmetricMatrix> {
        (1usize..12).prop_flat_map(|n| {
            prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |raw| {
                let mut m = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in i..n {
                        m[(i, j)] = raw[i * n + j];
                        m[(j, i)] = raw[i * n + j];
                    }
                }
                SymmetricMatrix::new(m).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn eigen_reconstructs_and_preserves_trace(a in random_symmetric()) {
            let e = symmetric_eigen(&a).unwrap();
            let norm = a.as_matrix().frobenius_norm().max(1.0);
            prop_assert!(e.reconstruct().max_abs_diff(a.as_matrix()) <= 1e-7 * norm);
            let vtv = e.vectors.transpose().matmul(&e.vectors).unwrap();
            prop_assert!(vtv.max_abs_diff(&Matrix::identity(a.dim())) <= 1e-8);
            prop_assert!((e.values.iter().sum::<f64>() - a.trace()).abs() <= 1e-8 * norm);
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn spearman_invariant_under_monotone_maps(
            pairs in prop::collection::vec((-50i32..50, -50i32..50), 2..40),
            shift in -5.0f64..5.0,
            scale in 0.1f64..4.0,
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let a2: Vec<f64> = a.iter().map(|v| (v * scale + shift).exp().ln_1p()).collect();
            let b2: Vec<f64> = b.iter().map(|v| v * v * v + shift).collect();
            let r1 = spearman_pair(&a, &b);
            let r2 = spearman_pair(&a2, &b2);
            prop_assert!((r1 - r2).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r1));
        }
    }
}
