//! Principal component analysis: center, take the population covariance,
//! decompose it, order components by eigenvalue, and project.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{covariance_matrix, symmetric_eigen, Matrix};

/// Default cumulative explained-variance target for choosing a component count.
pub const DEFAULT_TARGET_CUM_EVR: f64 = 0.9476;

/// A fitted PCA. `components` holds principal directions as columns, ordered
/// by decreasing eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub means: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub components: Matrix,
    pub evr: Vec<f64>,
    pub cum_evr: Vec<f64>,
}

/// JSON layout: components flattened row-major (`dim × dim`).
#[derive(Serialize, Deserialize)]
struct PcaModelJson {
    means: Vec<f64>,
    eigenvalues: Vec<f64>,
    components: Vec<f64>,
    evr: Vec<f64>,
}

impl Serialize for PcaModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PcaModelJson {
            means: self.means.clone(),
            eigenvalues: self.eigenvalues.clone(),
            components: self.components.as_slice().to_vec(),
            evr: self.evr.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PcaModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PcaModelJson::deserialize(d)?;
        let dim = raw.means.len();
        let components =
            Matrix::from_vec(dim, dim, raw.components).map_err(serde::de::Error::custom)?;
        let cum_evr = cumulative(&raw.evr);
        Ok(PcaModel {
            means: raw.means,
            eigenvalues: raw.eigenvalues,
            components,
            evr: raw.evr,
            cum_evr,
        })
    }
}

fn cumulative(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

pub fn fit_pca(x: &Matrix) -> Result<PcaModel> {
    if x.rows() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: x.rows(),
        });
    }
    if let Some((row, col)) = x.first_non_finite() {
        return Err(Error::NonFiniteInput { row, col });
    }
    let means = x.column_means();
    let mut centered = x.clone();
    for i in 0..centered.rows() {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&means) {
            *v -= m;
        }
    }
    let cov = covariance_matrix(&centered)?;
    let eig = symmetric_eigen(&cov)?;
    let total: f64 = eig.values.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let evr: Vec<f64> = eig.values.iter().map(|l| l / total).collect();
    let cum_evr = cumulative(&evr);
    Ok(PcaModel {
        means,
        eigenvalues: eig.values,
        components: eig.vectors,
        evr,
        cum_evr,
    })
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Factor scores on the first `k` components.
    pub fn transform(&self, x: &Matrix, k: usize) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.cols(),
            });
        }
        if k == 0 || k > self.dim() {
            return Err(Error::KOutOfRange {
                k,
                max: self.dim(),
            });
        }
        let mut out = Matrix::zeros(x.rows(), k);
        let mut centered = vec![0.0; self.dim()];
        for i in 0..x.rows() {
            for ((c, v), m) in centered.iter_mut().zip(x.row(i)).zip(&self.means) {
                *c = v - m;
            }
            for (j, dst) in out.row_mut(i).iter_mut().enumerate() {
                *dst = centered
                    .iter()
                    .enumerate()
                    .map(|(r, c)| c * self.components[(r, j)])
                    .sum();
            }
        }
        Ok(out)
    }

    /// Maps scores on the leading components back into feature space.
    pub fn inverse_transform(&self, scores: &Matrix) -> Result<Matrix> {
        let k = scores.cols();
        if k == 0 || k > self.dim() {
            return Err(Error::KOutOfRange {
                k,
                max: self.dim(),
            });
        }
        let mut out = Matrix::zeros(scores.rows(), self.dim());
        for i in 0..scores.rows() {
            let s = scores.row(i);
            for (r, dst) in out.row_mut(i).iter_mut().enumerate() {
                *dst = self.means[r]
                    + (0..k).map(|j| s[j] * self.components[(r, j)]).sum::<f64>();
            }
        }
        Ok(out)
    }

    /// Smallest `k` whose cumulative ratio reaches `target`.
    pub fn select_components(&self, target_cum_evr: f64) -> usize {
        select_components(&self.cum_evr, target_cum_evr)
    }
}

/// Smallest `k` with `cum_evr[k-1] >= target`; falls back to the full
/// dimension when rounding keeps the total just below the target.
pub fn select_components(cum_evr: &[f64], target: f64) -> usize {
    cum_evr
        .iter()
        .position(|&c| c >= target - 1e-12)
        .map_or(cum_evr.len(), |p| p + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng_for(seed);
        let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn rank_one_line() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [-4.0, -4.0]]).unwrap();
        let m = fit_pca(&x).unwrap();
        assert!((m.evr[0] - 1.0).abs() < 1e-12);
        assert!(m.evr[1].abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.components[(0, 0)] - h).abs() < 1e-12);
        assert!((m.components[(1, 0)] - h).abs() < 1e-12);
    }

    #[test]
    fn isotropic_square() {
        // covariance diag(2, 2)
        let s = 2.0_f64.sqrt();
        let x = Matrix::from_rows(&[[s, s], [s, -s], [-s, s], [-s, -s]]).unwrap();
        let m = fit_pca(&x).unwrap();
        assert!((m.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!((m.evr[0] - 0.5).abs() < 1e-12 && (m.evr[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_matrix_has_zero_variance() {
        let x = Matrix::from_rows(&[[3.0, 1.0], [3.0, 1.0], [3.0, 1.0]]).unwrap();
        assert!(matches!(fit_pca(&x), Err(Error::ZeroVariance)));
    }

    #[test]
    fn select_components_examples() {
        let cum = cumulative(&[0.6, 0.3, 0.07, 0.03]);
        assert_eq!(select_components(&cum, 0.9476), 3);
        assert_eq!(select_components(&cum, 1.0), 4);
        assert_eq!(select_components(&cumulative(&[0.7, 0.3, 0.0]), 1.0), 2);
    }

    #[test]
    fn transform_errors() {
        let x = random_matrix(10, 3, 1);
        let m = fit_pca(&x).unwrap();
        let bad = random_matrix(4, 2, 2);
        assert!(matches!(m.transform(&bad, 1), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.transform(&x, 0), Err(Error::KOutOfRange { .. })));
        assert!(matches!(m.transform(&x, 4), Err(Error::KOutOfRange { .. })));
    }

    #[test]
    fn score_covariance_is_eigenvalue_diagonal() {
        let x = random_matrix(60, 6, 3);
        let m = fit_pca(&x).unwrap();
        let scores = m.transform(&x, 6).unwrap();
        let n = scores.rows() as f64;
        for a in 0..6 {
            for b in 0..6 {
                let cov: f64 =
                    (0..scores.rows()).map(|i| scores[(i, a)] * scores[(i, b)]).sum::<f64>() / n;
                let expected = if a == b { m.eigenvalues[a] } else { 0.0 };
                assert!((cov - expected).abs() < 1e-8, "({a},{b}) {cov} vs {expected}");
            }
        }
        let back = m.inverse_transform(&scores).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-8);
    }

    #[test]
    fn permuted_columns_same_spectrum() {
        let x = random_matrix(40, 5, 4);
        let perm = [3, 0, 4, 1, 2];
        let xp = x.select_columns(&perm);
        let a = fit_pca(&x).unwrap();
        let b = fit_pca(&xp).unwrap();
        for (u, v) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip() {
        let m = fit_pca(&random_matrix(20, 3, 5)).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: PcaModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
