//! Weighted ridge regression with an unpenalized intercept.
//!
//! Solves `min Σ wᵢ (yᵢ − b − xᵢ·β)² + λ‖β‖²` by centering on the weighted
//! means and factoring the penalized Gram matrix once with Cholesky, so the
//! three per-class targets share a single factorization.

use super::ExplainError;

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Weighted R². A constant target is reported as 1.0.
    pub r_squared: f64,
}

impl RidgeFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }
}

/// Shared design for several targets: rows of features and one weight per row.
pub struct WeightedDesign<'a> {
    rows: &'a [Vec<f64>],
    weights: &'a [f64],
    means: Vec<f64>,
    weight_sum: f64,
    /// Lower-triangular Cholesky factor of the centered penalized Gram matrix.
    factor: Vec<Vec<f64>>,
}

impl<'a> WeightedDesign<'a> {
    pub fn new(rows: &'a [Vec<f64>], weights: &'a [f64], penalty: f64) -> Result<Self, ExplainError> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || rows.len() != weights.len() {
            return Err(ExplainError::Solver("design and weights disagree in length"));
        }
        let weight_sum: f64 = weights.iter().sum();
        if !(weight_sum > 0.0) {
            return Err(ExplainError::Solver("weights sum to zero"));
        }
        let mut means = vec![0.0; p];
        for (row, &w) in rows.iter().zip(weights) {
            for (m, x) in means.iter_mut().zip(row) {
                *m += w * x;
            }
        }
        for m in &mut means {
            *m /= weight_sum;
        }

        let mut gram = vec![vec![0.0; p]; p];
        let mut centered = vec![0.0; p];
        for (row, &w) in rows.iter().zip(weights) {
            for j in 0..p {
                centered[j] = row[j] - means[j];
            }
            for j in 0..p {
                let wj = w * centered[j];
                for k in 0..=j {
                    gram[j][k] += wj * centered[k];
                }
            }
        }
        for (j, row) in gram.iter_mut().enumerate() {
            row[j] += penalty;
        }
        let factor = cholesky(gram)?;
        Ok(WeightedDesign {
            rows,
            weights,
            means,
            weight_sum,
            factor,
        })
    }

    pub fn fit(&self, targets: &[f64]) -> RidgeFit {
        let p = self.means.len();
        let y_mean = targets.iter().zip(self.weights).map(|(y, w)| w * y).sum::<f64>() / self.weight_sum;
        let mut rhs = vec![0.0; p];
        for ((row, &w), &y) in self.rows.iter().zip(self.weights).zip(targets) {
            let wy = w * (y - y_mean);
            for j in 0..p {
                rhs[j] += wy * (row[j] - self.means[j]);
            }
        }
        let coefficients = cholesky_solve(&self.factor, rhs);
        let intercept = y_mean - coefficients.iter().zip(&self.means).map(|(b, m)| b * m).sum::<f64>();
        let fit = RidgeFit {
            intercept,
            coefficients,
            r_squared: 1.0,
        };

        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for ((row, &w), &y) in self.rows.iter().zip(self.weights).zip(targets) {
            let r = y - fit.predict(row);
            ss_res += w * r * r;
            ss_tot += w * (y - y_mean) * (y - y_mean);
        }
        let r_squared = if ss_tot <= 1e-15 * self.weight_sum {
            1.0
        } else {
            (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
        };
        RidgeFit { r_squared, ..fit }
    }
}

/// Takes the lower triangle of a symmetric positive-definite matrix.
fn cholesky(mut a: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>, ExplainError> {
    let n = a.len();
    let scale = (0..n).map(|j| a[j][j].abs()).fold(f64::MIN_POSITIVE, f64::max);
    for j in 0..n {
        let d = a[j][j] - a[j][..j].iter().map(|v| v * v).sum::<f64>();
        if !(d > 1e-12 * scale) {
            return Err(ExplainError::Solver("normal equations are not positive definite"));
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let s = a[i][j] - a[i][..j].iter().zip(&a[j][..j]).map(|(x, y)| x * y).sum::<f64>();
            a[i][j] = s / d;
        }
    }
    Ok(a)
}

fn cholesky_solve(l: &[Vec<f64>], mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for i in 0..n {
        for k in 0..i {
            b[i] -= l[i][k] * b[k];
        }
        b[i] /= l[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= l[k][i] * b[k];
        }
        b[i] /= l[i][i];
    }
    b
}
