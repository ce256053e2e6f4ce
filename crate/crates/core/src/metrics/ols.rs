use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Ordinary least squares fit with classical (homoskedastic) inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub lower_95: Vec<f64>,
    pub upper_95: Vec<f64>,
    pub r_squared: f64,
    pub observations: usize,
    pub degrees_of_freedom: usize,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.p_values[i])
    }
}

/// Fits `y ~ [1] + columns`. `columns` are named regressors of equal length.
pub fn ols_fit(columns: &[(String, Vec<f64>)], y: &[f64], intercept: bool) -> Result<RegressionResult> {
    let n = y.len();
    let mut names: Vec<String> = Vec::new();
    if intercept {
        names.push("intercept".into());
    }
    names.extend(columns.iter().map(|(name, _)| name.clone()));
    let k = names.len();
    if n < k + 1 {
        return Err(Error::TooFewRows { rows: n, cols: k });
    }
    if columns.iter().any(|(_, c)| c.len() != n) {
        return Err(Error::GridMismatch);
    }

    let x = DMatrix::from_fn(n, k, |r, c| {
        if intercept {
            if c == 0 {
                1.0
            } else {
                columns[c - 1].1[r]
            }
        } else {
            columns[c].1[r]
        }
    });
    let qr = x.clone().qr();
    let rmat = qr.r();
    let collinear: Vec<String> = (0..k)
        .filter(|&j| {
            let norm = x.column(j).norm();
            norm == 0.0 || rmat[(j, j)].abs() <= 1e-10 * norm
        })
        .map(|j| names[j].clone())
        .collect();
    if !collinear.is_empty() {
        return Err(Error::RankDeficient(collinear));
    }

    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = rmat
        .solve_upper_triangular(&qty)
        .expect("full-rank R is invertible");
    let resid = &yv - &x * &beta;
    let ssr = resid.norm_squared();
    let df = n - k;
    let sigma2 = ssr / df as f64;

    let rinv = rmat
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("full-rank R is invertible");
    let cov_unscaled = &rinv * rinv.transpose();

    let tdist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    let tcrit = tdist.inverse_cdf(0.975);

    let mut out = RegressionResult {
        names,
        coefficients: beta.iter().copied().collect(),
        std_errors: Vec::with_capacity(k),
        t_stats: Vec::with_capacity(k),
        p_values: Vec::with_capacity(k),
        lower_95: Vec::with_capacity(k),
        upper_95: Vec::with_capacity(k),
        r_squared: 0.0,
        observations: n,
        degrees_of_freedom: df,
    };
    for j in 0..k {
        let b = beta[j];
        let se = (sigma2 * cov_unscaled[(j, j)]).sqrt();
        let t = if se > 0.0 {
            b / se
        } else if b == 0.0 {
            0.0
        } else {
            b.signum() * f64::INFINITY
        };
        let p = if t.is_infinite() {
            0.0
        } else {
            (2.0 * (1.0 - tdist.cdf(t.abs()))).clamp(0.0, 1.0)
        };
        out.std_errors.push(se);
        out.t_stats.push(t);
        out.p_values.push(p);
        out.lower_95.push(b - tcrit * se);
        out.upper_95.push(b + tcrit * se);
    }

    let sst = if intercept {
        let mean = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
    } else {
        y.iter().map(|v| v * v).sum::<f64>()
    };
    out.r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 1.0 };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str, v: &[f64]) -> (String, Vec<f64>) {
        (name.to_string(), v.to_vec())
    }

    #[test]
    fn perfect_line() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
        let r = ols_fit(&[col("x", &x)], &y, true).unwrap();
        assert!((r.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((r.coefficients[1] - 3.0).abs() < 1e-12);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_point_hand_example() {
        let r = ols_fit(&[col("x", &[0.0, 1.0, 2.0])], &[1.0, 2.0, 4.0], true).unwrap();
        assert!((r.coefficients[1] - 1.5).abs() < 1e-12);
        assert!((r.coefficients[0] - 5.0 / 6.0).abs() < 1e-12);
        // residuals (1/6, -1/3, 1/6): s^2 = 1/6, var(slope) = s^2 / Sxx = 1/12
        assert!((r.std_errors[1] - (1.0f64 / 12.0).sqrt()).abs() < 1e-12);
        assert_eq!(r.degrees_of_freedom, 1);
        // t = 1.5 / sqrt(1/12) = 5.196; two-sided p with 1 df = 1 - 2 atan(t) / pi
        let t = 1.5 / (1.0f64 / 12.0).sqrt();
        let p = 1.0 - 2.0 * t.atan() / std::f64::consts::PI;
        assert!((r.p_values[1] - p).abs() < 1e-9, "{} vs {p}", r.p_values[1]);
    }

    #[test]
    fn collinear_columns_are_named() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let err = ols_fit(&[col("a", &a), col("b", &b)], &[1.0, 0.0, 1.0, 0.0, 1.0], true).unwrap_err();
        match err {
            Error::RankDeficient(cols) => assert_eq!(cols, vec!["b".to_string()]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(
            ols_fit(&[col("x", &[1.0, 2.0])], &[1.0, 2.0], true),
            Err(Error::TooFewRows { .. })
        ));
    }
}
