//! Least-squares models of the GEV parameters against the PRS configuration:
//!
//! - `μ(m, P) = a₁/√m + a₂·P + a₃` (P in dBW),
//! - `σ(m) = b₁·m + b₂`,
//! - `k(m) = c₁/√m + c₂`,
//!
//! fitted separately for every comb size. Each system is solved by a
//! Householder QR factorization, which gives the normal-equation solution
//! `(XᵀX)⁻¹Xᵀy` without squaring the condition number.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::gev::GevParams;
use crate::{Error, Result};

/// Solution of an overdetermined linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// `y − Xβ`.
    pub residuals: Vec<f64>,
}

impl LeastSquares {
    pub fn rms(&self) -> f64 {
        (self.residuals.iter().map(|r| r * r).sum::<f64>() / self.residuals.len() as f64).sqrt()
    }
}

/// Minimizes `‖y − Xβ‖` for the row-major design matrix `rows`. A column whose
/// pivot vanishes relative to the largest one is reported as rank-deficient
/// under `model` and `columns[j]`.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64], model: &str, columns: &[&str]) -> Result<LeastSquares> {
    let n = rows.len();
    let p = columns.len();
    if n != y.len() || rows.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidArgument(format!(
            "{model} model: design matrix shape mismatch"
        )));
    }
    if n < p {
        return Err(Error::RankDeficient {
            model: model.into(),
            column: columns[n].into(),
        });
    }
    // Column-major copy, reduced in place to R; b accumulates Qᵀy.
    let mut a: Vec<Vec<f64>> = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut b = y.to_vec();
    let scale = a
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    for j in 0..p {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 * scale || scale == 0.0 {
            return Err(Error::RankDeficient {
                model: model.into(),
                column: columns[j].into(),
            });
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(col.iter()).map(|(x, c)| x * c).sum();
            let f = 2.0 * dot / vv;
            col.iter_mut().zip(&v).for_each(|(c, x)| *c -= f * x);
        };
        for col in a.iter_mut().skip(j) {
            reflect(&mut col[j..]);
        }
        reflect(&mut b[j..]);
    }
    let mut beta = vec![0.0; p];
    for j in (0..p).rev() {
        let s: f64 = (j + 1..p).map(|c| a[c][j] * beta[c]).sum();
        beta[j] = (b[j] - s) / a[j][j];
    }
    let residuals = rows
        .iter()
        .zip(y)
        .map(|(r, yi)| yi - r.iter().zip(&beta).map(|(x, c)| x * c).sum::<f64>())
        .collect();
    Ok(LeastSquares {
        coefficients: beta,
        residuals,
    })
}

/// One fitted GEV together with the configuration it was fitted for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterFit {
    pub symbols: usize,
    pub ptx_dbw: f64,
    pub comb_size: usize,
    pub params: GevParams,
}

/// Regression coefficients for one comb size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombModel {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub rms_mu: f64,
    pub rms_sigma: f64,
    pub rms_k: f64,
    /// Number of fits the coefficients were estimated from.
    pub points: usize,
}

impl CombModel {
    pub fn eval(&self, m: f64, ptx_dbw: f64) -> (f64, f64, f64) {
        let u = 1.0 / m.sqrt();
        let k = self.c1 * u + self.c2;
        let sigma = self.b1 * m + self.b2;
        let mu = self.a1 * u + self.a2 * ptx_dbw + self.a3;
        (k, sigma, mu)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GevModel {
    /// Keyed by comb size.
    pub combs: BTreeMap<usize, CombModel>,
}

/// Fits the three parameter models for every comb size present in `fits`.
pub fn fit_parameter_models(fits: &[ParameterFit]) -> Result<GevModel> {
    let mut by_comb: BTreeMap<usize, Vec<&ParameterFit>> = BTreeMap::new();
    for f in fits {
        by_comb.entry(f.comb_size).or_default().push(f);
    }
    if by_comb.is_empty() {
        return Err(Error::InvalidArgument("no fits to regress".into()));
    }
    let mut model = GevModel::default();
    for (cs, group) in by_comb {
        let ms: BTreeSet<usize> = group.iter().map(|f| f.symbols).collect();
        let ps: BTreeSet<u64> = group.iter().map(|f| f.ptx_dbw.to_bits()).collect();
        if ms.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "comb size {cs}: the symbol-count (m) dimension spans {} distinct values, need 3",
                ms.len()
            )));
        }
        if ps.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "comb size {cs}: the transmit-power (P_TX) dimension spans {} distinct values, need 2",
                ps.len()
            )));
        }
        let u = |f: &ParameterFit| 1.0 / (f.symbols as f64).sqrt();

        let rows: Vec<Vec<f64>> = group.iter().map(|f| vec![u(f), f.ptx_dbw, 1.0]).collect();
        let y: Vec<f64> = group.iter().map(|f| f.params.location).collect();
        let mu = least_squares(&rows, &y, &format!("mu (cs={cs})"), &["1/sqrt(m)", "P_TX", "1"])?;

        let rows: Vec<Vec<f64>> = group.iter().map(|f| vec![f.symbols as f64, 1.0]).collect();
        let y: Vec<f64> = group.iter().map(|f| f.params.scale).collect();
        let sigma = least_squares(&rows, &y, &format!("sigma (cs={cs})"), &["m", "1"])?;

        let rows: Vec<Vec<f64>> = group.iter().map(|f| vec![u(f), 1.0]).collect();
        let y: Vec<f64> = group.iter().map(|f| f.params.shape).collect();
        let k = least_squares(&rows, &y, &format!("k (cs={cs})"), &["1/sqrt(m)", "1"])?;

        model.combs.insert(
            cs,
            CombModel {
                a1: mu.coefficients[0],
                a2: mu.coefficients[1],
                a3: mu.coefficients[2],
                b1: sigma.coefficients[0],
                b2: sigma.coefficients[1],
                c1: k.coefficients[0],
                c2: k.coefficients[1],
                rms_mu: mu.rms(),
                rms_sigma: sigma.rms(),
                rms_k: k.rms(),
                points: group.len(),
            },
        );
    }
    Ok(model)
}

/// GEV parameters the model predicts for `m` symbols at `ptx_dbw` on comb
/// size `cs`.
pub fn model_eval(model: &GevModel, m: f64, ptx_dbw: f64, cs: usize) -> Result<GevParams> {
    let c = model
        .combs
        .get(&cs)
        .ok_or_else(|| Error::Evaluation(format!("comb size {cs} is not in the model")))?;
    let (k, sigma, mu) = c.eval(m, ptx_dbw);
    if !(sigma > 0.0) {
        return Err(Error::Evaluation(format!("sigma = {sigma} at m = {m} (cs={cs})")));
    }
    Ok(GevParams {
        shape: k,
        scale: sigma,
        location: mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det3(m: [[f64; 3]; 3]) -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    #[test]
    fn matches_pseudo_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
            .collect();
        let y: Vec<f64> = (0..12).map(|_| rng.random::<f64>() * 10.0).collect();
        let ls = least_squares(&rows, &y, "test", &["x0", "x1", "x2"]).unwrap();

        // (XᵀX)⁻¹Xᵀy by Cramer's rule.
        let mut xtx = [[0.0; 3]; 3];
        let mut xty = [0.0; 3];
        for (r, yi) in rows.iter().zip(&y) {
            for i in 0..3 {
                xty[i] += r[i] * yi;
                for j in 0..3 {
                    xtx[i][j] += r[i] * r[j];
                }
            }
        }
        let d = det3(xtx);
        for c in 0..3 {
            let mut m = xtx;
            for i in 0..3 {
                m[i][c] = xty[i];
            }
            assert!((det3(m) / d - ls.coefficients[c]).abs() < 1e-9);
        }
        // Residuals are orthogonal to every column.
        for c in 0..3 {
            let dot: f64 = rows.iter().zip(&ls.residuals).map(|(r, e)| r[c] * e).sum();
            assert!(dot.abs() < 1e-8);
        }
    }

    fn planted() -> CombModel {
        CombModel {
            a1: 1.0,
            a2: 2.0,
            a3: -180.0,
            b1: -0.09,
            b2: 8.35,
            c1: -0.185,
            c2: 0.038,
            rms_mu: 0.0,
            rms_sigma: 0.0,
            rms_k: 0.0,
            points: 0,
        }
    }

    fn synthetic(model: &CombModel, cs: usize) -> Vec<ParameterFit> {
        let mut fits = Vec::new();
        for m in [1, 2, 4, 8, 12] {
            for p in [1.0, 10.0, 30.0] {
                let (k, sigma, mu) = model.eval(m as f64, p);
                fits.push(ParameterFit {
                    symbols: m,
                    ptx_dbw: p,
                    comb_size: cs,
                    params: GevParams {
                        shape: k,
                        scale: sigma,
                        location: mu,
                    },
                });
            }
        }
        fits
    }

    #[test]
    fn noiseless_recovery() {
        let truth = planted();
        let model = fit_parameter_models(&synthetic(&truth, 4)).unwrap();
        let c = model.combs[&4];
        for (got, want) in [
            (c.a1, truth.a1),
            (c.a2, truth.a2),
            (c.a3, truth.a3),
            (c.b1, truth.b1),
            (c.b2, truth.b2),
            (c.c1, truth.c1),
            (c.c2, truth.c2),
        ] {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!(c.rms_mu < 1e-9 && c.rms_sigma < 1e-9 && c.rms_k < 1e-9);
        assert_eq!(c.points, 15);
    }

    #[test]
    fn table_row_evaluation() {
        let mut model = GevModel::default();
        model.combs.insert(
            4,
            CombModel {
                a1: 0.629,
                a2: 1.99,
                a3: -182.0,
                ..planted()
            },
        );
        let p = model_eval(&model, 1.0, 30.0, 4).unwrap();
        assert!((p.location - -121.671).abs() < 1e-9);
        assert!((p.scale - 8.26).abs() < 1e-9);
        assert!((p.shape - -0.147).abs() < 1e-9);
        // k tends to c₂ as m grows.
        let (k, _, _) = model.combs[&4].eval(1e12, 30.0);
        assert!((k - 0.038).abs() < 1e-6);
        // σ = b₁m + b₂ turns negative for large m.
        assert!(matches!(model_eval(&model, 200.0, 30.0, 4), Err(Error::Evaluation(_))));
        assert!(matches!(model_eval(&model, 1.0, 30.0, 6), Err(Error::Evaluation(_))));
    }

    #[test]
    fn span_and_rank_errors() {
        let fits = synthetic(&planted(), 4);
        let one_power: Vec<_> = fits.iter().copied().filter(|f| f.ptx_dbw == 30.0).collect();
        let e = fit_parameter_models(&one_power).unwrap_err();
        assert!(e.to_string().contains("P_TX"), "{e}");
        assert_eq!(e.exit_code(), 2);
        let two_m: Vec<_> = fits.iter().copied().filter(|f| f.symbols <= 2).collect();
        assert!(fit_parameter_models(&two_m).unwrap_err().to_string().contains("(m)"));

        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        match least_squares(&rows, &[1.0, 2.0, 3.0], "demo", &["x", "2x"]) {
            Err(Error::RankDeficient { model, column }) => {
                assert_eq!((model.as_str(), column.as_str()), ("demo", "2x"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn model_json_round_trip() {
        let model = fit_parameter_models(&synthetic(&planted(), 12)).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        assert!(json.contains("\"12\""));
        assert_eq!(serde_json::from_str::<GevModel>(&json).unwrap(), model);
    }
}
