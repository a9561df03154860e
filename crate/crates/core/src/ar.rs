//! Stage two: per-series AR(p) identification on the residuals, one-step AR forecasts, and
//! the stationarity toolkit (companion matrix, characteristic roots, Gramians, MA(inf)
//! weights and the sub-gaussian scale `sigma_x`).
//!
//! Lag vectors are most-recent-first: `alpha[i]` multiplies `x(t - 1 - i)`.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LSTSQ_RCOND: f64 = 1e-10;
/// Two roots closer than this are treated as repeated.
pub const ROOT_TOL: f64 = 1e-9;
const LYAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub alpha: Vec<f64>,
    pub p: usize,
    /// Mean square of the in-sample one-step residuals.
    pub noise_var: f64,
    /// Set when the lag design was rank deficient and a minimum-norm solution was returned.
    #[serde(default)]
    pub rank_deficient: bool,
}

impl ArModel {
    /// Order-0 model: always forecasts zero.
    pub fn zero(noise_var: f64) -> Self {
        Self {
            alpha: Vec::new(),
            p: 0,
            noise_var,
            rank_deficient: false,
        }
    }

    pub fn from_alpha(alpha: Vec<f64>, noise_var: f64) -> Self {
        Self {
            p: alpha.len(),
            alpha,
            noise_var,
            rank_deficient: false,
        }
    }
}

/// Least-squares AR(p) fit of `x(t) ~ sum_i alpha_i x(t - i)`, without intercept.
pub fn fit_ar(residuals: &[f64], p: usize) -> Result<ArModel> {
    let n = residuals.len();
    if p == 0 {
        let ms = residuals.iter().map(|x| x * x).sum::<f64>() / n.max(1) as f64;
        return Ok(ArModel::zero(ms));
    }
    if n < 2 * p + 1 {
        return Err(Error::Fit(format!(
            "AR({p}) needs at least {} observations, got {n}",
            2 * p + 1
        )));
    }
    let rows = n - p;
    let design = Mat::<f64>::from_fn(rows, p, |r, i| residuals[p + r - 1 - i]);
    let target = &residuals[p..];

    let svd = design
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let s1 = s[0];
    if s1.is_nan() || s1 <= 0.0 {
        // all-zero residuals: nothing to learn
        return Ok(ArModel {
            alpha: vec![0.0; p],
            p,
            noise_var: 0.0,
            rank_deficient: true,
        });
    }
    let u = svd.U();
    let v = svd.V();
    let mut alpha = vec![0.0; p];
    let mut used = 0;
    for (c, &sc) in s.iter().enumerate() {
        if sc <= LSTSQ_RCOND * s1 {
            continue;
        }
        used += 1;
        let proj: f64 = (0..rows).map(|r| u[(r, c)] * target[r]).sum();
        for (i, a) in alpha.iter_mut().enumerate() {
            *a += v[(i, c)] * proj / sc;
        }
    }
    let sse: f64 = (0..rows)
        .map(|r| {
            let pred: f64 = (0..p).map(|i| alpha[i] * design[(r, i)]).sum();
            (target[r] - pred).powi(2)
        })
        .sum();
    Ok(ArModel {
        alpha,
        p,
        noise_var: sse / rows as f64,
        rank_deficient: used < p,
    })
}

/// Conditional-mean one-step forecast `alpha . lags`, `lags[0] = x(t - 1)`.
pub fn forecast_ar(model: &ArModel, lags: &[f64]) -> Result<f64> {
    if lags.len() != model.p {
        return Err(Error::Shape(format!(
            "AR({}) needs {} lags, got {}",
            model.p,
            model.p,
            lags.len()
        )));
    }
    Ok(model.alpha.iter().zip(lags).map(|(a, x)| a * x).sum())
}

/// `p x p` transition matrix: `alpha` on the first row, identity shifted below it.
pub fn companion(alpha: &[f64]) -> Mat<f64> {
    let p = alpha.len();
    Mat::from_fn(p, p, |i, j| {
        if i == 0 {
            alpha[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    })
}

/// Roots of `z^p - sum_i alpha_i z^{p-i}`, largest modulus first.
pub fn characteristic_roots(alpha: &[f64]) -> Result<Vec<Complex64>> {
    let mut roots = match alpha.len() {
        0 => Vec::new(),
        1 => vec![Complex64::new(alpha[0], 0.0)],
        2 => {
            // closed form is more accurate than a general eigensolver here
            let (b, c) = (alpha[0], alpha[1]);
            let disc = Complex64::new(b * b + 4.0 * c, 0.0).sqrt();
            vec![(Complex64::new(b, 0.0) + disc) / 2.0, (Complex64::new(b, 0.0) - disc) / 2.0]
        }
        _ => companion(alpha)
            .eigenvalues()
            .map_err(|e| Error::Numerical(format!("eigenvalue solver failed: {e:?}")))?,
    };
    roots.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.im.total_cmp(&a.im))
            .then(b.re.total_cmp(&a.re))
    });
    Ok(roots)
}

/// Stationarity diagnostics of a fitted AR model.
#[derive(Debug, Clone)]
pub struct ArDiagnostics {
    pub companion: Mat<f64>,
    pub roots: Vec<Complex64>,
    pub lambda_star: f64,
    /// Partial-fraction weights `a_i = prod_{j != i} (1 - lambda_j / lambda_i)^{-1}`.
    pub weights: Vec<Complex64>,
    /// `sum_i |a_i|`.
    pub c_lambda: f64,
    /// Innovation standard deviation the diagnostics were computed with.
    pub sigma: f64,
    /// `c_lambda * sigma / (1 - lambda_star)`.
    pub sigma_x: f64,
    /// Controllability Gramian `sum_t A^t B B^T (A^T)^t`.
    pub gramian_psi: Mat<f64>,
    /// `sum_t A^t (A^T)^t`.
    pub gramian_gamma: Mat<f64>,
    /// MA(inf) weights `beta_k` for `k < K`.
    pub ma_coeffs: Vec<f64>,
    pub psi_eig_min: f64,
    pub psi_eig_max: f64,
    pub gamma_eig_max: f64,
    /// `sigma^2 lambda_min(Psi) / (6 p)`: the residual estimation error below which
    /// identification guarantees apply. Informational only.
    pub est_err_threshold: f64,
}

/// Computes diagnostics with innovation scale `sigma` (defaults to `sqrt(noise_var)`) and
/// `ma_terms` MA(inf) weights.
pub fn diagnostics(model: &ArModel, sigma: Option<f64>, ma_terms: usize) -> Result<ArDiagnostics> {
    let p = model.p;
    if p == 0 {
        return Err(Error::Config("diagnostics need an AR order >= 1".into()));
    }
    let roots = characteristic_roots(&model.alpha)?;
    let lambda_star = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    if lambda_star >= 1.0 {
        return Err(Error::NonStationary { lambda_star });
    }
    let mut gap = f64::INFINITY;
    for i in 0..p {
        for j in i + 1..p {
            gap = gap.min((roots[i] - roots[j]).norm());
        }
    }
    if gap < ROOT_TOL {
        return Err(Error::DegenerateRoots { gap });
    }

    let weights: Vec<Complex64> = (0..p)
        .map(|i| {
            if roots[i].norm() == 0.0 {
                return Complex64::new(if p == 1 { 1.0 } else { 0.0 }, 0.0);
            }
            (0..p)
                .filter(|&j| j != i)
                .map(|j| (Complex64::new(1.0, 0.0) - roots[j] / roots[i]).inv())
                .product()
        })
        .collect();
    let c_lambda: f64 = weights.iter().map(|a| a.norm()).sum();
    let sigma = sigma.unwrap_or_else(|| model.noise_var.sqrt());
    let sigma_x = c_lambda * sigma / (1.0 - lambda_star);

    let a = companion(&model.alpha);
    let mut bbt = Mat::<f64>::zeros(p, p);
    bbt[(0, 0)] = 1.0;
    let psi = lyapunov_fixed_point(a.as_ref(), bbt.as_ref(), lambda_star)?;
    let gamma = lyapunov_fixed_point(a.as_ref(), Mat::<f64>::identity(p, p).as_ref(), lambda_star)?;

    let ma_coeffs = ma_coefficients(&model.alpha, ma_terms);

    let psi_eigs = sym_eigenvalues(psi.as_ref())?;
    let gamma_eigs = sym_eigenvalues(gamma.as_ref())?;
    let psi_eig_min = psi_eigs[0];
    Ok(ArDiagnostics {
        companion: a,
        roots,
        lambda_star,
        weights,
        c_lambda,
        sigma,
        sigma_x,
        gramian_psi: psi,
        gramian_gamma: gamma,
        ma_coeffs,
        psi_eig_min,
        psi_eig_max: *psi_eigs.last().unwrap(),
        gamma_eig_max: *gamma_eigs.last().unwrap(),
        est_err_threshold: sigma * sigma * psi_eig_min / (6.0 * p as f64),
    })
}

/// MA(inf) weights from the recursion `beta_0 = 1`, `beta_k = sum_i alpha_i beta_{k-i}`.
pub fn ma_coefficients(alpha: &[f64], terms: usize) -> Vec<f64> {
    let mut beta: Vec<f64> = Vec::with_capacity(terms);
    for k in 0..terms {
        let b = if k == 0 {
            1.0
        } else {
            alpha
                .iter()
                .take(k)
                .enumerate()
                .map(|(i, a)| a * beta[k - 1 - i])
                .sum()
        };
        beta.push(b);
    }
    beta
}

/// Closed form `beta_k = Re sum_i a_i lambda_i^k` for distinct roots.
pub fn ma_from_roots(weights: &[Complex64], roots: &[Complex64], terms: usize) -> Vec<f64> {
    (0..terms)
        .map(|k| {
            weights
                .iter()
                .zip(roots)
                .map(|(w, r)| w * r.powu(k as u32))
                .sum::<Complex64>()
                .re
        })
        .collect()
}

/// Eigenvalues of a symmetric matrix in non-decreasing order.
pub fn sym_eigenvalues(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigenvalue solver failed: {e:?}")))
}

/// Solves `X = A X A^T + Q` by iterating the map from `X = Q` until successive iterates
/// agree to 1e-12 in max-norm. `rho` is the spectral radius of `A` and sets the iteration cap.
pub fn lyapunov_fixed_point(a: MatRef<'_, f64>, q: MatRef<'_, f64>, rho: f64) -> Result<Mat<f64>> {
    if rho >= 1.0 {
        return Err(Error::NonStationary { lambda_star: rho });
    }
    let cap = if rho > 0.0 {
        (10.0 * LYAP_TOL.ln() / (rho * rho).ln()).ceil() as usize
    } else {
        0
    }
    .max(100);
    let mut x = q.to_owned();
    for _ in 0..cap {
        let next = a * &x * a.transpose() + q;
        let delta = max_abs_diff(next.as_ref(), x.as_ref());
        x = next;
        if delta < LYAP_TOL {
            return Ok(x);
        }
    }
    Err(Error::Numerical(format!(
        "Lyapunov iteration did not converge in {cap} steps"
    )))
}

pub(crate) fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close_set(roots: &[Complex64], want: &[Complex64]) {
        assert_eq!(roots.len(), want.len());
        for w in want {
            assert!(
                roots.iter().any(|r| (r - w).norm() < 1e-12),
                "{w} not in {roots:?}"
            );
        }
    }

    #[test]
    fn exact_recursion_recovered() {
        let x: Vec<f64> = (0..50).map(|t| 0.8f64.powi(t)).collect();
        let m = fit_ar(&x, 1).unwrap();
        assert_abs_diff_eq!(m.alpha[0], 0.8, epsilon = 1e-12);
        assert!(m.noise_var < 1e-20);
    }

    #[test]
    fn too_short() {
        assert!(matches!(fit_ar(&[1., 2., 3., 4.], 2), Err(Error::Fit(_))));
        assert!(fit_ar(&[1., 2., 3., 4., 5.], 2).is_ok());
    }

    #[test]
    fn rank_deficient_design_falls_back() {
        // constant residuals: both lag columns identical
        let m = fit_ar(&[2.0; 30], 2).unwrap();
        assert!(m.rank_deficient);
        assert_abs_diff_eq!(m.alpha[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(m.alpha[1], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn order_zero() {
        let m = fit_ar(&[1.0, -1.0], 0).unwrap();
        assert_eq!(m.p, 0);
        assert_eq!(forecast_ar(&m, &[]).unwrap(), 0.0);
        assert_eq!(m.noise_var, 1.0);
    }

    #[test]
    fn forecast_arithmetic() {
        let m = ArModel::from_alpha(vec![0.5], 1.0);
        assert_eq!(forecast_ar(&m, &[2.0]).unwrap(), 1.0);
        let m = ArModel::from_alpha(vec![0.0; 3], 1.0);
        assert_eq!(forecast_ar(&m, &[1., 2., 3.]).unwrap(), 0.0);
        let m = ArModel::from_alpha(vec![1.5, -0.56], 1.0);
        assert_abs_diff_eq!(forecast_ar(&m, &[1., 1.]).unwrap(), 0.94, epsilon = 1e-15);
        assert!(matches!(forecast_ar(&m, &[1.]), Err(Error::Shape(_))));
    }

    #[test]
    fn roots_examples() {
        close_set(&characteristic_roots(&[0.5]).unwrap(), &[Complex64::new(0.5, 0.0)]);
        let r = characteristic_roots(&[1.5, -0.56]).unwrap();
        close_set(&r, &[Complex64::new(0.8, 0.0), Complex64::new(0.7, 0.0)]);
        assert!(r[0].norm() >= r[1].norm());
        let r = characteristic_roots(&[0.0, -0.25]).unwrap();
        close_set(&r, &[Complex64::new(0.0, 0.5), Complex64::new(0.0, -0.5)]);
    }

    #[test]
    fn roots_via_companion_for_higher_order() {
        // (z - 0.5)(z + 0.4)(z - 0.2) = z^3 - 0.3 z^2 - 0.18 z + 0.04
        let r = characteristic_roots(&[0.3, 0.18, -0.04]).unwrap();
        for (got, want) in r.iter().zip([0.5, -0.4, 0.2]) {
            assert!((got - Complex64::new(want, 0.0)).norm() < 1e-10, "{got}");
        }
    }

    #[test]
    fn companion_layout() {
        let a = companion(&[0.3, 0.18, -0.04]);
        assert_eq!(a[(0, 2)], -0.04);
        assert_eq!(a[(1, 0)], 1.0);
        assert_eq!(a[(2, 1)], 1.0);
        assert_eq!(a[(2, 2)], 0.0);
        assert_eq!(a[(1, 1)], 0.0);
    }

    #[test]
    fn ar1_diagnostics() {
        let d = diagnostics(&ArModel::from_alpha(vec![0.5], 1.0), Some(1.0), 10).unwrap();
        assert_abs_diff_eq!(d.c_lambda, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.sigma_x, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.gramian_psi[(0, 0)], 4.0 / 3.0, epsilon = 1e-11);
        assert_abs_diff_eq!(d.ma_coeffs[3], 0.125, epsilon = 1e-15);
    }

    #[test]
    fn ar2_partial_fractions() {
        let d = diagnostics(&ArModel::from_alpha(vec![1.5, -0.56], 1.0), None, 5).unwrap();
        // roots (0.8, 0.7): a = (1/(1 - 7/8), 1/(1 - 8/7)) = (8, -7)
        assert_abs_diff_eq!(d.weights[0].re, 8.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d.weights[1].re, -7.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d.c_lambda, 15.0, epsilon = 1e-9);
        assert_eq!(d.ma_coeffs[0], 1.0);
        assert_eq!(d.ma_coeffs[1], 1.5);
        assert_abs_diff_eq!(d.ma_coeffs[2], 1.5 * 1.5 - 0.56, epsilon = 1e-15);
        // 8 * 0.8 - 7 * 0.7 = 1.5
        let closed = ma_from_roots(&d.weights, &d.roots, 5);
        for (a, b) in closed.iter().zip(&d.ma_coeffs) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn gramian_solves_lyapunov() {
        for alpha in [vec![0.5], vec![1.5, -0.56], vec![0.0, -0.25], vec![0.3, 0.18, -0.04]] {
            let d = diagnostics(&ArModel::from_alpha(alpha, 1.0), Some(1.0), 4).unwrap();
            let a = &d.companion;
            let p = a.nrows();
            let mut bbt = Mat::<f64>::zeros(p, p);
            bbt[(0, 0)] = 1.0;
            let rhs = a * &d.gramian_psi * a.transpose() + &bbt;
            assert!(max_abs_diff(rhs.as_ref(), d.gramian_psi.as_ref()) < 1e-10);
            assert!(d.psi_eig_min > 0.0);
        }
    }

    #[test]
    fn non_stationary_rejected() {
        let e = diagnostics(&ArModel::from_alpha(vec![1.01], 1.0), None, 3);
        assert!(matches!(e, Err(Error::NonStationary { .. })));
    }

    #[test]
    fn repeated_roots_rejected() {
        // (z - 0.5)^2
        let e = diagnostics(&ArModel::from_alpha(vec![1.0, -0.25], 1.0), None, 3);
        assert!(matches!(e, Err(Error::DegenerateRoots { .. })));
    }
}
