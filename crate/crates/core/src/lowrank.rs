//! Dense SVD, hard singular value thresholding and rank selection.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thin SVD with singular values in non-increasing order.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    /// `rows x r` left singular vectors.
    pub left: Mat<f64>,
    /// `cols x r` right singular vectors.
    pub right: Mat<f64>,
}

impl SvdResult {
    /// Sum of the top `k` rank-one terms `s_l u_l v_l^T`.
    pub fn reconstruct(&self, k: usize) -> Mat<f64> {
        let k = k.min(self.singular_values.len());
        let rows = self.left.nrows();
        let cols = self.right.nrows();
        if k == 0 {
            return Mat::zeros(rows, cols);
        }
        let scaled = Mat::<f64>::from_fn(rows, k, |i, j| {
            self.left[(i, j)] * self.singular_values[j]
        });
        let vk = self.right.subcols(0, k);
        scaled.as_ref() * vk.transpose()
    }
}

pub fn svd(matrix: MatRef<'_, f64>) -> Result<SvdResult> {
    let dec = matrix
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let singular_values = dec.S().column_vector().iter().copied().collect();
    Ok(SvdResult {
        singular_values,
        left: dec.U().to_owned(),
        right: dec.V().to_owned(),
    })
}

pub fn singular_values(matrix: MatRef<'_, f64>) -> Result<Vec<f64>> {
    matrix
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))
}

/// Best rank-`k` approximation in Frobenius norm.
pub fn hsvt(matrix: MatRef<'_, f64>, k: usize) -> Result<Mat<f64>> {
    let max_k = matrix.nrows().min(matrix.ncols());
    if k == 0 || k > max_k {
        return Err(Error::Rank(format!(
            "rank {k} outside [1, {max_k}] for a {}x{} matrix",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    Ok(svd(matrix)?.reconstruct(k))
}

/// How many singular triplets to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankRule {
    /// Keep exactly `k` (clamped to the numerical rank).
    Fixed(usize),
    /// Smallest `k` capturing this fraction of `sum s_l^2`.
    Energy(f64),
    /// Shape-aware threshold on the median singular value.
    Universal,
}

impl RankRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RankRule::Fixed(0) => Err(Error::Config("fixed rank must be >= 1".into())),
            RankRule::Energy(f) if !(f > 0.0 && f <= 1.0) => Err(Error::Config(format!(
                "energy fraction {f} outside (0, 1]"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for RankRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankRule::Fixed(k) => write!(f, "fixed:{k}"),
            RankRule::Energy(x) => write!(f, "energy:{x}"),
            RankRule::Universal => f.write_str("universal"),
        }
    }
}

impl FromStr for RankRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse rank rule '{s}' (fixed:K, energy:F, universal)"));
        let rule = match s.split_once(':') {
            Some(("fixed", k)) => RankRule::Fixed(k.parse().map_err(|_| bad())?),
            Some(("energy", f)) => RankRule::Energy(f.parse().map_err(|_| bad())?),
            None if s == "universal" => RankRule::Universal,
            _ => return Err(bad()),
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl Serialize for RankRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RankRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Approximation of the optimal hard-threshold coefficient for unknown noise level,
/// as a function of the aspect ratio `beta = min(rows, cols) / max(rows, cols)`.
pub fn universal_omega(beta: f64) -> f64 {
    0.56 * beta.powi(3) - 0.95 * beta.powi(2) + 1.82 * beta + 1.43
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Relative gap under which two singular values are treated as tied.
const TIE_TOL: f64 = 1e-12;

/// Chooses `k` from a non-increasing spectrum. Tied values at the cut are kept together.
pub fn select_rank(singular_values: &[f64], rule: RankRule, shape: (usize, usize)) -> Result<usize> {
    rule.validate()?;
    let s = singular_values;
    let s1 = s.first().copied().unwrap_or(0.0);
    if s1.is_nan() || s1 <= 0.0 {
        return Err(Error::Rank("spectrum has no positive singular value".into()));
    }
    let floor = s1 * (shape.0.max(shape.1).max(1) as f64) * f64::EPSILON;
    let positive = s.iter().take_while(|&&x| x > floor).count().max(1);

    let k = match rule {
        RankRule::Fixed(k) => k.min(positive),
        RankRule::Energy(frac) => {
            let total: f64 = s.iter().map(|x| x * x).sum();
            let target = frac * total * (1.0 - 1e-12);
            let mut acc = 0.0;
            let mut k = s.len();
            for (i, x) in s.iter().enumerate() {
                acc += x * x;
                if acc >= target {
                    k = i + 1;
                    break;
                }
            }
            k.min(positive)
        }
        RankRule::Universal => {
            let (lo, hi) = (shape.0.min(shape.1), shape.0.max(shape.1));
            let beta = lo as f64 / hi.max(1) as f64;
            let tau = universal_omega(beta) * median(s);
            s.iter().filter(|&&x| x > tau).count().clamp(1, positive)
        }
    };
    let mut k = k.max(1);
    while k < positive && (s[k - 1] - s[k]).abs() <= TIE_TOL * s1 {
        k += 1;
    }
    Ok(k)
}
