//! Closed-form margin machinery: the normalized margin, concentration
//! bounds on projection ranking errors, and minimal sufficient output
//! dimensions derived from them.
//!
//! Everything is driven by the rate function `g(eps) = eps^2/2 - eps^3/3`
//! and the tail shape `exp(-(k/2) g(eps))`:
//!
//! - pairwise ranking error:  `4 exp(-(k/2) g(eps))`;
//! - recall error at rank r0: `4 (|D| - r0 + 1) exp(-(k/2) g(eps))`;
//! - squared-norm error:      `2 exp(-(k/2) g(eps))`;
//! - inner-product distortion beyond `(eps/2)(|x|^2 + |y|^2)`:
//!   `4 exp(-(k/2) g(eps))`.
//!
//! Sufficient-k calculators invert these: the returned value is the minimal
//! integer satisfying the corresponding inequality, so `k` meets the target
//! failure probability and `k - 1` does not.

use serde::{Deserialize, Serialize};

use crate::corpus::SparseVector;
use crate::{Error, Result};

/// Normalized margin `<q, d1 - d2> / (|q| * |d1 - d2|)`, computed by one
/// three-way merge over the sparse supports (the difference vector is never
/// materialized). Exactly in `[-1, 1]` (Cauchy–Schwarz, clamped against
/// float rounding).
///
/// Errors if `q = 0` or `d1 = d2` (margin undefined).
pub fn normalized_margin(q: &SparseVector, d1: &SparseVector, d2: &SparseVector) -> Result<f64> {
    if q.is_zero() {
        return Err(Error::UndefinedMargin("query vector is zero"));
    }
    let (a, b, c) = (q.entries(), d1.entries(), d2.entries());
    let (mut i, mut j, mut l) = (0usize, 0usize, 0usize);
    let mut num = 0.0f64;
    let mut diff_sq = 0.0f64;
    while j < b.len() || l < c.len() {
        let id_b = b.get(j).map(|e| e.0).unwrap_or(u32::MAX);
        let id_c = c.get(l).map(|e| e.0).unwrap_or(u32::MAX);
        let id = id_b.min(id_c);
        let w1 = if id_b == id {
            j += 1;
            b[j - 1].1
        } else {
            0.0
        };
        let w2 = if id_c == id {
            l += 1;
            c[l - 1].1
        } else {
            0.0
        };
        let delta = w1 - w2;
        if delta == 0.0 {
            continue;
        }
        diff_sq += delta * delta;
        while i < a.len() && a[i].0 < id {
            i += 1;
        }
        if i < a.len() && a[i].0 == id {
            num += a[i].1 * delta;
        }
    }
    if diff_sq == 0.0 {
        return Err(Error::UndefinedMargin("documents are identical"));
    }
    Ok((num / (q.norm() * diff_sq.sqrt())).clamp(-1.0, 1.0))
}

/// Concentration rate `g(eps) = eps^2/2 - eps^3/3`; positive on (0, 1].
pub fn concentration_rate(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(eps * eps / 2.0 - eps * eps * eps / 3.0)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::OutOfRange(format!("eps must be in (0,1], got {eps}")));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::OutOfRange(format!("beta must be in (0,1), got {beta}")));
    }
    Ok(())
}

/// Probability bound `4 exp(-(k/2) g(eps))` on a projection reversing the
/// sign of a pairwise score gap with normalized margin `eps`. Returned raw
/// (may exceed 1 for small k); clamp at the reporting layer.
pub fn pairwise_error_bound(eps: f64, k: u32) -> Result<f64> {
    if k < 1 {
        return Err(Error::OutOfRange("k must be >= 1".into()));
    }
    Ok(4.0 * (-(k as f64 / 2.0) * concentration_rate(eps)?).exp())
}

/// Smallest k with `k >= 2 g(eps)^(-1) ln(4/beta)`, i.e. the minimal
/// dimension at which [`pairwise_error_bound`] reaches `beta`.
pub fn sufficient_k_pairwise(eps: f64, beta: f64) -> Result<u32> {
    check_beta(beta)?;
    let rate = concentration_rate(eps)?;
    let threshold = 2.0 * (4.0 / beta).ln() / rate;
    Ok((threshold.ceil() as u32).max(1))
}

/// Smallest k with `k > 12 eps^(-2) ln(4/beta)` (strict), the looser
/// quadratic-rate form; always >= [`sufficient_k_pairwise`].
pub fn sufficient_k_quadratic(eps: f64, beta: f64) -> Result<u32> {
    check_eps(eps)?;
    check_beta(beta)?;
    let threshold = 12.0 / (eps * eps) * (4.0 / beta).ln();
    Ok((threshold.floor() as u32).saturating_add(1))
}

/// Probability bound `C exp(-(k/2) g(eps))` with `C = 4 (|D| - r0 + 1)` on
/// the gold document falling to rank `r0` or worse after projection, where
/// `eps` is the `r0`'th smallest margin against the gold document.
pub fn recall_error_bound(eps: f64, k: u32, d_size: u32, r0: u32) -> Result<f64> {
    if k < 1 {
        return Err(Error::OutOfRange("k must be >= 1".into()));
    }
    let c = recall_constant(d_size, r0)?;
    Ok(c * (-(k as f64 / 2.0) * concentration_rate(eps)?).exp())
}

/// `C = 4 (|D| - r0 + 1)`.
pub fn recall_constant(d_size: u32, r0: u32) -> Result<f64> {
    if r0 < 1 || r0 > d_size {
        return Err(Error::OutOfRange(format!("r0 must be in [1, |D|={d_size}], got {r0}")));
    }
    Ok(4.0 * (d_size - r0 + 1) as f64)
}

/// Smallest k with `k >= 2 g(eps)^(-1) ln(C/beta)`: the minimal dimension
/// at which [`recall_error_bound`] reaches `beta`.
pub fn sufficient_k_recall(eps: f64, beta: f64, d_size: u32, r0: u32) -> Result<u32> {
    check_beta(beta)?;
    let rate = concentration_rate(eps)?;
    let c = recall_constant(d_size, r0)?;
    let threshold = 2.0 * (c / beta).ln() / rate;
    Ok((threshold.ceil() as u32).max(1))
}

/// Worst-case margin of a boolean ranking gap of at least one term:
/// `(2 L_Q L_D)^(-1/2)` for queries with at most `L_Q` and documents with at
/// most `L_D` unique terms.
pub fn boolean_min_margin(l_q: u32, l_d: u32) -> Result<f64> {
    if l_q < 1 || l_d < 1 {
        return Err(Error::OutOfRange("L_Q and L_D must be >= 1".into()));
    }
    Ok(1.0 / (2.0 * l_q as f64 * l_d as f64).sqrt())
}

/// Smallest k with `k >= 24 L_Q L_D ln(4/beta)`: dimension sufficient to
/// preserve every boolean ranking gap with probability `1 - beta`. Equals
/// the quadratic form evaluated at the boolean minimum margin.
pub fn sufficient_k_boolean(l_q: u32, l_d: u32, beta: f64) -> Result<u32> {
    if l_q < 1 || l_d < 1 {
        return Err(Error::OutOfRange("L_Q and L_D must be >= 1".into()));
    }
    check_beta(beta)?;
    let threshold = 24.0 * l_q as f64 * l_d as f64 * (4.0 / beta).ln();
    Ok((threshold.ceil() as u32).max(1))
}

/// Inner-product distortion threshold `(eps/2)(|x|^2 + |y|^2)`: the absolute
/// error `|<Ax,Ay> - <x,y>|` exceeds this with probability at most
/// `4 exp(-(k/2) g(eps))`.
pub fn inner_product_distortion_bound(eps: f64, x_norm_sq: f64, y_norm_sq: f64) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::OutOfRange(format!("eps must be > 0, got {eps}")));
    }
    Ok(eps / 2.0 * (x_norm_sq + y_norm_sq))
}

/// Squared-norm tail `2 exp(-(k/2) g(eps))`: probability that a unit
/// vector's projected squared norm deviates from 1 by more than `eps`.
pub fn norm_error_bound(eps: f64, k: u32) -> Result<f64> {
    if k < 1 {
        return Err(Error::OutOfRange("k must be >= 1".into()));
    }
    Ok(2.0 * (-(k as f64 / 2.0) * concentration_rate(eps)?).exp())
}

/// One bundle of bound inputs, evaluated into every sufficient dimension at
/// once (the shape used by bound-verification reports).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundQuery {
    /// Normalized margin in (0, 1].
    pub eps: f64,
    /// Failure probability target in (0, 1).
    pub beta: f64,
    /// Collection size |D|.
    pub d_size: u32,
    /// Recall rank r0 in [1, |D|].
    pub r0: u32,
    /// Maximum unique query terms.
    pub l_q: u32,
    /// Maximum unique document terms.
    pub l_d: u32,
}

/// Evaluated sufficient dimensions for one [`BoundQuery`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SufficientDims {
    pub k_pairwise: u32,
    pub k_quadratic: u32,
    pub k_recall: u32,
    pub k_boolean: u32,
    pub boolean_margin: f64,
    pub recall_constant: f64,
}

impl BoundQuery {
    pub fn validate(&self) -> Result<()> {
        check_eps(self.eps)?;
        check_beta(self.beta)?;
        recall_constant(self.d_size, self.r0)?;
        if self.l_q < 1 || self.l_d < 1 {
            return Err(Error::OutOfRange("L_Q and L_D must be >= 1".into()));
        }
        Ok(())
    }

    pub fn evaluate(&self) -> Result<SufficientDims> {
        self.validate()?;
        Ok(SufficientDims {
            k_pairwise: sufficient_k_pairwise(self.eps, self.beta)?,
            k_quadratic: sufficient_k_quadratic(self.eps, self.beta)?,
            k_recall: sufficient_k_recall(self.eps, self.beta, self.d_size, self.r0)?,
            k_boolean: sufficient_k_boolean(self.l_q, self.l_d, self.beta)?,
            boolean_margin: boolean_min_margin(self.l_q, self.l_d)?,
            recall_constant: recall_constant(self.d_size, self.r0)?,
        })
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
