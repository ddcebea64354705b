//! Soft-interference-cancellation MMSE detection.
//!
//! For every user the prior means of all other users are subtracted from the
//! observation, then an MMSE filter that accounts for the residual
//! interferer variances is applied. The output LLRs are extrinsic: the
//! user's own prior is never re-added.

use crate::channel::column;
use crate::error::{Error, Result};
use crate::linalg::{solve_hpd, CMatrix, CVector, C64};
use crate::modem::{Constellation, DemapFlag, SoftSymbol, BITS_PER_SYMBOL};

/// Diagonal of `Δ_k`: `σ²_{x_j}/σ_x²` for `j ≠ k` and exactly `1` at `k`.
pub fn delta_diagonal(priors: &[SoftSymbol], k: usize, sigma_x2: f64) -> Result<Vec<f64>> {
    if k >= priors.len() {
        return Err(Error::Domain(format!("user index {k} out of range for {} users", priors.len())));
    }
    Ok(priors
        .iter()
        .enumerate()
        .map(|(j, p)| if j == k { 1.0 } else { p.variance / sigma_x2 })
        .collect())
}

pub fn delta_matrix(priors: &[SoftSymbol], k: usize, sigma_x2: f64) -> Result<nalgebra::DMatrix<f64>> {
    let d = delta_diagonal(priors, k, sigma_x2)?;
    Ok(nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)))
}

/// `w_k = (σ_n²/σ_x² I + H̄ Δ_k H̄^H)⁻¹ h̄_k`.
pub fn mmse_sic_filter(h_bar: &CMatrix, delta: &[f64], sigma_n2: f64, sigma_x2: f64, k: usize) -> Result<CVector> {
    let (m, users) = h_bar.shape();
    if delta.len() != users || k >= users {
        return Err(Error::dim(format!("Δ has {} entries for {users} users (k = {k})", delta.len())));
    }
    let reg = sigma_n2 / sigma_x2;
    if !(reg > 0.0) || !reg.is_finite() {
        return Err(Error::Domain(format!("regulariser σ_n²/σ_x² must be positive, got {reg}")));
    }
    let mut a = CMatrix::identity(m, m) * C64::new(reg, 0.0);
    for (j, &d) in delta.iter().enumerate() {
        if d != 0.0 {
            let hj = h_bar.column(j);
            a += (hj * hj.adjoint()) * C64::new(d, 0.0);
        }
    }
    let w = solve_hpd(a, &h_bar.columns(k, 1).into_owned())?;
    Ok(column(&w, 0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub filters: Vec<CVector>,
    pub estimates: Vec<C64>,
    /// Effective gains `μ_k = Re(w_k^H h̄_k)`.
    pub gains: Vec<f64>,
    pub llrs: Vec<[f64; BITS_PER_SYMBOL]>,
    /// Users whose computed gain was negative and was clamped to zero.
    pub clamped_gains: usize,
    pub demap_flags: Vec<DemapFlag>,
}

/// Parallel soft-cancellation detection of one received vector.
pub fn sic_detect(
    y: &CVector,
    h_bar: &CMatrix,
    priors: &[SoftSymbol],
    sigma_n2: f64,
    constellation: &Constellation,
) -> Result<DetectionResult> {
    let (m, users) = h_bar.shape();
    if y.len() != m || priors.len() != users {
        return Err(Error::dim(format!(
            "y has {} entries, H̄ is {m}×{users}, {} priors",
            y.len(),
            priors.len()
        )));
    }
    let sigma_x2 = constellation.sigma_x2();
    let prior_means = CVector::from_iterator(users, priors.iter().map(|p| p.mean));
    let full_cancel = h_bar * &prior_means;

    let mut out = DetectionResult {
        filters: Vec::with_capacity(users),
        estimates: Vec::with_capacity(users),
        gains: Vec::with_capacity(users),
        llrs: Vec::with_capacity(users),
        clamped_gains: 0,
        demap_flags: Vec::with_capacity(users),
    };
    for k in 0..users {
        let hk = h_bar.column(k);
        // y_k = y - Σ_{j≠k} h̄_j x̃_j
        let y_k = y - &full_cancel + hk * prior_means[k];
        let delta = delta_diagonal(priors, k, sigma_x2)?;
        let w = mmse_sic_filter(h_bar, &delta, sigma_n2, sigma_x2, k)?;
        let estimate = w.dotc(&y_k);
        let mut mu = w.dotc(&hk).re;
        if mu < 0.0 {
            out.clamped_gains += 1;
            mu = 0.0;
        }
        let demapped = constellation.extrinsic_demap(estimate, mu);
        out.filters.push(w);
        out.estimates.push(estimate);
        out.gains.push(mu);
        out.llrs.push(demapped.llrs);
        out.demap_flags.push(demapped.flag);
    }
    Ok(out)
}
