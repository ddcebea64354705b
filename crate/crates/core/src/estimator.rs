//! Direct and cascaded channel estimation, and the decision-directed
//! refinement loop over the whole coded packet.
//!
//! Pilots are sent twice with the same symbols and negated reflections, so
//! half-sums of the two partitions see only the direct link and half-
//! differences only the reflected links. Both are then estimated with the
//! LMMSE rule
//!
//! ```text
//! Ĥ = Y (Pᴴ R P + ν I)⁻¹ Pᴴ R
//! ```
//!
//! where `P` holds unit-energy training columns and `ν` is the observation
//! noise variance over the symbol energy.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::ldpc::Segment;
use crate::linalg::{condition_number, frobenius_sqr, hstack, kron_vec, solve_hpd, CMatrix, CVector, C64};
use crate::ris::{build_lambda, PilotBook, ReflectionSchedule};

/// Pilot instants of the two partitions, starting at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionPair {
    pub offset: usize,
    pub half: usize,
}

impl PartitionPair {
    pub fn new(offset: usize, n_p: usize) -> Result<Self> {
        if n_p == 0 || n_p % 2 != 0 {
            return Err(Error::Protocol(format!("pilot count must be positive and even, got {n_p}")));
        }
        Ok(PartitionPair { offset, half: n_p / 2 })
    }

    pub fn p1(&self) -> Range<usize> {
        self.offset..self.offset + self.half
    }

    pub fn p2(&self) -> Range<usize> {
        self.offset + self.half..self.offset + 2 * self.half
    }
}

/// Half-sums `(y^(j) + y^(j+h))/2` and half-differences `(y^(j) − y^(j+h))/2`.
///
/// Each output carries noise of variance `σ_n²/2`.
pub fn combine_partitions(
    y_seq: &[CVector],
    parts: &PartitionPair,
    pilots: &PilotBook,
) -> Result<(Vec<CVector>, Vec<CVector>)> {
    if pilots.half() != parts.half {
        return Err(Error::Protocol(format!(
            "partition half-length {} does not match the {}-pilot book",
            parts.half,
            pilots.len()
        )));
    }
    pilots.check_protocol()?;
    if parts.p2().end > y_seq.len() {
        return Err(Error::dim(format!(
            "partitions end at {} but only {} observations",
            parts.p2().end,
            y_seq.len()
        )));
    }
    let half = C64::new(0.5, 0.0);
    let sums = parts.p1().zip(parts.p2()).map(|(a, b)| (&y_seq[a] + &y_seq[b]) * half).collect();
    let diffs = parts.p1().zip(parts.p2()).map(|(a, b)| (&y_seq[a] - &y_seq[b]) * half).collect();
    Ok((sums, diffs))
}

/// `Y (Pᴴ R P + ν I)⁻¹ Pᴴ R`.
///
/// Evaluated through the equivalent `Y Pᴴ (R P Pᴴ + ν I)⁻¹ R` when the
/// training matrix is wide, which keeps the solve at the smaller dimension.
pub fn lmmse_estimate(y: &CMatrix, p: &CMatrix, r: &CMatrix, noise_term: f64) -> Result<CMatrix> {
    let (rows_p, t) = p.shape();
    if y.ncols() != t || r.shape() != (rows_p, rows_p) {
        return Err(Error::dim(format!(
            "Y is {:?}, P is {:?}, R is {:?}",
            y.shape(),
            p.shape(),
            r.shape()
        )));
    }
    if !(noise_term > 0.0) || !noise_term.is_finite() {
        return Err(Error::Domain(format!("noise term must be positive, got {noise_term}")));
    }
    let nu = C64::new(noise_term, 0.0);
    if t <= rows_p {
        let p_h = p.adjoint();
        let a = &p_h * r * p + CMatrix::identity(t, t) * nu;
        let x = solve_hpd(a, &(p_h * r))?;
        Ok(y * x)
    } else {
        let a = r * (p * p.adjoint()) + CMatrix::identity(rows_p, rows_p) * nu;
        // Z A = Y Pᴴ  ⇔  Aᴴ Zᴴ = (Y Pᴴ)ᴴ
        let rhs = (y * p.adjoint()).adjoint();
        let z_h = a
            .adjoint()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular LMMSE system".into()))?;
        Ok(z_h.adjoint() * r)
    }
}

/// Prior covariance and noise level for one estimation problem.
///
/// Training columns and observations are divided by `σ_x` before applying
/// [`lmmse_estimate`], so the noise term is `noise_var / σ_x²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseModel {
    pub r: CMatrix,
    /// Noise variance of each observation entry.
    pub noise_var: f64,
    pub sigma_x2: f64,
}

impl LmmseModel {
    pub fn new(r: CMatrix, noise_var: f64, sigma_x2: f64) -> Result<Self> {
        if !r.is_square() {
            return Err(Error::dim("covariance must be square"));
        }
        let asym = (&r - r.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let scale = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Domain("covariance is not Hermitian".into()));
        }
        if !(noise_var > 0.0) || !(sigma_x2 > 0.0) {
            return Err(Error::Domain("noise variance and symbol energy must be positive".into()));
        }
        Ok(LmmseModel { r, noise_var, sigma_x2 })
    }

    /// `σ_w² / σ_x²`.
    pub fn noise_term(&self) -> f64 {
        self.noise_var / self.sigma_x2
    }

    pub fn with_noise_var(&self, noise_var: f64) -> Self {
        LmmseModel { noise_var, ..self.clone() }
    }

    /// Estimate from observations `Y = H P + W` with `P` at symbol energy.
    pub fn estimate(&self, y: &CMatrix, p: &CMatrix) -> Result<CMatrix> {
        let s = C64::new(1.0 / self.sigma_x2.sqrt(), 0.0);
        lmmse_estimate(&(y * s), &(p * s), &self.r, self.noise_term())
    }

    /// Trace of the per-row posterior error covariance `ν (R P Pᴴ + ν I)⁻¹ R` for training `P`.
    pub fn error_trace(&self, p: &CMatrix) -> Result<f64> {
        let s = C64::new(1.0 / self.sigma_x2.sqrt(), 0.0);
        let pn = p * s;
        let dim = self.r.nrows();
        let nu = self.noise_term();
        let a = &self.r * (&pn * pn.adjoint()) + CMatrix::identity(dim, dim) * C64::new(nu, 0.0);
        let x = a.lu().solve(&self.r).ok_or_else(|| Error::Numerical("singular error covariance system".into()))?;
        Ok((nu * x.trace().re).max(0.0))
    }
}

/// Direct link `Ĥ` from pilot half-sums, trained on the first-partition symbols.
pub fn estimate_direct(sum_half: &[CVector], pilots: &PilotBook, model: &LmmseModel) -> Result<CMatrix> {
    let m = sum_half.first().map(|v| v.len()).unwrap_or(0);
    let y = hstack(sum_half, m);
    let p = pilots.x_p.columns(0, sum_half.len()).into_owned();
    model.estimate(&y, &p)
}

/// Cascaded channel `Ẑ_all` from `Y = Z_all Λ + W`.
pub fn estimate_cascaded(observations: &[CVector], lambda: &CMatrix, model: &LmmseModel) -> Result<CMatrix> {
    if observations.len() != lambda.ncols() {
        return Err(Error::dim(format!(
            "{} observations for {} measurement columns",
            observations.len(),
            lambda.ncols()
        )));
    }
    let m = observations.first().map(|v| v.len()).unwrap_or(0);
    model.estimate(&hstack(observations, m), lambda)
}

/// `‖estimate − truth‖_F² / ‖truth‖_F²`.
pub fn nmse(estimate: &CMatrix, truth: &CMatrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::dim(format!("{:?} vs {:?}", estimate.shape(), truth.shape())));
    }
    let denom = frobenius_sqr(truth);
    if denom == 0.0 {
        return Err(Error::Domain("NMSE undefined for an all-zero reference".into()));
    }
    Ok(frobenius_sqr(&(estimate - truth)) / denom)
}

/// Symbol decisions for every instant of a packet.
#[derive(Debug, Clone, PartialEq)]
pub struct Decisions {
    /// One `K`-vector per instant.
    pub symbols: Vec<CVector>,
    /// Per-user decoder convergence.
    pub converged: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub max_iters: usize,
    /// Stop when `‖Ẑ_t − Ẑ_{t−1}‖_F / ‖Ẑ_{t−1}‖_F` drops below this.
    pub tol: f64,
    /// Use the information segment (single reflection vector) as well.
    pub include_data_segment: bool,
    /// Drop decision-directed instants when any user's codeword failed its checks.
    pub exclude_unconverged: bool,
    pub log_condition: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            max_iters: 2,
            tol: 1e-3,
            include_data_segment: true,
            exclude_unconverged: false,
            log_condition: true,
        }
    }
}

/// Channel estimates and the refinement history of one packet.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub h_hat: CMatrix,
    pub z_all_hat: CMatrix,
    /// The pilot-only estimate the loop started from.
    pub coarse_z_all: CMatrix,
    /// Oracle NMSE of the coarse estimate, when truth was supplied.
    pub coarse_nmse: Option<f64>,
    /// Oracle cascaded NMSE after each refinement (empty without truth).
    pub nmse_trace: Vec<f64>,
    /// Relative change of `Ẑ_all` at each refinement.
    pub change_trace: Vec<f64>,
    pub iterations_used: usize,
    /// Condition number of the last measurement matrix used.
    pub condition: f64,
    /// Refinements that ran on at least one unconverged codeword.
    pub unconverged_rounds: usize,
}

/// Everything the estimator knows about the training design and link statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationSetup {
    pub pilots: PilotBook,
    /// Direct-link prior, `K × K`.
    pub direct_r: CMatrix,
    /// Cascaded-link prior, `K·L·N × K·L·N`.
    pub cascaded_r: CMatrix,
    pub sigma_n2: f64,
    pub sigma_x2: f64,
}

/// Coarse two-step estimate from the pilot partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseEstimate {
    pub h_hat: CMatrix,
    pub z_all_hat: CMatrix,
    /// Per-antenna power of `(H − Ĥ) x` expected from the direct-link error.
    pub direct_residual: f64,
    pub condition: f64,
}

impl EstimationSetup {
    fn half_model(&self, r: &CMatrix) -> Result<LmmseModel> {
        LmmseModel::new(r.clone(), self.sigma_n2 / 2.0, self.sigma_x2)
    }

    fn pilot_lambda(&self) -> Result<CMatrix> {
        let h = self.pilots.half();
        let xs: Vec<CVector> = (0..h).map(|j| self.pilots.symbol(j)).collect();
        let phis: Vec<CVector> = (0..h).map(|j| self.pilots.phi(j)).collect();
        build_lambda(&xs, &phis)
    }

    /// Direct estimate from half-sums, cascaded estimate from half-differences.
    pub fn coarse(&self, rx: &[CVector], log_condition: bool) -> Result<CoarseEstimate> {
        let parts = PartitionPair::new(0, self.pilots.len())?;
        let (sums, diffs) = combine_partitions(rx, &parts, &self.pilots)?;
        let direct_model = self.half_model(&self.direct_r)?;
        let h_hat = estimate_direct(&sums, &self.pilots, &direct_model)?;
        let p1 = self.pilots.x_p.columns(0, parts.half).into_owned();
        let direct_residual = self.sigma_x2 * direct_model.with_noise_var(self.sigma_n2 / 2.0).error_trace(&p1)?;
        let lambda = self.pilot_lambda()?;
        let z_all_hat = estimate_cascaded(&diffs, &lambda, &self.half_model(&self.cascaded_r)?)?;
        let condition = if log_condition { condition_number(&lambda) } else { f64::NAN };
        Ok(CoarseEstimate { h_hat, z_all_hat, direct_residual, condition })
    }

    /// One decision-directed estimate of `Z_all` over the packet.
    ///
    /// Pilot instants use the known pilots; other instants use `decisions`.
    pub fn decision_directed(
        &self,
        rx: &[CVector],
        schedule: &ReflectionSchedule,
        h_hat: &CMatrix,
        direct_residual: f64,
        decisions: &Decisions,
        opts: &RefineOptions,
    ) -> Result<(CMatrix, f64)> {
        if rx.len() != schedule.len() || decisions.symbols.len() != schedule.len() {
            return Err(Error::dim(format!(
                "{} observations, {} schedule columns, {} decisions",
                rx.len(),
                schedule.len(),
                decisions.symbols.len()
            )));
        }
        let all_converged = decisions.converged.iter().all(|&c| c);
        let mut obs = Vec::with_capacity(rx.len());
        let mut cols = Vec::with_capacity(rx.len());
        let mut pilot_j = 0;
        for (i, seg) in schedule.segments.iter().enumerate() {
            let x = match seg {
                Segment::Pilot => {
                    pilot_j += 1;
                    self.pilots.symbol(pilot_j - 1)
                }
                Segment::Info if !opts.include_data_segment => continue,
                _ if opts.exclude_unconverged && !all_converged => continue,
                _ => decisions.symbols[i].clone(),
            };
            obs.push(&rx[i] - h_hat * &x);
            cols.push(kron_vec(&x, &schedule.phi(i)));
        }
        let lambda = hstack(&cols, self.cascaded_r.nrows());
        let model = LmmseModel::new(self.cascaded_r.clone(), self.sigma_n2 + direct_residual, self.sigma_x2)?;
        let z = estimate_cascaded(&obs, &lambda, &model)?;
        let condition = if opts.log_condition { condition_number(&lambda) } else { f64::NAN };
        Ok((z, condition))
    }
}

/// Coarse estimation followed by up to `opts.max_iters` decision-directed refinements.
///
/// `decide` maps the current `(Ĥ, Ẑ_all)` to symbol decisions for the whole
/// packet; in the receiver it runs detection and decoding, in tests it can be
/// a genie. `truth` (the true `Z_all`) only feeds the logged NMSE trace.
pub fn iterative_refine<F>(
    setup: &EstimationSetup,
    rx: &[CVector],
    schedule: &ReflectionSchedule,
    mut decide: F,
    opts: &RefineOptions,
    truth: Option<&CMatrix>,
) -> Result<EstimateSet>
where
    F: FnMut(&CMatrix, &CMatrix) -> Result<Decisions>,
{
    let coarse = setup.coarse(rx, opts.log_condition)?;
    let coarse_nmse = truth.map(|t| nmse(&coarse.z_all_hat, t)).transpose()?;
    let mut est = EstimateSet {
        h_hat: coarse.h_hat.clone(),
        z_all_hat: coarse.z_all_hat.clone(),
        coarse_z_all: coarse.z_all_hat,
        coarse_nmse,
        nmse_trace: Vec::new(),
        change_trace: Vec::new(),
        iterations_used: 0,
        condition: coarse.condition,
        unconverged_rounds: 0,
    };
    for _ in 0..opts.max_iters {
        let decisions = decide(&est.h_hat, &est.z_all_hat)?;
        if decisions.converged.iter().any(|c| !c) {
            est.unconverged_rounds += 1;
        }
        let (z, condition) =
            setup.decision_directed(rx, schedule, &est.h_hat, coarse.direct_residual, &decisions, opts)?;
        let prev = frobenius_sqr(&est.z_all_hat).sqrt();
        let change = frobenius_sqr(&(&z - &est.z_all_hat)).sqrt() / prev.max(f64::MIN_POSITIVE);
        est.z_all_hat = z;
        est.condition = condition;
        est.iterations_used += 1;
        est.change_trace.push(change);
        if let Some(t) = truth {
            est.nmse_trace.push(nmse(&est.z_all_hat, t)?);
        }
        if change < opts.tol {
            break;
        }
    }
    Ok(est)
}
