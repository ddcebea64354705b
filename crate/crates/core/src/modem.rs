//! Gray-labelled QPSK: mapping, prior-driven soft symbols and the
//! Gaussian-approximation extrinsic demapper used behind the SIC filter.
//!
//! LLRs use the convention `ln P(b = +1) / P(b = -1)` where code bit `0` is
//! the `+1` value. Bit pair `(0, 0)` maps to `σ_x (1 + j) / √2`; the first bit
//! selects the sign of the real part, the second the sign of the imaginary
//! part.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Magnitude limit applied to every LLR exchanged in the receiver.
pub const LLR_CLAMP: f64 = 30.0;

/// Bits per QPSK symbol.
pub const BITS_PER_SYMBOL: usize = 2;

/// Upper bound used when the effective filter gain reaches one.
const MU_CEILING: f64 = 1.0 - 1e-6;

pub fn clamp_llr(l: f64) -> f64 {
    l.clamp(-LLR_CLAMP, LLR_CLAMP)
}

/// Signed value (`+1` for bit 0, `-1` for bit 1).
fn bit_sign(b: u8) -> f64 {
    if b == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftSymbol {
    pub mean: C64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemapFlag {
    Ok,
    /// `μ ≥ 1` was clamped just below one.
    GainSaturated,
    /// `μ ≤ 0`; no information, LLRs forced to zero.
    GainVanished,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demapped {
    pub llrs: [f64; BITS_PER_SYMBOL],
    pub flag: DemapFlag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    sigma_x2: f64,
    /// Points indexed by `2·b_I + b_Q`.
    points: [C64; 4],
}

impl Constellation {
    pub fn new(sigma_x2: f64) -> Result<Self> {
        if !(sigma_x2 > 0.0) || !sigma_x2.is_finite() {
            return Err(Error::Domain(format!("symbol energy must be positive, got {sigma_x2}")));
        }
        let a = (sigma_x2 / 2.0).sqrt();
        let point = |bi: u8, bq: u8| C64::new(a * bit_sign(bi), a * bit_sign(bq));
        Ok(Constellation {
            sigma_x2,
            points: [point(0, 0), point(0, 1), point(1, 0), point(1, 1)],
        })
    }

    pub fn sigma_x2(&self) -> f64 {
        self.sigma_x2
    }

    pub fn points(&self) -> &[C64; 4] {
        &self.points
    }

    /// Labels `(b_I, b_Q)` of point index `i`.
    pub fn labels(i: usize) -> [u8; 2] {
        [(i >> 1) as u8 & 1, i as u8 & 1]
    }

    pub fn point(&self, bits: [u8; 2]) -> C64 {
        self.points[2 * (bits[0] as usize & 1) + (bits[1] as usize & 1)]
    }

    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<C64>> {
        if bits.len() % BITS_PER_SYMBOL != 0 {
            return Err(Error::Domain(format!("odd-length bit stream ({} bits)", bits.len())));
        }
        Ok(bits.chunks_exact(2).map(|b| self.point([b[0], b[1]])).collect())
    }

    pub fn hard_demap(&self, z: C64) -> [u8; 2] {
        [(z.re < 0.0) as u8, (z.im < 0.0) as u8]
    }

    /// Prior mean and variance of a symbol given per-bit LLRs.
    pub fn soft_symbol(&self, prior_llrs: [f64; BITS_PER_SYMBOL]) -> SoftSymbol {
        let p_plus = prior_llrs.map(|l| 1.0 / (1.0 + (-clamp_llr(l)).exp()));
        let mut mean = C64::new(0.0, 0.0);
        let mut probs = [0.0; 4];
        for (i, x) in self.points.iter().enumerate() {
            let [bi, bq] = Self::labels(i);
            let pi = if bi == 0 { p_plus[0] } else { 1.0 - p_plus[0] };
            let pq = if bq == 0 { p_plus[1] } else { 1.0 - p_plus[1] };
            probs[i] = pi * pq;
            mean += x * probs[i];
        }
        // Σ|x - x̃|² P(x) with |x|² = σ_x² for every point
        let variance = (self.sigma_x2 - mean.norm_sqr()).max(0.0);
        SoftSymbol { mean, variance }
    }

    /// Extrinsic bit LLRs of a filter output `z = μ x + η`, `η ~ CN(0, μ(1-μ)σ_x²)`.
    pub fn extrinsic_demap(&self, z: C64, mu: f64) -> Demapped {
        if !(mu > 0.0) {
            return Demapped { llrs: [0.0; 2], flag: DemapFlag::GainVanished };
        }
        let (mu, flag) = if mu >= 1.0 { (MU_CEILING, DemapFlag::GainSaturated) } else { (mu, DemapFlag::Ok) };
        let scale = 2.0 * SQRT_2 / ((1.0 - mu) * self.sigma_x2.sqrt());
        Demapped {
            llrs: [clamp_llr(scale * z.re), clamp_llr(scale * z.im)],
            flag,
        }
    }
}
