//! Iterative detection and decoding over one coded packet.
//!
//! Symbol `i` of every user carries codeword bits `2i` and `2i + 1`; the
//! codeword is `[pilot bits | info bits | parity bits]`, so pilot instants
//! are fully known and skip detection.

use crate::detector::sic_detect;
use crate::error::{Error, Result};
use crate::ldpc::{bp_decode, LdpcCode, PacketLayout};
use crate::linalg::{CMatrix, CVector};
use crate::modem::{Constellation, SoftSymbol, BITS_PER_SYMBOL, LLR_CLAMP};

fn known_llr(bit: u8) -> f64 {
    if bit == 0 {
        LLR_CLAMP
    } else {
        -LLR_CLAMP
    }
}

/// Receiver settings shared by every packet of a run.
#[derive(Debug, Clone)]
pub struct IddReceiver<'a> {
    pub code: &'a LdpcCode,
    pub layout: PacketLayout,
    pub constellation: Constellation,
    pub sigma_n2: f64,
    pub idd_iterations: usize,
    pub bp_iterations: usize,
    /// Known leading message bits of each user.
    pub pilot_bits: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IddOutput {
    /// Hard message decisions with the pilot bits restored.
    pub messages: Vec<Vec<u8>>,
    pub converged: Vec<bool>,
    /// Re-encoded and re-modulated symbols, one `K`-vector per instant.
    pub symbols: Vec<CVector>,
    pub clamped_gains: usize,
}

impl IddReceiver<'_> {
    /// Detects and decodes a packet given the per-instant equivalent channels.
    pub fn run(&self, rx: &[CVector], h_bars: &[CMatrix]) -> Result<IddOutput> {
        let t = self.layout.total_symbols();
        let users = self.pilot_bits.len();
        let n = self.code.n();
        if rx.len() != t || h_bars.len() != t || t * BITS_PER_SYMBOL != n {
            return Err(Error::dim(format!(
                "{} observations, {} channels, {t} instants, codeword length {n}",
                rx.len(),
                h_bars.len()
            )));
        }
        if self.idd_iterations == 0 {
            return Err(Error::Domain("at least one detection pass is required".into()));
        }
        let n_pilot_bits = self.layout.pilot_bits();
        let mut det_llr = vec![vec![0.0; n]; users];
        for (k, bits) in self.pilot_bits.iter().enumerate() {
            if bits.len() != n_pilot_bits {
                return Err(Error::dim(format!("user {k} has {} pilot bits", bits.len())));
            }
            for (b, &bit) in bits.iter().enumerate() {
                det_llr[k][b] = known_llr(bit);
            }
        }
        let mut prior = vec![vec![0.0; n]; users];
        let mut hard = vec![vec![0u8; n]; users];
        let mut converged = vec![false; users];
        let mut clamped_gains = 0;

        for _ in 0..self.idd_iterations {
            for i in self.layout.n_pilot_sym..t {
                let priors: Vec<SoftSymbol> = prior
                    .iter()
                    .map(|p| self.constellation.soft_symbol([p[2 * i], p[2 * i + 1]]))
                    .collect();
                let det = sic_detect(&rx[i], &h_bars[i], &priors, self.sigma_n2, &self.constellation)?;
                clamped_gains += det.clamped_gains;
                for (k, l) in det.llrs.iter().enumerate() {
                    det_llr[k][2 * i] = l[0];
                    det_llr[k][2 * i + 1] = l[1];
                }
            }
            for k in 0..users {
                let out = bp_decode(self.code.pcm(), &det_llr[k], self.bp_iterations)?;
                prior[k] = out.extrinsic;
                hard[k] = out.hard_bits;
                converged[k] = out.converged;
            }
        }

        let mut messages = Vec::with_capacity(users);
        let mut codewords = Vec::with_capacity(users);
        for (k, bits) in hard.iter().enumerate() {
            let mut msg = bits[..self.code.k()].to_vec();
            msg[..n_pilot_bits].copy_from_slice(&self.pilot_bits[k]);
            codewords.push(self.code.systematic_encode(&msg)?);
            messages.push(msg);
        }
        let symbols = (0..t)
            .map(|i| {
                CVector::from_iterator(
                    users,
                    codewords.iter().map(|cw| self.constellation.point([cw[2 * i], cw[2 * i + 1]])),
                )
            })
            .collect();
        Ok(IddOutput { messages, converged, symbols, clamped_gains })
    }
}
