//! Flooding sum-product decoder in the LLR domain.

use super::ParityCheckMatrix;
use crate::error::{Error, Result};
use crate::modem::{clamp_llr, LLR_CLAMP};

/// Largest `|tanh|` fed to `atanh`; keeps check messages finite.
const TANH_LIMIT: f64 = 1.0 - 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct BpOutput {
    pub posterior: Vec<f64>,
    /// `posterior - channel_llr`, element-wise.
    pub extrinsic: Vec<f64>,
    pub hard_bits: Vec<u8>,
    /// The hard decisions satisfy every parity check.
    pub converged: bool,
    pub iterations: usize,
}

/// Sum-product decoding of `channel_llr` (`ln P(0)/P(1)`).
///
/// Inputs and check-to-variable messages are clamped to `±LLR_CLAMP`.
/// Decoding stops as soon as the hard decisions form a codeword.
pub fn bp_decode(pcm: &ParityCheckMatrix, channel_llr: &[f64], max_iters: usize) -> Result<BpOutput> {
    if channel_llr.len() != pcm.n() {
        return Err(Error::dim(format!(
            "{} LLRs for a length-{} code",
            channel_llr.len(),
            pcm.n()
        )));
    }
    if max_iters == 0 {
        return Err(Error::Domain("at least one decoder iteration is required".into()));
    }
    let input: Vec<f64> = channel_llr.iter().map(|&l| clamp_llr(l)).collect();
    let edge_var = pcm.edge_var();
    let mut v2c: Vec<f64> = edge_var.iter().map(|&v| input[v]).collect();
    let mut c2v = vec![0.0; pcm.edges()];
    let mut tanh_buf = Vec::new();
    let mut posterior = input.clone();
    let mut hard_bits = vec![0u8; pcm.n()];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=max_iters {
        iterations = it;
        for c in 0..pcm.m() {
            let edges = pcm.check_edges(c);
            tanh_buf.clear();
            tanh_buf.extend(v2c[edges.clone()].iter().map(|&l| (0.5 * l).tanh()));
            // leave-one-out products via prefix/suffix sweeps (safe with zeros)
            let d = tanh_buf.len();
            let mut prefix = 1.0;
            for i in 0..d {
                c2v[edges.start + i] = prefix;
                prefix *= tanh_buf[i];
            }
            let mut suffix = 1.0;
            for i in (0..d).rev() {
                let p = (c2v[edges.start + i] * suffix).clamp(-TANH_LIMIT, TANH_LIMIT);
                c2v[edges.start + i] = (2.0 * p.atanh()).clamp(-LLR_CLAMP, LLR_CLAMP);
                suffix *= tanh_buf[i];
            }
        }
        for (v, edges) in pcm.var_edges().iter().enumerate() {
            let total = input[v] + edges.iter().map(|&e| c2v[e]).sum::<f64>();
            posterior[v] = total;
            hard_bits[v] = (total < 0.0) as u8;
            for &e in edges {
                v2c[e] = total - c2v[e];
            }
        }
        if pcm.syndrome_is_zero(&hard_bits) {
            converged = true;
            break;
        }
    }

    let extrinsic = posterior.iter().zip(channel_llr).map(|(p, c)| p - c).collect();
    Ok(BpOutput { posterior, extrinsic, hard_bits, converged, iterations })
}
