use super::ParityCheckMatrix;
use crate::error::{Error, Result};

type BitRow = Vec<u64>;

fn bit_rows(pcm: &ParityCheckMatrix) -> Vec<BitRow> {
    let words = pcm.n().div_ceil(64);
    pcm.rows()
        .iter()
        .map(|row| {
            let mut bits = vec![0u64; words];
            for &c in row {
                bits[c / 64] |= 1 << (c % 64);
            }
            bits
        })
        .collect()
}

fn get(row: &BitRow, c: usize) -> bool {
    row[c / 64] >> (c % 64) & 1 == 1
}

fn xor_into(dst: &mut BitRow, src: &BitRow) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s);
}

/// Column order `info ++ parity` making the trailing `m` columns invertible,
/// or `None` when the matrix is rank deficient.
pub(crate) fn systematic_order(pcm: &ParityCheckMatrix) -> Option<Vec<usize>> {
    let mut rows = bit_rows(pcm);
    let m = rows.len();
    let mut pivots = Vec::with_capacity(m);
    let mut rank = 0;
    for c in (0..pcm.n()).rev() {
        if rank == m {
            break;
        }
        let Some(p) = (rank..m).find(|&r| get(&rows[r], c)) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && get(row, c) {
                xor_into(row, &pivot);
            }
        }
        pivots.push(c);
        rank += 1;
    }
    if rank < m {
        return None;
    }
    pivots.sort_unstable();
    let mut is_pivot = vec![false; pcm.n()];
    pivots.iter().for_each(|&c| is_pivot[c] = true);
    let mut order: Vec<usize> = (0..pcm.n()).filter(|&c| !is_pivot[c]).collect();
    order.extend(pivots);
    Some(order)
}

/// A parity-check matrix together with its systematic encoder.
///
/// Codewords are `[message | parity]`: the first `k` bits reproduce the
/// message exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    pcm: ParityCheckMatrix,
    k: usize,
    /// Row `i` selects the message bits whose sum is parity bit `i`.
    parity_rows: Vec<BitRow>,
}

impl LdpcCode {
    /// Prepares the encoder, permuting columns of `pcm` if its trailing block
    /// is not already invertible.
    pub fn new(pcm: ParityCheckMatrix) -> Result<Self> {
        let order = systematic_order(&pcm)
            .ok_or_else(|| Error::Code("parity-check matrix is rank deficient".into()))?;
        let pcm = if order.iter().enumerate().all(|(j, &c)| j == c) {
            pcm
        } else {
            pcm.permute_columns(&order)?
        };
        let (n, m) = (pcm.n(), pcm.m());
        let k = n - m;
        let mut rows = bit_rows(&pcm);
        // Gauss-Jordan on the trailing block turns H into [B⁻¹A | I]
        for i in 0..m {
            let c = k + i;
            let p = (i..m)
                .find(|&r| get(&rows[r], c))
                .ok_or_else(|| Error::Code("trailing block not invertible".into()))?;
            rows.swap(i, p);
            let pivot = rows[i].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != i && get(row, c) {
                    xor_into(row, &pivot);
                }
            }
        }
        let words = k.div_ceil(64);
        let parity_rows = rows
            .into_iter()
            .map(|row| {
                let mut out = vec![0u64; words];
                for c in 0..k {
                    if get(&row, c) {
                        out[c / 64] |= 1 << (c % 64);
                    }
                }
                out
            })
            .collect();
        Ok(LdpcCode { pcm, k, parity_rows })
    }

    pub fn pcm(&self) -> &ParityCheckMatrix {
        &self.pcm
    }

    pub fn n(&self) -> usize {
        self.pcm.n()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn systematic_encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.k {
            return Err(Error::dim(format!(
                "message has {} bits, code expects {}",
                message.len(),
                self.k
            )));
        }
        let mut packed = vec![0u64; self.k.div_ceil(64)];
        for (i, &b) in message.iter().enumerate() {
            if b & 1 == 1 {
                packed[i / 64] |= 1 << (i % 64);
            }
        }
        let mut codeword = Vec::with_capacity(self.n());
        codeword.extend(message.iter().map(|b| b & 1));
        codeword.extend(self.parity_rows.iter().map(|row| {
            let ones: u32 = row.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            (ones & 1) as u8
        }));
        Ok(codeword)
    }
}
