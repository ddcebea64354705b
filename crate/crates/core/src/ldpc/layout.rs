use std::ops::Range;

use crate::error::{Error, Result};

/// Which part of the coded packet a modulated symbol belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    Pilot,
    Info,
    Parity,
}

/// Symbol positions of one systematically encoded packet.
///
/// Pilots take the leading systematic symbols, information symbols the rest
/// of the systematic part, and parity symbols close the packet. Symbol `j`
/// carries codeword bits `j·Mc .. (j+1)·Mc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketLayout {
    pub n_pilot_sym: usize,
    pub n_info_sym: usize,
    pub n_parity_sym: usize,
    pub bits_per_symbol: usize,
}

pub fn make_packet_layout(n: usize, rate: f64, n_pilot_sym: usize, bits_per_symbol: usize) -> Result<PacketLayout> {
    if bits_per_symbol == 0 || n == 0 || n % bits_per_symbol != 0 {
        return Err(Error::Domain(format!(
            "block length {n} is not a multiple of {bits_per_symbol} bits per symbol"
        )));
    }
    let k_real = n as f64 * rate;
    let k = k_real.round() as usize;
    if (k_real - k as f64).abs() > 1e-9 || k > n {
        return Err(Error::Domain(format!("n·rate = {k_real} is not an integer bit count")));
    }
    if k % bits_per_symbol != 0 {
        return Err(Error::Domain(format!(
            "{k} systematic bits do not fill whole symbols"
        )));
    }
    let systematic = k / bits_per_symbol;
    if n_pilot_sym > systematic {
        return Err(Error::Domain(format!(
            "{n_pilot_sym} pilot symbols exceed the {systematic} systematic symbols"
        )));
    }
    Ok(PacketLayout {
        n_pilot_sym,
        n_info_sym: systematic - n_pilot_sym,
        n_parity_sym: (n - k) / bits_per_symbol,
        bits_per_symbol,
    })
}

impl PacketLayout {
    pub fn total_symbols(&self) -> usize {
        self.n_pilot_sym + self.n_info_sym + self.n_parity_sym
    }

    pub fn pilot_idx(&self) -> Range<usize> {
        0..self.n_pilot_sym
    }

    pub fn info_idx(&self) -> Range<usize> {
        self.n_pilot_sym..self.n_pilot_sym + self.n_info_sym
    }

    pub fn parity_idx(&self) -> Range<usize> {
        let start = self.n_pilot_sym + self.n_info_sym;
        start..start + self.n_parity_sym
    }

    /// Number of known pilot bits at the head of each message.
    pub fn pilot_bits(&self) -> usize {
        self.n_pilot_sym * self.bits_per_symbol
    }

    pub fn segment(&self, symbol: usize) -> Option<Segment> {
        if self.pilot_idx().contains(&symbol) {
            Some(Segment::Pilot)
        } else if self.info_idx().contains(&symbol) {
            Some(Segment::Info)
        } else if self.parity_idx().contains(&symbol) {
            Some(Segment::Parity)
        } else {
            None
        }
    }
}
