//! Reflection design and the structured per-packet reflection schedules.
//!
//! A packet is transmitted under three reflection regimes: sign-flipped DFT
//! columns during the pilots, one optimised vector `φ_o` during the
//! information symbols, and DFT columns during the parity symbols. Pilot
//! symbols are Hadamard rows repeated across the two pilot partitions.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ldpc::{PacketLayout, Segment};
use crate::linalg::{kron_vec, solve_hpd, CMatrix, CVector, C64, ONE};

/// Result of the unconstrained reflection optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiSolution {
    pub phi: CVector,
    /// `β` was singular and a ridge `1e-9·tr(β)/dim` was added.
    pub regularized: bool,
}

const RIDGE: f64 = 1e-9;
const SINGULAR_RCOND: f64 = 1e-12;

/// Least-squares reflection vector `φ_o = β⁻¹ Ψ` for stacked filters `W` (`K × M`).
///
/// `β = Σ_k (W Z_k)^H (W Z_k)`, `Ψ = Σ_k (W Z_k)^H (e_k − W h_k)` where `h_k`
/// is column `k` of `direct` (the channel the reflection adds to).
pub fn optimize_phi(w: &CMatrix, z: &[CMatrix], direct: &CMatrix) -> Result<PhiSolution> {
    let k_users = w.nrows();
    if z.len() != k_users || direct.ncols() != k_users {
        return Err(Error::dim(format!(
            "{} filters, {} cascaded matrices, {} direct columns",
            k_users,
            z.len(),
            direct.ncols()
        )));
    }
    let dim = z.first().map(|zk| zk.ncols()).unwrap_or(0);
    if z.iter().any(|zk| zk.nrows() != w.ncols() || zk.ncols() != dim) || direct.nrows() != w.ncols() {
        return Err(Error::dim("filter and channel row counts differ"));
    }
    let mut beta = CMatrix::zeros(dim, dim);
    let mut psi = CMatrix::zeros(dim, 1);
    for (k, zk) in z.iter().enumerate() {
        let wz = w * zk;
        let wz_h = wz.adjoint();
        let mut residual = -(w * direct.column(k));
        residual[k] += ONE;
        beta += &wz_h * &wz;
        psi += wz_h * residual;
    }
    let sv = beta.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let regularized = !(smax > 0.0) || smin <= SINGULAR_RCOND * smax;
    if regularized {
        let trace: f64 = (0..dim).map(|i| beta[(i, i)].re).sum();
        let lambda = if trace > 0.0 { RIDGE * trace / dim as f64 } else { RIDGE };
        for i in 0..dim {
            beta[(i, i)] += C64::new(lambda, 0.0);
        }
    }
    let phi = solve_hpd(beta, &psi)?;
    Ok(PhiSolution { phi: phi.column(0).into_owned(), regularized })
}

/// Projects every entry onto the unit circle; zero entries become `1` and are counted.
pub fn truncate_passive(phi: &CVector) -> (CVector, usize) {
    let mut zeros = 0;
    let out = phi.map(|p| {
        let r = p.norm();
        if r == 0.0 {
            zeros += 1;
            ONE
        } else {
            p / r
        }
    });
    (out, zeros)
}

fn dft_entry(row: usize, col: usize, order: usize) -> C64 {
    let e = ((row % order) * (col % order)) % order;
    C64::from_polar(1.0, -2.0 * PI * e as f64 / order as f64)
}

/// Parity-segment reflections: entry `(r, c) = ω^{r·c}` with `ω = e^{-2πi/N_ps}`.
pub fn build_theta_ps(n_total: usize, n_ps: usize) -> CMatrix {
    CMatrix::from_fn(n_total, n_ps, |r, c| dft_entry(r, c, n_ps))
}

/// First-partition pilot reflections `Θ_*` (`n_total × N_p/2`).
///
/// Uses the `N_p/2`-point DFT when it has at least `n_total` distinct rows,
/// otherwise the leading `N_p/2` columns of the `n_total`-point DFT.
pub fn build_theta_star(n_total: usize, n_p: usize) -> Result<CMatrix> {
    if n_p % 2 != 0 || n_p == 0 {
        return Err(Error::Protocol(format!("pilot count must be positive and even, got {n_p}")));
    }
    let half = n_p / 2;
    let order = half.max(n_total);
    Ok(CMatrix::from_fn(n_total, half, |r, c| dft_entry(r, c, order)))
}

/// Pilot reflections `[Θ_*  −Θ_*]`.
pub fn build_theta_p(n_total: usize, n_p: usize) -> Result<CMatrix> {
    let star = build_theta_star(n_total, n_p)?;
    let half = star.ncols();
    let mut out = CMatrix::zeros(n_total, n_p);
    out.columns_mut(0, half).copy_from(&star);
    out.columns_mut(half, half).copy_from(&(-star));
    Ok(out)
}

/// Information-segment reflections: `n_info` copies of `φ_o`.
pub fn build_theta_o(phi_o: &CVector, n_info: usize) -> CMatrix {
    CMatrix::from_fn(phi_o.len(), n_info, |r, _| phi_o[r])
}

fn sylvester(order: usize, r: usize, c: usize) -> f64 {
    debug_assert!(order.is_power_of_two());
    if (r & c).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Pilot symbols `K × N_p`: Sylvester-Hadamard rows on the QPSK diagonal,
/// cycled over the first partition and repeated in the second.
pub fn build_pilot_symbols(k: usize, n_p: usize, sigma_x2: f64) -> Result<CMatrix> {
    if n_p % 2 != 0 || n_p == 0 {
        return Err(Error::Protocol(format!("pilot count must be positive and even, got {n_p}")));
    }
    if k == 0 || !(sigma_x2 > 0.0) {
        return Err(Error::Domain("need at least one user and positive symbol energy".into()));
    }
    let half = n_p / 2;
    let order = k.next_power_of_two();
    if half % order != 0 {
        return Err(Error::Hadamard(format!(
            "half pilot length {half} is not a multiple of the order-{order} Hadamard matrix needed for {k} users"
        )));
    }
    let a = (sigma_x2 / 2.0).sqrt();
    let anchor = C64::new(a, a);
    Ok(CMatrix::from_fn(k, n_p, |r, c| anchor * sylvester(order, r, (c % half) % order)))
}

/// Measurement matrix with columns `x^(j) ⊗ φ^(j)`.
pub fn build_lambda(x_cols: &[CVector], phi_cols: &[CVector]) -> Result<CMatrix> {
    if x_cols.len() != phi_cols.len() {
        return Err(Error::dim(format!(
            "{} symbol columns, {} reflection columns",
            x_cols.len(),
            phi_cols.len()
        )));
    }
    let rows = match (x_cols.first(), phi_cols.first()) {
        (Some(x), Some(p)) => x.len() * p.len(),
        _ => 0,
    };
    let mut out = CMatrix::zeros(rows, x_cols.len());
    for (j, (x, phi)) in x_cols.iter().zip(phi_cols).enumerate() {
        if x.len() * phi.len() != rows {
            return Err(Error::dim(format!("column {j} has inconsistent length")));
        }
        out.set_column(j, &kron_vec(x, phi));
    }
    Ok(out)
}

/// Pilot symbols and reflections of both partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    /// `K × N_p`.
    pub x_p: CMatrix,
    /// `L·N × N_p`.
    pub phi_p: CMatrix,
}

impl PilotBook {
    pub fn new(x_p: CMatrix, phi_p: CMatrix) -> Result<Self> {
        if x_p.ncols() != phi_p.ncols() {
            return Err(Error::dim("pilot symbol and reflection counts differ"));
        }
        let book = PilotBook { x_p, phi_p };
        book.check_protocol()?;
        Ok(book)
    }

    /// Hadamard pilots with sign-flipped DFT reflections.
    pub fn standard(k: usize, n_p: usize, n_total: usize, sigma_x2: f64) -> Result<Self> {
        Self::new(build_pilot_symbols(k, n_p, sigma_x2)?, build_theta_p(n_total, n_p)?)
    }

    pub fn len(&self) -> usize {
        self.x_p.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x_p.ncols() == 0
    }

    pub fn half(&self) -> usize {
        self.len() / 2
    }

    /// Exact check of `x^(j) = x^(j+h)` and `φ^(j) = −φ^(j+h)`.
    pub fn check_protocol(&self) -> Result<()> {
        if self.len() % 2 != 0 {
            return Err(Error::Protocol(format!("odd pilot count {}", self.len())));
        }
        let h = self.half();
        for j in 0..h {
            if self.x_p.column(j) != self.x_p.column(j + h) {
                return Err(Error::Protocol(format!("pilot symbols {j} and {} differ", j + h)));
            }
            if self.phi_p.column(j) != -self.phi_p.column(j + h) {
                return Err(Error::Protocol(format!("reflections {j} and {} are not negated", j + h)));
            }
        }
        Ok(())
    }

    pub fn symbol(&self, j: usize) -> CVector {
        self.x_p.column(j).into_owned()
    }

    pub fn phi(&self, j: usize) -> CVector {
        self.phi_p.column(j).into_owned()
    }
}

/// Reflection vector of every symbol instant in a packet.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionSchedule {
    /// `L·N × T`, one column per instant.
    pub theta: CMatrix,
    pub segments: Vec<Segment>,
}

impl ReflectionSchedule {
    pub fn new(theta: CMatrix, segments: Vec<Segment>) -> Result<Self> {
        if theta.ncols() != segments.len() {
            return Err(Error::dim("one segment tag per column is required"));
        }
        Ok(ReflectionSchedule { theta, segments })
    }

    /// `[Θ_p  Θ_o  Θ_ps]` for the packet layout.
    pub fn for_packet(layout: &PacketLayout, pilots: &PilotBook, phi_o: &CVector) -> Result<Self> {
        let n_total = phi_o.len();
        if pilots.len() != layout.n_pilot_sym || pilots.phi_p.nrows() != n_total {
            return Err(Error::dim("pilot book does not match the packet layout"));
        }
        let t = layout.total_symbols();
        let mut theta = CMatrix::zeros(n_total, t);
        theta.columns_mut(0, layout.n_pilot_sym).copy_from(&pilots.phi_p);
        theta
            .columns_mut(layout.info_idx().start, layout.n_info_sym)
            .copy_from(&build_theta_o(phi_o, layout.n_info_sym));
        theta
            .columns_mut(layout.parity_idx().start, layout.n_parity_sym)
            .copy_from(&build_theta_ps(n_total, layout.n_parity_sym));
        let segments = (0..t).map(|i| layout.segment(i).expect("index inside packet")).collect();
        Ok(ReflectionSchedule { theta, segments })
    }

    pub fn len(&self) -> usize {
        self.theta.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.ncols() == 0
    }

    pub fn phi(&self, i: usize) -> CVector {
        self.theta.column(i).into_owned()
    }

    pub fn phis(&self) -> Vec<CVector> {
        (0..self.len()).map(|i| self.phi(i)).collect()
    }

    pub fn max_modulus_error(&self) -> f64 {
        self.theta.iter().map(|t| (t.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}
