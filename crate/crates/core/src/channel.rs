//! Geometry-driven Rayleigh channels and received-signal synthesis.
//!
//! The AP sees each user through a direct link `H` and through `L` passive
//! surfaces (`G_j` from surface `j` to the AP, `F_j` from the users to surface
//! `j`). Reflections between surfaces are not modelled.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};

/// Link categories with distinct large-scale path-loss laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    ApRis,
    RisUser,
    ApUser,
}

/// Path loss in dB at `distance` meters.
pub fn path_loss_db(kind: LinkKind, distance: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::Domain(format!(
            "path loss needs a positive finite distance, got {distance}"
        )));
    }
    Ok(match kind {
        LinkKind::ApRis | LinkKind::RisUser => 37.3 + 22.0 * distance.log10(),
        LinkKind::ApUser => 32.4 + 30.0 * distance.log10(),
    })
}

/// Linear power gain for a loss given in dB.
pub fn loss_db_to_gain(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Weakened direct link plus reflected links.
    Los,
    /// Reflected links only; `H` is identically zero.
    Nlos,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "los" => Ok(Scenario::Los),
            "nlos" => Ok(Scenario::Nlos),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemGeometry {
    pub ap_position: [f64; 3],
    pub ris_positions: Vec<[f64; 3]>,
    pub user_center: [f64; 3],
    pub user_radius: f64,
    /// AP antennas.
    pub antennas: usize,
    pub users: usize,
    /// Reflecting elements per surface.
    pub elements: usize,
}

impl Default for SystemGeometry {
    fn default() -> Self {
        SystemGeometry {
            ap_position: [0.0, 0.0, 0.0],
            ris_positions: vec![[500.0, 10.0, 0.0], [500.0, -10.0, 0.0]],
            user_center: [500.0, 0.0, 0.0],
            user_radius: 5.0,
            antennas: 8,
            users: 4,
            elements: 16,
        }
    }
}

impl SystemGeometry {
    pub fn surfaces(&self) -> usize {
        self.ris_positions.len()
    }

    /// Total reflecting elements over all surfaces, `L·N`.
    pub fn total_elements(&self) -> usize {
        self.surfaces() * self.elements
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.users == 0 || self.elements == 0 {
            return Err(Error::Geometry(
                "antenna, user and element counts must be at least 1".into(),
            ));
        }
        if self.ris_positions.is_empty() {
            return Err(Error::Geometry("at least one surface is required".into()));
        }
        if !(self.user_radius >= 0.0) || !self.user_radius.is_finite() {
            return Err(Error::Geometry(format!(
                "user radius must be finite and non-negative, got {}",
                self.user_radius
            )));
        }
        let all_finite = self
            .ris_positions
            .iter()
            .chain([&self.ap_position, &self.user_center])
            .all(|p| p.iter().all(|c| c.is_finite()));
        if !all_finite {
            return Err(Error::Geometry("positions must be finite".into()));
        }
        Ok(())
    }
}

/// Large-scale power gains of every link, as seen by the receiver's prior.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    /// AP-user gain per user (geometry based, reported even in NLOS).
    pub direct: Vec<f64>,
    /// AP-surface gain per surface.
    pub ap_ris: Vec<f64>,
    /// Surface-user gain, indexed `[surface][user]`.
    pub ris_user: Vec<Vec<f64>>,
}

impl LinkGains {
    /// Second moment of every entry in the cascaded block of user `k`, surface `j`.
    pub fn cascaded(&self, surface: usize, user: usize) -> f64 {
        self.ap_ris[surface] * self.ris_user[surface][user]
    }
}

/// One block-fading channel realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Direct AP-user channel, `M × K`.
    pub h: CMatrix,
    /// AP-surface channels, each `M × N`.
    pub g: Vec<CMatrix>,
    /// Surface-user channels, each `N × K`.
    pub f: Vec<CMatrix>,
    pub sigma_n2: f64,
    pub sigma_x2: f64,
    pub gains: LinkGains,
    pub user_positions: Vec<[f64; 3]>,
}

/// Per-user cascaded matrices `Z_k = G_p diag(f_{p,k})` and their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadedMatrices {
    pub z: Vec<CMatrix>,
    /// `[Z_1 … Z_K]`, `M × K·L·N`.
    pub z_all: CMatrix,
}

/// Link budget parameters that are not part of the geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub sigma_n2: f64,
    pub sigma_x2: f64,
    /// Additional attenuation applied to the LOS direct link.
    pub direct_extra_loss_db: f64,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

fn rayleigh<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, gain: impl Fn(usize, usize) -> f64) -> CMatrix {
    // column-major fill keeps the draw order stable
    let mut m = CMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = cn(rng, gain(r, c));
        }
    }
    m
}

/// Draws user positions and every small-scale fading matrix.
pub fn draw_channels<R: Rng + ?Sized>(
    geometry: &SystemGeometry,
    scenario: Scenario,
    budget: &LinkBudget,
    rng: &mut R,
) -> Result<ChannelSet> {
    geometry.validate()?;
    if !(budget.sigma_n2 > 0.0) || !(budget.sigma_x2 > 0.0) {
        return Err(Error::Domain("noise power and symbol energy must be positive".into()));
    }
    let (m, k, n) = (geometry.antennas, geometry.users, geometry.elements);

    let user_positions: Vec<[f64; 3]> = (0..k)
        .map(|_| {
            let r = geometry.user_radius * rng.random::<f64>().sqrt();
            let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            let c = geometry.user_center;
            [c[0] + r * theta.cos(), c[1] + r * theta.sin(), c[2]]
        })
        .collect();

    let direct = user_positions
        .iter()
        .map(|u| {
            let pl = path_loss_db(LinkKind::ApUser, distance(&geometry.ap_position, u))?;
            Ok(loss_db_to_gain(pl + budget.direct_extra_loss_db))
        })
        .collect::<Result<Vec<_>>>()?;
    let ap_ris = geometry
        .ris_positions
        .iter()
        .map(|s| Ok(loss_db_to_gain(path_loss_db(LinkKind::ApRis, distance(&geometry.ap_position, s))?)))
        .collect::<Result<Vec<_>>>()?;
    let ris_user = geometry
        .ris_positions
        .iter()
        .map(|s| {
            user_positions
                .iter()
                .map(|u| Ok(loss_db_to_gain(path_loss_db(LinkKind::RisUser, distance(s, u))?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let h = match scenario {
        Scenario::Los => rayleigh(rng, m, k, |_, c| direct[c]),
        Scenario::Nlos => CMatrix::zeros(m, k),
    };
    let g = ap_ris
        .iter()
        .map(|&gain| rayleigh(rng, m, n, |_, _| gain))
        .collect();
    let f = ris_user
        .iter()
        .map(|gains| rayleigh(rng, n, k, |_, c| gains[c]))
        .collect();

    Ok(ChannelSet {
        h,
        g,
        f,
        sigma_n2: budget.sigma_n2,
        sigma_x2: budget.sigma_x2,
        gains: LinkGains { direct, ap_ris, ris_user },
        user_positions,
    })
}

impl ChannelSet {
    pub fn antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn users(&self) -> usize {
        self.h.ncols()
    }

    pub fn total_elements(&self) -> usize {
        self.g.iter().map(|g| g.ncols()).sum()
    }

    /// `G_p = [G_1 … G_L]`.
    pub fn g_stacked(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.antennas(), self.total_elements());
        let mut col = 0;
        for g in &self.g {
            out.view_mut((0, col), g.shape()).copy_from(g);
            col += g.ncols();
        }
        out
    }

    /// `F_p = [F_1; …; F_L]`.
    pub fn f_stacked(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.total_elements(), self.users());
        let mut row = 0;
        for f in &self.f {
            out.view_mut((row, 0), f.shape()).copy_from(f);
            row += f.nrows();
        }
        out
    }

    /// Same channel with a different symbol energy.
    pub fn with_symbol_energy(&self, sigma_x2: f64) -> ChannelSet {
        ChannelSet { sigma_x2, ..self.clone() }
    }
}

pub fn cascaded_matrices(channels: &ChannelSet) -> CascadedMatrices {
    let gp = channels.g_stacked();
    let fp = channels.f_stacked();
    let (m, ln, k) = (gp.nrows(), gp.ncols(), fp.ncols());
    let z: Vec<CMatrix> = (0..k)
        .map(|user| {
            let mut zk = gp.clone();
            for c in 0..ln {
                let s = fp[(c, user)];
                zk.column_mut(c).iter_mut().for_each(|v| *v *= s);
            }
            zk
        })
        .collect();
    let mut z_all = CMatrix::zeros(m, k * ln);
    for (user, zk) in z.iter().enumerate() {
        z_all.view_mut((0, user * ln), (m, ln)).copy_from(zk);
    }
    CascadedMatrices { z, z_all }
}

/// Equivalent channel `H + G_p diag(phi) F_p`.
pub fn equivalent_channel(channels: &ChannelSet, phi: &CVector) -> Result<CMatrix> {
    let ln = channels.total_elements();
    if phi.len() != ln {
        return Err(Error::dim(format!(
            "reflection vector has {} entries, channel has {ln} elements",
            phi.len()
        )));
    }
    if phi.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
        return Err(Error::Domain("reflection vector has non-finite entries".into()));
    }
    let mut scaled = channels.f_stacked();
    for (r, p) in phi.iter().enumerate() {
        scaled.row_mut(r).iter_mut().for_each(|v| *v *= p);
    }
    Ok(&channels.h + channels.g_stacked() * scaled)
}

fn check_lengths(phis: &[CVector], xs: &[CVector]) -> Result<()> {
    if phis.len() != xs.len() {
        return Err(Error::dim(format!(
            "{} reflection vectors for {} symbol vectors",
            phis.len(),
            xs.len()
        )));
    }
    if phis.is_empty() {
        return Err(Error::Domain("at least one time instant is required".into()));
    }
    Ok(())
}

/// Noise-free received vectors `H̄_p^(i) x^(i)`.
pub fn noiseless_rx(channels: &ChannelSet, phis: &[CVector], xs: &[CVector]) -> Result<Vec<CVector>> {
    check_lengths(phis, xs)?;
    phis.iter()
        .zip(xs)
        .map(|(phi, x)| {
            if x.len() != channels.users() {
                return Err(Error::dim(format!(
                    "symbol vector has {} entries for {} users",
                    x.len(),
                    channels.users()
                )));
            }
            Ok(equivalent_channel(channels, phi)? * x)
        })
        .collect()
}

/// Received vectors `y^(i) = H̄_p^(i) x^(i) + n^(i)` with `n ~ CN(0, σ_n² I)`.
pub fn synthesize_rx<R: Rng + ?Sized>(
    channels: &ChannelSet,
    phis: &[CVector],
    xs: &[CVector],
    rng: &mut R,
) -> Result<Vec<CVector>> {
    let mut ys = noiseless_rx(channels, phis, xs)?;
    for y in &mut ys {
        add_noise(y, channels.sigma_n2, rng);
    }
    Ok(ys)
}

pub fn add_noise<R: Rng + ?Sized>(y: &mut CVector, var: f64, rng: &mut R) {
    for v in y.iter_mut() {
        *v += cn(rng, var);
    }
}

/// Column `k` of a matrix as an owned vector.
pub(crate) fn column(m: &CMatrix, k: usize) -> CVector {
    DVector::from_iterator(m.nrows(), m.column(k).iter().cloned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn budget() -> LinkBudget {
        LinkBudget { sigma_n2: 1e-14, sigma_x2: 1e-3, direct_extra_loss_db: 0.0 }
    }

    fn random_cvec<R: Rng>(rng: &mut R, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| cn(rng, 1.0))
    }

    #[test]
    fn path_loss_values() {
        assert_relative_eq!(path_loss_db(LinkKind::ApRis, 1.0).unwrap(), 37.3);
        assert_relative_eq!(path_loss_db(LinkKind::ApRis, 500.0).unwrap(), 96.677, epsilon = 1e-3);
        assert_relative_eq!(path_loss_db(LinkKind::RisUser, 500.0).unwrap(), 96.677, epsilon = 1e-3);
        assert_relative_eq!(path_loss_db(LinkKind::ApUser, 500.0).unwrap(), 113.369, epsilon = 1e-3);
        assert!(path_loss_db(LinkKind::ApUser, 0.0).is_err());
        assert!(path_loss_db(LinkKind::ApUser, -3.0).is_err());
    }

    #[test]
    fn geometry_validation() {
        let mut g = SystemGeometry::default();
        assert!(g.validate().is_ok());
        g.user_radius = -1.0;
        assert!(g.validate().is_err());
        let mut g = SystemGeometry::default();
        g.ris_positions[0][1] = f64::NAN;
        assert!(g.validate().is_err());
        let mut g = SystemGeometry::default();
        g.users = 0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn nlos_has_no_direct_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = draw_channels(&SystemGeometry::default(), Scenario::Nlos, &budget(), &mut rng).unwrap();
        assert!(ch.h.iter().all(|v| *v == c(0.0, 0.0)));
        let ch = draw_channels(&SystemGeometry::default(), Scenario::Los, &budget(), &mut rng).unwrap();
        assert!(ch.h.norm() > 0.0);
    }

    #[test]
    fn draws_are_reproducible() {
        let geo = SystemGeometry::default();
        let a = draw_channels(&geo, Scenario::Los, &budget(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = draw_channels(&geo, Scenario::Los, &budget(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn user_positions_stay_in_disc() {
        let geo = SystemGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let ch = draw_channels(&geo, Scenario::Los, &budget(), &mut rng).unwrap();
            for u in &ch.user_positions {
                assert!(distance(u, &geo.user_center) <= geo.user_radius + 1e-12);
                assert_eq!(u[2], geo.user_center[2]);
            }
        }
    }

    #[test]
    fn ap_ris_entry_variance_matches_path_loss() {
        // single-entry G so each draw contributes one sample
        let geo = SystemGeometry {
            ris_positions: vec![[500.0, 10.0, 0.0]],
            antennas: 1,
            users: 1,
            elements: 1,
            ..SystemGeometry::default()
        };
        let expected = loss_db_to_gain(path_loss_db(LinkKind::ApRis, (500.0f64 * 500.0 + 100.0).sqrt()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let ch = draw_channels(&geo, Scenario::Nlos, &budget(), &mut rng).unwrap();
            acc += ch.g[0][(0, 0)].norm_sqr();
        }
        let var = acc / draws as f64;
        assert!((var / expected - 1.0).abs() < 0.02, "ratio {}", var / expected);
    }

    #[test]
    fn scalar_cascade_and_equivalent_channel() {
        let ch = ChannelSet {
            h: CMatrix::from_element(1, 1, c(1.0, 0.0)),
            g: vec![CMatrix::from_element(1, 1, c(2.0, 0.0))],
            f: vec![CMatrix::from_element(1, 1, c(3.0, 0.0))],
            sigma_n2: 1.0,
            sigma_x2: 1.0,
            gains: LinkGains { direct: vec![1.0], ap_ris: vec![1.0], ris_user: vec![vec![1.0]] },
            user_positions: vec![[0.0; 3]],
        };
        let z = cascaded_matrices(&ch);
        assert_eq!(z.z[0][(0, 0)], c(6.0, 0.0));
        let hb = equivalent_channel(&ch, &CVector::from_element(1, c(0.0, 1.0))).unwrap();
        assert_eq!(hb[(0, 0)], c(1.0, 6.0));
        let hb = equivalent_channel(&ch, &CVector::from_element(1, c(0.0, 0.0))).unwrap();
        assert_eq!(hb, ch.h);
        assert!(equivalent_channel(&ch, &CVector::zeros(2)).is_err());
    }

    #[test]
    fn zero_feed_column_gives_zero_cascade() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ch = draw_channels(&SystemGeometry::default(), Scenario::Los, &budget(), &mut rng).unwrap();
        for f in &mut ch.f {
            f.column_mut(2).fill(c(0.0, 0.0));
        }
        let z = cascaded_matrices(&ch);
        assert!(z.z[2].iter().all(|v| v.norm() == 0.0));
        assert!(z.z[1].norm() > 0.0);
    }

    #[test]
    fn three_received_signal_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let geo = SystemGeometry::default();
        let ch = draw_channels(&geo, Scenario::Los, &budget(), &mut rng).unwrap();
        let cas = cascaded_matrices(&ch);
        for _ in 0..10 {
            let phi = random_cvec(&mut rng, geo.total_elements());
            let x = random_cvec(&mut rng, geo.users);
            // per-surface sum form
            let mut per_surface = &ch.h * &x;
            let mut off = 0;
            for (g, f) in ch.g.iter().zip(&ch.f) {
                let mut gphi = g.clone();
                for n in 0..g.ncols() {
                    let p = phi[off + n];
                    gphi.column_mut(n).iter_mut().for_each(|v| *v *= p);
                }
                per_surface += gphi * f * &x;
                off += g.ncols();
            }
            let grouped = equivalent_channel(&ch, &phi).unwrap() * &x;
            let mut cascaded = &ch.h * &x;
            for (k, zk) in cas.z.iter().enumerate() {
                cascaded += zk * &phi * x[k];
            }
            let scale = grouped.norm();
            assert!((&per_surface - &grouped).norm() / scale <= 1e-12);
            assert!((&cascaded - &grouped).norm() / scale <= 1e-10);
            // G diag(phi) F x identity against the reflected part only
            let refl: CVector = cas.z.iter().enumerate().map(|(k, zk)| zk * &phi * x[k]).fold(CVector::zeros(geo.antennas), |a, b| a + b);
            let direct_free = &grouped - &ch.h * &x;
            assert!((refl - direct_free).norm() / scale <= 1e-10);
        }
    }

    #[test]
    fn noiseless_unit_input_reads_a_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = draw_channels(&SystemGeometry::default(), Scenario::Los, &budget(), &mut rng).unwrap();
        let phi = CVector::zeros(ch.total_elements());
        let mut x = CVector::zeros(ch.users());
        x[0] = c(1.0, 0.0);
        let y = noiseless_rx(&ch, &[phi], &[x]).unwrap();
        assert_eq!(y[0], column(&ch.h, 0));
    }

    #[test]
    fn synthesis_is_deterministic_and_checks_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = draw_channels(&SystemGeometry::default(), Scenario::Los, &budget(), &mut rng).unwrap();
        let phis: Vec<CVector> = (0..4).map(|_| random_cvec(&mut rng, ch.total_elements())).collect();
        let xs: Vec<CVector> = (0..4).map(|_| random_cvec(&mut rng, ch.users())).collect();
        let a = synthesize_rx(&ch, &phis, &xs, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = synthesize_rx(&ch, &phis, &xs, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert!(synthesize_rx(&ch, &phis[..3], &xs, &mut rng).is_err());
        assert!(synthesize_rx(&ch, &[], &[], &mut rng).is_err());
    }

    #[test]
    fn noise_covariance_is_scaled_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let geo = SystemGeometry { antennas: 3, users: 2, elements: 2, ..SystemGeometry::default() };
        let ch = draw_channels(&geo, Scenario::Los, &LinkBudget { sigma_n2: 2.5, sigma_x2: 1.0, direct_extra_loss_db: 0.0 }, &mut rng).unwrap();
        let draws = 100_000;
        let phi = random_cvec(&mut rng, geo.total_elements());
        let x = random_cvec(&mut rng, geo.users);
        let clean = equivalent_channel(&ch, &phi).unwrap() * &x;
        let mut cov = CMatrix::zeros(3, 3);
        for _ in 0..draws {
            let y = synthesize_rx(&ch, std::slice::from_ref(&phi), std::slice::from_ref(&x), &mut rng).unwrap();
            let n = &y[0] - &clean;
            cov += &n * n.adjoint();
        }
        cov /= c(draws as f64, 0.0);
        for r in 0..3 {
            assert!((cov[(r, r)].re / 2.5 - 1.0).abs() < 0.02);
            for s in 0..3 {
                if r != s {
                    assert!(cov[(r, s)].norm() / 2.5 < 0.02);
                }
            }
        }
    }
}
