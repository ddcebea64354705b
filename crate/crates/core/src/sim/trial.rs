use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{EstimatorMode, SimConfig};
use crate::channel::{cascaded_matrices, draw_channels, synthesize_rx, ChannelSet, Scenario};
use crate::error::Result;
use crate::estimator::{estimate_cascaded, iterative_refine, nmse, Decisions, EstimationSetup, LmmseModel, RefineOptions};
use crate::idd::{IddOutput, IddReceiver};
use crate::ldpc::{construct_regular_ldpc, make_packet_layout, LdpcCode, PacketLayout, Segment};
use crate::linalg::{kron_vec, solve_hpd, CMatrix, CVector, C64};
use crate::modem::{Constellation, BITS_PER_SYMBOL};
use crate::ris::{build_pilot_symbols, build_theta_o, build_theta_ps, optimize_phi, truncate_passive, PilotBook, ReflectionSchedule};

/// RNG stream reserved for the code construction.
const CODE_STREAM: u64 = u64::MAX;

/// Outcome of one block-fading packet at one transmit power.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub pt_dbm: f64,
    pub trial: u64,
    /// `NaN` when there is no direct link to normalise by.
    pub nmse_direct: f64,
    pub nmse_cascaded: f64,
    /// Cascaded NMSE of the coarse estimate followed by each refinement.
    pub nmse_trace: Vec<f64>,
    pub bit_errors: usize,
    pub info_bits: usize,
    pub ber: f64,
    pub iterations: usize,
    pub condition: f64,
    pub pilots_used: usize,
    /// Users whose final decode did not satisfy every check.
    pub unconverged_users: usize,
    pub clamped_gains: usize,
}

/// A validated configuration with its LDPC code.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    code: LdpcCode,
}

/// Per-user cascaded blocks `Z_k` of `Z_all`.
pub fn split_cascaded(z_all: &CMatrix, users: usize) -> Vec<CMatrix> {
    let ln = z_all.ncols() / users;
    (0..users).map(|k| z_all.columns(k * ln, ln).into_owned()).collect()
}

/// `H + [Z_1 φ … Z_K φ]` from direct and stacked cascaded channels.
pub fn equivalent_from_parts(h: &CMatrix, z_all: &CMatrix, phi: &CVector) -> CMatrix {
    let ln = phi.len();
    let mut out = h.clone();
    for k in 0..h.ncols() {
        let col = z_all.columns(k * ln, ln) * phi;
        let mut dst = out.column_mut(k);
        dst += col;
    }
    out
}

/// Equivalent channel at every instant of `schedule`.
pub fn instant_channels(h: &CMatrix, z_all: &CMatrix, schedule: &ReflectionSchedule) -> Vec<CMatrix> {
    let mut info: Option<CMatrix> = None;
    (0..schedule.len())
        .map(|i| {
            if schedule.segments[i] == Segment::Info {
                info.get_or_insert_with(|| equivalent_from_parts(h, z_all, &schedule.phi(i))).clone()
            } else {
                equivalent_from_parts(h, z_all, &schedule.phi(i))
            }
        })
        .collect()
}

/// Alternating MMSE-filter / least-squares reflection design, projected onto the unit circle.
pub fn design_phi(h: &CMatrix, z_all: &CMatrix, sigma_n2: f64, sigma_x2: f64, rounds: usize) -> Result<CVector> {
    let users = h.ncols();
    let z = split_cascaded(z_all, users);
    let mut phi = CVector::from_element(z_all.ncols() / users, C64::new(1.0, 0.0));
    let reg = C64::new(sigma_n2 / sigma_x2, 0.0);
    for _ in 0..rounds {
        let h_bar = equivalent_from_parts(h, z_all, &phi);
        let gram = h_bar.adjoint() * &h_bar + CMatrix::identity(users, users) * reg;
        let w = solve_hpd(gram, &h_bar.adjoint())?;
        let sol = optimize_phi(&w, &z, h)?;
        phi = truncate_passive(&sol.phi).0;
    }
    Ok(phi)
}

fn diag(values: impl Iterator<Item = f64>) -> CMatrix {
    let v: Vec<C64> = values.map(|g| C64::new(g, 0.0)).collect();
    CMatrix::from_diagonal(&CVector::from_vec(v))
}

/// Receiver priors: per-user path-loss gains, and `ap_ris · ris_user` per cascaded entry.
pub fn channel_priors(ch: &ChannelSet, elements: usize) -> (CMatrix, CMatrix) {
    let direct = diag(ch.gains.direct.iter().cloned());
    let surfaces = ch.gains.ap_ris.len();
    let cascaded = diag((0..ch.users()).flat_map(|k| {
        (0..surfaces).flat_map(move |j| std::iter::repeat_n(ch.gains.cascaded(j, k), elements))
    }));
    (direct, cascaded)
}

fn modulate(c: &Constellation, codewords: &[Vec<u8>], range: std::ops::Range<usize>) -> Vec<CVector> {
    range
        .map(|i| CVector::from_iterator(codewords.len(), codewords.iter().map(|cw| c.point([cw[2 * i], cw[2 * i + 1]]))))
        .collect()
}

fn count_errors(out: &IddOutput, messages: &[Vec<u8>], skip: usize) -> usize {
    out.messages
        .iter()
        .zip(messages)
        .map(|(a, b)| a[skip..].iter().zip(&b[skip..]).filter(|(x, y)| x != y).count())
        .sum()
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(CODE_STREAM);
        let pcm = construct_regular_ldpc(cfg.code.n, cfg.code.rate, cfg.code.column_weight, &mut rng)?;
        let code = LdpcCode::new(pcm)?;
        if cfg.mode == EstimatorMode::Proposed {
            make_packet_layout(cfg.code.n, cfg.code.rate, cfg.pilots, BITS_PER_SYMBOL)?;
            build_pilot_symbols(cfg.geometry.users, cfg.pilots, 1.0)?;
        }
        Ok(Simulator { cfg, code })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn code(&self) -> &LdpcCode {
        &self.code
    }

    /// Independent stream per trial; every power level of a trial reuses it.
    pub fn trial_rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(trial);
        rng
    }

    pub fn run_trial(&self, pt_dbm: f64, trial: u64) -> Result<TrialRecord> {
        match self.cfg.mode {
            EstimatorMode::Proposed => self.run_proposed(pt_dbm, trial),
            EstimatorMode::ConventionalOnoff => self.run_conventional(pt_dbm, trial),
        }
    }

    fn receiver(&self, layout: PacketLayout, c: Constellation, sigma_n2: f64, pilot_bits: Vec<Vec<u8>>) -> IddReceiver<'_> {
        IddReceiver {
            code: &self.code,
            layout,
            constellation: c,
            sigma_n2,
            idd_iterations: self.cfg.idd_iterations,
            bp_iterations: self.cfg.bp_iterations,
            pilot_bits,
        }
    }

    fn random_messages(&self, rng: &mut ChaCha8Rng, heads: Vec<Vec<u8>>) -> Vec<Vec<u8>> {
        heads
            .into_iter()
            .map(|mut msg| {
                let fill = self.code.k() - msg.len();
                msg.extend((0..fill).map(|_| rng.random_range(0..2u8)));
                msg
            })
            .collect()
    }

    fn encode_all(&self, messages: &[Vec<u8>]) -> Result<Vec<Vec<u8>>> {
        messages.iter().map(|m| self.code.systematic_encode(m)).collect()
    }

    fn nmse_direct(&self, h_hat: &CMatrix, ch: &ChannelSet) -> Result<f64> {
        match self.cfg.scenario {
            Scenario::Los => nmse(h_hat, &ch.h),
            Scenario::Nlos => Ok(f64::NAN),
        }
    }

    fn run_proposed(&self, pt_dbm: f64, trial: u64) -> Result<TrialRecord> {
        let cfg = &self.cfg;
        let geo = &cfg.geometry;
        let (users, ln) = (geo.users, geo.total_elements());
        let budget = cfg.budget(pt_dbm);
        let (sn2, sx2) = (budget.sigma_n2, budget.sigma_x2);
        let mut rng = self.trial_rng(trial);
        let ch = draw_channels(geo, cfg.scenario, &budget, &mut rng)?;
        let truth = cascaded_matrices(&ch);
        let c = Constellation::new(sx2)?;
        let layout = make_packet_layout(cfg.code.n, cfg.code.rate, cfg.pilots, BITS_PER_SYMBOL)?;
        let book = PilotBook::standard(users, cfg.pilots, ln, sx2)?;

        let pilot_bits: Vec<Vec<u8>> = (0..users)
            .map(|k| (0..cfg.pilots).flat_map(|j| c.hard_demap(book.x_p[(k, j)])).collect())
            .collect();
        let messages = self.random_messages(&mut rng, pilot_bits.clone());
        let codewords = self.encode_all(&messages)?;
        let xs = modulate(&c, &codewords, 0..layout.total_symbols());

        let pilot_phis: Vec<CVector> = (0..cfg.pilots).map(|j| book.phi(j)).collect();
        let mut rx = synthesize_rx(&ch, &pilot_phis, &xs[..cfg.pilots], &mut rng)?;
        let (direct_r, cascaded_r) = channel_priors(&ch, geo.elements);
        let setup = EstimationSetup { pilots: book.clone(), direct_r, cascaded_r, sigma_n2: sn2, sigma_x2: sx2 };
        let phi_o = if cfg.genie_csi {
            design_phi(&ch.h, &truth.z_all, sn2, sx2, cfg.phi_rounds)?
        } else {
            let coarse = setup.coarse(&rx, false)?;
            design_phi(&coarse.h_hat, &coarse.z_all_hat, sn2, sx2, cfg.phi_rounds)?
        };
        let schedule = ReflectionSchedule::for_packet(&layout, &book, &phi_o)?;
        let rest = cfg.pilots..schedule.len();
        rx.extend(synthesize_rx(&ch, &schedule.phis()[rest.clone()], &xs[rest], &mut rng)?);

        let receiver = self.receiver(layout, c, sn2, pilot_bits);
        let info_bits = users * (self.code.k() - layout.pilot_bits());
        if cfg.genie_csi {
            let out = receiver.run(&rx, &instant_channels(&ch.h, &truth.z_all, &schedule))?;
            let bit_errors = count_errors(&out, &messages, layout.pilot_bits());
            return Ok(TrialRecord {
                pt_dbm,
                trial,
                nmse_direct: self.nmse_direct(&ch.h, &ch)?,
                nmse_cascaded: 0.0,
                nmse_trace: vec![0.0],
                bit_errors,
                info_bits,
                ber: bit_errors as f64 / info_bits as f64,
                iterations: 0,
                condition: f64::NAN,
                pilots_used: cfg.pilots,
                unconverged_users: out.converged.iter().filter(|c| !**c).count(),
                clamped_gains: out.clamped_gains,
            });
        }

        let opts = RefineOptions {
            max_iters: cfg.ce_iterations,
            tol: cfg.tol,
            include_data_segment: cfg.include_data_segment,
            exclude_unconverged: cfg.exclude_unconverged,
            log_condition: cfg.log_condition,
        };
        let mut clamped_gains = 0;
        let est = iterative_refine(
            &setup,
            &rx,
            &schedule,
            |h, z| {
                let out = receiver.run(&rx, &instant_channels(h, z, &schedule))?;
                clamped_gains += out.clamped_gains;
                Ok(Decisions { symbols: out.symbols, converged: out.converged })
            },
            &opts,
            Some(&truth.z_all),
        )?;
        let out = receiver.run(&rx, &instant_channels(&est.h_hat, &est.z_all_hat, &schedule))?;
        let bit_errors = count_errors(&out, &messages, layout.pilot_bits());
        let mut nmse_trace = vec![est.coarse_nmse.expect("truth supplied")];
        nmse_trace.extend(&est.nmse_trace);
        Ok(TrialRecord {
            pt_dbm,
            trial,
            nmse_direct: self.nmse_direct(&est.h_hat, &ch)?,
            nmse_cascaded: *nmse_trace.last().expect("non-empty"),
            nmse_trace,
            bit_errors,
            info_bits,
            ber: bit_errors as f64 / info_bits as f64,
            iterations: est.iterations_used,
            condition: est.condition,
            pilots_used: cfg.pilots,
            unconverged_users: out.converged.iter().filter(|c| !**c).count(),
            clamped_gains: clamped_gains + out.clamped_gains,
        })
    }

    /// Separate training: sign-flip pilots for the direct link, then a
    /// Hadamard × DFT sweep for the reflected links, then an all-data packet.
    fn run_conventional(&self, pt_dbm: f64, trial: u64) -> Result<TrialRecord> {
        let cfg = &self.cfg;
        let geo = &cfg.geometry;
        let (users, ln) = (geo.users, geo.total_elements());
        let budget = cfg.budget(pt_dbm);
        let (sn2, sx2) = (budget.sigma_n2, budget.sigma_x2);
        let mut rng = self.trial_rng(trial);
        let ch = draw_channels(geo, cfg.scenario, &budget, &mut rng)?;
        let truth = cascaded_matrices(&ch);
        let c = Constellation::new(sx2)?;
        let layout = make_packet_layout(cfg.code.n, cfg.code.rate, 0, BITS_PER_SYMBOL)?;
        let messages = self.random_messages(&mut rng, vec![Vec::new(); users]);
        let codewords = self.encode_all(&messages)?;
        let xs = modulate(&c, &codewords, 0..layout.total_symbols());

        let n_d = cfg.conventional.direct_pilots;
        let book = PilotBook::standard(users, n_d, ln, sx2)?;
        let direct_phis: Vec<CVector> = (0..n_d).map(|j| book.phi(j)).collect();
        let direct_xs: Vec<CVector> = (0..n_d).map(|j| book.symbol(j)).collect();
        let rx_direct = synthesize_rx(&ch, &direct_phis, &direct_xs, &mut rng)?;

        let n_r = cfg.conventional.reflected_pilots;
        let q = users.next_power_of_two();
        let hadamard = build_pilot_symbols(users, 2 * q, sx2)?;
        let order = ln.max(n_r.div_ceil(q));
        let dft = build_theta_ps(ln, order);
        let refl_xs: Vec<CVector> = (0..n_r).map(|c| hadamard.column(c % q).into_owned()).collect();
        let refl_phis: Vec<CVector> = (0..n_r).map(|c| dft.column(c / q).into_owned()).collect();
        let rx_refl = synthesize_rx(&ch, &refl_phis, &refl_xs, &mut rng)?;

        let (direct_r, cascaded_r) = channel_priors(&ch, geo.elements);
        let setup = EstimationSetup { pilots: book, direct_r, cascaded_r: cascaded_r.clone(), sigma_n2: sn2, sigma_x2: sx2 };
        let coarse = setup.coarse(&rx_direct, false)?;
        let obs: Vec<CVector> = rx_refl.iter().zip(&refl_xs).map(|(y, x)| y - &coarse.h_hat * x).collect();
        let lambda_cols: Vec<CVector> = refl_xs.iter().zip(&refl_phis).map(|(x, p)| kron_vec(x, p)).collect();
        let lambda = crate::linalg::hstack(&lambda_cols, users * ln);
        let model = LmmseModel::new(cascaded_r, sn2 + coarse.direct_residual, sx2)?;
        let z_hat = estimate_cascaded(&obs, &lambda, &model)?;
        let condition = if cfg.log_condition { crate::linalg::condition_number(&lambda) } else { f64::NAN };

        let (h_use, z_use) = if cfg.genie_csi { (&ch.h, &truth.z_all) } else { (&coarse.h_hat, &z_hat) };
        let phi_o = design_phi(h_use, z_use, sn2, sx2, cfg.phi_rounds)?;
        let t = layout.total_symbols();
        let schedule = ReflectionSchedule::new(
            build_theta_o(&phi_o, t),
            (0..t).map(|i| layout.segment(i).expect("inside packet")).collect(),
        )?;
        let rx = synthesize_rx(&ch, &schedule.phis(), &xs, &mut rng)?;
        let receiver = self.receiver(layout, c, sn2, vec![Vec::new(); users]);
        let out = receiver.run(&rx, &instant_channels(h_use, z_use, &schedule))?;
        let bit_errors = count_errors(&out, &messages, 0);
        let info_bits = users * self.code.k();
        let nmse_cascaded = if cfg.genie_csi { 0.0 } else { nmse(&z_hat, &truth.z_all)? };
        Ok(TrialRecord {
            pt_dbm,
            trial,
            nmse_direct: self.nmse_direct(h_use, &ch)?,
            nmse_cascaded,
            nmse_trace: vec![nmse_cascaded],
            bit_errors,
            info_bits,
            ber: bit_errors as f64 / info_bits as f64,
            iterations: 0,
            condition,
            pilots_used: n_d + n_r,
            unconverged_users: out.converged.iter().filter(|c| !**c).count(),
            clamped_gains: out.clamped_gains,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{LinkBudget, SystemGeometry};

    #[test]
    fn equivalent_from_parts_matches_channel_model() {
        let geo = SystemGeometry::default();
        let budget = LinkBudget { sigma_n2: 1e-14, sigma_x2: 1e-3, direct_extra_loss_db: 0.0 };
        let ch = draw_channels(&geo, Scenario::Los, &budget, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let z = cascaded_matrices(&ch);
        let phi = crate::ris::build_theta_ps(32, 7).column(3).into_owned();
        let a = equivalent_from_parts(&ch.h, &z.z_all, &phi);
        let b = crate::channel::equivalent_channel(&ch, &phi).unwrap();
        assert!((a - &b).norm() <= 1e-12 * b.norm());
    }

    #[test]
    fn priors_follow_the_block_ordering() {
        let geo = SystemGeometry::default();
        let budget = LinkBudget { sigma_n2: 1e-14, sigma_x2: 1e-3, direct_extra_loss_db: 0.0 };
        let ch = draw_channels(&geo, Scenario::Nlos, &budget, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let (d, r) = channel_priors(&ch, geo.elements);
        assert_eq!((d.nrows(), r.nrows()), (4, 128));
        assert_eq!(r[(16 * 5 + 3, 16 * 5 + 3)].re, ch.gains.cascaded(1, 2));
        assert_eq!(r[(3, 3)].re, ch.gains.cascaded(0, 0));
    }

    #[test]
    fn same_seed_and_index_give_identical_records() {
        let cfg = SimConfig { pt_dbm: vec![10.0], trials: 1, ..SimConfig::default() };
        let sim = Simulator::new(cfg).unwrap();
        assert_eq!(sim.run_trial(10.0, 3).unwrap(), sim.run_trial(10.0, 3).unwrap());
    }
}
