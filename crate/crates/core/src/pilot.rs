//! Uplink pilot rounds of the three-phase scheme and pilot accounting.
//!
//! Pilot sequences are never materialised: their only role is to separate
//! users, and orthogonality is taken as ideal. Noise is realised as an actual
//! antenna-domain vector combined through the probing beam, so every
//! measurement carries exactly the noise its beam would collect.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use crate::codebook::WideBeamCodebook;
use crate::error::{Error, Result};
use crate::scenario::{cn, Scenario};
use crate::{dot, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotConfig {
    /// Uplink pilot power, watts.
    pub p_ul: f64,
    /// Uplink noise power, watts.
    pub noise_ul: f64,
    pub n_rf: usize,
    /// Duration of one pilot symbol, seconds.
    pub symbol_time: f64,
}

impl PilotConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_ul > 0.0) || !(self.noise_ul >= 0.0) || self.n_rf == 0 {
            return Err(Error::Config(format!(
                "need P_ul > 0, noise >= 0, N_RF >= 1 (got {}, {}, {})",
                self.p_ul, self.noise_ul, self.n_rf
            )));
        }
        if !(self.symbol_time >= 0.0) {
            return Err(Error::Config("symbol time must be non-negative".into()));
        }
        Ok(())
    }

    /// Per-entry noise variance of a power-normalised measurement, `σ² / P`.
    pub fn normalized_noise(&self) -> f64 {
        self.noise_ul / self.p_ul
    }
}

/// Phase-1 observations of one user.
///
/// `T × N_RF`, stored row-major, so entry `(t, n)` (0-based) sits at
/// `t · N_RF + n`, which is also the 0-based index of the wide codeword that
/// produced it. The flat storage is therefore the observation vector in
/// wide-codebook order regardless of `N_RF`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    pub t: usize,
    pub n_rf: usize,
    pub data: Vec<C64>,
}

impl GainMatrix {
    pub fn new(t: usize, n_rf: usize, data: Vec<C64>) -> Result<Self> {
        if t * n_rf != data.len() || n_rf == 0 {
            return Err(Error::Shape(format!("{} entries do not form a {t} x {n_rf} matrix", data.len())));
        }
        Ok(Self { t, n_rf, data })
    }

    /// Matrix from observations in wide-codebook order.
    pub fn from_wide_order(entries: Vec<C64>, n_rf: usize) -> Result<Self> {
        if n_rf == 0 || !entries.len().is_multiple_of(n_rf) {
            return Err(Error::Shape(format!("{} wide beams cannot be split over {n_rf} RF chains", entries.len())));
        }
        Self::new(entries.len() / n_rf, n_rf, entries)
    }

    pub fn get(&self, t: usize, n: usize) -> C64 {
        self.data[t * self.n_rf + n]
    }

    pub fn num_entries(&self) -> usize {
        self.data.len()
    }

    /// The same observations regrouped for a different RF chain count.
    pub fn with_n_rf(&self, n_rf: usize) -> Result<Self> {
        Self::from_wide_order(self.data.clone(), n_rf)
    }
}

/// Phase 1: every user's gains on all wide beams, `N_RF` beams per sweep.
///
/// Entry `(t, n)` is `h^w,dl · w + νᵀ w / √P_ul`, with `h^w,dl` the downlink
/// channel on the first `N/M` antennas, `w` the stored wide column and
/// `ν ~ CN(0, σ² I)` fresh per sweep and user.
pub fn wide_beam_sweep<R: Rng + ?Sized>(
    scenario: &Scenario,
    wide: &WideBeamCodebook,
    cfg: &PilotConfig,
    rng: &mut R,
) -> Result<Vec<GainMatrix>> {
    cfg.validate()?;
    let len = wide.active_antennas();
    if !len.is_multiple_of(cfg.n_rf) {
        return Err(Error::Config(format!("{len} wide beams are not divisible by N_RF = {}", cfg.n_rf)));
    }
    let sweeps = len / cfg.n_rf;
    let noise_scale = 1.0 / cfg.p_ul.sqrt();
    let mut out = Vec::with_capacity(scenario.num_users());
    for ch in &scenario.channels {
        let h = ch.downlink();
        let h = &h[..len];
        let mut entries = Vec::with_capacity(len);
        let mut nu = vec![C64::new(0.0, 0.0); len];
        for t in 0..sweeps {
            if cfg.noise_ul > 0.0 {
                nu.iter_mut().for_each(|v| *v = cn(rng, cfg.noise_ul));
            }
            for n in 0..cfg.n_rf {
                let w = wide.codeword(t * cfg.n_rf + n);
                let mut y = dot(h, w);
                if cfg.noise_ul > 0.0 {
                    y += dot(&nu, w) * noise_scale;
                }
                entries.push(y);
            }
        }
        out.push(GainMatrix::new(sweeps, cfg.n_rf, entries)?);
    }
    Ok(out)
}

/// Phase 2 for one user: `√P_ul (h^dl · b_i) + νᵀ b_i` over its `K` candidates,
/// `ν ~ CN(0, σ² I)`. The noise is deliberately not divided by `√P_ul`.
pub fn candidate_probe<R: Rng + ?Sized>(
    h_dl: &[C64],
    candidates: &[&[C64]],
    expected: usize,
    cfg: &PilotConfig,
    rng: &mut R,
) -> Result<Vec<C64>> {
    if candidates.len() != expected {
        return Err(Error::Shape(format!("expected {expected} candidate codewords, got {}", candidates.len())));
    }
    let amp = cfg.p_ul.sqrt();
    let mut nu = vec![C64::new(0.0, 0.0); h_dl.len()];
    if cfg.noise_ul > 0.0 {
        nu.iter_mut().for_each(|v| *v = cn(rng, cfg.noise_ul));
    }
    candidates
        .iter()
        .map(|b| {
            if b.len() != h_dl.len() {
                return Err(Error::Shape(format!("codeword length {} vs channel {}", b.len(), h_dl.len())));
            }
            let mut y = dot(h_dl, b) * amp;
            if cfg.noise_ul > 0.0 {
                y += dot(&nu, b);
            }
            Ok(y)
        })
        .collect()
}

/// Phase 3: `Ĥ_ef[k, j] = h_k^dl · f_j + ν_kᵀ f_j / √P_ul`.
pub fn effective_channel_probe<R: Rng + ?Sized>(
    scenario: &Scenario,
    f_rf: &DMatrix<C64>,
    cfg: &PilotConfig,
    rng: &mut R,
) -> Result<DMatrix<C64>> {
    let n = scenario.geometry.num_antennas;
    if f_rf.nrows() != n {
        return Err(Error::Shape(format!("F_RF has {} rows, array has {n}", f_rf.nrows())));
    }
    let k = scenario.num_users();
    let noise_scale = 1.0 / cfg.p_ul.sqrt();
    let mut out = DMatrix::zeros(k, f_rf.ncols());
    let mut nu = vec![C64::new(0.0, 0.0); n];
    for (u, ch) in scenario.channels.iter().enumerate() {
        let h = ch.downlink();
        if cfg.noise_ul > 0.0 {
            nu.iter_mut().for_each(|v| *v = cn(rng, cfg.noise_ul));
        }
        for j in 0..f_rf.ncols() {
            let f = &f_rf.as_slice()[j * n..(j + 1) * n];
            let mut y = dot(&h, f);
            if cfg.noise_ul > 0.0 {
                y += dot(&nu, f) * noise_scale;
            }
            out[(u, j)] = y;
        }
    }
    Ok(out)
}

/// Beam-training schemes compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Three-phase scheme driven by the graph network.
    Gnn,
    /// Same pipeline with neighbour aggregation disabled.
    Fc,
    /// Probe every near-field codeword.
    Exhaustive,
    /// OMP channel estimate with MRC analog beams.
    Omp,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Exhaustive, Scheme::Gnn, Scheme::Fc, Scheme::Omp];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gnn => "gnn",
            Self::Fc => "fc",
            Self::Exhaustive => "exhaustive",
            Self::Omp => "omp",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gnn" | "proposed" => Ok(Self::Gnn),
            "fc" => Ok(Self::Fc),
            "exhaustive" => Ok(Self::Exhaustive),
            "omp" => Ok(Self::Omp),
            _ => Err(Error::Config(format!("unknown scheme {s:?}"))),
        }
    }
}

/// Uplink pilot symbols per scheme.
///
/// The three-phase scheme spends `N/M` symbols on the sweep, `K` on candidate
/// probing and `K` on the effective channel; the FC and OMP baselines are
/// given the same budget. Exhaustive search spends `N S` symbols, plus `K` when
/// `count_phase3_for_exhaustive` is set.
pub fn pilot_overhead(
    scheme: Scheme,
    n_bs: usize,
    m: usize,
    s: usize,
    k: usize,
    count_phase3_for_exhaustive: bool,
) -> Result<usize> {
    if m == 0 || !n_bs.is_multiple_of(m) {
        return Err(Error::Config(format!("N = {n_bs} is not divisible by M = {m}")));
    }
    Ok(match scheme {
        Scheme::Gnn | Scheme::Fc | Scheme::Omp => n_bs / m + 2 * k,
        Scheme::Exhaustive => n_bs * s + if count_phase3_for_exhaustive { k } else { 0 },
    })
}
