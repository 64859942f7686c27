//! Comparison schemes: exhaustive near-field search, the FC ablation and OMP
//! channel estimation with MRC analog beams.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::alloc::{allocate_beams, select_candidates, sort_candidates, AllocationResult, SortedCandidates};
use crate::codebook::{NearFieldCodebook, WideBeamCodebook};
use crate::error::{Error, Result};
use crate::gnn::{forward, Aggregation, NetworkParams, ProbabilityPair};
use crate::pilot::{GainMatrix, PilotConfig};
use crate::scenario::{cn, Scenario};
use crate::{dot, C64};

/// Result of probing every near-field codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOutcome {
    /// Measured `|h^dl · b|` per user, flat order.
    pub gains: Vec<Vec<f64>>,
    pub candidates: Vec<SortedCandidates>,
    pub allocation: AllocationResult,
}

/// Probes all `N S` codewords for every user (normalised measurements with
/// noise variance `σ² / P`), keeps each user's `K` strongest and allocates
/// them with the greedy conflict-free rule.
pub fn exhaustive_search<R: Rng + ?Sized>(
    scenario: &Scenario,
    codebook: &NearFieldCodebook,
    cfg: &PilotConfig,
    rng: &mut R,
) -> Result<ExhaustiveOutcome> {
    let k = scenario.num_users();
    let var = cfg.normalized_noise();
    let mut gains = Vec::with_capacity(k);
    let mut candidates = Vec::with_capacity(k);
    for ch in &scenario.channels {
        let h = ch.downlink();
        let measured: Vec<C64> = (0..codebook.len())
            .map(|j| {
                let y = dot(&h, codebook.codeword(j));
                if var > 0.0 {
                    y + cn(rng, var)
                } else {
                    y
                }
            })
            .collect();
        let moduli: Vec<f64> = measured.iter().map(|v| v.norm()).collect();
        let top = select_candidates(&moduli, k)?;
        let responses: Vec<C64> = top.iter().map(|&f| measured[f - 1]).collect();
        candidates.push(sort_candidates(&top, &responses)?);
        gains.push(moduli);
    }
    let allocation = allocate_beams(&candidates)?;
    Ok(ExhaustiveOutcome { gains, candidates, allocation })
}

/// The graph network with neighbour aggregation replaced by zeros.
pub fn fc_ablation_forward(
    params_angle: &NetworkParams,
    params_dist: &NetworkParams,
    gains: &[GainMatrix],
) -> Result<Vec<ProbabilityPair>> {
    forward(params_angle, params_dist, gains, Aggregation::Zero)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// Estimate `dict · x`.
    pub h: Vec<C64>,
    /// 0-based atom indices in selection order.
    pub support: Vec<usize>,
    pub coefficients: Vec<C64>,
    /// Residual norm before the first and after every iteration.
    pub residual_norms: Vec<f64>,
}

/// A measurement matrix and dictionary prepared for repeated OMP runs.
#[derive(Debug, Clone)]
pub struct OmpDictionary {
    dict: DMatrix<C64>,
    /// Effective dictionary `A · dict`.
    phi: DMatrix<C64>,
    norms: Vec<f64>,
}

impl OmpDictionary {
    pub fn new(a: &DMatrix<C64>, dict: DMatrix<C64>) -> Result<Self> {
        if a.ncols() != dict.nrows() {
            return Err(Error::Shape(format!("A has {} columns, dictionary {} rows", a.ncols(), dict.nrows())));
        }
        let phi = a * &dict;
        let norms = phi.column_iter().map(|c| c.norm()).collect();
        Ok(Self { dict, phi, norms })
    }

    pub fn num_measurements(&self) -> usize {
        self.phi.nrows()
    }

    pub fn estimate(&self, y: &[C64], sparsity: usize) -> Result<OmpResult> {
        let m = self.num_measurements();
        if y.len() != m {
            return Err(Error::Shape(format!("{} measurements for a {m}-row sensing matrix", y.len())));
        }
        if sparsity == 0 || sparsity > m {
            return Err(Error::Invalid(format!("sparsity {sparsity} with {m} measurements")));
        }
        let y = DVector::from_column_slice(y);
        let mut residual = y.clone();
        let mut support: Vec<usize> = Vec::with_capacity(sparsity);
        let mut coefficients = DVector::<C64>::zeros(0);
        let mut residual_norms = vec![residual.norm()];
        for _ in 0..sparsity {
            if residual.norm() == 0.0 {
                break;
            }
            let mut best = None;
            let mut best_corr = -1.0;
            for j in 0..self.phi.ncols() {
                if self.norms[j] == 0.0 || support.contains(&j) {
                    continue;
                }
                let corr = self.phi.column(j).dotc(&residual).norm() / self.norms[j];
                if corr > best_corr {
                    best_corr = corr;
                    best = Some(j);
                }
            }
            let Some(j) = best else { break };
            support.push(j);
            let sub = self.phi.select_columns(&support);
            coefficients = sub
                .clone()
                .svd(true, true)
                .solve(&y, 1e-12)
                .map_err(|e| Error::Singular(format!("least-squares refit failed: {e}")))?;
            residual = &y - &sub * &coefficients;
            let norm = residual.norm();
            debug_assert!(norm <= residual_norms.last().unwrap() * (1.0 + 1e-9) + 1e-300);
            residual_norms.push(norm);
        }
        let mut h = DVector::<C64>::zeros(self.dict.nrows());
        for (i, &j) in support.iter().enumerate() {
            h += self.dict.column(j) * coefficients[i];
        }
        Ok(OmpResult { h: h.as_slice().to_vec(), support, coefficients: coefficients.as_slice().to_vec(), residual_norms })
    }
}

/// Orthogonal matching pursuit for `y ≈ A · dict · x` with `sparsity` atoms.
pub fn omp_estimate(y: &[C64], a: &DMatrix<C64>, dict: &DMatrix<C64>, sparsity: usize) -> Result<OmpResult> {
    OmpDictionary::new(a, dict.clone())?.estimate(y, sparsity)
}

/// Sensing matrix of the wide-beam sweep: row `i` is wide column `i` on the
/// first `N/M` antennas, zero elsewhere.
pub fn sweep_sensing_matrix(wide: &WideBeamCodebook, num_antennas: usize) -> DMatrix<C64> {
    let len = wide.active_antennas();
    let mut a = DMatrix::zeros(len, num_antennas);
    for i in 0..len {
        for (n, w) in wide.codeword(i).iter().enumerate() {
            a[(i, n)] = *w;
        }
    }
    a
}

/// OMP setup for estimating downlink rows `h^dl` from phase-1 gains: the
/// dictionary holds the conjugated near-field codewords because
/// `h^dl = hᴴ` is a combination of conjugated steering vectors.
pub fn downlink_omp_dictionary(wide: &WideBeamCodebook, codebook: &NearFieldCodebook) -> Result<OmpDictionary> {
    let a = sweep_sensing_matrix(wide, codebook.num_antennas);
    OmpDictionary::new(&a, codebook.codewords.map(|c| c.conj()))
}

/// MRC analog beams: column `k` is `(ĥ_k^dl)ᴴ / ‖ĥ_k^dl‖`.
pub fn mrc_analog(estimates: &[Vec<C64>]) -> Result<DMatrix<C64>> {
    let n = estimates.first().map(Vec::len).ok_or_else(|| Error::Invalid("no estimates".into()))?;
    let mut f = DMatrix::zeros(n, estimates.len());
    for (k, h) in estimates.iter().enumerate() {
        if h.len() != n {
            return Err(Error::Shape("estimates differ in length".into()));
        }
        let norm = crate::norm(h);
        if !(norm > 0.0) {
            return Err(Error::Singular(format!("estimate of user {k} is zero")));
        }
        for (i, v) in h.iter().enumerate() {
            f[(i, k)] = v.conj() / norm;
        }
    }
    Ok(f)
}
