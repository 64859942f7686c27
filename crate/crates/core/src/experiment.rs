//! End-to-end evaluation of every scheme over sweeps of uplink power,
//! downlink power or user count.
//!
//! Test scenario `i` of a sweep point uses seed `seed + eval_seed_offset + i`,
//! so every point sees the same geometries and the sweep noise is common to
//! all schemes that share phase 1.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use crate::alloc::{allocate_beams_traced, select_candidates, sort_candidates, SortedCandidates};
use crate::baselines::{downlink_omp_dictionary, exhaustive_search, mrc_analog, OmpDictionary};
use crate::codebook::{unflatten, CodewordIndex, NearFieldCodebook, WideBeamCodebook};
use crate::config::ExperimentConfig;
use crate::dbm_to_watts;
use crate::error::{Error, Result};
use crate::gnn::{combine_probabilities, GnnModel};
use crate::pilot::{candidate_probe, PilotConfig, effective_channel_probe, pilot_overhead, wide_beam_sweep, GainMatrix, Scheme};
use crate::precoder::{
    assemble_analog, effective_sum_rate, mmse_digital, quantize_phases, sum_rate, zf_digital, HybridPrecoder,
};
use crate::scenario::{generate_scenario, Scenario};
use crate::seed::{self, stream};
use crate::C64;

pub const CSV_HEADER: &str =
    "scheme,precoder,seed,K,P_ul_dbm,P_dl_dbm,sum_rate,eff_sum_rate,acc_angle,acc_dist,acc_overall,pilot_symbols,zf_fallback";

/// Quantity varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    PUl,
    PDl,
    K,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pul" | "p_ul" => Ok(Self::PUl),
            "pdl" | "p_dl" => Ok(Self::PDl),
            "k" => Ok(Self::K),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?} (expected pul, pdl or k)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub k: usize,
    pub p_ul_dbm: f64,
    pub p_dl_dbm: f64,
}

impl SweepPoint {
    pub fn nominal(cfg: &ExperimentConfig) -> Self {
        Self { k: cfg.num_users, p_ul_dbm: cfg.p_ul_dbm, p_dl_dbm: cfg.p_dl_dbm }
    }
}

/// The points of a sweep; the other two coordinates stay at their defaults.
pub fn sweep_points(cfg: &ExperimentConfig, axis: Option<SweepAxis>) -> Vec<SweepPoint> {
    let base = SweepPoint::nominal(cfg);
    match axis {
        None => vec![base],
        Some(SweepAxis::PUl) => cfg.sweep_p_ul_dbm.iter().map(|&p| SweepPoint { p_ul_dbm: p, ..base }).collect(),
        Some(SweepAxis::PDl) => cfg.sweep_p_dl_dbm.iter().map(|&p| SweepPoint { p_dl_dbm: p, ..base }).collect(),
        Some(SweepAxis::K) => cfg.sweep_k.iter().map(|&k| SweepPoint { k, ..base }).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precoding {
    Zf,
    Mmse,
}

impl Precoding {
    pub const ALL: [Precoding; 2] = [Precoding::Zf, Precoding::Mmse];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zf => "zf",
            Self::Mmse => "mmse",
        }
    }
}

/// One (scenario, scheme, digital precoder) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub precoding: Precoding,
    pub seed: u64,
    pub k: usize,
    pub p_ul_dbm: f64,
    pub p_dl_dbm: f64,
    pub sum_rate: f64,
    pub eff_sum_rate: f64,
    pub acc_angle: f64,
    pub acc_dist: f64,
    pub acc_overall: f64,
    pub pilot_symbols: usize,
    /// The zero-forcing Gram matrix was too ill-conditioned and the MMSE
    /// precoder was used instead.
    pub zf_fallback: bool,
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.precoding.name(),
            self.seed,
            self.k,
            self.p_ul_dbm,
            self.p_dl_dbm,
            self.sum_rate,
            self.eff_sum_rate,
            self.acc_angle,
            self.acc_dist,
            self.acc_overall,
            self.pilot_symbols,
            self.zf_fallback as u8
        )
    }
}

/// Trained estimators available to the evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Models<'a> {
    pub gnn: Option<&'a GnnModel>,
    pub fc: Option<&'a GnnModel>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TraceOptions {
    pub pilots: bool,
    pub alloc: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOutput {
    pub rows: Vec<ResultRow>,
    /// JSON lines, one per (scenario, scheme, phase, user).
    pub pilot_trace: Vec<String>,
    /// JSON lines, one per allocation decision.
    pub alloc_trace: Vec<String>,
}

/// Shared, read-only state for evaluating scenarios.
pub struct Evaluator<'a> {
    cfg: &'a ExperimentConfig,
    models: Models<'a>,
    codebook: NearFieldCodebook,
    wide: WideBeamCodebook,
    omp: Option<OmpDictionary>,
    trace: TraceOptions,
}

struct Estimate {
    f_rf: DMatrix<C64>,
    h_ef: DMatrix<C64>,
    analog_constrained: bool,
    /// Top-1 codeword per user, compared against the labels.
    predicted: Vec<CodewordIndex>,
}

struct Traces<'t> {
    pilots: &'t mut Vec<String>,
    alloc: &'t mut Vec<String>,
}

fn complex_json(v: &[C64]) -> serde_json::Value {
    json!({ "re": v.iter().map(|c| c.re).collect::<Vec<_>>(), "im": v.iter().map(|c| c.im).collect::<Vec<_>>() })
}

impl<'a> Evaluator<'a> {
    pub fn new(cfg: &'a ExperimentConfig, models: Models<'a>, trace: TraceOptions) -> Result<Self> {
        cfg.validate()?;
        for &scheme in &cfg.schemes {
            let missing = match scheme {
                Scheme::Gnn => models.gnn.is_none(),
                Scheme::Fc => models.fc.is_none(),
                _ => false,
            };
            if missing {
                return Err(Error::Invalid(format!("scheme {scheme} needs a trained checkpoint")));
            }
        }
        let codebook = cfg.near_field_codebook()?;
        let wide = cfg.wide_codebook()?;
        let omp = if cfg.schemes.contains(&Scheme::Omp) { Some(downlink_omp_dictionary(&wide, &codebook)?) } else { None };
        Ok(Self { cfg, models, codebook, wide, omp, trace })
    }

    pub fn codebook(&self) -> &NearFieldCodebook {
        &self.codebook
    }

    /// All configured schemes on every test scenario of every point, in
    /// (point, scenario, scheme, precoder) order.
    pub fn run(&self, points: &[SweepPoint]) -> Result<EvalOutput> {
        let mut out = EvalOutput::default();
        for point in points {
            let parts = (0..self.cfg.eval_scenarios as u64)
                .into_par_iter()
                .map(|i| self.scenario_rows(point, self.cfg.seed.wrapping_add(self.cfg.eval_seed_offset).wrapping_add(i)))
                .collect::<Result<Vec<_>>>()?;
            for part in parts {
                out.rows.extend(part.rows);
                out.pilot_trace.extend(part.pilot_trace);
                out.alloc_trace.extend(part.alloc_trace);
            }
        }
        Ok(out)
    }

    /// Rows for one test scenario at one sweep point.
    pub fn scenario_rows(&self, point: &SweepPoint, scenario_seed: u64) -> Result<EvalOutput> {
        let cfg = self.cfg;
        let geom = cfg.geometry()?;
        let scenario = generate_scenario(&geom, &cfg.scenario_config(point.k)?, scenario_seed)?;
        let labels = crate::codebook::label_scenario(&scenario, &self.codebook);
        let pilot = cfg.pilot_config(point.p_ul_dbm, point.k);
        let gains = wide_beam_sweep(&scenario, &self.wide, &pilot, &mut seed::rng(scenario_seed, stream::WIDE_SWEEP))?;

        let mut out = EvalOutput::default();
        let mut traces = Traces { pilots: &mut out.pilot_trace, alloc: &mut out.alloc_trace };
        if self.trace.pilots {
            for (user, g) in gains.iter().enumerate() {
                traces.pilots.push(
                    json!({ "seed": scenario_seed, "K": point.k, "phase": 1, "user": user, "gains": complex_json(&g.data) })
                        .to_string(),
                );
            }
        }
        for &scheme in &self.cfg.schemes {
            let est = match scheme {
                Scheme::Gnn => self.learned(&scenario, &gains, &pilot, self.models.gnn.unwrap(), scheme, &mut traces)?,
                Scheme::Fc => self.learned(&scenario, &gains, &pilot, self.models.fc.unwrap(), scheme, &mut traces)?,
                Scheme::Exhaustive => self.exhaustive(&scenario, &pilot, &mut traces)?,
                Scheme::Omp => self.omp(&scenario, &gains, &pilot)?,
            };
            if self.trace.pilots {
                let rows: Vec<_> = (0..est.h_ef.nrows()).map(|i| est.h_ef.row(i).iter().copied().collect::<Vec<_>>()).collect();
                traces.pilots.push(
                    json!({ "seed": scenario_seed, "K": point.k, "scheme": scheme.name(), "phase": 3,
                            "h_ef": rows.iter().map(|r| complex_json(r)).collect::<Vec<_>>() })
                    .to_string(),
                );
            }
            let pilots = pilot_overhead(scheme, cfg.num_antennas, cfg.m, cfg.s, point.k, cfg.count_phase3_for_exhaustive)?;
            let n = labels.len() as f64;
            let hits = |f: fn(&CodewordIndex, &CodewordIndex) -> bool| {
                est.predicted.iter().zip(&labels).filter(|(p, l)| f(p, l)).count() as f64 / n
            };
            let (acc_angle, acc_dist, acc_overall) = (hits(|p, l| p.n == l.n), hits(|p, l| p.s == l.s), hits(|p, l| p == l));
            let p_dl = dbm_to_watts(point.p_dl_dbm);
            for precoding in Precoding::ALL {
                let mmse = || mmse_digital(&est.h_ef, &est.f_rf, p_dl, cfg.noise_dl());
                // Distinct codewords can still be nearly collinear (rings of one
                // angle close to endfire), leaving no zero-forcing solution.
                let (f_bb, zf_fallback) = match precoding {
                    Precoding::Zf => match zf_digital(&est.h_ef, &est.f_rf) {
                        Ok(f) => (f, false),
                        Err(Error::Singular(_)) => (mmse()?, true),
                        Err(e) => return Err(e),
                    },
                    Precoding::Mmse => (mmse()?, false),
                };
                let pre = HybridPrecoder { f_rf: est.f_rf.clone(), f_bb, analog_constrained: est.analog_constrained };
                let rate = sum_rate(&scenario, &pre, p_dl, cfg.noise_dl())?;
                out.rows.push(ResultRow {
                    scheme,
                    precoding,
                    seed: scenario_seed,
                    k: point.k,
                    p_ul_dbm: point.p_ul_dbm,
                    p_dl_dbm: point.p_dl_dbm,
                    sum_rate: rate,
                    eff_sum_rate: effective_sum_rate(rate, pilots, cfg.symbol_time, cfg.frame_time)?,
                    acc_angle,
                    acc_dist,
                    acc_overall,
                    pilot_symbols: pilots,
                    zf_fallback,
                });
            }
        }
        Ok(out)
    }

    fn analog(&self, u: &crate::alloc::AllocationResult) -> Result<DMatrix<C64>> {
        Ok(quantize_phases(&assemble_analog(u, &self.codebook)?, self.cfg.phase_bits))
    }

    fn trace_alloc(&self, traces: &mut Traces, scenario: &Scenario, scheme: Scheme, steps: &[crate::alloc::AllocationStep]) {
        if self.trace.alloc {
            for (i, step) in steps.iter().enumerate() {
                traces.alloc.push(
                    json!({ "seed": scenario.seed, "K": scenario.num_users(), "scheme": scheme.name(), "step": i,
                            "user": step.user, "codeword": step.codeword, "modulus": step.modulus, "assigned": step.assigned })
                    .to_string(),
                );
            }
        }
    }

    /// Phases 2 and 3 driven by a trained network.
    fn learned(
        &self,
        scenario: &Scenario,
        gains: &[GainMatrix],
        pilot: &PilotConfig,
        model: &GnnModel,
        scheme: Scheme,
        traces: &mut Traces,
    ) -> Result<Estimate> {
        let k = scenario.num_users();
        let (s2, s3) = match scheme {
            Scheme::Fc => (stream::FC, stream::FC),
            _ => (stream::CANDIDATES, stream::EFFECTIVE),
        };
        let mut rng2 = seed::rng(scenario.seed, s2);
        let pairs = model.predict(gains)?;
        let mut predicted = Vec::with_capacity(k);
        let mut sorted: Vec<SortedCandidates> = Vec::with_capacity(k);
        for (user, pair) in pairs.iter().enumerate() {
            let (n, s) = pair.argmax();
            predicted.push(CodewordIndex::new(n + 1, s + 1, self.codebook.num_antennas)?);
            let cands = select_candidates(&combine_probabilities(pair), k)?;
            let words = cands.iter().map(|&f| self.codebook.codeword(f - 1)).collect::<Vec<_>>();
            let h = scenario.channels[user].downlink();
            let r = candidate_probe(&h, &words, k, pilot, &mut rng2)?;
            if self.trace.pilots {
                traces.pilots.push(
                    json!({ "seed": scenario.seed, "K": k, "scheme": scheme.name(), "phase": 2, "user": user,
                            "candidates": cands, "response": complex_json(&r) })
                    .to_string(),
                );
            }
            sorted.push(sort_candidates(&cands, &r)?);
        }
        let (u, steps) = allocate_beams_traced(&sorted)?;
        self.trace_alloc(traces, scenario, scheme, &steps);
        let f_rf = self.analog(&u)?;
        let h_ef = effective_channel_probe(scenario, &f_rf, pilot, &mut seed::rng(scenario.seed, s3))?;
        Ok(Estimate { f_rf, h_ef, analog_constrained: true, predicted })
    }

    fn exhaustive(&self, scenario: &Scenario, pilot: &PilotConfig, traces: &mut Traces) -> Result<Estimate> {
        let mut rng = seed::rng(scenario.seed, stream::EXHAUSTIVE);
        let outcome = exhaustive_search(scenario, &self.codebook, pilot, &mut rng)?;
        let (_, steps) = allocate_beams_traced(&outcome.candidates)?;
        self.trace_alloc(traces, scenario, Scheme::Exhaustive, &steps);
        let predicted = outcome
            .candidates
            .iter()
            .map(|c| unflatten(c.c[0], self.codebook.num_antennas))
            .collect::<Result<Vec<_>>>()?;
        let f_rf = self.analog(&outcome.allocation)?;
        let h_ef = effective_channel_probe(scenario, &f_rf, pilot, &mut rng)?;
        Ok(Estimate { f_rf, h_ef, analog_constrained: true, predicted })
    }

    fn omp(&self, scenario: &Scenario, gains: &[GainMatrix], pilot: &PilotConfig) -> Result<Estimate> {
        let dict = self.omp.as_ref().expect("dictionary built for omp");
        let mut estimates = Vec::with_capacity(gains.len());
        let mut predicted = Vec::with_capacity(gains.len());
        for g in gains {
            // Gain matrices are stored in wide-codebook order.
            let h = dict.estimate(&g.data, self.cfg.omp_sparsity())?.h;
            predicted.push(self.codebook.best_for(&h));
            estimates.push(h);
        }
        let f_rf = mrc_analog(&estimates)?;
        let h_ef = effective_channel_probe(scenario, &f_rf, pilot, &mut seed::rng(scenario.seed, stream::OMP))?;
        Ok(Estimate { f_rf, h_ef, analog_constrained: false, predicted })
    }
}

/// Results CSV: the resolved configuration as `#` comment lines, then the
/// header and one line per row.
pub fn results_csv(cfg: &ExperimentConfig, rows: &[ResultRow]) -> String {
    let mut out = String::new();
    for line in cfg.to_text().lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Mean of the rows sharing (scheme, precoder, K, P_ul, P_dl).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub precoding: Precoding,
    pub k: usize,
    pub p_ul_dbm: f64,
    pub p_dl_dbm: f64,
    pub scenarios: usize,
    pub sum_rate: f64,
    pub eff_sum_rate: f64,
    pub acc_angle: f64,
    pub acc_dist: f64,
    pub acc_overall: f64,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for r in rows {
        let key = |s: &SummaryRow| {
            s.scheme == r.scheme && s.precoding == r.precoding && s.k == r.k && s.p_ul_dbm == r.p_ul_dbm && s.p_dl_dbm == r.p_dl_dbm
        };
        let entry = match out.iter().position(key) {
            Some(i) => &mut out[i],
            None => {
                out.push(SummaryRow {
                    scheme: r.scheme,
                    precoding: r.precoding,
                    k: r.k,
                    p_ul_dbm: r.p_ul_dbm,
                    p_dl_dbm: r.p_dl_dbm,
                    scenarios: 0,
                    sum_rate: 0.0,
                    eff_sum_rate: 0.0,
                    acc_angle: 0.0,
                    acc_dist: 0.0,
                    acc_overall: 0.0,
                });
                out.last_mut().unwrap()
            }
        };
        entry.scenarios += 1;
        entry.sum_rate += r.sum_rate;
        entry.eff_sum_rate += r.eff_sum_rate;
        entry.acc_angle += r.acc_angle;
        entry.acc_dist += r.acc_dist;
        entry.acc_overall += r.acc_overall;
    }
    for s in &mut out {
        let n = s.scenarios as f64;
        s.sum_rate /= n;
        s.eff_sum_rate /= n;
        s.acc_angle /= n;
        s.acc_dist /= n;
        s.acc_overall /= n;
    }
    out
}
