//! Labelled training sets: phase-1 gain matrices plus optimal codewords.
//!
//! File layout (tagged container):
//!
//! ```text
//! DSET := count u32 | num_users u32 | t u32 | n_rf u32 | num_antennas u32 | train_count u32
//! CONF := resolved configuration text (UTF-8)
//! SMPL := sample*   (one section holding every sample, in index order)
//! sample := seed u64 | p_ul_dbm f64 | (n u32 | s u32) × K | gains c64 × K·t·n_rf
//! ```

use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::codebook::{label_scenario, CodewordIndex};
use crate::config::{ExperimentConfig, Profile};
use crate::container::{self, find, Reader, Section, Writer};
use crate::error::{Error, Result};
use crate::gnn::{feature_matrix, TrainData};
use crate::pilot::{wide_beam_sweep, GainMatrix};
use crate::scenario::generate_scenario;
use crate::seed::{self, stream};

pub const HEADER_TAG: &[u8; 4] = b"DSET";
pub const CONFIG_TAG: &[u8; 4] = b"CONF";
pub const SAMPLES_TAG: &[u8; 4] = b"SMPL";

/// One scenario: its seed, uplink power, labels and phase-1 observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub seed: u64,
    pub p_ul_dbm: f64,
    pub labels: Vec<CodewordIndex>,
    pub gains: Vec<GainMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: ExperimentConfig,
    pub samples: Vec<Sample>,
    /// The first `train_count` samples form the training split.
    pub train_count: usize,
}

/// Scenario, labels and noisy sweep for one seed at one uplink power.
pub fn make_sample(cfg: &ExperimentConfig, sample_seed: u64, p_ul_dbm: f64, num_users: usize) -> Result<Sample> {
    let geom = cfg.geometry()?;
    let scenario = generate_scenario(&geom, &cfg.scenario_config(num_users)?, sample_seed)?;
    let labels = label_scenario(&scenario, &cfg.near_field_codebook()?);
    let wide = cfg.wide_codebook()?;
    let pilot = cfg.pilot_config(p_ul_dbm, num_users);
    let gains = wide_beam_sweep(&scenario, &wide, &pilot, &mut seed::rng(sample_seed, stream::WIDE_SWEEP))?;
    Ok(Sample { seed: sample_seed, p_ul_dbm, labels, gains })
}

/// `cfg.samples` scenarios; sample `i` is seeded with `split(cfg.seed, i)`.
pub fn generate(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let samples = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed::split(cfg.seed, i);
            let p_ul_dbm = if cfg.train_random_p_ul {
                seed::rng(s, stream::POWER).random_range(cfg.train_p_ul_min_dbm..=cfg.train_p_ul_max_dbm)
            } else {
                cfg.p_ul_dbm
            };
            make_sample(cfg, s, p_ul_dbm, cfg.num_users)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { config: cfg.clone(), samples, train_count: cfg.train_count() })
}

/// Features (unscaled, regrouped to `layout_n_rf`) and 0-based labels of a
/// range of samples.
pub fn train_data(samples: &[Sample], layout_n_rf: usize) -> Result<TrainData> {
    let mut cols = Vec::new();
    let mut groups = Vec::with_capacity(samples.len());
    let mut angle_labels = Vec::new();
    let mut dist_labels = Vec::new();
    let mut dim = None;
    for s in samples {
        let regrouped = s.gains.iter().map(|g| g.with_n_rf(layout_n_rf)).collect::<Result<Vec<_>>>()?;
        let x = feature_matrix(&regrouped)?;
        if *dim.get_or_insert(x.nrows()) != x.nrows() {
            return Err(Error::Shape("samples have different feature sizes".into()));
        }
        let start = angle_labels.len();
        groups.push(start..start + x.ncols());
        cols.extend_from_slice(x.as_slice());
        angle_labels.extend(s.labels.iter().map(|l| l.n - 1));
        dist_labels.extend(s.labels.iter().map(|l| l.s - 1));
    }
    let dim = dim.unwrap_or(0);
    let x = nalgebra::DMatrix::from_vec(dim, angle_labels.len(), cols);
    Ok(TrainData { x, groups, angle_labels, dist_labels })
}

impl Dataset {
    pub fn train_range(&self) -> Range<usize> {
        0..self.train_count
    }

    pub fn val_range(&self) -> Range<usize> {
        self.train_count..self.samples.len()
    }

    /// Training and validation splits in the model's input layout.
    pub fn splits(&self, layout_n_rf: usize) -> Result<(TrainData, TrainData)> {
        Ok((
            train_data(&self.samples[self.train_range()], layout_n_rf)?,
            train_data(&self.samples[self.val_range()], layout_n_rf)?,
        ))
    }

    pub fn to_sections(&self) -> Result<Vec<Section>> {
        let first = self.samples.first().ok_or_else(|| Error::Invalid("empty dataset".into()))?;
        let (k, t, n_rf) = (first.labels.len(), first.gains[0].t, first.gains[0].n_rf);
        let mut h = Writer::new();
        h.usize(self.samples.len()).usize(k).usize(t).usize(n_rf).usize(self.config.num_antennas).usize(self.train_count);
        let mut w = Writer::new();
        for s in &self.samples {
            if s.labels.len() != k || s.gains.len() != k {
                return Err(Error::Shape(format!("sample {} has {} users, expected {k}", s.seed, s.labels.len())));
            }
            w.u64(s.seed).f64(s.p_ul_dbm);
            for l in &s.labels {
                w.usize(l.n).usize(l.s);
            }
            for g in &s.gains {
                if (g.t, g.n_rf) != (t, n_rf) {
                    return Err(Error::Shape("gain matrices differ in shape".into()));
                }
                w.c64s(&g.data);
            }
        }
        Ok(vec![
            Section::new(HEADER_TAG, h.into_inner()),
            Section::new(CONFIG_TAG, self.config.to_text().into_bytes()),
            Section::new(SAMPLES_TAG, w.into_inner()),
        ])
    }

    pub fn from_sections(sections: &[Section]) -> Result<Self> {
        let mut h = Reader::new(&find(sections, HEADER_TAG)?.payload);
        let (count, k, t, n_rf, n, train_count) = (h.usize()?, h.usize()?, h.usize()?, h.usize()?, h.usize()?, h.usize()?);
        h.finish()?;
        let text = std::str::from_utf8(&find(sections, CONFIG_TAG)?.payload)
            .map_err(|e| Error::Format(format!("configuration is not UTF-8: {e}")))?;
        let config = ExperimentConfig::from_text(text, Profile::Paper)?;
        if config.num_antennas != n {
            return Err(Error::Format(format!("header says N = {n}, configuration {}", config.num_antennas)));
        }
        let mut r = Reader::new(&find(sections, SAMPLES_TAG)?.payload);
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let seed = r.u64()?;
            let p_ul_dbm = r.f64()?;
            let labels = (0..k)
                .map(|_| CodewordIndex::new(r.usize()?, r.usize()?, n))
                .collect::<Result<Vec<_>>>()?;
            let gains = (0..k).map(|_| GainMatrix::new(t, n_rf, r.c64s(t * n_rf)?)).collect::<Result<Vec<_>>>()?;
            samples.push(Sample { seed, p_ul_dbm, labels, gains });
        }
        r.finish()?;
        if train_count > count {
            return Err(Error::Format(format!("train split {train_count} exceeds {count} samples")));
        }
        Ok(Self { config, samples, train_count })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_sections()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_sections(&container::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk();
        cfg.num_antennas = 32;
        cfg.samples = 6;
        cfg.train_split = 0.5;
        cfg.num_users = 2;
        cfg.sweep_k = vec![1, 2];
        cfg
    }

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let cfg = tiny();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 6);
        assert_eq!(a.train_count, 3);
        assert_eq!(a.samples[4].seed, seed::split(cfg.seed, 4));

        let bytes = container::encode(&a.to_sections().unwrap());
        assert_eq!(bytes, container::encode(&b.to_sections().unwrap()));
        let back = Dataset::from_sections(&container::decode(&bytes).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn splits_follow_labels() {
        let d = generate(&tiny()).unwrap();
        let (train, val) = d.splits(2).unwrap();
        assert_eq!((train.num_scenarios(), val.num_scenarios()), (3, 3));
        assert_eq!(train.num_users(), 6);
        assert_eq!(train.x.nrows(), 16);
        assert_eq!(val.angle_labels[0], d.samples[3].labels[0].n - 1);
        assert_eq!(val.dist_labels[1], d.samples[3].labels[1].s - 1);
    }

    #[test]
    fn randomised_uplink_power_stays_in_range() {
        let mut cfg = tiny();
        cfg.train_random_p_ul = true;
        let d = generate(&cfg).unwrap();
        assert!(d.samples.iter().all(|s| (0.0..=8.0).contains(&s.p_ul_dbm)));
        assert!(d.samples.windows(2).any(|w| w[0].p_ul_dbm != w[1].p_ul_dbm));
    }
}
