//! Experiment configuration: a flat `key = value` text format with two
//! built-in profiles.
//!
//! Lines are `dotted.key = value`; `#` starts a comment; blank lines are
//! ignored. Lists are comma separated. A `profile` line selects the base
//! profile wherever it appears; every other line overrides one field of it.
//! Powers are written in dBm and converted to watts only when the pilot and
//! precoder settings are resolved.

use std::fmt::Display;
use std::str::FromStr;

use crate::codebook::{NearFieldCodebook, RingRule, WideBeamCodebook};
use crate::error::{Error, Result};
use crate::geometry::{rayleigh_distance, ArrayGeometry};
use crate::gnn::{ModelShape, TrainSchedule};
use crate::pilot::{PilotConfig, Scheme};
use crate::scenario::ScenarioConfig;
use crate::dbm_to_watts;

/// Upper bound on the default `r_max`, metres.
pub const R_MAX_CAP: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Paper,
    Desk,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            _ => Err(Error::Config(format!("unknown profile {s:?} (expected paper or desk)"))),
        }
    }
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Paper => "paper",
            Self::Desk => "desk",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seed: u64,

    pub num_antennas: usize,
    pub carrier_freq: f64,
    /// Element spacing in wavelengths.
    pub spacing: f64,

    pub m: usize,
    pub s: usize,
    pub ring_rule: RingRule,
    pub r_min: f64,
    /// `None` resolves to `min(rayleigh_distance, 400 m)`.
    pub r_max: Option<f64>,

    pub num_users: usize,
    pub cluster_diameter: f64,
    pub num_paths: usize,
    pub nlos_deficit_db: f64,
    pub num_scatterers: usize,
    pub bounds: [f64; 3],
    pub bs_position: [f64; 3],
    pub user_height: f64,

    pub p_ul_dbm: f64,
    pub p_dl_dbm: f64,
    pub noise_ul_dbm: f64,
    pub noise_dl_dbm: f64,
    /// Draw each training sample's `P_ul` uniformly from the range below.
    pub train_random_p_ul: bool,
    pub train_p_ul_min_dbm: f64,
    pub train_p_ul_max_dbm: f64,

    pub symbol_time: f64,
    pub frame_time: f64,
    pub count_phase3_for_exhaustive: bool,

    /// Analog phase resolution in bits; 0 keeps continuous phases.
    pub phase_bits: u32,

    pub feature_width: usize,
    pub num_layers: usize,

    pub schedule: TrainSchedule,
    pub samples: usize,
    pub train_split: f64,

    pub eval_scenarios: usize,
    /// Test scenarios use seeds `seed + eval_seed_offset + i`.
    pub eval_seed_offset: u64,
    pub schemes: Vec<Scheme>,
    /// OMP sparsity; 0 uses the scenario path count.
    pub omp_sparsity: usize,
    pub sweep_p_ul_dbm: Vec<f64>,
    pub sweep_p_dl_dbm: Vec<f64>,
    pub sweep_k: Vec<usize>,
}

impl ExperimentConfig {
    pub fn paper() -> Self {
        Self {
            profile: Profile::Paper,
            seed: 1,
            num_antennas: 256,
            carrier_freq: 30e9,
            spacing: 0.5,
            m: 4,
            s: 5,
            ring_rule: RingRule::Reciprocal,
            r_min: 3.0,
            r_max: None,
            num_users: 8,
            cluster_diameter: 6.0,
            num_paths: 3,
            nlos_deficit_db: 10.0,
            num_scatterers: 4,
            bounds: [40.0, 30.0, 5.0],
            bs_position: [15.0, 0.0, 2.0],
            user_height: 1.0,
            p_ul_dbm: 4.0,
            p_dl_dbm: 5.0,
            noise_ul_dbm: -81.0,
            noise_dl_dbm: -81.0,
            train_random_p_ul: false,
            train_p_ul_min_dbm: 0.0,
            train_p_ul_max_dbm: 8.0,
            symbol_time: 1e-7,
            frame_time: 2e-4,
            count_phase3_for_exhaustive: false,
            phase_bits: 0,
            feature_width: 128,
            num_layers: 3,
            schedule: TrainSchedule::default(),
            samples: 12000,
            train_split: 0.9,
            eval_scenarios: 200,
            eval_seed_offset: 1_000_000,
            schemes: Scheme::ALL.to_vec(),
            omp_sparsity: 0,
            sweep_p_ul_dbm: vec![0.0, 2.0, 4.0, 6.0, 8.0],
            sweep_p_dl_dbm: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            sweep_k: vec![1, 2, 4, 8],
        }
    }

    pub fn desk() -> Self {
        Self {
            profile: Profile::Desk,
            num_antennas: 64,
            num_users: 4,
            num_paths: 2,
            samples: 2000,
            schedule: TrainSchedule { batch_size: 32, epochs: 40, ..TrainSchedule::default() },
            ..Self::paper()
        }
    }

    pub fn for_profile(p: Profile) -> Self {
        match p {
            Profile::Paper => Self::paper(),
            Profile::Desk => Self::desk(),
        }
    }

    /// Parses configuration text on top of the profile it names (or `base`).
    pub fn from_text(text: &str, base: Profile) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let profile = match pairs.iter().rev().find(|(k, _)| k == "profile") {
            Some((_, v)) => v.parse()?,
            None => base,
        };
        let mut cfg = Self::for_profile(profile);
        for (k, v) in pairs.iter().filter(|(k, _)| k != "profile") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "profile" => *self = Self { profile: v.parse()?, ..self.clone() },
            "seed" => self.seed = num(key, v)?,
            "geometry.num_antennas" => self.num_antennas = num(key, v)?,
            "geometry.carrier_freq_hz" => self.carrier_freq = num(key, v)?,
            "geometry.spacing_wavelengths" => self.spacing = num(key, v)?,
            "codebook.m" => self.m = num(key, v)?,
            "codebook.s" => self.s = num(key, v)?,
            "codebook.ring_rule" => self.ring_rule = v.parse()?,
            "codebook.r_min" => self.r_min = num(key, v)?,
            "codebook.r_max" => self.r_max = if v == "auto" { None } else { Some(num(key, v)?) },
            "scenario.num_users" => self.num_users = num(key, v)?,
            "scenario.cluster_diameter" => self.cluster_diameter = num(key, v)?,
            "scenario.num_paths" => self.num_paths = num(key, v)?,
            "scenario.nlos_deficit_db" => self.nlos_deficit_db = num(key, v)?,
            "scenario.num_scatterers" => self.num_scatterers = num(key, v)?,
            "scenario.bounds" => self.bounds = triple(key, v)?,
            "scenario.bs_position" => self.bs_position = triple(key, v)?,
            "scenario.user_height" => self.user_height = num(key, v)?,
            "power.p_ul_dbm" => self.p_ul_dbm = num(key, v)?,
            "power.p_dl_dbm" => self.p_dl_dbm = num(key, v)?,
            "power.noise_ul_dbm" => self.noise_ul_dbm = num(key, v)?,
            "power.noise_dl_dbm" => self.noise_dl_dbm = num(key, v)?,
            "power.train_random_p_ul" => self.train_random_p_ul = num(key, v)?,
            "power.train_p_ul_min_dbm" => self.train_p_ul_min_dbm = num(key, v)?,
            "power.train_p_ul_max_dbm" => self.train_p_ul_max_dbm = num(key, v)?,
            "timing.symbol_time" => self.symbol_time = num(key, v)?,
            "timing.frame_time" => self.frame_time = num(key, v)?,
            "timing.count_phase3_for_exhaustive" => self.count_phase3_for_exhaustive = num(key, v)?,
            "precoder.phase_bits" => self.phase_bits = num(key, v)?,
            "gnn.feature_width" => self.feature_width = num(key, v)?,
            "gnn.num_layers" => self.num_layers = num(key, v)?,
            "train.initial_lr" => self.schedule.initial_lr = num(key, v)?,
            "train.epochs" => self.schedule.epochs = num(key, v)?,
            "train.batch_size" => self.schedule.batch_size = num(key, v)?,
            "train.plateau_epochs" => self.schedule.plateau_epochs = num(key, v)?,
            "train.lr_decay_factor" => self.schedule.lr_decay_factor = num(key, v)?,
            "train.plateau_threshold" => self.schedule.plateau_threshold = num(key, v)?,
            "train.beta1" => self.schedule.beta1 = num(key, v)?,
            "train.beta2" => self.schedule.beta2 = num(key, v)?,
            "train.eps" => self.schedule.eps = num(key, v)?,
            "train.samples" => self.samples = num(key, v)?,
            "train.split" => self.train_split = num(key, v)?,
            "eval.scenarios" => self.eval_scenarios = num(key, v)?,
            "eval.seed_offset" => self.eval_seed_offset = num(key, v)?,
            "eval.schemes" => self.schemes = list(key, v)?,
            "eval.omp_sparsity" => self.omp_sparsity = num(key, v)?,
            "sweep.p_ul_dbm" => self.sweep_p_ul_dbm = list(key, v)?,
            "sweep.p_dl_dbm" => self.sweep_p_dl_dbm = list(key, v)?,
            "sweep.k" => self.sweep_k = list(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every setting as `(key, value)`, in a fixed order that [`Self::set`] accepts.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.schedule;
        vec![
            ("profile", self.profile.name().into()),
            ("seed", self.seed.to_string()),
            ("geometry.num_antennas", self.num_antennas.to_string()),
            ("geometry.carrier_freq_hz", self.carrier_freq.to_string()),
            ("geometry.spacing_wavelengths", self.spacing.to_string()),
            ("codebook.m", self.m.to_string()),
            ("codebook.s", self.s.to_string()),
            ("codebook.ring_rule", self.ring_rule.to_string()),
            ("codebook.r_min", self.r_min.to_string()),
            ("codebook.r_max", self.r_max.map_or("auto".into(), |r| r.to_string())),
            ("scenario.num_users", self.num_users.to_string()),
            ("scenario.cluster_diameter", self.cluster_diameter.to_string()),
            ("scenario.num_paths", self.num_paths.to_string()),
            ("scenario.nlos_deficit_db", self.nlos_deficit_db.to_string()),
            ("scenario.num_scatterers", self.num_scatterers.to_string()),
            ("scenario.bounds", join(&self.bounds)),
            ("scenario.bs_position", join(&self.bs_position)),
            ("scenario.user_height", self.user_height.to_string()),
            ("power.p_ul_dbm", self.p_ul_dbm.to_string()),
            ("power.p_dl_dbm", self.p_dl_dbm.to_string()),
            ("power.noise_ul_dbm", self.noise_ul_dbm.to_string()),
            ("power.noise_dl_dbm", self.noise_dl_dbm.to_string()),
            ("power.train_random_p_ul", self.train_random_p_ul.to_string()),
            ("power.train_p_ul_min_dbm", self.train_p_ul_min_dbm.to_string()),
            ("power.train_p_ul_max_dbm", self.train_p_ul_max_dbm.to_string()),
            ("timing.symbol_time", self.symbol_time.to_string()),
            ("timing.frame_time", self.frame_time.to_string()),
            ("timing.count_phase3_for_exhaustive", self.count_phase3_for_exhaustive.to_string()),
            ("precoder.phase_bits", self.phase_bits.to_string()),
            ("gnn.feature_width", self.feature_width.to_string()),
            ("gnn.num_layers", self.num_layers.to_string()),
            ("train.initial_lr", s.initial_lr.to_string()),
            ("train.epochs", s.epochs.to_string()),
            ("train.batch_size", s.batch_size.to_string()),
            ("train.plateau_epochs", s.plateau_epochs.to_string()),
            ("train.lr_decay_factor", s.lr_decay_factor.to_string()),
            ("train.plateau_threshold", s.plateau_threshold.to_string()),
            ("train.beta1", s.beta1.to_string()),
            ("train.beta2", s.beta2.to_string()),
            ("train.eps", s.eps.to_string()),
            ("train.samples", self.samples.to_string()),
            ("train.split", self.train_split.to_string()),
            ("eval.scenarios", self.eval_scenarios.to_string()),
            ("eval.seed_offset", self.eval_seed_offset.to_string()),
            ("eval.schemes", join(&self.schemes)),
            ("eval.omp_sparsity", self.omp_sparsity.to_string()),
            ("sweep.p_ul_dbm", join(&self.sweep_p_ul_dbm)),
            ("sweep.p_dl_dbm", join(&self.sweep_p_dl_dbm)),
            ("sweep.k", join(&self.sweep_k)),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        self.geometry()?;
        if self.m == 0 || !self.num_antennas.is_multiple_of(self.m) {
            return fail(format!("N = {} is not divisible by M = {}", self.num_antennas, self.m));
        }
        let wide = self.num_antennas / self.m;
        for &k in self.sweep_k.iter().chain([&self.num_users]) {
            if k == 0 || !wide.is_multiple_of(k) {
                return fail(format!("{wide} wide beams cannot be swept with N_RF = K = {k}"));
            }
            if k > self.num_antennas * self.s {
                return fail(format!("K = {k} exceeds the codebook size"));
            }
        }
        if self.s == 0 {
            return fail("codebook.s must be at least 1".into());
        }
        if !(self.r_min > 0.0) || !(self.r_min < self.r_max()?) {
            return fail(format!("need 0 < r_min < r_max (r_min = {})", self.r_min));
        }
        self.scenario_config(self.num_users)?.validate()?;
        self.schedule.validate()?;
        if !(self.train_split > 0.0 && self.train_split <= 1.0) {
            return fail(format!("train.split must lie in (0, 1], got {}", self.train_split));
        }
        if self.samples == 0 || self.feature_width == 0 || self.num_layers == 0 {
            return fail("samples, gnn.feature_width and gnn.num_layers must be positive".into());
        }
        if self.train_p_ul_min_dbm > self.train_p_ul_max_dbm {
            return fail("training P_ul range is empty".into());
        }
        if !(self.symbol_time >= 0.0) || !(self.frame_time > 0.0) {
            return fail("timing values must be positive".into());
        }
        if self.phase_bits > 24 {
            return fail(format!("precoder.phase_bits = {} is out of range", self.phase_bits));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        let g = ArrayGeometry::new(self.num_antennas, self.carrier_freq)?;
        ArrayGeometry::with_wavelength(self.num_antennas, g.wavelength, self.spacing * g.wavelength)
    }

    pub fn r_max(&self) -> Result<f64> {
        Ok(match self.r_max {
            Some(r) => r,
            None => rayleigh_distance(&self.geometry()?).min(R_MAX_CAP),
        })
    }

    pub fn scenario_config(&self, num_users: usize) -> Result<ScenarioConfig> {
        Ok(ScenarioConfig {
            num_users,
            cluster_diameter: self.cluster_diameter,
            r_min: self.r_min,
            r_max: self.r_max()?,
            num_paths: self.num_paths,
            nlos_deficit_db: self.nlos_deficit_db,
            bounds: self.bounds,
            bs_position: self.bs_position,
            user_height: self.user_height,
            num_scatterers: self.num_scatterers,
        })
    }

    pub fn near_field_codebook(&self) -> Result<NearFieldCodebook> {
        NearFieldCodebook::with_rule(&self.geometry()?, self.s, self.r_min, self.r_max()?, self.ring_rule)
    }

    pub fn wide_codebook(&self) -> Result<WideBeamCodebook> {
        WideBeamCodebook::new(&self.geometry()?, self.m)
    }

    /// Pilot settings for `num_users` users at the given uplink power.
    pub fn pilot_config(&self, p_ul_dbm: f64, num_users: usize) -> PilotConfig {
        PilotConfig {
            p_ul: dbm_to_watts(p_ul_dbm),
            noise_ul: dbm_to_watts(self.noise_ul_dbm),
            n_rf: num_users,
            symbol_time: self.symbol_time,
        }
    }

    pub fn noise_dl(&self) -> f64 {
        dbm_to_watts(self.noise_dl_dbm)
    }

    pub fn model_shape(&self) -> ModelShape {
        ModelShape {
            input_dim: 2 * self.num_antennas / self.m,
            feature_width: self.feature_width,
            num_layers: self.num_layers,
            num_angles: self.num_antennas,
            num_rings: self.s,
            layout_n_rf: self.num_users,
        }
    }

    pub fn omp_sparsity(&self) -> usize {
        if self.omp_sparsity == 0 {
            self.num_paths
        } else {
            self.omp_sparsity
        }
    }

    /// Errors unless `other` describes the same array and codebooks, so that
    /// features and labels produced under one are valid under the other.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        let same = self.num_antennas == other.num_antennas
            && self.carrier_freq == other.carrier_freq
            && self.spacing == other.spacing
            && self.m == other.m
            && self.s == other.s
            && self.ring_rule == other.ring_rule
            && self.r_min == other.r_min
            && self.r_max()? == other.r_max()?;
        if !same {
            return Err(Error::Config(
                "array or codebook settings differ from the ones the data or model was produced with".into(),
            ));
        }
        Ok(())
    }

    pub fn train_count(&self) -> usize {
        ((self.samples as f64 * self.train_split).floor() as usize).clamp(1, self.samples)
    }
}

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let items: Vec<T> = v.split(',').map(|x| num(key, x.trim())).collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn triple(key: &str, v: &str) -> Result<[f64; 3]> {
    list::<f64>(key, v)?
        .try_into()
        .map_err(|_| Error::Config(format!("{key}: expected three comma-separated values")))
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
