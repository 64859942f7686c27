//! Far-field wide-beam and near-field polar codebooks.
//!
//! Gain convention: the beamforming gain of a column `f` for user `k` is
//! `|h_k^dl · f|` with `h_k^dl = h_kᴴ` (see [`NearFieldChannel::downlink`]).
//! Under that convention the near-field codewords are the steering vectors
//! themselves, and the wide-beam codebook stores the conjugates of the wide
//! codewords `e(φ)`, so that both families are matched to the paths they point at.
//!
//! [`NearFieldChannel::downlink`]: crate::scenario::NearFieldChannel::downlink

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::container::{Reader, Section, Writer};
use crate::error::{Error, Result};
use crate::geometry::{steering_vector, ArrayGeometry};
use crate::scenario::Scenario;
use crate::{dot, C64};

pub const SECTION_TAG: &[u8; 4] = b"CDBK";

/// Sine-space sampling point `-1 + (2n - 1) / count` for 1-based `n`.
pub fn grid_angle(n: usize, count: usize) -> f64 {
    -1.0 + (2.0 * n as f64 - 1.0) / count as f64
}

/// Wide codeword `e(φ_n^w)` for 1-based `n`, length `N / M`.
pub fn wide_codeword(geom: &ArrayGeometry, m: usize, n: usize) -> Result<Vec<C64>> {
    let len = wide_len(geom, m)?;
    if n == 0 || n > len {
        return Err(Error::Index(format!("wide codeword {n} of {len}")));
    }
    let phi = grid_angle(n, len);
    let amp = (m as f64 / geom.num_antennas as f64).sqrt();
    let step = geom.wavenumber() * geom.spacing * phi;
    Ok((0..len).map(|i| C64::from_polar(amp, step * i as f64)).collect())
}

fn wide_len(geom: &ArrayGeometry, m: usize) -> Result<usize> {
    if m == 0 || !geom.num_antennas.is_multiple_of(m) {
        return Err(Error::Config(format!(
            "{} antennas are not divisible into wide beams of M = {m}",
            geom.num_antennas
        )));
    }
    Ok(geom.num_antennas / m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WideBeamCodebook {
    /// Narrow beams covered by each wide beam.
    pub m: usize,
    pub angles: Vec<f64>,
    /// `(N/M) × (N/M)`; column `i` is `conj(e(φ_{i+1}^w))`, applied to the first
    /// `N/M` antennas.
    pub codewords: DMatrix<C64>,
}

impl WideBeamCodebook {
    pub fn new(geom: &ArrayGeometry, m: usize) -> Result<Self> {
        let len = wide_len(geom, m)?;
        let mut codewords = DMatrix::zeros(len, len);
        for n in 1..=len {
            let e = wide_codeword(geom, m, n)?;
            for (i, v) in e.iter().enumerate() {
                codewords[(i, n - 1)] = v.conj();
            }
        }
        Ok(Self { m, angles: (1..=len).map(|n| grid_angle(n, len)).collect(), codewords })
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Active subarray length `N / M`.
    pub fn active_antennas(&self) -> usize {
        self.codewords.nrows()
    }

    /// 0-based column.
    pub fn codeword(&self, i: usize) -> &[C64] {
        let n = self.codewords.nrows();
        &self.codewords.as_slice()[i * n..(i + 1) * n]
    }
}

/// Position of a near-field codeword: 1-based angle index `n`, distance index
/// `s`, and flat index `(s - 1) N + n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodewordIndex {
    pub n: usize,
    pub s: usize,
    pub flat: usize,
}

impl CodewordIndex {
    pub fn new(n: usize, s: usize, num_antennas: usize) -> Result<Self> {
        Ok(Self { n, s, flat: flat_index(n, s, num_antennas)? })
    }

    /// 0-based column in the codebook matrix.
    pub fn position(&self) -> usize {
        self.flat - 1
    }
}

pub fn flat_index(n: usize, s: usize, num_antennas: usize) -> Result<usize> {
    if n == 0 || n > num_antennas || s == 0 {
        return Err(Error::Index(format!("codeword (n={n}, s={s}) with N = {num_antennas}")));
    }
    Ok((s - 1) * num_antennas + n)
}

pub fn unflatten(flat: usize, num_antennas: usize) -> Result<CodewordIndex> {
    if flat == 0 || num_antennas == 0 {
        return Err(Error::Index(format!("flat index {flat} is 1-based")));
    }
    let n = (flat - 1) % num_antennas + 1;
    let s = (flat - 1) / num_antennas + 1;
    Ok(CodewordIndex { n, s, flat })
}

/// Placement of the distance rings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingRule {
    /// Uniform in `1 / r`, ring 1 farthest.
    Reciprocal,
    /// Uniform in `r`, ring 1 farthest.
    Linear,
}

impl FromStr for RingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reciprocal" => Ok(Self::Reciprocal),
            "linear" => Ok(Self::Linear),
            _ => Err(Error::Config(format!("unknown ring rule {s:?}"))),
        }
    }
}

impl fmt::Display for RingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Reciprocal => "reciprocal",
            Self::Linear => "linear",
        })
    }
}

pub fn ring_distances(rule: RingRule, s_count: usize, r_min: f64, r_max: f64) -> Result<Vec<f64>> {
    if s_count == 0 {
        return Err(Error::Config("at least one distance ring is required".into()));
    }
    if !(r_min > 0.0) || !(r_min < r_max) {
        return Err(Error::Config(format!("need 0 < r_min < r_max, got {r_min} and {r_max}")));
    }
    if s_count == 1 {
        return Ok(vec![r_max]);
    }
    let last = (s_count - 1) as f64;
    Ok((0..s_count)
        .map(|i| {
            let t = i as f64 / last;
            match rule {
                RingRule::Reciprocal => 1.0 / (1.0 / r_max + t * (1.0 / r_min - 1.0 / r_max)),
                RingRule::Linear => r_max - t * (r_max - r_min),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NearFieldCodebook {
    pub num_antennas: usize,
    pub angles: Vec<f64>,
    pub ring_distances: Vec<f64>,
    /// `N × (N S)`, column `flat - 1` holds codeword `(n, s)`.
    pub codewords: DMatrix<C64>,
}

impl NearFieldCodebook {
    pub fn new(geom: &ArrayGeometry, s_count: usize, r_min: f64, r_max: f64) -> Result<Self> {
        Self::with_rule(geom, s_count, r_min, r_max, RingRule::Reciprocal)
    }

    pub fn with_rule(geom: &ArrayGeometry, s_count: usize, r_min: f64, r_max: f64, rule: RingRule) -> Result<Self> {
        let n = geom.num_antennas;
        let rings = ring_distances(rule, s_count, r_min, r_max)?;
        let angles: Vec<f64> = (1..=n).map(|i| grid_angle(i, n)).collect();
        let mut data = Vec::with_capacity(n * n * s_count);
        for r in &rings {
            for phi in &angles {
                data.extend(steering_vector(geom, *r, *phi)?);
            }
        }
        Ok(Self {
            num_antennas: n,
            angles,
            ring_distances: rings,
            codewords: DMatrix::from_vec(n, n * s_count, data),
        })
    }

    pub fn num_rings(&self) -> usize {
        self.ring_distances.len()
    }

    pub fn len(&self) -> usize {
        self.codewords.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column at 0-based `position`.
    pub fn codeword(&self, position: usize) -> &[C64] {
        let n = self.num_antennas;
        &self.codewords.as_slice()[position * n..(position + 1) * n]
    }

    pub fn codeword_at(&self, idx: CodewordIndex) -> Result<&[C64]> {
        if idx.flat == 0 || idx.flat > self.len() {
            return Err(Error::Index(format!("flat index {} of {}", idx.flat, self.len())));
        }
        Ok(self.codeword(idx.position()))
    }

    pub fn index(&self, flat: usize) -> Result<CodewordIndex> {
        if flat == 0 || flat > self.len() {
            return Err(Error::Index(format!("flat index {flat} of {}", self.len())));
        }
        unflatten(flat, self.num_antennas)
    }

    /// `|h^dl · b|` for every codeword, in flat order.
    pub fn gains(&self, h_dl: &[C64]) -> Vec<f64> {
        (0..self.len()).map(|j| dot(h_dl, self.codeword(j)).norm()).collect()
    }

    /// Best codeword for a downlink channel; ties go to the smallest flat index.
    pub fn best_for(&self, h_dl: &[C64]) -> CodewordIndex {
        let mut best = 0;
        let mut best_gain = f64::NEG_INFINITY;
        for (j, g) in self.gains(h_dl).into_iter().enumerate() {
            if g > best_gain {
                best = j;
                best_gain = g;
            }
        }
        unflatten(best + 1, self.num_antennas).expect("codebook is non-empty")
    }

    /// `CDBK` payload: `N u32 | S u32 | N × φ f64 | S × r f64 | N S × N × (re, im) f64`
    /// (codewords column by column in flat order).
    pub fn to_section(&self) -> Section {
        let mut w = Writer::new();
        w.usize(self.num_antennas).usize(self.num_rings()).f64s(&self.angles).f64s(&self.ring_distances);
        w.c64s(self.codewords.as_slice());
        Section::new(SECTION_TAG, w.into_inner())
    }

    pub fn from_section(section: &Section) -> Result<Self> {
        if &section.tag != SECTION_TAG {
            return Err(Error::Format(format!("expected CDBK section, got {}", section.tag_str())));
        }
        let mut r = Reader::new(&section.payload);
        let n = r.usize()?;
        let s = r.usize()?;
        let angles = r.f64s(n)?;
        let ring_distances = r.f64s(s)?;
        let data = r.c64s(n * n * s)?;
        r.finish()?;
        Ok(Self { num_antennas: n, angles, ring_distances, codewords: DMatrix::from_vec(n, n * s, data) })
    }

    /// `n,s,r,phi` rows in flat order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,s,r,phi\n");
        for (si, r) in self.ring_distances.iter().enumerate() {
            for (ni, phi) in self.angles.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", ni + 1, si + 1, r, phi));
            }
        }
        out
    }
}

/// Optimal near-field codeword of every user (the training labels).
pub fn label_scenario(scenario: &Scenario, codebook: &NearFieldCodebook) -> Vec<CodewordIndex> {
    scenario.channels.iter().map(|ch| codebook.best_for(&ch.downlink())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PathComponent;
    use crate::scenario::synthesize_channel;
    use crate::seed;
    use rand::Rng;

    fn geom(n: usize) -> ArrayGeometry {
        ArrayGeometry::new(n, 30e9).unwrap()
    }

    #[test]
    fn wide_codewords_are_unit_norm() {
        let g = geom(256);
        let cb = WideBeamCodebook::new(&g, 4).unwrap();
        assert_eq!(cb.len(), 64);
        assert_eq!(cb.active_antennas(), 64);
        for n in 1..=64 {
            let e = wide_codeword(&g, 4, n).unwrap();
            assert_eq!(e.len(), 64);
            assert!((crate::norm(&e) - 1.0).abs() < 1e-12);
        }
        assert_eq!(cb.angles[0], -63.0 / 64.0);
        assert!(cb.angles.iter().all(|a| *a != 0.0));
    }

    #[test]
    fn wide_codeword_errors() {
        let g = geom(256);
        assert!(matches!(wide_codeword(&g, 4, 0), Err(Error::Index(_))));
        assert!(matches!(wide_codeword(&g, 4, 65), Err(Error::Index(_))));
        assert!(matches!(wide_codeword(&g, 3, 1), Err(Error::Config(_))));
    }

    #[test]
    fn wide_beams_cover_their_narrow_beams() {
        let g = geom(256);
        let (m, len) = (4, 64);
        let narrow: Vec<f64> = (1..=256).map(|i| grid_angle(i, 256)).collect();
        let far = |phi: f64| -> Vec<C64> {
            let amp = 1.0 / (len as f64).sqrt();
            (0..len).map(|i| C64::from_polar(amp, g.wavenumber() * g.spacing * phi * i as f64)).collect()
        };
        for n in 1..=len {
            let e = wide_codeword(&g, m, n).unwrap();
            let resp: Vec<f64> = narrow
                .iter()
                .map(|&phi| e.iter().zip(far(phi)).map(|(a, b)| a.conj() * b).sum::<C64>().norm())
                .collect();
            let covered = (n - 1) * m..n * m;
            let inside: f64 = resp[covered.clone()].iter().sum::<f64>() / m as f64;
            let outside: f64 = resp
                .iter()
                .enumerate()
                .filter(|(i, _)| !covered.contains(i))
                .map(|(_, v)| v)
                .sum::<f64>()
                / (256 - m) as f64;
            assert!(inside > outside, "wide beam {n}: {inside} vs {outside}");
        }
    }

    #[test]
    fn near_field_codebook_size_and_norms() {
        let g = geom(256);
        let cb = NearFieldCodebook::new(&g, 5, 3.0, 300.0).unwrap();
        assert_eq!(cb.len(), 1280);
        for j in 0..cb.len() {
            assert!((crate::norm(cb.codeword(j)) - 1.0).abs() < 1e-12);
        }
        let r = &cb.ring_distances;
        assert!(r.windows(2).all(|w| w[0] > w[1]));
        assert!((r[0] - 300.0).abs() < 1e-9 && (r[4] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn single_ring_far_limit_is_plane_wave() {
        let g = geom(64);
        let cb = NearFieldCodebook::new(&g, 1, 3.0, 1e6).unwrap();
        assert_eq!(cb.ring_distances, vec![1e6]);
        for (ni, phi) in cb.angles.iter().enumerate() {
            let b = cb.codeword(ni);
            for (i, bi) in b.iter().enumerate() {
                let plane = C64::from_polar(1.0 / 8.0, -g.wavenumber() * g.offset(i) * g.spacing * phi);
                assert!((bi / plane).arg().abs() < 1e-3);
            }
        }
    }

    #[test]
    fn ring_parameter_validation() {
        let g = geom(16);
        assert!(matches!(NearFieldCodebook::new(&g, 0, 3.0, 10.0), Err(Error::Config(_))));
        assert!(matches!(NearFieldCodebook::new(&g, 3, 10.0, 3.0), Err(Error::Config(_))));
        let lin = ring_distances(RingRule::Linear, 3, 2.0, 10.0).unwrap();
        assert_eq!(lin, vec![10.0, 6.0, 2.0]);
    }

    #[test]
    fn flat_index_examples() {
        assert_eq!(flat_index(1, 1, 256).unwrap(), 1);
        assert_eq!(flat_index(256, 5, 256).unwrap(), 1280);
        assert_eq!(flat_index(2, 3, 256).unwrap(), 514);
        assert!(flat_index(0, 1, 256).is_err());
        assert!(flat_index(257, 1, 256).is_err());
        assert!(unflatten(0, 256).is_err());
    }

    #[test]
    fn flat_index_round_trip_full_set() {
        let (n_bs, s_count) = (256, 5);
        for flat in 1..=n_bs * s_count {
            let idx = unflatten(flat, n_bs).unwrap();
            assert!(idx.n >= 1 && idx.n <= n_bs && idx.s >= 1 && idx.s <= s_count);
            assert_eq!(flat_index(idx.n, idx.s, n_bs).unwrap(), flat);
        }
    }

    #[test]
    fn grid_point_los_channel_labels_itself() {
        let g = geom(64);
        let cb = NearFieldCodebook::new(&g, 3, 3.0, 20.0).unwrap();
        for (n, s) in [(1, 1), (17, 2), (40, 3), (64, 3)] {
            let los = PathComponent {
                gain: C64::from_polar(1e-3, 0.4),
                distance: cb.ring_distances[s - 1],
                direction: cb.angles[n - 1],
            };
            let ch = synthesize_channel(&g, los, &[]).unwrap();
            assert_eq!(cb.best_for(&ch.downlink()), CodewordIndex::new(n, s, 64).unwrap());
        }
    }

    #[test]
    fn label_invariant_to_positive_scaling() {
        let g = geom(64);
        let cb = NearFieldCodebook::new(&g, 3, 3.0, 20.0).unwrap();
        let mut rng = seed::rng(1, 0);
        for _ in 0..20 {
            let h: Vec<C64> = (0..64).map(|_| crate::scenario::cn(&mut rng, 1.0)).collect();
            let scale = 0.01 + 100.0 * rng.random::<f64>();
            let scaled: Vec<C64> = h.iter().map(|c| c * scale).collect();
            assert_eq!(cb.best_for(&h), cb.best_for(&scaled));
        }
    }

    #[test]
    fn section_and_csv() {
        let g = geom(16);
        let cb = NearFieldCodebook::new(&g, 2, 3.0, 10.0).unwrap();
        assert_eq!(NearFieldCodebook::from_section(&cb.to_section()).unwrap(), cb);
        let csv = cb.to_csv();
        assert_eq!(csv.lines().count(), 33);
        assert!(csv.lines().nth(17).unwrap().starts_with("1,2,3,"));
    }
}
