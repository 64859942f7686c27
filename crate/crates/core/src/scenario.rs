//! Near-field multipath channels and synthetic clustered multiuser scenarios.
//!
//! Users are dropped inside a disc of `cluster_diameter` at a fixed height in a
//! box-shaped hall; a single scatterer pool is drawn per scenario and every user
//! takes its NLoS paths from the scatterers nearest to it. Users in a cluster
//! therefore share NLoS directions and ranges, which is the inter-user
//! correlation the graph network exploits.
//!
//! The array lies along the x axis through `bs_position`; a point at offset
//! `v` from the array centre has range `|v|` and direction sine `v.x / |v|`,
//! which makes the element-distance formula exact in 3D.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::container::{Reader, Section, Writer};
use crate::error::{Error, Result};
use crate::geometry::{steering_vector, ArrayGeometry, PathComponent};
use crate::seed;
use crate::C64;

pub const SECTION_TAG: &[u8; 4] = b"SCEN";

/// Per-user channel and the paths that generate it.
///
/// `h` is the column channel of the spherical-wavefront model,
/// `√N α₀ b(r₀, φ₀) + √(N/(L-1)) Σ α_l b(r_l, φ_l)`. The downlink row channel
/// used for beamforming gains is its conjugate transpose, see [`Self::downlink`].
#[derive(Debug, Clone, PartialEq)]
pub struct NearFieldChannel {
    pub h: Vec<C64>,
    pub los: PathComponent,
    pub nlos: Vec<PathComponent>,
}

impl NearFieldChannel {
    /// Downlink row channel `h^dl = hᴴ`; gains are `h^dl · f`.
    pub fn downlink(&self) -> Vec<C64> {
        self.h.iter().map(|c| c.conj()).collect()
    }

    pub fn num_paths(&self) -> usize {
        1 + self.nlos.len()
    }
}

pub fn synthesize_channel(
    geom: &ArrayGeometry,
    los: PathComponent,
    nlos: &[PathComponent],
) -> Result<NearFieldChannel> {
    los.validate()?;
    for p in nlos {
        p.validate()?;
    }
    let n = geom.num_antennas as f64;
    let los_scale = los.gain * n.sqrt();
    let mut h: Vec<C64> = steering_vector(geom, los.distance, los.direction)?
        .into_iter()
        .map(|b| b * los_scale)
        .collect();
    if !nlos.is_empty() {
        let nlos_amp = (n / nlos.len() as f64).sqrt();
        for p in nlos {
            let b = steering_vector(geom, p.distance, p.direction)?;
            let scale = p.gain * nlos_amp;
            for (hn, bn) in h.iter_mut().zip(b) {
                *hn += bn * scale;
            }
        }
    }
    Ok(NearFieldChannel { h, los, nlos: nlos.to_vec() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub cluster_diameter: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Total paths per user, `L` (one LoS plus `L - 1` NLoS).
    pub num_paths: usize,
    /// NLoS path power below the LoS power, dB.
    pub nlos_deficit_db: f64,
    /// Hall extent along x, y, z (metres), with the origin at one corner.
    pub bounds: [f64; 3],
    pub bs_position: [f64; 3],
    pub user_height: f64,
    pub num_scatterers: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_users: 8,
            cluster_diameter: 6.0,
            r_min: 3.0,
            r_max: 400.0,
            num_paths: 3,
            nlos_deficit_db: 10.0,
            bounds: [40.0, 30.0, 5.0],
            bs_position: [15.0, 0.0, 2.0],
            user_height: 1.0,
            num_scatterers: 4,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_users == 0 {
            return fail("scenario needs at least one user".into());
        }
        if !(self.r_min > 0.0) || !(self.r_min < self.r_max) {
            return fail(format!("need 0 < r_min < r_max, got {} and {}", self.r_min, self.r_max));
        }
        if self.num_paths == 0 {
            return fail("at least the LoS path is required".into());
        }
        if self.num_scatterers + 1 < self.num_paths {
            return fail(format!(
                "{} NLoS paths per user need at least as many scatterers, pool has {}",
                self.num_paths - 1,
                self.num_scatterers
            ));
        }
        if !(self.cluster_diameter >= 0.0) {
            return fail("cluster diameter must be non-negative".into());
        }
        if self.bounds.iter().any(|b| !(*b > 0.0)) {
            return fail("hall bounds must be positive".into());
        }
        if self.cluster_diameter > self.bounds[0] || self.cluster_diameter > self.bounds[1] {
            return fail(format!(
                "cluster of diameter {} does not fit in a {} x {} hall",
                self.cluster_diameter, self.bounds[0], self.bounds[1]
            ));
        }
        if !(0.0..=self.bounds[2]).contains(&self.user_height) {
            return fail("user height outside the hall".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub user_positions: Vec<[f64; 3]>,
    pub scatterer_positions: Vec<[f64; 3]>,
    pub channels: Vec<NearFieldChannel>,
    pub seed: u64,
}

/// Range and direction sine of `p` as seen from the array centre `bs`.
pub fn polar(bs: [f64; 3], p: [f64; 3]) -> (f64, f64) {
    let v = [p[0] - bs[0], p[1] - bs[1], p[2] - bs[2]];
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (r, (v[0] / r).clamp(-1.0, 1.0))
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

pub(crate) fn cn<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    complex_normal(rng, variance)
}

const MAX_CLUSTER_DRAWS: usize = 2000;
const MAX_USER_DRAWS: usize = 200;

pub fn generate_scenario(geom: &ArrayGeometry, cfg: &ScenarioConfig, seed_value: u64) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = seed::rng(seed_value, seed::stream::SCENARIO);
    let in_window = |p: [f64; 3]| {
        let (r, _) = polar(cfg.bs_position, p);
        r >= cfg.r_min && r <= cfg.r_max
    };

    let mut scatterers = Vec::with_capacity(cfg.num_scatterers);
    while scatterers.len() < cfg.num_scatterers {
        let mut placed = false;
        for _ in 0..MAX_CLUSTER_DRAWS {
            let p = [
                rng.random::<f64>() * cfg.bounds[0],
                rng.random::<f64>() * cfg.bounds[1],
                rng.random::<f64>() * cfg.bounds[2],
            ];
            if in_window(p) {
                scatterers.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config("no scatterer position inside the range window".into()));
        }
    }

    let radius = cfg.cluster_diameter / 2.0;
    let mut users = None;
    'cluster: for _ in 0..MAX_CLUSTER_DRAWS {
        let cx = radius + rng.random::<f64>() * (cfg.bounds[0] - 2.0 * radius);
        let cy = radius + rng.random::<f64>() * (cfg.bounds[1] - 2.0 * radius);
        let mut pts = Vec::with_capacity(cfg.num_users);
        for _ in 0..cfg.num_users {
            let mut ok = false;
            for _ in 0..MAX_USER_DRAWS {
                let rho = radius * rng.random::<f64>().sqrt();
                let theta = 2.0 * PI * rng.random::<f64>();
                let p = [cx + rho * theta.cos(), cy + rho * theta.sin(), cfg.user_height];
                if in_window(p) {
                    pts.push(p);
                    ok = true;
                    break;
                }
            }
            if !ok {
                continue 'cluster;
            }
        }
        users = Some(pts);
        break;
    }
    let users = users.ok_or_else(|| {
        Error::Config(format!(
            "could not place a {} m cluster with ranges in [{}, {}] m",
            cfg.cluster_diameter, cfg.r_min, cfg.r_max
        ))
    })?;

    let deficit = 10f64.powf(-cfg.nlos_deficit_db / 10.0);
    let mut channels = Vec::with_capacity(users.len());
    for &u in &users {
        let (r0, phi0) = polar(cfg.bs_position, u);
        let amp0 = geom.wavelength / (4.0 * PI * r0);
        let los = PathComponent {
            gain: C64::from_polar(amp0, 2.0 * PI * rng.random::<f64>()),
            distance: r0,
            direction: phi0,
        };
        let mut order: Vec<usize> = (0..scatterers.len()).collect();
        order.sort_by(|&a, &b| dist(u, scatterers[a]).total_cmp(&dist(u, scatterers[b])).then(a.cmp(&b)));
        let nlos: Vec<PathComponent> = order[..cfg.num_paths - 1]
            .iter()
            .map(|&i| {
                let (r, phi) = polar(cfg.bs_position, scatterers[i]);
                PathComponent { gain: complex_normal(&mut rng, amp0 * amp0 * deficit), distance: r, direction: phi }
            })
            .collect();
        channels.push(synthesize_channel(geom, los, &nlos)?);
    }

    Ok(Scenario {
        geometry: *geom,
        user_positions: users,
        scatterer_positions: scatterers,
        channels,
        seed: seed_value,
    })
}

#[derive(Serialize)]
struct PathRecord {
    gain_re: f64,
    gain_im: f64,
    distance: f64,
    direction: f64,
}

impl From<&PathComponent> for PathRecord {
    fn from(p: &PathComponent) -> Self {
        Self { gain_re: p.gain.re, gain_im: p.gain.im, distance: p.distance, direction: p.direction }
    }
}

#[derive(Serialize)]
struct UserRecord<'a> {
    seed: u64,
    user: usize,
    position: [f64; 3],
    los: PathRecord,
    nlos: Vec<PathRecord>,
    h_re: Vec<f64>,
    h_im: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    geometry: Option<&'a ArrayGeometry>,
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.channels.len()
    }

    pub fn max_pairwise_distance(&self) -> f64 {
        let u = &self.user_positions;
        let mut m = 0.0f64;
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                m = m.max(dist(u[i], u[j]));
            }
        }
        m
    }

    /// JSON-lines debug export, one line per user.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (k, ch) in self.channels.iter().enumerate() {
            let rec = UserRecord {
                seed: self.seed,
                user: k,
                position: self.user_positions[k],
                los: (&ch.los).into(),
                nlos: ch.nlos.iter().map(Into::into).collect(),
                h_re: ch.h.iter().map(|c| c.re).collect(),
                h_im: ch.h.iter().map(|c| c.im).collect(),
                geometry: (k == 0).then_some(&self.geometry),
            };
            out.push_str(&serde_json::to_string(&rec).expect("scenario records serialize"));
            out.push('\n');
        }
        out
    }

    /// `SCEN` section payload:
    ///
    /// ```text
    /// N_BS u32 | K u32 | L u32 | S u32 (scatterers)
    /// carrier f64 | wavelength f64 | spacing f64 | seed u64
    /// K × (x, y, z) f64          user positions
    /// S × (x, y, z) f64          scatterer positions
    /// K × L × (α re, α im, r, φ) f64, LoS first
    /// K × N_BS × (re, im) f64    channel vectors
    /// ```
    pub fn to_section(&self) -> Section {
        let l = self.channels.first().map_or(1, |c| c.num_paths());
        let mut w = Writer::new();
        w.usize(self.geometry.num_antennas)
            .usize(self.num_users())
            .usize(l)
            .usize(self.scatterer_positions.len())
            .f64(self.geometry.carrier_freq)
            .f64(self.geometry.wavelength)
            .f64(self.geometry.spacing)
            .u64(self.seed);
        for p in self.user_positions.iter().chain(&self.scatterer_positions) {
            w.f64s(p);
        }
        for ch in &self.channels {
            for p in std::iter::once(&ch.los).chain(&ch.nlos) {
                w.c64(p.gain).f64(p.distance).f64(p.direction);
            }
        }
        for ch in &self.channels {
            w.c64s(&ch.h);
        }
        Section::new(SECTION_TAG, w.into_inner())
    }

    pub fn from_section(section: &Section) -> Result<Self> {
        if &section.tag != SECTION_TAG {
            return Err(Error::Format(format!("expected SCEN section, got {}", section.tag_str())));
        }
        let mut r = Reader::new(&section.payload);
        let (n, k, l, s) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
        let carrier_freq = r.f64()?;
        let wavelength = r.f64()?;
        let spacing = r.f64()?;
        let seed = r.u64()?;
        let geometry = ArrayGeometry { num_antennas: n, carrier_freq, wavelength, spacing };
        let point = |r: &mut Reader| -> Result<[f64; 3]> { Ok([r.f64()?, r.f64()?, r.f64()?]) };
        let user_positions = (0..k).map(|_| point(&mut r)).collect::<Result<Vec<_>>>()?;
        let scatterer_positions = (0..s).map(|_| point(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut paths = Vec::with_capacity(k);
        for _ in 0..k {
            let p = (0..l)
                .map(|_| Ok(PathComponent { gain: r.c64()?, distance: r.f64()?, direction: r.f64()? }))
                .collect::<Result<Vec<_>>>()?;
            paths.push(p);
        }
        let mut channels = Vec::with_capacity(k);
        for mut p in paths {
            let h = r.c64s(n)?;
            let los = p.remove(0);
            channels.push(NearFieldChannel { h, los, nlos: p });
        }
        r.finish()?;
        Ok(Scenario { geometry, user_positions, scatterer_positions, channels, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rayleigh_distance;

    fn geom() -> ArrayGeometry {
        ArrayGeometry::new(64, 30e9).unwrap()
    }

    fn desk_cfg(k: usize) -> ScenarioConfig {
        let g = geom();
        ScenarioConfig { num_users: k, num_paths: 2, r_max: rayleigh_distance(&g).min(400.0), ..Default::default() }
    }

    #[test]
    fn pure_los_channel_has_norm_sqrt_n() {
        let g = geom();
        let los = PathComponent { gain: C64::new(1.0, 0.0), distance: 5.0, direction: 0.2 };
        let ch = synthesize_channel(&g, los, &[]).unwrap();
        assert!((crate::norm(&ch.h) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gains_give_zero_channel() {
        let g = geom();
        let z = C64::new(0.0, 0.0);
        let los = PathComponent { gain: z, distance: 5.0, direction: 0.2 };
        let nlos = [PathComponent { gain: z, distance: 9.0, direction: -0.4 }];
        let ch = synthesize_channel(&g, los, &nlos).unwrap();
        assert!(ch.h.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn synthesis_matches_term_by_term_loop() {
        let g = geom();
        let mut rng = seed::rng(3, 0);
        let mut path = || PathComponent {
            gain: cn(&mut rng, 1.0),
            distance: 3.0 + 20.0 * rng.random::<f64>(),
            direction: 2.0 * rng.random::<f64>() - 1.0,
        };
        let los = path();
        let nlos = [path(), path()];
        let ch = synthesize_channel(&g, los, &nlos).unwrap();
        // Independent oracle: element-wise sum using the element-distance formula directly.
        let n = g.num_antennas;
        for i in 0..n {
            let term = |p: &PathComponent, scale: f64| {
                let rn = crate::geometry::element_distance(&g, p.distance, p.direction, i).unwrap();
                p.gain * scale * C64::from_polar(1.0 / (n as f64).sqrt(), g.wavenumber() * (rn - p.distance))
            };
            let expect = term(&los, (n as f64).sqrt())
                + nlos.iter().map(|p| term(p, (n as f64 / 2.0).sqrt())).sum::<C64>();
            assert!((ch.h[i] - expect).norm() < 1e-9 * expect.norm().max(1.0), "i={i}");
        }
    }

    #[test]
    fn synthesis_is_linear_in_each_gain() {
        let g = geom();
        let los = PathComponent { gain: C64::new(0.3, -0.1), distance: 7.0, direction: 0.1 };
        let nlos = [
            PathComponent { gain: C64::new(0.05, 0.02), distance: 11.0, direction: -0.5 },
            PathComponent { gain: C64::new(-0.02, 0.04), distance: 4.0, direction: 0.7 },
        ];
        let base = synthesize_channel(&g, los, &nlos).unwrap();
        let mut doubled = nlos;
        doubled[1].gain *= 2.0;
        let scaled = synthesize_channel(&g, los, &doubled).unwrap();
        let term = synthesize_channel(
            &g,
            PathComponent { gain: C64::new(0.0, 0.0), ..los },
            &[PathComponent { gain: C64::new(0.0, 0.0), ..nlos[0] }, nlos[1]],
        )
        .unwrap();
        for i in 0..g.num_antennas {
            assert!((scaled.h[i] - base.h[i] - term.h[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn single_user_scenario() {
        let s = generate_scenario(&geom(), &desk_cfg(1), 11).unwrap();
        assert_eq!(s.channels.len(), 1);
        assert_eq!(s.max_pairwise_distance(), 0.0);
    }

    #[test]
    fn cluster_respects_diameter_and_range_window() {
        let g = geom();
        let cfg = ScenarioConfig { num_users: 8, ..desk_cfg(8) };
        for seed in 0..50 {
            let s = generate_scenario(&g, &cfg, seed).unwrap();
            assert!(s.max_pairwise_distance() <= 6.0 + 1e-12);
            for ch in &s.channels {
                assert!(ch.los.distance >= cfg.r_min && ch.los.distance <= cfg.r_max);
                assert!(ch.los.distance < rayleigh_distance(&g));
                assert_eq!(ch.nlos.len(), 1);
            }
        }
    }

    #[test]
    fn paper_geometry_users_are_in_near_field() {
        let g = ArrayGeometry::new(256, 30e9).unwrap();
        let cfg = ScenarioConfig { r_max: rayleigh_distance(&g).min(400.0), ..Default::default() };
        let s = generate_scenario(&g, &cfg, 5).unwrap();
        assert_eq!(s.num_users(), 8);
        assert!(s.channels.iter().all(|c| c.los.distance < rayleigh_distance(&g)));
    }

    #[test]
    fn same_seed_same_bytes() {
        let g = geom();
        let a = generate_scenario(&g, &desk_cfg(4), 42).unwrap();
        let b = generate_scenario(&g, &desk_cfg(4), 42).unwrap();
        assert_eq!(a.to_section(), b.to_section());
        let c = generate_scenario(&g, &desk_cfg(4), 43).unwrap();
        assert_ne!(a.to_section(), c.to_section());
    }

    #[test]
    fn section_round_trip_and_regeneration() {
        let g = geom();
        let s = generate_scenario(&g, &desk_cfg(4), 7).unwrap();
        let back = Scenario::from_section(&s.to_section()).unwrap();
        assert_eq!(back, s);
        for ch in &back.channels {
            let again = synthesize_channel(&g, ch.los, &ch.nlos).unwrap();
            assert_eq!(again.h, ch.h);
        }
        assert_eq!(s.to_jsonl().lines().count(), 4);
    }

    #[test]
    fn nlos_paths_are_shared_scatterers() {
        let s = generate_scenario(&geom(), &ScenarioConfig { num_scatterers: 1, ..desk_cfg(4) }, 9).unwrap();
        let d0 = s.channels[0].nlos[0].distance;
        assert!(s.channels.iter().all(|c| c.nlos[0].distance == d0));
    }

    #[test]
    fn config_errors() {
        let g = geom();
        let bad = ScenarioConfig { r_min: 10.0, r_max: 5.0, ..desk_cfg(2) };
        assert!(matches!(generate_scenario(&g, &bad, 0), Err(Error::Config(_))));
        let bad = ScenarioConfig { cluster_diameter: 50.0, ..desk_cfg(2) };
        assert!(matches!(generate_scenario(&g, &bad, 0), Err(Error::Config(_))));
        let bad = ScenarioConfig { num_scatterers: 0, num_paths: 3, ..desk_cfg(2) };
        assert!(matches!(generate_scenario(&g, &bad, 0), Err(Error::Config(_))));
    }
}
