//! Uniform linear array geometry and spherical-wavefront steering vectors.
//!
//! Directions are carried as the sine of the angle from broadside (`φ ∈ [-1, 1]`),
//! which is the quantity both the near-field distance formula and the wide-beam
//! phase progression consume.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::C64;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A ULA centred at the origin of its own axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArrayGeometry {
    pub num_antennas: usize,
    pub carrier_freq: f64,
    pub wavelength: f64,
    pub spacing: f64,
}

impl ArrayGeometry {
    /// Half-wavelength array at `carrier_freq` Hz.
    pub fn new(num_antennas: usize, carrier_freq: f64) -> Result<Self> {
        if !(carrier_freq > 0.0) || !carrier_freq.is_finite() {
            return Err(Error::Config(format!("carrier frequency must be positive, got {carrier_freq}")));
        }
        let wavelength = SPEED_OF_LIGHT / carrier_freq;
        Self::with_wavelength(num_antennas, wavelength, wavelength / 2.0)
    }

    pub fn with_wavelength(num_antennas: usize, wavelength: f64, spacing: f64) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::Config("array needs at least one antenna".into()));
        }
        if !(wavelength > 0.0) || !(spacing > 0.0) {
            return Err(Error::Config(format!(
                "wavelength and spacing must be positive (λ={wavelength}, d={spacing})"
            )));
        }
        Ok(Self {
            num_antennas,
            carrier_freq: SPEED_OF_LIGHT / wavelength,
            wavelength,
            spacing,
        })
    }

    /// Signed element offset `δ_n = (2n - N + 1) / 2`, in units of the spacing.
    #[inline]
    pub fn offset(&self, n: usize) -> f64 {
        (2.0 * n as f64 - self.num_antennas as f64 + 1.0) / 2.0
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn aperture(&self) -> f64 {
        self.num_antennas as f64 * self.spacing
    }
}

/// One propagation path: complex gain, range from the array centre, and the
/// sine of its direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: C64,
    pub distance: f64,
    pub direction: f64,
}

impl PathComponent {
    pub fn validate(&self) -> Result<()> {
        check_point(self.distance, self.direction)?;
        if !self.gain.re.is_finite() || !self.gain.im.is_finite() {
            return Err(Error::Domain("non-finite path gain".into()));
        }
        Ok(())
    }
}

fn check_point(r: f64, phi: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("range must be positive and finite, got {r}")));
    }
    if !(phi.abs() <= 1.0) {
        return Err(Error::Domain(format!("direction sine must lie in [-1, 1], got {phi}")));
    }
    Ok(())
}

/// Distance from antenna `n` to a point at range `r` and direction sine `phi`.
pub fn element_distance(geom: &ArrayGeometry, r: f64, phi: f64, n: usize) -> Result<f64> {
    check_point(r, phi)?;
    if n >= geom.num_antennas {
        return Err(Error::Index(format!("antenna {n} of {}", geom.num_antennas)));
    }
    let x = geom.offset(n) * geom.spacing;
    let radicand = r * r + x * x - 2.0 * r * phi * x;
    if radicand < 0.0 {
        return Err(Error::Domain(format!("negative radicand {radicand} for antenna {n}")));
    }
    Ok(radicand.sqrt())
}

/// Near-field steering vector `b(r, φ)`; unit norm.
///
/// The excess path `r⁽ⁿ⁾ - r` is evaluated as `(x² - 2rφx) / (r⁽ⁿ⁾ + r)` so
/// the phase stays accurate at very large ranges.
pub fn steering_vector(geom: &ArrayGeometry, r: f64, phi: f64) -> Result<Vec<C64>> {
    check_point(r, phi)?;
    let amp = 1.0 / (geom.num_antennas as f64).sqrt();
    let k = geom.wavenumber();
    (0..geom.num_antennas)
        .map(|n| {
            let rn = element_distance(geom, r, phi, n)?;
            let x = geom.offset(n) * geom.spacing;
            let excess = (x * x - 2.0 * r * phi * x) / (rn + r);
            Ok(C64::from_polar(amp, k * excess))
        })
        .collect()
}

/// Classical near-field boundary `2 D² / λ` with aperture `D = N d`.
pub fn rayleigh_distance(geom: &ArrayGeometry) -> f64 {
    2.0 * geom.aperture().powi(2) / geom.wavelength
}
