//! Hybrid analog/digital precoding and the rate and accuracy metrics.
//!
//! Digital precoders are computed from the estimated effective channel only;
//! rates are evaluated against the true channels.

use nalgebra::DMatrix;

use crate::alloc::AllocationResult;
use crate::codebook::NearFieldCodebook;
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::{dot, C64};

/// Largest admissible condition number of `Ĥ Ĥᴴ` for zero-forcing.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    /// `N × K` analog beams.
    pub f_rf: DMatrix<C64>,
    /// `K × K` digital precoder, columns normalised so `‖F_RF f_k‖ = 1`.
    pub f_bb: DMatrix<C64>,
    /// False when the analog columns are not phase-shifter realisable
    /// (the MRC beams of the OMP baseline).
    pub analog_constrained: bool,
}

impl HybridPrecoder {
    /// Overall precoder `F_RF F_BB`.
    pub fn combined(&self) -> DMatrix<C64> {
        &self.f_rf * &self.f_bb
    }
}

/// Column `k` is the codeword at flat index `u_k`.
pub fn assemble_analog(u: &AllocationResult, codebook: &NearFieldCodebook) -> Result<DMatrix<C64>> {
    let n = codebook.num_antennas;
    let mut data = Vec::with_capacity(n * u.u.len());
    for &flat in &u.u {
        data.extend_from_slice(codebook.codeword_at(codebook.index(flat)?)?);
    }
    Ok(DMatrix::from_vec(n, u.u.len(), data))
}

/// Rounds every entry's phase to the nearest of `2^bits` levels, keeping its
/// modulus. `bits = 0` leaves the matrix unchanged.
pub fn quantize_phases(f_rf: &DMatrix<C64>, bits: u32) -> DMatrix<C64> {
    if bits == 0 {
        return f_rf.clone();
    }
    let step = 2.0 * std::f64::consts::PI / (1u64 << bits) as f64;
    f_rf.map(|v| C64::from_polar(v.norm(), (v.arg() / step).round() * step))
}

fn check_square(h: &DMatrix<C64>) -> Result<()> {
    if !h.is_square() || h.nrows() == 0 {
        return Err(Error::Shape(format!("effective channel is {} x {}", h.nrows(), h.ncols())));
    }
    Ok(())
}

/// Scales each column of `f_bb` so that `‖F_RF f_k‖ = 1`.
pub fn normalize_columns(f_rf: &DMatrix<C64>, f_bb: &mut DMatrix<C64>) -> Result<()> {
    let full = f_rf * &*f_bb;
    for k in 0..f_bb.ncols() {
        let norm = full.column(k).norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Singular(format!("precoder column {k} has norm {norm}")));
        }
        f_bb.column_mut(k).unscale_mut(norm);
    }
    Ok(())
}

fn gram_inverse(gram: DMatrix<C64>) -> Result<DMatrix<C64>> {
    let sv = gram.clone().singular_values();
    let (max, min) = (sv.max(), sv.min());
    if !(min > 0.0) || max / min >= MAX_CONDITION {
        return Err(Error::Singular(format!("condition number {:.3e} exceeds {MAX_CONDITION:e}", max / min)));
    }
    gram.try_inverse().ok_or_else(|| Error::Singular("matrix inversion failed".into()))
}

/// `Ĥᴴ (Ĥ Ĥᴴ)⁻¹`, normalised against `f_rf`.
pub fn zf_digital(h_ef: &DMatrix<C64>, f_rf: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    check_square(h_ef)?;
    let hh = h_ef.adjoint();
    let mut f_bb = &hh * gram_inverse(h_ef * &hh)?;
    normalize_columns(f_rf, &mut f_bb)?;
    Ok(f_bb)
}

/// `Ĥᴴ ((P/K) Ĥ Ĥᴴ + σ² I)⁻¹`, normalised against `f_rf`.
pub fn mmse_digital(h_ef: &DMatrix<C64>, f_rf: &DMatrix<C64>, p_dl: f64, noise_dl: f64) -> Result<DMatrix<C64>> {
    check_square(h_ef)?;
    let k = h_ef.nrows();
    let hh = h_ef.adjoint();
    let mut reg = (h_ef * &hh) * C64::from(p_dl / k as f64);
    for i in 0..k {
        reg[(i, i)] += noise_dl;
    }
    let inv = reg.try_inverse().ok_or_else(|| Error::Singular("regularised inversion failed".into()))?;
    let mut f_bb = &hh * inv;
    normalize_columns(f_rf, &mut f_bb)?;
    Ok(f_bb)
}

/// Per-user achievable rates (bits/s/Hz) with equal power `P/K` per stream.
pub fn user_rates(scenario: &Scenario, precoder: &HybridPrecoder, p_dl: f64, noise_dl: f64) -> Result<Vec<f64>> {
    let f = precoder.combined();
    let k = scenario.num_users();
    if f.ncols() != k || f.nrows() != scenario.geometry.num_antennas {
        return Err(Error::Shape(format!("precoder is {} x {} for {k} users", f.nrows(), f.ncols())));
    }
    let p = p_dl / k as f64;
    let n = f.nrows();
    Ok(scenario
        .channels
        .iter()
        .enumerate()
        .map(|(user, ch)| {
            let h = ch.downlink();
            let gains: Vec<f64> = (0..k).map(|j| dot(&h, &f.as_slice()[j * n..(j + 1) * n]).norm_sqr()).collect();
            let interference: f64 = gains.iter().enumerate().filter(|(j, _)| *j != user).map(|(_, g)| g).sum();
            (1.0 + p * gains[user] / (p * interference + noise_dl)).log2()
        })
        .collect())
}

pub fn sum_rate(scenario: &Scenario, precoder: &HybridPrecoder, p_dl: f64, noise_dl: f64) -> Result<f64> {
    Ok(user_rates(scenario, precoder, p_dl, noise_dl)?.iter().sum())
}

/// `(1 - T_p / T_t) R` with `T_p = pilot_symbols · symbol_time`.
pub fn effective_sum_rate(sum_rate: f64, pilot_symbols: usize, symbol_time: f64, frame_time: f64) -> Result<f64> {
    let tp = pilot_symbols as f64 * symbol_time;
    if !(frame_time > 0.0) || tp > frame_time {
        return Err(Error::Config(format!("pilot time {tp} s exceeds the frame of {frame_time} s")));
    }
    Ok((1.0 - tp / frame_time) * sum_rate)
}

/// Fraction of users whose predicted codeword equals the label.
pub fn estimation_accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.len() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} labels", predicted.len(), labels.len())));
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ArrayGeometry;
    use crate::scenario::{cn, generate_scenario, ScenarioConfig};
    use crate::seed;

    fn identity(n: usize) -> DMatrix<C64> {
        DMatrix::identity(n, n)
    }

    fn random(r: usize, c: usize, s: u64) -> DMatrix<C64> {
        let mut rng = seed::rng(s, 0);
        DMatrix::from_fn(r, c, |_, _| cn(&mut rng, 1.0))
    }

    #[test]
    fn zf_on_identity_is_identity() {
        let f = zf_digital(&identity(3), &identity(3)).unwrap();
        assert!((f - identity(3)).norm() < 1e-15);
    }

    #[test]
    fn zf_removes_leakage_and_respects_power() {
        let f_rf = random(16, 4, 2);
        let h_ef = random(4, 4, 3);
        let f_bb = zf_digital(&h_ef, &f_rf).unwrap();
        let prod = &h_ef * &f_bb;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(prod[(i, j)].norm() < 1e-9);
                }
            }
            assert!(((&f_rf * &f_bb).column(i).norm_squared() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zf_flags_singular_channels() {
        let mut h = random(3, 3, 4);
        let row = h.row(0).into_owned();
        h.row_mut(1).copy_from(&row);
        assert!(matches!(zf_digital(&h, &identity(3)), Err(Error::Singular(_))));
    }

    #[test]
    fn mmse_tends_to_zf() {
        let h = random(4, 4, 5);
        let f_rf = random(8, 4, 6);
        let zf = zf_digital(&h, &f_rf).unwrap();
        let mmse = mmse_digital(&h, &f_rf, 1.0, 1e-12).unwrap();
        for k in 0..4 {
            let (a, b) = (zf.column(k), mmse.column(k));
            let cos = (a.dotc(&b)).norm() / (a.norm() * b.norm());
            assert!(cos.min(1.0).acos() < 1e-6);
            assert!(((&f_rf * &mmse).column(k).norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rate_formula_cases() {
        let g = ArrayGeometry::new(16, 30e9).unwrap();
        let cfg = ScenarioConfig { num_users: 2, r_max: 20.0, ..Default::default() };
        let sc = generate_scenario(&g, &cfg, 3).unwrap();
        let f_rf = random(16, 2, 7);
        let f_bb = random(2, 2, 8);
        let pre = HybridPrecoder { f_rf: f_rf.clone(), f_bb: f_bb.clone(), analog_constrained: false };
        let (p, s2) = (0.5, 1e-10);
        let f = &f_rf * &f_bb;
        let mut expect = 0.0;
        for k in 0..2 {
            let h = sc.channels[k].downlink();
            let g: Vec<f64> = (0..2).map(|j| (0..16).map(|i| h[i] * f[(i, j)]).sum::<C64>().norm_sqr()).collect();
            expect += (1.0 + (p / 2.0) * g[k] / ((p / 2.0) * g[1 - k] + s2)).log2();
        }
        assert!((sum_rate(&sc, &pre, p, s2).unwrap() - expect).abs() < 1e-12);

        let mut zero = sc.clone();
        zero.channels.iter_mut().for_each(|c| c.h.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0)));
        assert_eq!(sum_rate(&zero, &pre, p, s2).unwrap(), 0.0);
    }

    #[test]
    fn effective_rate_factors() {
        assert!((effective_sum_rate(1.0, 80, 1e-7, 2e-4).unwrap() - 0.96).abs() < 1e-12);
        assert!((effective_sum_rate(1.0, 1280, 1e-7, 2e-4).unwrap() - 0.36).abs() < 1e-12);
        assert_eq!(effective_sum_rate(7.5, 0, 1e-7, 2e-4).unwrap(), 7.5);
        assert!(effective_sum_rate(1.0, 3000, 1e-7, 2e-4).is_err());
    }

    #[test]
    fn phase_quantization() {
        let f = DMatrix::from_vec(2, 1, vec![C64::from_polar(0.5, 0.1), C64::from_polar(0.5, 1.7)]);
        assert_eq!(quantize_phases(&f, 0), f);
        let q = quantize_phases(&f, 2);
        assert!((q[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((q[(1, 0)] - C64::new(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn accuracy_ratio() {
        assert_eq!(estimation_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(estimation_accuracy(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert_eq!(estimation_accuracy(&[1, 2, 3, 4, 5, 6, 7, 8], &[1, 2, 3, 4, 5, 6, 0, 0]).unwrap(), 0.75);
    }
}
