//! Values computed with an independent numpy implementation of the same
//! formulas and frozen here.

use nalgebra::DMatrix;
use nfbt_core::baselines::omp_estimate;
use nfbt_core::codebook::{ring_distances, wide_codeword, RingRule};
use nfbt_core::geometry::steering_vector;
use nfbt_core::gnn::{forward_batch, Aggregation, Architecture, Dense, NetworkParams};
use nfbt_core::gnn::{AdamState, TrainSchedule};
use nfbt_core::pilot::wide_beam_sweep;
use nfbt_core::precoder::{mmse_digital, sum_rate, zf_digital, HybridPrecoder};
use nfbt_core::scenario::synthesize_channel;
use nfbt_core::{ArrayGeometry, NearFieldCodebook, PathComponent, PilotConfig, Scenario, WideBeamCodebook, C64};

fn c(pairs: &[(f64, f64)]) -> Vec<C64> {
    pairs.iter().map(|&(re, im)| C64::new(re, im)).collect()
}

fn assert_close(got: &[C64], want: &[C64], tol: f64) {
    assert_eq!(got.len(), want.len());
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).norm() < tol, "entry {i}: {g} vs {w}");
    }
}

fn geom8() -> ArrayGeometry {
    ArrayGeometry::new(8, 30e9).unwrap()
}

fn path(gain: (f64, f64), distance: f64, direction: f64) -> PathComponent {
    PathComponent { gain: C64::new(gain.0, gain.1), distance, direction }
}

fn channel_b() -> Vec<C64> {
    synthesize_channel(
        &geom8(),
        path((0.7, -0.2), 4.0, -0.4),
        &[path((0.1, 0.3), 9.0, 0.55), path((0.0, -0.05), 2.5, 0.1)],
    )
    .unwrap()
    .h
}

#[test]
fn steering_vector_entries() {
    let want = c(&[
        (-0.3481804835301964, -0.06140318305005515),
        (-0.25222027859255813, 0.2477598253686266),
        (0.054185833302211245, 0.34937643805692586),
        (0.3149610466682899, 0.16062234925942065),
        (0.31507568567737765, -0.1603973575060708),
        (0.05643047581289005, -0.34902091828360493),
        (-0.24775645006620187, -0.25222359415921736),
        (-0.3501157510531608, 0.04918293265433805),
    ]);
    assert_close(&steering_vector(&geom8(), 5.0, 0.3).unwrap(), &want, 1e-12);
}

#[test]
fn multipath_channel_entries() {
    let want = c(&[
        (0.10814272436960637, 0.9026639922461601),
        (-0.5070649423321011, 0.022394890305905912),
        (-0.5589406466375648, -0.7809895824307875),
        (0.3391363239683709, -0.4164638085475911),
        (0.8854789901505374, 0.2990350605196701),
        (0.0062194417657232826, 0.4780787951189885),
        (-0.9495123553870385, 0.15060685084936043),
        (-0.40756323924364285, -0.4063305257158619),
    ]);
    assert_close(&channel_b(), &want, 1e-12);
}

#[test]
fn wide_codeword_entries() {
    let g = ArrayGeometry::new(16, 30e9).unwrap();
    let want = c(&[
        (0.5, 0.0),
        (0.3535533905932738, 0.35355339059327373),
        (0.0, 0.5),
        (-0.35355339059327373, 0.3535533905932738),
    ]);
    assert_close(&wide_codeword(&g, 4, 3).unwrap(), &want, 1e-12);
}

#[test]
fn ring_placement() {
    let rec = ring_distances(RingRule::Reciprocal, 5, 3.0, 20.5).unwrap();
    let want = [20.5, 8.338983050847459, 5.23404255319149, 3.8139534883720927, 3.0];
    for (r, w) in rec.iter().zip(want) {
        assert!((r - w).abs() < 1e-12, "{r} vs {w}");
    }
    let lin = ring_distances(RingRule::Linear, 5, 3.0, 20.5).unwrap();
    for (r, w) in lin.iter().zip([20.5, 16.125, 11.75, 7.375, 3.0]) {
        assert!((r - w).abs() < 1e-12, "{r} vs {w}");
    }
}

#[test]
fn brute_force_label() {
    let cb = NearFieldCodebook::with_rule(&geom8(), 3, 1.0, 10.0, RingRule::Reciprocal).unwrap();
    let h_dl: Vec<C64> = channel_b().iter().map(|v| v.conj()).collect();
    let best = cb.best_for(&h_dl);
    assert_eq!((best.n, best.s, best.flat), (3, 1, 3));
    let gain = cb.gains(&h_dl)[best.position()];
    assert!((gain - 2.0220348556794465).abs() < 1e-12);
}

#[test]
fn noiseless_wide_sweep() {
    let g = geom8();
    let ch = synthesize_channel(
        &g,
        path((0.7, -0.2), 4.0, -0.4),
        &[path((0.1, 0.3), 9.0, 0.55), path((0.0, -0.05), 2.5, 0.1)],
    )
    .unwrap();
    let scenario = Scenario { geometry: g, user_positions: vec![], scatterer_positions: vec![], channels: vec![ch], seed: 0 };
    let wide = WideBeamCodebook::new(&g, 2).unwrap();
    let cfg = PilotConfig { p_ul: 1.0, noise_ul: 0.0, n_rf: 2, symbol_time: 1e-6 };
    let gains = wide_beam_sweep(&scenario, &wide, &cfg, &mut rand::rng()).unwrap();
    assert_eq!((gains[0].t, gains[0].n_rf), (2, 2));
    let want = c(&[
        (0.6044190780532793, -0.07607342423343211),
        (-0.7749251580272156, -0.9453340328130095),
        (0.2847132287471147, -0.26764992137516325),
        (0.10207829996603449, -0.5162706060707154),
    ]);
    assert_close(&gains[0].data, &want, 1e-12);
}

fn analog_4x2() -> DMatrix<C64> {
    let h = 0.5;
    DMatrix::from_row_slice(
        4,
        2,
        &c(&[(h, 0.0), (0.0, h), (0.0, h), (-h, 0.0), (h, 0.0), (h, 0.0), (-h, 0.0), (0.0, h)]),
    )
}

fn h_ef_2x2() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &c(&[(1.0, 0.5), (0.2, 0.0), (0.0, -0.3), (0.8, -0.1)]))
}

#[test]
fn mmse_digital_precoder() {
    let f = mmse_digital(&h_ef_2x2(), &analog_4x2(), 2.0, 0.1).unwrap();
    let want = c(&[
        (0.8985235301857785, -0.510854103855624),
        (0.15458469336529523, 0.307961693813674),
        (-0.15208371155825784, 0.09125022693495465),
        (0.9930171754686246, 0.06709575509923141),
    ]);
    assert_close(f.as_slice(), &want, 1e-12);
}

#[test]
fn zf_digital_precoder() {
    let f = zf_digital(&h_ef_2x2(), &analog_4x2()).unwrap();
    let want = c(&[
        (0.8969389779057338, -0.5195003707435384),
        (0.1504183379096572, 0.3551544089533573),
        (-0.1653837351530979, 0.07004487606484144),
        (1.0020308659275932, 0.06323495755853743),
    ]);
    assert_close(f.as_slice(), &want, 1e-12);
}

#[test]
fn two_user_sum_rate() {
    let g = geom8();
    let ch1 = synthesize_channel(
        &g,
        path((0.7, -0.2), 4.0, -0.4),
        &[path((0.1, 0.3), 9.0, 0.55), path((0.0, -0.05), 2.5, 0.1)],
    )
    .unwrap();
    let ch2 = synthesize_channel(&g, path((0.3, 0.4), 6.0, 0.2), &[]).unwrap();
    let mut f_rf = DMatrix::zeros(8, 2);
    for (j, (r, phi)) in [(4.0, -0.375), (6.0, 0.125)].into_iter().enumerate() {
        let b = steering_vector(&g, r, phi).unwrap();
        f_rf.column_mut(j).copy_from_slice(&b);
    }
    let h_ef = DMatrix::from_fn(2, 2, |u, j| {
        let h = if u == 0 { ch1.downlink() } else { ch2.downlink() };
        nfbt_core::dot(&h, f_rf.column(j).as_slice())
    });
    let f_bb = mmse_digital(&h_ef, &f_rf, 2.0, 0.1).unwrap();
    let scenario = Scenario {
        geometry: g,
        user_positions: vec![],
        scatterer_positions: vec![],
        channels: vec![ch1, ch2],
        seed: 0,
    };
    let p = HybridPrecoder { f_rf, f_bb, analog_constrained: true };
    let r = sum_rate(&scenario, &p, 2.0, 0.1).unwrap();
    assert!((r - 9.272262059798159).abs() < 1e-10, "{r}");
}

#[test]
fn two_step_omp() {
    let a = DMatrix::from_fn(5, 8, |i, j| {
        let (i, j) = (i as f64, j as f64);
        C64::new((1.3 * i + 0.7 * j).cos(), (0.4 * i * j + 0.2).sin()) / 3.0
    });
    let dict = DMatrix::from_fn(8, 6, |i, j| {
        let (i, j) = (i as f64, j as f64);
        C64::from_polar(1.0 / 8f64.sqrt(), 0.9 * i * j + 0.3 * j)
    });
    let x = dict.column(4) * C64::new(0.8, 0.0) + dict.column(1) * C64::new(0.1, -0.5);
    let noise = nalgebra::DVector::from_vec(c(&[(0.01, 0.0), (0.0, -0.02), (0.015, 0.0), (0.0, 0.0), (0.0, 0.005)]));
    let y = &a * x + noise;
    let res = omp_estimate(y.as_slice(), &a, &dict, 2).unwrap();
    assert_eq!(res.support, vec![1, 5]);
    assert_close(
        &res.coefficients,
        &c(&[(0.11027406323542054, -0.44049005508952654), (0.2061245081297123, -0.17874663615401856)]),
        1e-10,
    );
    assert!((res.residual_norms[2] - 0.05697719469828065).abs() < 1e-10);
    let want_h = c(&[
        (0.15146301246842495, -0.0690362075912469),
        (0.2115955729183655, -0.10113636608447099),
        (0.024501687275325756, 0.0782212351143281),
        (-0.03088715551269118, 0.2550801609458356),
        (-0.039149134588686116, 0.08007650213130509),
        (-0.1780449378814917, -0.14526660865275282),
        (-0.13838722490505848, -0.10617772934425704),
        (0.14778924162733828, -0.06213119616156178),
    ]);
    assert_close(&res.h, &want_h, 1e-10);
}

#[test]
fn adam_trajectory() {
    let schedule = TrainSchedule::default();
    let mut params = [0.3, -1.2];
    let mut state = AdamState::new(2);
    for g in [[0.5, -0.1], [0.4, 0.2], [-0.3, 0.0], [1.5, -2.0]] {
        state.step(&mut params, &g, 0.006, &schedule);
    }
    assert!((params[0] - 0.2815143509517872).abs() < 1e-14);
    assert!((params[1] - -1.1945837648298452).abs() < 1e-14);
}

fn dense(out: usize, inp: usize, s: f64) -> Dense {
    Dense {
        w: DMatrix::from_fn(out, inp, |a, b| 0.5 * (s + 0.7 * a as f64 + 1.3 * b as f64).sin()),
        b: nalgebra::DVector::from_fn(out, |a, _| 0.1 * (s + a as f64).cos()),
    }
}

#[test]
fn fixed_weight_forward_pass() {
    let params = NetworkParams {
        updating_layers: vec![dense(3, 8, 1.0), dense(3, 6, 2.0)],
        fc_hidden: dense(3, 3, 3.0),
        fc_out: dense(5, 3, 4.0),
    };
    assert_eq!(
        params.architecture(),
        Architecture { input_dim: 4, feature_width: 3, num_layers: 2, num_classes: 5 }
    );
    let x = DMatrix::from_column_slice(4, 3, &[0.3, -1.0, 0.5, 2.0, 1.1, 0.2, -0.4, 0.0, -0.6, 0.9, 0.8, -1.5]);
    let mean = [
        [0.18066319680928208, 0.20259487083534886, 0.21794271284484282, 0.2108151090015095, 0.18798411050901678],
        [0.1825928220301004, 0.20053508886016802, 0.2145708631911682, 0.21019028618117822, 0.19211093973738516],
        [0.1825928220301004, 0.20053508886016802, 0.2145708631911682, 0.21019028618117822, 0.19211093973738516],
    ];
    let zero = [
        [0.18188676643323623, 0.2012923083338614, 0.2158058741227951, 0.21042372972174783, 0.19059132138835932],
        [0.18197983786996888, 0.20119272809963887, 0.21564316056622523, 0.21039327761622476, 0.19079099584794226],
        [0.1825928220301004, 0.20053508886016802, 0.2145708631911682, 0.21019028618117822, 0.19211093973738516],
    ];
    for (agg, want) in [(Aggregation::Mean, mean), (Aggregation::Zero, zero)] {
        let p = forward_batch(&params, &x, std::slice::from_ref(&(0..3)), agg);
        for k in 0..3 {
            for c in 0..5 {
                assert!((p[(c, k)] - want[k][c]).abs() < 1e-14, "{agg:?} user {k} class {c}");
            }
        }
    }
}
