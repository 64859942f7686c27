//! Model and training-state checkpoints in the tagged container.
//!
//! ```text
//! MODL := aggregation u8 (0 mean, 1 zero) | input_scale f64 | layout_n_rf u32
//! GNNP := network(angle) | network(distance)
//! network := dense_count u32 | dense*
//! dense := rows u32 | cols u32 | W row-major f64 × rows·cols | b f64 × rows
//! TRST := epoch u32 | lr f64 | best_accuracy f64 | plateau_best f64 | stale u32
//!       | seed u64 | schedule | adam(angle) | adam(distance)
//!       | network(angle) | network(distance)       (current, not best, weights)
//!       | history_len u32 | record*
//! schedule := initial_lr f64 | epochs u32 | batch_size u32 | plateau_epochs u32
//!           | lr_decay_factor f64 | plateau_threshold f64 | beta1 f64 | beta2 f64 | eps f64
//! adam := t u64 | len u32 | m f64 × len | v f64 × len
//! record := epoch u32 | lr f64 | train_loss f64 | acc_angle f64 | acc_dist f64 | acc f64
//! ```
//!
//! A training checkpoint stores the best-validation model in `MODL`/`GNNP`, so
//! it can be used directly for inference.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::train::{AdamState, EpochRecord, Plateau, TrainSchedule, Trainer};
use super::{Aggregation, Dense, GnnModel, NetworkParams};
use crate::container::{self, find, Reader, Section, Writer};
use crate::error::{Error, Result};

pub const MODEL_TAG: &[u8; 4] = b"MODL";
pub const PARAMS_TAG: &[u8; 4] = b"GNNP";
pub const STATE_TAG: &[u8; 4] = b"TRST";

fn write_network(w: &mut Writer, p: &NetworkParams) {
    w.usize(p.updating_layers.len() + 2);
    for d in p.layers() {
        w.usize(d.outputs()).usize(d.inputs());
        for r in 0..d.w.nrows() {
            for c in 0..d.w.ncols() {
                w.f64(d.w[(r, c)]);
            }
        }
        w.f64s(d.b.as_slice());
    }
}

fn read_network(r: &mut Reader) -> Result<NetworkParams> {
    let count = r.usize()?;
    if count < 3 {
        return Err(Error::Format(format!("network with {count} dense blocks")));
    }
    let mut dense = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = r.usize()?;
        let cols = r.usize()?;
        let w = DMatrix::from_row_slice(rows, cols, &r.f64s(rows * cols)?);
        let b = DVector::from_vec(r.f64s(rows)?);
        dense.push(Dense { w, b });
    }
    let fc_out = dense.pop().unwrap();
    let fc_hidden = dense.pop().unwrap();
    Ok(NetworkParams { updating_layers: dense, fc_hidden, fc_out })
}

fn write_adam(w: &mut Writer, a: &AdamState) {
    w.u64(a.t).usize(a.m.len()).f64s(&a.m).f64s(&a.v);
}

fn read_adam(r: &mut Reader) -> Result<AdamState> {
    let t = r.u64()?;
    let len = r.usize()?;
    Ok(AdamState { t, m: r.f64s(len)?, v: r.f64s(len)? })
}

pub fn model_sections(model: &GnnModel) -> Vec<Section> {
    let mut w = Writer::new();
    w.u8(match model.aggregation {
        Aggregation::Mean => 0,
        Aggregation::Zero => 1,
    })
    .f64(model.input_scale)
    .usize(model.layout_n_rf);
    let mut p = Writer::new();
    write_network(&mut p, &model.angle);
    write_network(&mut p, &model.distance);
    vec![Section::new(MODEL_TAG, w.into_inner()), Section::new(PARAMS_TAG, p.into_inner())]
}

pub fn model_from_sections(sections: &[Section]) -> Result<GnnModel> {
    let mut r = Reader::new(&find(sections, MODEL_TAG)?.payload);
    let aggregation = match r.u8()? {
        0 => Aggregation::Mean,
        1 => Aggregation::Zero,
        v => return Err(Error::Format(format!("unknown aggregation code {v}"))),
    };
    let input_scale = r.f64()?;
    let layout_n_rf = r.usize()?;
    r.finish()?;
    let mut r = Reader::new(&find(sections, PARAMS_TAG)?.payload);
    let angle = read_network(&mut r)?;
    let distance = read_network(&mut r)?;
    r.finish()?;
    Ok(GnnModel { angle, distance, aggregation, input_scale, layout_n_rf })
}

pub fn trainer_sections(t: &Trainer) -> Vec<Section> {
    let mut sections = model_sections(&t.best_model);
    let s = &t.schedule;
    let mut w = Writer::new();
    w.usize(t.epoch).f64(t.lr).f64(t.best_accuracy).f64(t.plateau.best).usize(t.plateau.stale_epochs).u64(t.seed);
    w.f64(s.initial_lr).usize(s.epochs).usize(s.batch_size).usize(s.plateau_epochs);
    w.f64(s.lr_decay_factor).f64(s.plateau_threshold).f64(s.beta1).f64(s.beta2).f64(s.eps);
    write_adam(&mut w, &t.adam_angle);
    write_adam(&mut w, &t.adam_distance);
    write_network(&mut w, &t.model.angle);
    write_network(&mut w, &t.model.distance);
    w.usize(t.history.len());
    for h in &t.history {
        w.usize(h.epoch).f64(h.lr).f64(h.train_loss).f64(h.val_acc_angle).f64(h.val_acc_dist).f64(h.val_acc_overall);
    }
    sections.push(Section::new(STATE_TAG, w.into_inner()));
    sections
}

pub fn trainer_from_sections(sections: &[Section]) -> Result<Trainer> {
    let best_model = model_from_sections(sections)?;
    let mut r = Reader::new(&find(sections, STATE_TAG)?.payload);
    let epoch = r.usize()?;
    let lr = r.f64()?;
    let best_accuracy = r.f64()?;
    let plateau = Plateau { best: r.f64()?, stale_epochs: r.usize()? };
    let seed = r.u64()?;
    let schedule = TrainSchedule {
        initial_lr: r.f64()?,
        epochs: r.usize()?,
        batch_size: r.usize()?,
        plateau_epochs: r.usize()?,
        lr_decay_factor: r.f64()?,
        plateau_threshold: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        eps: r.f64()?,
    };
    let adam_angle = read_adam(&mut r)?;
    let adam_distance = read_adam(&mut r)?;
    let model = GnnModel { angle: read_network(&mut r)?, distance: read_network(&mut r)?, ..best_model.clone() };
    let count = r.usize()?;
    let mut history = Vec::with_capacity(count);
    for _ in 0..count {
        history.push(EpochRecord {
            epoch: r.usize()?,
            lr: r.f64()?,
            train_loss: r.f64()?,
            val_acc_angle: r.f64()?,
            val_acc_dist: r.f64()?,
            val_acc_overall: r.f64()?,
        });
    }
    r.finish()?;
    Ok(Trainer {
        model,
        best_model,
        best_accuracy,
        adam_angle,
        adam_distance,
        lr,
        plateau,
        epoch,
        history,
        schedule,
        seed,
    })
}

pub fn save_model(path: &Path, model: &GnnModel) -> Result<()> {
    container::write_file(path, &model_sections(model))
}

pub fn load_model(path: &Path) -> Result<GnnModel> {
    model_from_sections(&container::read_file(path)?)
}
