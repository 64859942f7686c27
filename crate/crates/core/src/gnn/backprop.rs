//! Cross-entropy loss and its exact gradients by reverse-mode accumulation.
//!
//! The mean-of-others aggregation is a symmetric linear map within each
//! scenario, so its adjoint is itself: the gradient reaching `z̄_j` flows back
//! to every other user `i` of the same scenario with weight `1 / (K - 1)`.

use std::ops::Range;

use nalgebra::DMatrix;

use super::{aggregate_batch, forward_cached, log_softmax, Aggregation, ForwardCache, GnnModel, NetworkParams};
use crate::error::{Error, Result};

/// Gradients of both networks, shaped like their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub angle: NetworkParams,
    pub distance: NetworkParams,
}

/// Gradient of one network's loss.
#[derive(Debug, Clone)]
pub struct NetworkGradient {
    pub params: NetworkParams,
    /// With respect to the input features, `D × U`.
    pub input: DMatrix<f64>,
}

fn row_sums(m: &DMatrix<f64>) -> nalgebra::DVector<f64> {
    m.column_sum()
}

fn relu_mask(grad: &mut DMatrix<f64>, activation: &DMatrix<f64>) {
    grad.zip_apply(activation, |g, a| {
        if a <= 0.0 {
            *g = 0.0
        }
    });
}

/// Mean cross-entropy of one network over the columns of `x` and its gradient.
pub fn network_loss_and_gradient(
    params: &NetworkParams,
    x: &DMatrix<f64>,
    groups: &[Range<usize>],
    labels: &[usize],
    aggregation: Aggregation,
) -> Result<(f64, NetworkGradient)> {
    let users = x.ncols();
    if labels.len() != users || users == 0 {
        return Err(Error::Shape(format!("{} labels for {users} users", labels.len())));
    }
    let cache = forward_cached(params, x, groups, aggregation);
    let log_p = log_softmax(&cache.logits);
    let classes = log_p.nrows();
    let mut loss = 0.0;
    for (u, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Index(format!("label {y} of {classes} classes")));
        }
        loss -= log_p[(y, u)];
    }
    loss /= users as f64;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("non-finite loss {loss}")));
    }

    let inv = 1.0 / users as f64;
    let mut d_logits = log_p.map(f64::exp);
    for (u, &y) in labels.iter().enumerate() {
        d_logits[(y, u)] -= 1.0;
    }
    d_logits *= inv;
    Ok((loss, backward(params, &cache, x, groups, aggregation, &d_logits)))
}

fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    x: &DMatrix<f64>,
    groups: &[Range<usize>],
    aggregation: Aggregation,
    d_logits: &DMatrix<f64>,
) -> NetworkGradient {
    let mut grads = params.zeros_like();
    grads.fc_out.w = d_logits * cache.hidden.transpose();
    grads.fc_out.b = row_sums(d_logits);

    let mut d_hidden = params.fc_out.w.tr_mul(d_logits);
    relu_mask(&mut d_hidden, &cache.hidden);
    let last = cache.features.last().unwrap_or(x);
    grads.fc_hidden.w = &d_hidden * last.transpose();
    grads.fc_hidden.b = row_sums(&d_hidden);

    let mut dz = params.fc_hidden.w.tr_mul(&d_hidden);
    for l in (0..params.updating_layers.len()).rev() {
        relu_mask(&mut dz, &cache.features[l]);
        grads.updating_layers[l].w = &dz * cache.combined[l].transpose();
        grads.updating_layers[l].b = row_sums(&dz);
        let dc = params.updating_layers[l].w.tr_mul(&dz);
        let d = dc.nrows() / 2;
        let mut below = dc.rows(0, d).into_owned();
        if aggregation == Aggregation::Mean {
            below += aggregate_batch(&dc.rows(d, d).into_owned(), groups);
        }
        dz = below;
    }
    NetworkGradient { params: grads, input: dz }
}

/// Loss `mean_k (CE_angle + CE_distance)` of a model on a batch of already
/// scaled features, with gradients for both networks.
pub fn loss_and_gradients(
    model: &GnnModel,
    x: &DMatrix<f64>,
    groups: &[Range<usize>],
    angle_labels: &[usize],
    dist_labels: &[usize],
) -> Result<(f64, Gradients)> {
    let (la, ga) = network_loss_and_gradient(&model.angle, x, groups, angle_labels, model.aggregation)?;
    let (ld, gd) = network_loss_and_gradient(&model.distance, x, groups, dist_labels, model.aggregation)?;
    Ok((la + ld, Gradients { angle: ga.params, distance: gd.params }))
}
