//! Dual graph networks mapping phase-1 wide-beam gains to angle and distance
//! probabilities.
//!
//! Every user is a node of a fully connected graph. A layer concatenates each
//! node's feature with the element-wise mean of all other nodes' features and
//! applies `ReLU(W [z; z̄] + b)`. Because the weights act per node and the mean
//! is symmetric, one set of parameters serves any number of users and the
//! outputs are permutation-equivariant. With [`Aggregation::Zero`] the mean is
//! replaced by zeros, which turns the network into a per-user MLP (the FC
//! ablation) without changing its parameter shapes.
//!
//! Batches are evaluated column-wise: a `D × U` matrix holds the features of
//! `U` users from several scenarios, and `groups` gives the column range of
//! each scenario. Aggregation never crosses groups.

pub mod backprop;
pub mod checkpoint;
pub mod train;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::codebook::flat_index;
use crate::error::{Error, Result};
use crate::pilot::GainMatrix;

pub use backprop::{loss_and_gradients, Gradients};
pub use train::{evaluate, history_csv, train, AdamState, EpochRecord, Plateau, TrainData, TrainOutcome, TrainSchedule, Trainer};

/// `ReLU(W x + b)` or `W x + b`, `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// An updating layer: `V × 2V_in` weights acting on `[z; z̄]`.
pub type UpdateLayerParams = Dense;

impl Dense {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self { w: DMatrix::zeros(out, inp), b: DVector::zeros(out) }
    }

    /// Uniform in `±√(1 / fan_in)`, zero bias.
    pub fn init<R: Rng + ?Sized>(out: usize, inp: usize, rng: &mut R) -> Self {
        let bound = (1.0 / inp as f64).sqrt();
        let w = DMatrix::from_fn(out, inp, |_, _| rng.random_range(-bound..bound));
        Self { w, b: DVector::zeros(out) }
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// `W X + b 1ᵀ` for a batch of columns.
    fn affine(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = &self.w * x;
        for mut col in y.column_iter_mut() {
            col += &self.b;
        }
        y
    }
}

fn relu_in_place(m: &mut DMatrix<f64>) {
    m.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
}

/// Shape of one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub feature_width: usize,
    pub num_layers: usize,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub updating_layers: Vec<UpdateLayerParams>,
    pub fc_hidden: Dense,
    pub fc_out: Dense,
}

impl NetworkParams {
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let Architecture { input_dim, feature_width: v, num_layers, num_classes } = arch;
        if input_dim == 0 || v == 0 || num_layers == 0 || num_classes == 0 {
            return Err(Error::Config(format!("degenerate architecture {arch:?}")));
        }
        let mut updating_layers = Vec::with_capacity(num_layers);
        let mut width = input_dim;
        for _ in 0..num_layers {
            updating_layers.push(Dense::init(v, 2 * width, rng));
            width = v;
        }
        Ok(Self {
            updating_layers,
            fc_hidden: Dense::init(v, v, rng),
            fc_out: Dense::init(num_classes, v, rng),
        })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.updating_layers[0].inputs() / 2,
            feature_width: self.fc_hidden.outputs(),
            num_layers: self.updating_layers.len(),
            num_classes: self.fc_out.outputs(),
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.updating_layers.iter().chain([&self.fc_hidden, &self.fc_out])
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.updating_layers.iter_mut().chain([&mut self.fc_hidden, &mut self.fc_out])
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(Dense::num_params).sum()
    }

    /// All parameters, layer by layer, each as row-major `W` then `b`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for d in self.layers() {
            for r in 0..d.w.nrows() {
                out.extend(d.w.row(r).iter());
            }
            out.extend(d.b.iter());
        }
        out
    }

    /// Inverse of [`Self::flatten`].
    pub fn assign(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.num_params())));
        }
        let mut it = flat.iter().copied();
        for d in self.layers_mut() {
            let cols = d.w.ncols();
            for r in 0..d.w.nrows() {
                for c in 0..cols {
                    d.w[(r, c)] = it.next().unwrap();
                }
            }
            d.b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.outputs(), d.inputs());
        Self {
            updating_layers: self.updating_layers.iter().map(z).collect(),
            fc_hidden: z(&self.fc_hidden),
            fc_out: z(&self.fc_out),
        }
    }
}

/// Neighbour aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Mean over the other users of the same scenario.
    Mean,
    /// Always zero: per-user processing (FC ablation).
    Zero,
}

impl Aggregation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Zero => "zero",
        }
    }
}

/// Angle and distance distributions of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityPair {
    pub p_a: Vec<f64>,
    pub p_d: Vec<f64>,
}

impl ProbabilityPair {
    /// Most likely codeword as 0-based `(n, s)`; ties go to the smaller index,
    /// which is also the smaller flat index of the joint distribution.
    pub fn argmax(&self) -> (usize, usize) {
        (argmax(&self.p_a), argmax(&self.p_d))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `[vec(Re R); vec(Im R)]` with column-major vectorisation.
pub fn preprocess(r: &GainMatrix) -> Vec<f64> {
    let len = r.num_entries();
    let mut out = vec![0.0; 2 * len];
    let mut i = 0;
    for n in 0..r.n_rf {
        for t in 0..r.t {
            let v = r.get(t, n);
            out[i] = v.re;
            out[len + i] = v.im;
            i += 1;
        }
    }
    out
}

/// Element-wise mean of every feature except the `k`-th; zero when there is
/// no other user.
pub fn aggregate(features: &[Vec<f64>], k: usize) -> Vec<f64> {
    let dim = features[k].len();
    let mut out = vec![0.0; dim];
    if features.len() < 2 {
        return out;
    }
    for (j, f) in features.iter().enumerate() {
        if j != k {
            out.iter_mut().zip(f).for_each(|(o, v)| *o += v);
        }
    }
    let scale = 1.0 / (features.len() - 1) as f64;
    out.iter_mut().for_each(|o| *o *= scale);
    out
}

pub fn combine(z: &[f64], z_bar: &[f64]) -> Result<Vec<f64>> {
    if z.len() != z_bar.len() {
        return Err(Error::Shape(format!("combining lengths {} and {}", z.len(), z_bar.len())));
    }
    Ok(z.iter().chain(z_bar).copied().collect())
}

pub fn update_layer(params: &UpdateLayerParams, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != params.inputs() {
        return Err(Error::Shape(format!("layer expects {} inputs, got {}", params.inputs(), v.len())));
    }
    let y = &params.w * DVector::from_column_slice(v) + &params.b;
    Ok(y.iter().map(|x| x.max(0.0)).collect())
}

/// Joint codeword distribution `p_a[n] p_d[s]` in flat-index order.
pub fn combine_probabilities(pair: &ProbabilityPair) -> Vec<f64> {
    let n_bs = pair.p_a.len();
    let mut out = vec![0.0; n_bs * pair.p_d.len()];
    for (s, pd) in pair.p_d.iter().enumerate() {
        for (n, pa) in pair.p_a.iter().enumerate() {
            out[flat_index(n + 1, s + 1, n_bs).unwrap() - 1] = pa * pd;
        }
    }
    out
}

/// Mean-of-others for each column, within each group. The operator is
/// symmetric, so it also propagates gradients backwards.
pub fn aggregate_batch(z: &DMatrix<f64>, groups: &[Range<usize>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for g in groups {
        let k = g.len();
        if k < 2 {
            continue;
        }
        let sum: DVector<f64> = z.columns(g.start, k).column_sum();
        let scale = 1.0 / (k - 1) as f64;
        for j in g.clone() {
            let mut col = out.column_mut(j);
            col.copy_from(&sum);
            col -= z.column(j);
            col *= scale;
        }
    }
    out
}

/// Stacks `[z; z̄]` for a batch.
fn concat_rows(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = (top.nrows(), top.ncols());
    let mut out = DMatrix::zeros(2 * r, c);
    out.rows_mut(0, r).copy_from(top);
    out.rows_mut(r, r).copy_from(bottom);
    out
}

/// Intermediate values of one network on one batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of each updating layer, `[z; z̄]`.
    pub combined: Vec<DMatrix<f64>>,
    /// Output of each updating layer.
    pub features: Vec<DMatrix<f64>>,
    pub hidden: DMatrix<f64>,
    pub logits: DMatrix<f64>,
}

pub fn forward_cached(
    params: &NetworkParams,
    x: &DMatrix<f64>,
    groups: &[Range<usize>],
    aggregation: Aggregation,
) -> ForwardCache {
    let mut combined = Vec::with_capacity(params.updating_layers.len());
    let mut features = Vec::with_capacity(params.updating_layers.len());
    let mut z = x.clone();
    for layer in &params.updating_layers {
        let z_bar = match aggregation {
            Aggregation::Mean => aggregate_batch(&z, groups),
            Aggregation::Zero => DMatrix::zeros(z.nrows(), z.ncols()),
        };
        let c = concat_rows(&z, &z_bar);
        let mut next = layer.affine(&c);
        relu_in_place(&mut next);
        combined.push(c);
        features.push(next.clone());
        z = next;
    }
    let mut hidden = params.fc_hidden.affine(&z);
    relu_in_place(&mut hidden);
    let logits = params.fc_out.affine(&hidden);
    ForwardCache { combined, features, hidden, logits }
}

/// Column-wise log-softmax.
pub fn log_softmax(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut col in out.column_iter_mut() {
        let max = col.max();
        let lse = max + col.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        col.add_scalar_mut(-lse);
    }
    out
}

/// Column-wise softmax probabilities.
pub fn softmax(logits: &DMatrix<f64>) -> DMatrix<f64> {
    log_softmax(logits).map(f64::exp)
}

/// Class probabilities of every column.
pub fn forward_batch(
    params: &NetworkParams,
    x: &DMatrix<f64>,
    groups: &[Range<usize>],
    aggregation: Aggregation,
) -> DMatrix<f64> {
    softmax(&forward_cached(params, x, groups, aggregation).logits)
}

fn pairs_from(pa: &DMatrix<f64>, pd: &DMatrix<f64>) -> Vec<ProbabilityPair> {
    (0..pa.ncols())
        .map(|k| ProbabilityPair { p_a: pa.column(k).iter().copied().collect(), p_d: pd.column(k).iter().copied().collect() })
        .collect()
}

/// Features of one scenario's users as a `D × K` matrix.
pub fn feature_matrix(gains: &[GainMatrix]) -> Result<DMatrix<f64>> {
    let first = gains.first().ok_or_else(|| Error::Invalid("no users".into()))?;
    let dim = 2 * first.num_entries();
    let mut data = Vec::with_capacity(dim * gains.len());
    for g in gains {
        if 2 * g.num_entries() != dim {
            return Err(Error::Shape("users have different gain matrix sizes".into()));
        }
        data.extend(preprocess(g));
    }
    Ok(DMatrix::from_vec(dim, gains.len(), data))
}

/// Both networks on one scenario's users (one group).
pub fn forward(
    params_angle: &NetworkParams,
    params_dist: &NetworkParams,
    gains: &[GainMatrix],
    aggregation: Aggregation,
) -> Result<Vec<ProbabilityPair>> {
    let x = feature_matrix(gains)?;
    check_input(params_angle, &x)?;
    check_input(params_dist, &x)?;
    let groups = [0..x.ncols()];
    Ok(pairs_from(
        &forward_batch(params_angle, &x, &groups, aggregation),
        &forward_batch(params_dist, &x, &groups, aggregation),
    ))
}

fn check_input(params: &NetworkParams, x: &DMatrix<f64>) -> Result<()> {
    let want = params.architecture().input_dim;
    if x.nrows() != want {
        return Err(Error::Shape(format!("network expects {want} features, got {}", x.nrows())));
    }
    Ok(())
}

/// A trained estimator: both networks plus the input conventions they were
/// trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub angle: NetworkParams,
    pub distance: NetworkParams,
    pub aggregation: Aggregation,
    /// Multiplier applied to raw gain features (inverse RMS of the training
    /// features), bringing received powers of order 1e-8 to unit scale.
    pub input_scale: f64,
    /// RF-chain grouping the features are laid out for. Observations from a
    /// sweep with another `N_RF` are regrouped to this layout, so each input
    /// coordinate always refers to the same wide beam whatever `K` is.
    pub layout_n_rf: usize,
}

/// Sizes shared by the two networks of a [`GnnModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub input_dim: usize,
    pub feature_width: usize,
    pub num_layers: usize,
    pub num_angles: usize,
    pub num_rings: usize,
    pub layout_n_rf: usize,
}

impl GnnModel {
    pub fn new<R: Rng + ?Sized>(shape: ModelShape, aggregation: Aggregation, rng: &mut R) -> Result<Self> {
        let arch = |c| Architecture {
            input_dim: shape.input_dim,
            feature_width: shape.feature_width,
            num_layers: shape.num_layers,
            num_classes: c,
        };
        Ok(Self {
            angle: NetworkParams::init(arch(shape.num_angles), rng)?,
            distance: NetworkParams::init(arch(shape.num_rings), rng)?,
            aggregation,
            input_scale: 1.0,
            layout_n_rf: shape.layout_n_rf,
        })
    }

    pub fn shape(&self) -> ModelShape {
        let a = self.angle.architecture();
        ModelShape {
            input_dim: a.input_dim,
            feature_width: a.feature_width,
            num_layers: a.num_layers,
            num_angles: a.num_classes,
            num_rings: self.distance.architecture().num_classes,
            layout_n_rf: self.layout_n_rf,
        }
    }

    /// Scaled features of one scenario in this model's layout.
    pub fn features(&self, gains: &[GainMatrix]) -> Result<DMatrix<f64>> {
        let regrouped = gains.iter().map(|g| g.with_n_rf(self.layout_n_rf)).collect::<Result<Vec<_>>>()?;
        Ok(feature_matrix(&regrouped)? * self.input_scale)
    }

    pub fn predict_features(&self, x: &DMatrix<f64>, groups: &[Range<usize>]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        check_input(&self.angle, x)?;
        Ok((
            forward_batch(&self.angle, x, groups, self.aggregation),
            forward_batch(&self.distance, x, groups, self.aggregation),
        ))
    }

    /// Probability pairs for the users of one scenario.
    pub fn predict(&self, gains: &[GainMatrix]) -> Result<Vec<ProbabilityPair>> {
        let x = self.features(gains)?;
        let (pa, pd) = self.predict_features(&x, &[0..x.ncols()])?;
        Ok(pairs_from(&pa, &pd))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::C64;

    fn net(input: usize, v: usize, classes: usize, s: u64) -> NetworkParams {
        let arch = Architecture { input_dim: input, feature_width: v, num_layers: 3, num_classes: classes };
        NetworkParams::init(arch, &mut seed::rng(s, 7)).unwrap()
    }

    fn random_gains(k: usize, t: usize, n_rf: usize, s: u64) -> Vec<GainMatrix> {
        let mut rng = seed::rng(s, 1);
        (0..k)
            .map(|_| {
                let data = (0..t * n_rf).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
                GainMatrix::new(t, n_rf, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn preprocess_examples() {
        let r = GainMatrix::new(2, 2, vec![C64::new(1.0, 2.0), C64::new(3.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, -1.0)]).unwrap();
        assert_eq!(preprocess(&r), vec![1.0, 0.0, 3.0, 0.0, 2.0, 0.0, 0.0, -1.0]);
        let real = GainMatrix::new(8, 8, (0..64).map(|i| C64::new(i as f64, 0.0)).collect()).unwrap();
        let z = preprocess(&real);
        assert_eq!(z.len(), 128);
        assert!(z[64..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn aggregate_examples() {
        let same = vec![vec![1.0, 2.0]; 4];
        assert_eq!(aggregate(&same, 2), vec![1.0, 2.0]);
        assert_eq!(aggregate(&[vec![3.0, 4.0]], 0), vec![0.0, 0.0]);
        let f = vec![vec![1.0, -2.0, 0.5], vec![4.0, 0.0, 2.0], vec![-3.0, 6.0, 1.0]];
        let mut oracle = [0.0; 3];
        for d in 0..3 {
            oracle[d] = (f[0][d] + f[2][d]) / 2.0;
        }
        assert_eq!(aggregate(&f, 1), oracle.to_vec());
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(combine(&[5.0], &[0.0]).unwrap(), vec![5.0, 0.0]);
        assert_eq!(combine(&[0.0; 128], &[0.0; 128]).unwrap().len(), 256);
        assert!(combine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn update_layer_examples() {
        let zero = Dense::zeros(2, 4);
        assert_eq!(update_layer(&zero, &[1.0, -2.0, 3.0, 4.0]).unwrap(), vec![0.0, 0.0]);

        let mut ident = Dense::zeros(2, 4);
        ident.w[(0, 0)] = 1.0;
        ident.w[(1, 1)] = 1.0;
        assert_eq!(update_layer(&ident, &[0.5, 2.0, 9.0, -9.0]).unwrap(), vec![0.5, 2.0]);

        let d = Dense {
            w: DMatrix::from_row_slice(2, 4, &[0.5, -1.0, 2.0, 0.0, 1.0, 1.0, -0.5, 3.0]),
            b: DVector::from_vec(vec![0.1, -10.0]),
        };
        // [0.5·1 − 1·2 + 2·3 + 0 + 0.1, 1 + 2 − 1.5 + 12 − 10] = [4.6, 3.5]
        let y = update_layer(&d, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((y[0] - 4.6).abs() < 1e-15 && (y[1] - 3.5).abs() < 1e-15);
        assert!(update_layer(&d, &[1.0]).is_err());
    }

    #[test]
    fn outputs_are_simplex_vectors() {
        let (pa, pd) = (net(16, 12, 32, 1), net(16, 12, 5, 2));
        let out = forward(&pa, &pd, &random_gains(4, 2, 4, 3), Aggregation::Mean).unwrap();
        for p in &out {
            assert!((p.p_a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((p.p_d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.p_a.iter().chain(&p.p_d).all(|v| *v >= 0.0));
            assert!((combine_probabilities(p).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn combine_probabilities_examples() {
        let one_hot = |n: usize, i: usize| (0..n).map(|j| if j == i { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let pair = ProbabilityPair { p_a: one_hot(8, 2), p_d: one_hot(3, 1) };
        let joint = combine_probabilities(&pair);
        assert_eq!(joint, one_hot(24, flat_index(3, 2, 8).unwrap() - 1));

        let uniform = ProbabilityPair { p_a: vec![0.25; 4], p_d: vec![0.5; 2] };
        assert!(combine_probabilities(&uniform).iter().all(|v| (*v - 0.125).abs() < 1e-15));

        let pair = ProbabilityPair { p_a: vec![0.1, 0.6, 0.3], p_d: vec![0.7, 0.2, 0.1] };
        let joint = combine_probabilities(&pair);
        for s in 0..3 {
            for n in 0..3 {
                assert_eq!(joint[s * 3 + n], pair.p_a[n] * pair.p_d[s]);
            }
        }
    }

    #[test]
    fn flatten_assign_round_trip() {
        let p = net(6, 8, 5, 4);
        let mut q = p.zeros_like();
        q.assign(&p.flatten()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.flatten().len(), p.num_params());
        assert_eq!(p.updating_layers[0].w.shape(), (8, 12));
        assert_eq!(p.updating_layers[1].w.shape(), (8, 16));
    }

    #[test]
    fn model_regroups_rf_layout() {
        let shape = ModelShape { input_dim: 8, feature_width: 6, num_layers: 2, num_angles: 8, num_rings: 3, layout_n_rf: 2 };
        let mut model = GnnModel::new(shape, Aggregation::Mean, &mut seed::rng(0, 7)).unwrap();
        model.input_scale = 3.0;
        let g = random_gains(3, 2, 2, 8);
        let regrouped: Vec<_> = g.iter().map(|x| x.with_n_rf(4).unwrap()).collect();
        assert_eq!(model.predict(&g).unwrap(), model.predict(&regrouped).unwrap());
        assert_eq!(model.features(&g).unwrap(), feature_matrix(&g).unwrap() * 3.0);
    }
}
