//! Graph convolution layers and whole-model forward passes.
//!
//! Every model shares the same frame:
//!
//! ```text
//! dropout(X) -> linear -> relu = H0 -> [dropout -> graph layer] x K -> dropout -> linear -> log_softmax
//! ```
//!
//! except APPNP, which runs the MLP first and propagates the class scores.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::Matrix;
use crate::graph::PropMatrix;
use crate::optim::{AdamConfig, Param, ParamGroup};
use crate::rng;
use crate::tape::{Tape, TensorError, Var};

/// Where dropout is applied; echoed into run metadata.
pub const DROPOUT_PLACEMENT: &str = "raw input; input of every graph layer; classifier input";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gcn,
    GcnRes,
    #[serde(rename = "gcn-dropedge")]
    GcnDropEdge,
    Appnp,
    Gcnii,
    GcniiStar,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Gcn,
        ModelKind::GcnRes,
        ModelKind::GcnDropEdge,
        ModelKind::Appnp,
        ModelKind::Gcnii,
        ModelKind::GcniiStar,
    ];

    /// Conv weight matrices per graph layer.
    pub fn weights_per_layer(self) -> usize {
        match self {
            ModelKind::Appnp => 0,
            ModelKind::GcniiStar => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("num_layers must be at least 1")]
    NoLayers,
    #[error("hidden_dim must be at least 1")]
    NoHidden,
    #[error("alpha {0} outside [0, 1]")]
    Alpha(f64),
    #[error("lambda {0} must be nonnegative")]
    Lambda(f64),
    #[error("{name} {value} outside [0, 1)")]
    Rate { name: &'static str, value: f64 },
    #[error("patience must be at least 1")]
    Patience,
}

/// All hyperparameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_kind: ModelKind,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub dropout: f64,
    pub drop_edge: f64,
    pub lr: f64,
    pub wd_conv: f64,
    pub wd_dense: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub use_initial_residual: bool,
    pub use_identity_map: bool,
}

impl Default for ModelConfig {
    /// GCNII on Cora, semi-supervised.
    fn default() -> Self {
        Self {
            model_kind: ModelKind::Gcnii,
            num_layers: 64,
            hidden_dim: 64,
            alpha: 0.1,
            lambda: 0.5,
            dropout: 0.6,
            drop_edge: 0.0,
            lr: 0.01,
            wd_conv: 0.01,
            wd_dense: 0.0005,
            patience: 100,
            max_epochs: 1500,
            seed: 42,
            use_initial_residual: true,
            use_identity_map: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_layers == 0 {
            return Err(ConfigError::NoLayers);
        }
        if self.hidden_dim == 0 {
            return Err(ConfigError::NoHidden);
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ConfigError::Alpha(self.alpha));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(ConfigError::Lambda(self.lambda));
        }
        for (name, value) in [("dropout", self.dropout), ("drop_edge", self.drop_edge)] {
            if !(0.0..1.0).contains(&value) {
                return Err(ConfigError::Rate { name, value });
            }
        }
        if self.patience == 0 {
            return Err(ConfigError::Patience);
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.lr,
            weight_decay_conv: self.wd_conv,
            weight_decay_dense: self.wd_dense,
            ..AdamConfig::default()
        }
    }

    /// Strength `β_ℓ` of the weight matrix at 1-indexed layer `layer`.
    pub fn beta(&self, layer: usize) -> f64 {
        if self.use_identity_map {
            beta_schedule(layer, self.lambda)
        } else {
            1.0
        }
    }
}

/// `β_ℓ = ln(λ/ℓ + 1)` for 1-indexed layer `ℓ`.
pub fn beta_schedule(layer: usize, lambda: f64) -> f64 {
    assert!(layer >= 1, "layers are 1-indexed");
    libm::log(lambda / layer as f64 + 1.0)
}

/// `relu(P̃ h w)`.
pub fn gcn_layer(tape: &mut Tape, h: Var, prop: &Arc<PropMatrix>, w: Var) -> Result<Var, TensorError> {
    let ph = tape.spmm(prop, h)?;
    let z = tape.matmul(ph, w)?;
    tape.relu(z)
}

/// `relu((P̃ h + h) w)`.
pub fn gcn_res_layer(tape: &mut Tape, h: Var, prop: &Arc<PropMatrix>, w: Var) -> Result<Var, TensorError> {
    let ph = tape.spmm(prop, h)?;
    let s = tape.add_scaled(ph, h, 1.0, 1.0)?;
    let z = tape.matmul(s, w)?;
    tape.relu(z)
}

/// `relu(((1-α) P̃ h + α h0) ((1-β) I + β w))`.
pub fn gcnii_layer(
    tape: &mut Tape,
    h: Var,
    h0: Var,
    prop: &Arc<PropMatrix>,
    w: Var,
    alpha: f64,
    beta: f64,
) -> Result<Var, TensorError> {
    let ph = tape.spmm(prop, h)?;
    let support = tape.add_scaled(ph, h0, 1.0 - alpha, alpha)?;
    let z = tape.identity_mix(support, w, beta)?;
    tape.relu(z)
}

/// GCNII* layer: separate weights for the smoothed term and the initial
/// residual, `relu((1-α) P̃h ((1-β)I + β w1) + α h0 ((1-β)I + β w2))`.
#[allow(clippy::too_many_arguments)]
pub fn gcnii_star_layer(
    tape: &mut Tape,
    h: Var,
    h0: Var,
    prop: &Arc<PropMatrix>,
    w1: Var,
    w2: Var,
    alpha: f64,
    beta: f64,
) -> Result<Var, TensorError> {
    let ph = tape.spmm(prop, h)?;
    let smooth = tape.identity_mix(ph, w1, beta)?;
    let initial = tape.identity_mix(h0, w2, beta)?;
    let z = tape.add_scaled(smooth, initial, 1.0 - alpha, alpha)?;
    tape.relu(z)
}

/// `k` steps of `H <- (1-α) P̃ H + α H0`, no weights or nonlinearity.
pub fn appnp_propagate(
    tape: &mut Tape,
    h0: Var,
    prop: &Arc<PropMatrix>,
    alpha: f64,
    k: usize,
) -> Result<Var, TensorError> {
    let mut h = h0;
    for _ in 0..k {
        let ph = tape.spmm(prop, h)?;
        h = tape.add_scaled(ph, h0, 1.0 - alpha, alpha)?;
    }
    Ok(h)
}

/// Uniform on `±sqrt(6 / (rows + cols))`.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = libm::sqrt(6.0 / (rows + cols) as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

/// Parameters in a fixed order: projection weight and bias, conv weights
/// layer by layer, classifier weight and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub params: Vec<Param>,
    num_layers: usize,
    weights_per_layer: usize,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(
        kind: ModelKind,
        num_layers: usize,
        in_dim: usize,
        hidden: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Self {
        let per_layer = kind.weights_per_layer();
        let mut params = Vec::with_capacity(4 + num_layers * per_layer);
        let dense = |name: &str, value: Matrix| Param {
            name: name.into(),
            value,
            group: ParamGroup::Dense,
        };
        params.push(dense("projection.weight", glorot_uniform(in_dim, hidden, rng)));
        params.push(dense("projection.bias", Matrix::zeros(1, hidden)));
        for layer in 1..=num_layers {
            for slot in 1..=per_layer {
                params.push(Param {
                    name: format!("conv{layer}.weight{slot}"),
                    value: glorot_uniform(hidden, hidden, rng),
                    group: ParamGroup::Conv,
                });
            }
        }
        params.push(dense("classifier.weight", glorot_uniform(hidden, num_classes, rng)));
        params.push(dense("classifier.bias", Matrix::zeros(1, num_classes)));
        Self {
            params,
            num_layers,
            weights_per_layer: per_layer,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn weights_per_layer(&self) -> usize {
        self.weights_per_layer
    }

    /// Position of conv weight `slot` (0-based) of 1-indexed `layer`.
    pub fn conv_index(&self, layer: usize, slot: usize) -> usize {
        2 + (layer - 1) * self.weights_per_layer + slot
    }

    pub fn classifier_index(&self) -> usize {
        self.params.len() - 2
    }

    pub fn conv_weights(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(|p| p.group == ParamGroup::Conv)
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Output of [`Model::forward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub log_probs: Var,
    /// One handle per entry of [`ModelParams::params`].
    pub param_vars: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    /// Fresh model with weights drawn from the config seed.
    pub fn new(config: ModelConfig, in_dim: usize, num_classes: usize) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut init = rng::stream(config.seed, rng::STREAM_INIT);
        let params = ModelParams::init(
            config.model_kind,
            config.num_layers,
            in_dim,
            config.hidden_dim,
            num_classes,
            &mut init,
        );
        Ok(Self { config, params })
    }

    /// Records the forward pass on `tape`. Parameters are registered as
    /// trainable leaves only when `training` is set.
    pub fn forward(
        &self,
        tape: &mut Tape,
        features: &Arc<Matrix>,
        prop: &Arc<PropMatrix>,
        training: bool,
    ) -> Result<ForwardPass, TensorError> {
        let cfg = &self.config;
        let param_vars: Vec<Var> = self
            .params
            .params
            .iter()
            .map(|p| {
                if training {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        let x = tape.constant_shared(Arc::clone(features));
        let x = tape.dropout(x, cfg.dropout, training)?;
        let z = tape.matmul(x, param_vars[0])?;
        let z = tape.add_row_bias(z, param_vars[1])?;
        let h0 = tape.relu(z)?;
        let cls = self.params.classifier_index();

        if cfg.model_kind == ModelKind::Appnp {
            let h = tape.dropout(h0, cfg.dropout, training)?;
            let scores = tape.matmul(h, param_vars[cls])?;
            let scores = tape.add_row_bias(scores, param_vars[cls + 1])?;
            let out = appnp_propagate(tape, scores, prop, cfg.alpha, cfg.num_layers)?;
            let log_probs = tape.log_softmax_rows(out)?;
            return Ok(ForwardPass { log_probs, param_vars });
        }

        let mut h = h0;
        for layer in 1..=cfg.num_layers {
            let input = tape.dropout(h, cfg.dropout, training)?;
            let w = param_vars[self.params.conv_index(layer, 0)];
            h = match cfg.model_kind {
                ModelKind::Gcn | ModelKind::GcnDropEdge => gcn_layer(tape, input, prop, w)?,
                ModelKind::GcnRes => gcn_res_layer(tape, input, prop, w)?,
                ModelKind::Gcnii => {
                    let residual = if cfg.use_initial_residual { h0 } else { input };
                    gcnii_layer(tape, input, residual, prop, w, cfg.alpha, cfg.beta(layer))?
                }
                ModelKind::GcniiStar => {
                    let residual = if cfg.use_initial_residual { h0 } else { input };
                    let w2 = param_vars[self.params.conv_index(layer, 1)];
                    gcnii_star_layer(tape, input, residual, prop, w, w2, cfg.alpha, cfg.beta(layer))?
                }
                ModelKind::Appnp => unreachable!("handled above"),
            };
        }
        let h = tape.dropout(h, cfg.dropout, training)?;
        let logits = tape.matmul(h, param_vars[cls])?;
        let logits = tape.add_row_bias(logits, param_vars[cls + 1])?;
        let log_probs = tape.log_softmax_rows(logits)?;
        Ok(ForwardPass { log_probs, param_vars })
    }

    /// Evaluation-mode log-probabilities on a throwaway tape.
    pub fn log_probs(&self, features: &Arc<Matrix>, prop: &Arc<PropMatrix>) -> Result<Matrix, TensorError> {
        let mut tape = Tape::new(rng::stream(self.config.seed, rng::STREAM_DROPOUT));
        let pass = self.forward(&mut tape, features, prop, false)?;
        Ok(tape.value(pass.log_probs).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{load_graph, renormalized_operator, CsrGraph};
    use alloc::vec;

    fn tape() -> Tape {
        Tape::new(rng::stream(5, rng::STREAM_DROPOUT))
    }

    fn rand_matrix(rows: usize, cols: usize, seed: u64, nonneg: bool) -> Matrix {
        let mut r = rng::stream(seed, 7);
        Matrix::from_fn(rows, cols, |_, _| {
            let u: f64 = r.random();
            if nonneg {
                u
            } else {
                2.0 * u - 1.0
            }
        })
    }

    fn toy_graph() -> CsrGraph {
        load_graph(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)], 6).unwrap()
    }

    #[test]
    fn beta_schedule_values() {
        assert_eq!(beta_schedule(1, 0.0), 0.0);
        assert_eq!(beta_schedule(17, 0.0), 0.0);
        // ln(1.5) to 20 digits: 0.40546510810816438198
        assert!((beta_schedule(1, 0.5) - 0.405_465_108_108_164_4).abs() < 1e-15);
        // ln(1+x) = x - x²/2 + ..., |error| ≤ x²/2 ≈ 3.05e-5 for x = 0.5/64
        assert!((beta_schedule(64, 0.5) - 0.5 / 64.0).abs() < 5e-5);
    }

    #[test]
    fn gcn_layer_examples() {
        let g = load_graph(&[(0, 1)], 2).unwrap();
        let p = Arc::new(renormalized_operator(&g));
        let mut t = tape();
        let h = t.constant(Matrix::column(&[1.0, 0.0]));
        let w = t.constant(Matrix::filled(1, 1, 1.0));
        let out = gcn_layer(&mut t, h, &p, w).unwrap();
        assert_eq!(t.value(out).as_slice(), &[0.5, 0.5]);

        let p = Arc::new(renormalized_operator(&toy_graph()));
        let hm = rand_matrix(6, 3, 1, true);
        let h = t.constant(hm.clone());
        let id = t.constant(Matrix::identity(3));
        let out = gcn_layer(&mut t, h, &p, id).unwrap();
        assert!(t.value(out).max_abs_diff(&p.multiply(&hm)) < 1e-15);

        let wm = rand_matrix(3, 3, 2, false);
        let w = t.constant(wm.clone());
        let out = gcn_layer(&mut t, h, &p, w).unwrap();
        let dense = p.to_dense().matmul(&hm).matmul(&wm).map(|v| v.max(0.0));
        assert!(t.value(out).max_abs_diff(&dense) < 1e-12);
    }

    /// Scalar-loop evaluation of a GCNII layer.
    fn gcnii_oracle(p: &Matrix, h: &Matrix, h0: &Matrix, w: &Matrix, alpha: f64, beta: f64) -> Matrix {
        let (n, d) = h.shape();
        let mut support = Matrix::zeros(n, d);
        for i in 0..n {
            for c in 0..d {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += p.get(i, j) * h.get(j, c);
                }
                support.set(i, c, (1.0 - alpha) * acc + alpha * h0.get(i, c));
            }
        }
        Matrix::from_fn(n, d, |i, c| {
            let mut mixed = 0.0;
            for k in 0..d {
                mixed += support.get(i, k) * w.get(k, c);
            }
            ((1.0 - beta) * support.get(i, c) + beta * mixed).max(0.0)
        })
    }

    #[test]
    fn gcnii_layer_reductions_and_oracle() {
        let p = Arc::new(renormalized_operator(&toy_graph()));
        let hm = rand_matrix(6, 4, 3, true);
        let h0m = rand_matrix(6, 4, 4, true);
        let wm = rand_matrix(4, 4, 5, false);
        let mut t = tape();
        let (h, h0, w) = (t.constant(hm.clone()), t.constant(h0m.clone()), t.constant(wm.clone()));

        let out = gcnii_layer(&mut t, h, h0, &p, w, 0.0, 0.0).unwrap();
        assert!(t.value(out).max_abs_diff(&p.multiply(&hm)) < 1e-15);

        // beta = 0 and h = h0: one APPNP step
        let out = gcnii_layer(&mut t, h, h, &p, w, 0.1, 0.0).unwrap();
        let mut appnp = p.multiply(&hm);
        appnp.scale_in_place(0.9);
        appnp.add_assign_scaled(&hm, 0.1);
        assert!(t.value(out).max_abs_diff(&appnp) < 1e-15);

        let hm_signed = rand_matrix(6, 4, 6, false);
        let hs = t.constant(hm_signed.clone());
        let out = gcnii_layer(&mut t, hs, h0, &p, w, 0.1, 0.4).unwrap();
        let want = gcnii_oracle(&p.to_dense(), &hm_signed, &h0m, &wm, 0.1, 0.4);
        assert!(t.value(out).max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn gcnii_star_layer_examples() {
        let p = Arc::new(renormalized_operator(&toy_graph()));
        let hm = rand_matrix(6, 4, 7, true);
        let h0m = rand_matrix(6, 4, 8, false);
        let w1m = rand_matrix(4, 4, 9, false);
        let w2m = rand_matrix(4, 4, 10, false);
        let mut t = tape();
        let (h, h0, w1, w2) = (
            t.constant(hm.clone()),
            t.constant(h0m.clone()),
            t.constant(w1m.clone()),
            t.constant(w2m.clone()),
        );

        let star = gcnii_star_layer(&mut t, h, h, &p, w1, w1, 0.1, 0.0).unwrap();
        let plain = gcnii_layer(&mut t, h, h, &p, w1, 0.1, 0.0).unwrap();
        assert!(t.value(star).max_abs_diff(t.value(plain)) < 1e-15);

        let only_initial = gcnii_star_layer(&mut t, h, h0, &p, w1, w2, 1.0, 0.3).unwrap();
        let want = Matrix::from_fn(6, 4, |i, c| {
            let mixed: f64 = (0..4).map(|k| h0m.get(i, k) * w2m.get(k, c)).sum();
            (0.7 * h0m.get(i, c) + 0.3 * mixed).max(0.0)
        });
        assert!(t.value(only_initial).max_abs_diff(&want) < 1e-12);

        let out = gcnii_star_layer(&mut t, h, h0, &p, w1, w2, 0.2, 0.6).unwrap();
        let pd = p.to_dense();
        let want = Matrix::from_fn(6, 4, |i, c| {
            let ph = |r: usize, k: usize| (0..6).map(|j| pd.get(r, j) * hm.get(j, k)).sum::<f64>();
            let mix = |src: &dyn Fn(usize, usize) -> f64, wm: &Matrix| {
                let m: f64 = (0..4).map(|k| src(i, k) * wm.get(k, c)).sum();
                0.4 * src(i, c) + 0.6 * m
            };
            let smooth = mix(&ph, &w1m);
            let initial = mix(&|r, k| h0m.get(r, k), &w2m);
            (0.8 * smooth + 0.2 * initial).max(0.0)
        });
        assert!(t.value(out).max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn appnp_propagation_examples() {
        let p = Arc::new(renormalized_operator(&toy_graph()));
        let hm = rand_matrix(6, 3, 11, false);
        let mut t = tape();
        let h = t.constant(hm.clone());

        let one = appnp_propagate(&mut t, h, &p, 0.0, 1).unwrap();
        assert!(t.value(one).max_abs_diff(&p.multiply(&hm)) < 1e-15);

        let other = Arc::new(renormalized_operator(&CsrGraph::empty(6)));
        let a = appnp_propagate(&mut t, h, &p, 1.0, 5).unwrap();
        let b = appnp_propagate(&mut t, h, &other, 1.0, 5).unwrap();
        assert_eq!(t.value(a), t.value(b));

        // Dense recursion of H <- 0.9 P H + 0.1 H0, ten steps.
        let pd = p.to_dense();
        let mut dense = hm.clone();
        for _ in 0..10 {
            let mut next = pd.matmul(&dense);
            next.scale_in_place(0.9);
            next.add_assign_scaled(&hm, 0.1);
            dense = next;
        }
        let ten = appnp_propagate(&mut t, h, &p, 0.1, 10).unwrap();
        assert!(t.value(ten).max_abs_diff(&dense) < 1e-12);
    }

    #[test]
    fn gcnii_reduces_to_appnp_recursion_for_beta_zero() {
        let p = Arc::new(renormalized_operator(&toy_graph()));
        let h0m = rand_matrix(6, 5, 12, true);
        let mut t = tape();
        let h0 = t.constant(h0m.clone());
        let mut h = h0;
        for _ in 0..8 {
            let w = t.constant(rand_matrix(5, 5, 13, false));
            h = gcnii_layer(&mut t, h, h0, &p, w, 0.1, 0.0).unwrap();
        }
        let appnp = appnp_propagate(&mut t, h0, &p, 0.1, 8).unwrap();
        assert!(t.value(h).max_abs_diff(t.value(appnp)) < 1e-12);
    }

    #[test]
    fn relu_is_transparent_for_nonnegative_inputs_and_weights() {
        let p = Arc::new(renormalized_operator(&toy_graph()));
        let hm = rand_matrix(6, 3, 14, true);
        let wm = rand_matrix(3, 3, 15, true);
        let mut t = tape();
        let (h, w) = (t.constant(hm.clone()), t.constant(wm.clone()));
        let out = gcn_layer(&mut t, h, &p, w).unwrap();
        let linear = p.multiply(&hm).matmul(&wm);
        assert_eq!(t.value(out), &linear);
    }

    fn toy_features() -> Arc<Matrix> {
        Arc::new(rand_matrix(6, 4, 16, true))
    }

    fn small_config(kind: ModelKind) -> ModelConfig {
        ModelConfig {
            model_kind: kind,
            num_layers: 2,
            hidden_dim: 5,
            dropout: 0.5,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn every_kind_produces_normalized_rows() {
        let p = Arc::new(renormalized_operator(&toy_graph()));
        let x = toy_features();
        for kind in ModelKind::ALL {
            let model = Model::new(small_config(kind), 4, 3).unwrap();
            let lp = model.log_probs(&x, &p).unwrap();
            assert_eq!(lp.shape(), (6, 3));
            for i in 0..6 {
                let s: f64 = lp.row(i).iter().map(|v| v.exp()).sum();
                assert!((s - 1.0).abs() < 1e-12, "{kind:?}");
            }
            assert_eq!(lp, model.log_probs(&x, &p).unwrap());
        }
    }

    #[test]
    fn ablated_gcnii_equals_vanilla_gcn_stack() {
        let p = Arc::new(renormalized_operator(&toy_graph()));
        let x = toy_features();
        let ablated = ModelConfig {
            alpha: 0.0,
            use_initial_residual: false,
            use_identity_map: false,
            ..small_config(ModelKind::Gcnii)
        };
        let a = Model::new(ablated.clone(), 4, 3).unwrap();
        let b = Model {
            config: ModelConfig {
                model_kind: ModelKind::Gcn,
                ..ablated
            },
            params: a.params.clone(),
        };
        let la = a.log_probs(&x, &p).unwrap();
        let lb = b.log_probs(&x, &p).unwrap();
        assert_eq!(la.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   lb.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn parameter_counts() {
        let (d, h, c, k) = (7, 5, 3, 4);
        let base = ModelConfig {
            num_layers: k,
            hidden_dim: h,
            ..ModelConfig::default()
        };
        let gcnii = Model::new(base.clone(), d, c).unwrap();
        assert_eq!(gcnii.params.scalar_count(), d * h + h * h * k + h * c + h + c);
        let star = Model::new(
            ModelConfig {
                model_kind: ModelKind::GcniiStar,
                ..base.clone()
            },
            d,
            c,
        )
        .unwrap();
        assert_eq!(star.params.scalar_count(), d * h + 2 * h * h * k + h * c + h + c);
        assert!(gcnii.params.params.iter().skip(2).take(k).all(|p| p.group == ParamGroup::Conv));
        assert_eq!(gcnii.params.params[0].group, ParamGroup::Dense);
        assert_eq!(gcnii.params.params[gcnii.params.classifier_index()].group, ParamGroup::Dense);
    }

    #[test]
    fn glorot_bound_and_determinism() {
        let a = glorot_uniform(10, 20, &mut rng::stream(1, 0));
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(a.as_slice().iter().all(|v| v.abs() <= bound));
        assert_eq!(a, glorot_uniform(10, 20, &mut rng::stream(1, 0)));
    }

    #[test]
    fn config_validation() {
        let ok = ModelConfig::default();
        assert!(ok.validate().is_ok());
        let cases = vec![
            (ModelConfig { num_layers: 0, ..ok.clone() }, ConfigError::NoLayers),
            (ModelConfig { alpha: 1.5, ..ok.clone() }, ConfigError::Alpha(1.5)),
            (ModelConfig { lambda: -1.0, ..ok.clone() }, ConfigError::Lambda(-1.0)),
            (
                ModelConfig { dropout: 1.0, ..ok.clone() },
                ConfigError::Rate { name: "dropout", value: 1.0 },
            ),
            (ModelConfig { patience: 0, ..ok.clone() }, ConfigError::Patience),
        ];
        for (cfg, err) in cases {
            assert_eq!(cfg.validate(), Err(err));
        }
    }
}
