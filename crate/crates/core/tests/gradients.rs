use std::sync::Arc;

use gcnii_core::gradcheck::check_model_gradients;
use gcnii_core::graph::{load_graph, renormalized_operator};
use gcnii_core::rng;
use gcnii_core::{Matrix, Model, ModelConfig, ModelKind};
use rand::Rng;

fn toy() -> (Arc<Matrix>, Arc<gcnii_core::PropMatrix>, Vec<usize>) {
    let g = load_graph(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)], 6).unwrap();
    let mut r = rng::stream(99, 0);
    let x = Matrix::from_fn(6, 4, |_, _| r.random::<f64>());
    (Arc::new(x), Arc::new(renormalized_operator(&g)), vec![0, 1, 2, 0, 1, 2])
}

fn config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        model_kind: kind,
        num_layers: 2,
        hidden_dim: 5,
        dropout: 0.3,
        seed: 3,
        ..ModelConfig::default()
    }
}

#[test]
fn two_layer_gcnii_gradients_match_finite_differences() {
    let (x, p, labels) = toy();
    let model = Model::new(config(ModelKind::Gcnii), 4, 3).unwrap();
    let check = check_model_gradients(&model, &x, &p, &labels, &[0, 1, 2, 3], 7, 1e-5, 1e-6).unwrap();
    assert_eq!(check.entries, model.params.scalar_count());
    assert!(check.max_relative_error <= 1e-4, "{check:?}");
}

#[test]
fn every_model_kind_passes_the_gradient_check() {
    let (x, p, labels) = toy();
    for kind in ModelKind::ALL {
        let model = Model::new(config(kind), 4, 3).unwrap();
        let check = check_model_gradients(&model, &x, &p, &labels, &[0, 2, 4, 5], 11, 1e-5, 1e-6).unwrap();
        assert!(check.max_relative_error <= 1e-4, "{kind:?}: {check:?}");
    }
}

#[test]
fn ablated_gcnii_passes_the_gradient_check() {
    let (x, p, labels) = toy();
    for (residual, identity) in [(false, true), (true, false), (false, false)] {
        let cfg = ModelConfig {
            use_initial_residual: residual,
            use_identity_map: identity,
            ..config(ModelKind::Gcnii)
        };
        let model = Model::new(cfg, 4, 3).unwrap();
        let check = check_model_gradients(&model, &x, &p, &labels, &[1, 3, 5], 13, 1e-5, 1e-6).unwrap();
        assert!(check.max_relative_error <= 1e-4, "{check:?}");
    }
}
