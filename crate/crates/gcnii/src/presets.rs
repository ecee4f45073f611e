//! Published hyperparameter settings.

use gcnii_core::{ModelConfig, ModelKind};

/// GCNII, Cora, semi-supervised: 64 layers, α 0.1, λ 0.5, hidden 64,
/// dropout 0.6, L2 0.01 on graph layers and 5e-4 on dense layers.
pub fn cora_semi() -> ModelConfig {
    ModelConfig::default()
}

/// GCNII, Citeseer, semi-supervised.
pub fn citeseer_semi() -> ModelConfig {
    ModelConfig {
        num_layers: 32,
        hidden_dim: 256,
        lambda: 0.6,
        dropout: 0.7,
        ..ModelConfig::default()
    }
}

/// GCNII, Pubmed, semi-supervised.
pub fn pubmed_semi() -> ModelConfig {
    ModelConfig {
        num_layers: 16,
        hidden_dim: 256,
        lambda: 0.4,
        dropout: 0.5,
        wd_conv: 5e-4,
        ..ModelConfig::default()
    }
}

/// GCNII, Cornell, full-supervised. A single L2 value covers both groups.
pub fn cornell_full() -> ModelConfig {
    ModelConfig {
        num_layers: 16,
        alpha: 0.5,
        lambda: 1.0,
        hidden_dim: 64,
        dropout: 0.5,
        wd_conv: 1e-3,
        wd_dense: 1e-3,
        ..ModelConfig::default()
    }
}

/// Plain GCN stack: hidden 64, dropout 0.5, L2 5e-4 everywhere.
pub fn gcn_baseline(layers: usize) -> ModelConfig {
    ModelConfig {
        model_kind: ModelKind::Gcn,
        num_layers: layers,
        hidden_dim: 64,
        dropout: 0.5,
        wd_conv: 5e-4,
        wd_dense: 5e-4,
        ..ModelConfig::default()
    }
}
