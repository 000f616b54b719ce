//! Finite-difference check of the whole detection loss, and of the
//! explainer loss through soft edge gates, on a deliberately small model.

use pdgvd_autodiff::gradcheck::relative_error;
use pdgvd_autodiff::{seeded, Bound, Tensor};
use rand::Rng as _;

use super::{forward, nll, DetectionModel, EdgeGates, ModelConfig, Result};
use crate::encoders::EncoderConfig;
use crate::features::FeatureConfig;
use crate::frontend::parse_source;

const METHOD: &str = "int f(int n, char *buf) {
    int len = n;
    if (len > 8) len = 8;
    memcpy(buf, src, len);
    return len;
}";

pub fn small_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            embed_dim: 2,
            gru_hidden: 2,
            tree_hidden: 2,
            attn_hidden: 2,
            summary_dim: 2,
            stmt_dim: 2,
        },
        features: FeatureConfig {
            max_subtokens: 3,
            max_var_tokens: 3,
            max_context: 3,
        },
        gcn_dim: 2,
        fc_hidden: [2, 2],
        min_count: 1,
    }
}

/// Relative error of the cross-entropy gradient with respect to every
/// parameter, for a model initialised from `seed`. With `soft_gates`, the
/// edge-mask logits are inputs too.
pub fn detection_loss_error(seed: u64, soft_gates: bool) -> Result<f64> {
    let g = parse_source(METHOD)?.remove(0);
    let model = DetectionModel::for_corpus(small_config(), [&g], seed)?;
    let x = model.prepare(&g);
    let names: Vec<String> = model.params.params().iter().map(|p| p.name.clone()).collect();
    let mut rng = seeded(seed ^ 0x5eed);
    // Zero biases behind an all-zero input put a ReLU exactly on its kink,
    // where central differences see half a slope.
    let mut inputs: Vec<Tensor> = model
        .params
        .params()
        .iter()
        .map(|p| {
            let mut v = p.value.clone();
            if p.name.ends_with(".b") {
                v.data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            }
            v
        })
        .collect();
    if soft_gates {
        let logits = (0..x.edge_count()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        inputs.push(Tensor::vector(logits));
    }
    let vulnerable = seed % 2 == 0;
    let build = |tape: &mut pdgvd_autodiff::Tape, vars: &[pdgvd_autodiff::Var]| {
        let p = Bound::from_pairs(names.iter().cloned().zip(vars.iter().copied()));
        let gates = if soft_gates { EdgeGates::Soft(vars[names.len()]) } else { EdgeGates::Full };
        let probs = forward(tape, &p, &x, &gates)?;
        nll(tape, probs, vulnerable)
    };
    Ok(relative_error(&inputs, &build, &mut rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pdgvd_autodiff::gradcheck::REL_TOL;

    #[test]
    fn detection_loss_gradient() {
        let e = detection_loss_error(1, false).unwrap();
        assert!(e < REL_TOL, "{e}");
        let e = detection_loss_error(2, true).unwrap();
        assert!(e < REL_TOL, "{e}");
    }
}
