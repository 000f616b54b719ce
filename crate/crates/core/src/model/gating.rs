use pdgvd_autodiff::{Tape, Tensor, TensorError, Var};

/// How strongly each PDG edge (in the graph's edge order) participates in a
/// forward pass.
#[derive(Debug, Clone)]
pub enum EdgeGates {
    /// Every edge fully present.
    Full,
    /// Fixed gate values in `[0, 1]`; 0/1 vectors keep or drop edges.
    Hard(Vec<f64>),
    /// Logits on the tape; each gate is their sigmoid.
    Soft(Var),
}

impl EdgeGates {
    /// Combines the gates of the edges landing on each output cell as a
    /// noisy-or, `1 - prod(1 - g_e)`. `targets` pairs an edge index with a
    /// flat output position; cells nobody targets are 0.
    pub fn noisy_or(&self, tape: &mut Tape, targets: &[(usize, usize)], shape: &[usize]) -> Result<Var, TensorError> {
        let numel: usize = shape.iter().product();
        let fixed = |gate: &dyn Fn(usize) -> f64| -> Result<Tensor, TensorError> {
            let mut keep = vec![1.0; numel];
            for &(e, d) in targets {
                keep[d] *= 1.0 - gate(e);
            }
            Tensor::new(shape.to_vec(), keep.into_iter().map(|q| 1.0 - q).collect())
        };
        match self {
            EdgeGates::Full => Ok(tape.constant(fixed(&|_| 1.0)?)),
            EdgeGates::Hard(g) => {
                if let Some(&(e, _)) = targets.iter().find(|(e, _)| *e >= g.len()) {
                    return Err(TensorError::IndexOutOfRange { index: e, len: g.len() });
                }
                Ok(tape.constant(fixed(&|e| g[e])?))
            }
            EdgeGates::Soft(logits) => {
                // log(1 - sigmoid(m)) = log(sigmoid(-m))
                let neg = tape.neg(*logits);
                let s = tape.sigmoid(neg);
                let log_q = tape.log(s);
                let sum = tape.scatter_flat(log_q, targets, shape)?;
                let q = tape.exp(sum);
                Ok(tape.one_minus(q))
            }
        }
    }
}
