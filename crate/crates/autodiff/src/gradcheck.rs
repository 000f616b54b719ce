//! Central finite-difference checks for every operation on the tape.

use rand::Rng as _;

use crate::error::Result;
use crate::rng::{seeded, Rng};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Step used for central differences.
pub const FD_EPS: f64 = 1e-5;
/// Accepted relative error between analytic and numeric gradients.
pub const REL_TOL: f64 = 1e-4;

/// A differentiable function of a fixed list of inputs, rebuilt on a fresh
/// tape for every evaluation.
pub type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;

/// `‖a − n‖ / (‖a‖ + ‖n‖)` between the analytic gradient of
/// `sum(f(inputs) ⊙ R)` and its central-difference estimate, where `R` is a
/// fixed random weighting of the outputs. Zero when both gradients vanish.
pub fn relative_error(inputs: &[Tensor], f: &Build<'_>, rng: &mut Rng) -> Result<f64> {
    let out_shape = {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
        let out = f(&mut t, &vars)?;
        t.shape(out).to_vec()
    };
    let n_out: usize = out_shape.iter().product();
    let weights = Tensor::new(
        out_shape.clone(),
        (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;

    let loss_of = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
        let out = f(tape, vars)?;
        let w = tape.constant(weights.clone());
        let weighted = tape.mul(out, w)?;
        Ok(tape.sum(weighted))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|x| tape.leaf(x.clone().with_requires_grad(true)))
        .collect();
    let loss = loss_of(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut diff2 = 0.0;
    let mut an2 = 0.0;
    let mut nu2 = 0.0;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[k])
            .map(Tensor::into_data)
            .unwrap_or_else(|| vec![0.0; x.numel()]);
        for i in 0..x.numel() {
            let eval = |delta: f64| -> Result<f64> {
                let mut t = Tape::new();
                let vs: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, y)| {
                        let mut y = y.clone();
                        if j == k {
                            y.data_mut()[i] += delta;
                        }
                        t.constant(y)
                    })
                    .collect();
                let l = loss_of(&mut t, &vs)?;
                Ok(t.value(l).data()[0])
            };
            let numeric = (eval(FD_EPS)? - eval(-FD_EPS)?) / (2.0 * FD_EPS);
            diff2 += (analytic[i] - numeric).powi(2);
            an2 += analytic[i].powi(2);
            nu2 += numeric.powi(2);
        }
    }
    let denom = an2.sqrt() + nu2.sqrt();
    Ok(if denom < 1e-12 { 0.0 } else { diff2.sqrt() / denom })
}

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect())
        .expect("consistent shape")
}

/// Values bounded away from zero so kinks are never straddled.
fn away_from_zero(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..2.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

/// One registered operation: how to draw its inputs and how to apply it.
pub struct OpCase {
    pub name: &'static str,
    pub inputs: fn(&mut Rng) -> Vec<Tensor>,
    pub apply: fn(&mut Tape, &[Var]) -> Result<Var>,
}

pub fn registered_ops() -> Vec<OpCase> {
    fn m34(r: &mut Rng) -> Vec<Tensor> {
        vec![uniform(r, &[3, 4], -1.0, 1.0)]
    }
    fn two34(r: &mut Rng) -> Vec<Tensor> {
        vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[3, 4], -1.0, 1.0)]
    }
    fn row_bcast(r: &mut Rng) -> Vec<Tensor> {
        vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[1, 4], -1.0, 1.0)]
    }
    vec![
        OpCase {
            name: "matmul",
            inputs: |r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[4, 2], -1.0, 1.0)],
            apply: |t, v| t.matmul(v[0], v[1]),
        },
        OpCase { name: "add", inputs: two34, apply: |t, v| t.add(v[0], v[1]) },
        OpCase { name: "add_broadcast", inputs: row_bcast, apply: |t, v| t.add(v[0], v[1]) },
        OpCase { name: "sub", inputs: row_bcast, apply: |t, v| t.sub(v[0], v[1]) },
        OpCase { name: "mul", inputs: two34, apply: |t, v| t.mul(v[0], v[1]) },
        OpCase { name: "mul_broadcast", inputs: row_bcast, apply: |t, v| t.mul(v[0], v[1]) },
        OpCase {
            name: "div",
            inputs: |r| vec![uniform(r, &[3, 4], -1.0, 1.0), away_from_zero(r, &[3, 4])],
            apply: |t, v| t.div(v[0], v[1]),
        },
        OpCase { name: "add_scalar", inputs: m34, apply: |t, v| Ok(t.add_scalar(v[0], 0.7)) },
        OpCase { name: "scale", inputs: m34, apply: |t, v| Ok(t.scale(v[0], -1.3)) },
        OpCase { name: "neg", inputs: m34, apply: |t, v| Ok(t.neg(v[0])) },
        OpCase {
            name: "concat_rows",
            inputs: |r| vec![uniform(r, &[2, 3], -1.0, 1.0), uniform(r, &[1, 3], -1.0, 1.0)],
            apply: |t, v| t.concat(v, 0),
        },
        OpCase {
            name: "concat_cols",
            inputs: |r| vec![uniform(r, &[2, 3], -1.0, 1.0), uniform(r, &[2, 1], -1.0, 1.0)],
            apply: |t, v| t.concat(v, 1),
        },
        OpCase { name: "slice_rows", inputs: m34, apply: |t, v| t.slice(v[0], 0, 1, 2) },
        OpCase { name: "slice_cols", inputs: m34, apply: |t, v| t.slice(v[0], 1, 1, 2) },
        OpCase { name: "sum", inputs: m34, apply: |t, v| Ok(t.sum(v[0])) },
        OpCase { name: "mean", inputs: m34, apply: |t, v| Ok(t.mean(v[0])) },
        OpCase { name: "sum_axis0", inputs: m34, apply: |t, v| t.sum_axis(v[0], 0) },
        OpCase { name: "sum_axis1", inputs: m34, apply: |t, v| t.sum_axis(v[0], 1) },
        OpCase { name: "sigmoid", inputs: m34, apply: |t, v| Ok(t.sigmoid(v[0])) },
        OpCase { name: "tanh", inputs: m34, apply: |t, v| Ok(t.tanh(v[0])) },
        OpCase {
            name: "relu",
            inputs: |r| vec![away_from_zero(r, &[3, 4])],
            apply: |t, v| Ok(t.relu(v[0])),
        },
        OpCase { name: "exp", inputs: m34, apply: |t, v| Ok(t.exp(v[0])) },
        OpCase {
            name: "log",
            inputs: |r| vec![uniform(r, &[3, 4], 0.5, 2.0)],
            apply: |t, v| Ok(t.log(v[0])),
        },
        OpCase { name: "softmax_rows", inputs: m34, apply: |t, v| t.softmax(v[0], 1) },
        OpCase { name: "softmax_cols", inputs: m34, apply: |t, v| t.softmax(v[0], 0) },
        OpCase { name: "transpose", inputs: m34, apply: |t, v| Ok(t.transpose(v[0])) },
        OpCase {
            name: "gather_rows",
            inputs: m34,
            apply: |t, v| t.gather_rows(v[0], &[2, 0, 2, 1]),
        },
        OpCase {
            name: "scatter_sum_rows",
            inputs: m34,
            apply: |t, v| t.scatter_sum_rows(v[0], &[1, 0, 1], 2),
        },
        OpCase { name: "max_rows", inputs: m34, apply: |t, v| t.max_rows(v[0], 0, 3) },
        OpCase {
            name: "scatter_flat",
            inputs: |r| vec![uniform(r, &[3, 1], -1.0, 1.0)],
            apply: |t, v| t.scatter_flat(v[0], &[(0, 1), (0, 2), (2, 3), (1, 0)], &[2, 2]),
        },
        OpCase {
            name: "scale_rows",
            inputs: |r| vec![uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[3, 1], -1.0, 1.0)],
            apply: |t, v| t.scale_rows(v[0], v[1]),
        },
    ]
}

#[derive(Debug, Clone)]
pub struct OpReport {
    pub name: &'static str,
    pub worst_rel_err: f64,
    pub passed: bool,
}

/// Checks each registered op on `seeds` independent random inputs.
pub fn check_registered_ops(seeds: u64) -> Result<Vec<OpReport>> {
    registered_ops()
        .into_iter()
        .map(|case| {
            let mut worst: f64 = 0.0;
            for seed in 0..seeds {
                let mut rng = seeded(seed);
                let inputs = (case.inputs)(&mut rng);
                let err = relative_error(&inputs, &case.apply, &mut rng)?;
                worst = worst.max(err);
            }
            Ok(OpReport {
                name: case.name,
                worst_rel_err: worst,
                passed: worst < REL_TOL,
            })
        })
        .collect()
}
