//! Operation tape and reverse-mode differentiation.
//!
//! Every operation appends one node holding its value and the handles of its
//! inputs. Nodes are created in topological order by construction, so the
//! backward pass is a single reverse sweep that visits each node once.

use crate::error::{mismatch, Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::{rows_cols, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Neg(Var),
    Softmax(Var, usize),
    Transpose(Var),
    GatherRows(Var, Vec<usize>),
    ScatterSumRows(Var, Vec<usize>),
    /// Per column, the rows holding the maximum.
    MaxRows(Var, Vec<Vec<usize>>),
    ScatterFlat(Var, Vec<(usize, usize)>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
    param: Option<usize>,
}

/// Record of the forward computation. Confined to one thread.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(usize, Var)>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<Tensor> {
        let g = self.grads.get(var.0)?.as_ref()?;
        Tensor::new(self.shapes[var.0].clone(), g.clone()).ok()
    }

    /// Adds the gradient of every bound parameter into `store`. Parameters
    /// that were bound but did not influence the loss receive zeros.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(id, var) in &self.params {
            match &self.grads[var.0] {
                Some(g) => store.add_grad(id, g),
                None => store.add_grad(id, &vec![0.0; self.shapes[var.0].iter().product()]),
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Adds an input tensor. It is differentiated iff `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let tracked = value.requires_grad();
        self.push(value, Op::Leaf, tracked)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value.with_requires_grad(false), Op::Leaf, false)
    }

    pub(crate) fn bind_param(&mut self, value: Tensor, id: usize, trainable: bool) -> Var {
        let var = self.push(value, Op::Leaf, trainable);
        if trainable {
            self.nodes[var.0].param = Some(id);
        }
        var
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            tracked,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    fn emit(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        debug_assert!(
            !inputs.iter().all(|v| self.nodes[v.0].value.is_finite())
                || data.iter().all(|x| x.is_finite()),
            "non-finite output from {op:?}"
        );
        let tracked = self.tracked(inputs);
        let value = Tensor::new(shape, data).expect("op produced consistent shape");
        self.push(value, op, tracked)
    }

    // ---- forward ops -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).rows_cols();
        let (k2, n) = self.value(b).rows_cols();
        if k != k2 {
            return Err(mismatch(&[k, n], &[k2, n]));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            &mut out,
        );
        Ok(self.emit(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    fn check_binary(&self, a: Var, b: Var) -> Result<bool> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb {
            return Ok(false);
        }
        let (ra, ca) = rows_cols(sa);
        let (rb, cb) = rows_cols(sb);
        if rb == 1 && cb == ca && ra > 1 {
            Ok(true)
        } else {
            Err(mismatch(sa, sb))
        }
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let broadcast = self.check_binary(a, b)?;
        let va = self.value(a);
        let vb = self.value(b).data();
        let cols = va.cols();
        let data: Vec<f64> = if broadcast {
            va.data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, vb[i % cols]))
                .collect()
        } else {
            va.data().iter().zip(vb).map(|(&x, &y)| f(x, y)).collect()
        };
        let shape = va.shape().to_vec();
        Ok(self.emit(shape, data, op, &[a, b]))
    }

    /// Elementwise sum. `b` may be a single row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.neg(a);
        self.add_scalar(n, 1.0)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| f(x)).collect();
        let shape = va.shape().to_vec();
        self.emit(shape, data, op, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.emit(vec![1], vec![s], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.numel() as f64;
        self.emit(vec![1], vec![s], Op::Mean(a), &[a])
    }

    /// Sum over `axis` of a matrix: axis 0 gives `[1, cols]`, axis 1 gives `[rows, 1]`.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = self.value(a);
        let (r, c) = v.rows_cols();
        let d = v.data();
        let (shape, data) = match axis {
            0 => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        out[j] += d[i * c + j];
                    }
                }
                (vec![1, c], out)
            }
            1 => {
                let out = (0..r).map(|i| d[i * c..(i + 1) * c].iter().sum()).collect();
                (vec![r, 1], out)
            }
            _ => return Err(mismatch(&[r, c], &[axis])),
        };
        Ok(self.emit(shape, data, Op::SumAxis(a, axis), &[a]))
    }

    /// Softmax along `axis` (ignored for one-dimensional inputs).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = self.value(a);
        let shape = v.shape().to_vec();
        let groups = softmax_groups(&shape, axis)?;
        let mut out = vec![0.0; v.numel()];
        let d = v.data();
        for g in &groups {
            let max = g.iter().map(|&i| d[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &i in g {
                let e = (d[i] - max).exp();
                out[i] = e;
                z += e;
            }
            for &i in g {
                out[i] /= z;
            }
        }
        Ok(self.emit(shape, out, Op::Softmax(a, axis), &[a]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let (r, c) = match v.shape() {
            [n] => (*n, 1),
            _ => v.rows_cols(),
        };
        let (r0, c0) = v.rows_cols();
        let d = v.data();
        let mut out = vec![0.0; r0 * c0];
        for i in 0..r0 {
            for j in 0..c0 {
                out[j * r0 + i] = d[i * c0 + j];
            }
        }
        let shape = if v.shape().len() == 1 { vec![r, c] } else { vec![c0, r0] };
        self.emit(shape, out, Op::Transpose(a), &[a])
    }

    /// Joins tensors along `axis`. One-dimensional inputs joined on axis 0
    /// stay one-dimensional.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        if inputs.is_empty() {
            return Err(mismatch(&[1], &[0]));
        }
        let all_1d = inputs.iter().all(|&v| self.shape(v).len() == 1);
        let (shape, data) = if all_1d && axis == 0 {
            let data: Vec<f64> = inputs
                .iter()
                .flat_map(|&v| self.value(v).data().iter().copied())
                .collect();
            (vec![data.len()], data)
        } else if axis == 0 {
            let c = self.value(inputs[0]).cols();
            let mut data = Vec::new();
            let mut rows = 0;
            for &v in inputs {
                let t = self.value(v);
                if t.cols() != c {
                    return Err(mismatch(&[t.rows(), c], t.shape()));
                }
                rows += t.rows();
                data.extend_from_slice(t.data());
            }
            (vec![rows, c], data)
        } else if axis == 1 {
            let r = self.value(inputs[0]).rows();
            let mut total = 0;
            for &v in inputs {
                let t = self.value(v);
                if t.rows() != r {
                    return Err(mismatch(&[r, t.cols()], t.shape()));
                }
                total += t.cols();
            }
            let mut data = vec![0.0; r * total];
            let mut offset = 0;
            for &v in inputs {
                let t = self.value(v);
                let c = t.cols();
                for i in 0..r {
                    data[i * total + offset..i * total + offset + c].copy_from_slice(t.row(i));
                }
                offset += c;
            }
            (vec![r, total], data)
        } else {
            return Err(mismatch(&[0, 1], &[axis]));
        };
        Ok(self.emit(
            shape,
            data,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let v = self.value(a);
        let one_d = v.shape().len() == 1;
        let (r, c) = v.rows_cols();
        let d = v.data();
        let (shape, data) = match (one_d, axis) {
            (true, 0) => {
                check_range(start, len, c)?;
                (vec![len], d[start..start + len].to_vec())
            }
            (false, 0) => {
                check_range(start, len, r)?;
                (vec![len, c], d[start * c..(start + len) * c].to_vec())
            }
            (false, 1) => {
                check_range(start, len, c)?;
                let mut out = Vec::with_capacity(r * len);
                for i in 0..r {
                    out.extend_from_slice(&d[i * c + start..i * c + start + len]);
                }
                (vec![r, len], out)
            }
            _ => return Err(mismatch(v.shape(), &[axis])),
        };
        Ok(self.emit(shape, data, Op::Slice { input: a, axis, start }, &[a]))
    }

    /// Selects rows by index, repeating as needed.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let v = self.value(a);
        let (r, c) = v.rows_cols();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(TensorError::IndexOutOfRange { index: i, len: r });
            }
            out.extend_from_slice(v.row(i));
        }
        Ok(self.emit(vec![idx.len(), c], out, Op::GatherRows(a, idx.to_vec()), &[a]))
    }

    /// Sums row `i` into output row `group[i]`.
    pub fn scatter_sum_rows(&mut self, a: Var, group: &[usize], n_groups: usize) -> Result<Var> {
        let v = self.value(a);
        let (r, c) = v.rows_cols();
        if group.len() != r {
            return Err(mismatch(&[group.len(), c], &[r, c]));
        }
        let mut out = vec![0.0; n_groups * c];
        for (i, &g) in group.iter().enumerate() {
            if g >= n_groups {
                return Err(TensorError::IndexOutOfRange {
                    index: g,
                    len: n_groups,
                });
            }
            for j in 0..c {
                out[g * c + j] += v.data()[i * c + j];
            }
        }
        Ok(self.emit(
            vec![n_groups, c],
            out,
            Op::ScatterSumRows(a, group.to_vec()),
            &[a],
        ))
    }

    /// Column-wise maximum over rows `start..end`, as a `[1, cols]` row.
    /// Tied rows share the gradient equally.
    pub fn max_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(a);
        let (r, c) = v.rows_cols();
        if start >= end || end > r {
            return Err(TensorError::IndexOutOfRange { index: end, len: r });
        }
        let mut out = vec![f64::NEG_INFINITY; c];
        let mut arg = vec![Vec::new(); c];
        for i in start..end {
            for j in 0..c {
                let x = v.data()[i * c + j];
                if x > out[j] {
                    out[j] = x;
                    arg[j] = vec![i];
                } else if x == out[j] {
                    arg[j].push(i);
                }
            }
        }
        Ok(self.emit(vec![1, c], out, Op::MaxRows(a, arg), &[a]))
    }

    /// Builds a zero tensor of `shape` and adds `a.flat[src]` at flat
    /// position `dst` for each target pair.
    pub fn scatter_flat(
        &mut self,
        a: Var,
        targets: &[(usize, usize)],
        shape: &[usize],
    ) -> Result<Var> {
        let numel: usize = shape.iter().product();
        let v = self.value(a);
        let mut out = vec![0.0; numel];
        for &(s, d) in targets {
            if s >= v.numel() {
                return Err(TensorError::IndexOutOfRange {
                    index: s,
                    len: v.numel(),
                });
            }
            if d >= numel {
                return Err(TensorError::IndexOutOfRange { index: d, len: numel });
            }
            out[d] += v.data()[s];
        }
        Ok(self.emit(
            shape.to_vec(),
            out,
            Op::ScatterFlat(a, targets.to_vec()),
            &[a],
        ))
    }

    /// Multiplies each row of `x` by the matching entry of column `col`
    /// (`[rows, 1]`), expressed through a matmul against a ones row.
    pub fn scale_rows(&mut self, x: Var, col: Var) -> Result<Var> {
        let cols = self.value(x).cols();
        let ones = self.constant(Tensor::full(&[1, cols], 1.0));
        let expanded = self.matmul(col, ones)?;
        self.mul(x, expanded)
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let shapes = self.nodes[..=loss.0]
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        let params = self.nodes[..=loss.0]
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (p, Var(i))))
            .collect();
        Ok(Gradients {
            grads,
            shapes,
            params,
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].tracked {
                return;
            }
            let slot =
                grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).rows_cols();
                let n = self.value(*b).cols();
                let bd = self.value(*b).data();
                let ad = self.value(*a).data();
                acc(*a, &mut |ga| gemm(m, n, k, g, (n, 1), bd, (1, n), ga));
                acc(*b, &mut |gb| gemm(k, m, n, ad, (1, k), g, (n, 1), gb));
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                acc(*a, &mut |ga| add_into(ga, g));
                let cols = self.value(*b).numel();
                acc(*b, &mut |gb| {
                    for (i, &x) in g.iter().enumerate() {
                        gb[i % cols] += sign * x;
                    }
                });
            }
            Op::Mul(a, b) => {
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                let cols = bd.len();
                acc(*a, &mut |ga| {
                    for (i, &x) in g.iter().enumerate() {
                        ga[i] += x * bd[i % cols];
                    }
                });
                acc(*b, &mut |gb| {
                    for (i, &x) in g.iter().enumerate() {
                        gb[i % cols] += x * ad[i];
                    }
                });
            }
            Op::Div(a, b) => {
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                let cols = bd.len();
                acc(*a, &mut |ga| {
                    for (i, &x) in g.iter().enumerate() {
                        ga[i] += x / bd[i % cols];
                    }
                });
                acc(*b, &mut |gb| {
                    for (i, &x) in g.iter().enumerate() {
                        let y = bd[i % cols];
                        gb[i % cols] -= x * ad[i] / (y * y);
                    }
                });
            }
            Op::AddScalar(a) | Op::Neg(a) => {
                let sign = if matches!(node.op, Op::Neg(_)) { -1.0 } else { 1.0 };
                acc(*a, &mut |ga| {
                    for (x, &y) in ga.iter_mut().zip(g) {
                        *x += sign * y;
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| {
                for (x, &y) in ga.iter_mut().zip(g) {
                    *x += c * y;
                }
            }),
            Op::Sigmoid(a) => {
                let y = out.data();
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = out.data();
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                });
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        if x[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            Op::Exp(a) => {
                let y = out.data();
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * y[i];
                    }
                });
            }
            Op::Log(a) => {
                let x = self.value(*a).data();
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] / x[i];
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => {
                let n = self.value(*a).numel() as f64;
                acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::SumAxis(a, axis) => {
                let (_, c) = self.value(*a).rows_cols();
                acc(*a, &mut |ga| {
                    for (i, x) in ga.iter_mut().enumerate() {
                        *x += if *axis == 0 { g[i % c] } else { g[i / c] };
                    }
                });
            }
            Op::Softmax(a, axis) => {
                let y = out.data();
                let groups = softmax_groups(out.shape(), *axis).expect("validated in forward");
                acc(*a, &mut |ga| {
                    for grp in &groups {
                        let dot: f64 = grp.iter().map(|&i| g[i] * y[i]).sum();
                        for &i in grp {
                            ga[i] += y[i] * (g[i] - dot);
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (r, c) = self.value(*a).rows_cols();
                acc(*a, &mut |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let all_1d = inputs.iter().all(|&v| self.shape(v).len() == 1);
                let total_cols = out.cols();
                let mut offset = 0;
                for &v in inputs {
                    let t = self.value(v);
                    let n = t.numel();
                    if *axis == 0 || all_1d {
                        acc(v, &mut |gv| add_into(gv, &g[offset..offset + n]));
                        offset += n;
                    } else {
                        let (r, c) = t.rows_cols();
                        acc(v, &mut |gv| {
                            for i in 0..r {
                                for j in 0..c {
                                    gv[i * c + j] += g[i * total_cols + offset + j];
                                }
                            }
                        });
                        offset += c;
                    }
                }
            }
            Op::Slice { input, axis, start } => {
                let t = self.value(*input);
                let (r, c) = t.rows_cols();
                let one_d = t.shape().len() == 1;
                acc(*input, &mut |gi| {
                    if one_d || *axis == 0 {
                        let base = if one_d { *start } else { start * c };
                        add_into(&mut gi[base..base + g.len()], g);
                    } else {
                        let len = g.len() / r;
                        for i in 0..r {
                            for j in 0..len {
                                gi[i * c + start + j] += g[i * len + j];
                            }
                        }
                    }
                });
            }
            Op::GatherRows(a, idx) => {
                let c = self.value(*a).cols();
                acc(*a, &mut |ga| {
                    for (k, &i) in idx.iter().enumerate() {
                        add_into(&mut ga[i * c..(i + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                });
            }
            Op::ScatterSumRows(a, group) => {
                let c = self.value(*a).cols();
                acc(*a, &mut |ga| {
                    for (i, &grp) in group.iter().enumerate() {
                        add_into(&mut ga[i * c..(i + 1) * c], &g[grp * c..(grp + 1) * c]);
                    }
                });
            }
            Op::MaxRows(a, arg) => {
                let c = self.value(*a).cols();
                // Tied maxima share the gradient equally.
                acc(*a, &mut |ga| {
                    for (j, rows) in arg.iter().enumerate() {
                        let share = g[j] / rows.len() as f64;
                        for &i in rows {
                            ga[i * c + j] += share;
                        }
                    }
                });
            }
            Op::ScatterFlat(a, targets) => acc(*a, &mut |ga| {
                for &(s, d) in targets {
                    ga[s] += g[d];
                }
            }),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn check_range(start: usize, len: usize, bound: usize) -> Result<()> {
    if start + len > bound {
        Err(TensorError::IndexOutOfRange {
            index: start + len,
            len: bound,
        })
    } else {
        Ok(())
    }
}

fn softmax_groups(shape: &[usize], axis: usize) -> Result<Vec<Vec<usize>>> {
    match (shape, axis) {
        ([n], _) => Ok(vec![(0..*n).collect()]),
        ([r, c], 1) => Ok((0..*r).map(|i| (i * c..(i + 1) * c).collect()).collect()),
        ([r, c], 0) => Ok((0..*c).map(|j| (0..*r).map(|i| i * c + j).collect()).collect()),
        _ => Err(mismatch(shape, &[axis])),
    }
}

/// `c += a · b` for an `m×k` by `k×n` product with explicit (row, col) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    // SAFETY: the strides address only elements inside `a` (m×k), `b` (k×n)
    // and `c` (m×n); the slices are at least that long for every call site.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
