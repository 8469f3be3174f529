//! Forward-over-reverse differentiation on a recorded tape.
//!
//! Every node holds a dense `rows × cols` matrix of `f64`. Columns are batch
//! entries. A node may carry `k` forward-mode tangents, in which case its
//! columns are split into `k + 1` equal blocks `[primal | d/ds_1 | ... | d/ds_k]`.
//! The nonlinear primitives (`tanh`, `softplus`) propagate tangents with the
//! chain rule and their reverse rules differentiate through that propagation,
//! so a scalar built from input derivatives still has exact parameter
//! gradients.
//!
//! Linear primitives (affine maps, blends, column scalings, averages) act on
//! all blocks alike, which is what makes the block layout work. Elementwise
//! products and squares are only defined on tangent-free nodes.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param { offset: usize },
    Affine { weight: Var, input: Var, bias: Option<Var> },
    Tanh(Var),
    Softplus(Var),
    Blend { beta: Var, skip: Var, branch: Var },
    Clamp { input: Var, lo: f64, hi: f64 },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleCycle { input: Var, factors: Vec<f64> },
    SliceCols { input: Var, start: usize, len: usize },
    GroupAverage { input: Var, weights: Vec<f64> },
    Repeat { input: Var, times: usize },
    Square(Var),
    SumCycle { input: Var, weights: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Array2<f64>,
    tangents: usize,
}

/// Indices of network inputs to differentiate against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivativeRequest {
    indices: Vec<usize>,
}

impl DerivativeRequest {
    pub fn new(indices: Vec<usize>, arity: usize) -> Result<Self> {
        for (pos, &k) in indices.iter().enumerate() {
            if k >= arity {
                return Err(Error::InvalidRequest(format!("derivative index {k} out of range for input arity {arity}")));
            }
            if indices[..pos].contains(&k) {
                return Err(Error::InvalidRequest(format!("duplicate derivative index {k}")));
            }
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `min(max(value, lo), hi)`. The derivative is 1 strictly inside `(lo, hi)`
/// and 0 elsewhere, including the end points.
pub fn clamp(value: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(lo <= hi) {
        return Err(Error::InvalidRange { lo, hi });
    }
    Ok(value.max(lo).min(hi))
}

pub fn clamp_derivative(value: f64, lo: f64, hi: f64) -> f64 {
    if value > lo && value < hi {
        1.0
    } else {
        0.0
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A single-owner record of primitive operations.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_len: usize,
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

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// The single entry of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn tangents(&self, v: Var) -> usize {
        self.nodes[v.0].tangents
    }

    /// Number of batch columns per block.
    pub fn batch(&self, v: Var) -> usize {
        let n = &self.nodes[v.0];
        n.value.ncols() / (n.tangents + 1)
    }

    fn push(&mut self, op: Op, value: Array2<f64>, tangents: usize) -> Var {
        self.nodes.push(Node { op, value, tangents });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf. `tangents` declares its block layout.
    pub fn input(&mut self, value: Array2<f64>, tangents: usize) -> Var {
        assert_eq!(value.ncols() % (tangents + 1), 0, "columns must split into tangent blocks");
        self.push(Op::Input, value, tangents)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.input(value, 0)
    }

    /// A trainable leaf occupying `rows * cols` entries of the flat parameter
    /// vector starting at `offset`, stored row-major.
    pub fn param(&mut self, offset: usize, rows: usize, cols: usize, data: &[f64]) -> Var {
        let value = Array2::from_shape_vec((rows, cols), data.to_vec()).expect("parameter slice must match its shape");
        self.param_len = self.param_len.max(offset + rows * cols);
        self.push(Op::Param { offset }, value, 0)
    }

    /// `W·X`, with the bias added to the primal block only.
    pub fn affine(&mut self, weight: Var, input: Var, bias: Option<Var>) -> Var {
        let value = eval_affine(self.value(weight), self.value(input), bias.map(|b| self.value(b)), self.tangents(input));
        let k = self.tangents(input);
        self.push(Op::Affine { weight, input, bias }, value, k)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let k = self.tangents(x);
        let value = eval_tanh(self.value(x), k);
        self.push(Op::Tanh(x), value, k)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let k = self.tangents(x);
        let value = eval_softplus(self.value(x), k);
        self.push(Op::Softplus(x), value, k)
    }

    /// `beta·skip + (1 − beta)·branch` with a `1 × 1` `beta`.
    pub fn blend(&mut self, beta: Var, skip: Var, branch: Var) -> Var {
        assert_eq!(self.value(beta).dim(), (1, 1));
        assert_eq!(self.tangents(skip), self.tangents(branch));
        let value = eval_blend(self.scalar(beta), self.value(skip), self.value(branch));
        let k = self.tangents(skip);
        self.push(Op::Blend { beta, skip, branch }, value, k)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        if !(lo <= hi) {
            return Err(Error::InvalidRange { lo, hi });
        }
        self.assert_plain(x);
        let value = self.value(x).mapv(|v| v.max(lo).min(hi));
        Ok(self.push(Op::Clamp { input: x, lo, hi }, value, 0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let k = self.same_layout(a, b);
        self.push(Op::Add(a, b), value, k)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let k = self.same_layout(a, b);
        self.push(Op::Sub(a, b), value, k)
    }

    /// Elementwise product of two tangent-free nodes.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.assert_plain(a);
        self.assert_plain(b);
        let value = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), value, 0)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x) * c;
        let k = self.tangents(x);
        self.push(Op::Scale(x, c), value, k)
    }

    /// Multiplies column `c` by `factors[c % factors.len()]`.
    pub fn scale_cycle(&mut self, x: Var, factors: &[f64]) -> Var {
        let value = eval_scale_cycle(self.value(x), factors);
        let k = self.tangents(x);
        self.push(Op::ScaleCycle { input: x, factors: factors.to_vec() }, value, k)
    }

    /// Columns `start..start + len` as a tangent-free node.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(Op::SliceCols { input: x, start, len }, value, 0)
    }

    /// Block `b` of a node with tangents (0 is the primal block).
    pub fn block(&mut self, x: Var, b: usize) -> Var {
        let n = self.batch(x);
        assert!(b <= self.tangents(x));
        self.slice_cols(x, b * n, n)
    }

    /// Weighted reduction over consecutive column groups of `weights.len()`.
    pub fn group_average(&mut self, x: Var, weights: &[f64]) -> Var {
        let value = eval_group_average(self.value(x), weights);
        let k = self.tangents(x);
        self.push(Op::GroupAverage { input: x, weights: weights.to_vec() }, value, k)
    }

    /// Repeats every column `times` times in place.
    pub fn repeat(&mut self, x: Var, times: usize) -> Var {
        let value = eval_repeat(self.value(x), times);
        let k = self.tangents(x);
        self.push(Op::Repeat { input: x, times }, value, k)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.assert_plain(x);
        let value = self.value(x).mapv(|v| v * v);
        self.push(Op::Square(x), value, 0)
    }

    /// `Σ_c weights[c % len]·Σ_rows x[r, c]` as a `1 × 1` node.
    pub fn sum_cycle(&mut self, x: Var, weights: &[f64]) -> Var {
        self.assert_plain(x);
        let value = Array2::from_elem((1, 1), eval_sum_cycle(self.value(x), weights));
        self.push(Op::SumCycle { input: x, weights: weights.to_vec() }, value, 0)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        self.sum_cycle(x, &[1.0])
    }

    fn assert_plain(&self, x: Var) {
        assert_eq!(self.tangents(x), 0, "operation requires a tangent-free node");
    }

    fn same_layout(&self, a: Var, b: Var) -> usize {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "shape mismatch");
        assert_eq!(self.tangents(a), self.tangents(b), "tangent layout mismatch");
        self.tangents(a)
    }

    /// Recomputes every node from the leaves.
    pub fn replay(&self) -> Vec<Array2<f64>> {
        let mut values: Vec<Array2<f64>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = |x: &Var| &values[x.0];
            let value = match &node.op {
                Op::Input | Op::Param { .. } => node.value.clone(),
                Op::Affine { weight, input, bias } => eval_affine(v(weight), v(input), bias.as_ref().map(v), node.tangents),
                Op::Tanh(x) => eval_tanh(v(x), node.tangents),
                Op::Softplus(x) => eval_softplus(v(x), node.tangents),
                Op::Blend { beta, skip, branch } => eval_blend(v(beta)[[0, 0]], v(skip), v(branch)),
                Op::Clamp { input, lo, hi } => v(input).mapv(|e| e.max(*lo).min(*hi)),
                Op::Add(a, b) => v(a) + v(b),
                Op::Sub(a, b) => v(a) - v(b),
                Op::Mul(a, b) => v(a) * v(b),
                Op::Scale(x, c) => v(x) * *c,
                Op::ScaleCycle { input, factors } => eval_scale_cycle(v(input), factors),
                Op::SliceCols { input, start, len } => v(input).slice(s![.., *start..*start + *len]).to_owned(),
                Op::GroupAverage { input, weights } => eval_group_average(v(input), weights),
                Op::Repeat { input, times } => eval_repeat(v(input), *times),
                Op::Square(x) => v(x).mapv(|e| e * e),
                Op::SumCycle { input, weights } => Array2::from_elem((1, 1), eval_sum_cycle(v(input), weights)),
            };
            values.push(value);
        }
        values
    }

    /// Reverse sweep from a `1 × 1` root. Returns the gradient with respect to
    /// the flat parameter vector (length `max(param_len, min_len)`).
    pub fn grad_params(&self, root: Var, min_len: usize) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.param_len.max(min_len)];
        self.accumulate_grad(root, &mut grad)?;
        Ok(grad)
    }

    /// Like [`Tape::grad_params`], adding into an existing buffer.
    pub fn accumulate_grad(&self, root: Var, grad: &mut [f64]) -> Result<()> {
        let rv = &self.nodes[root.0].value;
        if rv.dim() != (1, 1) {
            return Err(Error::Contract(format!("gradient root must be a 1x1 scalar, got {}x{}", rv.nrows(), rv.ncols())));
        }
        if grad.len() < self.param_len {
            return Err(Error::Contract(format!(
                "gradient buffer of length {} is shorter than the parameter vector ({})",
                grad.len(),
                self.param_len
            )));
        }
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Array2::ones((1, 1)));
        for id in (0..=root.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            self.backward(node, g, &mut adj, grad);
        }
        Ok(())
    }

    fn backward(&self, node: &Node, mut g: Array2<f64>, adj: &mut [Option<Array2<f64>>], grad: &mut [f64]) {
        let val = |x: &Var| &self.nodes[x.0].value;
        match &node.op {
            Op::Input => {}
            Op::Param { offset } => {
                let dst = &mut grad[*offset..*offset + g.len()];
                for (d, s) in dst.iter_mut().zip(g.iter()) {
                    *d += *s;
                }
            }
            Op::Affine { weight, input, bias } => {
                let w = val(weight);
                let x = val(input);
                add_owned(adj, *weight, g.dot(&x.t()));
                if let Some(b) = bias {
                    let n = x.ncols() / (node.tangents + 1);
                    let row_sums = g.slice(s![.., ..n]).sum_axis(Axis(1));
                    add_owned(adj, *b, row_sums.insert_axis(Axis(1)));
                }
                add_owned(adj, *input, w.t().dot(&g));
            }
            Op::Tanh(x) => {
                let k = node.tangents;
                let z = val(x);
                let n = z.ncols() / (k + 1);
                let a = node.value.slice(s![.., ..n]);
                // Adjoint of s = 1 - a^2, collected from every tangent block.
                let mut adj_s: Option<Array2<f64>> = None;
                let (mut g0, mut rest) = g.view_mut().split_at(Axis(1), n);
                for b in 0..k {
                    let zb = z.slice(s![.., (b + 1) * n..(b + 2) * n]);
                    let mut gb = rest.slice_mut(s![.., b * n..(b + 1) * n]);
                    match &mut adj_s {
                        None => adj_s = Some(Zip::from(&zb).and(&gb).map_collect(|&zt, &gt| zt * gt)),
                        Some(acc) => Zip::from(acc).and(&zb).and(&gb).for_each(|acc, &zt, &gt| *acc += zt * gt),
                    }
                    Zip::from(&mut gb).and(&a).for_each(|gt, &av| *gt *= 1.0 - av * av);
                }
                match adj_s {
                    Some(as_) => {
                        Zip::from(&mut g0).and(&a).and(&as_).for_each(|ga, &av, &sv| *ga = (1.0 - av * av) * (*ga - 2.0 * av * sv))
                    }
                    None => Zip::from(&mut g0).and(&a).for_each(|ga, &av| *ga *= 1.0 - av * av),
                }
                add_owned(adj, *x, g);
            }
            Op::Softplus(x) => {
                let k = node.tangents;
                let z = val(x);
                let n = z.ncols() / (k + 1);
                let sig = z.slice(s![.., ..n]).mapv(sigmoid);
                let mut adj_s = Array2::<f64>::zeros(sig.dim());
                let (mut g0, mut rest) = g.view_mut().split_at(Axis(1), n);
                for b in 0..k {
                    let zb = z.slice(s![.., (b + 1) * n..(b + 2) * n]);
                    let mut gb = rest.slice_mut(s![.., b * n..(b + 1) * n]);
                    Zip::from(&mut adj_s).and(&zb).and(&gb).for_each(|acc, &zt, &gt| *acc += zt * gt);
                    Zip::from(&mut gb).and(&sig).for_each(|gt, &sv| *gt *= sv);
                }
                Zip::from(&mut g0).and(&sig).and(&adj_s).for_each(|gs, &sv, &as_| *gs = sv * *gs + sv * (1.0 - sv) * as_);
                add_owned(adj, *x, g);
            }
            Op::Blend { beta, skip, branch } => {
                let b = val(beta)[[0, 0]];
                let gs = val(skip);
                let hs = val(branch);
                let mut dbeta = 0.0;
                Zip::from(&g).and(gs).and(hs).for_each(|&gv, &sv, &hv| dbeta += gv * (sv - hv));
                add_owned(adj, *beta, Array2::from_elem((1, 1), dbeta));
                add_scaled(adj, *skip, b, &g);
                g *= 1.0 - b;
                add_owned(adj, *branch, g);
            }
            Op::Clamp { input, lo, hi } => {
                let x = val(input);
                Zip::from(&mut g).and(x).for_each(|gv, &xv| *gv *= clamp_derivative(xv, *lo, *hi));
                add_owned(adj, *input, g);
            }
            Op::Add(a, b) => {
                add_scaled(adj, *a, 1.0, &g);
                add_owned(adj, *b, g);
            }
            Op::Sub(a, b) => {
                add_scaled(adj, *a, 1.0, &g);
                g.mapv_inplace(|v| -v);
                add_owned(adj, *b, g);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                add_owned(adj, *a, &g * bv);
                add_owned(adj, *b, &g * av);
            }
            Op::Scale(x, c) => {
                g *= *c;
                add_owned(adj, *x, g);
            }
            Op::ScaleCycle { input, factors } => {
                scale_cycle_in_place(&mut g, factors);
                add_owned(adj, *input, g);
            }
            Op::SliceCols { input, start, len } => {
                let dim = val(input).dim();
                slot(adj, *input, dim).slice_mut(s![.., *start..*start + *len]).scaled_add(1.0, &g);
            }
            Op::GroupAverage { input, weights } => {
                let x = val(input);
                let q = weights.len();
                let gx = Array2::from_shape_fn(x.dim(), |(r, c)| weights[c % q] * g[[r, c / q]]);
                add_owned(adj, *input, gx);
            }
            Op::Repeat { input, times } => {
                let x = val(input);
                let gx = Array2::from_shape_fn(x.dim(), |(r, c)| (0..*times).map(|i| g[[r, c * times + i]]).sum());
                add_owned(adj, *input, gx);
            }
            Op::Square(x) => {
                let xv = val(x);
                Zip::from(&mut g).and(xv).for_each(|gv, &o| *gv *= 2.0 * o);
                add_owned(adj, *x, g);
            }
            Op::SumCycle { input, weights } => {
                let x = val(input);
                let gv = g[[0, 0]];
                let q = weights.len();
                add_owned(adj, *input, Array2::from_shape_fn(x.dim(), |(_, c)| gv * weights[c % q]));
            }
        }
    }
}

/// Adds `g` into the adjoint of `v`, taking ownership when it is empty.
fn add_owned(adj: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut adj[v.0] {
        Some(a) => *a += &g,
        empty => *empty = Some(g),
    }
}

fn add_scaled(adj: &mut [Option<Array2<f64>>], v: Var, c: f64, g: &Array2<f64>) {
    match &mut adj[v.0] {
        Some(a) => a.scaled_add(c, g),
        empty => *empty = Some(if c == 1.0 { g.clone() } else { g * c }),
    }
}

fn slot(adj: &mut [Option<Array2<f64>>], v: Var, dim: (usize, usize)) -> &mut Array2<f64> {
    adj[v.0].get_or_insert_with(|| Array2::zeros(dim))
}

fn eval_affine(w: &Array2<f64>, x: &Array2<f64>, bias: Option<&Array2<f64>>, tangents: usize) -> Array2<f64> {
    let mut y = w.dot(x);
    if let Some(b) = bias {
        let n = x.ncols() / (tangents + 1);
        let mut primal = y.slice_mut(s![.., ..n]);
        primal += &b.view();
    }
    y
}

fn eval_tanh(z: &Array2<f64>, k: usize) -> Array2<f64> {
    let n = z.ncols() / (k + 1);
    let mut out = z.to_owned();
    let (mut a, mut rest) = out.view_mut().split_at(Axis(1), n);
    a.mapv_inplace(f64::tanh);
    for b in 0..k {
        Zip::from(rest.slice_mut(s![.., b * n..(b + 1) * n])).and(&a).for_each(|o, &av| *o *= 1.0 - av * av);
    }
    out
}

fn eval_softplus(z: &Array2<f64>, k: usize) -> Array2<f64> {
    let n = z.ncols() / (k + 1);
    let mut out = z.to_owned();
    let (mut primal, mut rest) = out.view_mut().split_at(Axis(1), n);
    let sig = primal.mapv(sigmoid);
    primal.mapv_inplace(softplus);
    for b in 0..k {
        Zip::from(rest.slice_mut(s![.., b * n..(b + 1) * n])).and(&sig).for_each(|o, &sv| *o *= sv);
    }
    out
}

fn eval_blend(beta: f64, skip: &Array2<f64>, branch: &Array2<f64>) -> Array2<f64> {
    Zip::from(skip).and(branch).map_collect(|&gv, &hv| beta * gv + (1.0 - beta) * hv)
}

fn scale_cycle_in_place(x: &mut Array2<f64>, factors: &[f64]) {
    let q = factors.len();
    for mut row in x.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v *= factors[c % q];
        }
    }
}

fn eval_scale_cycle(x: &Array2<f64>, factors: &[f64]) -> Array2<f64> {
    let mut out = x.clone();
    scale_cycle_in_place(&mut out, factors);
    out
}

fn eval_group_average(x: &Array2<f64>, weights: &[f64]) -> Array2<f64> {
    let q = weights.len();
    assert_eq!(x.ncols() % q, 0, "column count must be a multiple of the group size");
    let groups = x.ncols() / q;
    Array2::from_shape_fn((x.nrows(), groups), |(r, gi)| weights.iter().enumerate().map(|(j, w)| w * x[[r, gi * q + j]]).sum())
}

fn eval_repeat(x: &Array2<f64>, times: usize) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), x.ncols() * times), |(r, c)| x[[r, c / times]])
}

fn eval_sum_cycle(x: &Array2<f64>, weights: &[f64]) -> f64 {
    let q = weights.len();
    x.axis_iter(Axis(1)).enumerate().map(|(c, col)| weights[c % q] * col.sum()).sum()
}

/// Builds a dual input matrix `[z | e_k1 | e_k2 | ...]` for one point.
pub fn seeded_input(z: ArrayView2<'_, f64>, req: &DerivativeRequest) -> Array2<f64> {
    let (rows, n) = z.dim();
    let k = req.len();
    let mut m = Array2::zeros((rows, n * (k + 1)));
    m.slice_mut(s![.., ..n]).assign(&z);
    for (b, &idx) in req.indices().iter().enumerate() {
        for c in 0..n {
            m[[idx, (b + 1) * n + c]] = 1.0;
        }
    }
    m
}
