use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Affine { w: Var, x: Var, b: Option<Var> },
    Gather { table: Var, row: usize },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    SumVecs(Vec<Var>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    Sum(Var),
    SoftmaxCrossEntropy { logits: Var, target: usize },
    SigmoidCrossEntropy { logits: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    // Empty for parameters; their values live in the store.
    value: Vec<f64>,
    requires_grad: bool,
}

/// Records differentiable operations against a borrowed, frozen parameter set.
///
/// Several tapes may borrow the same store concurrently; none of them mutate it.
pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Result of a backward pass: per-parameter gradients plus node gradients.
#[derive(Debug)]
pub struct Gradients {
    params: Vec<Option<Vec<f64>>>,
    nodes: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of `pid`, or `None` if the parameter was not on the tape.
    pub fn param(&self, pid: ParamId) -> Option<&[f64]> {
        self.params.get(pid.0).and_then(|g| g.as_deref())
    }

    /// Gradient with respect to a recorded value, if it influenced the loss.
    pub fn of(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.params
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_deref().map(|g| (i, g)))
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

fn add_into_offset(dst: &mut Option<Vec<f64>>, len: usize, offset: usize, src: &[f64]) {
    let d = dst.get_or_insert_with(|| vec![0.0; len]);
    d[offset..offset + src.len()]
        .iter_mut()
        .zip(src)
        .for_each(|(a, b)| *a += b);
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    /// Number of recorded operations.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(pid) => self.store.value(pid).data(),
            _ => &node.value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Copy of a recorded value as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("consistent node")
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || shape.iter().product::<usize>() == value.len());
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn expect_vector(&self, op: &'static str, v: Var) -> Result<usize> {
        let s = self.shape(v);
        if s.len() != 1 {
            return Err(shape_err(op, s, &[]));
        }
        Ok(s[0])
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(Op::Constant, shape, t.into_data(), false)
    }

    pub fn vector(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(Op::Constant, vec![n], data, false)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.vector(vec![0.0; n])
    }

    /// Leaf for a parameter; repeated calls return the same handle.
    pub fn param(&mut self, pid: ParamId) -> Var {
        if let Some(v) = self.param_vars[pid.0] {
            return v;
        }
        let shape = self.store.value(pid).shape().to_vec();
        let v = self.push(Op::Param(pid), shape, Vec::new(), true);
        self.param_vars[pid.0] = Some(v);
        v
    }

    /// `w · x + b` for `w: [out, in]`, `x: [in]`, `b: [out]`.
    pub fn affine(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var> {
        let ws = self.shape(w);
        if ws.len() != 2 {
            return Err(shape_err("affine", ws, self.shape(x)));
        }
        let (rows, cols) = (ws[0], ws[1]);
        if self.shape(x) != [cols] {
            return Err(shape_err("affine", ws, self.shape(x)));
        }
        if let Some(b) = b {
            if self.shape(b) != [rows] {
                return Err(shape_err("affine(bias)", &[rows], self.shape(b)));
            }
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let mut out: Vec<f64> = match b {
            Some(b) => self.value(b).to_vec(),
            None => vec![0.0; rows],
        };
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wv[r * cols..(r + 1) * cols];
            *o += row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
        }
        let rg = self.rg(w) || self.rg(x) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Op::Affine { w, x, b }, vec![rows], out, rg))
    }

    /// Row `row` of a `[rows, cols]` table.
    pub fn gather(&mut self, table: Var, row: usize) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 || row >= s[0] {
            return Err(shape_err("gather", s, &[row]));
        }
        let cols = s[1];
        let value = self.value(table)[row * cols..(row + 1) * cols].to_vec();
        let rg = self.rg(table);
        Ok(self.push(Op::Gather { table, row }, vec![cols], value, rg))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut value = Vec::new();
        let mut rg = false;
        for &p in parts {
            self.expect_vector("concat", p)?;
            value.extend_from_slice(self.value(p));
            rg |= self.rg(p);
        }
        let n = value.len();
        Ok(self.push(Op::Concat(parts.to_vec()), vec![n], value, rg))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.expect_vector("slice", x)?;
        if start + len > n {
            return Err(shape_err("slice", &[n], &[start, len]));
        }
        let value = self.value(x)[start..start + len].to_vec();
        let rg = self.rg(x);
        Ok(self.push(Op::Slice { x, start }, vec![len], value, rg))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(name, self.shape(a), self.shape(b)));
        }
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(op, shape, value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).iter().map(|v| v * factor).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(Op::Scale(x, factor), shape, value, rg)
    }

    /// Elementwise sum of equally shaped values.
    pub fn sum_vecs(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("sum_vecs of an empty list".into()))?;
        let shape = self.shape(first).to_vec();
        let mut value = vec![0.0; self.value(first).len()];
        let mut rg = false;
        for &p in parts {
            if self.shape(p) != shape.as_slice() {
                return Err(shape_err("sum_vecs", &shape, self.shape(p)));
            }
            value.iter_mut().zip(self.value(p)).for_each(|(a, b)| *a += b);
            rg |= self.rg(p);
        }
        Ok(self.push(Op::SumVecs(parts.to_vec()), shape, value, rg))
    }

    /// Elementwise mean of equally shaped values.
    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        let s = self.sum_vecs(parts)?;
        Ok(self.scale(s, 1.0 / parts.len() as f64))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).iter().map(|v| f(*v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(op, shape, value, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let n = self.expect_vector("softmax", x)?;
        let value = softmax(self.value(x));
        let rg = self.rg(x);
        Ok(self.push(Op::Softmax(x), vec![n], value, rg))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = vec![self.value(x).iter().sum()];
        let rg = self.rg(x);
        self.push(Op::Sum(x), vec![], value, rg)
    }

    /// `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let n = self.expect_vector("softmax_cross_entropy", logits)?;
        if target >= n {
            return Err(shape_err("softmax_cross_entropy", &[n], &[target]));
        }
        let l = self.value(logits);
        let loss = log_sum_exp(l) - l[target];
        let rg = self.rg(logits);
        Ok(self.push(
            Op::SoftmaxCrossEntropy { logits, target },
            vec![],
            vec![loss],
            rg,
        ))
    }

    /// Summed binary cross entropy of `sigmoid(logits)` against targets in [0, 1].
    pub fn sigmoid_cross_entropy(&mut self, logits: Var, targets: Vec<f64>) -> Result<Var> {
        let n = self.expect_vector("sigmoid_cross_entropy", logits)?;
        if targets.len() != n {
            return Err(shape_err("sigmoid_cross_entropy", &[n], &[targets.len()]));
        }
        let loss = self
            .value(logits)
            .iter()
            .zip(&targets)
            .map(|(&x, &z)| x.max(0.0) - x * z + (-x.abs()).exp().ln_1p())
            .sum();
        let rg = self.rg(logits);
        Ok(self.push(
            Op::SigmoidCrossEntropy { logits, targets },
            vec![],
            vec![loss],
            rg,
        ))
    }

    /// Reverse pass from a scalar. Each recorded op is visited once, newest first.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        let mut param_grads: Vec<Option<Vec<f64>>> = vec![None; self.store.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => {
                    add_into(&mut param_grads[pid.0], &g);
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Affine { w, x, b } => {
                    let cols = self.shape(*x)[0];
                    if self.rg(*w) {
                        let xv = self.value(*x);
                        let dst = grads[w.0].get_or_insert_with(|| vec![0.0; g.len() * cols]);
                        for (r, gr) in g.iter().enumerate() {
                            if *gr == 0.0 {
                                continue;
                            }
                            dst[r * cols..(r + 1) * cols]
                                .iter_mut()
                                .zip(xv)
                                .for_each(|(d, xj)| *d += gr * xj);
                        }
                    }
                    if self.rg(*x) {
                        let wv = self.value(*w);
                        let mut gx = vec![0.0; cols];
                        for (r, gr) in g.iter().enumerate() {
                            if *gr == 0.0 {
                                continue;
                            }
                            gx.iter_mut()
                                .zip(&wv[r * cols..(r + 1) * cols])
                                .for_each(|(d, wj)| *d += gr * wj);
                        }
                        add_into(&mut grads[x.0], &gx);
                    }
                    if let Some(b) = b {
                        if self.rg(*b) {
                            add_into(&mut grads[b.0], &g);
                        }
                    }
                }
                Op::Gather { table, row } => {
                    let len = self.value(*table).len();
                    add_into_offset(&mut grads[table.0], len, row * g.len(), &g);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        if self.rg(*p) {
                            add_into(&mut grads[p.0], &g[offset..offset + n]);
                        }
                        offset += n;
                    }
                }
                Op::Slice { x, start } => {
                    let len = self.value(*x).len();
                    add_into_offset(&mut grads[x.0], len, *start, &g);
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        add_into(&mut grads[a.0], &g);
                    }
                    if self.rg(*b) {
                        add_into(&mut grads[b.0], &g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        add_into(&mut grads[a.0], &g);
                    }
                    if self.rg(*b) {
                        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                        add_into(&mut grads[b.0], &neg);
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        let ga: Vec<f64> = g.iter().zip(self.value(*b)).map(|(g, y)| g * y).collect();
                        add_into(&mut grads[a.0], &ga);
                    }
                    if self.rg(*b) {
                        let gb: Vec<f64> = g.iter().zip(self.value(*a)).map(|(g, x)| g * x).collect();
                        add_into(&mut grads[b.0], &gb);
                    }
                }
                Op::Scale(x, f) => {
                    let gx: Vec<f64> = g.iter().map(|v| v * f).collect();
                    add_into(&mut grads[x.0], &gx);
                }
                Op::SumVecs(parts) => {
                    for p in parts {
                        if self.rg(*p) {
                            add_into(&mut grads[p.0], &g);
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect();
                    add_into(&mut grads[x.0], &gx);
                }
                Op::Tanh(x) => {
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| g * (1.0 - y * y))
                        .collect();
                    add_into(&mut grads[x.0], &gx);
                }
                Op::Relu(x) => {
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(self.value(*x))
                        .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                        .collect();
                    add_into(&mut grads[x.0], &gx);
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    let gx: Vec<f64> = g.iter().zip(y).map(|(g, y)| y * (g - dot)).collect();
                    add_into(&mut grads[x.0], &gx);
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    add_into(&mut grads[x.0], &vec![g[0]; n]);
                }
                Op::SoftmaxCrossEntropy { logits, target } => {
                    let mut gx = softmax(self.value(*logits));
                    gx[*target] -= 1.0;
                    gx.iter_mut().for_each(|v| *v *= g[0]);
                    add_into(&mut grads[logits.0], &gx);
                }
                Op::SigmoidCrossEntropy { logits, targets } => {
                    let gx: Vec<f64> = self
                        .value(*logits)
                        .iter()
                        .zip(targets)
                        .map(|(&x, &z)| g[0] * (sigmoid(x) - z))
                        .collect();
                    add_into(&mut grads[logits.0], &gx);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            params: param_grads,
            nodes: grads,
        })
    }
}
