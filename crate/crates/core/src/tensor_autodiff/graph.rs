//! Recording graph with reverse-mode differentiation.
//!
//! Every primitive evaluates eagerly and appends a node; node order is the
//! topological order used by [`Graph::backward`].

use crate::error::{Error, Result};

use super::tensor::{Real, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf { trainable: bool },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Conv1d {
        input: Var,
        filters: Var,
        positions: usize,
    },
    MaxOverTime(Var),
    MeanOverTime(Var),
    Concat(Vec<Var>),
    StackColumns(Vec<Var>),
    Column(Var, usize),
    SqDist(Var, Tensor<T>),
    SoftmaxXent(Var, usize),
    Sum(Var),
    Lookup {
        table: Var,
        ids: Vec<Option<usize>>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::Scale(..) => "scale",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Conv1d { .. } => "conv1d",
            Op::MaxOverTime(_) => "max_over_time",
            Op::MeanOverTime(_) => "mean_over_time",
            Op::Concat(_) => "concat",
            Op::StackColumns(_) => "stack_columns",
            Op::Column(..) => "column",
            Op::SqDist(..) => "sq_dist",
            Op::SoftmaxXent(..) => "softmax_cross_entropy",
            Op::Sum(_) => "sum",
            Op::Lookup { .. } => "lookup",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf { .. } => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::MaxOverTime(a)
            | Op::MeanOverTime(a)
            | Op::Column(a, _)
            | Op::SqDist(a, _)
            | Op::SoftmaxXent(a, _)
            | Op::Sum(a) => vec![*a],
            Op::Conv1d { input, filters, .. } => vec![*input, *filters],
            Op::Concat(vs) | Op::StackColumns(vs) => vs.clone(),
            Op::Lookup { table, .. } => vec![*table],
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    needs_grad: bool,
}

/// Gradients of a scalar loss with respect to the trainable leaves.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a trainable leaf; `None` for any other node.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

/// Operation record for one training context.
#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor<T>, trainable: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite("leaf"));
        }
        self.nodes.push(Node {
            op: Op::Leaf { trainable },
            value,
            needs_grad: trainable,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn is_trainable(&self, var: Var) -> bool {
        matches!(self.nodes[var.0].op, Op::Leaf { trainable: true })
    }

    pub fn trainable_leaves(&self) -> Vec<Var> {
        (0..self.nodes.len())
            .map(Var)
            .filter(|&v| self.is_trainable(v))
            .collect()
    }

    /// Overwrites a leaf value; call [`Graph::recompute`] to refresh dependants.
    pub fn set_leaf(&mut self, var: Var, value: Tensor<T>) -> Result<()> {
        let node = self.nodes.get_mut(var.0).ok_or(Error::UnknownVar(var.0))?;
        if !matches!(node.op, Op::Leaf { .. }) {
            return Err(Error::InvalidArgument(format!("node {} is not a leaf", var.0)));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::shape(
                "set_leaf",
                format!("{:?} vs {:?}", node.value.shape(), value.shape()),
            ));
        }
        node.value = value;
        Ok(())
    }

    /// Re-evaluates every recorded node from the current leaf values, in
    /// recording order, and returns the fresh values without modifying the graph.
    pub fn replay(&self) -> Result<Vec<Tensor<T>>> {
        let mut g = self.clone();
        g.recompute()?;
        Ok(g.nodes.into_iter().map(|n| n.value).collect())
    }

    /// Re-evaluates every non-leaf node in place.
    pub fn recompute(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            if matches!(node.op, Op::Leaf { .. }) {
                continue;
            }
            node.value = eval(&node.op, before)?;
        }
        Ok(())
    }

    fn check(&self, var: Var) -> Result<()> {
        if var.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownVar(var.0))
        }
    }

    fn push(&mut self, op: Op<T>) -> Result<Var> {
        let inputs = op.inputs();
        for &v in &inputs {
            self.check(v)?;
        }
        let value = eval(&op, &self.nodes)?;
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// `[m,k] x [k,n] -> [m,n]` or `[m,k] x [k] -> [m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    /// Adds `bias[i]` to row `i` of a `[m]` or `[m,n]` tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.push(Op::AddBias(x, bias))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        self.push(Op::Scale(x, factor))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Relu(x))
    }

    /// Valid 1-D convolution of a `[d, T]` token matrix with a filter bank of
    /// shape `[F, h, d]`, evaluated at the first `positions` window offsets.
    /// Output is `[F, positions]`.
    pub fn conv1d(&mut self, input: Var, filters: Var, positions: usize) -> Result<Var> {
        self.push(Op::Conv1d {
            input,
            filters,
            positions,
        })
    }

    /// Convolution over every valid window offset.
    pub fn conv1d_full(&mut self, input: Var, filters: Var) -> Result<Var> {
        self.check(input)?;
        self.check(filters)?;
        let len = self.value(input).cols();
        let h = self.value(filters).shape().get(1).copied().unwrap_or(0);
        if h > len {
            return Err(Error::WindowTooLarge { window: h, len });
        }
        self.conv1d(input, filters, len + 1 - h)
    }

    /// `[F, L] -> [F]`, ties resolved toward the lowest time index.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        self.push(Op::MaxOverTime(x))
    }

    /// `[F, L] -> [F]`.
    pub fn mean_over_time(&mut self, x: Var) -> Result<Var> {
        self.push(Op::MeanOverTime(x))
    }

    /// Joins 1-D tensors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.push(Op::Concat(parts.to_vec()))
    }

    /// Places `n` vectors of length `m` side by side as the columns of `[m, n]`.
    pub fn stack_columns(&mut self, columns: &[Var]) -> Result<Var> {
        self.push(Op::StackColumns(columns.to_vec()))
    }

    /// Column `j` of a matrix as a vector.
    pub fn column(&mut self, x: Var, j: usize) -> Result<Var> {
        self.push(Op::Column(x, j))
    }

    /// `||x - target||^2` against a constant vector.
    pub fn sq_dist(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        self.push(Op::SqDist(x, target.clone()))
    }

    /// `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        self.push(Op::SoftmaxXent(logits, target))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.push(Op::Sum(x))
    }

    /// Sum of several scalars.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Result<Var> {
        match parts {
            [] => self.constant(Tensor::scalar(T::zero())),
            [single] => Ok(*single),
            _ => {
                let joined = self.concat(parts)?;
                self.sum(joined)
            }
        }
    }

    /// Gathers rows of a `[V, d]` table into the columns of a `[d, T]`
    /// matrix; `None` entries become zero columns.
    pub fn lookup(&mut self, table: Var, ids: &[Option<usize>]) -> Result<Var> {
        self.push(Op::Lookup {
            table,
            ids: ids.to_vec(),
        })
    }

    /// Reverse pass from a scalar loss. The graph can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        self.check(loss)?;
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(Error::NotScalar(loss_value.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(loss_value.shape(), T::one()));

        for i in (0..=loss.0).rev() {
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf { trainable } = node.op {
                if trainable {
                    grads[i] = Some(upstream);
                }
                continue;
            }
            for (input, g) in input_grads(&node.op, &self.nodes, &node.value, &upstream)? {
                if !self.nodes[input.0].needs_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }

        for (i, g) in grads.iter_mut().enumerate() {
            if !matches!(self.nodes[i].op, Op::Leaf { trainable: true }) {
                *g = None;
            }
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("backward"));
        }
        Ok(Gradients { grads })
    }

    /// Pattern of active branches at piecewise-linear nodes (relu sign,
    /// max-pool argmax). The second value is true when some relu input sits
    /// exactly on its kink.
    pub(crate) fn branch_signature(&self) -> (Vec<usize>, bool) {
        let mut sig = Vec::new();
        let mut on_kink = false;
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for &v in self.nodes[x.0].value.data() {
                        on_kink |= v == T::zero();
                        sig.push(usize::from(v > T::zero()));
                    }
                }
                Op::MaxOverTime(x) => {
                    let input = &self.nodes[x.0].value;
                    sig.extend(argmax_rows(input));
                }
                _ => {}
            }
        }
        (sig, on_kink)
    }
}

fn argmax_rows<T: Real>(x: &Tensor<T>) -> Vec<usize> {
    let cols = x.cols();
    x.data()
        .chunks(cols)
        .map(|row| {
            let mut best = 0;
            for (t, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = t;
                }
            }
            best
        })
        .collect()
}

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
    }
}

fn zip_with<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn eval<T: Real>(op: &Op<T>, nodes: &[Node<T>]) -> Result<Tensor<T>> {
    let v = |var: &Var| &nodes[var.0].value;
    let out = match op {
        Op::Leaf { .. } => unreachable!("leaves are not evaluated"),
        Op::MatMul(a, b) => matmul(v(a), v(b))?,
        Op::Add(a, b) => {
            same_shape("add", v(a), v(b))?;
            zip_with(v(a), v(b), |x, y| x + y)
        }
        Op::Sub(a, b) => {
            same_shape("sub", v(a), v(b))?;
            zip_with(v(a), v(b), |x, y| x - y)
        }
        Op::Mul(a, b) => {
            same_shape("mul", v(a), v(b))?;
            zip_with(v(a), v(b), |x, y| x * y)
        }
        Op::AddBias(x, b) => {
            let (x, b) = (v(x), v(b));
            if x.rank() == 0 || x.rank() > 2 || b.rank() != 1 || b.len() != x.rows() {
                return Err(Error::shape(
                    "add_bias",
                    format!("{:?} + bias {:?}", x.shape(), b.shape()),
                ));
            }
            let cols = x.cols();
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(k, &val)| val + b.data()[k / cols])
                .collect();
            Tensor::new(x.shape().to_vec(), data)?
        }
        Op::Scale(x, c) => v(x).map(|val| val * *c),
        Op::Tanh(x) => v(x).map(|val| val.tanh()),
        Op::Sigmoid(x) => v(x).map(sigmoid),
        Op::Relu(x) => v(x).map(|val| if val > T::zero() { val } else { T::zero() }),
        Op::Conv1d {
            input,
            filters,
            positions,
        } => conv1d(v(input), v(filters), *positions)?,
        Op::MaxOverTime(x) => {
            let x = v(x);
            if x.rank() != 2 {
                return Err(Error::shape("max_over_time", format!("{:?}", x.shape())));
            }
            let cols = x.cols();
            let data = argmax_rows(x)
                .into_iter()
                .enumerate()
                .map(|(f, t)| x.data()[f * cols + t])
                .collect();
            Tensor::vector(data)
        }
        Op::MeanOverTime(x) => {
            let x = v(x);
            if x.rank() != 2 {
                return Err(Error::shape("mean_over_time", format!("{:?}", x.shape())));
            }
            let n = T::of(x.cols() as f64);
            let data = x
                .data()
                .chunks(x.cols())
                .map(|row| row.iter().fold(T::zero(), |acc, &val| acc + val) / n)
                .collect();
            Tensor::vector(data)
        }
        Op::Concat(parts) => {
            if parts.is_empty() {
                return Err(Error::shape("concat", "no inputs"));
            }
            let mut data = Vec::new();
            for p in parts {
                let t = v(p);
                if t.rank() > 1 {
                    return Err(Error::shape("concat", format!("rank {} input", t.rank())));
                }
                data.extend_from_slice(t.data());
            }
            Tensor::vector(data)
        }
        Op::StackColumns(cols) => {
            let Some(first) = cols.first() else {
                return Err(Error::shape("stack_columns", "no inputs"));
            };
            let m = v(first).len();
            let n = cols.len();
            let mut data = vec![T::zero(); m * n];
            for (j, c) in cols.iter().enumerate() {
                let t = v(c);
                if t.rank() != 1 || t.len() != m {
                    return Err(Error::shape(
                        "stack_columns",
                        format!("column {j} has shape {:?}, expected [{m}]", t.shape()),
                    ));
                }
                for (i, &val) in t.data().iter().enumerate() {
                    data[i * n + j] = val;
                }
            }
            Tensor::matrix(m, n, data)?
        }
        Op::Column(x, j) => {
            let x = v(x);
            if x.rank() != 2 || *j >= x.cols() {
                return Err(Error::shape("column", format!("column {j} of {:?}", x.shape())));
            }
            Tensor::vector((0..x.rows()).map(|i| x.at(i, *j)).collect())
        }
        Op::SqDist(x, target) => {
            same_shape("sq_dist", v(x), target)?;
            let s = v(x)
                .data()
                .iter()
                .zip(target.data())
                .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            Tensor::scalar(s)
        }
        Op::SoftmaxXent(z, target) => {
            let z = v(z);
            if z.rank() != 1 || *target >= z.len() {
                return Err(Error::shape(
                    "softmax_cross_entropy",
                    format!("target {target} for logits {:?}", z.shape()),
                ));
            }
            Tensor::scalar(log_sum_exp(z.data()) - z.data()[*target])
        }
        Op::Sum(x) => Tensor::scalar(v(x).data().iter().fold(T::zero(), |acc, &val| acc + val)),
        Op::Lookup { table, ids } => {
            let table = v(table);
            if table.rank() != 2 || ids.is_empty() {
                return Err(Error::shape("lookup", format!("table {:?}", table.shape())));
            }
            let (rows, d) = (table.rows(), table.cols());
            let t = ids.len();
            let mut data = vec![T::zero(); d * t];
            for (col, id) in ids.iter().enumerate() {
                if let Some(id) = *id {
                    if id >= rows {
                        return Err(Error::shape("lookup", format!("row {id} of {rows}")));
                    }
                    for i in 0..d {
                        data[i * t + col] = table.data()[id * d + i];
                    }
                }
            }
            Tensor::matrix(d, t, data)?
        }
    };
    if !out.is_finite() {
        return Err(Error::NonFinite(op.name()));
    }
    Ok(out)
}

fn log_sum_exp<T: Real>(z: &[T]) -> T {
    let max = z.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let s = z.iter().fold(T::zero(), |acc, &x| acc + (x - max).exp());
    max + s.ln()
}

fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() == 0 || b.rank() > 2 || a.cols() != b.rows() {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let (m, k) = (a.rows(), a.cols());
    let n = b.cols();
    let mut out = vec![T::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aik = ad[i * k + p];
            if aik == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *o = *o + aik * bv;
            }
        }
    }
    if b.rank() == 1 {
        Ok(Tensor::vector(out))
    } else {
        Tensor::matrix(m, n, out)
    }
}

/// `[d, T]` to row-major `[T, d]` so each window is contiguous.
fn transpose<T: Real>(x: &Tensor<T>) -> Vec<T> {
    let (r, c) = (x.rows(), x.cols());
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = x.data()[i * c + j];
        }
    }
    out
}

fn conv_dims<T: Real>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    positions: usize,
) -> Result<(usize, usize, usize, usize)> {
    if input.rank() != 2 || filters.rank() != 3 || filters.shape()[2] != input.rows() {
        return Err(Error::shape(
            "conv1d",
            format!("input {:?}, filters {:?}", input.shape(), filters.shape()),
        ));
    }
    let (d, len) = (input.rows(), input.cols());
    let (f, h) = (filters.shape()[0], filters.shape()[1]);
    if h > len {
        return Err(Error::WindowTooLarge { window: h, len });
    }
    if positions == 0 || positions > len + 1 - h {
        return Err(Error::shape(
            "conv1d",
            format!("{positions} positions for window {h} over length {len}"),
        ));
    }
    Ok((d, f, h, len))
}

fn conv1d<T: Real>(input: &Tensor<T>, filters: &Tensor<T>, positions: usize) -> Result<Tensor<T>> {
    let (d, f, h, _) = conv_dims(input, filters, positions)?;
    let cols = transpose(input);
    let span = h * d;
    let mut out = vec![T::zero(); f * positions];
    for (fi, w) in filters.data().chunks(span).enumerate() {
        for t in 0..positions {
            let window = &cols[t * d..t * d + span];
            out[fi * positions + t] = w
                .iter()
                .zip(window)
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        }
    }
    Tensor::matrix(f, positions, out)
}

fn input_grads<T: Real>(
    op: &Op<T>,
    nodes: &[Node<T>],
    out: &Tensor<T>,
    g: &Tensor<T>,
) -> Result<Vec<(Var, Tensor<T>)>> {
    let v = |var: &Var| &nodes[var.0].value;
    let wants = |var: &Var| nodes[var.0].needs_grad;
    let grads = match op {
        Op::Leaf { .. } => Vec::new(),
        Op::MatMul(a, b) => {
            let (av, bv) = (v(a), v(b));
            let (m, k) = (av.rows(), av.cols());
            let n = bv.cols();
            let mut res = Vec::new();
            if wants(a) {
                let mut da = vec![T::zero(); m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut s = T::zero();
                        for j in 0..n {
                            s = s + g.data()[i * n + j] * bv.data()[p * n + j];
                        }
                        da[i * k + p] = s;
                    }
                }
                res.push((*a, Tensor::new(av.shape().to_vec(), da)?));
            }
            if wants(b) {
                let mut db = vec![T::zero(); k * n];
                for i in 0..m {
                    for p in 0..k {
                        let aik = av.data()[i * k + p];
                        for j in 0..n {
                            db[p * n + j] = db[p * n + j] + aik * g.data()[i * n + j];
                        }
                    }
                }
                res.push((*b, Tensor::new(bv.shape().to_vec(), db)?));
            }
            res
        }
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
        Op::Mul(a, b) => vec![
            (*a, zip_with(g, v(b), |x, y| x * y)),
            (*b, zip_with(g, v(a), |x, y| x * y)),
        ],
        Op::AddBias(x, b) => {
            let cols = v(x).cols();
            let db = g
                .data()
                .chunks(cols)
                .map(|row| row.iter().fold(T::zero(), |acc, &val| acc + val))
                .collect();
            vec![(*x, g.clone()), (*b, Tensor::vector(db))]
        }
        Op::Scale(x, c) => vec![(*x, g.map(|val| val * *c))],
        Op::Tanh(x) => vec![(*x, zip_with(g, out, |gi, y| gi * (T::one() - y * y)))],
        Op::Sigmoid(x) => vec![(*x, zip_with(g, out, |gi, y| gi * y * (T::one() - y)))],
        Op::Relu(x) => vec![(
            *x,
            zip_with(g, v(x), |gi, xi| if xi > T::zero() { gi } else { T::zero() }),
        )],
        Op::Conv1d {
            input,
            filters,
            positions,
        } => {
            let (iv, fv) = (v(input), v(filters));
            let (d, f, h, len) = conv_dims(iv, fv, *positions)?;
            let span = h * d;
            let cols = transpose(iv);
            let mut res = Vec::new();
            if wants(filters) {
                let mut dw = vec![T::zero(); f * span];
                for fi in 0..f {
                    let dwf = &mut dw[fi * span..(fi + 1) * span];
                    for t in 0..*positions {
                        let gt = g.data()[fi * positions + t];
                        if gt == T::zero() {
                            continue;
                        }
                        for (o, &x) in dwf.iter_mut().zip(&cols[t * d..t * d + span]) {
                            *o = *o + gt * x;
                        }
                    }
                }
                res.push((*filters, Tensor::new(fv.shape().to_vec(), dw)?));
            }
            if wants(input) {
                let mut dcols = vec![T::zero(); len * d];
                for (fi, w) in fv.data().chunks(span).enumerate() {
                    for t in 0..*positions {
                        let gt = g.data()[fi * positions + t];
                        if gt == T::zero() {
                            continue;
                        }
                        for (o, &wv) in dcols[t * d..t * d + span].iter_mut().zip(w) {
                            *o = *o + gt * wv;
                        }
                    }
                }
                let mut dx = vec![T::zero(); d * len];
                for t in 0..len {
                    for i in 0..d {
                        dx[i * len + t] = dcols[t * d + i];
                    }
                }
                res.push((*input, Tensor::matrix(d, len, dx)?));
            }
            res
        }
        Op::MaxOverTime(x) => {
            let xv = v(x);
            let cols = xv.cols();
            let mut dx = Tensor::zeros(xv.shape());
            for (f, t) in argmax_rows(xv).into_iter().enumerate() {
                dx.data_mut()[f * cols + t] = g.data()[f];
            }
            vec![(*x, dx)]
        }
        Op::MeanOverTime(x) => {
            let xv = v(x);
            let cols = xv.cols();
            let n = T::of(cols as f64);
            let data = (0..xv.len()).map(|k| g.data()[k / cols] / n).collect();
            vec![(*x, Tensor::new(xv.shape().to_vec(), data)?)]
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            let mut res = Vec::with_capacity(parts.len());
            for p in parts {
                let pv = v(p);
                let n = pv.len();
                let slice = g.data()[offset..offset + n].to_vec();
                res.push((*p, Tensor::new(pv.shape().to_vec(), slice)?));
                offset += n;
            }
            res
        }
        Op::StackColumns(cols) => {
            let n = cols.len();
            cols.iter()
                .enumerate()
                .map(|(j, c)| {
                    let m = v(c).len();
                    (*c, Tensor::vector((0..m).map(|i| g.data()[i * n + j]).collect()))
                })
                .collect()
        }
        Op::Column(x, j) => {
            let xv = v(x);
            let cols = xv.cols();
            let mut dx = Tensor::zeros(xv.shape());
            for (i, &gi) in g.data().iter().enumerate() {
                dx.data_mut()[i * cols + j] = gi;
            }
            vec![(*x, dx)]
        }
        Op::SqDist(x, target) => {
            let gs = g.data()[0];
            let two = T::of(2.0);
            vec![(*x, zip_with(v(x), target, |a, b| two * gs * (a - b)))]
        }
        Op::SoftmaxXent(z, target) => {
            let zv = v(z);
            let gs = g.data()[0];
            let lse = log_sum_exp(zv.data());
            let mut dz: Vec<T> = zv.data().iter().map(|&x| gs * (x - lse).exp()).collect();
            dz[*target] = dz[*target] - gs;
            vec![(*z, Tensor::vector(dz))]
        }
        Op::Sum(x) => vec![(*x, Tensor::filled(v(x).shape(), g.data()[0]))],
        Op::Lookup { table, ids } => {
            let tv = v(table);
            let d = tv.cols();
            let t = ids.len();
            let mut dt = Tensor::zeros(tv.shape());
            for (col, id) in ids.iter().enumerate() {
                if let Some(id) = *id {
                    for i in 0..d {
                        let slot = &mut dt.data_mut()[id * d + i];
                        *slot = *slot + g.data()[i * t + col];
                    }
                }
            }
            vec![(*table, dt)]
        }
    };
    Ok(grads)
}
