use rand::Rng;

use super::kernels::{gemm, MatRef};
use super::{NumericsError, Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize, trans_b: bool },
    Add { a: usize, b: usize, broadcast: bool },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, factor: Real },
    AddScalar { a: usize },
    Square { a: usize },
    Sqrt { a: usize },
    Sum { a: usize },
    Concat { parts: Vec<usize> },
    Relu { a: usize },
    SoftmaxRows { a: usize },
    // y = a / Σ exp(a) per row; keeps 1/Σexp and softmax(a) for backward.
    ExpNormalizeRows { a: usize, scale: Vec<Real>, soft: Vec<Real> },
    LayerNorm {
        a: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<Real>,
        inv_std: Vec<Real>,
    },
    Dropout { a: usize, mask: Vec<Real> },
    GatherRows { table: usize, indices: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, which is a topological order because
/// every operation's inputs must already exist on the tape.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<Real>>>,
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push_node(value, requires_grad, Op::Leaf)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient populated by the last [`Tape::backward`], if `v` received one.
    pub fn grad(&self, v: Var) -> Option<&[Real]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn node(&self, v: Var) -> Result<&Node, NumericsError> {
        self.nodes.get(v.0).ok_or(NumericsError::UnknownVar(v.0))
    }

    fn push_node(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, inputs: &[usize], op: Op) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.push_node(value, requires_grad, op)
    }

    /// `a·b` for `a: [m×k]`, `b: [k×p]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.matmul_impl(a, b, false)
    }

    /// `a·bᵀ` for `a: [m×k]`, `b: [p×k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, NumericsError> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        let mismatch = || NumericsError::ShapeMismatch {
            op: "matmul",
            left: av.shape().to_vec(),
            right: bv.shape().to_vec(),
        };
        let (m, k) = av.dims2().map_err(|_| mismatch())?;
        let (br, bc) = bv.dims2().map_err(|_| mismatch())?;
        let mut bref = MatRef::row_major(bv.data(), br, bc);
        if trans_b {
            bref = bref.t();
        }
        if bref.rows != k {
            return Err(mismatch());
        }
        let p = bref.cols;
        let mut out = vec![0.0; m * p];
        gemm(MatRef::row_major(av.data(), m, k), bref, &mut out, 0.0);
        let value = Tensor::matrix(m, p, out)?;
        Ok(self.push(
            value,
            &[a.0, b.0],
            Op::MatMul {
                a: a.0,
                b: b.0,
                trans_b,
            },
        ))
    }

    /// Elementwise sum. `b` may also be a bias row (`[d]` or `[1×d]`) added to
    /// every last-axis slice of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
            let value = Tensor::new(av.shape().to_vec(), data)?;
            return Ok(self.push(
                value,
                &[a.0, b.0],
                Op::Add {
                    a: a.0,
                    b: b.0,
                    broadcast: false,
                },
            ));
        }
        let is_row = match bv.shape() {
            [_] => true,
            [1, _] => true,
            _ => false,
        };
        if !is_row || bv.last_dim() != av.last_dim() {
            return Err(NumericsError::ShapeMismatch {
                op: "add",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let d = av.last_dim();
        let bias = bv.data();
        let mut data = av.data().to_vec();
        for row in data.chunks_exact_mut(d) {
            for (x, y) in row.iter_mut().zip(bias) {
                *x += y;
            }
        }
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(
            value,
            &[a.0, b.0],
            Op::Add {
                a: a.0,
                b: b.0,
                broadcast: true,
            },
        ))
    }

    fn zip_same(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(Real, Real) -> Real,
    ) -> Result<Tensor, NumericsError> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        if av.shape() != bv.shape() {
            return Err(NumericsError::ShapeMismatch {
                op,
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, &[a.0, b.0], Op::Sub { a: a.0, b: b.0 }))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, &[a.0, b.0], Op::Mul { a: a.0, b: b.0 }))
    }

    pub fn scale(&mut self, a: Var, factor: Real) -> Result<Var, NumericsError> {
        let value = self.node(a)?.value.map(|x| x * factor);
        Ok(self.push(value, &[a.0], Op::Scale { a: a.0, factor }))
    }

    pub fn add_scalar(&mut self, a: Var, c: Real) -> Result<Var, NumericsError> {
        let value = self.node(a)?.value.map(|x| x + c);
        Ok(self.push(value, &[a.0], Op::AddScalar { a: a.0 }))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NumericsError> {
        let value = self.node(a)?.value.map(|x| x * x);
        Ok(self.push(value, &[a.0], Op::Square { a: a.0 }))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var, NumericsError> {
        let av = &self.node(a)?.value;
        if av.data().iter().any(|&x| !(x >= 0.0)) {
            return Err(NumericsError::InvalidArgument {
                op: "sqrt",
                reason: "negative or NaN input".into(),
            });
        }
        let value = av.map(Real::sqrt);
        Ok(self.push(value, &[a.0], Op::Sqrt { a: a.0 }))
    }

    /// Sum of all entries, in index order, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let total = self.node(a)?.value.data().iter().fold(0.0, |s, &x| s + x);
        Ok(self.push(Tensor::scalar(total), &[a.0], Op::Sum { a: a.0 }))
    }

    /// Concatenates along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = parts.first().ok_or(NumericsError::EmptyConcat)?;
        let lead = self.node(*first)?.value.shape().split_last().unwrap().1.to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.node(p)?.value.shape();
            let (last, rest) = s.split_last().unwrap();
            if rest != lead.as_slice() {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat",
                    left: self.nodes[first.0].value.shape().to_vec(),
                    right: s.to_vec(),
                });
            }
            widths.push(*last);
        }
        let total: usize = widths.iter().sum();
        let outer: usize = lead.iter().product();
        let mut data = Vec::with_capacity(outer * total);
        for r in 0..outer {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.nodes[p.0].value.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, data)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(value, &ids, Op::Concat { parts: ids.clone() }))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericsError> {
        let value = self.node(a)?.value.map(|x| if x > 0.0 { x } else { 0.0 });
        Ok(self.push(value, &[a.0], Op::Relu { a: a.0 }))
    }

    /// Numerically stabilized softmax over each last-axis row.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, NumericsError> {
        let av = &self.node(a)?.value;
        if !av.all_finite() {
            return Err(NumericsError::NonFinite { op: "softmax_rows" });
        }
        let d = av.last_dim();
        let mut data = av.data().to_vec();
        for row in data.chunks_exact_mut(d) {
            let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, &[a.0], Op::SoftmaxRows { a: a.0 }))
    }

    /// Row normalization with a raw numerator: `y[i][j] = a[i][j] / Σ_u exp(a[i][u])`.
    pub fn exp_normalize_rows(&mut self, a: Var) -> Result<Var, NumericsError> {
        let av = &self.node(a)?.value;
        if !av.all_finite() {
            return Err(NumericsError::NonFinite {
                op: "exp_normalize_rows",
            });
        }
        let d = av.last_dim();
        let rows = av.outer_len();
        let mut out = Vec::with_capacity(av.len());
        let mut soft = Vec::with_capacity(av.len());
        let mut scale = Vec::with_capacity(rows);
        for row in av.data().chunks_exact(d) {
            let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
            let start = soft.len();
            let mut total = 0.0;
            for &x in row {
                let e = (x - max).exp();
                soft.push(e);
                total += e;
            }
            soft[start..].iter_mut().for_each(|e| *e /= total);
            let s = (-max).exp() / total;
            out.extend(row.iter().map(|&x| x * s));
            scale.push(s);
        }
        let value = Tensor::new(av.shape().to_vec(), out)?;
        Ok(self.push(
            value,
            &[a.0],
            Op::ExpNormalizeRows {
                a: a.0,
                scale,
                soft,
            },
        ))
    }

    /// Normalizes each last-axis slice to zero mean and unit variance, then
    /// applies `gamma` and `beta` (both `[d]`).
    pub fn layer_norm(
        &mut self,
        a: Var,
        gamma: Var,
        beta: Var,
        eps: Real,
    ) -> Result<Var, NumericsError> {
        if !(eps > 0.0) {
            return Err(NumericsError::InvalidArgument {
                op: "layer_norm",
                reason: format!("eps must be positive, got {eps}"),
            });
        }
        let av = &self.node(a)?.value;
        let (gv, bv) = (&self.node(gamma)?.value, &self.node(beta)?.value);
        let d = av.last_dim();
        if gv.len() != d || bv.len() != d {
            return Err(NumericsError::ShapeMismatch {
                op: "layer_norm",
                left: av.shape().to_vec(),
                right: gv.shape().to_vec(),
            });
        }
        let rows = av.outer_len();
        let mut xhat = Vec::with_capacity(av.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(av.len());
        for row in av.data().chunks_exact(d) {
            let mean = row.iter().fold(0.0, |s, &x| s + x) / d as Real;
            let var = row.iter().fold(0.0, |s, &x| s + (x - mean) * (x - mean)) / d as Real;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &x) in row.iter().enumerate() {
                let h = (x - mean) * is;
                xhat.push(h);
                out.push(h * gv.data()[j] + bv.data()[j]);
            }
        }
        let value = Tensor::new(av.shape().to_vec(), out)?;
        Ok(self.push(
            value,
            &[a.0, gamma.0, beta.0],
            Op::LayerNorm {
                a: a.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
            },
        ))
    }

    /// Inverted dropout. Outside training, or at rate 0, returns `a` itself.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: Real,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, NumericsError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumericsError::InvalidArgument {
                op: "dropout",
                reason: format!("rate must lie in [0, 1), got {rate}"),
            });
        }
        let av = &self.node(a)?.value;
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let mask: Vec<Real> = (0..av.len())
            .map(|_| {
                if rng.random::<Real>() < rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let data = av.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, &[a.0], Op::Dropout { a: a.0, mask }))
    }

    /// Selects rows of a `[V×d]` table; equivalent to a one-hot matrix product.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var, NumericsError> {
        let tv = &self.node(table)?.value;
        let (rows, d) = tv.dims2()?;
        if indices.is_empty() {
            return Err(NumericsError::InvalidArgument {
                op: "gather_rows",
                reason: "no indices".into(),
            });
        }
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= rows {
                return Err(NumericsError::IndexOutOfRange {
                    index: i,
                    len: rows,
                });
            }
            data.extend_from_slice(tv.row(i));
        }
        let value = Tensor::matrix(indices.len(), d, data)?;
        Ok(self.push(
            value,
            &[table.0],
            Op::GatherRows {
                table: table.0,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a scalar loss. Clears gradients from any earlier sweep.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericsError> {
        self.backward_scaled(loss, 1.0)
    }

    /// Like [`Tape::backward`] but seeds `d loss = seed` instead of 1.
    pub fn backward_scaled(&mut self, loss: Var, seed: Real) -> Result<(), NumericsError> {
        let shape = self.node(loss)?.value.shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(NumericsError::NonScalarLoss {
                shape: shape.to_vec(),
            });
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![seed]);

        let Tape { nodes, grads } = self;
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            backprop_node(nodes, grads, i, &g);
            grads[i] = Some(g);
        }
        Ok(())
    }
}

/// Gradient buffer for `id`, allocated on first use; `None` for nodes that
/// do not require a gradient.
fn slot<'g>(
    nodes: &[Node],
    grads: &'g mut [Option<Vec<Real>>],
    id: usize,
) -> Option<&'g mut Vec<Real>> {
    if !nodes[id].requires_grad {
        return None;
    }
    Some(grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]))
}

fn acc_each(
    nodes: &[Node],
    grads: &mut [Option<Vec<Real>>],
    id: usize,
    f: impl Fn(usize) -> Real,
) {
    if let Some(buf) = slot(nodes, grads, id) {
        for (j, x) in buf.iter_mut().enumerate() {
            *x += f(j);
        }
    }
}

fn backprop_node(nodes: &[Node], grads: &mut [Option<Vec<Real>>], i: usize, g: &[Real]) {
    match &nodes[i].op {
        Op::Leaf => {}
        &Op::MatMul { a, b, trans_b } => {
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            let (m, k) = av.dims2().unwrap();
            let (br, bc) = bv.dims2().unwrap();
            let p = nodes[i].value.last_dim();
            let gref = MatRef::row_major(g, m, p);
            let aref = MatRef::row_major(av.data(), m, k);
            let bstored = MatRef::row_major(bv.data(), br, bc);
            if let Some(da) = slot(nodes, grads, a) {
                // dA = G·Bᵀ, where B is the effective right operand.
                let b_eff_t = if trans_b { bstored } else { bstored.t() };
                gemm(gref, b_eff_t, da, 1.0);
            }
            if let Some(db) = slot(nodes, grads, b) {
                if trans_b {
                    gemm(gref.t(), aref, db, 1.0);
                } else {
                    gemm(aref.t(), gref, db, 1.0);
                }
            }
        }
        &Op::Add { a, b, broadcast } => {
            acc_each(nodes, grads, a, |j| g[j]);
            if broadcast {
                if let Some(db) = slot(nodes, grads, b) {
                    let d = db.len();
                    for row in g.chunks_exact(d) {
                        for (x, y) in db.iter_mut().zip(row) {
                            *x += y;
                        }
                    }
                }
            } else {
                acc_each(nodes, grads, b, |j| g[j]);
            }
        }
        &Op::Sub { a, b } => {
            acc_each(nodes, grads, a, |j| g[j]);
            acc_each(nodes, grads, b, |j| -g[j]);
        }
        &Op::Mul { a, b } => {
            let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
            acc_each(nodes, grads, a, |j| g[j] * bv[j]);
            acc_each(nodes, grads, b, |j| g[j] * av[j]);
        }
        &Op::Scale { a, factor } => acc_each(nodes, grads, a, |j| g[j] * factor),
        &Op::AddScalar { a } => acc_each(nodes, grads, a, |j| g[j]),
        &Op::Square { a } => {
            let av = nodes[a].value.data();
            acc_each(nodes, grads, a, |j| 2.0 * av[j] * g[j]);
        }
        &Op::Sqrt { a } => {
            let y = nodes[i].value.data();
            // Zero at the kink: the one-sided derivative is unbounded.
            acc_each(nodes, grads, a, |j| if y[j] > 0.0 { g[j] / (2.0 * y[j]) } else { 0.0 });
        }
        &Op::Sum { a } => acc_each(nodes, grads, a, |_| g[0]),
        Op::Concat { parts } => {
            let total = nodes[i].value.last_dim();
            let outer = nodes[i].value.outer_len();
            let mut offset = 0;
            for &p in parts {
                let w = nodes[p].value.last_dim();
                acc_each(nodes, grads, p, |j| g[(j / w) * total + offset + j % w]);
                offset += w;
            }
            debug_assert_eq!(offset, total);
            debug_assert!(outer > 0);
        }
        &Op::Relu { a } => {
            let av = nodes[a].value.data();
            acc_each(nodes, grads, a, |j| if av[j] > 0.0 { g[j] } else { 0.0 });
        }
        &Op::SoftmaxRows { a } => {
            let y = nodes[i].value.data();
            let d = nodes[i].value.last_dim();
            if let Some(da) = slot(nodes, grads, a) {
                for ((dr, yr), gr) in da
                    .chunks_exact_mut(d)
                    .zip(y.chunks_exact(d))
                    .zip(g.chunks_exact(d))
                {
                    let dot = yr.iter().zip(gr).fold(0.0, |s, (y, g)| s + y * g);
                    for ((x, &yj), &gj) in dr.iter_mut().zip(yr).zip(gr) {
                        *x += yj * (gj - dot);
                    }
                }
            }
        }
        Op::ExpNormalizeRows { a, scale, soft } => {
            let y = nodes[i].value.data();
            let d = nodes[i].value.last_dim();
            if let Some(da) = slot(nodes, grads, *a) {
                for (r, &s) in scale.iter().enumerate() {
                    let span = r * d..(r + 1) * d;
                    let dot = y[span.clone()]
                        .iter()
                        .zip(&g[span.clone()])
                        .fold(0.0, |acc, (y, g)| acc + y * g);
                    for j in span {
                        da[j] += g[j] * s - dot * soft[j];
                    }
                }
            }
        }
        Op::LayerNorm {
            a,
            gamma,
            beta,
            xhat,
            inv_std,
        } => {
            let d = nodes[i].value.last_dim();
            let gam = nodes[*gamma].value.data();
            if let Some(dg) = slot(nodes, grads, *gamma) {
                for (gr, hr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                    for ((x, g), h) in dg.iter_mut().zip(gr).zip(hr) {
                        *x += g * h;
                    }
                }
            }
            if let Some(db) = slot(nodes, grads, *beta) {
                for gr in g.chunks_exact(d) {
                    for (x, g) in db.iter_mut().zip(gr) {
                        *x += g;
                    }
                }
            }
            if let Some(da) = slot(nodes, grads, *a) {
                let mut dxhat = vec![0.0; d];
                for (r, &is) in inv_std.iter().enumerate() {
                    let gr = &g[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..d {
                        dxhat[j] = gr[j] * gam[j];
                        mean_dh += dxhat[j];
                        mean_dh_h += dxhat[j] * hr[j];
                    }
                    mean_dh /= d as Real;
                    mean_dh_h /= d as Real;
                    for j in 0..d {
                        da[r * d + j] += is * (dxhat[j] - mean_dh - hr[j] * mean_dh_h);
                    }
                }
            }
        }
        Op::Dropout { a, mask } => acc_each(nodes, grads, *a, |j| g[j] * mask[j]),
        Op::GatherRows { table, indices } => {
            let d = nodes[i].value.last_dim();
            if let Some(dt) = slot(nodes, grads, *table) {
                for (r, &src) in indices.iter().enumerate() {
                    for j in 0..d {
                        dt[src * d + j] += g[r * d + j];
                    }
                }
            }
        }
    }
}
