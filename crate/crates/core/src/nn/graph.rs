use super::kernels::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{shape_err, NnError, Real, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    AddConst(Var),
    Scale(Var, T),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Relu(Var),
    Softmax(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    MeanRows { x: Var, count: usize },
    Sigmoid(Var),
    Bce { p: Var, targets: Vec<T> },
    WeightedSum { x: Var, weights: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Lower clamp for probabilities fed to [`Graph::bce`].
pub const BCE_CLAMP: f64 = 1e-7;

/// A tape of tensor operations.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant data; no gradient is accumulated for it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (n, k) = self.value(a).dims2();
        let (k2, m) = self.value(b).dims2();
        if k != k2 {
            return Err(shape_err("matmul", format!("[{n}x{k}] · [{k2}x{m}]")));
        }
        let mut out = vec![T::zero(); n * m];
        matmul_acc(self.value(a).data(), self.value(b).data(), n, k, m, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[n, m], out)?, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (n, k) = self.value(a).dims2();
        let (m, k2) = self.value(b).dims2();
        if k != k2 {
            return Err(shape_err("matmul_bt", format!("[{n}x{k}] · [{m}x{k2}]ᵀ")));
        }
        let mut out = vec![T::zero(); n * m];
        matmul_bt_acc(self.value(a).data(), self.value(b).data(), n, k, m, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[n, m], out)?, Op::MatMulBt(a, b), rg))
    }

    /// Adds a length-`m` bias to every row of an `n×m` tensor.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, NnError> {
        let (n, m) = self.value(x).dims2();
        if self.value(b).len() != m {
            return Err(shape_err(
                "add_bias",
                format!("bias of {} for {m} columns", self.value(b).len()),
            ));
        }
        let bias = self.value(b).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_exact_mut(m) {
            for (o, &bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(Tensor::new(&[n, m], out)?, Op::AddBias(x, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(
                "add",
                format!("{:?} + {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Add(a, b), rg))
    }

    /// Adds a constant tensor of identical shape.
    pub fn add_const(&mut self, x: Var, c: &Tensor<T>) -> Result<Var, NnError> {
        if self.value(x).shape() != c.shape() {
            return Err(shape_err(
                "add_const",
                format!("{:?} + {:?}", self.value(x).shape(), c.shape()),
            ));
        }
        let out: Vec<T> = self
            .value(x)
            .data()
            .iter()
            .zip(c.data())
            .map(|(&a, &b)| a + b)
            .collect();
        let shape = c.shape().to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&shape, out)?, Op::AddConst(x), rg))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let v = self.value(x);
        let out = Tensor::from_fn(v.shape(), |i| v.data()[i] * s);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, s), rg)
    }

    /// Normalizes each row to zero mean and unit variance, then applies
    /// `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var, NnError> {
        let (n, d) = self.value(x).dims2();
        if d == 0 || self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(shape_err(
                "layer_norm",
                format!(
                    "width {d}, gain {}, bias {}",
                    self.value(gain).len(),
                    self.value(bias).len()
                ),
            ));
        }
        let xs = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let dt = T::from_usize(d).unwrap();
        let mut xhat = vec![T::zero(); n * d];
        let mut rstd = vec![T::zero(); n];
        let mut out = vec![T::zero(); n * d];
        for r in 0..n {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dt;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dt;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let shape = self.value(x).shape().to_vec();
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Tensor::from_fn(v.shape(), |i| v.data()[i].max(T::zero()));
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Tensor::from_fn(v.shape(), |i| sigmoid(v.data()[i]));
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    /// Row-wise softmax. `key_mask[j] == false` excludes column `j` (its
    /// weight is exactly zero). A row whose every column is masked falls
    /// back to an unmasked softmax.
    pub fn softmax_rows(&mut self, x: Var, key_mask: Option<&[bool]>) -> Result<Var, NnError> {
        let (n, m) = self.value(x).dims2();
        if let Some(mask) = key_mask {
            if mask.len() != m {
                return Err(shape_err("softmax", format!("mask of {} for {m} keys", mask.len())));
            }
        }
        let mask = key_mask.filter(|mk| mk.iter().any(|&k| k));
        let xs = self.value(x).data();
        let mut out = vec![T::zero(); n * m];
        for r in 0..n {
            let row = &xs[r * m..(r + 1) * m];
            let keep = |j: usize| mask.map_or(true, |mk| mk[j]);
            let mut max = T::neg_infinity();
            for (j, &v) in row.iter().enumerate() {
                if keep(j) && v > max {
                    max = v;
                }
            }
            let orow = &mut out[r * m..(r + 1) * m];
            let mut sum = T::zero();
            for (j, (o, &v)) in orow.iter_mut().zip(row).enumerate() {
                if keep(j) {
                    *o = (v - max).exp();
                    sum += *o;
                }
            }
            for o in orow.iter_mut() {
                *o /= sum;
            }
        }
        let shape = self.value(x).shape().to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Softmax(x), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let (n, m) = self.value(x).dims2();
        if start + len > m {
            return Err(shape_err("slice_cols", format!("{start}+{len} of {m} columns")));
        }
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&xs[r * m + start..r * m + start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&[n, len], out)?, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let n = parts
            .first()
            .map(|p| self.value(*p).dims2().0)
            .ok_or_else(|| shape_err("concat_cols", "no inputs"))?;
        let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).dims2().1).collect();
        if parts.iter().any(|p| self.value(*p).dims2().0 != n) {
            return Err(shape_err("concat_cols", "row counts differ"));
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for r in 0..n {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data()[r * w..(r + 1) * w]);
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(Tensor::new(&[n, total], out)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Mean over the first `count` rows, giving a `1×m` tensor.
    pub fn mean_rows(&mut self, x: Var, count: usize) -> Result<Var, NnError> {
        let (n, m) = self.value(x).dims2();
        if count == 0 || count > n {
            return Err(shape_err("mean_rows", format!("{count} of {n} rows")));
        }
        let xs = self.value(x).data();
        let mut out = vec![T::zero(); m];
        for r in 0..count {
            for (o, &v) in out.iter_mut().zip(&xs[r * m..(r + 1) * m]) {
                *o += v;
            }
        }
        let c = T::from_usize(count).unwrap();
        for o in &mut out {
            *o /= c;
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&[1, m], out)?, Op::MeanRows { x, count }, rg))
    }

    /// Mean binary cross-entropy; probabilities are clamped to
    /// `[1e-7, 1 - 1e-7]` and clamped entries pass no gradient.
    pub fn bce(&mut self, p: Var, targets: &[T]) -> Result<Var, NnError> {
        let probs = self.value(p).data();
        if probs.len() != targets.len() || probs.is_empty() {
            return Err(shape_err(
                "bce",
                format!("{} probabilities, {} targets", probs.len(), targets.len()),
            ));
        }
        let lo = T::lit(BCE_CLAMP);
        let hi = T::one() - lo;
        let mut loss = T::zero();
        for (&pv, &t) in probs.iter().zip(targets) {
            let q = pv.max(lo).min(hi);
            loss -= t * q.ln() + (T::one() - t) * (T::one() - q).ln();
        }
        loss /= T::from_usize(targets.len()).unwrap();
        let rg = self.rg(p);
        Ok(self.push(
            Tensor::new(&[1], vec![loss])?,
            Op::Bce {
                p,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// `Σ x ⊙ w` as a scalar; handy for probing gradients of any node.
    pub fn weighted_sum(&mut self, x: Var, weights: &[T]) -> Result<Var, NnError> {
        if self.value(x).len() != weights.len() {
            return Err(shape_err("weighted_sum", "weights do not match"));
        }
        let s = self
            .value(x)
            .data()
            .iter()
            .zip(weights)
            .map(|(&a, &b)| a * b)
            .sum();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(&[1], vec![s])?,
            Op::WeightedSum {
                x,
                weights: weights.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.rg(v) {
            return None;
        }
        let len = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.value(*a).dims2();
                let (_, m) = self.value(*b).dims2();
                if let Some(da) = self.slot(grads, *a) {
                    matmul_bt_acc(g, self.value(*b).data(), n, m, k, da);
                }
                if let Some(db) = self.slot(grads, *b) {
                    matmul_at_acc(self.value(*a).data(), g, n, k, m, db);
                }
            }
            Op::MatMulBt(a, b) => {
                let (n, k) = self.value(*a).dims2();
                let (m, _) = self.value(*b).dims2();
                if let Some(da) = self.slot(grads, *a) {
                    matmul_acc(g, self.value(*b).data(), n, m, k, da);
                }
                if let Some(db) = self.slot(grads, *b) {
                    matmul_at_acc(g, self.value(*a).data(), n, m, k, db);
                }
            }
            Op::AddBias(x, b) => {
                let m = self.value(*b).len();
                if let Some(dx) = self.slot(grads, *x) {
                    add_into(dx, g);
                }
                if let Some(db) = self.slot(grads, *b) {
                    for row in g.chunks_exact(m) {
                        add_into(db, row);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = self.slot(grads, *a) {
                    add_into(da, g);
                }
                if let Some(db) = self.slot(grads, *b) {
                    add_into(db, g);
                }
            }
            Op::AddConst(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    add_into(dx, g);
                }
            }
            Op::Scale(x, s) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for (d, &gv) in dx.iter_mut().zip(g) {
                        *d += gv * *s;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = self.value(*gain).len();
                if let Some(dg) = self.slot(grads, *gain) {
                    for (grow, hrow) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            dg[j] += grow[j] * hrow[j];
                        }
                    }
                }
                if let Some(db) = self.slot(grads, *bias) {
                    for grow in g.chunks_exact(d) {
                        add_into(db, grow);
                    }
                }
                let gain_v = self.value(*gain).data().to_vec();
                if let Some(dx) = self.slot(grads, *x) {
                    let dt = T::from_usize(d).unwrap();
                    for (r, (grow, hrow)) in g.chunks_exact(d).zip(xhat.chunks_exact(d)).enumerate() {
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..d {
                            let dh = grow[j] * gain_v[j];
                            m1 += dh;
                            m2 += dh * hrow[j];
                        }
                        m1 /= dt;
                        m2 /= dt;
                        for j in 0..d {
                            let dh = grow[j] * gain_v[j];
                            dx[r * d + j] += rstd[r] * (dh - m1 - hrow[j] * m2);
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xs = self.value(*x).data().to_vec();
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, &gv), &xv) in dx.iter_mut().zip(g).zip(&xs) {
                        if xv > T::zero() {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, &gv), &yv) in dx.iter_mut().zip(g).zip(y) {
                        *d += gv * yv * (T::one() - yv);
                    }
                }
            }
            Op::Softmax(x) => {
                let (_, m) = node.value.dims2();
                let y = node.value.data();
                if let Some(dx) = self.slot(grads, *x) {
                    for (r, (grow, yrow)) in g.chunks_exact(m).zip(y.chunks_exact(m)).enumerate() {
                        let dot: T = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                        for j in 0..m {
                            dx[r * m + j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let (_, m) = self.value(*x).dims2();
                let (_, w) = node.value.dims2();
                if let Some(dx) = self.slot(grads, *x) {
                    for (r, grow) in g.chunks_exact(w).enumerate() {
                        add_into(&mut dx[r * m + start..r * m + start + w], grow);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (_, total) = node.value.dims2();
                let mut offset = 0;
                for p in parts {
                    let (_, w) = self.value(*p).dims2();
                    if let Some(dp) = self.slot(grads, *p) {
                        for (r, grow) in g.chunks_exact(total).enumerate() {
                            add_into(&mut dp[r * w..(r + 1) * w], &grow[offset..offset + w]);
                        }
                    }
                    offset += w;
                }
            }
            Op::MeanRows { x, count } => {
                let m = g.len();
                let c = T::from_usize(*count).unwrap();
                if let Some(dx) = self.slot(grads, *x) {
                    for r in 0..*count {
                        for j in 0..m {
                            dx[r * m + j] += g[j] / c;
                        }
                    }
                }
            }
            Op::Bce { p, targets } => {
                let probs = self.value(*p).data().to_vec();
                let lo = T::lit(BCE_CLAMP);
                let hi = T::one() - lo;
                let n = T::from_usize(targets.len()).unwrap();
                if let Some(dp) = self.slot(grads, *p) {
                    for ((d, &pv), &t) in dp.iter_mut().zip(&probs).zip(targets) {
                        if pv < lo || pv > hi {
                            continue;
                        }
                        *d += g[0] * (-(t / pv) + (T::one() - t) / (T::one() - pv)) / n;
                    }
                }
            }
            Op::WeightedSum { x, weights } => {
                if let Some(dx) = self.slot(grads, *x) {
                    for (d, &w) in dx.iter_mut().zip(weights) {
                        *d += g[0] * w;
                    }
                }
            }
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v`; `None` when `v` does not
    /// require gradients or does not influence the loss.
    pub fn of(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}
