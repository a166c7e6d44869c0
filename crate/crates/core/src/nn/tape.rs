//! Reverse-mode automatic differentiation over coarse fused ops.
//!
//! A [`Graph`] records one forward computation. Parameters live in a
//! [`ParamStore`] borrowed by the graph, and `backward` accumulates their
//! gradients into a matching [`Grads`] buffer. Constants (images, bias
//! vectors, targets) never receive gradients.

use std::collections::HashMap;

use super::kernels::{self, AttnShape, ConvGeom};
use super::scalar::{Scalar, View};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

pub type ParamId = usize;

/// Named trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(t);
        id
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect(), index: self.index.clone() }
    }
}

/// Gradient buffers parallel to a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Grads<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(params: &ParamStore<T>) -> Self {
        Grads { tensors: params.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect() }
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.data.fill(T::zero());
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sq_norm).sum()
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v *= s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

enum Op<T> {
    Input,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Mul(Var, Var),
    Silu(Var),
    LayerNorm { x: Var, g: Var, b: Var, means: Vec<T>, rstds: Vec<T> },
    Embedding { table: Var, ids: Vec<u32> },
    Attention { q: Var, k: Var, v: Var, shape: AttnShape, probs: Vec<T> },
    Rope { x: Var, cos: Vec<T>, sin: Vec<T> },
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom, cols: Vec<T> },
    UpsampleRows(Var),
    Transpose(Var),
    CrossEntropy { logits: Var, targets: Vec<Option<u32>>, probs: Vec<T>, count: usize },
    BceDice { logits: Var, target: Vec<T> },
    WeightedSum { xs: Vec<Var>, ws: Vec<T> },
    DotConst { x: Var, c: Vec<T> },
}

struct Node<T> {
    value: Option<Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value: Some(value), op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match (&self.nodes[v.0].value, &self.nodes[v.0].op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node { value: Some(t), op: Op::Input, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(id), needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// `x[n,i] w[i,o] + b[o]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let (n, i, o) = (xv.rows(), xv.row_len(), wv.shape[1]);
        assert_eq!(wv.shape[0], i, "linear: input width {i} vs weight {:?}", wv.shape);
        let y = kernels::linear_fwd(&xv.data, n, i, &wv.data, o, b.map(|b| self.value(b).data.as_slice()));
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(Tensor::new(&[n, o], y), Op::Linear { x, w, b }, &inputs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape, bv.shape, "add: shape mismatch");
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| x + y).collect();
        let shape = av.shape.clone();
        self.push(Tensor::new(&shape, data), Op::Add(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape, bv.shape, "mul: shape mismatch");
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| x * y).collect();
        let shape = av.shape.clone();
        self.push(Tensor::new(&shape, data), Op::Mul(a, b), &[a, b])
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let t = Tensor::new(&xv.shape, xv.data.iter().map(|&v| kernels::silu(v)).collect());
        self.push(t, Op::Silu(x), &[x])
    }

    pub fn layer_norm(&mut self, x: Var, g: Var, b: Var) -> Var {
        let xv = self.value(x);
        let d = *xv.shape.last().unwrap();
        let (y, means, rstds) = kernels::layernorm_fwd(&xv.data, d, &self.value(g).data, &self.value(b).data);
        let shape = xv.shape.clone();
        self.push(Tensor::new(&shape, y), Op::LayerNorm { x, g, b, means, rstds }, &[x, g, b])
    }

    /// Rows of `table[V,d]` selected by `ids`.
    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Var {
        let tv = self.value(table);
        let d = tv.shape[1];
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&tv.data[id as usize * d..(id as usize + 1) * d]);
        }
        self.push(Tensor::new(&[ids.len(), d], out), Op::Embedding { table, ids: ids.to_vec() }, &[table])
    }

    /// Multi-head attention with an optional causal mask and a constant
    /// per-key bias (excluded from differentiation).
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, causal: bool, bias: Option<&[T]>) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let shape = AttnShape {
            tq: qv.rows(),
            tk: kv.rows(),
            d: qv.row_len(),
            heads,
            causal_offset: causal.then_some(0),
        };
        assert_eq!(kv.row_len(), shape.d);
        assert_eq!(vv.shape, kv.shape);
        assert_eq!(shape.d % heads, 0, "width {} not divisible by {heads} heads", shape.d);
        if let Some(b) = bias {
            assert_eq!(b.len(), shape.tk, "bias length must equal the key count");
        }
        let (out, probs) = kernels::attention_fwd(&qv.data, &kv.data, &vv.data, shape, bias);
        self.push(Tensor::new(&[shape.tq, shape.d], out), Op::Attention { q, k, v, shape, probs }, &[q, k, v])
    }

    /// 2D RoPE over `x[grid_h*grid_w, d]` in row-major token order.
    pub fn rope2d(&mut self, x: Var, grid_h: usize, grid_w: usize, base: f64) -> Var {
        let xv = self.value(x);
        let d = xv.row_len();
        assert_eq!(xv.rows(), grid_h * grid_w);
        let (cos, sin) = kernels::rope_tables::<T>(grid_h, grid_w, d, base);
        let mut out = vec![T::zero(); xv.len()];
        kernels::rope_apply(&xv.data, d, &cos, &sin, false, &mut out);
        let shape = xv.shape.clone();
        self.push(Tensor::new(&shape, out), Op::Rope { x, cos, sin }, &[x])
    }

    /// `x[c,h,w]` convolved with `w[c_out, c*kh*kw]` plus `b[c_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeom) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), geom.c_in * geom.h * geom.w, "conv input does not match geometry");
        let wv = self.value(w);
        let c_out = wv.shape[0];
        assert_eq!(wv.shape[1], geom.patch());
        let (oh, ow) = (geom.out_h(), geom.out_w());
        let cols = kernels::im2col(&xv.data, &geom);
        let mut out = vec![T::zero(); c_out * oh * ow];
        for (row, &bias) in out.chunks_mut(oh * ow).zip(&self.value(b).data) {
            row.fill(bias);
        }
        super::scalar::gemm(
            T::one(),
            View::dense(&wv.data, c_out, geom.patch()),
            View::dense(&cols, geom.patch(), oh * ow),
            T::one(),
            &mut out,
            0,
            oh * ow,
            1,
        );
        self.push(Tensor::new(&[c_out, oh, ow], out), Op::Conv2d { x, w, b, geom, cols }, &[x, w, b])
    }

    /// Nearest-neighbour 2x upsampling along the row axis of `x[c,h,w]`.
    pub fn upsample_rows2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (c, h, w) = (xv.shape[0], xv.shape[1], xv.shape[2]);
        let mut out = Vec::with_capacity(2 * xv.len());
        for ch in 0..c {
            for y in 0..h {
                let row = &xv.data[(ch * h + y) * w..(ch * h + y + 1) * w];
                out.extend_from_slice(row);
                out.extend_from_slice(row);
            }
        }
        self.push(Tensor::new(&[c, 2 * h, w], out), Op::UpsampleRows(x), &[x])
    }

    /// Swaps the leading axis with the flattened remainder.
    pub fn transpose(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (a, b) = (xv.rows(), xv.row_len());
        let mut out = vec![T::zero(); a * b];
        for i in 0..a {
            for j in 0..b {
                out[j * a + i] = xv.data[i * b + j];
            }
        }
        self.push(Tensor::new(&[b, a], out), Op::Transpose(x), &[x])
    }

    /// Mean token cross-entropy; `None` targets are ignored.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<u32>]) -> Var {
        let lv = self.value(logits);
        let classes = lv.row_len();
        assert_eq!(lv.rows(), targets.len());
        let (loss, probs, count) = kernels::cross_entropy_fwd(&lv.data, classes, targets);
        self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, targets: targets.to_vec(), probs, count }, &[logits])
    }

    /// BCE with logits plus half a smoothed Dice term, over all elements.
    pub fn bce_dice(&mut self, logits: Var, target: &[T]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.len(), target.len());
        let (loss, _, _) = kernels::bce_dice_fwd(&lv.data, target);
        self.push(Tensor::scalar(loss), Op::BceDice { logits, target: target.to_vec() }, &[logits])
    }

    /// `sum_i ws[i] * xs[i]` over scalar nodes.
    pub fn weighted_sum(&mut self, xs: &[Var], ws: &[T]) -> Var {
        assert_eq!(xs.len(), ws.len());
        let total = xs.iter().zip(ws).map(|(&x, &w)| self.value(x).item() * w).sum();
        self.push(Tensor::scalar(total), Op::WeightedSum { xs: xs.to_vec(), ws: ws.to_vec() }, xs)
    }

    /// Inner product with a constant tensor.
    pub fn dot_const(&mut self, x: Var, c: &[T]) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), c.len());
        let total = xv.data.iter().zip(c).map(|(&a, &b)| a * b).sum();
        self.push(Tensor::scalar(total), Op::DotConst { x, c: c.to_vec() }, &[x])
    }

    /// Back-propagates from scalar `loss`, adding parameter gradients to
    /// `grads`.
    pub fn backward(&self, loss: Var, grads: &mut Grads<T>) {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut g: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backward_node(node, &gi, &mut g, grads);
        }
    }

    fn backward_node(&self, node: &Node<T>, gi: &[T], g: &mut [Option<Vec<T>>], grads: &mut Grads<T>) {
        let buf = |g: &mut [Option<Vec<T>>], v: Var, this: &Self| -> bool {
            if !this.nodes[v.0].needs_grad {
                return false;
            }
            if g[v.0].is_none() {
                g[v.0] = Some(vec![T::zero(); this.value(v).len()]);
            }
            true
        };
        match &node.op {
            Op::Input => {}
            Op::Param(id) => grads.tensors[*id].data.iter_mut().zip(gi).for_each(|(a, &b)| *a += b),
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, i, o) = (xv.rows(), xv.row_len(), wv.shape[1]);
                let need_x = buf(g, *x, self);
                let need_w = buf(g, *w, self);
                let need_b = b.map(|b| buf(g, b, self)).unwrap_or(false);
                // Take the buffers out so several can be borrowed at once.
                let mut dx = if need_x { g[x.0].take() } else { None };
                let mut dw = if need_w { g[w.0].take() } else { None };
                let mut db = if need_b { g[b.unwrap().0].take() } else { None };
                kernels::linear_bwd(gi, &xv.data, n, i, &wv.data, o, dx.as_deref_mut(), dw.as_deref_mut(), db.as_deref_mut());
                if need_x {
                    g[x.0] = dx;
                }
                if need_w {
                    g[w.0] = dw;
                }
                if need_b {
                    g[b.unwrap().0] = db;
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if buf(g, *v, self) {
                        g[v.0].as_mut().unwrap().iter_mut().zip(gi).for_each(|(s, &d)| *s += d);
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(a, b), (b, a)] {
                    if buf(g, *v, self) {
                        let ov = &self.value(*other).data;
                        g[v.0].as_mut().unwrap().iter_mut().zip(gi).zip(ov).for_each(|((s, &d), &o)| *s += d * o);
                    }
                }
            }
            Op::Silu(x) => {
                if buf(g, *x, self) {
                    let xv = &self.value(*x).data;
                    let dx = g[x.0].as_mut().unwrap();
                    for ((d, &xv), &up) in dx.iter_mut().zip(xv).zip(gi) {
                        *d += up * kernels::silu_grad(xv);
                    }
                }
            }
            Op::LayerNorm { x, g: gamma, b, means, rstds } => {
                let xv = self.value(*x);
                let d = *xv.shape.last().unwrap();
                let need = [buf(g, *x, self), buf(g, *gamma, self), buf(g, *b, self)];
                let mut dx = if need[0] { g[x.0].take() } else { None };
                let mut dg = if need[1] { g[gamma.0].take() } else { None };
                let mut db = if need[2] { g[b.0].take() } else { None };
                kernels::layernorm_bwd(
                    gi,
                    &xv.data,
                    d,
                    &self.value(*gamma).data,
                    means,
                    rstds,
                    dx.as_deref_mut(),
                    dg.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if need[0] {
                    g[x.0] = dx;
                }
                if need[1] {
                    g[gamma.0] = dg;
                }
                if need[2] {
                    g[b.0] = db;
                }
            }
            Op::Embedding { table, ids } => {
                if buf(g, *table, self) {
                    let d = self.value(*table).shape[1];
                    let dt = g[table.0].as_mut().unwrap();
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id as usize * d + j] += gi[r * d + j];
                        }
                    }
                }
            }
            Op::Attention { q, k, v, shape, probs } => {
                let mut dq = vec![T::zero(); shape.tq * shape.d];
                let mut dk = vec![T::zero(); shape.tk * shape.d];
                let mut dv = vec![T::zero(); shape.tk * shape.d];
                kernels::attention_bwd(
                    gi,
                    &self.value(*q).data,
                    &self.value(*k).data,
                    &self.value(*v).data,
                    probs,
                    *shape,
                    &mut dq,
                    &mut dk,
                    &mut dv,
                );
                for (var, d) in [(q, dq), (k, dk), (v, dv)] {
                    if buf(g, *var, self) {
                        g[var.0].as_mut().unwrap().iter_mut().zip(&d).for_each(|(s, &x)| *s += x);
                    }
                }
            }
            Op::Rope { x, cos, sin } => {
                if buf(g, *x, self) {
                    let d = self.value(*x).row_len();
                    kernels::rope_apply(gi, d, cos, sin, true, g[x.0].as_mut().unwrap());
                }
            }
            Op::Conv2d { x, w, b, geom, cols } => {
                let wv = self.value(*w);
                let c_out = wv.shape[0];
                let n_out = geom.out_h() * geom.out_w();
                if buf(g, *w, self) {
                    super::scalar::gemm(
                        T::one(),
                        View::dense(gi, c_out, n_out),
                        View::dense_t(cols, geom.patch(), n_out),
                        T::one(),
                        g[w.0].as_mut().unwrap(),
                        0,
                        geom.patch(),
                        1,
                    );
                }
                if buf(g, *b, self) {
                    let db = g[b.0].as_mut().unwrap();
                    for (c, row) in gi.chunks(n_out).enumerate() {
                        db[c] += row.iter().copied().sum::<T>();
                    }
                }
                if buf(g, *x, self) {
                    let mut dcols = vec![T::zero(); geom.patch() * n_out];
                    super::scalar::gemm(
                        T::one(),
                        View::dense_t(&wv.data, c_out, geom.patch()),
                        View::dense(gi, c_out, n_out),
                        T::zero(),
                        &mut dcols,
                        0,
                        n_out,
                        1,
                    );
                    kernels::col2im(&dcols, geom, g[x.0].as_mut().unwrap());
                }
            }
            Op::UpsampleRows(x) => {
                if buf(g, *x, self) {
                    let xv = self.value(*x);
                    let (c, h, w) = (xv.shape[0], xv.shape[1], xv.shape[2]);
                    let dx = g[x.0].as_mut().unwrap();
                    for ch in 0..c {
                        for y in 0..h {
                            for xx in 0..w {
                                let up = (ch * 2 * h + 2 * y) * w + xx;
                                dx[(ch * h + y) * w + xx] += gi[up] + gi[up + w];
                            }
                        }
                    }
                }
            }
            Op::Transpose(x) => {
                if buf(g, *x, self) {
                    let xv = self.value(*x);
                    let (a, b) = (xv.rows(), xv.row_len());
                    let dx = g[x.0].as_mut().unwrap();
                    for i in 0..a {
                        for j in 0..b {
                            dx[i * b + j] += gi[j * a + i];
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, targets, probs, count } => {
                if buf(g, *logits, self) {
                    let classes = self.value(*logits).row_len();
                    kernels::cross_entropy_bwd(gi[0], probs, classes, targets, *count, g[logits.0].as_mut().unwrap());
                }
            }
            Op::BceDice { logits, target } => {
                if buf(g, *logits, self) {
                    let lv = &self.value(*logits).data;
                    kernels::bce_dice_bwd(gi[0], lv, target, g[logits.0].as_mut().unwrap());
                }
            }
            Op::WeightedSum { xs, ws } => {
                for (x, &w) in xs.iter().zip(ws) {
                    if buf(g, *x, self) {
                        g[x.0].as_mut().unwrap()[0] += gi[0] * w;
                    }
                }
            }
            Op::DotConst { x, c } => {
                if buf(g, *x, self) {
                    g[x.0].as_mut().unwrap().iter_mut().zip(c).for_each(|(s, &cv)| *s += gi[0] * cv);
                }
            }
        }
    }
}
