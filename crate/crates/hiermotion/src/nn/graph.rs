//! Reverse-mode autodiff tape.
//!
//! A [`Graph`] is an append-only tape of nodes; operations evaluate eagerly
//! and record enough context for the backward sweep. Parameters bind once
//! per graph by name so gradients land in one place even when a parameter
//! is used at several sites.

use super::layers::ParamStore;
use super::{NnError, Scalar};
use ndarray::{ArrayD, Axis, Ix1, Ix2, Ix3, IxDyn};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F: Scalar> {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    AddScalar(Var, F),
    /// b has the shape of a's last axis.
    AddBias(Var, Var),
    /// b has a's shape with `axis` removed.
    AddBcast(Var, Var, usize),
    Matmul(Var, Var),
    Bmm(Var, Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    SliceAxis(Var, usize, usize),
    Concat(Vec<Var>, usize),
    Gelu(Var),
    Relu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: ArrayD<F>,
        inv_std: ArrayD<F>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        scale: F,
        probs: ArrayD<F>,
    },
    Gather(Var, Vec<usize>),
    MeanAxis(Var, usize),
    MeanAll(Var),
    SumAll(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: ArrayD<F>,
    },
    Detach,
}

struct Node<F: Scalar> {
    value: ArrayD<F>,
    op: Op<F>,
    requires_grad: bool,
}

pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<ArrayD<F>>>,
    bound_params: HashMap<String, Var>,
    checked: bool,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            bound_params: HashMap::new(),
            checked: false,
        }
    }

    /// In checked mode every op's output is scanned for NaN/Inf.
    pub fn checked() -> Self {
        let mut g = Self::new();
        g.checked = true;
        g
    }

    pub fn value(&self, v: Var) -> &ArrayD<F> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> F {
        *self.nodes[v.0]
            .value
            .iter()
            .next()
            .expect("scalar node has one element")
    }

    pub fn grad(&self, v: Var) -> Option<&ArrayD<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: ArrayD<F>, op: Op<F>, requires_grad: bool) -> Var {
        if self.checked {
            assert!(
                value.iter().all(|x| x.is_finite()),
                "non-finite value produced on the tape"
            );
        }
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

    /// Constant leaf (no gradient).
    pub fn leaf(&mut self, value: ArrayD<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that accumulates a gradient (for gradient checks).
    pub fn leaf_grad(&mut self, value: ArrayD<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn scalar(&mut self, v: F) -> Var {
        self.leaf(ArrayD::from_elem(IxDyn(&[]), v))
    }

    /// Binds a named parameter from the store; repeated binds return the
    /// same node so gradients accumulate in one buffer.
    pub fn param(&mut self, store: &ParamStore<F>, name: &str) -> Var {
        if let Some(&v) = self.bound_params.get(name) {
            return v;
        }
        let value = store.get(name).expect("parameter registered").clone();
        let var = self.push(value, Op::Param, true);
        self.bound_params.insert(name.to_string(), var);
        var
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.nodes[a.0].value.shape(),
            self.nodes[b.0].value.shape(),
            "add: shape mismatch"
        );
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.nodes[a.0].value.shape(),
            self.nodes[b.0].value.shape(),
            "sub: shape mismatch"
        );
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.nodes[a.0].value.shape(),
            self.nodes[b.0].value.shape(),
            "mul: shape mismatch"
        );
        let value = &self.nodes[a.0].value * &self.nodes[b.0].value;
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x * c);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: F) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x + c);
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a, c), rg)
    }

    /// a[..., d] + b[d].
    pub fn add_bias(&mut self, a: Var, b: Var) -> Var {
        let d = *self.nodes[a.0].value.shape().last().expect("non-empty");
        assert_eq!(self.nodes[b.0].value.shape(), [d], "add_bias: bias shape");
        let bv = self.nodes[b.0]
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap()
            .to_owned();
        let value = &self.nodes[a.0].value + &bv;
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::AddBias(a, b), rg)
    }

    /// a + b where b's shape is a's with `axis` removed; b broadcasts along
    /// that axis.
    pub fn add_bcast(&mut self, a: Var, b: Var, axis: usize) -> Var {
        let mut expect = self.nodes[a.0].value.shape().to_vec();
        expect.remove(axis);
        assert_eq!(
            self.nodes[b.0].value.shape(),
            expect.as_slice(),
            "add_bcast: shape mismatch"
        );
        let expanded = self.nodes[b.0].value.view().insert_axis(Axis(axis));
        let value = &self.nodes[a.0].value + &expanded;
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::AddBcast(a, b, axis), rg)
    }

    /// 2-D matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = self.nodes[a.0]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("matmul lhs 2-D");
        let bv = self.nodes[b.0]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("matmul rhs 2-D");
        assert_eq!(av.shape()[1], bv.shape()[0], "matmul: inner dims");
        let value = av.dot(&bv).into_dyn();
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Matmul(a, b), rg)
    }

    /// Batched matrix product over the leading axis of 3-D tensors.
    pub fn bmm(&mut self, a: Var, b: Var) -> Var {
        let av = self.nodes[a.0]
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("bmm lhs 3-D");
        let bv = self.nodes[b.0]
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("bmm rhs 3-D");
        assert_eq!(av.shape()[0], bv.shape()[0], "bmm: batch dims");
        assert_eq!(av.shape()[2], bv.shape()[1], "bmm: inner dims");
        let (bsz, n, m) = (av.shape()[0], av.shape()[1], bv.shape()[2]);
        let mut out = ndarray::Array3::<F>::zeros((bsz, n, m));
        for i in 0..bsz {
            let prod = av.index_axis(Axis(0), i).dot(&bv.index_axis(Axis(0), i));
            out.index_axis_mut(Axis(0), i).assign(&prod);
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(out.into_dyn(), Op::Bmm(a, b), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let value = self.nodes[a.0]
            .value
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: size preserved");
        let rg = self.rg(a);
        self.push(value, Op::Reshape(a), rg)
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Var {
        let value = self.nodes[a.0]
            .value
            .view()
            .permuted_axes(IxDyn(axes))
            .as_standard_layout()
            .to_owned();
        let rg = self.rg(a);
        self.push(value, Op::Permute(a, axes.to_vec()), rg)
    }

    pub fn slice_axis(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let value = self.nodes[a.0]
            .value
            .slice_axis(Axis(axis), ndarray::Slice::from(start..start + len))
            .to_owned();
        let rg = self.rg(a);
        self.push(value, Op::SliceAxis(a, axis, start), rg)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat: empty parts");
        let views: Vec<_> = parts.iter().map(|v| self.nodes[v.0].value.view()).collect();
        let value = ndarray::concatenate(Axis(axis), &views)
            .expect("concat: shapes compatible")
            .as_standard_layout()
            .to_owned();
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::Concat(parts.to_vec(), axis), rg)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(gelu_val);
        let rg = self.rg(a);
        self.push(value, Op::Gelu(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let zero = F::zero();
        let value = self.nodes[a.0].value.mapv(|x| x.max(zero));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_last(&self.nodes[a.0].value);
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a), rg)
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = &self.nodes[x.0].value;
        let d = *xv.shape().last().expect("non-empty") as f64;
        let eps = F::cast_from(eps);
        let dn = F::cast_from(d);
        let mean = xv.mean_axis(Axis(xv.ndim() - 1)).expect("non-empty");
        let mut var = xv.clone();
        for (mut row, m) in var
            .rows_mut()
            .into_iter()
            .zip(mean.iter())
        {
            row.mapv_inplace(|v| (v - *m) * (v - *m));
        }
        let var = var.sum_axis(Axis(xv.ndim() - 1)).mapv(|v| v / dn);
        let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
        let mut xhat = xv.clone();
        for ((mut row, m), r) in xhat
            .rows_mut()
            .into_iter()
            .zip(mean.iter())
            .zip(inv_std.iter())
        {
            row.mapv_inplace(|v| (v - *m) * *r);
        }
        let gv = self.nodes[gamma.0]
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap()
            .to_owned();
        let bv = self.nodes[beta.0]
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap()
            .to_owned();
        let value = xhat * &gv + &bv;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean: mean.into_dyn(),
                inv_std: inv_std.into_dyn(),
            },
            rg,
        )
    }

    /// Fused scaled dot-product attention over 3-D tensors
    /// (batch·heads, seq, dim). `mask` is added to the scores before the
    /// softmax; use large negative values to forbid positions.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, mask: Option<&ndarray::Array2<F>>) -> Var {
        let qv = self.nodes[q.0]
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("attention q 3-D");
        let kv = self.nodes[k.0]
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("attention k 3-D");
        let vv = self.nodes[v.0]
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("attention v 3-D");
        assert_eq!(qv.shape()[0], kv.shape()[0], "attention: batch");
        assert_eq!(kv.shape()[0], vv.shape()[0], "attention: batch");
        assert_eq!(qv.shape()[2], kv.shape()[2], "attention: key dim");
        assert_eq!(kv.shape()[1], vv.shape()[1], "attention: key count");
        let (bsz, sq, dk) = (qv.shape()[0], qv.shape()[1], qv.shape()[2]);
        let (sk, dv) = (kv.shape()[1], vv.shape()[2]);
        if let Some(m) = mask {
            assert_eq!(m.shape(), [sq, sk], "attention: mask shape");
        }
        let scale = F::one() / F::cast_from((dk as f64).sqrt());
        let mut probs = ndarray::Array3::<F>::zeros((bsz, sq, sk));
        let mut out = ndarray::Array3::<F>::zeros((bsz, sq, dv));
        for b in 0..bsz {
            let mut scores = qv
                .index_axis(Axis(0), b)
                .dot(&kv.index_axis(Axis(0), b).t())
                .mapv(|x| x * scale);
            if let Some(m) = mask {
                scores += m;
            }
            let p = softmax_last(&scores.into_dyn())
                .into_dimensionality::<Ix2>()
                .unwrap();
            out.index_axis_mut(Axis(0), b)
                .assign(&p.dot(&vv.index_axis(Axis(0), b)));
            probs.index_axis_mut(Axis(0), b).assign(&p);
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        self.push(
            out.into_dyn(),
            Op::Attention {
                q,
                k,
                v,
                scale,
                probs: probs.into_dyn(),
            },
            rg,
        )
    }

    /// Attention probabilities saved by an [`Graph::attention`] node.
    pub fn attention_probs(&self, v: Var) -> Option<&ArrayD<F>> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Row lookup: table[indices[i], :] for each i.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Var {
        let tv = self.nodes[table.0]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("gather table 2-D");
        let d = tv.shape()[1];
        let mut out = ndarray::Array2::<F>::zeros((indices.len(), d));
        for (row, &idx) in indices.iter().enumerate() {
            out.row_mut(row).assign(&tv.row(idx));
        }
        let rg = self.rg(table);
        self.push(out.into_dyn(), Op::Gather(table, indices.to_vec()), rg)
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Var {
        let value = self.nodes[a.0]
            .value
            .mean_axis(Axis(axis))
            .expect("mean_axis: non-empty");
        let rg = self.rg(a);
        self.push(value, Op::MeanAxis(a, axis), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len();
        let value = ArrayD::from_elem(
            IxDyn(&[]),
            self.nodes[a.0].value.sum() / F::cast_from(n as f64),
        );
        let rg = self.rg(a);
        self.push(value, Op::MeanAll(a), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = ArrayD::from_elem(IxDyn(&[]), self.nodes[a.0].value.sum());
        let rg = self.rg(a);
        self.push(value, Op::SumAll(a), rg)
    }

    /// Mean negative log-likelihood of integer targets under a softmax over
    /// the last axis of 2-D logits.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.nodes[logits.0]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("cross_entropy logits 2-D");
        assert_eq!(lv.shape()[0], targets.len(), "cross_entropy: target count");
        let probs = softmax_last(&lv.to_owned().into_dyn());
        let p2 = probs.view().into_dimensionality::<Ix2>().unwrap();
        let mut nll = F::zero();
        let tiny = F::cast_from(1e-12);
        for (row, &t) in targets.iter().enumerate() {
            nll = nll - (p2[(row, t)] + tiny).ln();
        }
        let value = ArrayD::from_elem(IxDyn(&[]), nll / F::cast_from(targets.len() as f64));
        let rg = self.rg(logits);
        self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        )
    }

    /// Stops gradient flow: forward identity, backward zero.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.clone();
        self.push(value, Op::Detach, false)
    }

    /// Mean squared error between two same-shaped tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.mul(d, d);
        self.mean_all(sq)
    }

    fn accumulate(&mut self, v: Var, g: ArrayD<F>) {
        match &mut self.grads[v.0] {
            Some(existing) => *existing += &g,
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse sweep from a scalar loss. Gradients are then available via
    /// [`Graph::grad`] and [`Graph::param_grads`].
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward: scalar loss");
        self.grads = vec![None; self.nodes.len()];
        let seed_shape = self.nodes[loss.0].value.raw_dim();
        self.grads[loss.0] = Some(ArrayD::from_elem(seed_shape, F::one()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.backward_node(i, &g);
            self.grads[i] = Some(g);
        }
    }

    fn backward_node(&mut self, i: usize, g: &ArrayD<F>) {
        // Ops are matched by cloning the lightweight description; heavy
        // caches are borrowed through raw indexing below.
        enum Step<F: Scalar> {
            None,
            One(Var, ArrayD<F>),
            Two(Var, ArrayD<F>, Var, ArrayD<F>),
            Three(Var, ArrayD<F>, Var, ArrayD<F>, Var, ArrayD<F>),
            Many(Vec<(Var, ArrayD<F>)>),
        }
        let step: Step<F> = match &self.nodes[i].op {
            Op::Leaf | Op::Param | Op::Detach => Step::None,
            Op::Add(a, b) => Step::Two(*a, g.clone(), *b, g.clone()),
            Op::Sub(a, b) => Step::Two(*a, g.clone(), *b, g.mapv(|x| -x)),
            Op::Mul(a, b) => {
                let ga = g * &self.nodes[b.0].value;
                let gb = g * &self.nodes[a.0].value;
                Step::Two(*a, ga, *b, gb)
            }
            Op::Scale(a, c) => Step::One(*a, g.mapv(|x| x * *c)),
            Op::AddScalar(a, _) => Step::One(*a, g.clone()),
            Op::AddBias(a, b) => {
                let d = *g.shape().last().unwrap();
                let flat = g
                    .view()
                    .into_shape_with_order((g.len() / d, d))
                    .unwrap()
                    .to_owned();
                let gb = flat.sum_axis(Axis(0)).into_dyn();
                Step::Two(*a, g.clone(), *b, gb)
            }
            Op::AddBcast(a, b, axis) => {
                let gb = g.sum_axis(Axis(*axis));
                Step::Two(*a, g.clone(), *b, gb)
            }
            Op::Matmul(a, b) => {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let av = self.nodes[a.0].value.view().into_dimensionality::<Ix2>().unwrap();
                let bv = self.nodes[b.0].value.view().into_dimensionality::<Ix2>().unwrap();
                let ga = g2.dot(&bv.t()).into_dyn();
                let gb = av.t().dot(&g2).into_dyn();
                Step::Two(*a, ga, *b, gb)
            }
            Op::Bmm(a, b) => {
                let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
                let av = self.nodes[a.0].value.view().into_dimensionality::<Ix3>().unwrap();
                let bv = self.nodes[b.0].value.view().into_dimensionality::<Ix3>().unwrap();
                let bsz = av.shape()[0];
                let mut ga = ndarray::Array3::<F>::zeros((bsz, av.shape()[1], av.shape()[2]));
                let mut gb = ndarray::Array3::<F>::zeros((bsz, bv.shape()[1], bv.shape()[2]));
                for bi in 0..bsz {
                    let gi = g3.index_axis(Axis(0), bi);
                    ga.index_axis_mut(Axis(0), bi)
                        .assign(&gi.dot(&bv.index_axis(Axis(0), bi).t()));
                    gb.index_axis_mut(Axis(0), bi)
                        .assign(&av.index_axis(Axis(0), bi).t().dot(&gi));
                }
                Step::Two(*a, ga.into_dyn(), *b, gb.into_dyn())
            }
            Op::Reshape(a) => {
                let shape = self.nodes[a.0].value.raw_dim();
                Step::One(*a, g.clone().into_shape_with_order(shape).unwrap())
            }
            Op::Permute(a, axes) => {
                let mut inverse = vec![0usize; axes.len()];
                for (pos, &ax) in axes.iter().enumerate() {
                    inverse[ax] = pos;
                }
                let ga = g
                    .view()
                    .permuted_axes(IxDyn(&inverse))
                    .as_standard_layout()
                    .to_owned();
                Step::One(*a, ga)
            }
            Op::SliceAxis(a, axis, start) => {
                let mut ga = ArrayD::zeros(self.nodes[a.0].value.raw_dim());
                let len = g.shape()[*axis];
                ga.slice_axis_mut(Axis(*axis), ndarray::Slice::from(*start..*start + len))
                    .assign(g);
                Step::One(*a, ga)
            }
            Op::Concat(parts, axis) => {
                let mut gs = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.shape()[*axis];
                    let gp = g
                        .slice_axis(Axis(*axis), ndarray::Slice::from(offset..offset + len))
                        .to_owned();
                    offset += len;
                    gs.push((p, gp));
                }
                Step::Many(gs)
            }
            Op::Gelu(a) => {
                let ga = ndarray::Zip::from(g)
                    .and(&self.nodes[a.0].value)
                    .map_collect(|&gi, &x| gi * gelu_grad(x));
                Step::One(*a, ga)
            }
            Op::Relu(a) => {
                let ga = ndarray::Zip::from(g)
                    .and(&self.nodes[a.0].value)
                    .map_collect(|&gi, &x| if x > F::zero() { gi } else { F::zero() });
                Step::One(*a, ga)
            }
            Op::Softmax(a) => {
                let y = &self.nodes[i].value;
                Step::One(*a, softmax_backward(y, g))
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let xv = &self.nodes[x.0].value;
                let d = *xv.shape().last().unwrap();
                let dn = F::cast_from(d as f64);
                let gammav = self.nodes[gamma.0]
                    .value
                    .view()
                    .into_dimensionality::<Ix1>()
                    .unwrap()
                    .to_owned();
                let rows = xv.len() / d;
                let x2 = xv.view().into_shape_with_order((rows, d)).unwrap();
                let g2 = g.view().into_shape_with_order((rows, d)).unwrap();
                let meanv = mean.view().into_shape_with_order(rows).unwrap();
                let invv = inv_std.view().into_shape_with_order(rows).unwrap();
                let mut gx = ndarray::Array2::<F>::zeros((rows, d));
                let mut ggamma = ndarray::Array1::<F>::zeros(d);
                let mut gbeta = ndarray::Array1::<F>::zeros(d);
                for r in 0..rows {
                    let xr = x2.row(r);
                    let gr = g2.row(r);
                    let (m, rstd) = (meanv[r], invv[r]);
                    let xhat: Vec<F> = xr.iter().map(|&v| (v - m) * rstd).collect();
                    let dxhat: Vec<F> =
                        gr.iter().zip(&gammav).map(|(&gi, &ga)| gi * ga).collect();
                    let mut mean_dxhat = F::zero();
                    let mut mean_dxhat_xhat = F::zero();
                    for j in 0..d {
                        mean_dxhat = mean_dxhat + dxhat[j];
                        mean_dxhat_xhat = mean_dxhat_xhat + dxhat[j] * xhat[j];
                        ggamma[j] = ggamma[j] + gr[j] * xhat[j];
                        gbeta[j] = gbeta[j] + gr[j];
                    }
                    mean_dxhat = mean_dxhat / dn;
                    mean_dxhat_xhat = mean_dxhat_xhat / dn;
                    for j in 0..d {
                        gx[(r, j)] = rstd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                    }
                }
                let gx = gx.into_shape_with_order(xv.raw_dim()).unwrap();
                Step::Three(
                    *x,
                    gx,
                    *gamma,
                    ggamma.into_dyn(),
                    *beta,
                    gbeta.into_dyn(),
                )
            }
            Op::Attention {
                q,
                k,
                v,
                scale,
                probs,
            } => {
                let qv = self.nodes[q.0].value.view().into_dimensionality::<Ix3>().unwrap();
                let kv = self.nodes[k.0].value.view().into_dimensionality::<Ix3>().unwrap();
                let vv = self.nodes[v.0].value.view().into_dimensionality::<Ix3>().unwrap();
                let pv = probs.view().into_dimensionality::<Ix3>().unwrap();
                let g3 = g.view().into_dimensionality::<Ix3>().unwrap();
                let bsz = qv.shape()[0];
                let mut gq = ndarray::Array3::<F>::zeros(qv.dim());
                let mut gk = ndarray::Array3::<F>::zeros(kv.dim());
                let mut gv = ndarray::Array3::<F>::zeros(vv.dim());
                for b in 0..bsz {
                    let p = pv.index_axis(Axis(0), b);
                    let go = g3.index_axis(Axis(0), b);
                    gv.index_axis_mut(Axis(0), b).assign(&p.t().dot(&go));
                    let dp = go.dot(&vv.index_axis(Axis(0), b).t());
                    // softmax backward per row
                    let mut ds = ndarray::Array2::<F>::zeros(p.raw_dim());
                    for r in 0..p.shape()[0] {
                        let pr = p.row(r);
                        let dpr = dp.row(r);
                        let dot: F = pr.iter().zip(dpr.iter()).map(|(&a, &b)| a * b).sum();
                        for c in 0..p.shape()[1] {
                            ds[(r, c)] = pr[c] * (dpr[c] - dot);
                        }
                    }
                    let ds_scaled = ds.mapv(|x| x * *scale);
                    gq.index_axis_mut(Axis(0), b)
                        .assign(&ds_scaled.dot(&kv.index_axis(Axis(0), b)));
                    gk.index_axis_mut(Axis(0), b)
                        .assign(&ds_scaled.t().dot(&qv.index_axis(Axis(0), b)));
                }
                Step::Three(*q, gq.into_dyn(), *k, gk.into_dyn(), *v, gv.into_dyn())
            }
            Op::Gather(table, indices) => {
                let mut gt = ArrayD::<F>::zeros(self.nodes[table.0].value.raw_dim());
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut gt2 = gt.view_mut().into_dimensionality::<Ix2>().unwrap();
                for (row, &idx) in indices.iter().enumerate() {
                    let mut target = gt2.row_mut(idx);
                    target += &g2.row(row);
                }
                Step::One(*table, gt)
            }
            Op::MeanAxis(a, axis) => {
                let n = self.nodes[a.0].value.shape()[*axis];
                let scale = F::one() / F::cast_from(n as f64);
                let expanded = g.view().insert_axis(Axis(*axis));
                let ga = ArrayD::<F>::zeros(self.nodes[a.0].value.raw_dim()) + &expanded;
                Step::One(*a, ga.mapv(|x| x * scale))
            }
            Op::MeanAll(a) => {
                let n = self.nodes[a.0].value.len();
                let gs = *g.iter().next().unwrap() / F::cast_from(n as f64);
                Step::One(*a, ArrayD::from_elem(self.nodes[a.0].value.raw_dim(), gs))
            }
            Op::SumAll(a) => {
                let gs = *g.iter().next().unwrap();
                Step::One(*a, ArrayD::from_elem(self.nodes[a.0].value.raw_dim(), gs))
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let gs = *g.iter().next().unwrap();
                let n = F::cast_from(targets.len() as f64);
                let mut gl = probs.clone();
                let mut gl2 = gl.view_mut().into_dimensionality::<Ix2>().unwrap();
                for (row, &t) in targets.iter().enumerate() {
                    gl2[(row, t)] = gl2[(row, t)] - F::one();
                }
                Step::One(*logits, gl.mapv(|x| x * gs / n))
            }
        };
        match step {
            Step::None => {}
            Step::One(a, ga) => {
                if self.rg(a) {
                    self.accumulate(a, ga);
                }
            }
            Step::Two(a, ga, b, gb) => {
                if self.rg(a) {
                    self.accumulate(a, ga);
                }
                if self.rg(b) {
                    self.accumulate(b, gb);
                }
            }
            Step::Three(a, ga, b, gb, c, gc) => {
                if self.rg(a) {
                    self.accumulate(a, ga);
                }
                if self.rg(b) {
                    self.accumulate(b, gb);
                }
                if self.rg(c) {
                    self.accumulate(c, gc);
                }
            }
            Step::Many(gs) => {
                for (p, gp) in gs {
                    if self.rg(p) {
                        self.accumulate(p, gp);
                    }
                }
            }
        }
    }

    /// Gradients of all bound parameters by name.
    pub fn param_grads(&self) -> HashMap<String, ArrayD<F>> {
        let mut out = HashMap::new();
        for (name, &var) in &self.bound_params {
            if let Some(g) = self.grad(var) {
                out.insert(name.clone(), g.clone());
            }
        }
        out
    }
}

fn gelu_val<F: Scalar>(x: F) -> F {
    // tanh approximation of GELU
    let c = F::cast_from(0.7978845608028654); // sqrt(2/pi)
    let a = F::cast_from(0.044715);
    let half = F::cast_from(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (F::one() + u.tanh())
}

fn gelu_grad<F: Scalar>(x: F) -> F {
    let c = F::cast_from(0.7978845608028654);
    let a = F::cast_from(0.044715);
    let half = F::cast_from(0.5);
    let three = F::cast_from(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = F::one() - t * t;
    half * (F::one() + t) + half * x * sech2 * c * (F::one() + three * a * x * x)
}

fn softmax_last<F: Scalar>(x: &ArrayD<F>) -> ArrayD<F> {
    let d = *x.shape().last().expect("non-empty");
    let rows = x.len() / d;
    let flat = x.view().into_shape_with_order((rows, d)).unwrap();
    let mut out = ndarray::Array2::<F>::zeros((rows, d));
    for r in 0..rows {
        let row = flat.row(r);
        let mx = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for (j, &v) in row.iter().enumerate() {
            let e = (v - mx).exp();
            out[(r, j)] = e;
            sum = sum + e;
        }
        for j in 0..d {
            out[(r, j)] = out[(r, j)] / sum;
        }
    }
    out.into_shape_with_order(x.raw_dim()).unwrap()
}

fn softmax_backward<F: Scalar>(y: &ArrayD<F>, g: &ArrayD<F>) -> ArrayD<F> {
    let d = *y.shape().last().unwrap();
    let rows = y.len() / d;
    let y2 = y.view().into_shape_with_order((rows, d)).unwrap();
    let g2 = g.view().into_shape_with_order((rows, d)).unwrap();
    let mut out = ndarray::Array2::<F>::zeros((rows, d));
    for r in 0..rows {
        let dot: F = y2
            .row(r)
            .iter()
            .zip(g2.row(r).iter())
            .map(|(&a, &b)| a * b)
            .sum();
        for c in 0..d {
            out[(r, c)] = y2[(r, c)] * (g2[(r, c)] - dot);
        }
    }
    out.into_shape_with_order(y.raw_dim()).unwrap()
}

/// Scaled dot-product attention as a standalone checked operation.
///
/// `q`, `k`, `v` are (batch, seq, dim) tensors already bound to the graph;
/// the mask, when given, is added to the attention scores. Masked positions
/// (large negative mask entries) receive zero weight.
pub fn attention_forward<F: Scalar>(
    g: &mut Graph<F>,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&ndarray::Array2<F>>,
) -> Result<Var, NnError> {
    let qs = g.value(q).shape().to_vec();
    let ks = g.value(k).shape().to_vec();
    let vs = g.value(v).shape().to_vec();
    if qs.len() != 3 || ks.len() != 3 || vs.len() != 3 {
        return Err(NnError::ShapeMismatch(format!(
            "attention expects 3-D tensors, got {qs:?}, {ks:?}, {vs:?}"
        )));
    }
    if qs[0] != ks[0] || ks[0] != vs[0] || qs[2] != ks[2] || ks[1] != vs[1] {
        return Err(NnError::ShapeMismatch(format!(
            "attention shapes incompatible: q {qs:?}, k {ks:?}, v {vs:?}"
        )));
    }
    if let Some(m) = mask {
        if m.shape() != [qs[1], ks[1]] {
            return Err(NnError::ShapeMismatch(format!(
                "attention mask {:?} does not match ({}, {})",
                m.shape(),
                qs[1],
                ks[1]
            )));
        }
    }
    Ok(g.attention(q, k, v, mask))
}

/// A large negative score used to mask attention positions.
pub fn neg_mask_value<F: Scalar>() -> F {
    F::cast_from(-1e30)
}

/// Strict lower-triangular causal mask: position i may attend to j <= i.
pub fn causal_mask<F: Scalar>(n: usize) -> ndarray::Array2<F> {
    let mut m = ndarray::Array2::<F>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            m[(i, j)] = neg_mask_value::<F>();
        }
    }
    m
}
