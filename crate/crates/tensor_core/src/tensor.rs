//! The tensor type and its differentiable primitives.
//!
//! Tensors are immutable after construction except for gradient accumulation
//! and in-place parameter updates performed by the optimizers between steps.
//! Every op that involves a grad-requiring input records its parents and a
//! backward closure; `backward` on a scalar loss walks the graph once in
//! reverse topological order.

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

struct BackwardArgs<'a> {
    upstream: &'a [f32],
    parents: &'a [Tensor],
    needs: &'a [bool],
}

type BackwardFn = Box<dyn Fn(&BackwardArgs) -> Vec<Option<Vec<f32>>>>;

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f32>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f32>>>,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// Dense N-dimensional f32 array participating in reverse-mode differentiation.
pub struct Tensor {
    node: Rc<Node>,
}

impl Clone for Tensor {
    fn clone(&self) -> Self {
        Tensor { node: Rc::clone(&self.node) }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn new_leaf(data: Vec<f32>, shape: Vec<usize>, requires_grad: bool) -> Tensor {
        assert_eq!(
            data.len(),
            numel_of(&shape),
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                requires_grad,
                grad: RefCell::new(None),
                parents: Vec::new(),
                backward: None,
            }),
        }
    }

    fn new_op(data: Vec<f32>, shape: Vec<usize>, parents: Vec<Tensor>, backward: BackwardFn) -> Tensor {
        debug_assert_eq!(data.len(), numel_of(&shape));
        let requires_grad = parents.iter().any(|p| p.node.requires_grad);
        if !requires_grad {
            return Tensor::new_leaf(data, shape, false);
        }
        Tensor {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                requires_grad: true,
                grad: RefCell::new(None),
                parents,
                backward: Some(backward),
            }),
        }
    }

    pub fn from_vec(data: Vec<f32>, shape: &[usize]) -> Tensor {
        Tensor::new_leaf(data, shape.to_vec(), false)
    }

    /// Leaf with `requires_grad = true`; the unit every optimizer updates.
    pub fn param(data: Vec<f32>, shape: &[usize]) -> Tensor {
        Tensor::new_leaf(data, shape.to_vec(), true)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::new_leaf(vec![0.0; numel_of(shape)], shape.to_vec(), false)
    }

    pub fn full(shape: &[usize], value: f32) -> Tensor {
        Tensor::new_leaf(vec![value; numel_of(shape)], shape.to_vec(), false)
    }

    pub fn scalar(value: f32) -> Tensor {
        Tensor::new_leaf(vec![value], vec![], false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        numel_of(&self.node.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<f32>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.node.data.borrow().clone()
    }

    /// Scalar extraction; panics unless the tensor holds exactly one element.
    pub fn item(&self) -> f32 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.node.shape);
        self.node.data.borrow()[0]
    }

    /// In-place overwrite of a leaf's values (optimizer updates, polyak copies).
    pub fn set_data(&self, values: &[f32]) {
        let mut d = self.node.data.borrow_mut();
        assert_eq!(d.len(), values.len(), "set_data length mismatch");
        d.copy_from_slice(values);
    }

    /// Mutates leaf values through a closure without reallocating.
    pub fn update_data(&self, f: impl FnOnce(&mut [f32])) {
        f(&mut self.node.data.borrow_mut());
    }

    pub fn grad(&self) -> Option<Vec<f32>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// Replaces the stored gradient (gradient clipping, test setup).
    pub fn set_grad(&self, g: Vec<f32>) {
        assert_eq!(g.len(), self.numel(), "set_grad length mismatch");
        *self.node.grad.borrow_mut() = Some(g);
    }

    /// Same values, cut loose from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::new_leaf(self.to_vec(), self.node.shape.clone(), false)
    }

    fn accumulate_grad(&self, contribution: &[f32]) {
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contribution) {
                    *gi += ci;
                }
            }
            None => *slot = Some(contribution.to_vec()),
        }
    }

    /// Reverse pass from a scalar loss. Populates `grad` on every
    /// grad-requiring ancestor, accumulating additively across calls.
    pub fn backward(&self) {
        assert_eq!(self.numel(), 1, "backward() requires a scalar loss, got shape {:?}", self.node.shape);
        if !self.node.requires_grad {
            return;
        }
        // Iterative post-order DFS over grad-requiring ancestors.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.node.id);
        while let Some((t, child_idx)) = stack.pop() {
            let parents = &t.node.parents;
            let mut next = child_idx;
            while next < parents.len() {
                let p = &parents[next];
                if p.node.requires_grad && !visited.contains(&p.node.id) {
                    visited.insert(p.node.id);
                    let p = p.clone();
                    stack.push((t.clone(), next + 1));
                    stack.push((p, 0));
                    next = usize::MAX;
                    break;
                }
                next += 1;
            }
            if next != usize::MAX {
                order.push(t);
            }
        }

        self.accumulate_grad(&[1.0]);
        for t in order.iter().rev() {
            let Some(backward) = t.node.backward.as_ref() else { continue };
            let upstream = t.node.grad.borrow().clone().unwrap_or_else(|| vec![0.0; t.numel()]);
            let needs: Vec<bool> = t.node.parents.iter().map(|p| p.node.requires_grad).collect();
            let grads = backward(&BackwardArgs { upstream: &upstream, parents: &t.node.parents, needs: &needs });
            debug_assert_eq!(grads.len(), t.node.parents.len());
            for (parent, grad) in t.node.parents.iter().zip(grads) {
                if let Some(g) = grad {
                    debug_assert_eq!(g.len(), parent.numel());
                    parent.accumulate_grad(&g);
                }
            }
        }
    }
}

// ── broadcasting helpers ─────────────────────────────────────────────

fn pad_left(shape: &[usize], ndim: usize) -> Vec<usize> {
    let mut out = vec![1usize; ndim];
    out[ndim - shape.len()..].copy_from_slice(shape);
    out
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let ndim = a.len().max(b.len());
    let pa = pad_left(a, ndim);
    let pb = pad_left(b, ndim);
    pa.iter()
        .zip(&pb)
        .map(|(&da, &db)| {
            assert!(da == db || da == 1 || db == 1, "shapes {:?} and {:?} do not broadcast", a, b);
            da.max(db)
        })
        .collect()
}

/// Replicates `data` (logical shape `shape`) into `out_shape`.
fn expand_to(data: &[f32], shape: &[usize], out_shape: &[usize]) -> Vec<f32> {
    if shape == out_shape {
        return data.to_vec();
    }
    let ndim = out_shape.len();
    let padded = pad_left(shape, ndim);
    let mut strides = vec![0usize; ndim];
    let mut s = 1;
    for d in (0..ndim).rev() {
        strides[d] = if padded[d] == 1 { 0 } else { s };
        s *= padded[d];
    }
    let numel = numel_of(out_shape);
    let mut out = vec![0.0; numel];
    let mut coords = vec![0usize; ndim];
    let mut src = 0usize;
    for slot in out.iter_mut() {
        *slot = data[src];
        for d in (0..ndim).rev() {
            coords[d] += 1;
            src += strides[d];
            if coords[d] < out_shape[d] {
                break;
            }
            src -= strides[d] * out_shape[d];
            coords[d] = 0;
        }
    }
    out
}

/// Sums `grad` (shape `from_shape`) back down to `to_shape`.
pub(crate) fn reduce_to(grad: &[f32], from_shape: &[usize], to_shape: &[usize]) -> Vec<f32> {
    if from_shape == to_shape {
        return grad.to_vec();
    }
    let ndim = from_shape.len();
    let padded = pad_left(to_shape, ndim);
    let mut strides = vec![0usize; ndim];
    let mut s = 1;
    for d in (0..ndim).rev() {
        strides[d] = if padded[d] == 1 { 0 } else { s };
        s *= padded[d];
    }
    let mut out = vec![0.0; numel_of(to_shape)];
    let mut coords = vec![0usize; ndim];
    let mut dst = 0usize;
    for &g in grad {
        out[dst] += g;
        for d in (0..ndim).rev() {
            coords[d] += 1;
            dst += strides[d];
            if coords[d] < from_shape[d] {
                break;
            }
            dst -= strides[d] * from_shape[d];
            coords[d] = 0;
        }
    }
    out
}

fn binary_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> (Vec<f32>, Vec<usize>) {
    let out_shape = broadcast_shape(a.shape(), b.shape());
    let ad = a.data();
    let bd = b.data();
    if a.shape() == out_shape.as_slice() && b.shape() == out_shape.as_slice() {
        let out = ad.iter().zip(bd.iter()).map(|(&x, &y)| f(x, y)).collect();
        return (out, out_shape);
    }
    let ae = expand_to(&ad, a.shape(), &out_shape);
    let be = expand_to(&bd, b.shape(), &out_shape);
    let out = ae.iter().zip(&be).map(|(&x, &y)| f(x, y)).collect();
    (out, out_shape)
}

// ── matmul kernels (accumulating, row-major 2D) ──────────────────────

fn mm_nn(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in a_row.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += aip * bj;
            }
        }
    }
}

/// c[m,n] += a[m,k] * b[n,k]^T
fn mm_nt(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (x, y) in a_row.iter().zip(b_row) {
                s += x * y;
            }
            c_row[j] += s;
        }
    }
}

/// c[k,n] += a[m,k]^T * b[m,n]
fn mm_tn(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &aip) in a_row.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let c_row = &mut c[p * n..(p + 1) * n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += aip * bj;
            }
        }
    }
}

fn split_matrix_shape(shape: &[usize]) -> (usize, usize, usize) {
    assert!(shape.len() >= 2, "matmul operand needs >= 2 dims, got {:?}", shape);
    let rows = shape[shape.len() - 2];
    let cols = shape[shape.len() - 1];
    let batch = numel_of(&shape[..shape.len() - 2]);
    (batch, rows, cols)
}

// ── elementwise / structural ops ─────────────────────────────────────

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Tensor {
        let (data, shape) = binary_broadcast(self, other, |x, y| x + y);
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let out_shape = shape.clone();
        Tensor::new_op(
            data,
            shape,
            vec![self.clone(), other.clone()],
            Box::new(move |args| {
                let mut out = vec![None, None];
                if args.needs[0] {
                    out[0] = Some(reduce_to(args.upstream, &out_shape, &sa));
                }
                if args.needs[1] {
                    out[1] = Some(reduce_to(args.upstream, &out_shape, &sb));
                }
                out
            }),
        )
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        let (data, shape) = binary_broadcast(self, other, |x, y| x - y);
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let out_shape = shape.clone();
        Tensor::new_op(
            data,
            shape,
            vec![self.clone(), other.clone()],
            Box::new(move |args| {
                let mut out = vec![None, None];
                if args.needs[0] {
                    out[0] = Some(reduce_to(args.upstream, &out_shape, &sa));
                }
                if args.needs[1] {
                    let neg: Vec<f32> = args.upstream.iter().map(|g| -g).collect();
                    out[1] = Some(reduce_to(&neg, &out_shape, &sb));
                }
                out
            }),
        )
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        let (data, shape) = binary_broadcast(self, other, |x, y| x * y);
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let out_shape = shape.clone();
        Tensor::new_op(
            data,
            shape,
            vec![self.clone(), other.clone()],
            Box::new(move |args| {
                let mut out = vec![None, None];
                if args.needs[0] {
                    let be = expand_to(&args.parents[1].data(), &sb, &out_shape);
                    let prod: Vec<f32> = args.upstream.iter().zip(&be).map(|(g, y)| g * y).collect();
                    out[0] = Some(reduce_to(&prod, &out_shape, &sa));
                }
                if args.needs[1] {
                    let ae = expand_to(&args.parents[0].data(), &sa, &out_shape);
                    let prod: Vec<f32> = args.upstream.iter().zip(&ae).map(|(g, x)| g * x).collect();
                    out[1] = Some(reduce_to(&prod, &out_shape, &sb));
                }
                out
            }),
        )
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        let (data, shape) = binary_broadcast(self, other, |x, y| x / y);
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let out_shape = shape.clone();
        Tensor::new_op(
            data,
            shape,
            vec![self.clone(), other.clone()],
            Box::new(move |args| {
                let mut out = vec![None, None];
                let be = expand_to(&args.parents[1].data(), &sb, &out_shape);
                if args.needs[0] {
                    let g: Vec<f32> = args.upstream.iter().zip(&be).map(|(g, y)| g / y).collect();
                    out[0] = Some(reduce_to(&g, &out_shape, &sa));
                }
                if args.needs[1] {
                    let ae = expand_to(&args.parents[0].data(), &sa, &out_shape);
                    let g: Vec<f32> = args
                        .upstream
                        .iter()
                        .zip(&ae)
                        .zip(&be)
                        .map(|((g, x), y)| -g * x / (y * y))
                        .collect();
                    out[1] = Some(reduce_to(&g, &out_shape, &sb));
                }
                out
            }),
        )
    }

    /// y = scale * x + shift
    pub fn affine(&self, scale: f32, shift: f32) -> Tensor {
        let data = self.data().iter().map(|&x| scale * x + shift).collect();
        Tensor::new_op(
            data,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |args| vec![Some(args.upstream.iter().map(|g| g * scale).collect())]),
        )
    }

    pub fn neg(&self) -> Tensor {
        self.affine(-1.0, 0.0)
    }

    pub fn scale(&self, scale: f32) -> Tensor {
        self.affine(scale, 0.0)
    }

    pub fn square(&self) -> Tensor {
        self.mul(self)
    }

    fn unary(&self, f: impl Fn(f32) -> f32, dfdx_from_xy: impl Fn(f32, f32) -> f32 + 'static) -> Tensor {
        let data: Vec<f32> = self.data().iter().map(|&x| f(x)).collect();
        let saved = data.clone();
        Tensor::new_op(
            data,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |args| {
                let x = args.parents[0].data();
                let g = args
                    .upstream
                    .iter()
                    .zip(x.iter())
                    .zip(&saved)
                    .map(|((g, &x), &y)| g * dfdx_from_xy(x, y))
                    .collect();
                vec![Some(g)]
            }),
        )
    }

    pub fn relu(&self) -> Tensor {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn exp(&self) -> Tensor {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn log(&self) -> Tensor {
        self.unary(|x| x.ln(), |x, _| 1.0 / x)
    }

    pub fn sqrt(&self) -> Tensor {
        self.unary(|x| x.sqrt(), |_, y| 0.5 / y)
    }

    pub fn tanh(&self) -> Tensor {
        self.unary(|x| x.tanh(), |_, y| 1.0 - y * y)
    }

    /// tanh-approximation GELU.
    pub fn gelu(&self) -> Tensor {
        const C: f32 = 0.797_884_6; // sqrt(2/pi)
        let f = |x: f32| 0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh());
        let df = |x: f32, _y: f32| {
            let inner = C * (x + 0.044715 * x * x * x);
            let t = inner.tanh();
            let dinner = C * (1.0 + 3.0 * 0.044715 * x * x);
            0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        };
        self.unary(f, df)
    }

    /// Pass-through gradient inside [lo, hi], zero outside.
    pub fn clamp(&self, lo: f32, hi: f32) -> Tensor {
        self.unary(
            move |x| x.clamp(lo, hi),
            move |x, _| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 },
        )
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        self.matmul_impl(other, false)
    }

    /// a @ b^T over the last two axes.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        self.matmul_impl(other, true)
    }

    fn matmul_impl(&self, other: &Tensor, transpose_b: bool) -> Tensor {
        let (ab, m, ka) = split_matrix_shape(self.shape());
        let (bb, r0, r1) = split_matrix_shape(other.shape());
        let (kb, n) = if transpose_b { (r1, r0) } else { (r0, r1) };
        assert_eq!(ka, kb, "matmul inner dims mismatch: {:?} x {:?}", self.shape(), other.shape());
        let k = ka;
        let b_is_matrix = other.shape().len() == 2;
        if !b_is_matrix {
            assert_eq!(
                self.shape()[..self.shape().len() - 2],
                other.shape()[..other.shape().len() - 2],
                "batched matmul requires equal batch dims"
            );
            assert_eq!(ab, bb);
        }
        let mut out_shape = self.shape()[..self.shape().len() - 2].to_vec();
        out_shape.push(m);
        out_shape.push(n);

        let ad = self.data();
        let bd = other.data();
        let mut out = vec![0.0f32; ab * m * n];
        for batch in 0..ab {
            let a_sl = &ad[batch * m * k..(batch + 1) * m * k];
            let b_sl = if b_is_matrix { &bd[..] } else { &bd[batch * k * n..(batch + 1) * k * n] };
            let c_sl = &mut out[batch * m * n..(batch + 1) * m * n];
            if transpose_b {
                mm_nt(a_sl, b_sl, c_sl, m, k, n);
            } else {
                mm_nn(a_sl, b_sl, c_sl, m, k, n);
            }
        }
        drop(ad);
        drop(bd);

        Tensor::new_op(
            out,
            out_shape,
            vec![self.clone(), other.clone()],
            Box::new(move |args| {
                let ad = args.parents[0].data();
                let bd = args.parents[1].data();
                let g = args.upstream;
                let mut out = vec![None, None];
                if args.needs[0] {
                    // dA = G @ B^T (nn layout) or G @ B (nt layout)
                    let mut da = vec![0.0f32; ab * m * k];
                    for batch in 0..ab {
                        let g_sl = &g[batch * m * n..(batch + 1) * m * n];
                        let b_sl = if b_is_matrix { &bd[..] } else { &bd[batch * k * n..(batch + 1) * k * n] };
                        let da_sl = &mut da[batch * m * k..(batch + 1) * m * k];
                        if transpose_b {
                            mm_nn(g_sl, b_sl, da_sl, m, n, k);
                        } else {
                            mm_nt(g_sl, b_sl, da_sl, m, n, k);
                        }
                    }
                    out[0] = Some(da);
                }
                if args.needs[1] {
                    let bn = if b_is_matrix { 1 } else { ab };
                    let per = k * n;
                    let mut db = vec![0.0f32; bn * per];
                    for batch in 0..ab {
                        let a_sl = &ad[batch * m * k..(batch + 1) * m * k];
                        let g_sl = &g[batch * m * n..(batch + 1) * m * n];
                        let db_sl = if b_is_matrix { &mut db[..] } else { &mut db[batch * per..(batch + 1) * per] };
                        if transpose_b {
                            // B layout is [n,k]; dB = G^T @ A
                            mm_tn(g_sl, a_sl, db_sl, m, n, k);
                        } else {
                            mm_tn(a_sl, g_sl, db_sl, m, k, n);
                        }
                    }
                    out[1] = Some(db);
                }
                out
            }),
        )
    }

    pub fn sum_all(&self) -> Tensor {
        let s: f32 = self.data().iter().sum();
        let n = self.numel();
        Tensor::new_op(
            vec![s],
            vec![],
            vec![self.clone()],
            Box::new(move |args| vec![Some(vec![args.upstream[0]; n])]),
        )
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.numel() as f32;
        self.sum_all().scale(1.0 / n)
    }

    fn axis_geometry(&self, axis: usize) -> (usize, usize, usize) {
        assert!(axis < self.shape().len(), "axis {} out of range for {:?}", axis, self.shape());
        let outer = numel_of(&self.shape()[..axis]);
        let len = self.shape()[axis];
        let inner = numel_of(&self.shape()[axis + 1..]);
        (outer, len, inner)
    }

    fn reduced_shape(&self, axis: usize) -> Vec<usize> {
        let mut s = self.shape().to_vec();
        s.remove(axis);
        s
    }

    pub fn sum_axis(&self, axis: usize) -> Tensor {
        let (outer, len, inner) = self.axis_geometry(axis);
        let d = self.data();
        let mut out = vec![0.0f32; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                let row = &d[base..base + inner];
                let acc = &mut out[o * inner..(o + 1) * inner];
                for (a, &x) in acc.iter_mut().zip(row) {
                    *a += x;
                }
            }
        }
        drop(d);
        Tensor::new_op(
            out,
            self.reduced_shape(axis),
            vec![self.clone()],
            Box::new(move |args| {
                let mut g = vec![0.0f32; outer * len * inner];
                for o in 0..outer {
                    let up = &args.upstream[o * inner..(o + 1) * inner];
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        g[base..base + inner].copy_from_slice(up);
                    }
                }
                vec![Some(g)]
            }),
        )
    }

    pub fn mean_axis(&self, axis: usize) -> Tensor {
        let len = self.shape()[axis] as f32;
        self.sum_axis(axis).scale(1.0 / len)
    }

    fn extreme_axis(&self, axis: usize, take_max: bool) -> Tensor {
        let (outer, len, inner) = self.axis_geometry(axis);
        assert!(len > 0);
        let d = self.data();
        let mut out = vec![0.0f32; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = d[(o * len) * inner + i];
                let mut best_l = 0usize;
                for l in 1..len {
                    let v = d[(o * len + l) * inner + i];
                    if (take_max && v > best) || (!take_max && v < best) {
                        best = v;
                        best_l = l;
                    }
                }
                out[o * inner + i] = best;
                arg[o * inner + i] = best_l;
            }
        }
        drop(d);
        Tensor::new_op(
            out,
            self.reduced_shape(axis),
            vec![self.clone()],
            Box::new(move |args| {
                let mut g = vec![0.0f32; outer * len * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let l = arg[o * inner + i];
                        g[(o * len + l) * inner + i] += args.upstream[o * inner + i];
                    }
                }
                vec![Some(g)]
            }),
        )
    }

    /// Max over one axis; gradient routes to the (first) arg-max entry.
    pub fn max_axis(&self, axis: usize) -> Tensor {
        self.extreme_axis(axis, true)
    }

    pub fn min_axis(&self, axis: usize) -> Tensor {
        self.extreme_axis(axis, false)
    }

    /// Numerically stable log-sum-exp over one axis (composed primitive).
    pub fn logsumexp_axis(&self, axis: usize) -> Tensor {
        let maxes = self.max_axis(axis).detach();
        let mut keep = self.shape().to_vec();
        keep[axis] = 1;
        let maxes_k = maxes.reshape(&keep);
        let shifted = self.sub(&maxes_k);
        shifted.exp().sum_axis(axis).log().add(&maxes)
    }

    pub fn reshape(&self, new_shape: &[usize]) -> Tensor {
        assert_eq!(self.numel(), numel_of(new_shape), "reshape {:?} -> {:?}", self.shape(), new_shape);
        let old_shape = self.shape().to_vec();
        Tensor::new_op(
            self.to_vec(),
            new_shape.to_vec(),
            vec![self.clone()],
            Box::new(move |args| {
                let _ = &old_shape;
                vec![Some(args.upstream.to_vec())]
            }),
        )
    }

    /// Softmax over the last axis.
    pub fn softmax_last(&self) -> Tensor {
        let width = *self.shape().last().expect("softmax on 0-d tensor");
        let d = self.data();
        let rows = d.len() / width;
        let mut out = vec![0.0f32; d.len()];
        for r in 0..rows {
            let x = &d[r * width..(r + 1) * width];
            let y = &mut out[r * width..(r + 1) * width];
            let m = x.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let mut s = 0.0;
            for (yi, &xi) in y.iter_mut().zip(x) {
                *yi = (xi - m).exp();
                s += *yi;
            }
            for yi in y.iter_mut() {
                *yi /= s;
            }
        }
        drop(d);
        let saved = out.clone();
        Tensor::new_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |args| {
                let mut g = vec![0.0f32; saved.len()];
                for r in 0..saved.len() / width {
                    let y = &saved[r * width..(r + 1) * width];
                    let up = &args.upstream[r * width..(r + 1) * width];
                    let dot: f32 = y.iter().zip(up).map(|(&yi, &gi)| yi * gi).sum();
                    let out_row = &mut g[r * width..(r + 1) * width];
                    for ((o, &yi), &gi) in out_row.iter_mut().zip(y).zip(up) {
                        *o = yi * (gi - dot);
                    }
                }
                vec![Some(g)]
            }),
        )
    }

    /// Layer normalization over the last axis with learnable gamma/beta.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f32) -> Tensor {
        let width = *self.shape().last().expect("layer_norm on 0-d tensor");
        assert_eq!(gamma.shape(), &[width]);
        assert_eq!(beta.shape(), &[width]);
        let d = self.data();
        let gd = gamma.data();
        let bd = beta.data();
        let rows = d.len() / width;
        let mut out = vec![0.0f32; d.len()];
        let mut xhat = vec![0.0f32; d.len()];
        let mut inv_std = vec![0.0f32; rows];
        for r in 0..rows {
            let x = &d[r * width..(r + 1) * width];
            let mean = x.iter().sum::<f32>() / width as f32;
            let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / width as f32;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[r] = istd;
            for i in 0..width {
                let xh = (x[i] - mean) * istd;
                xhat[r * width + i] = xh;
                out[r * width + i] = xh * gd[i] + bd[i];
            }
        }
        drop(d);
        drop(gd);
        drop(bd);
        Tensor::new_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |args| {
                let gd = args.parents[1].data();
                let n = width as f32;
                let mut dx = if args.needs[0] { Some(vec![0.0f32; xhat.len()]) } else { None };
                let mut dgamma = if args.needs[1] { Some(vec![0.0f32; width]) } else { None };
                let mut dbeta = if args.needs[2] { Some(vec![0.0f32; width]) } else { None };
                for r in 0..xhat.len() / width {
                    let xh = &xhat[r * width..(r + 1) * width];
                    let up = &args.upstream[r * width..(r + 1) * width];
                    if let Some(dg) = dgamma.as_mut() {
                        for i in 0..width {
                            dg[i] += up[i] * xh[i];
                        }
                    }
                    if let Some(db) = dbeta.as_mut() {
                        for i in 0..width {
                            db[i] += up[i];
                        }
                    }
                    if let Some(dx) = dx.as_mut() {
                        let istd = inv_std[r];
                        let mut sum_dxhat = 0.0f32;
                        let mut sum_dxhat_xhat = 0.0f32;
                        for i in 0..width {
                            let dxh = up[i] * gd[i];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xh[i];
                        }
                        let row = &mut dx[r * width..(r + 1) * width];
                        for i in 0..width {
                            let dxh = up[i] * gd[i];
                            row[i] = istd * (dxh - sum_dxhat / n - xh[i] * sum_dxhat_xhat / n);
                        }
                    }
                }
                vec![dx, dgamma, dbeta]
            }),
        )
    }

    /// Row lookup on a [rows, width] table; the embedding primitive.
    pub fn gather_rows(&self, indices: &[usize]) -> Tensor {
        assert_eq!(self.shape().len(), 2, "gather_rows expects a 2-d table");
        let rows = self.shape()[0];
        let width = self.shape()[1];
        for &i in indices {
            assert!(i < rows, "gather index {} out of range {}", i, rows);
        }
        let d = self.data();
        let mut out = vec![0.0f32; indices.len() * width];
        for (n, &i) in indices.iter().enumerate() {
            out[n * width..(n + 1) * width].copy_from_slice(&d[i * width..(i + 1) * width]);
        }
        drop(d);
        let idx = indices.to_vec();
        Tensor::new_op(
            out,
            vec![indices.len(), width],
            vec![self.clone()],
            Box::new(move |args| {
                let mut g = vec![0.0f32; rows * width];
                for (n, &i) in idx.iter().enumerate() {
                    let up = &args.upstream[n * width..(n + 1) * width];
                    let row = &mut g[i * width..(i + 1) * width];
                    for (r, &u) in row.iter_mut().zip(up) {
                        *r += u;
                    }
                }
                vec![Some(g)]
            }),
        )
    }

    pub fn concat(parts: &[Tensor], axis: usize) -> Tensor {
        assert!(!parts.is_empty());
        let first = parts[0].shape().to_vec();
        let mut axis_total = 0usize;
        for p in parts {
            assert_eq!(p.shape().len(), first.len(), "concat rank mismatch");
            for (d, (&a, &b)) in p.shape().iter().zip(&first).enumerate() {
                if d != axis {
                    assert_eq!(a, b, "concat off-axis dims must match");
                }
            }
            axis_total += p.shape()[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer = numel_of(&first[..axis]);
        let inner = numel_of(&first[axis + 1..]);
        let mut out = vec![0.0f32; outer * axis_total * inner];
        let mut offset = 0usize;
        let part_lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        for (p, &plen) in parts.iter().zip(&part_lens) {
            let d = p.data();
            for o in 0..outer {
                let src = &d[o * plen * inner..(o + 1) * plen * inner];
                let dst_base = (o * axis_total + offset) * inner;
                out[dst_base..dst_base + plen * inner].copy_from_slice(src);
            }
            offset += plen;
        }
        Tensor::new_op(
            out,
            out_shape,
            parts.to_vec(),
            Box::new(move |args| {
                let mut grads = Vec::with_capacity(part_lens.len());
                let mut offset = 0usize;
                for (pi, &plen) in part_lens.iter().enumerate() {
                    if args.needs[pi] {
                        let mut g = vec![0.0f32; outer * plen * inner];
                        for o in 0..outer {
                            let src_base = (o * axis_total + offset) * inner;
                            g[o * plen * inner..(o + 1) * plen * inner]
                                .copy_from_slice(&args.upstream[src_base..src_base + plen * inner]);
                        }
                        grads.push(Some(g));
                    } else {
                        grads.push(None);
                    }
                    offset += plen;
                }
                grads
            }),
        )
    }

    pub fn slice_axis(&self, axis: usize, start: usize, end: usize) -> Tensor {
        let (outer, len, inner) = self.axis_geometry(axis);
        assert!(start < end && end <= len, "slice [{start},{end}) out of range for axis len {len}");
        let span = end - start;
        let d = self.data();
        let mut out = vec![0.0f32; outer * span * inner];
        for o in 0..outer {
            let src_base = (o * len + start) * inner;
            out[o * span * inner..(o + 1) * span * inner].copy_from_slice(&d[src_base..src_base + span * inner]);
        }
        drop(d);
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = span;
        Tensor::new_op(
            out,
            out_shape,
            vec![self.clone()],
            Box::new(move |args| {
                let mut g = vec![0.0f32; outer * len * inner];
                for o in 0..outer {
                    let dst_base = (o * len + start) * inner;
                    g[dst_base..dst_base + span * inner]
                        .copy_from_slice(&args.upstream[o * span * inner..(o + 1) * span * inner]);
                }
                vec![Some(g)]
            }),
        )
    }

    /// Swap axes 1 and 2 of a 4-d tensor (the attention head shuffle).
    pub fn swap_axes_12(&self) -> Tensor {
        assert_eq!(self.shape().len(), 4, "swap_axes_12 expects a 4-d tensor");
        let (b, s, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2], self.shape()[3]);
        let d = self.data();
        let mut out = vec![0.0f32; d.len()];
        for bi in 0..b {
            for si in 0..s {
                for hi in 0..h {
                    let src = ((bi * s + si) * h + hi) * w;
                    let dst = ((bi * h + hi) * s + si) * w;
                    out[dst..dst + w].copy_from_slice(&d[src..src + w]);
                }
            }
        }
        drop(d);
        Tensor::new_op(
            out,
            vec![b, h, s, w],
            vec![self.clone()],
            Box::new(move |args| {
                let mut g = vec![0.0f32; b * s * h * w];
                for bi in 0..b {
                    for hi in 0..h {
                        for si in 0..s {
                            let src = ((bi * h + hi) * s + si) * w;
                            let dst = ((bi * s + si) * h + hi) * w;
                            g[dst..dst + w].copy_from_slice(&args.upstream[src..src + w]);
                        }
                    }
                }
                vec![Some(g)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let x = Tensor::param(vec![1.0, 2.0, 3.0], &[3]);
        x.sum_all().backward();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_sum_gradient() {
        let x = Tensor::param(vec![2.0, -1.0], &[2]);
        x.square().sum_all().backward();
        assert_eq!(x.grad().unwrap(), vec![4.0, -2.0]);
    }

    #[test]
    fn detached_input_gets_no_grad() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]);
        let d = x.detach();
        let y = d.mul(&d).sum_all();
        assert!(!y.requires_grad());
        assert!(x.grad().is_none());
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn backward_rejects_non_scalar() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]);
        x.relu().backward();
    }

    #[test]
    fn grad_accumulates_across_backward_calls() {
        let x = Tensor::param(vec![3.0], &[1]);
        x.scale(2.0).sum_all().backward();
        x.scale(2.0).sum_all().backward();
        assert_eq!(x.grad().unwrap(), vec![4.0]);
    }

    #[test]
    fn broadcasting_bias_add() {
        let x = Tensor::param(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = Tensor::param(vec![10.0, 20.0], &[2]);
        let y = x.add(&b);
        assert_eq!(y.to_vec(), vec![11.0, 22.0, 13.0, 24.0]);
        y.sum_all().backward();
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0]);
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn matmul_small_known_values() {
        let a = Tensor::param(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = Tensor::param(vec![5.0, 6.0, 7.0, 8.0], &[2, 2]);
        let c = a.matmul(&b);
        assert_eq!(c.to_vec(), vec![19.0, 22.0, 43.0, 50.0]);
        c.sum_all().backward();
        // dA = 1 @ B^T
        assert_eq!(a.grad().unwrap(), vec![11.0, 15.0, 11.0, 15.0]);
        assert_eq!(b.grad().unwrap(), vec![4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn matmul_nt_matches_manual_transpose() {
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let b = Tensor::from_vec(vec![1.0, 0.0, 1.0, 2.0, 1.0, 0.0], &[2, 3]);
        let c = a.matmul_nt(&b);
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.to_vec(), vec![4.0, 4.0, 10.0, 13.0]);
    }

    #[test]
    fn min_axis_routes_gradient_to_argmin() {
        let x = Tensor::param(vec![3.0, 1.0, 2.0, 0.5], &[2, 2]);
        let m = x.min_axis(0);
        assert_eq!(m.to_vec(), vec![2.0, 0.5]);
        m.sum_all().backward();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn logsumexp_matches_naive() {
        let x = Tensor::from_vec(vec![0.1, 0.7, -0.3, 2.0, -1.0, 0.0], &[2, 3]);
        let lse = x.logsumexp_axis(1);
        let d = x.to_vec();
        for r in 0..2 {
            let naive: f32 = d[r * 3..r * 3 + 3].iter().map(|v| v.exp()).sum::<f32>().ln();
            assert!((lse.to_vec()[r] - naive).abs() < 1e-5);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0], &[2, 3]);
        let y = x.softmax_last();
        let d = y.to_vec();
        for r in 0..2 {
            let s: f32 = d[r * 3..r * 3 + 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let a = Tensor::param(vec![1.0, 2.0], &[1, 2]);
        let b = Tensor::param(vec![3.0, 4.0, 5.0, 6.0], &[2, 2]);
        let c = Tensor::concat(&[a.clone(), b.clone()], 0);
        assert_eq!(c.shape(), &[3, 2]);
        let back = c.slice_axis(0, 1, 3);
        assert_eq!(back.to_vec(), b.to_vec());
        back.sum_all().backward();
        assert_eq!(a.grad(), Some(vec![0.0, 0.0]));
        assert_eq!(b.grad(), Some(vec![1.0; 4]));
    }

    #[test]
    fn gather_rows_scatter_adds() {
        let table = Tensor::param(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let g = table.gather_rows(&[1, 1, 0]);
        assert_eq!(g.to_vec(), vec![3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        g.sum_all().backward();
        assert_eq!(table.grad().unwrap(), vec![1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn clamp_zeroes_gradient_outside_range() {
        let x = Tensor::param(vec![-10.0, 0.5, 10.0], &[3]);
        x.clamp(-1.0, 1.0).sum_all().backward();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn swap_axes_12_round_trips() {
        let x = Tensor::from_vec((0..24).map(|v| v as f32).collect(), &[2, 3, 2, 2]);
        let y = x.swap_axes_12();
        assert_eq!(y.shape(), &[2, 2, 3, 2]);
        let z = y.swap_axes_12();
        assert_eq!(z.to_vec(), x.to_vec());
    }

    #[test]
    fn no_nan_after_documented_ops_on_finite_inputs() {
        let x = Tensor::from_vec(vec![0.5, 1.5, 2.0, 0.1], &[2, 2]);
        for t in [x.exp(), x.log(), x.sqrt(), x.tanh(), x.gelu(), x.relu(), x.softmax_last()] {
            assert!(t.to_vec().iter().all(|v| v.is_finite()));
        }
    }
}
