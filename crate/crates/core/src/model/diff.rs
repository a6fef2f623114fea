//! Reverse-mode automatic differentiation over 2-D arrays.
//!
//! Operations append nodes to a [`Tape`] in evaluation order; a single
//! reverse sweep then propagates seeded output gradients to every node that
//! depends on a gradient-requiring leaf. Gradients accumulate additively.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

use crate::error::{domain, Result};

/// Floating-point element type of a tape (`f32` or `f64`).
pub trait Scalar: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shaped values with a same-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffArray<T> {
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Vec<T>,
    pub requires_grad: bool,
}

impl<T: Scalar> DiffArray<T> {
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(domain!("shape {shape:?} needs {n} values, got {}", values.len()));
        }
        Ok(Self {
            grad: vec![T::zero(); n],
            shape,
            values,
            requires_grad: true,
        })
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![T::zero(); n],
            grad: vec![T::zero(); n],
            requires_grad: true,
        }
    }

    pub fn constant(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        let mut a = Self::matrix(rows, cols, values)?;
        a.requires_grad = false;
        Ok(a)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().chain(&self.grad).all(|v| v.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    AddRow(Var, Var),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Scale(Var, T),
    Relu(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Softmax(Var),
    Dropout(Var, Vec<T>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    MeanPool(Var, Vec<bool>),
}

#[derive(Debug)]
struct Node<T> {
    value: DiffArray<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `a (m×k) · b (k×n)`.
fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            for (cv, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

/// `a (m×k) · bᵀ` for `b (n×k)`.
fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b[j * k..(j + 1) * k];
            c[i * n + j] = ar.iter().zip(br).fold(T::zero(), |s, (&x, &y)| s + x * y);
        }
    }
    c
}

/// `aᵀ · b` for `a (m×k)`, `b (m×n)`, giving `k×n`.
fn matmul_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    for i in 0..m {
        let br = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            for (cv, &bv) in c[p * n..(p + 1) * n].iter_mut().zip(br) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

fn accumulate<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}

/// Evaluation record for one forward pass.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: DiffArray<T>, op: Op<T>, parents: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Leaf => value.requires_grad,
            _ => parents.iter().any(|p| self.nodes[p.0].needs_grad),
        };
        value.requires_grad = needs_grad;
        if value.grad.len() != value.values.len() {
            value.grad = vec![T::zero(); value.values.len()];
        }
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn out(&self, rows: usize, cols: usize, values: Vec<T>) -> DiffArray<T> {
        DiffArray {
            shape: vec![rows, cols],
            grad: Vec::new(),
            values,
            requires_grad: false,
        }
    }

    pub fn value(&self, v: Var) -> &DiffArray<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value.grad
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let a = &self.nodes[v.0].value;
        (a.rows(), a.cols())
    }

    /// Record an input array; it receives gradients iff `requires_grad`.
    pub fn leaf(&mut self, array: DiffArray<T>) -> Var {
        self.push(array, Op::Leaf, &[])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims(a);
        if self.dims(b) != (ra, ca) {
            return Err(domain!("add of {:?} and {:?}", self.dims(a), self.dims(b)));
        }
        let v = self.value(a).values.iter().zip(&self.value(b).values).map(|(&x, &y)| x + y).collect();
        let out = self.out(ra, ca, v);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// `a` plus a `1 × cols` row broadcast over every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        if self.dims(row) != (1, c) {
            return Err(domain!("row broadcast of {:?} onto {:?}", self.dims(row), (r, c)));
        }
        let bias = &self.value(row).values;
        let v = self.value(a).values.iter().enumerate().map(|(i, &x)| x + bias[i % c]).collect();
        let out = self.out(r, c, v);
        Ok(self.push(out, Op::AddRow(a, row), &[a, row]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(domain!("matmul of {m}x{k} by {k2}x{n}"));
        }
        let v = matmul(&self.value(a).values, &self.value(b).values, m, k, n);
        let out = self.out(m, n, v);
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(domain!("matmul_t of {m}x{k} by ({n}x{k2})^T"));
        }
        let v = matmul_nt(&self.value(a).values, &self.value(b).values, m, k, n);
        let out = self.out(m, n, v);
        Ok(self.push(out, Op::MatMulT(a, b), &[a, b]))
    }

    /// `x · w + b` with `w` stored `in × out` and `b` as `1 × out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let (r, c) = self.dims(a);
        let v = self.value(a).values.iter().map(|&x| x * s).collect();
        let out = self.out(r, c, v);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let v = self.value(a).values.iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
        let out = self.out(r, c, v);
        self.push(out, Op::Relu(a), &[a])
    }

    /// Per-row normalisation to zero mean and unit variance, then `gain`
    /// and `bias` (both `1 × cols`).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        if self.dims(gain) != (1, c) || self.dims(bias) != (1, c) {
            return Err(domain!("layer norm parameters do not match width {c}"));
        }
        let eps = T::of(LAYER_NORM_EPS);
        let n = T::from_usize(c).unwrap();
        let xv = &self.value(x).values;
        let (g, b) = (&self.value(gain).values, &self.value(bias).values);
        let mut xhat = Vec::with_capacity(r * c);
        let mut inv_std = Vec::with_capacity(r);
        let mut y = Vec::with_capacity(r * c);
        for row in xv.chunks(c) {
            let mean = row.iter().fold(T::zero(), |s, &v| s + v) / n;
            let var = row.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                y.push(h * g[j] + b[j]);
            }
        }
        let out = self.out(r, c, y);
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std }, &[x, gain, bias]))
    }

    /// Row-wise softmax. Columns with `key_mask[j] == false` get zero
    /// probability.
    pub fn softmax_rows(&mut self, a: Var, key_mask: Option<&[bool]>) -> Result<Var> {
        let (r, c) = self.dims(a);
        if let Some(m) = key_mask {
            if m.len() != c {
                return Err(domain!("mask of {} entries for {c} columns", m.len()));
            }
            if !m.iter().any(|&v| v) {
                return Err(domain!("every position is masked"));
            }
        }
        let valid = |j: usize| key_mask.is_none_or(|m| m[j]);
        let mut y = vec![T::zero(); r * c];
        for (i, row) in self.value(a).values.chunks(c).enumerate() {
            let mx = (0..c).filter(|&j| valid(j)).map(|j| row[j]).fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for j in (0..c).filter(|&j| valid(j)) {
                let e = (row[j] - mx).exp();
                y[i * c + j] = e;
                z = z + e;
            }
            y[i * c..(i + 1) * c].iter_mut().for_each(|v| *v = *v / z);
        }
        let out = self.out(r, c, y);
        Ok(self.push(out, Op::Softmax(a), &[a]))
    }

    /// Inverted dropout with a precomputed keep mask (`true` keeps).
    pub fn dropout(&mut self, a: Var, keep: &[bool], p: f64) -> Result<Var> {
        let (r, c) = self.dims(a);
        if keep.len() != r * c {
            return Err(domain!("dropout mask of {} for {} values", keep.len(), r * c));
        }
        let s = T::of(1.0 / (1.0 - p));
        let mult: Vec<T> = keep.iter().map(|&k| if k { s } else { T::zero() }).collect();
        let v = self.value(a).values.iter().zip(&mult).map(|(&x, &m)| x * m).collect();
        let out = self.out(r, c, v);
        Ok(self.push(out, Op::Dropout(a, mult), &[a]))
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start >= end || end > c {
            return Err(domain!("column slice {start}..{end} of width {c}"));
        }
        let src = &self.value(a).values;
        let v = (0..r).flat_map(|i| src[i * c + start..i * c + end].iter().copied()).collect();
        let out = self.out(r, end - start, v);
        Ok(self.push(out, Op::SliceCols(a, start), &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = parts.first().map(|&p| self.dims(p).0).ok_or_else(|| domain!("nothing to concatenate"))?;
        if parts.iter().any(|&p| self.dims(p).0 != r) {
            return Err(domain!("concatenated parts differ in row count"));
        }
        let total: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut v = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let c = self.dims(p).1;
                v.extend_from_slice(&self.value(p).values[i * c..(i + 1) * c]);
            }
        }
        let out = self.out(r, total, v);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Mean over the rows where `mask` is true, giving `1 × cols`.
    pub fn mean_pool_rows(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let (r, c) = self.dims(a);
        if mask.len() != r {
            return Err(domain!("pool mask of {} for {r} rows", mask.len()));
        }
        let k = mask.iter().filter(|&&m| m).count();
        if k == 0 {
            return Err(domain!("every frame is masked"));
        }
        let kt = T::from_usize(k).unwrap();
        let mut v = vec![T::zero(); c];
        for (i, row) in self.value(a).values.chunks(c).enumerate() {
            if mask[i] {
                accumulate(&mut v, row);
            }
        }
        v.iter_mut().for_each(|x| *x = *x / kt);
        let out = self.out(1, c, v);
        Ok(self.push(out, Op::MeanPool(a, mask.to_vec()), &[a]))
    }

    /// Fails if any value or gradient on the tape is non-finite.
    pub fn check_finite(&self) -> Result<()> {
        match self.nodes.iter().position(|n| !n.value.is_finite()) {
            Some(i) => Err(domain!("non-finite value at tape node {i}")),
            None => Ok(()),
        }
    }

    /// Add `seed` to the gradient of each listed node, then propagate every
    /// gradient on the tape back to the leaves.
    pub fn backward(&mut self, seeds: &[(Var, &[T])]) -> Result<()> {
        for &(v, g) in seeds {
            let node = &mut self.nodes[v.0];
            if g.len() != node.value.len() {
                return Err(domain!("seed of {} for a node of {}", g.len(), node.value.len()));
            }
            accumulate(&mut node.value.grad, g);
        }
        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].needs_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let g = std::mem::take(&mut self.nodes[i].value.grad);
            self.propagate(i, &g);
            self.nodes[i].value.grad = g;
        }
        Ok(())
    }

    fn add_grad(&mut self, v: Var, g: &[T]) {
        let node = &mut self.nodes[v.0];
        if node.needs_grad {
            accumulate(&mut node.value.grad, g);
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&mut self, i: usize, g: &[T]) {
        let (r, c) = (self.nodes[i].value.rows(), self.nodes[i].value.cols());
        // Temporarily take the op so parents can be borrowed mutably.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.add_grad(*a, g);
                self.add_grad(*b, g);
            }
            Op::AddRow(a, row) => {
                self.add_grad(*a, g);
                if self.wants(*row) {
                    let mut s = vec![T::zero(); c];
                    for chunk in g.chunks(c) {
                        accumulate(&mut s, chunk);
                    }
                    self.add_grad(*row, &s);
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = c;
                if self.wants(*a) {
                    let ga = matmul_nt(g, &self.value(*b).values, m, n, k);
                    self.add_grad(*a, &ga);
                }
                if self.wants(*b) {
                    let gb = matmul_tn(&self.value(*a).values, g, m, k, n);
                    self.add_grad(*b, &gb);
                }
            }
            Op::MatMulT(a, b) => {
                let (m, k) = self.dims(*a);
                let n = c;
                if self.wants(*a) {
                    let ga = matmul(g, &self.value(*b).values, m, n, k);
                    self.add_grad(*a, &ga);
                }
                if self.wants(*b) {
                    let gb = matmul_tn(g, &self.value(*a).values, m, n, k);
                    self.add_grad(*b, &gb);
                }
            }
            Op::Scale(a, s) => {
                let ga: Vec<T> = g.iter().map(|&x| x * *s).collect();
                self.add_grad(*a, &ga);
            }
            Op::Relu(a) => {
                let ga: Vec<T> = g
                    .iter()
                    .zip(&self.value(*a).values)
                    .map(|(&gv, &x)| if x > T::zero() { gv } else { T::zero() })
                    .collect();
                self.add_grad(*a, &ga);
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                if self.wants(*bias) {
                    let mut gb = vec![T::zero(); c];
                    for chunk in g.chunks(c) {
                        accumulate(&mut gb, chunk);
                    }
                    self.add_grad(*bias, &gb);
                }
                if self.wants(*gain) {
                    let mut gg = vec![T::zero(); c];
                    for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                        gg.iter_mut().zip(gr.iter().zip(hr)).for_each(|(d, (&a, &h))| *d = *d + a * h);
                    }
                    self.add_grad(*gain, &gg);
                }
                if self.wants(*x) {
                    let gamma = self.value(*gain).values.clone();
                    let n = T::from_usize(c).unwrap();
                    let mut gx = vec![T::zero(); r * c];
                    for row in 0..r {
                        let gr = &g[row * c..(row + 1) * c];
                        let hr = &xhat[row * c..(row + 1) * c];
                        let dh: Vec<T> = gr.iter().zip(&gamma).map(|(&a, &b)| a * b).collect();
                        let sum_dh = dh.iter().fold(T::zero(), |s, &v| s + v);
                        let sum_dh_h = dh.iter().zip(hr).fold(T::zero(), |s, (&d, &h)| s + d * h);
                        for j in 0..c {
                            gx[row * c + j] = inv_std[row] / n * (n * dh[j] - sum_dh - hr[j] * sum_dh_h);
                        }
                    }
                    self.add_grad(*x, &gx);
                }
            }
            Op::Softmax(a) => {
                let y = &self.nodes[i].value.values;
                let mut ga = vec![T::zero(); r * c];
                for row in 0..r {
                    let yr = &y[row * c..(row + 1) * c];
                    let gr = &g[row * c..(row + 1) * c];
                    let dot = yr.iter().zip(gr).fold(T::zero(), |s, (&p, &q)| s + p * q);
                    for j in 0..c {
                        ga[row * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.add_grad(*a, &ga);
            }
            Op::Dropout(a, mult) => {
                let ga: Vec<T> = g.iter().zip(mult).map(|(&x, &m)| x * m).collect();
                self.add_grad(*a, &ga);
            }
            Op::SliceCols(a, start) => {
                let (ar, ac) = self.dims(*a);
                let mut ga = vec![T::zero(); ar * ac];
                for row in 0..ar {
                    ga[row * ac + start..row * ac + start + c].copy_from_slice(&g[row * c..(row + 1) * c]);
                }
                self.add_grad(*a, &ga);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.dims(p).1;
                    let gp: Vec<T> = (0..r).flat_map(|row| g[row * c + offset..row * c + offset + pc].iter().copied()).collect();
                    self.add_grad(p, &gp);
                    offset += pc;
                }
            }
            Op::MeanPool(a, mask) => {
                let k = T::from_usize(mask.iter().filter(|&&m| m).count()).unwrap();
                let ar = mask.len();
                let mut ga = vec![T::zero(); ar * c];
                for (row, &m) in mask.iter().enumerate() {
                    if m {
                        for j in 0..c {
                            ga[row * c + j] = g[j] / k;
                        }
                    }
                }
                self.add_grad(*a, &ga);
            }
        }
        self.nodes[i].op = op;
    }
}
