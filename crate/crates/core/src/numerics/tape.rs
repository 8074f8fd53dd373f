//! Reverse-mode differentiation over a recorded operation list.
//!
//! Every operation appends a node holding its forward value; [`Tape::backward`]
//! walks the list in reverse and accumulates adjoints. Values are whole
//! matrices, so a dense layer over `T` snippets is a single node.
//!
//! Parameters are referenced from the borrowed [`ParamStore`] without copying.

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{shape_str, Matrix};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    RepeatRow(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Sum(Var),
    ScaleRows(Var, Var),
    TopKMeanRows { a: Var, k: usize, selected: Vec<usize> },
    SoftmaxRows(Var),
    GaussianKl { mq: Var, lq: Var, mp: Var, lp: Var },
    HalfSquaredError(Var, Var),
    SoftmaxCrossEntropy { logits: Var, target: Vec<f64>, eps: f64 },
}

#[derive(Debug)]
struct Node {
    value: Option<Matrix>,
    op: Op,
}

pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn check_same(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::shape(op, shape_str(a), shape_str(b)))
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Row-wise softmax of a plain matrix.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        softmax_row(m.row(r), out.row_mut(r));
    }
    out
}

/// Indices of the `k` largest entries of every column; ties go to the lower row.
/// Returned column-major: `selected[c * k + j]`.
pub fn top_k_rows(m: &Matrix, k: usize) -> Vec<usize> {
    let mut selected = Vec::with_capacity(k * m.cols());
    let mut order: Vec<usize> = Vec::with_capacity(m.rows());
    for c in 0..m.cols() {
        order.clear();
        order.extend(0..m.rows());
        order.sort_by(|&i, &j| m.get(j, c).total_cmp(&m.get(i, c)).then(i.cmp(&j)));
        selected.extend_from_slice(&order[..k]);
    }
    selected
}

pub(crate) fn gaussian_kl_terms(mq: &[f64], lq: &[f64], mp: &[f64], lp: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..mq.len() {
        let diff = mq[i] - mp[i];
        kl += 0.5 * (lp[i] - lq[i]) + (lq[i].exp() + diff * diff) / (2.0 * lp[i].exp()) - 0.5;
    }
    kl
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::with_capacity(256),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.store.value(*id),
            (None, _) => unreachable!("only parameter nodes borrow their value"),
        }
    }

    /// Convenience for 1×1 results.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).as_slice()[0]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// `x · wᵀ + b` with `x: n×in`, `w: out×in`, `b: 1×out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols() != wv.cols() {
            return Err(Error::shape(
                "linear",
                format!("input with {} columns", wv.cols()),
                shape_str(xv),
            ));
        }
        let (n, inp, out) = (xv.rows(), xv.cols(), wv.rows());
        let mut y = Matrix::zeros(n, out);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != (1, out) {
                return Err(Error::shape("linear bias", format!("1x{out}"), shape_str(bv)));
            }
            for r in 0..n {
                y.row_mut(r).copy_from_slice(bv.as_slice());
            }
        }
        let (xs, ws) = (xv.as_slice(), wv.as_slice());
        let ys = y.as_mut_slice();
        for r in 0..n {
            let xr = &xs[r * inp..(r + 1) * inp];
            for o in 0..out {
                let wr = &ws[o * inp..(o + 1) * inp];
                let mut acc = 0.0;
                for i in 0..inp {
                    acc += xr[i] * wr[i];
                }
                ys[r * out + o] += acc;
            }
        }
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        check_same(name, av, bv)?;
        let data = av
            .as_slice()
            .iter()
            .zip(bv.as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let m = Matrix::from_vec(av.rows(), av.cols(), data)?;
        Ok(self.push(m, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let m = self.value(a).map(|x| x * s);
        self.push(m, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let m = self.value(a).map(|x| x + s);
        self.push(m, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let m = self.value(a).map(|x| x.max(0.0));
        self.push(m, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let m = self.value(a).map(f64::tanh);
        self.push(m, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let m = self.value(a).map(sigmoid);
        self.push(m, Op::Sigmoid(a))
    }

    /// `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let m = self.value(a).map(softplus);
        self.push(m, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let m = self.value(a).map(f64::exp);
        self.push(m, Op::Exp(a))
    }

    /// Clamp; the gradient passes only where the input lies inside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let m = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(m, Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(Error::shape("concat_cols", format!("{rows} rows"), shape_str(pv)));
            }
            cols += pv.cols();
        }
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pv = self.value(p);
                let w = pv.cols();
                m.row_mut(r)[off..off + w].copy_from_slice(pv.row(r));
                off += w;
            }
        }
        Ok(self.push(m, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.cols() != cols {
                return Err(Error::shape("concat_rows", format!("{cols} columns"), shape_str(pv)));
            }
            data.extend_from_slice(pv.as_slice());
            rows += pv.rows();
        }
        let m = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(m, Op::ConcatRows(parts.to_vec())))
    }

    /// Stacks `n` copies of the `1×c` row `a`.
    pub fn repeat_row(&mut self, a: Var, n: usize) -> Result<Var> {
        let av = self.value(a);
        if av.rows() != 1 {
            return Err(Error::shape("repeat_row", "1 row", shape_str(av)));
        }
        let data = av.as_slice().repeat(n);
        let m = Matrix::from_vec(n, av.cols(), data)?;
        Ok(self.push(m, Op::RepeatRow(a)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("at least {} columns", start + len),
                shape_str(av),
            ));
        }
        let mut m = Matrix::zeros(av.rows(), len);
        for r in 0..av.rows() {
            m.row_mut(r).copy_from_slice(&av.row(r)[start..start + len]);
        }
        Ok(self.push(m, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.rows() {
            return Err(Error::shape(
                "slice_rows",
                format!("at least {} rows", start + len),
                shape_str(av),
            ));
        }
        let c = av.cols();
        let m = Matrix::from_vec(len, c, av.as_slice()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(m, Op::SliceRows(a, start)))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        self.slice_rows(a, r, 1)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(a))
    }

    /// Sum of a list of scalar nodes; `None` for an empty list.
    pub fn sum_all(&mut self, parts: &[Var]) -> Result<Option<Var>> {
        let mut iter = parts.iter().copied();
        let Some(mut acc) = iter.next() else {
            return Ok(None);
        };
        for p in iter {
            acc = self.add(acc, p)?;
        }
        Ok(Some(acc))
    }

    /// Multiplies row `n` of `m` by the scalar `a[n]` (`a` is `n×1`).
    pub fn scale_rows(&mut self, m: Var, a: Var) -> Result<Var> {
        let (mv, av) = (self.value(m), self.value(a));
        if av.shape() != (mv.rows(), 1) {
            return Err(Error::shape("scale_rows", format!("{}x1", mv.rows()), shape_str(av)));
        }
        let mut out = mv.clone();
        for r in 0..mv.rows() {
            let s = av.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        Ok(self.push(out, Op::ScaleRows(m, a)))
    }

    /// Per-column mean of the `k` largest rows; output is `1×cols`.
    pub fn top_k_mean_rows(&mut self, a: Var, k: usize) -> Result<Var> {
        let av = self.value(a);
        if k == 0 || k > av.rows() {
            return Err(Error::shape("top_k_mean_rows", format!("1 <= k <= {}", av.rows()), k));
        }
        let selected = top_k_rows(av, k);
        let mut out = Matrix::zeros(1, av.cols());
        for c in 0..av.cols() {
            let s: f64 = selected[c * k..(c + 1) * k].iter().map(|&r| av.get(r, c)).sum();
            out.set(0, c, s / k as f64);
        }
        Ok(self.push(out, Op::TopKMeanRows { a, k, selected }))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let m = softmax_rows(self.value(a));
        self.push(m, Op::SoftmaxRows(a))
    }

    /// `KL(N(mq, e^lq) || N(mp, e^lp))` summed over every entry.
    pub fn gaussian_kl(&mut self, mq: Var, lq: Var, mp: Var, lp: Var) -> Result<Var> {
        let shapes = [self.value(mq), self.value(lq), self.value(mp), self.value(lp)];
        for s in &shapes[1..] {
            check_same("gaussian_kl", shapes[0], s)?;
        }
        let kl = gaussian_kl_terms(
            shapes[0].as_slice(),
            shapes[1].as_slice(),
            shapes[2].as_slice(),
            shapes[3].as_slice(),
        );
        Ok(self.push(Matrix::filled(1, 1, kl), Op::GaussianKl { mq, lq, mp, lp }))
    }

    /// `½ Σ (a − b)²`.
    pub fn half_squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        check_same("half_squared_error", av, bv)?;
        let s: f64 = av
            .as_slice()
            .iter()
            .zip(bv.as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(Matrix::filled(1, 1, 0.5 * s), Op::HalfSquaredError(a, b)))
    }

    /// `−Σ_c target_c · log max(softmax(logits)_c, eps)` for a `1×K` logit row.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &[f64], eps: f64) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != 1 || lv.cols() != target.len() {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("1x{}", target.len()),
                shape_str(lv),
            ));
        }
        let mut p = vec![0.0; target.len()];
        softmax_row(lv.as_slice(), &mut p);
        let loss: f64 = target
            .iter()
            .zip(&p)
            .filter(|(t, _)| **t != 0.0)
            .map(|(t, pc)| -t * pc.max(eps).ln())
            .sum();
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::SoftmaxCrossEntropy {
                logits,
                target: target.to_vec(),
                eps,
            },
        ))
    }

    /// Accumulates d`loss`/d(parameter) for every parameter of the store.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::shape("backward", "1x1 loss", shape_str(lv)));
        }
        let mut adj: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut grads = Gradients::zeros_like(self.store);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => grads.0[id.0].add_scaled(&g, 1.0),
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, inp, out) = (xv.rows(), xv.cols(), wv.rows());
                    let (gs, xs, ws) = (g.as_slice(), xv.as_slice(), wv.as_slice());
                    let mut dx = Matrix::zeros(n, inp);
                    let mut dw = Matrix::zeros(out, inp);
                    {
                        let dxs = dx.as_mut_slice();
                        let dws = dw.as_mut_slice();
                        for r in 0..n {
                            let xr = &xs[r * inp..(r + 1) * inp];
                            for o in 0..out {
                                let go = gs[r * out + o];
                                if go == 0.0 {
                                    continue;
                                }
                                let wr = &ws[o * inp..(o + 1) * inp];
                                let dxr = &mut dxs[r * inp..(r + 1) * inp];
                                for k in 0..inp {
                                    dxr[k] += go * wr[k];
                                }
                                let dwr = &mut dws[o * inp..(o + 1) * inp];
                                for k in 0..inp {
                                    dwr[k] += go * xr[k];
                                }
                            }
                        }
                    }
                    if let Some(b) = b {
                        let mut db = Matrix::zeros(1, out);
                        for r in 0..n {
                            for o in 0..out {
                                db.as_mut_slice()[o] += gs[r * out + o];
                            }
                        }
                        accumulate(&mut adj, *b, db);
                    }
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *w, dw);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let ga = elementwise(&g, self.value(*b), |gi, bi| gi * bi);
                    let gb = elementwise(&g, self.value(*a), |gi, ai| gi * ai);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::Scale(a, s) => accumulate(&mut adj, *a, g.map(|x| x * s)),
                Op::AddScalar(a) => accumulate(&mut adj, *a, g),
                Op::Relu(a) => {
                    let d = elementwise(&g, self.value(*a), |gi, xi| if xi > 0.0 { gi } else { 0.0 });
                    accumulate(&mut adj, *a, d);
                }
                Op::Tanh(a) => {
                    let d = elementwise(&g, self.value(Var(i)), |gi, yi| gi * (1.0 - yi * yi));
                    accumulate(&mut adj, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = elementwise(&g, self.value(Var(i)), |gi, yi| gi * yi * (1.0 - yi));
                    accumulate(&mut adj, *a, d);
                }
                Op::Softplus(a) => {
                    let d = elementwise(&g, self.value(*a), |gi, xi| gi * sigmoid(xi));
                    accumulate(&mut adj, *a, d);
                }
                Op::Exp(a) => {
                    let d = elementwise(&g, self.value(Var(i)), |gi, yi| gi * yi);
                    accumulate(&mut adj, *a, d);
                }
                Op::Clamp(a, lo, hi) => {
                    let d = elementwise(
                        &g,
                        self.value(*a),
                        |gi, xi| {
                            if xi >= *lo && xi <= *hi {
                                gi
                            } else {
                                0.0
                            }
                        },
                    );
                    accumulate(&mut adj, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut d = Matrix::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        accumulate(&mut adj, p, d);
                    }
                }
                Op::ConcatRows(parts) => {
                    let c = g.cols();
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).rows();
                        let d = Matrix::from_vec(n, c, g.as_slice()[off * c..(off + n) * c].to_vec())?;
                        off += n;
                        accumulate(&mut adj, p, d);
                    }
                }
                Op::RepeatRow(a) => {
                    let mut d = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (dv, gv) in d.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *dv += gv;
                        }
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::SliceCols(a, start) => {
                    let av = self.value(*a);
                    let mut d = Matrix::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::SliceRows(a, start) => {
                    let av = self.value(*a);
                    let mut d = Matrix::zeros(av.rows(), av.cols());
                    let c = av.cols();
                    d.as_mut_slice()[start * c..(start + g.rows()) * c].copy_from_slice(g.as_slice());
                    accumulate(&mut adj, *a, d);
                }
                Op::Sum(a) => {
                    let av = self.value(*a);
                    accumulate(&mut adj, *a, Matrix::filled(av.rows(), av.cols(), g.as_slice()[0]));
                }
                Op::ScaleRows(m, a) => {
                    let (mv, av) = (self.value(*m), self.value(*a));
                    let mut dm = g.clone();
                    let mut da = Matrix::zeros(av.rows(), 1);
                    for r in 0..mv.rows() {
                        let s = av.get(r, 0);
                        let mut acc = 0.0;
                        for (c, x) in dm.row_mut(r).iter_mut().enumerate() {
                            acc += *x * mv.get(r, c);
                            *x *= s;
                        }
                        da.set(r, 0, acc);
                    }
                    accumulate(&mut adj, *m, dm);
                    accumulate(&mut adj, *a, da);
                }
                Op::TopKMeanRows { a, k, selected } => {
                    let av = self.value(*a);
                    let mut d = Matrix::zeros(av.rows(), av.cols());
                    for c in 0..av.cols() {
                        let gc = g.get(0, c) / *k as f64;
                        for &r in &selected[c * k..(c + 1) * k] {
                            d.set(r, c, d.get(r, c) + gc);
                        }
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = self.value(Var(i));
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(gi, yi)| gi * yi).sum();
                        for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                            *dv = y.get(r, c) * (g.get(r, c) - dot);
                        }
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::GaussianKl { mq, lq, mp, lp } => {
                    let s = g.as_slice()[0];
                    let (mqv, lqv, mpv, lpv) = (self.value(*mq), self.value(*lq), self.value(*mp), self.value(*lp));
                    let (r, c) = mqv.shape();
                    let (mut dmq, mut dlq, mut dmp, mut dlp) = (
                        Matrix::zeros(r, c),
                        Matrix::zeros(r, c),
                        Matrix::zeros(r, c),
                        Matrix::zeros(r, c),
                    );
                    for j in 0..mqv.len() {
                        let diff = mqv.as_slice()[j] - mpv.as_slice()[j];
                        let inv_vp = (-lpv.as_slice()[j]).exp();
                        let vq = lqv.as_slice()[j].exp();
                        dmq.as_mut_slice()[j] = s * diff * inv_vp;
                        dmp.as_mut_slice()[j] = -s * diff * inv_vp;
                        dlq.as_mut_slice()[j] = s * (0.5 * vq * inv_vp - 0.5);
                        dlp.as_mut_slice()[j] = s * (0.5 - 0.5 * (vq + diff * diff) * inv_vp);
                    }
                    accumulate(&mut adj, *mq, dmq);
                    accumulate(&mut adj, *lq, dlq);
                    accumulate(&mut adj, *mp, dmp);
                    accumulate(&mut adj, *lp, dlp);
                }
                Op::HalfSquaredError(a, b) => {
                    let s = g.as_slice()[0];
                    let d = elementwise(self.value(*a), self.value(*b), |x, y| s * (x - y));
                    accumulate(&mut adj, *b, d.map(|x| -x));
                    accumulate(&mut adj, *a, d);
                }
                Op::SoftmaxCrossEntropy { logits, target, eps } => {
                    let s = g.as_slice()[0];
                    let lv = self.value(*logits);
                    let mut p = vec![0.0; target.len()];
                    softmax_row(lv.as_slice(), &mut p);
                    // Floored classes contribute a constant, hence no gradient.
                    let live: Vec<bool> = p.iter().map(|&pc| pc >= *eps).collect();
                    let mass: f64 = target.iter().zip(&live).filter(|(_, l)| **l).map(|(t, _)| t).sum();
                    let mut d = Matrix::zeros(1, target.len());
                    for j in 0..target.len() {
                        let own = if live[j] { target[j] } else { 0.0 };
                        d.as_mut_slice()[j] = s * (p[j] * mass - own);
                    }
                    accumulate(&mut adj, *logits, d);
                }
            }
        }
        Ok(grads)
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn elementwise(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_scaled(&g, 1.0),
        slot @ None => *slot = Some(g),
    }
}
