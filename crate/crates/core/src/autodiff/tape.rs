//! Wengert-list tape: every forward op appends a node; `backward` walks the
//! list once in reverse. Parameters are read from the borrowed store rather
//! than copied, so large tables (the tied target embedding) cost nothing to
//! reference.

use std::collections::HashMap;

use super::param::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{kernels, Real, Tensor};

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
    Const,
    Param(ParamId),
    Gather { param: ParamId, ids: Vec<usize> },
    MatMul(Var, Var),
    MatVec(Var, Var),
    MatVecT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBroadcast(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    LogSoftmax(Var),
    NegPick(Var, usize),
    SmoothedNll { input: Var, gold: usize, eps: f64, excluded: Option<usize> },
    Concat(Vec<Var>),
    Slice(Var, usize),
    StackRows(Vec<Var>),
    Reshape(Var),
    SumAll(Var),
    SumRows(Var),
}

#[derive(Clone, Debug)]
struct Node<R> {
    shape: Vec<usize>,
    value: Vec<R>,
    op: Op,
}

pub struct Tape<'p, R: Real> {
    params: &'p ParamStore<R>,
    nodes: Vec<Node<R>>,
    param_nodes: HashMap<ParamId, Var>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<'p, R: Real> Tape<'p, R> {
    pub fn new(params: &'p ParamStore<R>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<R> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[R] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.params.value(id).data(),
            _ => &node.value,
        }
    }

    pub fn scalar(&self, v: Var) -> R {
        self.value(v)[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor<R> {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape is valid")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<R>, op: Op) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || numel(&shape) == value.len());
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    pub fn constant(&mut self, t: Tensor<R>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Const)
    }

    pub fn constant_vec(&mut self, data: Vec<R>) -> Var {
        self.constant(Tensor::vector(data))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let shape = self.params.value(id).shape().to_vec();
        let v = self.push(shape, Vec::new(), Op::Param(id));
        self.param_nodes.insert(id, v);
        v
    }

    /// Row lookup into a parameter table. Returns `[ids.len() × cols]`.
    pub fn gather(&mut self, table: ParamId, ids: &[usize]) -> Result<Var> {
        let t = self.params.value(table);
        let (rows, cols) = (t.rows(), t.cols());
        if ids.is_empty() {
            return Err(Error::Empty("gather"));
        }
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    op: "gather",
                    index: id,
                    len: rows,
                });
            }
            out.extend_from_slice(t.row(id));
        }
        Ok(self.push(
            vec![ids.len(), cols],
            out,
            Op::Gather {
                param: table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Single row lookup as a vector `[cols]`.
    pub fn row_of(&mut self, table: ParamId, id: usize) -> Result<Var> {
        let m = self.gather(table, &[id])?;
        let cols = self.shape(m)[1];
        self.reshape(m, &[cols])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.shape_err("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![R::zero(); m * n];
        kernels::matmul(self.value(a), self.value(b), &mut out, m, k, n);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b)))
    }

    /// `w[m×n] · x[n] -> [m]`
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (sw, sx) = (self.shape(w), self.shape(x));
        if sw.len() != 2 || sx.len() != 1 || sw[1] != sx[0] {
            return Err(self.shape_err("matvec", w, x));
        }
        let (m, n) = (sw[0], sw[1]);
        let mut out = vec![R::zero(); m];
        kernels::matvec(self.value(w), self.value(x), &mut out, m, n);
        Ok(self.push(vec![m], out, Op::MatVec(w, x)))
    }

    /// `w[m×n]ᵀ · x[m] -> [n]`
    pub fn matvec_t(&mut self, w: Var, x: Var) -> Result<Var> {
        let (sw, sx) = (self.shape(w), self.shape(x));
        if sw.len() != 2 || sx.len() != 1 || sw[0] != sx[0] {
            return Err(self.shape_err("matvec_t", w, x));
        }
        let (m, n) = (sw[0], sw[1]);
        let mut out = vec![R::zero(); n];
        kernels::matvec_t(self.value(w), self.value(x), &mut out, m, n);
        Ok(self.push(vec![n], out, Op::MatVecT(w, x)))
    }

    /// `W·x + b`
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let wx = self.matvec(w, x)?;
        self.add(wx, b)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::Shape {
                op: "transpose",
                left: s.to_vec(),
                right: vec![],
            });
        }
        let (m, n) = (s[0], s[1]);
        let src = self.value(a);
        let mut out = vec![R::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        Ok(self.push(vec![n, m], out, Op::Transpose(a)))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(R, R) -> R,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err(name, a, b));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, op))
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

    /// Adds vector `v[c]` to every row of matrix `m[r×c]`.
    pub fn add_row_broadcast(&mut self, m: Var, v: Var) -> Result<Var> {
        let (sm, sv) = (self.shape(m), self.shape(v));
        if sm.len() != 2 || sv.len() != 1 || sm[1] != sv[0] {
            return Err(self.shape_err("add_row_broadcast", m, v));
        }
        let c = sm[1];
        let vv = self.value(v);
        let out = self
            .value(m)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + vv[i % c])
            .collect();
        let shape = sm.to_vec();
        Ok(self.push(shape, out, Op::AddRowBroadcast(m, v)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let cr = R::of(c);
        let out = self.value(a).iter().map(|&x| x * cr).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, Op::Sigmoid(a))
    }

    fn check_vector(&self, op: &'static str, a: Var) -> Result<()> {
        match self.shape(a) {
            [n] if *n >= 1 => Ok(()),
            s => Err(Error::Shape {
                op,
                left: s.to_vec(),
                right: vec![],
            }),
        }
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.check_vector("softmax", a)?;
        let out = kernels::softmax(self.value(a));
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Softmax(a)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.check_vector("log_softmax", a)?;
        let out = kernels::log_softmax(self.value(a));
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::LogSoftmax(a)))
    }

    /// `-log_probs[index]` as a scalar.
    pub fn pick_neg_log_prob(&mut self, log_probs: Var, index: usize) -> Result<Var> {
        self.check_vector("pick_neg_log_prob", log_probs)?;
        let n = self.shape(log_probs)[0];
        if index >= n {
            return Err(Error::Index {
                op: "pick_neg_log_prob",
                index,
                len: n,
            });
        }
        let v = -self.value(log_probs)[index];
        Ok(self.push(vec![1], vec![v], Op::NegPick(log_probs, index)))
    }

    /// Label-smoothed negative log-likelihood:
    /// `-[(1-eps)·lp[gold] + eps/|V'| · Σ_{v∈V'} lp[v]]`, where `V'` omits `excluded`.
    pub fn smoothed_nll(
        &mut self,
        log_probs: Var,
        gold: usize,
        eps: f64,
        excluded: Option<usize>,
    ) -> Result<Var> {
        self.check_vector("smoothed_nll", log_probs)?;
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::Config(format!("label smoothing {eps} outside [0, 1)")));
        }
        let lp = self.value(log_probs);
        let n = lp.len();
        if gold >= n {
            return Err(Error::Index {
                op: "smoothed_nll",
                index: gold,
                len: n,
            });
        }
        let mut loss = -(1.0 - eps) * lp[gold].f64();
        if eps > 0.0 {
            let support = n - usize::from(excluded.is_some_and(|e| e < n));
            let total: f64 = lp
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != excluded)
                .map(|(_, x)| x.f64())
                .sum();
            loss -= eps / support as f64 * total;
        }
        Ok(self.push(
            vec![1],
            vec![R::of(loss)],
            Op::SmoothedNll {
                input: log_probs,
                gold,
                eps,
                excluded,
            },
        ))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Empty("concat"));
        }
        let mut out = Vec::new();
        for &p in parts {
            self.check_vector("concat", p)?;
            out.extend_from_slice(self.value(p));
        }
        let n = out.len();
        Ok(self.push(vec![n], out, Op::Concat(parts.to_vec())))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.check_vector("slice", a)?;
        let n = self.shape(a)[0];
        if len == 0 || start + len > n {
            return Err(Error::Index {
                op: "slice",
                index: start + len,
                len: n,
            });
        }
        let out = self.value(a)[start..start + len].to_vec();
        Ok(self.push(vec![len], out, Op::Slice(a, start)))
    }

    /// Stacks equal-length vectors into a `[rows.len() × n]` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows.first().ok_or(Error::Empty("stack_rows"))?;
        let mut out = Vec::new();
        for &r in rows {
            self.check_vector("stack_rows", r)?;
            if self.shape(r) != self.shape(first) {
                return Err(self.shape_err("stack_rows", first, r));
            }
            out.extend_from_slice(self.value(r));
        }
        let n = self.shape(first)[0];
        Ok(self.push(vec![rows.len(), n], out, Op::StackRows(rows.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != numel(self.shape(a)) {
            return Err(Error::Shape {
                op: "reshape",
                left: self.shape(a).to_vec(),
                right: shape.to_vec(),
            });
        }
        let out = self.value(a).to_vec();
        Ok(self.push(shape.to_vec(), out, Op::Reshape(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: R = self.value(a).iter().copied().sum();
        self.push(vec![1], vec![s], Op::SumAll(a))
    }

    /// Column sums of a matrix: `[r×c] -> [c]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::Shape {
                op: "sum_rows",
                left: s.to_vec(),
                right: vec![],
            });
        }
        let c = s[1];
        let mut out = vec![R::zero(); c];
        for (i, &x) in self.value(a).iter().enumerate() {
            out[i % c] += x;
        }
        Ok(self.push(vec![c], out, Op::SumRows(a)))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let m = self.mul(a, b)?;
        Ok(self.sum(m))
    }

    /// Sums scalar nodes; an empty list yields a constant zero.
    pub fn add_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        match terms {
            [] => Ok(self.constant_vec(vec![R::zero()])),
            [only] => Ok(*only),
            _ => {
                let stacked = self.concat(terms)?;
                Ok(self.sum(stacked))
            }
        }
    }

    /// Reverse sweep from a scalar `loss`, accumulating parameter gradients
    /// into `grads`. Consumes the tape.
    pub fn backward(self, loss: Var, grads: &mut Gradients<R>) -> Result<()> {
        if numel(self.shape(loss)) != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut adj: Vec<Option<Vec<R>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![R::one()]);

        fn acc<R: Real>(adj: &mut [Option<Vec<R>>], v: Var, len: usize) -> &mut [R] {
            adj[v.0].get_or_insert_with(|| vec![R::zero(); len])
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Const => {}
                Op::Param(id) => {
                    let buf = grads.buffer(*id, g.len());
                    for (b, x) in buf.iter_mut().zip(&g) {
                        *b += *x;
                    }
                }
                Op::Gather { param, ids } => {
                    let t = self.params.value(*param);
                    let cols = t.cols();
                    let buf = grads.buffer(*param, t.len());
                    for (k, &id) in ids.iter().enumerate() {
                        let dst = &mut buf[id * cols..(id + 1) * cols];
                        for (d, x) in dst.iter_mut().zip(&g[k * cols..(k + 1) * cols]) {
                            *d += *x;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                    let n = self.shape(*b)[1];
                    let (av, bv) = (self.value(*a), self.value(*b));
                    // dA = dC·Bᵀ
                    let da = acc(&mut adj, *a, m * k);
                    for r in 0..m {
                        for p in 0..k {
                            let mut s = R::zero();
                            for c in 0..n {
                                s += g[r * n + c] * bv[p * n + c];
                            }
                            da[r * k + p] += s;
                        }
                    }
                    // dB = Aᵀ·dC
                    let db = acc(&mut adj, *b, k * n);
                    for r in 0..m {
                        for p in 0..k {
                            let a_rp = av[r * k + p];
                            for c in 0..n {
                                db[p * n + c] += a_rp * g[r * n + c];
                            }
                        }
                    }
                }
                Op::MatVec(w, x) => {
                    let (m, n) = (self.shape(*w)[0], self.shape(*w)[1]);
                    let (wv, xv) = (self.value(*w), self.value(*x));
                    kernels::outer(&g, xv, acc(&mut adj, *w, m * n));
                    kernels::matvec_t(wv, &g, acc(&mut adj, *x, n), m, n);
                }
                Op::MatVecT(w, x) => {
                    let (m, n) = (self.shape(*w)[0], self.shape(*w)[1]);
                    let (wv, xv) = (self.value(*w), self.value(*x));
                    kernels::outer(xv, &g, acc(&mut adj, *w, m * n));
                    kernels::matvec(wv, &g, acc(&mut adj, *x, m), m, n);
                }
                Op::Transpose(a) => {
                    let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                    let da = acc(&mut adj, *a, m * n);
                    for r in 0..m {
                        for c in 0..n {
                            da[r * n + c] += g[c * m + r];
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut adj, *a, g.len()), &g);
                    add_into(acc(&mut adj, *b, g.len()), &g);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut adj, *a, g.len()), &g);
                    let db = acc(&mut adj, *b, g.len());
                    for (d, &x) in db.iter_mut().zip(&g) {
                        *d -= x;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da = acc(&mut adj, *a, g.len());
                    for ((d, &x), &y) in da.iter_mut().zip(&g).zip(bv) {
                        *d += x * y;
                    }
                    let db = acc(&mut adj, *b, g.len());
                    for ((d, &x), &y) in db.iter_mut().zip(&g).zip(av) {
                        *d += x * y;
                    }
                }
                Op::AddRowBroadcast(m, v) => {
                    add_into(acc(&mut adj, *m, g.len()), &g);
                    let c = self.shape(*v)[0];
                    let dv = acc(&mut adj, *v, c);
                    for (k, &x) in g.iter().enumerate() {
                        dv[k % c] += x;
                    }
                }
                Op::Scale(a, c) => {
                    let c = R::of(*c);
                    let da = acc(&mut adj, *a, g.len());
                    for (d, &x) in da.iter_mut().zip(&g) {
                        *d += x * c;
                    }
                }
                Op::Tanh(a) => {
                    let da = acc(&mut adj, *a, g.len());
                    for ((d, &x), &y) in da.iter_mut().zip(&g).zip(&node.value) {
                        *d += x * (R::one() - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    let da = acc(&mut adj, *a, g.len());
                    for ((d, &x), &y) in da.iter_mut().zip(&g).zip(&node.value) {
                        *d += x * y * (R::one() - y);
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy: R = g.iter().zip(y).map(|(&x, &p)| x * p).sum();
                    let da = acc(&mut adj, *a, g.len());
                    for ((d, &x), &p) in da.iter_mut().zip(&g).zip(y) {
                        *d += p * (x - gy);
                    }
                }
                Op::LogSoftmax(a) => {
                    let gsum: R = g.iter().copied().sum();
                    let da = acc(&mut adj, *a, g.len());
                    for ((d, &x), &lp) in da.iter_mut().zip(&g).zip(&node.value) {
                        *d += x - lp.exp() * gsum;
                    }
                }
                Op::NegPick(a, idx) => {
                    let n = self.shape(*a)[0];
                    acc(&mut adj, *a, n)[*idx] -= g[0];
                }
                Op::SmoothedNll {
                    input,
                    gold,
                    eps,
                    excluded,
                } => {
                    let n = self.shape(*input)[0];
                    let da = acc(&mut adj, *input, n);
                    da[*gold] -= g[0] * R::of(1.0 - eps);
                    if *eps > 0.0 {
                        let support = n - usize::from(excluded.is_some_and(|e| e < n));
                        let share = g[0] * R::of(eps / support as f64);
                        for (k, d) in da.iter_mut().enumerate() {
                            if Some(k) != *excluded {
                                *d -= share;
                            }
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.shape(p)[0];
                        add_into(acc(&mut adj, p, n), &g[off..off + n]);
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = self.shape(*a)[0];
                    let da = acc(&mut adj, *a, n);
                    add_into(&mut da[*start..*start + g.len()], &g);
                }
                Op::StackRows(rows) => {
                    let n = node.shape[1];
                    for (k, &r) in rows.iter().enumerate() {
                        add_into(acc(&mut adj, r, n), &g[k * n..(k + 1) * n]);
                    }
                }
                Op::Reshape(a) => {
                    add_into(acc(&mut adj, *a, g.len()), &g);
                }
                Op::SumAll(a) => {
                    let n = numel(self.shape(*a));
                    let da = acc(&mut adj, *a, n);
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
                Op::SumRows(a) => {
                    let n = numel(self.shape(*a));
                    let c = g.len();
                    let da = acc(&mut adj, *a, n);
                    for (k, d) in da.iter_mut().enumerate() {
                        *d += g[k % c];
                    }
                }
            }
        }
        Ok(())
    }
}

fn add_into<R: Real>(dst: &mut [R], src: &[R]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}
