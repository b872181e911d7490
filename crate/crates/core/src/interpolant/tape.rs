//! Reverse-mode automatic differentiation over dense row-major f64 matrices.
//!
//! Values are computed eagerly as ops are recorded; [`Tape::backward`] walks the record in
//! reverse. Only nodes that depend on a parameter leaf carry gradients.

use matrixmultiply::dgemm;

use super::{InterpolantError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn scalar(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    ScaleRows(Var, Vec<f64>),
    Scale(Var, f64),
    Tanh(Var),
    Silu(Var),
    Exp(Var),
    LayerNorm(Var, Vec<f64>),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        seq: usize,
        probs: Vec<f64>,
    },
    RepeatRows(Var, usize),
    TileRows(Var),
    SliceCols(Var, usize),
    Mse(Var, Var),
    Mean(Var),
    Cosine(Var, Vec<f64>, Vec<f64>),
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

/// `c (+)= a * b` on row-major buffers, with optional transposes of `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    // Row-major logical `a` is m x k: stored m x k (rs=k, cs=1) or, transposed, k x m (rs=1, cs=m).
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slices are sized for the given dimensions and strides; `c` does not alias `a`/`b`.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const LN_EPS: f64 = 1e-5;

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

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows, t.cols)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf whose gradient is collected by [`Tape::backward`].
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Copy of `v` cut off from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dims");
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            &self.value(a).data,
            false,
            &self.value(b).data,
            false,
            &mut out,
            false,
        );
        let tr = self.tracked(a) || self.tracked(b);
        self.push(Tensor::new(m, n, out), Op::MatMul(a, b), tr)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "elementwise shapes");
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let tr = self.tracked(a) || self.tracked(b);
        self.push(Tensor::new(r, c, data), op, tr)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `a + 1·row`, broadcasting a `1 x cols` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "add_row shape");
        let bias = &self.value(row).data;
        let mut data = self.value(a).data.clone();
        for chunk in data.chunks_exact_mut(c) {
            for (x, b) in chunk.iter_mut().zip(bias) {
                *x += b;
            }
        }
        let tr = self.tracked(a) || self.tracked(row);
        self.push(Tensor::new(r, c, data), Op::AddRow(a, row), tr)
    }

    /// Multiplies row `i` by the constant `scale[i]`.
    pub fn scale_rows(&mut self, a: Var, scale: Vec<f64>) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(scale.len(), r, "scale_rows length");
        let mut data = self.value(a).data.clone();
        for (chunk, s) in data.chunks_exact_mut(c).zip(&scale) {
            chunk.iter_mut().for_each(|x| *x *= s);
        }
        let tr = self.tracked(a);
        self.push(Tensor::new(r, c, data), Op::ScaleRows(a, scale), tr)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.shape(a);
        let data = self.value(a).data.iter().map(|x| x * s).collect();
        let tr = self.tracked(a);
        self.push(Tensor::new(r, c, data), Op::Scale(a, s), tr)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let data = self.value(a).data.iter().map(|&x| f(x)).collect();
        let tr = self.tracked(a);
        self.push(Tensor::new(r, c, data), op, tr)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * sigmoid(x), Op::Silu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// Per-row standardization without affine parameters.
    pub fn layernorm(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut data = self.value(a).data.clone();
        let mut rstd = Vec::with_capacity(r);
        for row in data.chunks_exact_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * rs);
            rstd.push(rs);
        }
        let tr = self.tracked(a);
        self.push(Tensor::new(r, c, data), Op::LayerNorm(a, rstd), tr)
    }

    /// Single-head scaled dot-product attention applied independently to consecutive groups of
    /// `seq` rows.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, seq: usize) -> Var {
        let (r, d) = self.shape(q);
        assert_eq!(self.shape(k), (r, d));
        assert_eq!(self.shape(v), (r, d));
        assert_eq!(r % seq, 0, "rows must be a multiple of the sequence length");
        let scale = 1.0 / (d as f64).sqrt();
        let (qd, kd, vd) = (
            &self.value(q).data,
            &self.value(k).data,
            &self.value(v).data,
        );
        let mut probs = vec![0.0; r * seq];
        let mut out = vec![0.0; r * d];
        for s in 0..r / seq {
            let base = s * seq * d;
            let p = &mut probs[s * seq * seq..(s + 1) * seq * seq];
            gemm(
                seq,
                d,
                seq,
                &qd[base..base + seq * d],
                false,
                &kd[base..base + seq * d],
                true,
                p,
                false,
            );
            for row in p.chunks_exact_mut(seq) {
                let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x * scale));
                let mut sum = 0.0;
                for x in row.iter_mut() {
                    *x = (*x * scale - max).exp();
                    sum += *x;
                }
                row.iter_mut().for_each(|x| *x /= sum);
            }
            gemm(
                seq,
                seq,
                d,
                p,
                false,
                &vd[base..base + seq * d],
                false,
                &mut out[base..base + seq * d],
                false,
            );
        }
        let tr = self.tracked(q) || self.tracked(k) || self.tracked(v);
        self.push(
            Tensor::new(r, d, out),
            Op::Attention {
                q,
                k,
                v,
                seq,
                probs,
            },
            tr,
        )
    }

    /// Each row repeated `times` times consecutively.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Var {
        let (r, c) = self.shape(a);
        let src = &self.value(a).data;
        let mut data = Vec::with_capacity(r * times * c);
        for row in src.chunks_exact(c) {
            for _ in 0..times {
                data.extend_from_slice(row);
            }
        }
        let tr = self.tracked(a);
        self.push(
            Tensor::new(r * times, c, data),
            Op::RepeatRows(a, times),
            tr,
        )
    }

    /// The whole matrix stacked `times` times.
    pub fn tile_rows(&mut self, a: Var, times: usize) -> Var {
        let (r, c) = self.shape(a);
        let data = self.value(a).data.repeat(times);
        let tr = self.tracked(a);
        self.push(Tensor::new(r * times, c, data), Op::TileRows(a), tr)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start < end && end <= c, "slice_cols range");
        let src = &self.value(a).data;
        let mut data = Vec::with_capacity(r * (end - start));
        for row in src.chunks_exact(c) {
            data.extend_from_slice(&row[start..end]);
        }
        let tr = self.tracked(a);
        self.push(
            Tensor::new(r, end - start, data),
            Op::SliceCols(a, start),
            tr,
        )
    }

    /// Mean squared difference over all elements, as a 1x1 tensor.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mse shapes");
        let n = self.value(a).data.len() as f64;
        let s = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>();
        let tr = self.tracked(a) || self.tracked(b);
        self.push(Tensor::new(1, 1, vec![s / n]), Op::Mse(a, b), tr)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = &self.value(a).data;
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let tr = self.tracked(a);
        self.push(Tensor::new(1, 1, vec![m]), Op::Mean(a), tr)
    }

    /// `1 - mean_i cos(a_i, target_i)` over rows; `target` is a constant.
    pub fn cosine_loss(&mut self, a: Var, target: &Tensor) -> Result<Var> {
        let (r, c) = self.shape(a);
        if (target.rows, target.cols) != (r, c) {
            return Err(InterpolantError::Shape(format!(
                "alignment target {}x{} vs tokens {r}x{c}",
                target.rows, target.cols
            )));
        }
        let ad = &self.value(a).data;
        let mut norms = Vec::with_capacity(r);
        let mut cosines = Vec::with_capacity(r);
        for i in 0..r {
            let x = &ad[i * c..(i + 1) * c];
            let y = &target.data[i * c..(i + 1) * c];
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nx == 0.0 || ny == 0.0 {
                return Err(InterpolantError::ZeroNorm { position: i });
            }
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            norms.push((nx, ny));
            cosines.push(dot / (nx * ny));
        }
        let loss = 1.0 - cosines.iter().sum::<f64>() / r as f64;
        // Saved: target and per-row (|a|, |t|, cos) for backward.
        let mut aux = Vec::with_capacity(3 * r);
        for ((nx, ny), cs) in norms.into_iter().zip(cosines) {
            aux.extend([nx, ny, cs]);
        }
        let tr = self.tracked(a);
        Ok(self.push(
            Tensor::new(1, 1, vec![loss]),
            Op::Cosine(a, target.data.clone(), aux),
            tr,
        ))
    }

    /// `sum_i w_i * s_i` over 1x1 inputs.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let mut total = 0.0;
        let mut tr = false;
        for &(v, w) in terms {
            assert_eq!(self.shape(v), (1, 1), "weighted_sum takes scalars");
            total += w * self.value(v).scalar();
            tr |= self.tracked(v);
        }
        self.push(
            Tensor::new(1, 1, vec![total]),
            Op::WeightedSum(terms.to_vec()),
            tr,
        )
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn acc<'g>(
        grads: &'g mut [Option<Vec<f64>>],
        nodes: &[Node],
        v: Var,
    ) -> Option<&'g mut Vec<f64>> {
        if !nodes[v.0].tracked {
            return None;
        }
        let len = nodes[v.0].value.data.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    /// Back-propagates from the scalar `root`. Gradients of earlier calls are discarded.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        self.grads = vec![None; self.nodes.len()];
        if !self.tracked(root) {
            return;
        }
        self.grads[root.0] = Some(vec![1.0]);
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            let out = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = (nodes[a.0].value.rows, nodes[a.0].value.cols);
                    let n = nodes[b.0].value.cols;
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        gemm(m, n, k, &g, false, &nodes[b.0].value.data, true, ga, true);
                    }
                    if let Some(gb) = Self::acc(grads, nodes, *b) {
                        gemm(k, m, n, &nodes[a.0].value.data, true, &g, false, gb, true);
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) {
                        -1.0
                    } else {
                        1.0
                    };
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                    if let Some(gb) = Self::acc(grads, nodes, *b) {
                        gb.iter_mut().zip(&g).for_each(|(x, y)| *x += sign * y);
                    }
                }
                Op::Mul(a, b) => {
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        for ((x, y), bv) in ga.iter_mut().zip(&g).zip(&nodes[b.0].value.data) {
                            *x += y * bv;
                        }
                    }
                    if let Some(gb) = Self::acc(grads, nodes, *b) {
                        for ((x, y), av) in gb.iter_mut().zip(&g).zip(&nodes[a.0].value.data) {
                            *x += y * av;
                        }
                    }
                }
                Op::AddRow(a, row) => {
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                    let c = out.cols;
                    if let Some(gr) = Self::acc(grads, nodes, *row) {
                        for chunk in g.chunks_exact(c) {
                            gr.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::ScaleRows(a, scale) => {
                    let c = out.cols;
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        for ((gx, gy), s) in
                            ga.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(scale)
                        {
                            gx.iter_mut().zip(gy).for_each(|(x, y)| *x += s * y);
                        }
                    }
                }
                Op::Scale(a, s) => {
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        ga.iter_mut().zip(&g).for_each(|(x, y)| *x += s * y);
                    }
                }
                Op::Tanh(a) => {
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        for ((x, y), o) in ga.iter_mut().zip(&g).zip(&out.data) {
                            *x += y * (1.0 - o * o);
                        }
                    }
                }
                Op::Silu(a) => {
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        for ((x, y), i) in ga.iter_mut().zip(&g).zip(&nodes[a.0].value.data) {
                            let s = sigmoid(*i);
                            *x += y * s * (1.0 + i * (1.0 - s));
                        }
                    }
                }
                Op::Exp(a) => {
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        for ((x, y), o) in ga.iter_mut().zip(&g).zip(&out.data) {
                            *x += y * o;
                        }
                    }
                }
                Op::LayerNorm(a, rstd) => {
                    let c = out.cols;
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        for (((gx, gy), yo), rs) in ga
                            .chunks_exact_mut(c)
                            .zip(g.chunks_exact(c))
                            .zip(out.data.chunks_exact(c))
                            .zip(rstd)
                        {
                            let mean_g = gy.iter().sum::<f64>() / c as f64;
                            let mean_gy =
                                gy.iter().zip(yo).map(|(p, q)| p * q).sum::<f64>() / c as f64;
                            for ((x, dy), y) in gx.iter_mut().zip(gy).zip(yo) {
                                *x += rs * (dy - mean_g - y * mean_gy);
                            }
                        }
                    }
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    seq,
                    probs,
                } => {
                    let seq = *seq;
                    let (r, d) = (out.rows, out.cols);
                    let scale = 1.0 / (d as f64).sqrt();
                    let (qd, kd, vd) = (
                        &nodes[q.0].value.data,
                        &nodes[k.0].value.data,
                        &nodes[v.0].value.data,
                    );
                    let mut gq = vec![0.0; r * d];
                    let mut gk = vec![0.0; r * d];
                    let mut gv = vec![0.0; r * d];
                    let mut dp = vec![0.0; seq * seq];
                    for s in 0..r / seq {
                        let base = s * seq * d;
                        let span = base..base + seq * d;
                        let p = &probs[s * seq * seq..(s + 1) * seq * seq];
                        let go = &g[span.clone()];
                        gemm(
                            seq,
                            seq,
                            d,
                            p,
                            true,
                            go,
                            false,
                            &mut gv[span.clone()],
                            false,
                        );
                        gemm(
                            seq,
                            d,
                            seq,
                            go,
                            false,
                            &vd[span.clone()],
                            true,
                            &mut dp,
                            false,
                        );
                        for (drow, prow) in dp.chunks_exact_mut(seq).zip(p.chunks_exact(seq)) {
                            let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                            for (x, pv) in drow.iter_mut().zip(prow) {
                                *x = pv * (*x - dot) * scale;
                            }
                        }
                        gemm(
                            seq,
                            seq,
                            d,
                            &dp,
                            false,
                            &kd[span.clone()],
                            false,
                            &mut gq[span.clone()],
                            false,
                        );
                        gemm(
                            seq,
                            seq,
                            d,
                            &dp,
                            true,
                            &qd[span.clone()],
                            false,
                            &mut gk[span.clone()],
                            false,
                        );
                    }
                    for (var, gl) in [(*q, gq), (*k, gk), (*v, gv)] {
                        if let Some(ga) = Self::acc(grads, nodes, var) {
                            ga.iter_mut().zip(&gl).for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::RepeatRows(a, times) => {
                    let c = out.cols;
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        for (i, chunk) in g.chunks_exact(c).enumerate() {
                            let src = i / times;
                            ga[src * c..(src + 1) * c]
                                .iter_mut()
                                .zip(chunk)
                                .for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::TileRows(a) => {
                    let n = nodes[a.0].value.data.len();
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        for chunk in g.chunks_exact(n) {
                            ga.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    let c_in = nodes[a.0].value.cols;
                    let w = out.cols;
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        for (row_g, row_in) in g.chunks_exact(w).zip(ga.chunks_exact_mut(c_in)) {
                            row_in[*start..start + w]
                                .iter_mut()
                                .zip(row_g)
                                .for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::Mse(a, b) => {
                    let (ad, bd) = (&nodes[a.0].value.data, &nodes[b.0].value.data);
                    let f = 2.0 * g[0] / ad.len() as f64;
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        for ((x, p), q) in ga.iter_mut().zip(ad).zip(bd) {
                            *x += f * (p - q);
                        }
                    }
                    if let Some(gb) = Self::acc(grads, nodes, *b) {
                        for ((x, p), q) in gb.iter_mut().zip(ad).zip(bd) {
                            *x -= f * (p - q);
                        }
                    }
                }
                Op::Mean(a) => {
                    let n = nodes[a.0].value.data.len() as f64;
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        ga.iter_mut().for_each(|x| *x += g[0] / n);
                    }
                }
                Op::Cosine(a, target, aux) => {
                    let (r, c) = (nodes[a.0].value.rows, nodes[a.0].value.cols);
                    let ad = &nodes[a.0].value.data;
                    if let Some(ga) = Self::acc(grads, nodes, *a) {
                        let f = -g[0] / r as f64;
                        for i in 0..r {
                            let (nx, ny, cs) = (aux[3 * i], aux[3 * i + 1], aux[3 * i + 2]);
                            for j in 0..c {
                                let x = ad[i * c + j];
                                let y = target[i * c + j];
                                ga[i * c + j] += f * (y / (nx * ny) - cs * x / (nx * nx));
                            }
                        }
                    }
                }
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms {
                        if let Some(gv) = Self::acc(grads, nodes, v) {
                            gv[0] += w * g[0];
                        }
                    }
                }
            }
            grads[idx] = Some(g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn rand_tensor(r: usize, c: usize, seed: u64) -> Tensor {
        let mut g = rng::seeded(seed);
        let mut d = vec![0.0; r * c];
        rng::fill_normal(&mut g, &mut d);
        Tensor::new(r, c, d)
    }

    /// Central-difference check of d(loss)/d(input) for a graph built by `build`.
    fn check(inputs: &[Tensor], build: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let root = build(&mut tape, &vars);
        tape.backward(root);
        let eval = |ins: &[Tensor]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = ins.iter().map(|x| t.param(x.clone())).collect();
            let r = build(&mut t, &vs);
            t.value(r).scalar()
        };
        for (vi, input) in inputs.iter().enumerate() {
            let analytic = tape
                .grad(vars[vi])
                .map(<[f64]>::to_vec)
                .unwrap_or(vec![0.0; input.data.len()]);
            for j in 0..input.data.len() {
                let h = 1e-6;
                let mut up = inputs.to_vec();
                up[vi].data[j] += h;
                let mut dn = inputs.to_vec();
                dn[vi].data[j] -= h;
                let numeric = (eval(&up) - eval(&dn)) / (2.0 * h);
                let a = analytic[j];
                let denom = a.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (a - numeric).abs() / denom < 1e-5,
                    "input {vi}[{j}]: {a} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn matmul_and_bias() {
        let ins = [
            rand_tensor(3, 4, 1),
            rand_tensor(4, 2, 2),
            rand_tensor(1, 2, 3),
        ];
        check(&ins, |t, v| {
            let m = t.matmul(v[0], v[1]);
            let b = t.add_row(m, v[2]);
            let s = t.tanh(b);
            t.mean(s)
        });
    }

    #[test]
    fn elementwise_ops() {
        let ins = [rand_tensor(2, 3, 4), rand_tensor(2, 3, 5)];
        check(&ins, |t, v| {
            let a = t.mul(v[0], v[1]);
            let b = t.silu(a);
            let c = t.sub(b, v[1]);
            let d = t.scale(c, 0.7);
            let e = t.exp(d);
            let f = t.scale_rows(e, vec![0.5, -2.0]);
            t.mse(f, v[0])
        });
    }

    #[test]
    fn layernorm_and_reshapes() {
        let ins = [rand_tensor(2, 5, 6), rand_tensor(4, 3, 7)];
        check(&ins, |t, v| {
            let ln = t.layernorm(v[0]);
            let rep = t.repeat_rows(ln, 2);
            let sl = t.slice_cols(rep, 1, 4);
            let tiled = t.tile_rows(v[1], 1);
            let p = t.mul(sl, tiled);
            let q = t.tanh(p);
            t.mean(q)
        });
    }

    #[test]
    fn attention_gradient() {
        let ins = [
            rand_tensor(6, 4, 8),
            rand_tensor(6, 4, 9),
            rand_tensor(6, 4, 10),
            rand_tensor(6, 4, 11),
        ];
        check(&ins, |t, v| {
            let o = t.attention(v[0], v[1], v[2], 3);
            let w = t.mul(o, v[3]);
            t.mean(w)
        });
    }

    #[test]
    fn cosine_gradient_and_values() {
        let target = rand_tensor(3, 4, 12);
        let ins = [rand_tensor(3, 4, 13)];
        let tg = target.clone();
        check(&ins, move |t, v| t.cosine_loss(v[0], &tg).unwrap());
        let mut tape = Tape::new();
        let same = tape.constant(target.clone());
        let l = tape.cosine_loss(same, &target).unwrap();
        assert!(tape.value(l).scalar().abs() < 1e-12);
        let neg = Tensor::new(3, 4, target.data.iter().map(|x| -x).collect());
        let nv = tape.constant(neg);
        let l = tape.cosine_loss(nv, &target).unwrap();
        assert!((tape.value(l).scalar() - 2.0).abs() < 1e-12);
        let z = tape.constant(Tensor::zeros(3, 4));
        assert!(matches!(
            tape.cosine_loss(z, &target),
            Err(InterpolantError::ZeroNorm { position: 0 })
        ));
    }

    #[test]
    fn shared_leaf_accumulates_and_detach_blocks() {
        let mut t = Tape::new();
        let x = t.param(Tensor::new(1, 1, vec![3.0]));
        let y = t.mul(x, x);
        let d = t.detach(x);
        let z = t.mul(y, d);
        t.backward(z);
        // z = x^2 * stop(x): dz/dx = 2x * x = 18
        assert_eq!(t.grad(x).unwrap(), &[18.0]);
        let w = t.weighted_sum(&[(y, 2.0), (z, 0.0)]);
        t.backward(w);
        assert_eq!(t.grad(x).unwrap(), &[12.0]);
    }
}
