//! Define-by-run reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value. [`Tape::backward`]
//! walks the nodes once in reverse order and accumulates gradients into the
//! leaves that were created with `requires_grad`.

use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{dim_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// One parent/child step of a rooted tree, used by [`Tape::tree_sum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeLink {
    pub edge: usize,
    pub parent: usize,
    pub child: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
        /// (a matrix offset, b matrix offset) per output batch entry.
        pairs: Vec<(usize, usize)>,
    },
    Binary {
        kind: Binary,
        a: Var,
        b: Var,
        a_strides: Vec<usize>,
        b_strides: Vec<usize>,
    },
    Scale {
        a: Var,
        factor: T,
    },
    LeakyRelu {
        a: Var,
        slope: T,
    },
    Softmax {
        a: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        k: Var,
        b: Var,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    MaxPool {
        a: Var,
        argmax: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Reshape {
        a: Var,
    },
    Permute {
        a: Var,
        in_strides: Vec<usize>,
    },
    Concat {
        parts: Vec<Var>,
    },
    Sum {
        a: Var,
    },
    DiffLast {
        a: Var,
        inv_dt: T,
    },
    TreeSum {
        a: Var,
        links: Rc<[TreeLink]>,
    },
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Append-only record of a forward computation.
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for d in (0..shape.len()).rev() {
        strides[d] = acc;
        acc *= shape[d];
    }
    strides
}

/// Output shape of singleton-axis broadcasting with left padding.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize], d: usize| -> usize {
        let off = rank - s.len();
        if d < off {
            1
        } else {
            s[d - off]
        }
    };
    (0..rank)
        .map(|d| {
            let (x, y) = (pad(a, d), pad(b, d));
            match (x, y) {
                _ if x == y => Ok(x),
                (1, _) => Ok(y),
                (_, 1) => Ok(x),
                _ => Err(dim_err(format!("cannot broadcast {a:?} with {b:?}"))),
            }
        })
        .collect()
}

/// Strides of `shape` viewed through `out` (zero on stretched axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = row_major_strides(shape);
    let off = out.len() - shape.len();
    (0..out.len())
        .map(|d| {
            if d < off || shape[d - off] == 1 {
                0
            } else {
                own[d - off]
            }
        })
        .collect()
}

/// Calls `f(out_offset, a_offset, b_offset)` for every element of `shape`.
fn for_each_index(shape: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let rank = shape.len();
    let total = numel(shape);
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..total {
        f(o, ia, ib);
        let mut d = rank;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < shape[d] {
                break;
            }
            ia -= sa[d] * shape[d];
            ib -= sb[d] * shape[d];
            idx[d] = 0;
        }
    }
}

fn accumulate<'g, T: Scalar>(
    grads: &'g mut [Option<Vec<T>>],
    nodes: &[Node<T>],
    v: Var,
) -> Option<&'g mut Vec<T>> {
    let node = &nodes[v.index];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.index].get_or_insert_with(|| vec![T::zero(); node.value.len()]))
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> Result<&Node<T>> {
        if v.tape != self.id {
            return Err(TensorError::Usage("variable belongs to a different tape".into()));
        }
        Ok(&self.nodes[v.index])
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.index].requires_grad);
        if cfg!(debug_assertions) && !value.is_finite() {
            let inputs_finite = inputs.iter().all(|v| self.nodes[v.index].value.is_finite());
            assert!(!inputs_finite, "non-finite output from finite inputs");
        }
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var { tape: self.id, index }
    }

    /// Records an input. Gradients are collected only when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var { tape: self.id, index }
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.node(v).expect("foreign variable").value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).expect("foreign variable").requires_grad
    }

    /// Accumulated gradient of a leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.node(v).expect("foreign variable").grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    // ---------------------------------------------------------------- ops

    /// Batched matrix product `[.., m, k] x [.., k, n] -> [.., m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.node(a)?.value.shape().to_vec();
        let sb = self.node(b)?.value.shape().to_vec();
        if sa.len() < 2 || sb.len() < 2 || sa[sa.len() - 1] != sb[sb.len() - 2] {
            return Err(dim_err(format!("matmul: incompatible shapes {sa:?} and {sb:?}")));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let n = sb[sb.len() - 1];
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let batch = broadcast_shape(ba, bb)
            .map_err(|_| dim_err(format!("matmul: incompatible shapes {sa:?} and {sb:?}")))?;
        let stride_a: Vec<usize> = broadcast_strides(ba, &batch).iter().map(|s| s * m * k).collect();
        let stride_b: Vec<usize> = broadcast_strides(bb, &batch).iter().map(|s| s * k * n).collect();
        let mut pairs = Vec::with_capacity(numel(&batch));
        for_each_index(&batch, &stride_a, &stride_b, |_, ia, ib| pairs.push((ia, ib)));

        let mut out_shape = batch.clone();
        out_shape.extend([m, n]);
        let mut out = vec![T::zero(); numel(&out_shape)];
        {
            let (av, bv) = (self.value(a).data(), self.value(b).data());
            for (bi, &(oa, ob)) in pairs.iter().enumerate() {
                T::gemm(
                    m,
                    k,
                    n,
                    &av[oa..oa + m * k],
                    (k as isize, 1),
                    &bv[ob..ob + k * n],
                    (n as isize, 1),
                    T::zero(),
                    &mut out[bi * m * n..(bi + 1) * m * n],
                    (n as isize, 1),
                );
            }
        }
        let value = Tensor::new(&out_shape, out)?;
        Ok(self.push(value, Op::MatMul { a, b, m, k, n, pairs }, &[a, b]))
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let sa = self.node(a)?.value.shape().to_vec();
        let sb = self.node(b)?.value.shape().to_vec();
        let out_shape = broadcast_shape(&sa, &sb)?;
        let a_strides = broadcast_strides(&sa, &out_shape);
        let b_strides = broadcast_strides(&sb, &out_shape);
        let mut out = vec![T::zero(); numel(&out_shape)];
        {
            let (av, bv) = (self.value(a).data(), self.value(b).data());
            let f = |x: T, y: T| match kind {
                Binary::Add => x + y,
                Binary::Sub => x - y,
                Binary::Mul => x * y,
            };
            if sa == sb {
                for ((o, &x), &y) in out.iter_mut().zip(av).zip(bv) {
                    *o = f(x, y);
                }
            } else {
                for_each_index(&out_shape, &a_strides, &b_strides, |o, ia, ib| {
                    out[o] = f(av[ia], bv[ib]);
                });
            }
        }
        let value = Tensor::new(&out_shape, out)?;
        Ok(self.push(
            value,
            Op::Binary {
                kind,
                a,
                b,
                a_strides,
                b_strides,
            },
            &[a, b],
        ))
    }

    /// Elementwise sum with singleton-axis broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    /// Elementwise (Hadamard) product with singleton-axis broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        let value = self.node(a)?.value.map(|x| x * factor);
        Ok(self.push(value, Op::Scale { a, factor }, &[a]))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var> {
        if !(slope > T::zero() && slope < T::one()) {
            return Err(TensorError::Usage(format!("leaky_relu slope must be in (0,1), got {slope}")));
        }
        let value = self
            .node(a)?
            .value
            .map(|x| if x >= T::zero() { x } else { slope * x });
        Ok(self.push(value, Op::LeakyRelu { a, slope }, &[a]))
    }

    /// Softmax over the last axis, with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let src = &self.node(a)?.value;
        let n = *src
            .shape()
            .last()
            .ok_or_else(|| dim_err("softmax_rows needs rank >= 1"))?;
        let mut out = src.data().to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        let value = Tensor::new(src.shape(), out)?;
        Ok(self.push(value, Op::Softmax { a }, &[a]))
    }

    /// `y = x W^T + b` over the trailing axis of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.node(x)?.value.shape().to_vec();
        let sw = self.node(w)?.value.shape().to_vec();
        if sw.len() != 2 || sx.is_empty() || sx[sx.len() - 1] != sw[1] {
            return Err(dim_err(format!("linear: input {sx:?} does not match weight {sw:?}")));
        }
        let (out_f, in_f) = (sw[0], sw[1]);
        if let Some(b) = b {
            let sbias = self.node(b)?.value.shape();
            if sbias != [out_f] {
                return Err(dim_err(format!("linear: bias {sbias:?} does not match weight {sw:?}")));
            }
        }
        let rows = numel(&sx) / in_f;
        let mut out = vec![T::zero(); rows * out_f];
        T::gemm(
            rows,
            in_f,
            out_f,
            self.value(x).data(),
            (in_f as isize, 1),
            self.value(w).data(),
            (1, in_f as isize),
            T::zero(),
            &mut out,
            (out_f as isize, 1),
        );
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_mut(out_f) {
                for (o, &bb) in row.iter_mut().zip(bias) {
                    *o += bb;
                }
            }
        }
        let mut out_shape = sx.clone();
        *out_shape.last_mut().unwrap() = out_f;
        let value = Tensor::new(&out_shape, out)?;
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(value, Op::Linear { x, w, b }, &inputs))
    }

    /// 2-D cross-correlation of a `[C_in, H, W]` input with `[C_out, C_in, kh, kw]`
    /// kernels, zero padding `pad` on every side.
    pub fn conv2d(&mut self, x: Var, kernels: Var, bias: Var, stride: usize, pad: usize) -> Result<Var> {
        let sx = self.node(x)?.value.shape().to_vec();
        let sk = self.node(kernels)?.value.shape().to_vec();
        let sbias = self.node(bias)?.value.shape().to_vec();
        if sx.len() != 3 || sk.len() != 4 || sk[1] != sx[0] || sbias != [sk[0]] {
            return Err(dim_err(format!(
                "conv2d: input {sx:?}, kernels {sk:?}, bias {sbias:?} are incompatible"
            )));
        }
        if stride == 0 {
            return Err(TensorError::Usage("conv2d: stride must be positive".into()));
        }
        let (c_in, h, w) = (sx[0], sx[1], sx[2]);
        let (c_out, kh, kw) = (sk[0], sk[2], sk[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(dim_err(format!(
                "conv2d: output extent < 1 for input {sx:?}, kernel {kh}x{kw}, padding {pad}"
            )));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        let geom = ConvGeom {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        };
        let cols = im2col(self.value(x).data(), &geom);
        let ckk = c_in * kh * kw;
        let p = ho * wo;
        let mut out = vec![T::zero(); c_out * p];
        T::gemm(
            c_out,
            ckk,
            p,
            self.value(kernels).data(),
            (ckk as isize, 1),
            &cols,
            (p as isize, 1),
            T::zero(),
            &mut out,
            (p as isize, 1),
        );
        for (row, &bb) in out.chunks_mut(p).zip(self.value(bias).data()) {
            for o in row {
                *o += bb;
            }
        }
        let value = Tensor::new(&[c_out, ho, wo], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                k: kernels,
                b: bias,
                geom,
                cols,
            },
            &[x, kernels, bias],
        ))
    }

    /// 2x2 max pooling with stride 2 over `[C, H, W]`. Ties go to the first
    /// element in row-major window order.
    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        let src = &self.node(x)?.value;
        let s = src.shape();
        if s.len() != 3 || s[1] % 2 != 0 || s[2] % 2 != 0 {
            return Err(dim_err(format!("maxpool2d: expected [C, even H, even W], got {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (ho, wo) = (h / 2, w / 2);
        let data = src.data();
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            let base = ch * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let top = base + 2 * oy * w + 2 * ox;
                    let mut best = top;
                    for cand in [top + 1, top + w, top + w + 1] {
                        if data[cand] > data[best] {
                            best = cand;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(&[c, ho, wo], out)?;
        Ok(self.push(value, Op::MaxPool { a: x, argmax }, &[x]))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let src = &self.node(logits)?.value;
        let s = src.shape();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(dim_err(format!(
                "cross_entropy: logits {s:?} with {} labels",
                labels.len()
            )));
        }
        let c = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(TensorError::Input(format!("label {bad} out of range for {c} classes")));
        }
        let mut probs = src.data().to_vec();
        let mut loss = T::zero();
        for (row, &label) in probs.chunks_mut(c).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
            loss += lse - row[label];
            for z in row.iter_mut() {
                *z = (*z - lse).exp();
            }
        }
        let batch = T::from_f64(labels.len() as f64);
        let value = Tensor::scalar(loss / batch);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.node(a)?.value.reshape(shape)?;
        Ok(self.push(value, Op::Reshape { a }, &[a]))
    }

    /// Axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let src = &self.node(a)?.value;
        let s = src.shape();
        let mut seen = vec![false; s.len()];
        if perm.len() != s.len() || perm.iter().any(|&p| p >= s.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(dim_err(format!("permute: {perm:?} is not a permutation of rank {}", s.len())));
        }
        let own = row_major_strides(s);
        let out_shape: Vec<usize> = perm.iter().map(|&p| s[p]).collect();
        let in_strides: Vec<usize> = perm.iter().map(|&p| own[p]).collect();
        let zeros = vec![0; s.len()];
        let data = src.data();
        let mut out = vec![T::zero(); data.len()];
        for_each_index(&out_shape, &in_strides, &zeros, |o, i, _| out[o] = data[i]);
        let value = Tensor::new(&out_shape, out)?;
        Ok(self.push(value, Op::Permute { a, in_strides }, &[a]))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let rank = self.node(a)?.value.rank();
        if rank < 2 {
            return Err(dim_err("transpose needs rank >= 2"));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(rank - 2, rank - 1);
        self.permute(a, &perm)
    }

    /// Concatenation along axis 0.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| dim_err("concat of zero tensors"))?;
        let tail = self.node(*first)?.value.shape().get(1..).map(<[usize]>::to_vec);
        let tail = tail.ok_or_else(|| dim_err("concat needs rank >= 1"))?;
        let mut lead = 0;
        let mut out = Vec::new();
        for &p in parts {
            let v = &self.node(p)?.value;
            if v.rank() == 0 || v.shape()[1..] != tail[..] {
                return Err(dim_err(format!(
                    "concat: shape {:?} does not match trailing extents {tail:?}",
                    v.shape()
                )));
            }
            lead += v.shape()[0];
            out.extend_from_slice(v.data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::Concat { parts: parts.to_vec() }, parts))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.node(a)?.value.sum());
        Ok(self.push(value, Op::Sum { a }, &[a]))
    }

    /// Forward difference quotient along the last axis; the final position is
    /// zero so the extent is preserved.
    pub fn diff_last(&mut self, a: Var, dt: T) -> Result<Var> {
        if !(dt > T::zero()) {
            return Err(TensorError::Usage(format!("diff_last: dt must be positive, got {dt}")));
        }
        let src = &self.node(a)?.value;
        let n = match src.shape().last() {
            Some(&n) if n >= 2 => n,
            _ => return Err(dim_err(format!("diff_last needs last extent >= 2, got {:?}", src.shape()))),
        };
        let inv_dt = T::one() / dt;
        let mut out = vec![T::zero(); src.len()];
        for (o, row) in out.chunks_mut(n).zip(src.data().chunks(n)) {
            for t in 0..n - 1 {
                o[t] = (row[t + 1] - row[t]) * inv_dt;
            }
        }
        let value = Tensor::new(src.shape(), out)?;
        Ok(self.push(value, Op::DiffLast { a, inv_dt }, &[a]))
    }

    /// Prefix sums along a rooted tree.
    ///
    /// `a` is `[C, E, L]` with one row per tree edge; the output is
    /// `[C, nodes, L]` where the root row is zero and every child row equals
    /// its parent row plus the edge row. `links` must list edges in
    /// topological order (parents before children).
    pub fn tree_sum(&mut self, a: Var, links: Rc<[TreeLink]>, nodes: usize) -> Result<Var> {
        let src = &self.node(a)?.value;
        let s = src.shape();
        if s.len() != 3 || s[1] != links.len() {
            return Err(dim_err(format!(
                "tree_sum: input {s:?} does not match {} edges",
                links.len()
            )));
        }
        if links.iter().any(|l| l.edge >= s[1] || l.parent >= nodes || l.child >= nodes) {
            return Err(dim_err("tree_sum: link index out of range"));
        }
        let (c, e, len) = (s[0], s[1], s[2]);
        let data = src.data();
        let mut out = vec![T::zero(); c * nodes * len];
        for ch in 0..c {
            for l in links.iter() {
                let p = (ch * nodes + l.parent) * len;
                let q = (ch * nodes + l.child) * len;
                let eo = (ch * e + l.edge) * len;
                for t in 0..len {
                    out[q + t] = out[p + t] + data[eo + t];
                }
            }
        }
        let value = Tensor::new(&[c, nodes, len], out)?;
        Ok(self.push(value, Op::TreeSum { a, links }, &[a]))
    }

    // ----------------------------------------------------------- backward

    /// Accumulates d(loss)/d(leaf) into every reachable leaf that requires
    /// gradients. Gradients add onto previous calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let n = self.node(loss)?.value.len();
        if n != 1 {
            return Err(TensorError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.nodes[loss.index].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.index + 1];
        grads[loss.index] = Some(vec![T::one()]);

        for i in (0..=loss.index).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                let g = Tensor::new(node.value.shape(), g)?;
                match &mut node.grad {
                    Some(existing) => existing.add_assign(&g),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let node = &nodes[i];
        match &node.op {
            Op::Leaf => unreachable!(),
            Op::MatMul { a, b, m, k, n, pairs } => {
                let (m, k, n) = (*m, *k, *n);
                let (av, bv) = (nodes[a.index].value.data(), nodes[b.index].value.data());
                if let Some(da) = accumulate(grads, nodes, *a) {
                    for (bi, &(oa, ob)) in pairs.iter().enumerate() {
                        T::gemm(
                            m,
                            n,
                            k,
                            &g[bi * m * n..(bi + 1) * m * n],
                            (n as isize, 1),
                            &bv[ob..ob + k * n],
                            (1, n as isize),
                            T::one(),
                            &mut da[oa..oa + m * k],
                            (k as isize, 1),
                        );
                    }
                }
                if let Some(db) = accumulate(grads, nodes, *b) {
                    for (bi, &(oa, ob)) in pairs.iter().enumerate() {
                        T::gemm(
                            k,
                            m,
                            n,
                            &av[oa..oa + m * k],
                            (1, k as isize),
                            &g[bi * m * n..(bi + 1) * m * n],
                            (n as isize, 1),
                            T::one(),
                            &mut db[ob..ob + k * n],
                            (n as isize, 1),
                        );
                    }
                }
            }
            Op::Binary {
                kind,
                a,
                b,
                a_strides,
                b_strides,
            } => {
                let shape = node.value.shape();
                let (av, bv) = (nodes[a.index].value.data(), nodes[b.index].value.data());
                let zeros = vec![0; shape.len()];
                if let Some(da) = accumulate(grads, nodes, *a) {
                    match kind {
                        Binary::Add | Binary::Sub => {
                            for_each_index(shape, a_strides, &zeros, |o, ia, _| da[ia] += g[o])
                        }
                        Binary::Mul => {
                            for_each_index(shape, a_strides, b_strides, |o, ia, ib| da[ia] += g[o] * bv[ib])
                        }
                    }
                }
                if let Some(db) = accumulate(grads, nodes, *b) {
                    match kind {
                        Binary::Add => for_each_index(shape, b_strides, &zeros, |o, ib, _| db[ib] += g[o]),
                        Binary::Sub => for_each_index(shape, b_strides, &zeros, |o, ib, _| db[ib] -= g[o]),
                        Binary::Mul => {
                            for_each_index(shape, b_strides, a_strides, |o, ib, ia| db[ib] += g[o] * av[ia])
                        }
                    }
                }
            }
            Op::Scale { a, factor } => {
                if let Some(da) = accumulate(grads, nodes, *a) {
                    for (d, &gg) in da.iter_mut().zip(g) {
                        *d += gg * *factor;
                    }
                }
            }
            Op::LeakyRelu { a, slope } => {
                let av = nodes[a.index].value.data();
                if let Some(da) = accumulate(grads, nodes, *a) {
                    for ((d, &gg), &x) in da.iter_mut().zip(g).zip(av) {
                        *d += if x >= T::zero() { gg } else { gg * *slope };
                    }
                }
            }
            Op::Softmax { a } => {
                let y = node.value.data();
                let n = *node.value.shape().last().unwrap();
                if let Some(da) = accumulate(grads, nodes, *a) {
                    for ((drow, grow), yrow) in da.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                        let dot: T = grow.iter().zip(yrow).map(|(&gg, &yy)| gg * yy).sum();
                        for ((d, &gg), &yy) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += yy * (gg - dot);
                        }
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let sw = nodes[w.index].value.shape();
                let (out_f, in_f) = (sw[0], sw[1]);
                let rows = g.len() / out_f;
                let (xv, wv) = (nodes[x.index].value.data(), nodes[w.index].value.data());
                if let Some(dx) = accumulate(grads, nodes, *x) {
                    T::gemm(
                        rows,
                        out_f,
                        in_f,
                        g,
                        (out_f as isize, 1),
                        wv,
                        (in_f as isize, 1),
                        T::one(),
                        dx,
                        (in_f as isize, 1),
                    );
                }
                if let Some(dw) = accumulate(grads, nodes, *w) {
                    T::gemm(
                        out_f,
                        rows,
                        in_f,
                        g,
                        (1, out_f as isize),
                        xv,
                        (in_f as isize, 1),
                        T::one(),
                        dw,
                        (in_f as isize, 1),
                    );
                }
                if let Some(b) = b {
                    if let Some(db) = accumulate(grads, nodes, *b) {
                        for row in g.chunks(out_f) {
                            for (d, &gg) in db.iter_mut().zip(row) {
                                *d += gg;
                            }
                        }
                    }
                }
            }
            Op::Conv2d { x, k, b, geom, cols } => {
                let ckk = geom.c_in * geom.kh * geom.kw;
                let p = geom.ho * geom.wo;
                let kv = nodes[k.index].value.data();
                if let Some(dk) = accumulate(grads, nodes, *k) {
                    T::gemm(
                        geom.c_out,
                        p,
                        ckk,
                        g,
                        (p as isize, 1),
                        cols,
                        (1, p as isize),
                        T::one(),
                        dk,
                        (ckk as isize, 1),
                    );
                }
                if let Some(db) = accumulate(grads, nodes, *b) {
                    for (d, row) in db.iter_mut().zip(g.chunks(p)) {
                        *d += row.iter().copied().sum::<T>();
                    }
                }
                if nodes[x.index].requires_grad {
                    let mut dcols = vec![T::zero(); ckk * p];
                    T::gemm(
                        ckk,
                        geom.c_out,
                        p,
                        kv,
                        (1, ckk as isize),
                        g,
                        (p as isize, 1),
                        T::zero(),
                        &mut dcols,
                        (p as isize, 1),
                    );
                    let dx = accumulate(grads, nodes, *x).unwrap();
                    col2im_add(&dcols, geom, dx);
                }
            }
            Op::MaxPool { a, argmax } => {
                if let Some(da) = accumulate(grads, nodes, *a) {
                    for (&src, &gg) in argmax.iter().zip(g) {
                        da[src] += gg;
                    }
                }
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let c = probs.len() / labels.len();
                let scale = g[0] / T::from_f64(labels.len() as f64);
                if let Some(dl) = accumulate(grads, nodes, *logits) {
                    for (r, &label) in labels.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == label { T::one() } else { T::zero() };
                            dl[r * c + j] += (probs[r * c + j] - onehot) * scale;
                        }
                    }
                }
            }
            Op::Reshape { a } => {
                if let Some(da) = accumulate(grads, nodes, *a) {
                    for (d, &gg) in da.iter_mut().zip(g) {
                        *d += gg;
                    }
                }
            }
            Op::Permute { a, in_strides } => {
                let shape = node.value.shape();
                let zeros = vec![0; shape.len()];
                if let Some(da) = accumulate(grads, nodes, *a) {
                    for_each_index(shape, in_strides, &zeros, |o, ia, _| da[ia] += g[o]);
                }
            }
            Op::Concat { parts } => {
                let mut off = 0;
                for p in parts {
                    let len = nodes[p.index].value.len();
                    if let Some(dp) = accumulate(grads, nodes, *p) {
                        for (d, &gg) in dp.iter_mut().zip(&g[off..off + len]) {
                            *d += gg;
                        }
                    }
                    off += len;
                }
            }
            Op::Sum { a } => {
                if let Some(da) = accumulate(grads, nodes, *a) {
                    for d in da.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::DiffLast { a, inv_dt } => {
                let n = *node.value.shape().last().unwrap();
                if let Some(da) = accumulate(grads, nodes, *a) {
                    for (drow, grow) in da.chunks_mut(n).zip(g.chunks(n)) {
                        for t in 0..n - 1 {
                            let v = grow[t] * *inv_dt;
                            drow[t + 1] += v;
                            drow[t] -= v;
                        }
                    }
                }
            }
            Op::TreeSum { a, links } => {
                let s = node.value.shape();
                let (c, joints, len) = (s[0], s[1], s[2]);
                let e = links.len();
                if let Some(da) = accumulate(grads, nodes, *a) {
                    let mut acc = g.to_vec();
                    for ch in 0..c {
                        for l in links.iter().rev() {
                            let p = (ch * joints + l.parent) * len;
                            let q = (ch * joints + l.child) * len;
                            let eo = (ch * e + l.edge) * len;
                            for t in 0..len {
                                let v = acc[q + t];
                                da[eo + t] += v;
                                acc[p + t] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for z in row.iter_mut() {
        *z = (*z - max).exp();
        total += *z;
    }
    for z in row.iter_mut() {
        *z = *z / total;
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.ho * g.wo;
    let mut cols = vec![T::zero(); g.c_in * g.kh * g.kw * p];
    for c in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * p;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            cols[row + oy * g.wo + ox] = x[src + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let p = g.ho * g.wo;
    for c in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * p;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dx[dst + ix as usize] += cols[row + oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}
