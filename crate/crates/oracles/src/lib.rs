//! Slow, obviously-correct reference computations used only by tests.
//!
//! Everything here works on row-major `f64` slices and deliberately avoids
//! the engine crates so that test expectations stay independent of the code
//! under test.

use nalgebra::DMatrix;

/// `[m, k] x [k, n]` by the triple loop.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Cross-correlation of `[c_in, h, w]` with `[c_out, c_in, kh, kw]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f64],
    k: &[f64],
    bias: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; c_out * ho * wo];
    for o in 0..c_out {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = bias[o];
                for c in 0..c_in {
                    for i in 0..kh {
                        for j in 0..kw {
                            let iy = (oy * stride + i) as isize - pad as isize;
                            let ix = (ox * stride + j) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                acc += x[(c * h + iy as usize) * w + ix as usize]
                                    * k[((o * c_in + c) * kh + i) * kw + j];
                            }
                        }
                    }
                }
                out[(o * ho + oy) * wo + ox] = acc;
            }
        }
    }
    (out, ho, wo)
}

/// 2x2 / stride 2 max pooling over `[c, h, w]`.
pub fn maxpool2d(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for ch in 0..c {
        for oy in 0..h / 2 {
            for ox in 0..w / 2 {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        best = best.max(x[(ch * h + 2 * oy + dy) * w + 2 * ox + dx]);
                    }
                }
                out.push(best);
            }
        }
    }
    out
}

/// Softmax of each length-`n` row, computed in extended form.
pub fn softmax_rows(x: &[f64], n: usize) -> Vec<f64> {
    x.chunks(n)
        .flat_map(|row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(move |v| v / s)
        })
        .collect()
}

/// Mean negative log-likelihood of `labels` under row softmax.
pub fn cross_entropy(logits: &[f64], labels: &[usize], c: usize) -> f64 {
    let p = softmax_rows(logits, c);
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| -p[r * c + l].ln())
        .sum();
    total / labels.len() as f64
}

/// Root-pinned least-squares recovery of joints from bone vectors.
///
/// `incidence` is the `J x b` matrix (row-major), `bones` is `3 x b`,
/// `root_pos` the pinned root. Returns `3 x J` joints minimising
/// `|X C - bones|` subject to `X[:, root] = root_pos`, via a dense
/// pseudo-inverse.
pub fn least_squares_joints(
    incidence: &[f64],
    joints: usize,
    bones_count: usize,
    bones: &[f64],
    root: usize,
    root_pos: [f64; 3],
) -> Vec<f64> {
    let c = DMatrix::from_row_slice(joints, bones_count, incidence);
    let nv = DMatrix::from_row_slice(3, bones_count, bones);
    let p0 = DMatrix::from_column_slice(3, 1, &root_pos);
    let rest: Vec<usize> = (0..joints).filter(|&j| j != root).collect();
    let c_root = c.row(root).into_owned();
    let c_rest = DMatrix::from_fn(rest.len(), bones_count, |i, k| c[(rest[i], k)]);
    let rhs = nv - &p0 * c_root;
    let pinv = c_rest.pseudo_inverse(1e-12).expect("pseudo-inverse");
    let y = rhs * pinv;
    let mut out = vec![0.0; 3 * joints];
    for d in 0..3 {
        out[d * joints + root] = root_pos[d];
        for (i, &j) in rest.iter().enumerate() {
            out[d * joints + j] = y[(d, i)];
        }
    }
    out
}

/// Small deterministic generator (SplitMix64) so oracle tests do not share
/// random streams with the code under test.
#[derive(Debug, Clone)]
pub struct SplitMix(u64);

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }
}
