//! Raw numeric loops shared by the forward and backward passes.
//!
//! Every kernel writes each output element from a single fixed-order loop, so
//! results do not depend on batch composition or thread scheduling.

use super::Real;

/// `out[m×p] += a[m×k] · b[k×p]`
pub fn matmul_acc(a: &[Real], b: &[Real], out: &mut [Real], m: usize, k: usize, p: usize) {
    for i in 0..m {
        let out_row = &mut out[i * p..(i + 1) * p];
        let a_row = &a[i * k..(i + 1) * k];
        for (kk, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[kk * p..(kk + 1) * p];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] += g[m×p] · bᵀ` where `b` is `[k×p]`.
pub fn matmul_nt_acc(g: &[Real], b: &[Real], out: &mut [Real], m: usize, k: usize, p: usize) {
    for i in 0..m {
        let g_row = &g[i * p..(i + 1) * p];
        let out_row = &mut out[i * k..(i + 1) * k];
        for (kk, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[kk * p..(kk + 1) * p];
            let mut acc = 0.0;
            for (&gv, &bv) in g_row.iter().zip(b_row) {
                acc += gv * bv;
            }
            *o += acc;
        }
    }
}

/// `out[k×p] += aᵀ · g` where `a` is `[m×k]` and `g` is `[m×p]`.
pub fn matmul_tn_acc(a: &[Real], g: &[Real], out: &mut [Real], m: usize, k: usize, p: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let g_row = &g[i * p..(i + 1) * p];
        for (kk, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[kk * p..(kk + 1) * p];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.height - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width - self.kernel_w) / self.stride + 1
    }

    pub fn output_len(&self) -> usize {
        self.batch * self.out_channels * self.out_h() * self.out_w()
    }
}

/// Valid cross-correlation (no kernel flip).
pub fn conv2d_forward(geo: &ConvGeometry, input: &[Real], kernels: &[Real]) -> Vec<Real> {
    let (oh, ow) = (geo.out_h(), geo.out_w());
    let (c, h, w) = (geo.in_channels, geo.height, geo.width);
    let (kh, kw, s) = (geo.kernel_h, geo.kernel_w, geo.stride);
    let mut out = vec![0.0; geo.output_len()];
    for n in 0..geo.batch {
        let img = &input[n * c * h * w..(n + 1) * c * h * w];
        for o in 0..geo.out_channels {
            let ker = &kernels[o * c * kh * kw..(o + 1) * c * kh * kw];
            let out_plane = &mut out[(n * geo.out_channels + o) * oh * ow..][..oh * ow];
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ky in 0..kh {
                            let in_row = &img[ci * h * w + (y * s + ky) * w + x * s..][..kw];
                            let k_row = &ker[ci * kh * kw + ky * kw..][..kw];
                            for (a, b) in in_row.iter().zip(k_row) {
                                acc += a * b;
                            }
                        }
                    }
                    out_plane[y * ow + x] = acc;
                }
            }
        }
    }
    out
}

/// Accumulates the gradients of a valid cross-correlation into `grad_input`
/// and `grad_kernels` (either may be skipped).
pub fn conv2d_backward(
    geo: &ConvGeometry,
    input: &[Real],
    kernels: &[Real],
    grad_out: &[Real],
    mut grad_input: Option<&mut [Real]>,
    mut grad_kernels: Option<&mut [Real]>,
) {
    let (oh, ow) = (geo.out_h(), geo.out_w());
    let (c, h, w) = (geo.in_channels, geo.height, geo.width);
    let (kh, kw, s) = (geo.kernel_h, geo.kernel_w, geo.stride);
    for n in 0..geo.batch {
        for o in 0..geo.out_channels {
            let g_plane = &grad_out[(n * geo.out_channels + o) * oh * ow..][..oh * ow];
            for y in 0..oh {
                for x in 0..ow {
                    let g = g_plane[y * ow + x];
                    if g == 0.0 {
                        continue;
                    }
                    for ci in 0..c {
                        for ky in 0..kh {
                            let in_off = n * c * h * w + ci * h * w + (y * s + ky) * w + x * s;
                            let k_off = o * c * kh * kw + ci * kh * kw + ky * kw;
                            if let Some(gk) = grad_kernels.as_deref_mut() {
                                for kx in 0..kw {
                                    gk[k_off + kx] += g * input[in_off + kx];
                                }
                            }
                            if let Some(gi) = grad_input.as_deref_mut() {
                                for kx in 0..kw {
                                    gi[in_off + kx] += g * kernels[k_off + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise log-softmax of a `[rows×cols]` block using max subtraction.
pub fn log_softmax_rows(x: &[Real], cols: usize) -> Vec<Real> {
    let mut out = vec![0.0; x.len()];
    for (row, out_row) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let sum: Real = row.iter().map(|v| (v - max).exp()).sum();
        // sum >= 1 because the max entry contributes exp(0)
        let lse = max + sum.ln();
        for (o, v) in out_row.iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    out
}
