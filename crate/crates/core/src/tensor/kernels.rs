// Slice-level numeric kernels shared by the graph's forward and backward
// rules. Every kernel accumulates into `out`.

use super::Scalar;

/// `out[m,n] += a[m,k] * b[k,n]`
pub(crate) fn gemm<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m,n] += a[m,k] * b[n,k]^T`
pub(crate) fn gemm_nt<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += dot(arow, brow);
        }
    }
}

/// `out[k,n] += a[m,k]^T * c[m,n]`
pub(crate) fn gemm_tn<T: Scalar>(a: &[T], c: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &cv) in orow.iter_mut().zip(crow) {
                *o += av * cv;
            }
        }
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Dimensions of a valid-padding 1D convolution over `[batch, len, c_in]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub len: usize,
    pub c_in: usize,
    pub width: usize,
    pub c_out: usize,
}

impl ConvDims {
    pub fn out_len(&self) -> usize {
        self.len - self.width + 1
    }
}

// The window x[b, t..t+width, :] is contiguous, so each output row is a
// vector-matrix product against the kernel viewed as [width*c_in, c_out].
pub(crate) fn conv1d_forward<T: Scalar>(
    x: &[T],
    kernel: &[T],
    bias: Option<&[T]>,
    out: &mut [T],
    d: ConvDims,
) {
    let span = d.width * d.c_in;
    let out_len = d.out_len();
    for b in 0..d.batch {
        let xb = &x[b * d.len * d.c_in..(b + 1) * d.len * d.c_in];
        for t in 0..out_len {
            let orow = &mut out[(b * out_len + t) * d.c_out..(b * out_len + t + 1) * d.c_out];
            if let Some(bias) = bias {
                for (o, &bv) in orow.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
            let window = &xb[t * d.c_in..t * d.c_in + span];
            for (p, &xv) in window.iter().enumerate() {
                let krow = &kernel[p * d.c_out..(p + 1) * d.c_out];
                for (o, &kv) in orow.iter_mut().zip(krow) {
                    *o += xv * kv;
                }
            }
        }
    }
}

pub(crate) fn conv1d_backward_input<T: Scalar>(
    upstream: &[T],
    kernel: &[T],
    dx: &mut [T],
    d: ConvDims,
) {
    let span = d.width * d.c_in;
    let out_len = d.out_len();
    for b in 0..d.batch {
        let dxb = &mut dx[b * d.len * d.c_in..(b + 1) * d.len * d.c_in];
        for t in 0..out_len {
            let grow = &upstream[(b * out_len + t) * d.c_out..(b * out_len + t + 1) * d.c_out];
            let window = &mut dxb[t * d.c_in..t * d.c_in + span];
            for (p, w) in window.iter_mut().enumerate() {
                *w += dot(&kernel[p * d.c_out..(p + 1) * d.c_out], grow);
            }
        }
    }
}

pub(crate) fn conv1d_backward_kernel<T: Scalar>(
    upstream: &[T],
    x: &[T],
    dk: &mut [T],
    d: ConvDims,
) {
    let span = d.width * d.c_in;
    let out_len = d.out_len();
    for b in 0..d.batch {
        let xb = &x[b * d.len * d.c_in..(b + 1) * d.len * d.c_in];
        for t in 0..out_len {
            let grow = &upstream[(b * out_len + t) * d.c_out..(b * out_len + t + 1) * d.c_out];
            let window = &xb[t * d.c_in..t * d.c_in + span];
            for (p, &xv) in window.iter().enumerate() {
                let krow = &mut dk[p * d.c_out..(p + 1) * d.c_out];
                for (k, &g) in krow.iter_mut().zip(grow) {
                    *k += xv * g;
                }
            }
        }
    }
}

/// Per-channel convolution: `out[b,t,c] += sum_tau x[b,t+tau,c] * kernel[tau,c]`.
pub(crate) fn depthwise_forward<T: Scalar>(x: &[T], kernel: &[T], out: &mut [T], d: ConvDims) {
    let c = d.c_in;
    let out_len = d.out_len();
    for b in 0..d.batch {
        for t in 0..out_len {
            let orow = &mut out[(b * out_len + t) * c..(b * out_len + t + 1) * c];
            for tau in 0..d.width {
                let xrow = &x[(b * d.len + t + tau) * c..(b * d.len + t + tau + 1) * c];
                let krow = &kernel[tau * c..(tau + 1) * c];
                for ((o, &xv), &kv) in orow.iter_mut().zip(xrow).zip(krow) {
                    *o += xv * kv;
                }
            }
        }
    }
}

pub(crate) fn depthwise_backward<T: Scalar>(
    upstream: &[T],
    x: &[T],
    kernel: &[T],
    dx: Option<&mut [T]>,
    dk: Option<&mut [T]>,
    d: ConvDims,
) {
    let c = d.c_in;
    let out_len = d.out_len();
    if let Some(dx) = dx {
        for b in 0..d.batch {
            for t in 0..out_len {
                let grow = &upstream[(b * out_len + t) * c..(b * out_len + t + 1) * c];
                for tau in 0..d.width {
                    let dxrow = &mut dx[(b * d.len + t + tau) * c..(b * d.len + t + tau + 1) * c];
                    let krow = &kernel[tau * c..(tau + 1) * c];
                    for ((dv, &g), &kv) in dxrow.iter_mut().zip(grow).zip(krow) {
                        *dv += g * kv;
                    }
                }
            }
        }
    }
    if let Some(dk) = dk {
        for b in 0..d.batch {
            for t in 0..out_len {
                let grow = &upstream[(b * out_len + t) * c..(b * out_len + t + 1) * c];
                for tau in 0..d.width {
                    let xrow = &x[(b * d.len + t + tau) * c..(b * d.len + t + tau + 1) * c];
                    let dkrow = &mut dk[tau * c..(tau + 1) * c];
                    for ((dv, &g), &xv) in dkrow.iter_mut().zip(grow).zip(xrow) {
                        *dv += g * xv;
                    }
                }
            }
        }
    }
}

/// Windowed max over the time axis of `[batch, len, channels]`. Returns, for
/// every output element, the flat input index of the first maximal element.
pub(crate) fn maxpool_forward<T: Scalar>(
    x: &[T],
    out: &mut [T],
    batch: usize,
    len: usize,
    channels: usize,
    width: usize,
    stride: usize,
) -> alloc::vec::Vec<usize> {
    let out_len = (len - width) / stride + 1;
    let mut argmax = alloc::vec![0usize; batch * out_len * channels];
    for b in 0..batch {
        for w in 0..out_len {
            let start = w * stride;
            for ch in 0..channels {
                let mut best_idx = (b * len + start) * channels + ch;
                let mut best = x[best_idx];
                for t in start + 1..start + width {
                    let idx = (b * len + t) * channels + ch;
                    if x[idx] > best {
                        best = x[idx];
                        best_idx = idx;
                    }
                }
                let o = (b * out_len + w) * channels + ch;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    argmax
}
