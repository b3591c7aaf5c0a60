//! Raw numeric kernels over flat row-major buffers.
//!
//! Parallel loops only ever split over independent output rows or fixed-size
//! image chunks whose partial sums are folded in chunk order.

use super::Real;
use crate::par;

/// Images per partial sum in convolution weight gradients.
const IMAGE_CHUNK: usize = 16;

/// `a[m×k] · b[k×n]`.
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    par::for_each_chunk(&mut out, n, |i, row| {
        let ar = &a[i * k..(i + 1) * k];
        for (p, &aip) in ar.iter().enumerate() {
            let br = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(br) {
                *o = *o + aip * bv;
            }
        }
    });
    out
}

/// `dC[m×n] · bᵀ`, the gradient with respect to the left operand.
pub fn matmul_grad_lhs<T: Real>(dc: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * k];
    par::for_each_chunk(&mut out, k, |i, row| {
        let dr = &dc[i * n..(i + 1) * n];
        for (p, o) in row.iter_mut().enumerate() {
            let br = &b[p * n..(p + 1) * n];
            *o = dr.iter().zip(br).fold(T::zero(), |s, (&x, &y)| s + x * y);
        }
    });
    out
}

/// `aᵀ · dC[m×n]`, the gradient with respect to the right operand.
pub fn matmul_grad_rhs<T: Real>(a: &[T], dc: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    par::for_each_chunk(&mut out, n, |p, row| {
        for i in 0..m {
            let aip = a[i * k + p];
            let dr = &dc[i * n..(i + 1) * n];
            for (o, &d) in row.iter_mut().zip(dr) {
                *o = *o + aip * d;
            }
        }
    });
    out
}

/// Shape bookkeeping for an NHWC convolution with an HWIO kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub ci: usize,
    pub kh: usize,
    pub kw: usize,
    pub co: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    /// Zero padding that preserves `h×w`; an even kernel puts the extra row
    /// or column after the input.
    pub fn same(n: usize, h: usize, w: usize, ci: usize, kh: usize, kw: usize, co: usize) -> Self {
        ConvGeom {
            n,
            h,
            w,
            ci,
            kh,
            kw,
            co,
            pad_top: (kh - 1) / 2,
            pad_left: (kw - 1) / 2,
            oh: h,
            ow: w,
        }
    }

    pub fn valid(
        n: usize,
        h: usize,
        w: usize,
        ci: usize,
        kh: usize,
        kw: usize,
        co: usize,
    ) -> Option<Self> {
        if kh > h || kw > w {
            return None;
        }
        Some(ConvGeom {
            n,
            h,
            w,
            ci,
            kh,
            kw,
            co,
            pad_top: 0,
            pad_left: 0,
            oh: h - kh + 1,
            ow: w - kw + 1,
        })
    }

    fn in_image(&self) -> usize {
        self.h * self.w * self.ci
    }

    fn out_image(&self) -> usize {
        self.oh * self.ow * self.co
    }

    /// Input coordinate read by output `(oy, ox)` through tap `(ky, kx)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy + ky).checked_sub(self.pad_top)?;
        let ix = (ox + kx).checked_sub(self.pad_left)?;
        (iy < self.h && ix < self.w).then_some((iy, ix))
    }
}

pub fn conv2d_forward<T: Real>(
    input: &[T],
    kernel: &[T],
    bias: Option<&[T]>,
    g: &ConvGeom,
) -> Vec<T> {
    let mut out = vec![T::zero(); g.n * g.out_image()];
    par::for_each_chunk(&mut out, g.out_image(), |img, o| {
        let x = &input[img * g.in_image()..(img + 1) * g.in_image()];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let op = &mut o[(oy * g.ow + ox) * g.co..(oy * g.ow + ox + 1) * g.co];
                if let Some(b) = bias {
                    op.copy_from_slice(b);
                }
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let Some((iy, ix)) = g.source(oy, ox, ky, kx) else {
                            continue;
                        };
                        let xp = &x[(iy * g.w + ix) * g.ci..(iy * g.w + ix + 1) * g.ci];
                        let kbase = (ky * g.kw + kx) * g.ci * g.co;
                        for (c, &xv) in xp.iter().enumerate() {
                            let kr = &kernel[kbase + c * g.co..kbase + (c + 1) * g.co];
                            for (ov, &kv) in op.iter_mut().zip(kr) {
                                *ov = *ov + xv * kv;
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

pub fn conv2d_grad_input<T: Real>(grad_out: &[T], kernel: &[T], g: &ConvGeom) -> Vec<T> {
    let mut din = vec![T::zero(); g.n * g.in_image()];
    par::for_each_chunk(&mut din, g.in_image(), |img, dx| {
        let dy = &grad_out[img * g.out_image()..(img + 1) * g.out_image()];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let dp = &dy[(oy * g.ow + ox) * g.co..(oy * g.ow + ox + 1) * g.co];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let Some((iy, ix)) = g.source(oy, ox, ky, kx) else {
                            continue;
                        };
                        let kbase = (ky * g.kw + kx) * g.ci * g.co;
                        let xp = &mut dx[(iy * g.w + ix) * g.ci..(iy * g.w + ix + 1) * g.ci];
                        for (c, xv) in xp.iter_mut().enumerate() {
                            let kr = &kernel[kbase + c * g.co..kbase + (c + 1) * g.co];
                            let s = dp.iter().zip(kr).fold(T::zero(), |s, (&d, &k)| s + d * k);
                            *xv = *xv + s;
                        }
                    }
                }
            }
        }
    });
    din
}

/// Kernel and bias gradients, accumulated per image chunk and folded in order.
pub fn conv2d_grad_params<T: Real>(input: &[T], grad_out: &[T], g: &ConvGeom) -> (Vec<T>, Vec<T>) {
    let klen = g.kh * g.kw * g.ci * g.co;
    let chunks = g.n.div_ceil(IMAGE_CHUNK);
    let partials = par::map(chunks, |c| {
        let mut dk = vec![T::zero(); klen];
        let mut db = vec![T::zero(); g.co];
        for img in c * IMAGE_CHUNK..((c + 1) * IMAGE_CHUNK).min(g.n) {
            let x = &input[img * g.in_image()..(img + 1) * g.in_image()];
            let dy = &grad_out[img * g.out_image()..(img + 1) * g.out_image()];
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let dp = &dy[(oy * g.ow + ox) * g.co..(oy * g.ow + ox + 1) * g.co];
                    for (b, &d) in db.iter_mut().zip(dp) {
                        *b = *b + d;
                    }
                    for ky in 0..g.kh {
                        for kx in 0..g.kw {
                            let Some((iy, ix)) = g.source(oy, ox, ky, kx) else {
                                continue;
                            };
                            let xp = &x[(iy * g.w + ix) * g.ci..(iy * g.w + ix + 1) * g.ci];
                            let kbase = (ky * g.kw + kx) * g.ci * g.co;
                            for (c, &xv) in xp.iter().enumerate() {
                                let kr = &mut dk[kbase + c * g.co..kbase + (c + 1) * g.co];
                                for (kv, &d) in kr.iter_mut().zip(dp) {
                                    *kv = *kv + xv * d;
                                }
                            }
                        }
                    }
                }
            }
        }
        (dk, db)
    });
    let mut dk = vec![T::zero(); klen];
    let mut db = vec![T::zero(); g.co];
    for (pk, pb) in partials {
        for (a, b) in dk.iter_mut().zip(pk) {
            *a = *a + b;
        }
        for (a, b) in db.iter_mut().zip(pb) {
            *a = *a + b;
        }
    }
    (dk, db)
}

/// 2×2 stride-2 max pooling over NHWC images. Odd extents are padded with
/// −∞, so the output is `⌈h/2⌉×⌈w/2⌉`. Returns the pooled values and the
/// flat input index of each maximum (first in row-major window order on
/// ties).
pub fn maxpool2x2_forward<T: Real>(
    input: &[T],
    n: usize,
    h: usize,
    w: usize,
    c: usize,
) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let out_img = oh * ow * c;
    let mut out = vec![T::zero(); n * out_img];
    let mut arg = vec![0usize; n * out_img];
    par::for_each_chunk(&mut arg, out_img, |img, a| {
        let base = img * h * w * c;
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = T::neg_infinity();
                    let mut best_ix = usize::MAX;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let (iy, ix) = (2 * oy + dy, 2 * ox + dx);
                            if iy >= h || ix >= w {
                                continue;
                            }
                            let flat = base + (iy * w + ix) * c + ch;
                            if best_ix == usize::MAX || input[flat] > best {
                                best = input[flat];
                                best_ix = flat;
                            }
                        }
                    }
                    a[(oy * ow + ox) * c + ch] = best_ix;
                }
            }
        }
    });
    for (o, &ix) in out.iter_mut().zip(&arg) {
        *o = input[ix];
    }
    (out, arg)
}
