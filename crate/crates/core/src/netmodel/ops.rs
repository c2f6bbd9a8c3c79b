//! Dense kernels: GEMM dispatch, im2col/col2im, max pooling.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of the network. `f32` for training,
/// `f64` for numerical verification.
pub trait Real: Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + Send + Sync + 'static {
    /// `c = alpha * a * b + beta * c` with arbitrary strides.
    ///
    /// # Safety
    /// Every addressed element must lie inside its slice; callers go through
    /// [`matmul`], which checks this.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// `C (m x n) = op(A) op(B) + beta C`, all row-major.
///
/// `a` holds `m x k` (or `k x m` when `a_t`), `b` holds `k x n` (or `n x k`
/// when `b_t`).
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Real>(m: usize, k: usize, n: usize, a: &[T], a_t: bool, b: &[T], b_t: bool, beta: T, c: &mut [T]) {
    assert_eq!(a.len(), m * k, "lhs size");
    assert_eq!(b.len(), k * n, "rhs size");
    assert_eq!(c.len(), m * n, "output size");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: lengths checked above; strides describe the same dense buffers.
    unsafe {
        T::gemm_raw(m, k, n, T::one(), a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1)
    }
}

/// Spatial geometry of one 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvShape {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Rows of the im2col matrix.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }
}

/// Unfolds `x` (C x H x W) into `col` ((C k k) x (Ho Wo)).
pub fn im2col<T: Real>(x: &[T], s: &ConvShape, col: &mut [T]) {
    let (ho, wo) = (s.out_height(), s.out_width());
    debug_assert_eq!(x.len(), s.channels * s.height * s.width);
    debug_assert_eq!(col.len(), s.patch_len() * ho * wo);
    let mut row = 0;
    for c in 0..s.channels {
        let plane = &x[c * s.height * s.width..(c + 1) * s.height * s.width];
        for ky in 0..s.kernel {
            for kx in 0..s.kernel {
                let dst = &mut col[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * s.stride + ky) as isize - s.padding as isize;
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= s.height as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * s.width..(iy as usize + 1) * s.width];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * s.stride + kx) as isize - s.padding as isize;
                        *v = if ix < 0 || ix >= s.width as isize { T::zero() } else { src[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `col` back into `dx` (C x H x W).
pub fn col2im<T: Real>(col: &[T], s: &ConvShape, dx: &mut [T]) {
    let (ho, wo) = (s.out_height(), s.out_width());
    let mut row = 0;
    for c in 0..s.channels {
        let plane = &mut dx[c * s.height * s.width..(c + 1) * s.height * s.width];
        for ky in 0..s.kernel {
            for kx in 0..s.kernel {
                let src = &col[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * s.stride + ky) as isize - s.padding as isize;
                    if iy < 0 || iy >= s.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * s.width..(iy as usize + 1) * s.width];
                    for ox in 0..wo {
                        let ix = (ox * s.stride + kx) as isize - s.padding as isize;
                        if ix >= 0 && ix < s.width as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub fn pool_out(size: usize, kernel: usize, stride: usize) -> usize {
    (size - kernel) / stride + 1
}

/// Max pooling over each channel. Returns the output and, per output
/// element, the flat input index that won (first maximum on ties).
pub fn maxpool<T: Real>(x: &[T], c: usize, h: usize, w: usize, kernel: usize, stride: usize) -> (Vec<T>, Vec<u32>) {
    let (ho, wo) = (pool_out(h, kernel, stride), pool_out(w, kernel, stride));
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

/// Routes pooled gradients back to the winning inputs.
pub fn maxpool_backward<T: Real>(d_out: &[T], arg: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&g, &i) in d_out.iter().zip(arg) {
        dx[i as usize] = dx[i as usize] + g;
    }
    dx
}
