//! Raw compute kernels shared by the tape and the inference paths.
//!
//! Convolutions run channels-last through im2col plus GEMM. Batches are
//! split into a fixed number of row blocks for rayon so results do not
//! depend on thread scheduling.

use super::Scalar;
use rayon::prelude::*;

/// Fixed parallel split. A constant block count keeps floating-point
/// summation order independent of the thread pool.
const PAR_BLOCKS: usize = 4;
/// Below this many GEMM rows the parallel split is pure overhead.
const PAR_MIN_ROWS: usize = 512;

/// Geometry of one convolution application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub k: usize,
    pub stride: usize,
    pub out_c: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - self.k) / self.stride + 1
    }

    /// im2col row width: one patch in (kh, kw, ci) order.
    pub fn patch_len(&self) -> usize {
        self.k * self.k * self.in_c
    }

    /// im2col row count: one row per output pixel.
    pub fn rows(&self) -> usize {
        self.batch * self.out_h() * self.out_w()
    }
}

/// Gather convolution patches: `cols` is (rows, patch_len) row-major, each
/// row the (kh, kw, ci)-ordered patch for one output pixel.
pub fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (oh, ow, kk) = (g.out_h(), g.out_w(), g.patch_len());
    let span = g.k * g.in_c;
    let per_image = oh * ow * kk;
    debug_assert_eq!(cols.len(), g.rows() * kk);
    let x_img = g.in_h * g.in_w * g.in_c;
    cols.par_chunks_mut(per_image)
        .enumerate()
        .for_each(|(n, out)| {
            let img = &x[n * x_img..(n + 1) * x_img];
            let mut o = 0;
            for oy in 0..oh {
                for ox in 0..ow {
                    for ky in 0..g.k {
                        let base = ((oy * g.stride + ky) * g.in_w + ox * g.stride) * g.in_c;
                        out[o..o + span].copy_from_slice(&img[base..base + span]);
                        o += span;
                    }
                }
            }
        });
}

/// Scatter-add the cols gradient back to the input layout.
pub fn col2im_add<T: Scalar>(dcols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (oh, ow, kk) = (g.out_h(), g.out_w(), g.patch_len());
    let span = g.k * g.in_c;
    let per_image = oh * ow * kk;
    let x_img = g.in_h * g.in_w * g.in_c;
    dx.par_chunks_mut(x_img).enumerate().for_each(|(n, dimg)| {
        let src = &dcols[n * per_image..(n + 1) * per_image];
        let mut o = 0;
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..g.k {
                    let base = ((oy * g.stride + ky) * g.in_w + ox * g.stride) * g.in_c;
                    for (d, &s) in dimg[base..base + span].iter_mut().zip(&src[o..o + span]) {
                        *d += s;
                    }
                    o += span;
                }
            }
        }
    });
}

/// C (m,n) = A (m,k) * B + beta * C, where B is the logical (k,n) matrix
/// given by raw strides. Rows of A and C are split into fixed blocks.
#[allow(clippy::too_many_arguments)]
pub fn gemm_rows<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: *const T,
    rsb: isize,
    csb: isize,
    beta: T,
    c: &mut [T],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 {
        return;
    }
    struct Ptr<T>(*const T);
    unsafe impl<T> Sync for Ptr<T> {}
    let b = Ptr(b);
    if m < PAR_MIN_ROWS {
        unsafe {
            T::gemm(
                m, k, n,
                T::one(),
                a.as_ptr(), k as isize, 1,
                b.0, rsb, csb,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
        return;
    }
    let block = m.div_ceil(PAR_BLOCKS);
    let tasks: Vec<(usize, &[T], &mut [T])> = {
        let mut tasks = Vec::new();
        let (mut a_rest, mut c_rest) = (a, c);
        let mut row = 0;
        while row < m {
            let take = block.min(m - row);
            let (a_blk, a_next) = a_rest.split_at(take * k);
            let (c_blk, c_next) = c_rest.split_at_mut(take * n);
            tasks.push((take, a_blk, c_blk));
            a_rest = a_next;
            c_rest = c_next;
            row += take;
        }
        tasks
    };
    let b = &b;
    tasks.into_par_iter().for_each(|(rows, a_blk, c_blk)| unsafe {
        T::gemm(
            rows, k, n,
            T::one(),
            a_blk.as_ptr(), k as isize, 1,
            b.0, rsb, csb,
            beta,
            c_blk.as_mut_ptr(), n as isize, 1,
        );
    });
}

/// Forward convolution. Returns the output in (batch, oh, ow, out_c) layout
/// along with the im2col buffer, which backward reuses.
pub fn conv2d_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], g: &ConvGeom) -> (Vec<T>, Vec<T>) {
    let (rows, kk) = (g.rows(), g.patch_len());
    debug_assert_eq!(w.len(), g.out_c * kk);
    debug_assert_eq!(b.len(), g.out_c);
    let mut cols = vec![T::zero(); rows * kk];
    im2col(x, g, &mut cols);
    let mut out = vec![T::zero(); rows * g.out_c];
    // out = cols (rows,kk) x W^T, with W stored (out_c, kk).
    gemm_rows(rows, kk, g.out_c, &cols, w.as_ptr(), 1, kk as isize, T::zero(), &mut out);
    out.par_chunks_mut(g.out_c).for_each(|row| {
        for (o, &bias) in row.iter_mut().zip(b) {
            *o += bias;
        }
    });
    (out, cols)
}

/// Backward convolution. `dout` is (rows, out_c). Accumulates into `dw`,
/// `db` and (when present) `dx`.
pub fn conv2d_backward<T: Scalar>(
    dout: &[T],
    cols: &[T],
    w: &[T],
    g: &ConvGeom,
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    let (rows, kk) = (g.rows(), g.patch_len());
    debug_assert_eq!(dout.len(), rows * g.out_c);

    // dW (out_c, kk) += dout^T (out_c, rows) x cols (rows, kk).
    // Accumulate fixed-order partials so the parallel split cannot change
    // the summation order.
    let block = rows.div_ceil(PAR_BLOCKS).max(1);
    let ranges: Vec<(usize, usize)> = (0..rows)
        .step_by(block)
        .map(|s| (s, (s + block).min(rows)))
        .collect();
    let partials: Vec<(Vec<T>, Vec<T>)> = ranges
        .into_par_iter()
        .map(|(s, e)| {
            let mut dw_p = vec![T::zero(); dw.len()];
            let mut db_p = vec![T::zero(); db.len()];
            let rows_blk = e - s;
            unsafe {
                T::gemm(
                    g.out_c, rows_blk, kk,
                    T::one(),
                    dout.as_ptr().add(s * g.out_c), 1, g.out_c as isize,
                    cols.as_ptr().add(s * kk), kk as isize, 1,
                    T::zero(),
                    dw_p.as_mut_ptr(), kk as isize, 1,
                );
            }
            for r in s..e {
                let row = &dout[r * g.out_c..(r + 1) * g.out_c];
                for (acc, &v) in db_p.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            (dw_p, db_p)
        })
        .collect();
    for (dw_p, db_p) in partials {
        for (acc, v) in dw.iter_mut().zip(dw_p) {
            *acc += v;
        }
        for (acc, v) in db.iter_mut().zip(db_p) {
            *acc += v;
        }
    }

    if let Some(dx) = dx {
        // dcols (rows, kk) = dout (rows, out_c) x W (out_c, kk)
        let mut dcols = vec![T::zero(); rows * kk];
        gemm_rows(
            rows, g.out_c, kk,
            dout,
            w.as_ptr(), kk as isize, 1,
            T::zero(),
            &mut dcols,
        );
        col2im_add(&dcols, g, dx);
    }
}

/// y (n, out) = x (n, in) * W^T + b, with W stored (out, in).
pub fn linear_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], n: usize, din: usize, dout: usize) -> Vec<T> {
    debug_assert_eq!(x.len(), n * din);
    debug_assert_eq!(w.len(), dout * din);
    let mut y = vec![T::zero(); n * dout];
    for (yrow, xrow) in y.chunks_mut(dout).zip(x.chunks(din)) {
        for (o, (wrow, &bias)) in yrow.iter_mut().zip(w.chunks(din).zip(b)) {
            let mut acc = T::zero();
            for (&xi, &wi) in xrow.iter().zip(wrow) {
                acc += xi * wi;
            }
            *o = acc + bias;
        }
    }
    y
}

/// Backward for [`linear_forward`]. Accumulates into the provided buffers.
pub fn linear_backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    w: &[T],
    n: usize,
    din: usize,
    dout: usize,
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    debug_assert_eq!(dy.len(), n * dout);
    debug_assert_eq!(x.len(), n * din);
    for (drow, xrow) in dy.chunks(dout).zip(x.chunks(din)) {
        for ((&d, wgrad), dbias) in drow.iter().zip(dw.chunks_mut(din)).zip(db.iter_mut()) {
            for (g, &xi) in wgrad.iter_mut().zip(xrow) {
                *g += d * xi;
            }
            *dbias += d;
        }
    }
    if let Some(dx) = dx {
        for (drow, dxrow) in dy.chunks(dout).zip(dx.chunks_mut(din)) {
            for (&d, wrow) in drow.iter().zip(w.chunks(din)) {
                for (g, &wi) in dxrow.iter_mut().zip(wrow) {
                    *g += d * wi;
                }
            }
        }
    }
}

pub fn relu<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v.max(T::zero())).collect()
}

pub fn relu_backward<T: Scalar>(dy: &[T], y: &[T], dx: &mut [T]) {
    for ((g, &d), &yv) in dx.iter_mut().zip(dy).zip(y) {
        if yv > T::zero() {
            *g += d;
        }
    }
}

pub fn leaky_relu<T: Scalar>(x: &[T], slope: T) -> Vec<T> {
    x.iter()
        .map(|&v| if v > T::zero() { v } else { v * slope })
        .collect()
}

pub fn leaky_relu_backward<T: Scalar>(dy: &[T], y: &[T], slope: T, dx: &mut [T]) {
    for ((g, &d), &yv) in dx.iter_mut().zip(dy).zip(y) {
        *g += if yv > T::zero() { d } else { d * slope };
    }
}

pub fn sigmoid<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter()
        .map(|&v| T::one() / (T::one() + (-v).exp()))
        .collect()
}

pub fn sigmoid_backward<T: Scalar>(dy: &[T], y: &[T], dx: &mut [T]) {
    for ((g, &d), &yv) in dx.iter_mut().zip(dy).zip(y) {
        *g += d * yv * (T::one() - yv);
    }
}
