// Numeric kernels behind the graph operations. All buffers are NCHW.

use crate::par;

/// Output extent of a convolution along one axis, or `None` when the window
/// does not fit.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn ohw(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let ohw = g.ohw();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * ohw..(row + 1) * ohw];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let ohw = g.ohw();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * ohw..(row + 1) * ohw];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c[m×n] = alpha · a[m×k] · b[k×n] + beta · c`, with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the callers size every buffer to cover the strided extents.
    unsafe {
        matrixmultiply::dgemm(
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

pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], b: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let (k, ohw) = (g.k(), g.ohw());
    let in_per = g.cin * g.h * g.w;
    let out_per = g.cout * ohw;
    let mut out = vec![0.0; g.batch * out_per];
    par::for_each_chunk_mut(&mut out, out_per, |n, y| {
        let xs = &x[n * in_per..(n + 1) * in_per];
        let owned;
        let cols: &[f64] = if g.is_pointwise() {
            xs
        } else {
            let mut buf = vec![0.0; k * ohw];
            im2col(xs, g, &mut buf);
            owned = buf;
            &owned
        };
        gemm(g.cout, k, ohw, w, k as isize, 1, cols, ohw as isize, 1, 0.0, y);
        if let Some(bias) = b {
            for (co, row) in y.chunks_mut(ohw).enumerate() {
                row.iter_mut().for_each(|v| *v += bias[co]);
            }
        }
    });
    out
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> ConvGrads {
    let (k, ohw) = (g.k(), g.ohw());
    let in_per = g.cin * g.h * g.w;
    let out_per = g.cout * ohw;

    // Per-sample partial results, reduced below in sample order.
    let partials = par::map_range(g.batch, |n| {
        let xs = &x[n * in_per..(n + 1) * in_per];
        let dys = &dy[n * out_per..(n + 1) * out_per];
        let dw = need_dw.then(|| {
            let mut dw = vec![0.0; g.cout * k];
            if g.is_pointwise() {
                gemm(g.cout, ohw, k, dys, ohw as isize, 1, xs, 1, ohw as isize, 0.0, &mut dw);
            } else {
                let mut cols = vec![0.0; k * ohw];
                im2col(xs, g, &mut cols);
                gemm(g.cout, ohw, k, dys, ohw as isize, 1, &cols, 1, ohw as isize, 0.0, &mut dw);
            }
            dw
        });
        let dx = need_dx.then(|| {
            let mut dx = vec![0.0; in_per];
            if g.is_pointwise() {
                gemm(k, g.cout, ohw, w, 1, k as isize, dys, ohw as isize, 1, 0.0, &mut dx);
            } else {
                let mut dcols = vec![0.0; k * ohw];
                gemm(k, g.cout, ohw, w, 1, k as isize, dys, ohw as isize, 1, 0.0, &mut dcols);
                col2im(&dcols, g, &mut dx);
            }
            dx
        });
        let db = need_db.then(|| {
            dys.chunks(ohw)
                .map(|row| row.iter().sum::<f64>())
                .collect::<Vec<_>>()
        });
        (dx, dw, db)
    });

    let mut grads = ConvGrads {
        dx: need_dx.then(|| Vec::with_capacity(g.batch * in_per)),
        dw: need_dw.then(|| vec![0.0; g.cout * k]),
        db: need_db.then(|| vec![0.0; g.cout]),
    };
    for (dx, dw, db) in partials {
        if let (Some(acc), Some(part)) = (grads.dx.as_mut(), dx) {
            acc.extend_from_slice(&part);
        }
        if let (Some(acc), Some(part)) = (grads.dw.as_mut(), dw) {
            acc.iter_mut().zip(&part).for_each(|(a, p)| *a += p);
        }
        if let (Some(acc), Some(part)) = (grads.db.as_mut(), db) {
            acc.iter_mut().zip(&part).for_each(|(a, p)| *a += p);
        }
    }
    grads
}

pub(crate) fn avg_pool_forward(x: &[f64], planes: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h / f, w / f);
    let norm = 1.0 / (f * f) as f64;
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..f {
                    let row = &src[(oy * f + dy) * w + ox * f..(oy * f + dy) * w + ox * f + f];
                    acc += row.iter().sum::<f64>();
                }
                dst[oy * ow + ox] = acc * norm;
            }
        }
    }
    out
}

pub(crate) fn avg_pool_backward(dy: &[f64], planes: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h / f, w / f);
    let norm = 1.0 / (f * f) as f64;
    let mut dx = vec![0.0; planes * h * w];
    for p in 0..planes {
        for y in 0..h {
            for x in 0..w {
                dx[p * h * w + y * w + x] = dy[p * oh * ow + (y / f) * ow + x / f] * norm;
            }
        }
    }
    dx
}

pub(crate) fn upsample_forward(x: &[f64], planes: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h * f, w * f);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        for y in 0..oh {
            for xx in 0..ow {
                out[p * oh * ow + y * ow + xx] = x[p * h * w + (y / f) * w + xx / f];
            }
        }
    }
    out
}

pub(crate) fn upsample_backward(dy: &[f64], planes: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h * f, w * f);
    let mut dx = vec![0.0; planes * h * w];
    for p in 0..planes {
        for y in 0..oh {
            for xx in 0..ow {
                dx[p * h * w + (y / f) * w + xx / f] += dy[p * oh * ow + y * ow + xx];
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
        let mut out = vec![0.0; g.batch * g.cout * g.oh * g.ow];
        for n in 0..g.batch {
            for co in 0..g.cout {
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        let mut acc = 0.0;
                        for ci in 0..g.cin {
                            for ki in 0..g.kh {
                                for kj in 0..g.kw {
                                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                        continue;
                                    }
                                    acc += x[((n * g.cin + ci) * g.h + iy as usize) * g.w + ix as usize]
                                        * w[((co * g.cin + ci) * g.kh + ki) * g.kw + kj];
                                }
                            }
                        }
                        out[((n * g.cout + co) * g.oh + oy) * g.ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        for &(k, s, p, h, w) in &[(3, 1, 1, 5, 6), (4, 2, 1, 8, 8), (1, 1, 0, 3, 4), (3, 2, 0, 7, 5)] {
            let oh = conv_output_size(h, k, s, p).unwrap();
            let ow = conv_output_size(w, k, s, p).unwrap();
            let g = ConvGeom { batch: 2, cin: 3, h, w, cout: 4, kh: k, kw: k, stride: s, pad: p, oh, ow };
            let x: Vec<f64> = (0..2 * 3 * h * w).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
            let wt: Vec<f64> = (0..4 * 3 * k * k).map(|i| ((i * 13 % 29) as f64 - 14.0) / 14.0).collect();
            let fast = conv2d_forward(&x, &wt, None, &g);
            let slow = naive_conv(&x, &wt, &g);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn output_size_rejects_oversized_kernel() {
        assert_eq!(conv_output_size(2, 4, 2, 0), None);
        assert_eq!(conv_output_size(64, 4, 2, 1), Some(32));
    }
}
