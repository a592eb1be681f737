//! Valid (unpadded) 2-D convolution and max pooling kernels on NCHW buffers.

use super::gemm;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], weight: &[usize], stride: (usize, usize)) -> Result<Self> {
        if input.len() != 4 || weight.len() != 4 {
            return Err(Error::shape(format!(
                "conv2d expects input [N,Cin,H,W] and weight [Cout,Cin,kh,kw], got {input:?} and {weight:?}"
            )));
        }
        let (sh, sw) = stride;
        if sh == 0 || sw == 0 {
            return Err(Error::shape(format!("conv2d stride must be positive, got {stride:?}")));
        }
        if input[1] != weight[1] {
            return Err(Error::shape(format!(
                "conv2d input has {} channels but weight {weight:?} expects {}",
                input[1], weight[1]
            )));
        }
        let (h, w, kh, kw) = (input[2], input[3], weight[2], weight[3]);
        if h < kh || w < kw {
            return Err(Error::shape(format!(
                "conv2d kernel {kh}x{kw} does not fit input {h}x{w}"
            )));
        }
        Ok(ConvGeom {
            n: input[0],
            cin: input[1],
            h,
            w,
            cout: weight[0],
            kh,
            kw,
            sh,
            sw,
            ho: (h - kh) / sh + 1,
            wo: (w - kw) / sw + 1,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.n, self.cout, self.ho, self.wo]
    }

    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }
}

/// Output shape of a valid convolution, or a shape error.
pub fn conv2d_output_shape(input: &[usize], weight: &[usize], stride: (usize, usize)) -> Result<Vec<usize>> {
    ConvGeom::new(input, weight, stride).map(|g| g.output_shape())
}

fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let p = g.positions();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let src = &plane[(oy * g.sh + ky) * g.w + kx..];
                    let out = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if g.sw == 1 {
                        out.copy_from_slice(&src[..g.wo]);
                    } else {
                        for (ox, o) in out.iter_mut().enumerate() {
                            *o = src[ox * g.sw];
                        }
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, cols: &[f64], dx: &mut [f64]) {
    let p = g.positions();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let base = (oy * g.sh + ky) * g.w + kx;
                    let line = &src[oy * g.wo..(oy + 1) * g.wo];
                    if g.sw == 1 {
                        for (d, s) in plane[base..base + g.wo].iter_mut().zip(line) {
                            *d += s;
                        }
                    } else {
                        for (ox, s) in line.iter().enumerate() {
                            plane[base + ox * g.sw] += s;
                        }
                    }
                }
            }
        }
    }
}

/// Below this many output channels the GEMM cannot amortise im2col and
/// operand packing, so the forward pass accumulates shifted rows directly.
const DIRECT_MAX_COUT: usize = 4;

/// `y[c] += Σ w[c,ci,ky,kx] · x[ci] shifted by (ky, kx)` for one sample.
fn shifted_rows_conv(g: &ConvGeom, x: &[f64], weight: &[f64], y: &mut [f64]) {
    let p = g.positions();
    for (c, out) in y.chunks_exact_mut(p).enumerate() {
        for ci in 0..g.cin {
            let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = weight[((c * g.cin + ci) * g.kh + ky) * g.kw + kx];
                    for oy in 0..g.ho {
                        let src = &plane[(oy * g.sh + ky) * g.w + kx..][..g.wo];
                        for (d, s) in out[oy * g.wo..(oy + 1) * g.wo].iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(g: &ConvGeom, x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let (k, p) = (g.patch(), g.positions());
    let in_stride = g.cin * g.h * g.w;
    let out_stride = g.cout * p;
    let mut out = vec![0.0; g.n * out_stride];
    let direct = g.cout <= DIRECT_MAX_COUT && g.sw == 1;
    let mut cols = if direct { Vec::new() } else { vec![0.0; k * p] };
    for s in 0..g.n {
        let y = &mut out[s * out_stride..(s + 1) * out_stride];
        for (c, plane) in y.chunks_exact_mut(p).enumerate() {
            plane.fill(bias[c]);
        }
        let xs = &x[s * in_stride..(s + 1) * in_stride];
        if direct {
            shifted_rows_conv(g, xs, weight, y);
        } else {
            im2col(g, xs, &mut cols);
            gemm::nn(g.cout, k, p, weight, &cols, y, true);
        }
    }
    out
}

/// Accumulates gradients into whichever of `dx`, `dw`, `db` are present.
pub(crate) fn conv2d_backward(
    g: &ConvGeom,
    x: &[f64],
    weight: &[f64],
    dy: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    mut db: Option<&mut [f64]>,
) {
    let (k, p) = (g.patch(), g.positions());
    let in_stride = g.cin * g.h * g.w;
    let out_stride = g.cout * p;
    let mut cols = vec![0.0; k * p];
    for s in 0..g.n {
        let dys = &dy[s * out_stride..(s + 1) * out_stride];
        if let Some(db) = db.as_deref_mut() {
            for (c, plane) in dys.chunks_exact(p).enumerate() {
                db[c] += plane.iter().sum::<f64>();
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            im2col(g, &x[s * in_stride..(s + 1) * in_stride], &mut cols);
            gemm::nt(g.cout, p, k, dys, &cols, dw, true);
        }
        if let Some(dx) = dx.as_deref_mut() {
            gemm::tn(k, g.cout, p, weight, dys, &mut cols, false);
            col2im(g, &cols, &mut dx[s * in_stride..(s + 1) * in_stride]);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub nc: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ho: usize,
    pub wo: usize,
}

impl PoolGeom {
    pub fn new(input: &[usize], kernel: (usize, usize), stride: (usize, usize)) -> Result<Self> {
        if input.len() != 4 {
            return Err(Error::shape(format!("maxpool2d expects [N,C,H,W], got {input:?}")));
        }
        let ((kh, kw), (sh, sw)) = (kernel, stride);
        if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return Err(Error::shape("maxpool2d kernel and stride must be positive"));
        }
        let (h, w) = (input[2], input[3]);
        if h < kh || w < kw {
            return Err(Error::shape(format!(
                "maxpool2d kernel {kh}x{kw} larger than input {h}x{w}"
            )));
        }
        Ok(PoolGeom {
            nc: input[0] * input[1],
            h,
            w,
            kh,
            kw,
            sh,
            sw,
            ho: (h - kh) / sh + 1,
            wo: (w - kw) / sw + 1,
        })
    }
}

pub fn maxpool2d_output_shape(input: &[usize], kernel: (usize, usize), stride: (usize, usize)) -> Result<Vec<usize>> {
    let g = PoolGeom::new(input, kernel, stride)?;
    Ok(vec![input[0], input[1], g.ho, g.wo])
}

/// Returns pooled values and, per output cell, the flat input index it came from.
/// Ties resolve to the first element in row-major window order (lowest flat index).
pub(crate) fn maxpool2d_forward(g: &PoolGeom, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let cells = g.nc * g.ho * g.wo;
    let mut out = Vec::with_capacity(cells);
    let mut argmax = Vec::with_capacity(cells);
    for plane in 0..g.nc {
        let base = plane * g.h * g.w;
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let mut best = base + oy * g.sh * g.w + ox * g.sw;
                let mut best_val = x[best];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let idx = base + (oy * g.sh + ky) * g.w + ox * g.sw + kx;
                        if x[idx] > best_val {
                            best_val = x[idx];
                            best = idx;
                        }
                    }
                }
                out.push(best_val);
                argmax.push(best);
            }
        }
    }
    (out, argmax)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_conv(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.n * g.cout * g.ho * g.wo];
        for n in 0..g.n {
            for co in 0..g.cout {
                for oy in 0..g.ho {
                    for ox in 0..g.wo {
                        let mut acc = b[co];
                        for ci in 0..g.cin {
                            for ky in 0..g.kh {
                                for kx in 0..g.kw {
                                    let xi = ((n * g.cin + ci) * g.h + oy * g.sh + ky) * g.w + ox * g.sw + kx;
                                    let wi = ((co * g.cin + ci) * g.kh + ky) * g.kw + kx;
                                    acc += x[xi] * w[wi];
                                }
                            }
                        }
                        out[((n * g.cout + co) * g.ho + oy) * g.wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        // 2 and 4 output channels take the row-accumulation path, 5 and 7 the GEMM
        for cout in [2, 4, 5, 7] {
            for stride in [(1, 1), (2, 1), (2, 3)] {
                let g = ConvGeom::new(&[2, 3, 9, 8], &[cout, 3, 3, 2], stride).unwrap();
                let x: Vec<f64> = (0..2 * 3 * 9 * 8).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
                let w: Vec<f64> = (0..cout * 3 * 3 * 2).map(|i| ((i * 13 % 7) as f64) * 0.1).collect();
                let b: Vec<f64> = (0..cout).map(|c| c as f64 * 0.5 - 1.0).collect();
                let got = conv2d_forward(&g, &x, &w, &b);
                let want = direct_conv(&g, &x, &w, &b);
                assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-10));
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        assert!(ConvGeom::new(&[1, 2, 5, 5], &[1, 3, 3, 3], (1, 1)).is_err());
        assert!(ConvGeom::new(&[1, 3, 2, 5], &[1, 3, 3, 3], (1, 1)).is_err());
        assert!(ConvGeom::new(&[1, 3, 5, 5], &[1, 3, 3, 3], (0, 1)).is_err());
    }

    #[test]
    fn pool_ties_pick_first_element() {
        let g = PoolGeom::new(&[1, 1, 2, 4], (2, 2), (2, 2)).unwrap();
        let (vals, arg) = maxpool2d_forward(&g, &[1.0; 8]);
        assert_eq!(vals, vec![1.0, 1.0]);
        assert_eq!(arg, vec![0, 2]);
    }
}
