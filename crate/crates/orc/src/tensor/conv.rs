//! 2-D convolution over NCHW inputs with direct loops.
//!
//! Kept deliberately simple: a fixed loop order makes the output bit-stable,
//! and the ladders built on top of it are small enough that im2col would buy
//! nothing.

use super::{BackwardFn, Tensor};
use crate::error::{Error, Result};

impl Tensor {
    /// Convolves `self` [N,C,H,W] with `weight` [F,C,kh,kw].
    ///
    /// Output spatial dims are `floor((H + 2·padding − kh)/stride) + 1` and
    /// likewise for width; padding is zero-filled.
    pub fn conv2d(&self, weight: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
        let x_shape = self.shape();
        let w_shape = weight.shape();
        if x_shape.len() != 4 || w_shape.len() != 4 {
            return Err(Error::shape(format!(
                "conv2d requires rank-4 input and weight, got {x_shape:?} and {w_shape:?}"
            )));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d stride must be at least 1"));
        }
        let (n, c, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
        let (f, wc, kh, kw) = (w_shape[0], w_shape[1], w_shape[2], w_shape[3]);
        if c != wc {
            return Err(Error::shape(format!(
                "conv2d channel mismatch: input has {c}, weight expects {wc}"
            )));
        }
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(Error::shape(format!(
                "conv2d kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;

        let x_data = self.values();
        let w_data = weight.values();
        let mut out = vec![0.0; n * f * oh * ow];
        for ni in 0..n {
            for fi in 0..f {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ci in 0..c {
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * stride + kx) as isize - padding as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xv = x_data
                                        [((ni * c + ci) * h + iy as usize) * w + ix as usize];
                                    let wv = w_data[((fi * c + ci) * kh + ky) * kw + kx];
                                    acc += xv * wv;
                                }
                            }
                        }
                        out[((ni * f + fi) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }

        let (x_t, w_t) = (self.clone(), weight.clone());
        Ok(Tensor::from_op(
            out,
            vec![n, f, oh, ow],
            &[self, weight],
            move || {
                Box::new(move |dout: &[f64]| {
                    let need_dx = x_t.requires_grad();
                    let need_dw = w_t.requires_grad();
                    let mut dx = vec![0.0; x_data.len()];
                    let mut dw = vec![0.0; w_data.len()];
                    for ni in 0..n {
                        for fi in 0..f {
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let g = dout[((ni * f + fi) * oh + oy) * ow + ox];
                                    if g == 0.0 {
                                        continue;
                                    }
                                    for ci in 0..c {
                                        for ky in 0..kh {
                                            let iy =
                                                (oy * stride + ky) as isize - padding as isize;
                                            if iy < 0 || iy >= h as isize {
                                                continue;
                                            }
                                            for kx in 0..kw {
                                                let ix = (ox * stride + kx) as isize
                                                    - padding as isize;
                                                if ix < 0 || ix >= w as isize {
                                                    continue;
                                                }
                                                let xi = ((ni * c + ci) * h + iy as usize) * w
                                                    + ix as usize;
                                                let wi = ((fi * c + ci) * kh + ky) * kw + kx;
                                                if need_dx {
                                                    dx[xi] += g * w_data[wi];
                                                }
                                                if need_dw {
                                                    dw[wi] += g * x_data[xi];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    if need_dx {
                        x_t.accumulate_grad(&dx);
                    }
                    if need_dw {
                        w_t.accumulate_grad(&dw);
                    }
                }) as BackwardFn
            },
        ))
    }
}
