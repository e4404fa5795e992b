//! Spatial primitives: 2-D convolution, 3×3 box filtering, bilinear ×2 upsampling.

use super::Tensor;
use crate::array::Array;

/// Valid output-column range so that `ox*stride + kx - pad` stays in `[0, w)`.
#[inline]
fn col_range(kx: usize, pad: usize, stride: usize, w: usize, wo: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx).div_ceil(stride);
    let hi = if w + pad > kx {
        (((w + pad - kx - 1) / stride) + 1).min(wo)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// dst[i] += a · src[i·stride]; contiguous fast path for stride 1.
#[inline]
fn saxpy_strided(dst: &mut [f64], src: &[f64], a: f64, stride: usize) {
    if stride == 1 {
        let n = dst.len();
        for (d, s) in dst.iter_mut().zip(&src[..n]) {
            *d += a * s;
        }
    } else {
        for (d, s) in dst.iter_mut().zip(src.iter().step_by(stride)) {
            *d += a * s;
        }
    }
}

/// dst[i·stride] += a · src[i]; scatter form of `saxpy_strided`.
#[inline]
fn scatter_strided(dst: &mut [f64], src: &[f64], a: f64, stride: usize) {
    if stride == 1 {
        for (d, s) in dst[..src.len()].iter_mut().zip(src) {
            *d += a * s;
        }
    } else {
        for (d, s) in dst.iter_mut().step_by(stride).zip(src) {
            *d += a * s;
        }
    }
}

/// Σ a[i·stride]·b[i] over b's length.
#[inline]
fn dot_strided(a: &[f64], b: &[f64], stride: usize) -> f64 {
    let mut acc = 0.0;
    if stride == 1 {
        for (x, y) in a[..b.len()].iter().zip(b) {
            acc += x * y;
        }
    } else {
        for (x, y) in a.iter().step_by(stride).zip(b) {
            acc += x * y;
        }
    }
    acc
}

impl Tensor {
    /// 2-D convolution with zero padding.
    /// input [B,Cin,H,W] ⊛ weight [Cout,Cin,kh,kw] + bias [Cout] → [B,Cout,Ho,Wo].
    pub fn conv2d(&self, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Tensor {
        assert!(stride >= 1, "conv2d: stride must be >= 1");
        assert!(
            self.ndim() == 4 && weight.ndim() == 4 && bias.ndim() == 1,
            "conv2d: expected input[B,C,H,W], weight[O,C,kh,kw], bias[O], got {:?} {:?} {:?}",
            self.shape,
            weight.shape(),
            bias.shape()
        );
        let (b, cin, h, w) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        let ws = weight.shape().to_vec();
        let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
        assert!(
            ws[1] == cin && bias.shape()[0] == cout,
            "conv2d: channel mismatch input {:?} weight {:?} bias {:?}",
            self.shape,
            ws,
            bias.shape()
        );
        assert!(
            h + 2 * pad >= kh && w + 2 * pad >= kw,
            "conv2d: kernel {kh}x{kw} larger than padded input {h}x{w} (pad {pad})"
        );
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;

        let value = self.graph.with_values(&[self.id, weight.id, bias.id], |vals| {
            let (x, wt, bs) = (vals[0].data(), vals[1].data(), vals[2].data());
            let mut out = vec![0.0; b * cout * ho * wo];
            for ib in 0..b {
                for co in 0..cout {
                    let obase = (ib * cout + co) * ho * wo;
                    out[obase..obase + ho * wo].fill(bs[co]);
                    for ci in 0..cin {
                        let ibase = (ib * cin + ci) * h * w;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let wv = wt[((co * cin + ci) * kh + ky) * kw + kx];
                                if wv == 0.0 {
                                    continue;
                                }
                                let (xlo, xhi) = col_range(kx, pad, stride, w, wo);
                                if xlo >= xhi {
                                    continue;
                                }
                                for oy in 0..ho {
                                    let iy = oy * stride + ky;
                                    if iy < pad || iy - pad >= h {
                                        continue;
                                    }
                                    let irow = ibase + (iy - pad) * w;
                                    let orow = obase + oy * wo;
                                    let src = irow + xlo * stride + kx - pad;
                                    saxpy_strided(
                                        &mut out[orow + xlo..orow + xhi],
                                        &x[src..],
                                        wv,
                                        stride,
                                    );
                                }
                            }
                        }
                    }
                }
            }
            Array::new(&[b, cout, ho, wo], out)
        });

        self.graph.push(
            "conv2d",
            value,
            &[self, weight, bias],
            Box::new(move |args| {
                let x = args.inputs[0].data();
                let wt = args.inputs[1].data();
                let g = args.out_grad.data();
                let dx = args.needs[0].then(|| {
                    let mut dx = vec![0.0; b * cin * h * w];
                    for ib in 0..b {
                        for co in 0..cout {
                            let obase = (ib * cout + co) * ho * wo;
                            for ci in 0..cin {
                                let ibase = (ib * cin + ci) * h * w;
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        let wv = wt[((co * cin + ci) * kh + ky) * kw + kx];
                                        if wv == 0.0 {
                                            continue;
                                        }
                                        let (xlo, xhi) = col_range(kx, pad, stride, w, wo);
                                        if xlo >= xhi {
                                            continue;
                                        }
                                        for oy in 0..ho {
                                            let iy = oy * stride + ky;
                                            if iy < pad || iy - pad >= h {
                                                continue;
                                            }
                                            let irow = ibase + (iy - pad) * w;
                                            let orow = obase + oy * wo;
                                            let dst = irow + xlo * stride + kx - pad;
                                            scatter_strided(
                                                &mut dx[dst..],
                                                &g[orow + xlo..orow + xhi],
                                                wv,
                                                stride,
                                            );
                                        }
                                    }
                                }
                            }
                        }
                    }
                    Array::new(&[b, cin, h, w], dx)
                });
                let dw = args.needs[1].then(|| {
                    let mut dw = vec![0.0; cout * cin * kh * kw];
                    for ib in 0..b {
                        for co in 0..cout {
                            let obase = (ib * cout + co) * ho * wo;
                            for ci in 0..cin {
                                let ibase = (ib * cin + ci) * h * w;
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        let (xlo, xhi) = col_range(kx, pad, stride, w, wo);
                                        if xlo >= xhi {
                                            continue;
                                        }
                                        let mut acc = 0.0;
                                        for oy in 0..ho {
                                            let iy = oy * stride + ky;
                                            if iy < pad || iy - pad >= h {
                                                continue;
                                            }
                                            let irow = ibase + (iy - pad) * w;
                                            let orow = obase + oy * wo;
                                            let src = irow + xlo * stride + kx - pad;
                                            acc += dot_strided(
                                                &x[src..],
                                                &g[orow + xlo..orow + xhi],
                                                stride,
                                            );
                                        }
                                        dw[((co * cin + ci) * kh + ky) * kw + kx] += acc;
                                    }
                                }
                            }
                        }
                    }
                    Array::new(&[cout, cin, kh, kw], dw)
                });
                let db = args.needs[2].then(|| {
                    let mut db = vec![0.0; cout];
                    for ib in 0..b {
                        for co in 0..cout {
                            let obase = (ib * cout + co) * ho * wo;
                            for i in 0..ho * wo {
                                db[co] += g[obase + i];
                            }
                        }
                    }
                    Array::new(&[cout], db)
                });
                vec![dx, dw, db]
            }),
        )
    }

    /// Per-channel 3×3 mean filter with replicate padding (same output size).
    /// Operates on the last two axes of any tensor with ndim ≥ 2.
    pub fn box3(&self) -> Tensor {
        assert!(
            self.ndim() >= 2,
            "box3: need at least 2 dims, got {:?}",
            self.shape
        );
        let nd = self.ndim();
        let (h, w) = (self.shape[nd - 2], self.shape[nd - 1]);
        let planes: usize = self.shape[..nd - 2].iter().product();
        let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
        let value = self.with_value(|a| {
            let x = a.data();
            let mut out = vec![0.0; x.len()];
            for p in 0..planes {
                let base = p * h * w;
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = 0.0;
                        for dy in -1..=1isize {
                            let iy = clamp(y as isize + dy, h);
                            for dx in -1..=1isize {
                                let ix = clamp(xx as isize + dx, w);
                                acc += x[base + iy * w + ix];
                            }
                        }
                        out[base + y * w + xx] = acc / 9.0;
                    }
                }
            }
            Array::new(a.shape(), out)
        });
        self.graph.push(
            "box3",
            value,
            &[self],
            Box::new(move |args| {
                let g = args.out_grad.data();
                let mut din = vec![0.0; g.len()];
                for p in 0..planes {
                    let base = p * h * w;
                    for y in 0..h {
                        for xx in 0..w {
                            let gv = g[base + y * w + xx] / 9.0;
                            for dy in -1..=1isize {
                                let iy = clamp(y as isize + dy, h);
                                for dx in -1..=1isize {
                                    let ix = clamp(xx as isize + dx, w);
                                    din[base + iy * w + ix] += gv;
                                }
                            }
                        }
                    }
                }
                vec![Some(Array::new(args.inputs[0].shape(), din))]
            }),
        )
    }

    /// Bilinear ×2 upsampling of the last two axes (half-pixel centers,
    /// edge-clamped). [.., H, W] → [.., 2H, 2W].
    pub fn upsample2(&self) -> Tensor {
        assert!(
            self.ndim() >= 2,
            "upsample2: need at least 2 dims, got {:?}",
            self.shape
        );
        let nd = self.ndim();
        let (h, w) = (self.shape[nd - 2], self.shape[nd - 1]);
        let planes: usize = self.shape[..nd - 2].iter().product();
        let mut out_shape = self.shape.clone();
        out_shape[nd - 2] = 2 * h;
        out_shape[nd - 1] = 2 * w;
        // taps[o] = (i0, w0, i1, w1): source sample at (o + 0.5)/2 − 0.5
        let taps = |n: usize| -> Vec<(usize, f64, usize, f64)> {
            (0..2 * n)
                .map(|o| {
                    let src = (o as f64 + 0.5) / 2.0 - 0.5;
                    let sc = src.clamp(0.0, (n - 1) as f64);
                    let i0 = sc.floor() as usize;
                    let i1 = (i0 + 1).min(n - 1);
                    let t = sc - i0 as f64;
                    (i0, 1.0 - t, i1, t)
                })
                .collect()
        };
        let ty = taps(h);
        let tx = taps(w);
        let value = self.with_value(|a| {
            let x = a.data();
            let mut out = vec![0.0; planes * 4 * h * w];
            for p in 0..planes {
                let ibase = p * h * w;
                let obase = p * 4 * h * w;
                for (oy, &(y0, wy0, y1, wy1)) in ty.iter().enumerate() {
                    for (ox, &(x0, wx0, x1, wx1)) in tx.iter().enumerate() {
                        out[obase + oy * 2 * w + ox] = wy0 * wx0 * x[ibase + y0 * w + x0]
                            + wy0 * wx1 * x[ibase + y0 * w + x1]
                            + wy1 * wx0 * x[ibase + y1 * w + x0]
                            + wy1 * wx1 * x[ibase + y1 * w + x1];
                    }
                }
            }
            Array::new(&out_shape, out)
        });
        let (ty2, tx2) = (ty, tx);
        self.graph.push(
            "upsample2",
            value,
            &[self],
            Box::new(move |args| {
                let g = args.out_grad.data();
                let mut din = vec![0.0; args.inputs[0].len()];
                for p in 0..planes {
                    let ibase = p * h * w;
                    let obase = p * 4 * h * w;
                    for (oy, &(y0, wy0, y1, wy1)) in ty2.iter().enumerate() {
                        for (ox, &(x0, wx0, x1, wx1)) in tx2.iter().enumerate() {
                            let gv = g[obase + oy * 2 * w + ox];
                            din[ibase + y0 * w + x0] += wy0 * wx0 * gv;
                            din[ibase + y0 * w + x1] += wy0 * wx1 * gv;
                            din[ibase + y1 * w + x0] += wy1 * wx0 * gv;
                            din[ibase + y1 * w + x1] += wy1 * wx1 * gv;
                        }
                    }
                }
                vec![Some(Array::new(args.inputs[0].shape(), din))]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::Graph;
    use crate::array::Array;

    #[test]
    fn conv2d_identity_kernel_preserves_input() {
        let g = Graph::new();
        let x = g.constant(Array::from_fn(&[1, 1, 4, 5], |i| i as f64 * 0.3 - 2.0));
        let mut k = vec![0.0; 9];
        k[4] = 1.0; // center of 3×3
        let w = g.constant(Array::new(&[1, 1, 3, 3], k));
        let b = g.constant(Array::zeros(&[1]));
        let y = x.conv2d(&w, &b, 1, 1);
        assert_eq!(y.value(), x.value());
    }

    #[test]
    fn conv2d_stride2_shape_and_sum_kernel() {
        let g = Graph::new();
        let x = g.constant(Array::full(&[2, 3, 8, 10], 1.0));
        let w = g.constant(Array::full(&[4, 3, 3, 3], 1.0));
        let b = g.constant(Array::zeros(&[4]));
        let y = x.conv2d(&w, &b, 2, 1);
        assert_eq!(y.shape(), &[2, 4, 4, 5]);
        // interior output = 27 ones summed
        assert_eq!(y.value().at4(0, 0, 1, 2), 27.0);
    }

    #[test]
    fn conv2d_bias_gradient_counts_output_pixels() {
        let g = Graph::new();
        let x = g.constant(Array::full(&[1, 1, 4, 4], 2.0));
        let w = g.leaf(Array::zeros(&[1, 1, 1, 1]), true);
        let b = g.leaf(Array::zeros(&[1]), true);
        x.conv2d(&w, &b, 1, 0).sum().backward();
        assert_eq!(b.grad().unwrap().data(), &[16.0]);
        assert_eq!(w.grad().unwrap().data(), &[32.0]);
    }

    #[test]
    fn box3_constant_invariant_and_impulse() {
        let g = Graph::new();
        let c = g.constant(Array::full(&[1, 5, 5], 0.7));
        let y = c.box3().value();
        for v in y.data() {
            assert!((v - 0.7).abs() < 1e-15);
        }
        let mut imp = Array::zeros(&[1, 5, 5]);
        imp.data_mut()[12] = 9.0; // center
        let y = g.constant(imp).box3().value();
        assert_eq!(y.at3(0, 2, 2), 1.0);
        assert_eq!(y.at3(0, 1, 1), 1.0);
        assert_eq!(y.at3(0, 0, 0), 0.0);
    }

    #[test]
    fn upsample2_doubles_shape_and_preserves_constants() {
        let g = Graph::new();
        let x = g.constant(Array::full(&[1, 2, 3, 4], 1.25));
        let y = x.upsample2();
        assert_eq!(y.shape(), &[1, 2, 6, 8]);
        for v in y.value().data() {
            assert!((v - 1.25).abs() < 1e-15);
        }
    }

    #[test]
    fn upsample2_gradient_conserves_mass() {
        let g = Graph::new();
        let x = g.leaf(Array::from_fn(&[1, 1, 3, 3], |i| i as f64), true);
        x.upsample2().sum().backward();
        let gr = x.grad().unwrap();
        assert!((gr.sum() - 36.0).abs() < 1e-12); // 6×6 output pixels
    }
}
