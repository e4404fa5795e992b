//! Differentiable sampling: horizontal image warping, correlation-volume
//! lookup around a disparity estimate, and the correlation cost volume.

use super::Tensor;
use crate::array::Array;

/// Bilinear taps for a horizontal sample at `x - d`, clamped to [0, w-1].
/// Returns (x0, x1, t): value = (1-t)·I[x0] + t·I[x1]. The coordinate
/// derivative is zero where the clamp is active.
#[inline]
fn htaps(xs: f64, w: usize) -> (usize, usize, f64, bool) {
    let wm = (w - 1) as f64;
    let inside = (0.0..=wm).contains(&xs);
    let xc = xs.clamp(0.0, wm);
    let x0 = (xc.floor() as usize).min(w - 1);
    let x1 = (x0 + 1).min(w - 1);
    (x0, x1, xc - x0 as f64, inside)
}

impl Tensor {
    /// Samples image [C,H,W] at horizontal coordinate x − d(y,x) with bilinear
    /// weights; out-of-range coordinates are clamped (validity is reported
    /// separately by `hsample_validity`). Differentiable in both inputs; the
    /// disparity gradient vanishes on clamped pixels.
    pub fn hsample(&self, disp: &Tensor) -> Tensor {
        assert!(
            self.ndim() == 3 && disp.ndim() == 2,
            "hsample: expected image [C,H,W] and disparity [H,W], got {:?} {:?}",
            self.shape,
            disp.shape()
        );
        let (c, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        assert!(
            disp.shape() == [h, w],
            "hsample: disparity {:?} for image {:?}",
            disp.shape(),
            self.shape
        );
        let value = self.with_value2(disp, |img, d| {
            let (x, dd) = (img.data(), d.data());
            let mut out = vec![0.0; x.len()];
            for y in 0..h {
                for xx in 0..w {
                    let (x0, x1, t, _) = htaps(xx as f64 - dd[y * w + xx], w);
                    for ci in 0..c {
                        let row = (ci * h + y) * w;
                        out[row + xx] = (1.0 - t) * x[row + x0] + t * x[row + x1];
                    }
                }
            }
            Array::new(&[c, h, w], out)
        });
        self.graph.push(
            "hsample",
            value,
            &[self, disp],
            Box::new(move |args| {
                let x = args.inputs[0].data();
                let dd = args.inputs[1].data();
                let g = args.out_grad.data();
                let mut dimg = args.needs[0].then(|| vec![0.0; x.len()]);
                let mut ddisp = args.needs[1].then(|| vec![0.0; h * w]);
                for y in 0..h {
                    for xx in 0..w {
                        let (x0, x1, t, inside) = htaps(xx as f64 - dd[y * w + xx], w);
                        for ci in 0..c {
                            let row = (ci * h + y) * w;
                            let gv = g[row + xx];
                            if let Some(di) = dimg.as_mut() {
                                di[row + x0] += (1.0 - t) * gv;
                                di[row + x1] += t * gv;
                            }
                            if inside {
                                if let Some(dv) = ddisp.as_mut() {
                                    // ∂out/∂xs = I[x1] − I[x0];  ∂xs/∂d = −1
                                    dv[y * w + xx] -= gv * (x[row + x1] - x[row + x0]);
                                }
                            }
                        }
                    }
                }
                vec![
                    dimg.map(|v| Array::new(&[c, h, w], v)),
                    ddisp.map(|v| Array::new(&[h, w], v)),
                ]
            }),
        )
    }

    /// Gathers a (2r+1)-tap bilinear window from a cost volume [B,D,H,W]
    /// along the disparity axis, centered on disp [B,H,W]: output
    /// [B,2r+1,H,W] where slab k holds volume sampled at disp + (k − r).
    /// Positions are clamped to [0, D−1]; clamped taps carry no disparity
    /// gradient.
    pub fn vol_sample(&self, disp: &Tensor, radius: usize) -> Tensor {
        assert!(
            self.ndim() == 4 && disp.ndim() == 3,
            "vol_sample: expected volume [B,D,H,W] and disparity [B,H,W], got {:?} {:?}",
            self.shape,
            disp.shape()
        );
        let (b, d, h, w) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        assert!(
            disp.shape() == [b, h, w],
            "vol_sample: disparity {:?} for volume {:?}",
            disp.shape(),
            self.shape
        );
        assert!(d >= 1, "vol_sample: empty disparity axis");
        let k = 2 * radius + 1;
        let plane = h * w;
        let dm = (d - 1) as f64;
        let value = self.with_value2(disp, |vol, dt| {
            let (v, dd) = (vol.data(), dt.data());
            let mut out = vec![0.0; b * k * plane];
            for ib in 0..b {
                for kk in 0..k {
                    let off = kk as f64 - radius as f64;
                    for i in 0..plane {
                        let pos = (dd[ib * plane + i] + off).clamp(0.0, dm);
                        let i0 = (pos.floor() as usize).min(d - 1);
                        let i1 = (i0 + 1).min(d - 1);
                        let t = pos - i0 as f64;
                        let base = (ib * d) * plane + i;
                        out[(ib * k + kk) * plane + i] = (1.0 - t) * v[base + i0 * plane]
                            + t * v[base + i1 * plane];
                    }
                }
            }
            Array::new(&[b, k, h, w], out)
        });
        self.graph.push(
            "vol_sample",
            value,
            &[self, disp],
            Box::new(move |args| {
                let v = args.inputs[0].data();
                let dd = args.inputs[1].data();
                let g = args.out_grad.data();
                let mut dvol = args.needs[0].then(|| vec![0.0; v.len()]);
                let mut ddisp = args.needs[1].then(|| vec![0.0; dd.len()]);
                for ib in 0..b {
                    for kk in 0..k {
                        let off = kk as f64 - radius as f64;
                        for i in 0..plane {
                            let raw = dd[ib * plane + i] + off;
                            let pos = raw.clamp(0.0, dm);
                            let i0 = (pos.floor() as usize).min(d - 1);
                            let i1 = (i0 + 1).min(d - 1);
                            let t = pos - i0 as f64;
                            let gv = g[(ib * k + kk) * plane + i];
                            let base = (ib * d) * plane + i;
                            if let Some(dv) = dvol.as_mut() {
                                dv[base + i0 * plane] += (1.0 - t) * gv;
                                dv[base + i1 * plane] += t * gv;
                            }
                            if raw > 0.0 && raw < dm {
                                if let Some(dp) = ddisp.as_mut() {
                                    dp[ib * plane + i] +=
                                        gv * (v[base + i1 * plane] - v[base + i0 * plane]);
                                }
                            }
                        }
                    }
                }
                vec![
                    dvol.map(|x| Array::new(&[b, d, h, w], x)),
                    ddisp.map(|x| Array::new(&[b, h, w], x)),
                ]
            }),
        )
    }
}

/// Validity of a horizontal sample at x − d: 1 where the coordinate lies in
/// [0, W−1]. Pure companion to `hsample`.
pub fn hsample_validity(disp: &Array, w: usize) -> Array {
    let shape = disp.shape().to_vec();
    assert!(shape.len() == 2, "hsample_validity: expected [H,W], got {shape:?}");
    let wd = shape[1];
    Array::from_fn(&shape, |i| {
        let xs = (i % wd) as f64 - disp.data()[i];
        if (0.0..=(w - 1) as f64).contains(&xs) {
            1.0
        } else {
            0.0
        }
    })
}

/// Correlation cost volume: out[b,d,y,x] = <F_L(b,·,y,x), F_R(b,·,y,x−d)>/√C
/// for d in 0..d_bins, with out-of-bounds (x−d < 0) entries set to a large
/// negative sentinel excluding them from any subsequent softmax mass.
pub const COST_VOLUME_SENTINEL: f64 = -1e4;

pub fn cost_volume_raw(fl: &Tensor, fr: &Tensor, d_bins: usize) -> Tensor {
    assert!(
        fl.ndim() == 4 && fl.shape() == fr.shape(),
        "cost_volume: feature shapes {:?} vs {:?}",
        fl.shape(),
        fr.shape()
    );
    let s = fl.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    assert!(
        d_bins >= 1 && d_bins <= w,
        "cost_volume: {d_bins} disparity bins for width {w}"
    );
    let scale = 1.0 / (c as f64).sqrt();
    let plane = h * w;
    let value = fl.with_value2(fr, |l, r| {
        let (lv, rv) = (l.data(), r.data());
        let mut out = vec![COST_VOLUME_SENTINEL; b * d_bins * plane];
        for ib in 0..b {
            for dd in 0..d_bins {
                for y in 0..h {
                    for x in dd..w {
                        let mut acc = 0.0;
                        for ci in 0..c {
                            let row = ((ib * c + ci) * h + y) * w;
                            acc += lv[row + x] * rv[row + x - dd];
                        }
                        out[((ib * d_bins + dd) * h + y) * w + x] = acc * scale;
                    }
                }
            }
        }
        Array::new(&[b, d_bins, h, w], out)
    });
    fl.graph().push(
        "cost_volume",
        value,
        &[fl, fr],
        Box::new(move |args| {
            let lv = args.inputs[0].data();
            let rv = args.inputs[1].data();
            let g = args.out_grad.data();
            let mut dl = args.needs[0].then(|| vec![0.0; lv.len()]);
            let mut dr = args.needs[1].then(|| vec![0.0; rv.len()]);
            for ib in 0..b {
                for dd in 0..d_bins {
                    for y in 0..h {
                        for x in dd..w {
                            let gv = g[((ib * d_bins + dd) * h + y) * w + x] * scale;
                            if gv == 0.0 {
                                continue;
                            }
                            for ci in 0..c {
                                let row = ((ib * c + ci) * h + y) * w;
                                if let Some(d) = dl.as_mut() {
                                    d[row + x] += gv * rv[row + x - dd];
                                }
                                if let Some(d) = dr.as_mut() {
                                    d[row + x - dd] += gv * lv[row + x];
                                }
                            }
                        }
                    }
                }
            }
            let shape = args.inputs[0].shape();
            vec![
                dl.map(|v| Array::new(shape, v)),
                dr.map(|v| Array::new(shape, v)),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::super::Graph;
    use super::{cost_volume_raw, hsample_validity, COST_VOLUME_SENTINEL};
    use crate::array::Array;

    #[test]
    fn hsample_zero_disparity_is_identity() {
        let g = Graph::new();
        let img = g.constant(Array::from_fn(&[2, 3, 4], |i| i as f64 * 0.1));
        let d = g.constant(Array::zeros(&[3, 4]));
        assert_eq!(img.hsample(&d).value(), img.value());
        let v = hsample_validity(&Array::zeros(&[3, 4]), 4);
        assert!(v.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn hsample_unit_shift_clamps_left_edge() {
        let g = Graph::new();
        let img = g.constant(Array::new(&[1, 1, 5], vec![0.0, 1.0, 2.0, 3.0, 4.0]));
        let d = g.constant(Array::full(&[1, 5], 1.0));
        assert_eq!(img.hsample(&d).value().data(), &[0.0, 0.0, 1.0, 2.0, 3.0]);
        let v = hsample_validity(&Array::full(&[1, 5], 1.0), 5);
        assert_eq!(v.data(), &[0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn hsample_disparity_gradient_is_negative_image_slope() {
        let g = Graph::new();
        // image row is a ramp of slope 2 → ∂out/∂d = −2 at interior samples
        let img = g.constant(Array::from_fn(&[1, 1, 6], |i| 2.0 * i as f64));
        let d = g.leaf(Array::full(&[1, 6], 1.5), true);
        img.hsample(&d).sum().backward();
        let gd = d.grad().unwrap();
        // x=0,1 sample at −1.5,−0.5 → clamped, zero grad; interior −2
        assert_eq!(gd.data()[0], 0.0);
        assert_eq!(gd.data()[1], 0.0);
        for &v in &gd.data()[2..] {
            assert!((v + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_volume_sentinel_and_self_match() {
        let g = Graph::new();
        let f = g.constant(Array::from_fn(&[1, 4, 2, 3], |i| ((i * 37) % 11) as f64 * 0.1));
        let vol = cost_volume_raw(&f, &f, 3);
        let v = vol.value();
        // d=1 column 0 and d=2 columns 0,1 are out of bounds
        assert_eq!(v.at4(0, 1, 0, 0), COST_VOLUME_SENTINEL);
        assert_eq!(v.at4(0, 2, 1, 1), COST_VOLUME_SENTINEL);
        // d=0 plane: squared norm / √C, must beat other shifts on random data
        for y in 0..2 {
            for x in 1..3 {
                assert!(v.at4(0, 0, y, x) >= v.at4(0, 1, y, x));
            }
        }
    }

    #[test]
    fn vol_sample_reads_integer_positions_exactly() {
        let g = Graph::new();
        // volume value = disparity index, so sampling at integer d returns d
        let vol = g.constant(Array::from_fn(&[1, 5, 1, 2], |i| (i / 2) as f64));
        let d = g.constant(Array::new(&[1, 1, 2], vec![2.0, 3.0]));
        let out = vol.vol_sample(&d, 1).value();
        assert_eq!(out.shape(), &[1, 3, 1, 2]);
        assert_eq!(out.data(), &[1.0, 2.0, 2.0, 3.0, 3.0, 4.0]);
    }

    #[test]
    fn vol_sample_disparity_gradient_reads_volume_slope() {
        let g = Graph::new();
        let vol = g.constant(Array::from_fn(&[1, 4, 1, 1], |i| 3.0 * i as f64));
        let d = g.leaf(Array::full(&[1, 1, 1], 1.5), true);
        vol.vol_sample(&d, 0).sum().backward();
        assert!((d.grad().unwrap().item() - 3.0).abs() < 1e-12);
    }
}
