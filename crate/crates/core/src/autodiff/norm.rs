//! Normalization and channel-gating primitives on [B,C,H,W] tensors.

use super::Tensor;
use crate::array::Array;

fn assert_4d(t: &Tensor, op: &'static str) -> (usize, usize, usize, usize) {
    assert!(t.ndim() == 4, "{op}: expected [B,C,H,W], got {:?}", t.shape());
    let s = t.shape();
    (s[0], s[1], s[2], s[3])
}

/// Shared whitening backward: gin = s·(g − mean(g) − x̂·mean(g·x̂)) over each
/// statistics group, where s = 1/√(var+eps) and x̂ is the normalized output.
/// `groups` yields the flat element indices of one statistics group at a time.
fn whiten_backward(
    xhat: &[f64],
    g: &[f64],
    inv_std: &[f64],
    group_of: impl Fn(usize) -> Vec<usize>,
    n_groups: usize,
) -> Vec<f64> {
    let mut din = vec![0.0; g.len()];
    for gi in 0..n_groups {
        let idx = group_of(gi);
        let n = idx.len() as f64;
        let mut mg = 0.0;
        let mut mgx = 0.0;
        for &i in &idx {
            mg += g[i];
            mgx += g[i] * xhat[i];
        }
        mg /= n;
        mgx /= n;
        let s = inv_std[gi];
        for &i in &idx {
            din[i] = s * (g[i] - mg - xhat[i] * mgx);
        }
    }
    din
}

impl Tensor {
    /// Instance normalization: whitens each (sample, channel) plane over H×W
    /// with population variance. No affine — pair with `channel_affine`.
    pub fn instance_norm(&self, eps: f64) -> Tensor {
        assert!(eps > 0.0, "instance_norm: eps must be > 0");
        let (b, c, h, w) = assert_4d(self, "instance_norm");
        let plane = h * w;
        let mut inv_std = vec![0.0; b * c];
        let value = self.with_value(|a| {
            let x = a.data();
            let mut out = vec![0.0; x.len()];
            for p in 0..b * c {
                let sl = &x[p * plane..(p + 1) * plane];
                let mean = sl.iter().sum::<f64>() / plane as f64;
                let var = sl.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
                let s = 1.0 / (var + eps).sqrt();
                inv_std[p] = s;
                for (o, v) in out[p * plane..(p + 1) * plane].iter_mut().zip(sl) {
                    *o = (v - mean) * s;
                }
            }
            Array::new(a.shape(), out)
        });
        self.graph.push(
            "instance_norm",
            value,
            &[self],
            Box::new(move |args| {
                let din = whiten_backward(
                    args.out_value.data(),
                    args.out_grad.data(),
                    &inv_std,
                    |p| (p * plane..(p + 1) * plane).collect(),
                    b * c,
                );
                vec![Some(Array::new(args.inputs[0].shape(), din))]
            }),
        )
    }

    /// Batch normalization with current-batch statistics per channel over
    /// (B,H,W). Requires B ≥ 2: single-sample statistics are degenerate.
    pub fn batch_norm(&self, eps: f64) -> Tensor {
        assert!(eps > 0.0, "batch_norm: eps must be > 0");
        let (b, c, h, w) = assert_4d(self, "batch_norm");
        assert!(b >= 2, "batch_norm: batch size {b} < 2 gives degenerate statistics");
        let plane = h * w;
        let group = |ci: usize| -> Vec<usize> {
            let mut idx = Vec::with_capacity(b * plane);
            for ib in 0..b {
                let base = (ib * c + ci) * plane;
                idx.extend(base..base + plane);
            }
            idx
        };
        let mut inv_std = vec![0.0; c];
        let value = self.with_value(|a| {
            let x = a.data();
            let mut out = vec![0.0; x.len()];
            for ci in 0..c {
                let idx = group(ci);
                let n = idx.len() as f64;
                let mean = idx.iter().map(|&i| x[i]).sum::<f64>() / n;
                let var = idx.iter().map(|&i| (x[i] - mean) * (x[i] - mean)).sum::<f64>() / n;
                let s = 1.0 / (var + eps).sqrt();
                inv_std[ci] = s;
                for &i in &idx {
                    out[i] = (x[i] - mean) * s;
                }
            }
            Array::new(a.shape(), out)
        });
        self.graph.push(
            "batch_norm",
            value,
            &[self],
            Box::new(move |args| {
                let groups = |ci: usize| {
                    let mut idx = Vec::with_capacity(b * plane);
                    for ib in 0..b {
                        let base = (ib * c + ci) * plane;
                        idx.extend(base..base + plane);
                    }
                    idx
                };
                let din = whiten_backward(
                    args.out_value.data(),
                    args.out_grad.data(),
                    &inv_std,
                    groups,
                    c,
                );
                vec![Some(Array::new(args.inputs[0].shape(), din))]
            }),
        )
    }

    /// Per-channel affine y = γ_c·x + β_c with learned [C] parameters.
    pub fn channel_affine(&self, gamma: &Tensor, beta: &Tensor) -> Tensor {
        let (b, c, h, w) = assert_4d(self, "channel_affine");
        assert!(
            gamma.shape() == [c] && beta.shape() == [c],
            "channel_affine: gamma {:?} beta {:?} for {c} channels",
            gamma.shape(),
            beta.shape()
        );
        let plane = h * w;
        let value = self.graph.with_values(&[self.id, gamma.id, beta.id], |v| {
            let (x, ga, be) = (v[0].data(), v[1].data(), v[2].data());
            let mut out = vec![0.0; x.len()];
            for ib in 0..b {
                for ci in 0..c {
                    let base = (ib * c + ci) * plane;
                    for i in 0..plane {
                        out[base + i] = ga[ci] * x[base + i] + be[ci];
                    }
                }
            }
            Array::new(v[0].shape(), out)
        });
        self.graph.push(
            "channel_affine",
            value,
            &[self, gamma, beta],
            Box::new(move |args| {
                let x = args.inputs[0].data();
                let ga = args.inputs[1].data();
                let g = args.out_grad.data();
                let dx = args.needs[0].then(|| {
                    let mut dx = vec![0.0; x.len()];
                    for ib in 0..b {
                        for ci in 0..c {
                            let base = (ib * c + ci) * plane;
                            for i in 0..plane {
                                dx[base + i] = ga[ci] * g[base + i];
                            }
                        }
                    }
                    Array::new(args.inputs[0].shape(), dx)
                });
                let dg = args.needs[1].then(|| {
                    let mut dg = vec![0.0; c];
                    for ib in 0..b {
                        for ci in 0..c {
                            let base = (ib * c + ci) * plane;
                            for i in 0..plane {
                                dg[ci] += g[base + i] * x[base + i];
                            }
                        }
                    }
                    Array::new(&[c], dg)
                });
                let db = args.needs[2].then(|| {
                    let mut db = vec![0.0; c];
                    for ib in 0..b {
                        for ci in 0..c {
                            let base = (ib * c + ci) * plane;
                            for i in 0..plane {
                                db[ci] += g[base + i];
                            }
                        }
                    }
                    Array::new(&[c], db)
                });
                vec![dx, dg, db]
            }),
        )
    }

    /// Multiplies each (sample, channel) plane by a gate from a [B,C] tensor
    /// (squeeze-excitation application step).
    pub fn channel_scale(&self, gates: &Tensor) -> Tensor {
        let (b, c, h, w) = assert_4d(self, "channel_scale");
        assert!(
            gates.shape() == [b, c],
            "channel_scale: gates {:?} for input {:?}",
            gates.shape(),
            self.shape()
        );
        let plane = h * w;
        let value = self.with_value2(gates, |x, s| {
            let mut out = vec![0.0; x.len()];
            for p in 0..b * c {
                let sv = s.data()[p];
                for i in 0..plane {
                    out[p * plane + i] = sv * x.data()[p * plane + i];
                }
            }
            Array::new(x.shape(), out)
        });
        self.graph.push(
            "channel_scale",
            value,
            &[self, gates],
            Box::new(move |args| {
                let x = args.inputs[0].data();
                let s = args.inputs[1].data();
                let g = args.out_grad.data();
                let dx = args.needs[0].then(|| {
                    let mut dx = vec![0.0; x.len()];
                    for p in 0..b * c {
                        for i in 0..plane {
                            dx[p * plane + i] = s[p] * g[p * plane + i];
                        }
                    }
                    Array::new(args.inputs[0].shape(), dx)
                });
                let ds = args.needs[1].then(|| {
                    let mut ds = vec![0.0; b * c];
                    for p in 0..b * c {
                        for i in 0..plane {
                            ds[p] += g[p * plane + i] * x[p * plane + i];
                        }
                    }
                    Array::new(&[b, c], ds)
                });
                vec![dx, ds]
            }),
        )
    }

    /// Global average pool: [B,C,H,W] → [B,C].
    pub fn global_avg_pool(&self) -> Tensor {
        let (b, c, h, w) = assert_4d(self, "global_avg_pool");
        let plane = h * w;
        let value = self.with_value(|a| {
            let x = a.data();
            let out = (0..b * c)
                .map(|p| x[p * plane..(p + 1) * plane].iter().sum::<f64>() / plane as f64)
                .collect();
            Array::new(&[b, c], out)
        });
        self.graph.push(
            "global_avg_pool",
            value,
            &[self],
            Box::new(move |args| {
                let g = args.out_grad.data();
                let mut din = vec![0.0; args.inputs[0].len()];
                for p in 0..b * c {
                    let gv = g[p] / plane as f64;
                    for i in 0..plane {
                        din[p * plane + i] = gv;
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
    fn instance_norm_constant_plane_is_zero() {
        let g = Graph::new();
        // exactly representable constant → exactly zero output
        let x = g.constant(Array::full(&[1, 1, 4, 4], 3.5));
        let y = x.instance_norm(1e-5).value();
        for v in y.data() {
            assert_eq!(*v, 0.0);
        }
        // non-representable constant → zero up to rounding of the mean
        let x = g.constant(Array::full(&[1, 1, 4, 4], 3.7));
        let y = x.instance_norm(1e-5).value();
        for v in y.data() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn instance_norm_whitens_each_plane() {
        let g = Graph::new();
        let x = g.constant(Array::from_fn(&[2, 3, 4, 4], |i| (i as f64 * 0.713).sin()));
        let y = x.instance_norm(1e-8).value();
        for p in 0..6 {
            let sl = &y.data()[p * 16..(p + 1) * 16];
            let mean: f64 = sl.iter().sum::<f64>() / 16.0;
            let var: f64 = sl.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    #[should_panic(expected = "batch_norm: batch size 1")]
    fn batch_norm_rejects_single_sample() {
        let g = Graph::new();
        g.constant(Array::zeros(&[1, 2, 4, 4])).batch_norm(1e-5);
    }

    #[test]
    fn batch_norm_statistics_pool_over_batch() {
        let g = Graph::new();
        // two samples with different constants: per-channel mean is their average
        let mut x = Array::zeros(&[2, 1, 2, 2]);
        x.data_mut()[..4].fill(1.0);
        x.data_mut()[4..].fill(3.0);
        let y = g.constant(x).batch_norm(1e-12).value();
        for v in &y.data()[..4] {
            assert!((v + 1.0).abs() < 1e-5);
        }
        for v in &y.data()[4..] {
            assert!((v - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn channel_affine_applies_per_channel() {
        let g = Graph::new();
        let x = g.constant(Array::full(&[1, 2, 2, 2], 1.0));
        let ga = g.constant(Array::new(&[2], vec![2.0, -1.0]));
        let be = g.constant(Array::new(&[2], vec![0.5, 0.0]));
        let y = x.channel_affine(&ga, &be).value();
        assert_eq!(y.at4(0, 0, 1, 1), 2.5);
        assert_eq!(y.at4(0, 1, 0, 0), -1.0);
    }

    #[test]
    fn global_avg_pool_means_planes() {
        let g = Graph::new();
        let x = g.constant(Array::from_fn(&[1, 2, 2, 2], |i| i as f64));
        let y = x.global_avg_pool().value();
        assert_eq!(y.data(), &[1.5, 5.5]);
    }

    #[test]
    fn channel_scale_gates_planes() {
        let g = Graph::new();
        let x = g.constant(Array::full(&[2, 2, 1, 1], 1.0));
        let s = g.constant(Array::new(&[2, 2], vec![0.0, 1.0, 2.0, 3.0]));
        let y = x.channel_scale(&s).value();
        assert_eq!(y.data(), &[0.0, 1.0, 2.0, 3.0]);
    }
}
