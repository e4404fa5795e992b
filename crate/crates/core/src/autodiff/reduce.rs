//! Reductions and axis-wise transforms. All accumulate in fixed index order.

use super::Tensor;
use crate::array::Array;

/// Splits a shape at `axis` into (outer, len, inner) loop extents.
fn axis_extents(shape: &[usize], axis: usize, op: &'static str) -> (usize, usize, usize) {
    assert!(
        axis < shape.len(),
        "{op}: axis {axis} out of range for shape {shape:?}"
    );
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn removed_axis_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    s
}

impl Tensor {
    /// Sum of all elements to a scalar.
    pub fn sum(&self) -> Tensor {
        let value = self.with_value(|a| Array::scalar(a.sum()));
        self.graph.push(
            "sum",
            value,
            &[self],
            Box::new(|args| {
                let g = args.out_grad.item();
                vec![Some(Array::full(args.inputs[0].shape(), g))]
            }),
        )
    }

    /// Mean of all elements to a scalar.
    pub fn mean(&self) -> Tensor {
        assert!(self.len() > 0, "mean: empty tensor");
        let n = self.len() as f64;
        let value = self.with_value(|a| Array::scalar(a.sum() / n));
        self.graph.push(
            "mean",
            value,
            &[self],
            Box::new(move |args| {
                let g = args.out_grad.item() / n;
                vec![Some(Array::full(args.inputs[0].shape(), g))]
            }),
        )
    }

    pub fn sum_axis(&self, axis: usize) -> Tensor {
        self.reduce_axis(axis, "sum_axis", 1.0)
    }

    pub fn mean_axis(&self, axis: usize) -> Tensor {
        let (_, len, _) = axis_extents(&self.shape, axis, "mean_axis");
        assert!(len > 0, "mean_axis: empty axis");
        self.reduce_axis(axis, "mean_axis", 1.0 / len as f64)
    }

    fn reduce_axis(&self, axis: usize, op: &'static str, scale: f64) -> Tensor {
        let (outer, len, inner) = axis_extents(&self.shape, axis, op);
        let out_shape = removed_axis_shape(&self.shape, axis);
        let value = self.with_value(|a| {
            let x = a.data();
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for k in 0..len {
                    let base = (o * len + k) * inner;
                    let dst = o * inner;
                    for i in 0..inner {
                        out[dst + i] += x[base + i];
                    }
                }
            }
            if scale != 1.0 {
                for v in &mut out {
                    *v *= scale;
                }
            }
            Array::new(&out_shape, out)
        });
        self.graph.push(
            op,
            value,
            &[self],
            Box::new(move |args| {
                let g = args.out_grad.data();
                let shape = args.inputs[0].shape();
                let mut din = vec![0.0; args.inputs[0].len()];
                for o in 0..outer {
                    for k in 0..len {
                        let base = (o * len + k) * inner;
                        let src = o * inner;
                        for i in 0..inner {
                            din[base + i] = g[src + i] * scale;
                        }
                    }
                }
                vec![Some(Array::new(shape, din))]
            }),
        )
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax_axis(&self, axis: usize) -> Tensor {
        let (outer, len, inner) = axis_extents(&self.shape, axis, "softmax_axis");
        let value = self.with_value(|a| {
            let x = a.data();
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * len + k) * inner + i;
                    let mut m = f64::NEG_INFINITY;
                    for k in 0..len {
                        m = m.max(x[at(k)]);
                    }
                    let mut z = 0.0;
                    for k in 0..len {
                        let e = (x[at(k)] - m).exp();
                        out[at(k)] = e;
                        z += e;
                    }
                    for k in 0..len {
                        out[at(k)] /= z;
                    }
                }
            }
            Array::new(a.shape(), out)
        });
        self.graph.push(
            "softmax_axis",
            value,
            &[self],
            Box::new(move |args| {
                let y = args.out_value.data();
                let g = args.out_grad.data();
                let mut din = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + i;
                        let mut dot = 0.0;
                        for k in 0..len {
                            dot += g[at(k)] * y[at(k)];
                        }
                        for k in 0..len {
                            din[at(k)] = y[at(k)] * (g[at(k)] - dot);
                        }
                    }
                }
                vec![Some(Array::new(args.inputs[0].shape(), din))]
            }),
        )
    }

    /// Weighted sum along `axis` with fixed per-slice weights
    /// (soft-argmin readout uses the candidate disparity values as weights).
    pub fn weighted_sum_axis(&self, axis: usize, weights: &[f64]) -> Tensor {
        let (outer, len, inner) = axis_extents(&self.shape, axis, "weighted_sum_axis");
        assert!(
            weights.len() == len,
            "weighted_sum_axis: {} weights for axis length {len}",
            weights.len()
        );
        let out_shape = removed_axis_shape(&self.shape, axis);
        let w = weights.to_vec();
        let value = self.with_value(|a| {
            let x = a.data();
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for k in 0..len {
                    let wk = w[k];
                    let base = (o * len + k) * inner;
                    let dst = o * inner;
                    for i in 0..inner {
                        out[dst + i] += wk * x[base + i];
                    }
                }
            }
            Array::new(&out_shape, out)
        });
        let w = weights.to_vec();
        self.graph.push(
            "weighted_sum_axis",
            value,
            &[self],
            Box::new(move |args| {
                let g = args.out_grad.data();
                let mut din = vec![0.0; args.inputs[0].len()];
                for o in 0..outer {
                    for k in 0..len {
                        let wk = w[k];
                        let base = (o * len + k) * inner;
                        let src = o * inner;
                        for i in 0..inner {
                            din[base + i] = wk * g[src + i];
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
    fn sum_relu_gradient_selects_positive_entries() {
        let g = Graph::new();
        let x = g.leaf(Array::new(&[2], vec![-1.0, 2.0]), true);
        x.relu().sum().backward();
        assert_eq!(x.grad().unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn mean_axis_matches_manual() {
        let g = Graph::new();
        let x = g.constant(Array::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let m = x.mean_axis(1);
        assert_eq!(m.value().data(), &[2.0, 5.0]);
        let m0 = x.mean_axis(0);
        assert_eq!(m0.value().data(), &[2.5, 3.5, 4.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_graded() {
        let g = Graph::new();
        let x = g.leaf(Array::new(&[2, 3], vec![0.1, -0.4, 2.0, 1.0, 1.0, 1.0]), true);
        let s = x.softmax_axis(1);
        let v = s.value();
        for r in 0..2 {
            let row: f64 = (0..3).map(|c| v.at2(r, c)).sum();
            assert!((row - 1.0).abs() < 1e-12);
        }
        assert!((v.at2(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        // gradient of sum(softmax) is 0 (rows are normalized)
        s.sum().backward();
        for v in x.grad().unwrap().data() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_sum_axis_computes_expectation() {
        let g = Graph::new();
        let x = g.constant(Array::new(&[4, 1], vec![0.25; 4]));
        let e = x.weighted_sum_axis(0, &[0.0, 1.0, 2.0, 3.0]);
        assert!((e.value().item() - 1.5).abs() < 1e-12);
    }
}
