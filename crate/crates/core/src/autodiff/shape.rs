//! Shape and layout primitives: reshape, concatenation, batch selection,
//! horizontal flip, spatial crop.

use super::Tensor;
use crate::array::Array;

impl Tensor {
    /// Reinterprets the buffer under a new shape of equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        assert!(
            n == self.len(),
            "reshape: cannot view {:?} as {:?}",
            self.shape,
            shape
        );
        let value = self.with_value(|a| a.clone().reshaped(shape));
        self.graph.push(
            "reshape",
            value,
            &[self],
            Box::new(|args| {
                let shape = args.inputs[0].shape().to_vec();
                vec![Some(args.out_grad.clone().reshaped(&shape))]
            }),
        )
    }

    /// Extracts sample `b` from a batched tensor: [B, ...] → [...].
    pub fn select_batch(&self, b: usize) -> Tensor {
        assert!(
            self.ndim() >= 2 && b < self.shape[0],
            "select_batch: index {b} for shape {:?}",
            self.shape
        );
        let rest: usize = self.shape[1..].iter().product();
        let out_shape = self.shape[1..].to_vec();
        let value = self.with_value(|a| {
            Array::new(&out_shape, a.data()[b * rest..(b + 1) * rest].to_vec())
        });
        self.graph.push(
            "select_batch",
            value,
            &[self],
            Box::new(move |args| {
                let mut din = vec![0.0; args.inputs[0].len()];
                din[b * rest..(b + 1) * rest].copy_from_slice(args.out_grad.data());
                vec![Some(Array::new(args.inputs[0].shape(), din))]
            }),
        )
    }

    /// Reverses the last axis (horizontal mirror).
    pub fn hflip(&self) -> Tensor {
        assert!(!self.shape.is_empty(), "hflip: scalar input");
        let w = *self.shape.last().unwrap();
        let rows = self.len() / w;
        let flip = move |a: &Array| {
            let x = a.data();
            let mut out = vec![0.0; x.len()];
            for r in 0..rows {
                for i in 0..w {
                    out[r * w + i] = x[r * w + (w - 1 - i)];
                }
            }
            Array::new(a.shape(), out)
        };
        let value = self.with_value(&flip);
        self.graph.push(
            "hflip",
            value,
            &[self],
            Box::new(move |args| vec![Some(flip(args.out_grad))]),
        )
    }

    /// Crops the last two axes to `[y0, y0+h) × [x0, x0+w)`.
    pub fn crop2d(&self, y0: usize, h: usize, x0: usize, w: usize) -> Tensor {
        assert!(self.ndim() >= 2, "crop2d: need at least 2 dims, got {:?}", self.shape);
        let nd = self.ndim();
        let (ih, iw) = (self.shape[nd - 2], self.shape[nd - 1]);
        assert!(
            h >= 1 && w >= 1 && y0 + h <= ih && x0 + w <= iw,
            "crop2d: window y0={y0} h={h} x0={x0} w={w} outside {ih}x{iw}"
        );
        let planes: usize = self.shape[..nd - 2].iter().product();
        let mut out_shape = self.shape.clone();
        out_shape[nd - 2] = h;
        out_shape[nd - 1] = w;
        let value = self.with_value(|a| {
            let x = a.data();
            let mut out = vec![0.0; planes * h * w];
            for p in 0..planes {
                for y in 0..h {
                    let src = p * ih * iw + (y0 + y) * iw + x0;
                    let dst = (p * h + y) * w;
                    out[dst..dst + w].copy_from_slice(&x[src..src + w]);
                }
            }
            Array::new(&out_shape, out)
        });
        self.graph.push(
            "crop2d",
            value,
            &[self],
            Box::new(move |args| {
                let g = args.out_grad.data();
                let mut din = vec![0.0; args.inputs[0].len()];
                for p in 0..planes {
                    for y in 0..h {
                        let dst = p * ih * iw + (y0 + y) * iw + x0;
                        let src = (p * h + y) * w;
                        din[dst..dst + w].copy_from_slice(&g[src..src + w]);
                    }
                }
                vec![Some(Array::new(args.inputs[0].shape(), din))]
            }),
        )
    }
}

/// Concatenates 4-D tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
    assert!(!parts.is_empty(), "concat_channels: no inputs");
    let first = parts[0].shape();
    assert!(
        first.len() == 4,
        "concat_channels: expected [B,C,H,W], got {:?}",
        first
    );
    let (b, h, w) = (first[0], first[2], first[3]);
    let mut channels = Vec::with_capacity(parts.len());
    for p in parts {
        let s = p.shape();
        assert!(
            s.len() == 4 && s[0] == b && s[2] == h && s[3] == w,
            "concat_channels: incompatible shapes {:?} vs {:?}",
            first,
            s
        );
        channels.push(s[1]);
    }
    let c_total: usize = channels.iter().sum();
    let plane = h * w;
    let graph = parts[0].graph().clone();
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let value = graph.with_values(&ids, |vals| {
        let mut out = vec![0.0; b * c_total * plane];
        for ib in 0..b {
            let mut co = 0;
            for (v, &ci) in vals.iter().zip(&channels) {
                let src = ib * ci * plane;
                let dst = (ib * c_total + co) * plane;
                out[dst..dst + ci * plane].copy_from_slice(&v.data()[src..src + ci * plane]);
                co += ci;
            }
        }
        Array::new(&[b, c_total, h, w], out)
    });
    let channels2 = channels.clone();
    graph.push(
        "concat_channels",
        value,
        parts,
        Box::new(move |args| {
            let g = args.out_grad.data();
            let mut grads = Vec::with_capacity(args.inputs.len());
            let mut co = 0;
            for (k, &ci) in channels2.iter().enumerate() {
                if !args.needs[k] {
                    grads.push(None);
                    co += ci;
                    continue;
                }
                let mut din = vec![0.0; b * ci * plane];
                for ib in 0..b {
                    let src = (ib * c_total + co) * plane;
                    let dst = ib * ci * plane;
                    din[dst..dst + ci * plane].copy_from_slice(&g[src..src + ci * plane]);
                }
                grads.push(Some(Array::new(&[b, ci, h, w], din)));
                co += ci;
            }
            grads
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::super::Graph;
    use super::concat_channels;
    use crate::array::Array;

    #[test]
    fn hflip_is_involution_and_grad_flips() {
        let g = Graph::new();
        let x = g.leaf(Array::new(&[1, 1, 1, 3], vec![1.0, 2.0, 3.0]), true);
        let y = x.hflip();
        assert_eq!(y.value().data(), &[3.0, 2.0, 1.0]);
        assert_eq!(y.hflip().value().data(), &[1.0, 2.0, 3.0]);
        y.mul(&g.constant(Array::new(&[1, 1, 1, 3], vec![1.0, 0.0, 0.0])))
            .sum()
            .backward();
        assert_eq!(x.grad().unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn concat_then_gradient_splits_back() {
        let g = Graph::new();
        let a = g.leaf(Array::full(&[1, 1, 2, 2], 1.0), true);
        let b = g.leaf(Array::full(&[1, 2, 2, 2], 2.0), true);
        let y = concat_channels(&[&a, &b]);
        assert_eq!(y.shape(), &[1, 3, 2, 2]);
        y.mul_scalar(2.0).sum().backward();
        assert_eq!(a.grad().unwrap().data(), &[2.0; 4]);
        assert_eq!(b.grad().unwrap().data(), &[2.0; 8]);
    }

    #[test]
    fn select_batch_scatter_gradient() {
        let g = Graph::new();
        let x = g.leaf(Array::from_fn(&[3, 2], |i| i as f64), true);
        let s = x.select_batch(1);
        assert_eq!(s.value().data(), &[2.0, 3.0]);
        s.sum().backward();
        assert_eq!(x.grad().unwrap().data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn crop2d_extracts_window() {
        let g = Graph::new();
        let x = g.leaf(Array::from_fn(&[1, 3, 4], |i| i as f64), true);
        let y = x.crop2d(1, 2, 1, 2);
        assert_eq!(y.value().data(), &[5.0, 6.0, 9.0, 10.0]);
        y.sum().backward();
        assert_eq!(x.grad().unwrap().sum(), 4.0);
    }

    #[test]
    fn reshape_roundtrips_gradient() {
        let g = Graph::new();
        let x = g.leaf(Array::from_fn(&[2, 3], |i| i as f64), true);
        x.reshape(&[3, 2]).sum().backward();
        assert_eq!(x.grad().unwrap().shape(), &[2, 3]);
    }
}
