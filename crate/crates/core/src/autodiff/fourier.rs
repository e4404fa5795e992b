//! 2-D discrete Fourier transform pair restricted to the real→complex→real
//! round trip, with complex maps stored as channel pairs: a [B,2C,H,W] tensor
//! holds C real planes followed by C imaginary planes.
//!
//! Normalization: unnormalized forward, 1/(H·W) on the inverse, so
//! sum(x²) == sum(|X|²)/(H·W) (Parseval).

use super::Tensor;
use crate::array::Array;

struct DftTables {
    cos_h: Vec<f64>,
    sin_h: Vec<f64>,
    cos_w: Vec<f64>,
    sin_w: Vec<f64>,
    h: usize,
    w: usize,
}

impl DftTables {
    fn new(h: usize, w: usize) -> DftTables {
        let tab = |n: usize| -> (Vec<f64>, Vec<f64>) {
            let mut c = vec![0.0; n * n];
            let mut s = vec![0.0; n * n];
            for u in 0..n {
                for x in 0..n {
                    let th = std::f64::consts::TAU * (u * x % n) as f64 / n as f64;
                    c[u * n + x] = th.cos();
                    s[u * n + x] = th.sin();
                }
            }
            (c, s)
        };
        let (cos_h, sin_h) = tab(h);
        let (cos_w, sin_w) = tab(w);
        DftTables { cos_h, sin_h, cos_w, sin_w, h, w }
    }

    /// Complex-to-complex separable DFT of one H×W plane. `sign` −1.0 gives
    /// the forward kernel e^{−iθ}, +1.0 the inverse kernel e^{+iθ}
    /// (unnormalized either way).
    fn c2c(&self, re: &[f64], im: &[f64], sign: f64) -> (Vec<f64>, Vec<f64>) {
        let (h, w) = (self.h, self.w);
        // rows: for each y, transform along x
        let mut rre = vec![0.0; h * w];
        let mut rim = vec![0.0; h * w];
        for y in 0..h {
            for v in 0..w {
                let (mut ar, mut ai) = (0.0, 0.0);
                let (crow, srow) = (&self.cos_w[v * w..(v + 1) * w], &self.sin_w[v * w..(v + 1) * w]);
                for x in 0..w {
                    let (c, s) = (crow[x], sign * srow[x]);
                    let (xr, xi) = (re[y * w + x], im[y * w + x]);
                    ar += xr * c - xi * s;
                    ai += xr * s + xi * c;
                }
                rre[y * w + v] = ar;
                rim[y * w + v] = ai;
            }
        }
        // cols: for each v, transform along y
        let mut ore = vec![0.0; h * w];
        let mut oim = vec![0.0; h * w];
        for u in 0..h {
            let (crow, srow) = (&self.cos_h[u * h..(u + 1) * h], &self.sin_h[u * h..(u + 1) * h]);
            for v in 0..w {
                let (mut ar, mut ai) = (0.0, 0.0);
                for y in 0..h {
                    let (c, s) = (crow[y], sign * srow[y]);
                    let (xr, xi) = (rre[y * w + v], rim[y * w + v]);
                    ar += xr * c - xi * s;
                    ai += xr * s + xi * c;
                }
                ore[u * w + v] = ar;
                oim[u * w + v] = ai;
            }
        }
        (ore, oim)
    }
}

impl Tensor {
    /// Forward 2-D DFT of a real [B,C,H,W] tensor → complex [B,2C,H,W]
    /// (unnormalized).
    pub fn dft2(&self) -> Tensor {
        assert!(self.ndim() == 4, "dft2: expected [B,C,H,W], got {:?}", self.shape);
        let (b, c, h, w) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        let plane = h * w;
        let value = self.with_value(|a| {
            let tabs = DftTables::new(h, w);
            let x = a.data();
            let zeros = vec![0.0; plane];
            let mut out = vec![0.0; b * 2 * c * plane];
            for ib in 0..b {
                for ci in 0..c {
                    let src = (ib * c + ci) * plane;
                    let (re, im) = tabs.c2c(&x[src..src + plane], &zeros, -1.0);
                    let dre = (ib * 2 * c + ci) * plane;
                    let dim = (ib * 2 * c + c + ci) * plane;
                    out[dre..dre + plane].copy_from_slice(&re);
                    out[dim..dim + plane].copy_from_slice(&im);
                }
            }
            Array::new(&[b, 2 * c, h, w], out)
        });
        self.graph.push(
            "dft2",
            value,
            &[self],
            Box::new(move |args| {
                // adjoint of the forward kernel: real part of the unnormalized
                // inverse transform of the complex output-gradient
                let tabs = DftTables::new(h, w);
                let g = args.out_grad.data();
                let mut din = vec![0.0; b * c * plane];
                for ib in 0..b {
                    for ci in 0..c {
                        let gre = (ib * 2 * c + ci) * plane;
                        let gim = (ib * 2 * c + c + ci) * plane;
                        let (re, _) =
                            tabs.c2c(&g[gre..gre + plane], &g[gim..gim + plane], 1.0);
                        let dst = (ib * c + ci) * plane;
                        din[dst..dst + plane].copy_from_slice(&re);
                    }
                }
                vec![Some(Array::new(args.inputs[0].shape(), din))]
            }),
        )
    }

    /// Inverse 2-D DFT of a complex [B,2C,H,W] tensor → real [B,C,H,W],
    /// scaled by 1/(H·W); the imaginary part of the result is discarded
    /// (inputs along this pipeline are conjugate-symmetric up to rounding).
    pub fn idft2(&self) -> Tensor {
        assert!(
            self.ndim() == 4 && self.shape[1] % 2 == 0,
            "idft2: expected [B,2C,H,W] with paired channels, got {:?}",
            self.shape
        );
        let (b, c2, h, w) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        let c = c2 / 2;
        let plane = h * w;
        let norm = 1.0 / (h * w) as f64;
        let value = self.with_value(|a| {
            let tabs = DftTables::new(h, w);
            let x = a.data();
            let mut out = vec![0.0; b * c * plane];
            for ib in 0..b {
                for ci in 0..c {
                    let sre = (ib * c2 + ci) * plane;
                    let sim = (ib * c2 + c + ci) * plane;
                    let (re, _) = tabs.c2c(&x[sre..sre + plane], &x[sim..sim + plane], 1.0);
                    let dst = (ib * c + ci) * plane;
                    for (o, v) in out[dst..dst + plane].iter_mut().zip(&re) {
                        *o = v * norm;
                    }
                }
            }
            Array::new(&[b, c, h, w], out)
        });
        self.graph.push(
            "idft2",
            value,
            &[self],
            Box::new(move |args| {
                // adjoint: forward-kernel transform of the real gradient, ×1/(HW)
                let tabs = DftTables::new(h, w);
                let g = args.out_grad.data();
                let zeros = vec![0.0; plane];
                let mut din = vec![0.0; b * c2 * plane];
                for ib in 0..b {
                    for ci in 0..c {
                        let src = (ib * c + ci) * plane;
                        let (re, im) = tabs.c2c(&g[src..src + plane], &zeros, -1.0);
                        let dre = (ib * c2 + ci) * plane;
                        let dim = (ib * c2 + c + ci) * plane;
                        for (o, v) in din[dre..dre + plane].iter_mut().zip(&re) {
                            *o = v * norm;
                        }
                        for (o, v) in din[dim..dim + plane].iter_mut().zip(&im) {
                            *o = v * norm;
                        }
                    }
                }
                vec![Some(Array::new(args.inputs[0].shape(), din))]
            }),
        )
    }

    /// Complex magnitude with smooth guard: √(re² + im² + eps²) per channel
    /// pair, [B,2C,H,W] → [B,C,H,W]. The guard keeps the gradient finite (and
    /// zero) at the origin.
    pub fn complex_abs(&self, eps: f64) -> Tensor {
        assert!(eps > 0.0, "complex_abs: eps must be > 0");
        assert!(
            self.ndim() == 4 && self.shape[1] % 2 == 0,
            "complex_abs: expected [B,2C,H,W] with paired channels, got {:?}",
            self.shape
        );
        let (b, c2, h, w) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        let c = c2 / 2;
        let plane = h * w;
        let value = self.with_value(|a| {
            let x = a.data();
            let mut out = vec![0.0; b * c * plane];
            for ib in 0..b {
                for ci in 0..c {
                    let sre = (ib * c2 + ci) * plane;
                    let sim = (ib * c2 + c + ci) * plane;
                    let dst = (ib * c + ci) * plane;
                    for i in 0..plane {
                        let (re, im) = (x[sre + i], x[sim + i]);
                        out[dst + i] = (re * re + im * im + eps * eps).sqrt();
                    }
                }
            }
            Array::new(&[b, c, h, w], out)
        });
        self.graph.push(
            "complex_abs",
            value,
            &[self],
            Box::new(move |args| {
                let x = args.inputs[0].data();
                let y = args.out_value.data();
                let g = args.out_grad.data();
                let mut din = vec![0.0; x.len()];
                for ib in 0..b {
                    for ci in 0..c {
                        let sre = (ib * c2 + ci) * plane;
                        let sim = (ib * c2 + c + ci) * plane;
                        let src = (ib * c + ci) * plane;
                        for i in 0..plane {
                            let scale = g[src + i] / y[src + i];
                            din[sre + i] = scale * x[sre + i];
                            din[sim + i] = scale * x[sim + i];
                        }
                    }
                }
                vec![Some(Array::new(args.inputs[0].shape(), din))]
            }),
        )
    }
}

/// Phase-preserving recombination: rebuilds a complex tensor with new
/// magnitudes `a_new` [B,C,H,W] and the phase of `x` [B,2C,H,W], i.e.
/// A'·(cos φ, sin φ) with (cos φ, sin φ) = (re, im)/√(re²+im²+eps²).
/// Composite of existing primitives, so gradients flow into both arguments.
/// The guard matches `complex_abs`, making x·(A/A_guard) with A = complex_abs(x)
/// an exact identity.
pub fn complex_rescale(x: &Tensor, a_new: &Tensor, eps: f64) -> Tensor {
    let ratio = a_new.div(&x.complex_abs(eps));
    x.mul(&super::concat_channels(&[&ratio, &ratio]))
}

#[cfg(test)]
mod tests {
    use super::super::Graph;
    use super::complex_rescale;
    use crate::array::Array;
    use crate::rng::Rng;

    fn random_map(seed: u64, shape: &[usize]) -> Array {
        let mut r = Rng::new(seed);
        Array::from_fn(shape, |_| r.uniform(-1.0, 1.0))
    }

    #[test]
    fn dft_round_trip_recovers_input() {
        let g = Graph::new();
        let x = g.constant(random_map(0, &[1, 1, 8, 8]));
        let y = x.dft2().idft2().value();
        let xv = x.value();
        for (a, b) in xv.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn dft_is_linear() {
        let g = Graph::new();
        let xa = random_map(1, &[1, 1, 4, 6]);
        let xb = random_map(2, &[1, 1, 4, 6]);
        let combo = xa.zip(&xb, |a, b| 2.5 * a - 0.75 * b);
        let fa = g.constant(xa).dft2().value();
        let fb = g.constant(xb).dft2().value();
        let fc = g.constant(combo).dft2().value();
        for i in 0..fc.len() {
            let want = 2.5 * fa.data()[i] - 0.75 * fb.data()[i];
            assert!((fc.data()[i] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn parseval_under_chosen_normalization() {
        let g = Graph::new();
        let x = random_map(3, &[1, 2, 8, 4]);
        let energy: f64 = x.data().iter().map(|v| v * v).sum();
        let f = g.constant(x).dft2().value();
        let spectral: f64 = f.data().iter().map(|v| v * v).sum::<f64>() / 32.0;
        assert!((energy - spectral).abs() / energy < 1e-6);
    }

    #[test]
    fn rescale_with_own_magnitude_is_identity() {
        let g = Graph::new();
        let x = g.constant(random_map(4, &[1, 1, 4, 4]));
        let f = x.dft2();
        let a = f.complex_abs(1e-6);
        let y = complex_rescale(&f, &a, 1e-6);
        assert_eq!(y.value(), f.value());
    }

    #[test]
    fn complex_abs_of_zero_is_eps_with_zero_gradient() {
        let g = Graph::new();
        let x = g.leaf(Array::zeros(&[1, 2, 2, 2]), true);
        let a = x.complex_abs(1e-3);
        for v in a.value().data() {
            assert_eq!(*v, 1e-3);
        }
        a.sum().backward();
        for v in x.grad().unwrap().data() {
            assert_eq!(*v, 0.0);
        }
    }
}
