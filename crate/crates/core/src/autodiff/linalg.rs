//! Dense matrix product and row-broadcast addition (the attention MLP path).

use super::Tensor;
use crate::array::Array;

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
    out
}

impl Tensor {
    /// 2-D matrix multiply: [m,k] × [k,n] → [m,n].
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert!(
            self.ndim() == 2 && other.ndim() == 2 && self.shape[1] == other.shape()[0],
            "matmul: shape mismatch {:?} vs {:?}",
            self.shape,
            other.shape()
        );
        let (m, k) = (self.shape[0], self.shape[1]);
        let n = other.shape()[1];
        let value = self.with_value2(other, |a, b| {
            Array::new(&[m, n], matmul_raw(a.data(), b.data(), m, k, n))
        });
        self.graph.push(
            "matmul",
            value,
            &[self, other],
            Box::new(move |args| {
                let a = args.inputs[0].data();
                let b = args.inputs[1].data();
                let g = args.out_grad.data();
                let da = args.needs[0].then(|| {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for kk in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i * n + j] * b[kk * n + j];
                            }
                            da[i * k + kk] = acc;
                        }
                    }
                    Array::new(&[m, k], da)
                });
                let db = args.needs[1].then(|| {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for kk in 0..k {
                            let aik = a[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            let grow = &g[i * n..(i + 1) * n];
                            let drow = &mut db[kk * n..(kk + 1) * n];
                            for j in 0..n {
                                drow[j] += aik * grow[j];
                            }
                        }
                    }
                    Array::new(&[k, n], db)
                });
                vec![da, db]
            }),
        )
    }

    /// Adds a length-n row vector to every row of an [m,n] matrix.
    pub fn add_row(&self, row: &Tensor) -> Tensor {
        assert!(
            self.ndim() == 2 && row.ndim() == 1 && self.shape[1] == row.shape()[0],
            "add_row: shape mismatch {:?} vs {:?}",
            self.shape,
            row.shape()
        );
        let (m, n) = (self.shape[0], self.shape[1]);
        let value = self.with_value2(row, |a, r| {
            let mut out = a.data().to_vec();
            for i in 0..m {
                for j in 0..n {
                    out[i * n + j] += r.data()[j];
                }
            }
            Array::new(&[m, n], out)
        });
        self.graph.push(
            "add_row",
            value,
            &[self, row],
            Box::new(move |args| {
                let g = args.out_grad.data();
                let da = args.needs[0].then(|| args.out_grad.clone());
                let dr = args.needs[1].then(|| {
                    let mut dr = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            dr[j] += g[i * n + j];
                        }
                    }
                    Array::new(&[n], dr)
                });
                vec![da, dr]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::Graph;
    use crate::array::Array;

    #[test]
    fn matmul_small_known_product() {
        let g = Graph::new();
        let a = g.constant(Array::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = g.constant(Array::new(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]));
        assert_eq!(a.matmul(&b).value().data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_gradients_match_hand_rule() {
        // L = sum(A·B): dA = ones·Bᵀ (row sums of B), dB = Aᵀ·ones (col sums of A)
        let g = Graph::new();
        let a = g.leaf(Array::new(&[2, 3], (1..=6).map(f64::from).collect()), true);
        let b = g.leaf(Array::new(&[3, 2], (1..=6).map(f64::from).collect()), true);
        a.matmul(&b).sum().backward();
        assert_eq!(a.grad().unwrap().data(), &[3.0, 7.0, 11.0, 3.0, 7.0, 11.0]);
        assert_eq!(b.grad().unwrap().data(), &[5.0, 5.0, 7.0, 7.0, 9.0, 9.0]);
    }

    #[test]
    fn add_row_broadcasts_and_reduces() {
        let g = Graph::new();
        let a = g.leaf(Array::zeros(&[3, 2]), true);
        let r = g.leaf(Array::new(&[2], vec![1.0, -1.0]), true);
        let y = a.add_row(&r);
        assert_eq!(y.value().at2(2, 1), -1.0);
        y.sum().backward();
        assert_eq!(r.grad().unwrap().data(), &[3.0, 3.0]);
    }
}
