//! Dense row-major f64 arrays. All tensors in the engine and every image,
//! disparity map, and mask in the pipeline are stored in this one type.

/// Row-major n-dimensional array of f64. The last axis is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Array {
        let n: usize = shape.iter().product();
        assert!(
            n == data.len(),
            "Array::new: shape {:?} needs {} elements, got {}",
            shape,
            n,
            data.len()
        );
        Array { shape: shape.to_vec(), data }
    }

    pub fn zeros(shape: &[usize]) -> Array {
        let n: usize = shape.iter().product();
        Array { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn full(shape: &[usize], v: f64) -> Array {
        let n: usize = shape.iter().product();
        Array { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn scalar(v: f64) -> Array {
        Array { shape: vec![], data: vec![v] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Array {
        let n: usize = shape.iter().product();
        Array { shape: shape.to_vec(), data: (0..n).map(|i| f(i)).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Scalar extraction; panics unless the array holds exactly one element.
    pub fn item(&self) -> f64 {
        assert!(self.data.len() == 1, "Array::item: {} elements", self.data.len());
        self.data[0]
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Array {
        let n: usize = shape.iter().product();
        assert!(
            n == self.data.len(),
            "Array::reshaped: shape {:?} needs {} elements, got {}",
            shape,
            n,
            self.data.len()
        );
        self.shape = shape.to_vec();
        self
    }

    #[inline]
    pub fn idx2(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.shape.len() == 2);
        i * self.shape[1] + j
    }

    #[inline]
    pub fn idx3(&self, c: usize, i: usize, j: usize) -> usize {
        debug_assert!(self.shape.len() == 3);
        (c * self.shape[1] + i) * self.shape[2] + j
    }

    #[inline]
    pub fn idx4(&self, b: usize, c: usize, i: usize, j: usize) -> usize {
        debug_assert!(self.shape.len() == 4);
        ((b * self.shape[1] + c) * self.shape[2] + i) * self.shape[3] + j
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx2(i, j)]
    }

    #[inline]
    pub fn at3(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx3(c, i, j)]
    }

    #[inline]
    pub fn at4(&self, b: usize, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx4(b, c, i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, other: &Array, f: impl Fn(f64, f64) -> f64) -> Array {
        assert!(
            self.shape == other.shape,
            "Array::zip: shape mismatch {:?} vs {:?}",
            self.shape,
            other.shape
        );
        Array {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Sum of all elements in index order.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        assert!(!self.data.is_empty(), "Array::mean on empty array");
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
