use std::ops::{Index, IndexMut};

use num_complex::Complex64;

/// Dense complex tensor of shape `K x M x N` (satellite, user, antenna),
/// stored k-major, then m, then n.
#[derive(Debug, Clone, PartialEq)]
pub struct CTensor3 {
    k: usize,
    m: usize,
    n: usize,
    data: Vec<Complex64>,
}

impl CTensor3 {
    pub fn zeros(k: usize, m: usize, n: usize) -> Self {
        Self {
            k,
            m,
            n,
            data: vec![Complex64::new(0.0, 0.0); k * m * n],
        }
    }

    pub fn from_vec(k: usize, m: usize, n: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), k * m * n, "tensor data does not match shape");
        Self { k, m, n, data }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.k, self.m, self.n)
    }

    pub fn satellites(&self) -> usize {
        self.k
    }

    pub fn users(&self) -> usize {
        self.m
    }

    pub fn antennas(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Vector `(k, m, :)`.
    pub fn vector(&self, k: usize, m: usize) -> &[Complex64] {
        let start = (k * self.m + m) * self.n;
        &self.data[start..start + self.n]
    }

    pub fn vector_mut(&mut self, k: usize, m: usize) -> &mut [Complex64] {
        let start = (k * self.m + m) * self.n;
        &mut self.data[start..start + self.n]
    }

    /// All user vectors of satellite `k`, row-major `M x N`.
    pub fn block(&self, k: usize) -> &[Complex64] {
        let len = self.m * self.n;
        &self.data[k * len..(k + 1) * len]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut [Complex64] {
        let len = self.m * self.n;
        &mut self.data[k * len..(k + 1) * len]
    }

    /// Squared Frobenius norm of satellite block `k` (its transmit power).
    pub fn block_power(&self, k: usize) -> f64 {
        self.block(k).iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn total_power(&self) -> f64 {
        (0..self.k).map(|k| self.block_power(k)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Stack the satellites' antennas into one virtual array: the result has
    /// shape `1 x M x (K N)` with user `m`'s vector equal to
    /// `[h(0,m,:), h(1,m,:), ...]`.
    pub fn pooled(&self) -> CTensor3 {
        let mut out = CTensor3::zeros(1, self.m, self.k * self.n);
        for m in 0..self.m {
            let dst = out.vector_mut(0, m);
            for k in 0..self.k {
                dst[k * self.n..(k + 1) * self.n].copy_from_slice(self.vector(k, m));
            }
        }
        out
    }

    /// Inverse of [`CTensor3::pooled`]: split a `1 x M x (K N)` tensor into
    /// `K` satellite blocks.
    pub fn unpool(&self, k: usize) -> CTensor3 {
        assert_eq!(self.k, 1);
        assert_eq!(self.n % k, 0);
        let n = self.n / k;
        let mut out = CTensor3::zeros(k, self.m, n);
        for m in 0..self.m {
            let src = self.vector(0, m);
            for kk in 0..k {
                out.vector_mut(kk, m)
                    .copy_from_slice(&src[kk * n..(kk + 1) * n]);
            }
        }
        out
    }
}

impl Index<(usize, usize, usize)> for CTensor3 {
    type Output = Complex64;

    fn index(&self, (k, m, n): (usize, usize, usize)) -> &Complex64 {
        &self.data[(k * self.m + m) * self.n + n]
    }
}

impl IndexMut<(usize, usize, usize)> for CTensor3 {
    fn index_mut(&mut self, (k, m, n): (usize, usize, usize)) -> &mut Complex64 {
        &mut self.data[(k * self.m + m) * self.n + n]
    }
}
