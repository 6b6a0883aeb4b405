//! Variable-band (skyline) Cholesky factorization for the symmetric
//! Newton systems. Only the lower triangle inside the row envelope is
//! stored.

pub(crate) struct Skyline {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl Skyline {
    /// `first[i]` is the leftmost structurally nonzero column of row `i`.
    pub(crate) fn new(first: Vec<usize>) -> Self {
        let mut offset = Vec::with_capacity(first.len() + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            debug_assert!(f <= i);
            offset.push(acc);
            acc += i - f + 1;
        }
        offset.push(acc);
        Self {
            first,
            offset,
            data: vec![0.0; acc],
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.first.len()
    }

    pub(crate) fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.offset[i] + (j - self.first[i])
    }

    /// Adds `v` to entry `(i, j)`; entries above the diagonal are mirrored.
    #[inline]
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// In-place `L L^T` factorization. Returns false when a pivot is not
    /// safely positive.
    pub(crate) fn factor(&mut self) -> bool {
        let n = self.dim();
        let max_diag = (0..n)
            .map(|i| self.data[self.idx(i, i)].abs())
            .fold(0.0, f64::max);
        let floor = 1e-14 * max_diag.max(f64::MIN_POSITIVE);
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..i {
                let fj = self.first[j];
                let start = fi.max(fj);
                let (ri, rj) = (self.idx(i, start), self.idx(j, start));
                let len = j - start;
                let s: f64 = self.data[ri..ri + len]
                    .iter()
                    .zip(&self.data[rj..rj + len])
                    .map(|(a, b)| a * b)
                    .sum();
                let ljj = self.data[self.idx(j, j)];
                let k = self.idx(i, j);
                self.data[k] = (self.data[k] - s) / ljj;
            }
            let ri = self.idx(i, fi);
            let s: f64 = self.data[ri..ri + (i - fi)].iter().map(|v| v * v).sum();
            let k = self.idx(i, i);
            let d = self.data[k] - s;
            if !(d > floor) || !d.is_finite() {
                return false;
            }
            self.data[k] = d.sqrt();
        }
        true
    }

    /// Solves `L L^T x = b` in place after a successful `factor`.
    pub(crate) fn solve(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.idx(i, fi);
            let s: f64 = self.data[ri..ri + (i - fi)]
                .iter()
                .zip(&b[fi..i])
                .map(|(l, y)| l * y)
                .sum();
            b[i] = (b[i] - s) / self.data[self.idx(i, i)];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            b[i] /= self.data[self.idx(i, i)];
            let xi = b[i];
            let ri = self.idx(i, fi);
            for (k, l) in self.data[ri..ri + (i - fi)].iter().enumerate() {
                b[fi + k] -= l * xi;
            }
        }
    }
}
