//! Flat parameter layout and the dense layer used by both decoders.

use rand::Rng;

#[derive(Debug, Default)]
pub(crate) struct LayoutBuilder {
    len: usize,
    inits: Vec<(usize, usize, f64)>,
}

impl LayoutBuilder {
    /// Reserves `n` parameters initialized uniformly in `[-scale, scale]`.
    pub fn block(&mut self, n: usize, scale: f64) -> usize {
        let off = self.len;
        self.len += n;
        if scale > 0.0 {
            self.inits.push((off, n, scale));
        }
        off
    }

    /// Dense layer with fan-in scaled weights (times `gain`) and zero bias.
    pub fn dense(&mut self, rows: usize, cols: usize, gain: f64) -> Dense {
        let w = self.block(rows * cols, gain / (cols as f64).sqrt());
        let b = self.block(rows, 0.0);
        Dense { w, b, rows, cols }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = vec![0.0; self.len];
        for &(off, n, scale) in &self.inits {
            for v in &mut theta[off..off + n] {
                *v = scale * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        theta
    }
}

/// `y = W x + b` with `W` stored row-major at `w`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Inner product with four interleaved partial sums (fixed order, so still
/// deterministic) to break the floating-point add chain.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        let x: &[f64; 4] = x.try_into().unwrap();
        let y: &[f64; 4] = y.try_into().unwrap();
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Dense {
    pub fn forward(&self, theta: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        let w = &theta[self.w..self.w + self.rows * self.cols];
        let b = &theta[self.b..self.b + self.rows];
        for (r, out) in y.iter_mut().enumerate().take(self.rows) {
            *out = b[r] + dot(&w[r * self.cols..(r + 1) * self.cols], x);
        }
    }

    /// Accumulates parameter gradients and, if asked, `dx += W^T dy`.
    pub fn backward(&self, theta: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        let cols = self.cols;
        {
            let gw = &mut grad[self.w..self.w + self.rows * cols];
            for (r, &g) in dy.iter().enumerate().take(self.rows) {
                if g == 0.0 {
                    continue;
                }
                for (gv, xv) in gw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                    *gv += g * xv;
                }
            }
        }
        for (gb, g) in grad[self.b..self.b + self.rows].iter_mut().zip(dy) {
            *gb += g;
        }
        if let Some(dx) = dx {
            let w = &theta[self.w..self.w + self.rows * cols];
            for (r, &g) in dy.iter().enumerate().take(self.rows) {
                if g == 0.0 {
                    continue;
                }
                for (d, wv) in dx.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                    *d += g * wv;
                }
            }
        }
    }

    pub fn col(&self, theta: &[f64], r: usize, c: usize) -> f64 {
        theta[self.w + r * self.cols + c]
    }
}

pub(crate) fn tanh_inplace(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}
