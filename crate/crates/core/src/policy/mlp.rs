//! Shared tanh trunk fed with the constant input and the zero-padded
//! encoding of already-chosen dimensions; one linear head per dimension.
//!
//! The first layer is updated incrementally: choosing a value for a dimension
//! adds one weight column (times the value) to its pre-activation.

use super::layout::{tanh_inplace, Dense, LayoutBuilder};
use super::schema::Schema;

#[derive(Clone)]
pub(crate) struct Mlp {
    input: usize,
    first: Dense,
    rest: Vec<Dense>,
    heads: Vec<Dense>,
    schema: Schema,
}

#[derive(Default)]
pub(crate) struct MlpTape {
    /// Per dimension (canonical index): activations of every hidden layer.
    acts: Vec<Vec<Vec<f64>>>,
    /// Per dimension: the first-layer column its value switched on and the value.
    enc: Vec<(usize, f64)>,
}

const HEAD_GAIN: f64 = 0.1;

impl Mlp {
    pub fn new(layout: &mut LayoutBuilder, schema: &Schema, input: usize, hidden: &[usize]) -> Self {
        assert!(!hidden.is_empty(), "mlp needs at least one hidden layer");
        let first = layout.dense(hidden[0], input + schema.enc_total(), 1.0);
        let rest = hidden.windows(2).map(|w| layout.dense(w[1], w[0], 1.0)).collect();
        let last = *hidden.last().unwrap();
        let heads = schema.kinds().iter().map(|k| layout.dense(k.head_width(), last, HEAD_GAIN)).collect();
        Self { input, first, rest, heads, schema: schema.clone() }
    }

    pub fn rollout(
        &self,
        theta: &[f64],
        choose: &mut dyn FnMut(usize, &[f64]) -> f64,
        mut tape: Option<&mut MlpTape>,
    ) -> Vec<f64> {
        let d = self.schema.len();
        let h0 = self.first.rows;
        let mut pre: Vec<f64> = (0..h0)
            .map(|r| theta[self.first.b + r] + (0..self.input).map(|c| self.first.col(theta, r, c)).sum::<f64>())
            .collect();
        let mut raw = vec![0.0; self.schema.head_total()];
        if let Some(t) = tape.as_deref_mut() {
            t.acts = vec![Vec::new(); d];
            t.enc = vec![(0, 0.0); d];
        }
        for i in (0..d).rev() {
            let mut acts = Vec::with_capacity(1 + self.rest.len());
            let mut a = pre.clone();
            tanh_inplace(&mut a);
            acts.push(a);
            for layer in &self.rest {
                let mut z = vec![0.0; layer.rows];
                layer.forward(theta, acts.last().unwrap(), &mut z);
                tanh_inplace(&mut z);
                acts.push(z);
            }
            let range = self.schema.head_range(i);
            self.heads[i].forward(theta, acts.last().unwrap(), &mut raw[range.clone()]);
            let value = choose(i, &raw[range]);
            let (col, scale) = self.schema.encode(i, value);
            let c = self.input + self.schema.enc_offset(i) + col;
            for (r, p) in pre.iter_mut().enumerate() {
                *p += self.first.col(theta, r, c) * scale;
            }
            if let Some(t) = tape.as_deref_mut() {
                t.acts[i] = acts;
                t.enc[i] = (c, scale);
            }
        }
        raw
    }

    pub fn backward(&self, theta: &[f64], tape: &MlpTape, d_raw: &[f64], grad: &mut [f64]) {
        let d = self.schema.len();
        let h0 = self.first.rows;
        let mut dpre = vec![vec![0.0; h0]; d];
        for i in 0..d {
            let range = self.schema.head_range(i);
            let dr = &d_raw[range];
            if dr.iter().all(|g| *g == 0.0) {
                continue;
            }
            let acts = &tape.acts[i];
            let last = acts.len() - 1;
            let mut da = vec![0.0; acts[last].len()];
            self.heads[i].backward(theta, &acts[last], dr, grad, Some(&mut da));
            for (l, layer) in self.rest.iter().enumerate().rev() {
                let out = &acts[l + 1];
                let dz: Vec<f64> = da.iter().zip(out).map(|(g, a)| g * (1.0 - a * a)).collect();
                let mut dx = vec![0.0; layer.cols];
                layer.backward(theta, &acts[l], &dz, grad, Some(&mut dx));
                da = dx;
            }
            for (p, (g, a)) in dpre[i].iter_mut().zip(da.iter().zip(&acts[0])) {
                *p = g * (1.0 - a * a);
            }
        }
        // First layer: bias and constant-input columns see every step; the
        // column of dimension k sees every step i < k.
        let cols = self.first.cols;
        let mut running = vec![0.0; h0];
        for (k, step) in dpre.iter().enumerate() {
            let (c, scale) = tape.enc[k];
            if scale != 0.0 {
                for (r, s) in running.iter().enumerate() {
                    grad[self.first.w + r * cols + c] += scale * s;
                }
            }
            for (s, g) in running.iter_mut().zip(step) {
                *s += g;
            }
        }
        for (r, s) in running.iter().enumerate() {
            grad[self.first.b + r] += s;
            for c in 0..self.input {
                grad[self.first.w + r * cols + c] += s;
            }
        }
    }
}
