//! Causal decoder over reversed dimension positions.
//!
//! Position 0 holds a start token projected from the constant input; position
//! `j > 0` holds the embedding of the value chosen at position `j - 1`. The
//! output at position `j` parameterizes dimension `D - 1 - j`. Blocks are
//! multi-head causal self-attention and a tanh feed-forward layer, each with a
//! residual connection.

use super::layout::{dot, Dense, LayoutBuilder};
use super::schema::{HeadKind, Schema};

const HEAD_GAIN: f64 = 0.1;
const EMBED_SCALE: f64 = 0.5;
const POS_SCALE: f64 = 0.1;
const BRANCH_GAIN: f64 = 0.5;

#[derive(Clone)]
struct Block {
    q: Dense,
    k: Dense,
    v: Dense,
    o: Dense,
    f1: Dense,
    f2: Dense,
}

#[derive(Clone)]
pub(crate) struct Attention {
    input: usize,
    d: usize,
    heads: usize,
    start: Dense,
    pos: usize,
    embed: Vec<usize>,
    blocks: Vec<Block>,
    out: Vec<Dense>,
    schema: Schema,
}

#[derive(Default, Clone)]
struct LayerTape {
    x: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// Attention weights per position, head, and attended position.
    p: Vec<Vec<Vec<f64>>>,
    o: Vec<Vec<f64>>,
    hres: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
}

#[derive(Default)]
pub(crate) struct AttnTape {
    layers: Vec<LayerTape>,
    out: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Attention {
    pub fn new(
        layout: &mut LayoutBuilder,
        schema: &Schema,
        input: usize,
        d: usize,
        heads: usize,
        layers: usize,
        ffn: usize,
    ) -> Self {
        assert!(heads > 0 && d.is_multiple_of(heads), "d_model must be a multiple of heads");
        let start = layout.dense(d, input, 1.0);
        let pos = layout.block(schema.len() * d, POS_SCALE);
        let embed = schema
            .kinds()
            .iter()
            .map(|k| match k {
                HeadKind::Beta => layout.block(2 * d, EMBED_SCALE),
                HeadKind::Categorical(c) => layout.block(c * d, EMBED_SCALE),
            })
            .collect();
        let blocks = (0..layers)
            .map(|_| Block {
                q: layout.dense(d, d, 1.0),
                k: layout.dense(d, d, 1.0),
                v: layout.dense(d, d, 1.0),
                o: layout.dense(d, d, BRANCH_GAIN),
                f1: layout.dense(ffn, d, 1.0),
                f2: layout.dense(d, ffn, BRANCH_GAIN),
            })
            .collect();
        let out = schema.kinds().iter().map(|k| layout.dense(k.head_width(), d, HEAD_GAIN)).collect();
        Self { input, d, heads, start, pos, embed, blocks, out, schema: schema.clone() }
    }

    fn dim_at(&self, j: usize) -> usize {
        self.schema.len() - 1 - j
    }

    /// Token for position `j >= 1`: embedding of the value chosen for
    /// dimension `D - j`, plus the position embedding.
    fn token(&self, theta: &[f64], j: usize, value: f64) -> Vec<f64> {
        let d = self.d;
        let dim = self.schema.len() - j;
        let e = self.embed[dim];
        let p = &theta[self.pos + j * d..self.pos + (j + 1) * d];
        match self.schema.kinds()[dim] {
            HeadKind::Beta => (0..d).map(|c| theta[e + c] * value + theta[e + d + c] + p[c]).collect(),
            HeadKind::Categorical(_) => {
                let row = e + value as usize * d;
                (0..d).map(|c| theta[row + c] + p[c]).collect()
            }
        }
    }

    fn start_token(&self, theta: &[f64]) -> Vec<f64> {
        let ones = vec![1.0; self.input];
        let mut x = vec![0.0; self.d];
        self.start.forward(theta, &ones, &mut x);
        for (v, p) in x.iter_mut().zip(&theta[self.pos..self.pos + self.d]) {
            *v += p;
        }
        x
    }

    pub fn rollout(
        &self,
        theta: &[f64],
        choose: &mut dyn FnMut(usize, &[f64]) -> f64,
        tape: Option<&mut AttnTape>,
    ) -> Vec<f64> {
        let len = self.schema.len();
        let (d, nh) = (self.d, self.heads);
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut lt = vec![LayerTape::default(); self.blocks.len()];
        let mut outs = Vec::with_capacity(len);
        let mut values = Vec::with_capacity(len);
        let mut raw = vec![0.0; self.schema.head_total()];
        let mut x = self.start_token(theta);
        for j in 0..len {
            for (b, t) in self.blocks.iter().zip(lt.iter_mut()) {
                let mut q = vec![0.0; d];
                let mut k = vec![0.0; d];
                let mut v = vec![0.0; d];
                b.q.forward(theta, &x, &mut q);
                b.k.forward(theta, &x, &mut k);
                b.v.forward(theta, &x, &mut v);
                t.k.push(k);
                t.v.push(v);
                let mut o = vec![0.0; d];
                let mut probs = Vec::with_capacity(nh);
                for h in 0..nh {
                    let hs = h * dh..(h + 1) * dh;
                    let mut s: Vec<f64> = t.k.iter().map(|kt| dot(&q[hs.clone()], &kt[hs.clone()]) * scale).collect();
                    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for e in &mut s {
                        *e = (*e - m).exp();
                        z += *e;
                    }
                    for e in &mut s {
                        *e /= z;
                    }
                    for (pt, vt) in s.iter().zip(&t.v) {
                        for (oc, vc) in o[hs.clone()].iter_mut().zip(&vt[hs.clone()]) {
                            *oc += pt * vc;
                        }
                    }
                    probs.push(s);
                }
                let mut hres = vec![0.0; d];
                b.o.forward(theta, &o, &mut hres);
                for (h, xv) in hres.iter_mut().zip(&x) {
                    *h += xv;
                }
                let mut tt = vec![0.0; b.f1.rows];
                b.f1.forward(theta, &hres, &mut tt);
                for e in &mut tt {
                    *e = e.tanh();
                }
                let mut next = vec![0.0; d];
                b.f2.forward(theta, &tt, &mut next);
                for (nv, h) in next.iter_mut().zip(&hres) {
                    *nv += h;
                }
                t.x.push(std::mem::replace(&mut x, next));
                t.q.push(q);
                t.p.push(probs);
                t.o.push(o);
                t.hres.push(hres);
                t.t.push(tt);
            }
            let dim = self.dim_at(j);
            let range = self.schema.head_range(dim);
            self.out[dim].forward(theta, &x, &mut raw[range.clone()]);
            let value = choose(dim, &raw[range]);
            values.push(value);
            let done = std::mem::take(&mut x);
            outs.push(done);
            if j + 1 < len {
                x = self.token(theta, j + 1, value);
            }
        }
        if let Some(tape) = tape {
            tape.layers = lt;
            tape.out = outs;
            tape.values = values;
        }
        raw
    }

    pub fn backward(&self, theta: &[f64], tape: &AttnTape, d_raw: &[f64], grad: &mut [f64]) {
        let len = self.schema.len();
        let (d, nh) = (self.d, self.heads);
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dxs = vec![vec![0.0; d]; len];
        for (j, dx) in dxs.iter_mut().enumerate() {
            let dim = self.dim_at(j);
            self.out[dim].backward(theta, &tape.out[j], &d_raw[self.schema.head_range(dim)], grad, Some(dx));
        }
        for (b, t) in self.blocks.iter().zip(&tape.layers).rev() {
            let mut dq = vec![vec![0.0; d]; len];
            let mut dk = vec![vec![0.0; d]; len];
            let mut dv = vec![vec![0.0; d]; len];
            let mut dx_in = vec![vec![0.0; d]; len];
            for j in 0..len {
                let dy = &dxs[j];
                let mut dt = vec![0.0; b.f1.rows];
                b.f2.backward(theta, &t.t[j], dy, grad, Some(&mut dt));
                for (g, a) in dt.iter_mut().zip(&t.t[j]) {
                    *g *= 1.0 - a * a;
                }
                let mut dhres = dy.clone();
                b.f1.backward(theta, &t.hres[j], &dt, grad, Some(&mut dhres));
                let mut dout = vec![0.0; d];
                b.o.backward(theta, &t.o[j], &dhres, grad, Some(&mut dout));
                for (a, g) in dx_in[j].iter_mut().zip(&dhres) {
                    *a += g;
                }
                for h in 0..nh {
                    let hs = h * dh..(h + 1) * dh;
                    let p = &t.p[j][h];
                    let dp: Vec<f64> = (0..=j).map(|s| dot(&dout[hs.clone()], &t.v[s][hs.clone()])).collect();
                    let mean: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                    for s in 0..=j {
                        let ds = p[s] * (dp[s] - mean) * scale;
                        for c in hs.clone() {
                            dq[j][c] += ds * t.k[s][c];
                            dk[s][c] += ds * t.q[j][c];
                            dv[s][c] += p[s] * dout[c];
                        }
                    }
                }
            }
            for j in 0..len {
                b.q.backward(theta, &t.x[j], &dq[j], grad, Some(&mut dx_in[j]));
                b.k.backward(theta, &t.x[j], &dk[j], grad, Some(&mut dx_in[j]));
                b.v.backward(theta, &t.x[j], &dv[j], grad, Some(&mut dx_in[j]));
            }
            dxs = dx_in;
        }
        let ones = vec![1.0; self.input];
        self.start.backward(theta, &ones, &dxs[0], grad, None);
        for (j, dx) in dxs.iter().enumerate() {
            for (g, v) in grad[self.pos + j * d..self.pos + (j + 1) * d].iter_mut().zip(dx) {
                *g += v;
            }
            if j == 0 {
                continue;
            }
            let dim = len - j;
            let value = tape.values[j - 1];
            let e = self.embed[dim];
            match self.schema.kinds()[dim] {
                HeadKind::Beta => {
                    for c in 0..d {
                        grad[e + c] += value * dx[c];
                        grad[e + d + c] += dx[c];
                    }
                }
                HeadKind::Categorical(_) => {
                    let row = e + value as usize * d;
                    for c in 0..d {
                        grad[row + c] += dx[c];
                    }
                }
            }
        }
    }
}
