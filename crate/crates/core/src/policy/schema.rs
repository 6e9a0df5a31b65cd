use std::ops::Range;

use crate::dist::{BetaParams, CategoricalParams};
use crate::geometry::action_len;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Beta,
    Categorical(usize),
}

impl HeadKind {
    /// Raw network outputs consumed by the head.
    pub fn head_width(self) -> usize {
        match self {
            HeadKind::Beta => 2,
            HeadKind::Categorical(k) => k,
        }
    }

    /// Width of the value encoding fed back to the network.
    pub fn enc_width(self) -> usize {
        match self {
            HeadKind::Beta => 1,
            HeadKind::Categorical(k) => k,
        }
    }
}

/// Distribution parameters of one action dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadParams {
    Beta(BetaParams),
    Categorical(CategoricalParams),
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-dimension head kinds in canonical flat order, with offsets into the
/// concatenated head outputs and value encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    n: usize,
    kinds: Vec<HeadKind>,
    head_off: Vec<usize>,
    enc_off: Vec<usize>,
}

impl Schema {
    pub fn for_resonators(n: usize) -> Self {
        let mut kinds = vec![HeadKind::Beta];
        for _ in 0..n {
            kinds.extend([HeadKind::Categorical(4), HeadKind::Beta]);
        }
        for _ in 1..n {
            kinds.extend([
                HeadKind::Categorical(3),
                HeadKind::Categorical(3),
                HeadKind::Beta,
                HeadKind::Beta,
                HeadKind::Beta,
                HeadKind::Beta,
            ]);
        }
        debug_assert_eq!(kinds.len(), action_len(n));
        let offsets = |w: fn(HeadKind) -> usize| {
            let mut acc = 0;
            let mut out: Vec<usize> = kinds
                .iter()
                .map(|k| {
                    let o = acc;
                    acc += w(*k);
                    o
                })
                .collect();
            out.push(acc);
            out
        };
        let head_off = offsets(HeadKind::head_width);
        let enc_off = offsets(HeadKind::enc_width);
        Self { n, kinds, head_off, enc_off }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[HeadKind] {
        &self.kinds
    }

    pub fn head_total(&self) -> usize {
        *self.head_off.last().unwrap()
    }

    pub fn enc_total(&self) -> usize {
        *self.enc_off.last().unwrap()
    }

    pub fn head_range(&self, i: usize) -> Range<usize> {
        self.head_off[i]..self.head_off[i + 1]
    }

    pub fn enc_offset(&self, i: usize) -> usize {
        self.enc_off[i]
    }

    /// Column within the dimension's encoding and the value written there.
    pub fn encode(&self, i: usize, value: f64) -> (usize, f64) {
        match self.kinds[i] {
            HeadKind::Beta => (0, value),
            HeadKind::Categorical(_) => (value as usize, 1.0),
        }
    }

    /// Maps raw outputs of dimension `i` to distribution parameters.
    pub fn params(&self, i: usize, raw: &[f64]) -> HeadParams {
        match self.kinds[i] {
            HeadKind::Beta => {
                HeadParams::Beta(BetaParams { alpha: softplus(raw[0]) + 1.0, beta: softplus(raw[1]) + 1.0 })
            }
            HeadKind::Categorical(_) => HeadParams::Categorical(CategoricalParams { logits: raw.to_vec() }),
        }
    }

    /// Checks that a flat action matches the schema: unit-interval continuous
    /// entries and integral class indices.
    pub fn check_action(&self, flat: &[f64]) -> Result<(), String> {
        if flat.len() != self.len() {
            return Err(format!("action has {} entries, schema expects {}", flat.len(), self.len()));
        }
        for (i, (k, v)) in self.kinds.iter().zip(flat).enumerate() {
            let ok = match k {
                HeadKind::Beta => (0.0..=1.0).contains(v),
                HeadKind::Categorical(c) => v.fract() == 0.0 && *v >= 0.0 && (*v as usize) < *c,
            };
            if !ok {
                return Err(format!("entry {i} = {v} does not fit head {k:?}"));
            }
        }
        Ok(())
    }
}
