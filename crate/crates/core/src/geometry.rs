//! Mapping from raw compound actions to resonator layouts.
//!
//! A compound action holds one shared length action, a slit (direction,
//! offset) pair per resonator and one placement tuple for every resonator
//! after the first. The first resonator sits at the origin; every other
//! resonator is placed relative to its predecessor by clamped interpolation,
//! which keeps all centers inside the center region and all squares inside
//! the outer boundary.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Slit offsets are bounded by `SLIT_SCALE * tanh(1)` in fractions of a side.
pub const SLIT_SCALE: f64 = 0.125;

/// Number of continuous/discrete entries per placement tuple.
pub const PLACEMENT_WIDTH: usize = 6;

/// Flattened action length for `n` resonators.
pub fn action_len(n: usize) -> usize {
    8 * n - 5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x_min >= self.x_min && other.x_max <= self.x_max && other.y_min >= self.y_min && other.y_max <= self.y_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonator {
    pub center: [f64; 2],
    pub side: f64,
    /// 0 up, 1 left, 2 down, 3 right.
    pub slit_dir: u8,
    /// Signed slit offset along its edge, in fractions of `side`.
    pub slit_offset: f64,
}

impl Resonator {
    pub fn footprint(&self) -> Rect {
        let h = self.side / 2.0;
        Rect {
            x_min: self.center[0] - h,
            x_max: self.center[0] + h,
            y_min: self.center[1] - h,
            y_max: self.center[1] + h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    /// Maximum circuit extent.
    pub extent: f64,
    pub outer: Rect,
    pub center_region: Rect,
    pub side: f64,
    pub g_min_ratio: f64,
    pub g_max_ratio: f64,
    pub n_budget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitDesign {
    pub resonators: Vec<Resonator>,
    /// Boundary the design was mapped under; `None` for designs read from disk.
    pub boundary: Option<BoundarySpec>,
}

impl CircuitDesign {
    pub fn n(&self) -> usize {
        self.resonators.len()
    }

    pub fn side(&self) -> f64 {
        self.resonators.first().map_or(0.0, |r| r.side)
    }

    /// Checks the structural invariants shared by mapped and loaded designs.
    pub fn validate(&self) -> Result<()> {
        if self.resonators.len() < 2 {
            return Err(invalid(format!("a design needs at least 2 resonators, got {}", self.resonators.len())));
        }
        let side = self.side();
        for (i, r) in self.resonators.iter().enumerate() {
            if !(r.side > 0.0 && r.side.is_finite()) {
                return Err(invalid(format!("resonator {i}: side must be positive")));
            }
            if (r.side - side).abs() > 0.0 {
                return Err(invalid(format!("resonator {i}: all sides must be equal")));
            }
            if r.slit_dir > 3 {
                return Err(invalid(format!("resonator {i}: slit_dir {} not in 0..4", r.slit_dir)));
            }
            if !(r.slit_offset.abs() <= SLIT_SCALE * 1f64.tanh() + 1e-15) {
                return Err(invalid(format!("resonator {i}: slit_offset {} out of range", r.slit_offset)));
            }
            if !(r.center[0].is_finite() && r.center[1].is_finite()) {
                return Err(invalid(format!("resonator {i}: non-finite center")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slit {
    pub a_u: u8,
    pub a_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    /// 0 above, 1 below, 2 right of the previous resonator.
    pub a_d: u8,
    pub a_f: u8,
    pub a_us: f64,
    pub a_ug: f64,
    pub a_x: f64,
    pub a_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompoundAction {
    pub a_l: f64,
    pub slits: Vec<Slit>,
    pub placements: Vec<Placement>,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} is outside [0, 1]")))
    }
}

fn check_class(name: &str, v: u8, k: u8) -> Result<()> {
    if v < k {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} is outside 0..{k}")))
    }
}

impl CompoundAction {
    pub fn n(&self) -> usize {
        self.slits.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(invalid(format!("need at least 2 resonators, got {n}")));
        }
        if self.slits.len() != n || self.placements.len() + 1 != n {
            return Err(invalid(format!(
                "action shaped for {} slits / {} placements, expected {n} / {}",
                self.slits.len(),
                self.placements.len(),
                n - 1
            )));
        }
        check_unit("a_l", self.a_l)?;
        for s in &self.slits {
            check_class("a_u", s.a_u, 4)?;
            check_unit("a_s", s.a_s)?;
        }
        for p in &self.placements {
            check_class("a_d", p.a_d, 3)?;
            check_class("a_f", p.a_f, 3)?;
            check_unit("a_us", p.a_us)?;
            check_unit("a_ug", p.a_ug)?;
            check_unit("a_x", p.a_x)?;
            check_unit("a_y", p.a_y)?;
        }
        Ok(())
    }

    /// Canonical flat layout: `[a_l; (a_u, a_s) x N; (a_d, a_f, a_us, a_ug, a_x, a_y) x (N-1)]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(action_len(self.n()));
        out.push(self.a_l);
        for s in &self.slits {
            out.push(f64::from(s.a_u));
            out.push(s.a_s);
        }
        for p in &self.placements {
            out.extend_from_slice(&[f64::from(p.a_d), f64::from(p.a_f), p.a_us, p.a_ug, p.a_x, p.a_y]);
        }
        out
    }

    pub fn from_flat(n: usize, flat: &[f64]) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("need at least 2 resonators, got {n}")));
        }
        if flat.len() != action_len(n) {
            return Err(invalid(format!(
                "flat action has length {}, expected {} for N = {n}",
                flat.len(),
                action_len(n)
            )));
        }
        let class = |name: &str, v: f64, k: u8| -> Result<u8> {
            if v.fract() == 0.0 && v >= 0.0 && v < f64::from(k) {
                Ok(v as u8)
            } else {
                Err(invalid(format!("{name} = {v} is not a class index in 0..{k}")))
            }
        };
        let slits = (0..n)
            .map(|i| Ok(Slit { a_u: class("a_u", flat[1 + 2 * i], 4)?, a_s: flat[2 + 2 * i] }))
            .collect::<Result<Vec<_>>>()?;
        let base = 1 + 2 * n;
        let placements = (0..n - 1)
            .map(|j| {
                let p = &flat[base + PLACEMENT_WIDTH * j..base + PLACEMENT_WIDTH * (j + 1)];
                Ok(Placement {
                    a_d: class("a_d", p[0], 3)?,
                    a_f: class("a_f", p[1], 3)?,
                    a_us: p[2],
                    a_ug: p[3],
                    a_x: p[4],
                    a_y: p[5],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let action = CompoundAction { a_l: flat[0], slits, placements };
        action.validate(n)?;
        Ok(action)
    }
}

pub fn slit_direction(a_u: u8) -> Result<[f64; 4]> {
    check_class("a_u", a_u, 4)?;
    let mut u = [0.0; 4];
    u[a_u as usize] = 1.0;
    Ok(u)
}

pub fn slit_offset(a_u: u8, a_s: f64) -> Result<[f64; 4]> {
    check_class("a_u", a_u, 4)?;
    check_unit("a_s", a_s)?;
    let mut s = [0.0; 4];
    s[a_u as usize] = SLIT_SCALE * (2.0 * a_s - 1.0).tanh();
    Ok(s)
}

pub fn resonator_length(a_l: f64, base_length: f64) -> Result<f64> {
    check_unit("a_l", a_l)?;
    if !(base_length > 0.0) {
        return Err(invalid(format!("base length must be positive, got {base_length}")));
    }
    Ok(base_length * (a_l + 1.0))
}

pub fn make_boundary(n_budget: usize, side: f64, g_min_ratio: f64, g_max_ratio: f64) -> Result<BoundarySpec> {
    if n_budget < 2 {
        return Err(invalid(format!("resonator budget must be at least 2, got {n_budget}")));
    }
    if !(g_min_ratio > 0.0 && g_min_ratio <= g_max_ratio) {
        return Err(invalid(format!("gap ratios must satisfy 0 < g_min <= g_max, got {g_min_ratio}, {g_max_ratio}")));
    }
    let nb = n_budget as f64;
    let extent = side * nb + side * g_max_ratio * (nb - 1.0);
    let outer =
        Rect { x_min: -side / 2.0, x_max: (2.0 * extent - side) / 2.0, y_min: -extent / 2.0, y_max: extent / 2.0 };
    let h = side / 2.0;
    Ok(BoundarySpec {
        extent,
        outer,
        center_region: Rect {
            x_min: 0.0,
            x_max: fit_below(extent - side, h, outer.x_max),
            y_min: fit_above((side - extent) / 2.0, h, outer.y_min),
            y_max: fit_below((extent - side) / 2.0, h, outer.y_max),
        },
        side,
        g_min_ratio,
        g_max_ratio,
        n_budget,
    })
}

/// Largest value not above `c` whose footprint edge `c + h` stays within
/// `limit` after rounding.
fn fit_below(mut c: f64, h: f64, limit: f64) -> f64 {
    while c + h > limit {
        c = c.next_down();
    }
    c
}

fn fit_above(mut c: f64, h: f64, limit: f64) -> f64 {
    while c - h < limit {
        c = c.next_up();
    }
    c
}

pub fn shift_factor(a_f: u8) -> Result<f64> {
    match a_f {
        0 => Ok(0.0),
        1 => Ok(0.2),
        2 => Ok(0.5),
        _ => Err(invalid(format!("a_f = {a_f} is outside 0..3"))),
    }
}

/// Shift deviation, linear in `a_us` between 0 and `side * factor`.
pub fn deviation_shift(a_us: f64, side: f64, factor: f64) -> f64 {
    let (l, r) = (0.0, side * factor);
    a_us * (r - l) + l
}

/// Gap deviation, geometric in `a_ug` between `side * g_min_ratio` and `side * g_max_ratio`.
pub fn deviation_gap(a_ug: f64, side: f64, g_min_ratio: f64, g_max_ratio: f64) -> f64 {
    let (l, r) = (side * g_min_ratio, side * g_max_ratio);
    if a_ug <= 0.0 {
        return l;
    }
    if a_ug >= 1.0 {
        return r;
    }
    (l * (r / l).powf(a_ug)).clamp(l, r)
}

/// `t * hi + (1 - t) * lo`, kept inside `[lo, hi]` against rounding.
fn interpolate(t: f64, lo: f64, hi: f64) -> f64 {
    let v = t * hi + (1.0 - t) * lo;
    v.clamp(lo.min(hi), lo.max(hi))
}

/// Which clamp arguments won in a placement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClampReport {
    pub x: bool,
    pub y: bool,
}

impl ClampReport {
    pub fn any(&self) -> bool {
        self.x || self.y
    }
}

#[allow(clippy::too_many_arguments)]
fn place(
    prev: [f64; 2],
    a_d: u8,
    a_x: f64,
    a_y: f64,
    d_s: f64,
    d_g: f64,
    side: f64,
    x_cap: f64,
    spec: &BoundarySpec,
) -> ([f64; 2], ClampReport) {
    let [px, py] = prev;
    let top = spec.center_region.y_max;
    let bottom = spec.center_region.y_min;
    let mut report = ClampReport::default();
    let point = match a_d {
        0 | 1 => {
            let reach = px + d_s;
            report.x = x_cap < reach;
            let x = interpolate(a_x, px, reach.min(x_cap));
            let y = if a_d == 0 {
                let want = py + side + d_g;
                report.y = top < want;
                want.min(top)
            } else {
                let want = py - side - d_g;
                report.y = bottom > want;
                want.max(bottom)
            };
            [x, y]
        }
        _ => {
            let want = px + side + d_g;
            report.x = x_cap < want;
            let x = want.min(x_cap);
            let hi = py + d_s;
            let lo = py - d_s;
            report.y = top < hi || bottom > lo;
            [x, interpolate(a_y, lo.max(bottom), hi.min(top))]
        }
    };
    (point, report)
}

/// Center of an intermediate resonator given its predecessor.
#[allow(clippy::too_many_arguments)]
pub fn place_intermediate(
    prev: [f64; 2],
    a_d: u8,
    a_x: f64,
    a_y: f64,
    d_s: f64,
    d_g: f64,
    side: f64,
    spec: &BoundarySpec,
) -> [f64; 2] {
    let cap = (spec.extent - 2.0 * side - d_g).min(spec.center_region.x_max);
    place(prev, a_d, a_x, a_y, d_s, d_g, side, cap, spec).0
}

/// Center of the final (rightmost) resonator; its x clamp reserves no room
/// for a successor.
#[allow(clippy::too_many_arguments)]
pub fn place_final(
    prev: [f64; 2],
    a_d: u8,
    a_x: f64,
    a_y: f64,
    d_s: f64,
    d_g: f64,
    side: f64,
    spec: &BoundarySpec,
) -> [f64; 2] {
    place(prev, a_d, a_x, a_y, d_s, d_g, side, spec.center_region.x_max, spec).0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingMode {
    /// Predecessor-relative placement.
    #[default]
    Interdependent,
    /// Every center is placed directly in the center region from `(a_x, a_y)`.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// Base length `L`; the shared side ranges over `[L, 2L]`.
    pub base_length: f64,
    pub g_min_ratio: f64,
    pub g_max_ratio: f64,
    /// Resonator budget used for the boundary; `None` means N.
    pub n_budget: Option<usize>,
    pub mode: MappingMode,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { base_length: 0.6, g_min_ratio: 0.1, g_max_ratio: 0.5, n_budget: None, mode: MappingMode::Interdependent }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_length > 0.0 && self.base_length.is_finite()) {
            return Err(invalid("base_length must be positive"));
        }
        if !(self.g_min_ratio > 0.0 && self.g_min_ratio <= self.g_max_ratio && self.g_max_ratio.is_finite()) {
            return Err(invalid("gap ratios must satisfy 0 < g_min_ratio <= g_max_ratio"));
        }
        if matches!(self.n_budget, Some(b) if b < 2) {
            return Err(invalid("n_budget must be at least 2"));
        }
        Ok(())
    }

    pub fn map(&self, action: &CompoundAction) -> Result<CircuitDesign> {
        self.map_traced(action).map(|(d, _)| d)
    }

    /// Maps an action and reports, per placed resonator, which clamps engaged.
    pub fn map_traced(&self, action: &CompoundAction) -> Result<(CircuitDesign, Vec<ClampReport>)> {
        let n = action.n();
        action.validate(n)?;
        let budget = self.n_budget.unwrap_or(n).max(n);
        let side = resonator_length(action.a_l, self.base_length)?;
        let spec = make_boundary(budget, side, self.g_min_ratio, self.g_max_ratio)?;

        let mut centers = Vec::with_capacity(n);
        let mut reports = Vec::with_capacity(n - 1);
        centers.push([0.0, 0.0]);
        for (j, p) in action.placements.iter().enumerate() {
            let prev = centers[j];
            let (c, rep) = match self.mode {
                MappingMode::Interdependent => {
                    let d_s = deviation_shift(p.a_us, side, shift_factor(p.a_f)?);
                    let d_g = deviation_gap(p.a_ug, side, self.g_min_ratio, self.g_max_ratio);
                    let is_final = j + 2 == n;
                    let cap = if is_final {
                        spec.center_region.x_max
                    } else {
                        (spec.extent - 2.0 * side - d_g).min(spec.center_region.x_max)
                    };
                    place(prev, p.a_d, p.a_x, p.a_y, d_s, d_g, side, cap, &spec)
                }
                MappingMode::Direct => {
                    let span = spec.extent - side;
                    let x = (p.a_x * span).clamp(0.0, spec.center_region.x_max);
                    let y = (p.a_y * span + (side - spec.extent) / 2.0)
                        .clamp(spec.center_region.y_min, spec.center_region.y_max);
                    ([x, y], ClampReport::default())
                }
            };
            centers.push(c);
            reports.push(rep);
        }

        let resonators = centers
            .into_iter()
            .zip(&action.slits)
            .map(|(center, s)| Resonator {
                center,
                side,
                slit_dir: s.a_u,
                slit_offset: SLIT_SCALE * (2.0 * s.a_s - 1.0).tanh(),
            })
            .collect();
        Ok((CircuitDesign { resonators, boundary: Some(spec) }, reports))
    }
}

/// Maps an action with explicit geometry parameters.
pub fn map_actions(
    action: &CompoundAction,
    base_length: f64,
    g_min_ratio: f64,
    g_max_ratio: f64,
    n_budget: usize,
) -> Result<CircuitDesign> {
    GeometryConfig {
        base_length,
        g_min_ratio,
        g_max_ratio,
        n_budget: Some(n_budget),
        mode: MappingMode::Interdependent,
    }
    .map(action)
}
