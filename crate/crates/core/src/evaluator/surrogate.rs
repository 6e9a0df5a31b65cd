//! Narrowband coupling-matrix model of a chain of square resonators.
//!
//! Each resonator contributes one pole whose frequency follows its side
//! length and slit offset. Pairwise couplings decay exponentially with the
//! edge-to-edge distance and are scaled by the relative slit orientation.
//! Ports attach to the first and last resonator.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{linear_grid, validate_grid, EvalError, TransferFunction};
use crate::geometry::CircuitDesign;

/// Coupling scale used for perpendicular slits, where `cos` would vanish.
pub const PERPENDICULAR_COUPLING: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    /// Hz times length: resonant frequency of a side-`a` loop is `f_scale / (4a)`.
    pub f_scale: f64,
    pub frac_bw: f64,
    pub k0: f64,
    /// Coupling decay length, in units of the side.
    pub decay: f64,
    pub q_e: f64,
    pub slit_detune: f64,
    pub m: usize,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            f_scale: 1.08e12,
            frac_bw: 0.08,
            k0: 1.5,
            decay: 0.25,
            q_e: 1.0,
            slit_detune: 0.5,
            m: 64,
            f_lo: 200e9,
            f_hi: 400e9,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("f_scale", self.f_scale),
            ("frac_bw", self.frac_bw),
            ("k0", self.k0),
            ("decay", self.decay),
            ("q_e", self.q_e),
            ("slit_detune", self.slit_detune),
            ("f_lo", self.f_lo),
            ("f_hi", self.f_hi),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("surrogate.{name} must be positive and finite, got {v}"));
            }
        }
        if self.m < 2 {
            return Err(format!("surrogate.m must be at least 2, got {}", self.m));
        }
        if self.f_lo >= self.f_hi {
            return Err(format!("surrogate.f_lo ({}) must be below f_hi ({})", self.f_lo, self.f_hi));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        linear_grid(self.m, self.f_lo, self.f_hi)
    }
}

fn orientation_factor(u: u8, v: u8) -> f64 {
    match (i16::from(u) - i16::from(v)).rem_euclid(4) {
        0 => 1.0,
        2 => -1.0,
        _ => PERPENDICULAR_COUPLING,
    }
}

/// Solves `A x = e_1` by Gaussian elimination with partial pivoting and
/// returns `x`, or `None` when a pivot vanishes.
fn solve_first_column(a: &mut [Complex64], n: usize) -> Option<Vec<Complex64>> {
    let scale = a.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    b[0] = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm())).unwrap();
        if !(a[piv * n + col].norm() > tiny) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let inv = a[col * n + col].inv();
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] -= factor * v;
            }
            let v = b[col];
            b[row] -= factor * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

/// Evaluates S21 on the configured grid.
pub fn surrogate_eval(design: &CircuitDesign, cfg: &SurrogateConfig) -> Result<TransferFunction, EvalError> {
    surrogate_eval_at(design, cfg, &cfg.grid())
}

/// Evaluates S21 on an explicit frequency grid.
pub fn surrogate_eval_at(
    design: &CircuitDesign,
    cfg: &SurrogateConfig,
    freqs: &[f64],
) -> Result<TransferFunction, EvalError> {
    design.validate().map_err(|e| EvalError::InvalidDesign { index: 0, msg: e.to_string() })?;
    validate_grid(freqs).map_err(|e| EvalError::InvalidDesign { index: 0, msg: e.to_string() })?;

    let n = design.n();
    let side = design.side();
    let res = &design.resonators;
    let inv_bw = 1.0 / cfg.frac_bw;

    let poles: Vec<f64> =
        res.iter().map(|r| cfg.f_scale / (4.0 * side) * (1.0 + cfg.slit_detune * r.slit_offset)).collect();
    let f0 = (poles.iter().map(|f| f.ln()).sum::<f64>() / n as f64).exp();

    // Frequency-independent part: detuning on the diagonal, couplings off it,
    // port loading at the two ends.
    let mut base = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        base[i * n + i] = Complex64::new(inv_bw * (f0 / poles[i] - poles[i] / f0), 0.0);
        for j in i + 1..n {
            let dx = res[i].center[0] - res[j].center[0];
            let dy = res[i].center[1] - res[j].center[1];
            let gap = ((dx * dx + dy * dy).sqrt() - side).max(0.0);
            let k = cfg.k0 * (-gap / (cfg.decay * side)).exp() * orientation_factor(res[i].slit_dir, res[j].slit_dir);
            base[i * n + j] = Complex64::new(k, 0.0);
            base[j * n + i] = Complex64::new(k, 0.0);
        }
    }
    let load = Complex64::new(0.0, 1.0 / cfg.q_e);
    base[0] -= load;
    base[n * n - 1] -= load;

    let port = Complex64::new(0.0, -2.0 / cfg.q_e);
    let mut s21 = Vec::with_capacity(freqs.len());
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    for &w in freqs {
        let lambda = inv_bw * (w / f0 - f0 / w);
        let mut solved = None;
        for nudge in [0.0, 1e-9] {
            a.copy_from_slice(&base);
            for i in 0..n {
                a[i * n + i] += lambda + nudge;
            }
            if let Some(x) = solve_first_column(&mut a, n) {
                solved = Some(x);
                break;
            }
        }
        let x = solved.ok_or(EvalError::Singular { freq: w })?;
        s21.push(port * x[n - 1]);
    }
    Ok(TransferFunction { freqs: freqs.to_vec(), s21 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Resonator;

    fn design(centers: &[[f64; 2]], dirs: &[u8], offsets: &[f64], side: f64) -> CircuitDesign {
        CircuitDesign {
            resonators: centers
                .iter()
                .zip(dirs)
                .zip(offsets)
                .map(|((&center, &slit_dir), &slit_offset)| Resonator { center, side, slit_dir, slit_offset })
                .collect(),
            boundary: None,
        }
    }

    /// Dense complex inverse by Gauss-Jordan, used as an independent oracle.
    fn inverse(mut a: Vec<Complex64>, n: usize) -> Vec<Complex64> {
        let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            inv[i * n + i] = Complex64::new(1.0, 0.0);
        }
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i * n + c].norm().total_cmp(&a[j * n + c].norm())).unwrap();
            for k in 0..n {
                a.swap(c * n + k, p * n + k);
                inv.swap(c * n + k, p * n + k);
            }
            let d = a[c * n + c];
            for k in 0..n {
                a[c * n + k] /= d;
                inv[c * n + k] /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = a[r * n + c];
                    for k in 0..n {
                        let (av, iv) = (a[c * n + k], inv[c * n + k]);
                        a[r * n + k] -= f * av;
                        inv[r * n + k] -= f * iv;
                    }
                }
            }
        }
        inv
    }

    #[test]
    fn matches_dense_inverse_oracle() {
        let cfg = SurrogateConfig::default();
        let d = design(&[[0.0, 0.0], [1.0, 0.2], [2.1, -0.3]], &[0, 1, 2], &[0.02, -0.05, 0.0], 0.9);
        let freqs = [250e9, 290e9, 300e9, 310e9, 350e9];
        let tf = surrogate_eval_at(&d, &cfg, &freqs).unwrap();
        let n = 3;
        let poles: Vec<f64> = d.resonators.iter().map(|r| cfg.f_scale / 3.6 * (1.0 + 0.5 * r.slit_offset)).collect();
        let f0 = (poles[0] * poles[1] * poles[2]).cbrt();
        for (idx, &w) in freqs.iter().enumerate() {
            let mut a = vec![Complex64::new(0.0, 0.0); 9];
            let lam = (w / f0 - f0 / w) / cfg.frac_bw;
            for i in 0..n {
                a[i * n + i] = Complex64::new(lam + (f0 / poles[i] - poles[i] / f0) / cfg.frac_bw, 0.0);
                for j in 0..n {
                    if i != j {
                        let (ri, rj) = (&d.resonators[i], &d.resonators[j]);
                        let dist =
                            ((ri.center[0] - rj.center[0]).powi(2) + (ri.center[1] - rj.center[1]).powi(2)).sqrt();
                        let o = [1.0, 0.3, -1.0, 0.3]
                            [(i16::from(ri.slit_dir) - i16::from(rj.slit_dir)).rem_euclid(4) as usize];
                        a[i * n + j] =
                            Complex64::new(cfg.k0 * (-(dist - 0.9).max(0.0) / (cfg.decay * 0.9)).exp() * o, 0.0);
                    }
                }
            }
            a[0] -= Complex64::new(0.0, 1.0 / cfg.q_e);
            a[8] -= Complex64::new(0.0, 1.0 / cfg.q_e);
            let inv = inverse(a, n);
            let want = Complex64::new(0.0, -2.0 / cfg.q_e) * inv[2 * n];
            assert!((tf.s21[idx] - want).norm() < 1e-12 * want.norm().max(1e-3), "{} vs {}", tf.s21[idx], want);
        }
    }

    #[test]
    fn uncoupled_pair_blocks() {
        let cfg = SurrogateConfig::default();
        let d = design(&[[0.0, 0.0], [1e4, 0.0]], &[0, 0], &[0.0, 0.0], 0.9);
        let freqs = [250e9, 280e9, 300e9, 320e9, 350e9];
        let tf = surrogate_eval_at(&d, &cfg, &freqs).unwrap();
        for c in &tf.s21 {
            assert!(c.norm() < 1e-12);
        }
    }

    #[test]
    fn symmetric_pair_is_symmetric_on_log_grid() {
        let cfg = SurrogateConfig::default();
        let side = 0.9;
        let d = design(&[[0.0, 0.0], [1.0, 0.0]], &[1, 3], &[0.03, 0.03], side);
        let f0 = cfg.f_scale / (4.0 * side) * (1.0 + cfg.slit_detune * 0.03);
        let m = 41;
        let freqs: Vec<f64> = (0..m).map(|i| f0 * (0.3 * (i as f64 - 20.0) / 20.0).exp()).collect();
        let tf = surrogate_eval_at(&d, &cfg, &freqs).unwrap();
        for i in 0..m {
            let (a, b) = (tf.s21[i].norm(), tf.s21[m - 1 - i].norm());
            assert!((a - b).abs() < 1e-10, "{i}: {a} vs {b}");
        }
    }

    #[test]
    fn deterministic_and_passive() {
        let cfg = SurrogateConfig::default();
        let d =
            design(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.1], [2.1, 1.0]], &[0, 1, 2, 3], &[0.01, -0.02, 0.05, 0.0], 0.9);
        let a = surrogate_eval(&d, &cfg).unwrap();
        let b = surrogate_eval(&d, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.m(), 64);
        assert!(a.s21.iter().all(|c| c.norm() <= 1.0 + 1e-9));
    }

    #[test]
    fn orientation_table() {
        assert_eq!(orientation_factor(0, 0), 1.0);
        assert_eq!(orientation_factor(0, 2), -1.0);
        assert_eq!(orientation_factor(3, 1), -1.0);
        assert_eq!(orientation_factor(0, 1), 0.3);
        assert_eq!(orientation_factor(0, 3), 0.3);
    }

    #[test]
    fn solver_flags_singular() {
        let mut a = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(4.0, 0.0),
        ];
        assert!(solve_first_column(&mut a, 2).is_none());
    }
}
