#![allow(dead_code)]

/// Tanh-sinh quadrature over (0, 1). The integrand receives both `x` and
/// `1 - x`, each computed without cancellation, so endpoint singularities in
/// either log term stay accurate.
pub fn tanh_sinh01(f: impl Fn(f64, f64) -> f64) -> f64 {
    let h = 1.0 / 64.0;
    let pi = std::f64::consts::PI;
    let mut sum = 0.0;
    let mut k: i64 = -(4.5 / h) as i64;
    while (k as f64) * h <= 4.5 {
        let t = k as f64 * h;
        let s = std::f64::consts::PI * t.sinh();
        let x = 1.0 / (1.0 + (-s).exp());
        let y = 1.0 / (1.0 + s.exp());
        let w = pi * t.cosh() * x * y;
        if x > 0.0 && y > 0.0 && w > 0.0 {
            let v = f(x, y);
            if v.is_finite() {
                sum += w * v;
            }
        }
        k += 1;
    }
    sum * h
}

/// max |a - b| / max |b|.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Central difference of `f` at `x` in every coordinate.
pub fn central_diff(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut a = x.to_vec();
            a[k] += h;
            let mut b = x.to_vec();
            b[k] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// `ln Beta(a, b)` from an independent Lanczos log-gamma, so quadrature
/// checks do not lean on the library's special functions.
pub fn ln_beta_ref(a: f64, b: f64) -> f64 {
    lanczos_ln_gamma(a) + lanczos_ln_gamma(b) - lanczos_ln_gamma(a + b)
}

fn lanczos_ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - lanczos_ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}
