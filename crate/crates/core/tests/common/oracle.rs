//! Definition-based statistics oracles shared by the oracle tests and the
//! acceptance suite.

#![allow(dead_code)]

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
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
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `∫_{x0}^{∞} density(x) dx` with `x = x0·e^v`, composite Simpson on
/// `[0, V]`. Past `x = knee` the integrand decays like `e^{-v·decay}`.
pub fn upper_tail(density: impl Fn(f64) -> f64, x0: f64, knee: f64, decay: f64) -> f64 {
    let v_max = (knee.max(1.0) / x0).ln().max(0.0) + 80.0 / decay;
    let n = 60_000;
    let h = v_max / n as f64;
    let f = |v: f64| {
        let x = x0 * v.exp();
        density(x) * x
    };
    let mut s = f(0.0) + f(v_max);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub fn f_tail_oracle(f: f64, d1: f64, d2: f64) -> f64 {
    let ln_c = 0.5 * d1 * (d1 / d2).ln() - ln_beta(d1 / 2.0, d2 / 2.0);
    let dens = |x: f64| {
        (ln_c + (d1 / 2.0 - 1.0) * x.ln() - (d1 + d2) / 2.0 * (1.0 + d1 * x / d2).ln()).exp()
    };
    upper_tail(dens, f, d2 / d1, d2 / 2.0)
}

pub fn t_two_tailed_oracle(t: f64, nu: f64) -> f64 {
    let ln_c = -0.5 * nu.ln() - ln_beta(nu / 2.0, 0.5);
    let dens = |x: f64| (ln_c - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()).exp();
    2.0 * upper_tail(dens, t.abs(), nu.sqrt(), nu)
}

/// F from explicit residuals `y − row mean − column mean + grand mean`.
pub fn anova_oracle(m: &[Vec<f64>]) -> (f64, f64, f64) {
    let n = m.len();
    let k = m[0].len();
    let grand: f64 = m.iter().flatten().sum::<f64>() / (n * k) as f64;
    let row: Vec<f64> = m.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let col: Vec<f64> = (0..k).map(|j| m.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut ss_err = 0.0;
    for i in 0..n {
        for j in 0..k {
            let e = m[i][j] - row[i] - col[j] + grand;
            ss_err += e * e;
        }
    }
    let ss_cond: f64 = col.iter().map(|c| n as f64 * (c - grand).powi(2)).sum();
    let (d1, d2) = ((k - 1) as f64, ((k - 1) * (n - 1)) as f64);
    let f = (ss_cond / d1) / (ss_err / d2);
    (f, f_tail_oracle(f, d1, d2), ss_err)
}

/// `t = Σd·√(n−1) / √(nΣd² − (Σd)²)`.
pub fn t_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s: f64 = d.iter().sum();
    let s2: f64 = d.iter().map(|v| v * v).sum();
    let t = s * (n - 1.0).sqrt() / (n * s2 - s * s).sqrt();
    (t, t_two_tailed_oracle(t, n - 1.0))
}

pub fn rel_close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(1e-300)
}

