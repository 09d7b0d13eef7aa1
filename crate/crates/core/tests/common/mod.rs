//! Independent numerical oracles shared by the integration tests. Nothing
//! here calls into the code paths it is used to check.
#![allow(dead_code)]

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol.max(1e-13 * v.abs()) || depth > 18 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(&f, a, b, tol, 0)
}

/// `K_ν(x) = ∫_0^∞ exp(−x cosh t) cosh(νt) dt`.
pub fn bessel_k_integral(nu: f64, x: f64) -> f64 {
    let upper = (1.0 + 800.0 / x).acosh() + 1.0;
    integrate(|t| (-x * t.cosh()).exp() * (nu * t).cosh(), 0.0, upper, 0.0)
}

/// K_1 by the ascending series (60 terms), valid for moderate x.
pub fn bessel_k1_series(x: f64) -> f64 {
    let y = 0.25 * x * x;
    let mut i1 = 0.0;
    let mut s = 0.0;
    let mut t = 1.0;
    let mut psi1 = -0.577_215_664_901_532_9_f64;
    for k in 0..60 {
        let kf = k as f64;
        let psi2 = psi1 + 1.0 / (kf + 1.0);
        i1 += t;
        s += (psi1 + psi2) * t;
        t *= y / ((kf + 1.0) * (kf + 2.0));
        psi1 = psi2;
    }
    1.0 / x + (0.5 * x).ln() * 0.5 * x * i1 - 0.25 * x * s
}

/// Large-argument asymptotic expansion of K_1.
pub fn bessel_k1_asymptotic(x: f64) -> f64 {
    let mu = 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..12 {
        let kf = k as f64;
        term *= (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
        sum += term;
    }
    (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() * sum
}

/// Cumulative integral of `pdf` on a uniform grid, for KS tests.
pub struct GridCdf {
    lo: f64,
    step: f64,
    cdf: Vec<f64>,
}

impl GridCdf {
    pub fn new<F: Fn(f64) -> f64>(pdf: F, lo: f64, hi: f64, cells: usize) -> Self {
        let step = (hi - lo) / cells as f64;
        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 0..cells {
            let a = lo + i as f64 * step;
            acc += integrate(&pdf, a, a + step, 1e-13);
            cdf.push(acc);
        }
        Self { lo, step, cdf }
    }

    pub fn at(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        if pos <= 0.0 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.cdf.len() {
            return *self.cdf.last().unwrap();
        }
        let frac = pos - i as f64;
        self.cdf[i] + frac * (self.cdf[i + 1] - self.cdf[i])
    }
}

/// Two-sided KS distance between a sample and a CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}
