//! Independent numerical oracles shared by the integration tests. Nothing
//! here calls into the crate's numerics.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::hash::Hash;

use rand::Rng;
use rand_distr::Exp1;

/// Lanczos approximation (g = 7, n = 9), relative error below 1e-15.
pub fn ln_gamma(x: f64) -> f64 {
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
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let lc = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    let a = if k == 0 { 0.0 } else { k as f64 * p.ln() };
    let b = if k == n {
        0.0
    } else {
        (n - k) as f64 * (1.0 - p).ln()
    };
    (lc + a + b).exp()
}

pub fn gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x).exp()
}

pub fn poisson_pmf(k: u32, mean: f64) -> f64 {
    (k as f64 * mean.ln() - mean - ln_factorial(k as u64)).exp()
}

pub fn dirichlet_pdf(x: &[f64], a: &[f64]) -> f64 {
    let a0: f64 = a.iter().sum();
    let mut l = ln_gamma(a0);
    for (xi, ai) in x.iter().zip(a) {
        l += (ai - 1.0) * xi.ln() - ln_gamma(*ai);
    }
    l.exp()
}

fn tanh_sinh_level<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, h: f64) -> f64 {
    let half = 0.5 * (b - a);
    let n = (3.5 / h).ceil() as i64;
    let mut sum = 0.0;
    for k in -n..=n {
        let t = k as f64 * h;
        let s = FRAC_PI_2 * t.sinh();
        let cs = s.cosh();
        let w = FRAC_PI_2 * t.cosh() / (cs * cs);
        let offset = 2.0 * half / (1.0 + (2.0 * s.abs()).exp());
        if !(offset > 0.0) || w == 0.0 {
            continue;
        }
        let x = if s < 0.0 { a + offset } else { b - offset };
        sum += w * f(x);
    }
    sum * h * half
}

/// Double-exponential quadrature on `[a, b]`; tolerates integrable endpoint
/// singularities.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let mut h = 0.5;
    let mut prev = tanh_sinh_level(&f, a, b, h);
    for _ in 0..9 {
        h *= 0.5;
        let cur = tanh_sinh_level(&f, a, b, h);
        if (cur - prev).abs() <= 1e-13 * cur.abs().max(1e-300) {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// `∫ f` over the 2-simplex `{x₁ + x₂ ≤ 1}` with `x₃ = 1 − x₁ − x₂`,
/// via `x₁ = u, x₂ = (1 − u)v`.
pub fn integrate_simplex3<F: Fn(&[f64; 3]) -> f64>(f: F) -> f64 {
    integrate(
        |u| integrate(|v| f(&[u, (1.0 - u) * v, (1.0 - u) * (1.0 - v)]), 0.0, 1.0) * (1.0 - u),
        0.0,
        1.0,
    )
}

/// Classical fourth-order Runge–Kutta with `steps` fixed steps.
pub fn rk4<const N: usize, F>(f: F, y0: [f64; N], t: f64, steps: usize) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let h = t / steps as f64;
    let mut y = y0;
    let axpy = |y: &[f64; N], k: &[f64; N], c: f64| {
        let mut o = *y;
        for i in 0..N {
            o[i] += c * k[i];
        }
        o
    };
    for s in 0..steps {
        let u = s as f64 * h;
        let k1 = f(u, &y);
        let k2 = f(u + h / 2.0, &axpy(&y, &k1, h / 2.0));
        let k3 = f(u + h / 2.0, &axpy(&y, &k2, h / 2.0));
        let k4 = f(u + h, &axpy(&y, &k3, h));
        for i in 0..N {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Dense `exp(Q)` by scaling and squaring of a 30-term Taylor series.
pub fn expm(q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = q.len();
    let norm = q
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = (norm.max(1e-300).log2().ceil().max(0.0) as u32) + 1;
    let scale = 0.5f64.powi(squarings as i32);
    let a: Vec<Vec<f64>> = q
        .iter()
        .map(|r| r.iter().map(|v| v * scale).collect())
        .collect();
    let mut result: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut term = result.clone();
    for k in 1..30 {
        term = matmul(&term, &a);
        term.iter_mut().flatten().for_each(|v| *v /= k as f64);
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    result
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn counts<K: Ord, I: IntoIterator<Item = K>>(xs: I) -> BTreeMap<K, u64> {
    let mut out = BTreeMap::new();
    for x in xs {
        *out.entry(x).or_insert(0) += 1;
    }
    out
}

/// Total-variation distance between two empirical laws.
pub fn tv_counts<K: Ord + Clone>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> f64 {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let keys: std::collections::BTreeSet<&K> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| {
            let pa = *a.get(k).unwrap_or(&0) as f64 / na as f64;
            let pb = *b.get(k).unwrap_or(&0) as f64 / nb as f64;
            (pa - pb).abs()
        })
        .sum::<f64>()
}

/// Total-variation distance between an empirical law and a pmf; mass the
/// pmf leaves unassigned counts fully.
pub fn tv_pmf<K: Ord + Clone + Hash>(emp: &BTreeMap<K, u64>, pmf: &BTreeMap<K, f64>) -> f64 {
    let n: u64 = emp.values().sum();
    let keys: std::collections::BTreeSet<&K> = emp.keys().chain(pmf.keys()).collect();
    let covered: f64 = pmf.values().sum();
    0.5 * (keys
        .into_iter()
        .map(|k| {
            (*emp.get(k).unwrap_or(&0) as f64 / n as f64 - pmf.get(k).copied().unwrap_or(0.0)).abs()
        })
        .sum::<f64>()
        + (1.0 - covered).max(0.0))
}

/// Pearson goodness-of-fit p-value, pooling cells with expectation below 5.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        o_acc += o as f64;
        e_acc += p * n as f64;
        if e_acc >= 5.0 {
            stat += (o_acc - e_acc).powi(2) / e_acc;
            cells += 1;
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 {
        stat += (o_acc - e_acc).powi(2) / e_acc;
        cells += 1;
    }
    let dof = (cells.max(2) - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Two-sample chi-square homogeneity p-value, pooling sparse cells.
pub fn chi_square_two_sample<K: Ord + Clone>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let keys: std::collections::BTreeSet<&K> = a.keys().chain(b.keys()).collect();
    let (na, nb) = (
        a.values().sum::<u64>() as f64,
        b.values().sum::<u64>() as f64,
    );
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut oa, mut ob) = (0.0, 0.0);
    for k in keys {
        oa += *a.get(k).unwrap_or(&0) as f64;
        ob += *b.get(k).unwrap_or(&0) as f64;
        if (oa + ob) * na.min(nb) / (na + nb) >= 5.0 {
            cells.push((oa, ob));
            oa = 0.0;
            ob = 0.0;
        }
    }
    if oa + ob > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += oa;
                last.1 += ob;
            }
            None => cells.push((oa, ob)),
        }
    }
    let mut stat = 0.0;
    for (oa, ob) in &cells {
        let tot = oa + ob;
        let ea = tot * na / (na + nb);
        let eb = tot * nb / (na + nb);
        stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    }
    let dof = (cells.len().max(2) - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// CIR constants `(α, β, σ²)` from `(δ, γ, σ)`.
pub fn cir_constants(delta: f64, gamma: f64, sigma: f64) -> (f64, f64, f64) {
    (delta / 2.0, gamma / (sigma * sigma), sigma * sigma)
}

/// Birth–death chain with `λ_m = 2σ²(α+m)(θ−β)`, `μ_m = 2σ²θm`.
pub fn gillespie_bd_oracle<R: Rng>(
    m0: u32,
    t: f64,
    theta: f64,
    (alpha, beta, s2): (f64, f64, f64),
    rng: &mut R,
) -> u32 {
    let mut m = m0 as f64;
    let mut clock = 0.0;
    loop {
        let birth = 2.0 * s2 * (alpha + m) * (theta - beta);
        let death = 2.0 * s2 * theta * m;
        let total = birth + death;
        if total <= 0.0 {
            return m as u32;
        }
        clock += rng.sample::<f64, _>(Exp1) / total;
        if clock > t {
            return m as u32;
        }
        if rng.random::<f64>() * total < birth {
            m += 1.0;
        } else {
            m -= 1.0;
        }
    }
}

/// `Θ` on a uniform grid over `[0, t]`, integrated by RK4.
pub fn theta_path(theta0: f64, t: f64, (_, beta, s2): (f64, f64, f64), points: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(points + 1);
    let mut y = [theta0];
    out.push(theta0);
    let h = t / points as f64;
    for _ in 0..points {
        y = rk4(|_, y| [-2.0 * s2 * y[0] * (y[0] - beta)], y, h, 4);
        out.push(y[0]);
    }
    out
}

/// Pure-death dual with per-individual rate `2σ²Θ_u`, simulated by thinning
/// against the bound `2σ² max Θ`.
pub fn thinning_pure_death<R: Rng>(m0: u32, t: f64, path: &[f64], s2: f64, rng: &mut R) -> u32 {
    let h = t / (path.len() - 1) as f64;
    let bound = 2.0 * s2 * path.iter().cloned().fold(0.0, f64::max);
    let theta_at = |u: f64| {
        let i = ((u / h) as usize).min(path.len() - 2);
        let f = u / h - i as f64;
        path[i] * (1.0 - f) + path[i + 1] * f
    };
    let mut m = m0;
    let mut clock = 0.0;
    while m > 0 {
        clock += rng.sample::<f64, _>(Exp1) / (bound * m as f64);
        if clock > t {
            break;
        }
        if rng.random::<f64>() * bound < 2.0 * s2 * theta_at(clock) {
            m -= 1;
        }
    }
    m
}

/// Block-counting chain `k → k−1` at rate `k(k+θ−1)/2`.
pub fn gillespie_block_count<R: Rng>(m: u32, t: f64, theta: f64, rng: &mut R) -> u32 {
    let mut k = m;
    let mut clock = 0.0;
    while k > 0 {
        let rate = k as f64 * (k as f64 + theta - 1.0) / 2.0;
        clock += rng.sample::<f64, _>(Exp1) / rate;
        if clock > t {
            break;
        }
        k -= 1;
    }
    k
}

/// Typed Kingman death chain: `m → m − eᵢ` at rate `mᵢ(θ+|m|−1)/2`.
pub fn gillespie_kingman_typed<R: Rng>(m: &[u32], t: f64, theta: f64, rng: &mut R) -> Vec<u32> {
    let mut m = m.to_vec();
    let mut clock = 0.0;
    loop {
        let tot: u32 = m.iter().sum();
        if tot == 0 {
            return m;
        }
        let rate = tot as f64 * (theta + tot as f64 - 1.0) / 2.0;
        clock += rng.sample::<f64, _>(Exp1) / rate;
        if clock > t {
            return m;
        }
        let mut u = rng.random::<f64>() * tot as f64;
        for mi in m.iter_mut() {
            if u < *mi as f64 {
                *mi -= 1;
                break;
            }
            u -= *mi as f64;
        }
    }
}

/// Moran chain: `n → n − eᵢ + eⱼ` (`i ≠ j`) at rate `nᵢ(αⱼ+nⱼ)/2`.
pub fn gillespie_moran<R: Rng>(n: &[u32], t: f64, alpha: &[f64], rng: &mut R) -> Vec<u32> {
    let k = n.len();
    let mut n = n.to_vec();
    let mut clock = 0.0;
    let mut rates = vec![0.0; k * k];
    loop {
        let mut total = 0.0;
        for i in 0..k {
            for j in 0..k {
                let r = if i == j {
                    0.0
                } else {
                    n[i] as f64 * (alpha[j] + n[j] as f64) / 2.0
                };
                rates[i * k + j] = r;
                total += r;
            }
        }
        if total <= 0.0 {
            return n;
        }
        clock += rng.sample::<f64, _>(Exp1) / total;
        if clock > t {
            return n;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = rates.len() - 1;
        for (idx, r) in rates.iter().enumerate() {
            if u < *r {
                pick = idx;
                break;
            }
            u -= r;
        }
        n[pick / k] -= 1;
        n[pick % k] += 1;
    }
}

/// All compositions of `total` into `k` non-negative parts.
pub fn compositions(total: u32, k: usize) -> Vec<Vec<u32>> {
    if k == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Two-step CIR filter by exhaustive enumeration: prior point at `m = 0`,
/// one Poisson count `y0` at time 0 and `y1` at time `dt`. Survival and
/// `Θ` come from RK4, marginals from quadrature. Returns the predictive
/// weights over `n = 0..=y0`, the filtering weights over `n + y1` and `Θ`.
pub fn cir_two_step_oracle(
    delta: f64,
    gamma: f64,
    sigma: f64,
    y0: u32,
    y1: u32,
    dt: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let (alpha, beta, s2) = cir_constants(delta, gamma, sigma);
    let theta0 = beta + 1.0;
    let y = rk4(
        |_, y| [-2.0 * s2 * y[0] * (y[0] - beta), -2.0 * s2 * y[0] * y[1]],
        [theta0, 1.0],
        dt,
        20_000,
    );
    let (theta1, s) = (y[0], y[1]);
    let pred: Vec<f64> = (0..=y0)
        .map(|n| binomial_pmf(y0 as u64, n as u64, s))
        .collect();
    let joint: Vec<f64> = pred
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let shape = alpha + n as f64;
            w * integrate(
                |x| gamma_pdf(x, shape, theta1) * poisson_pmf(y1, x),
                0.0,
                100.0,
            )
        })
        .collect();
    let total: f64 = joint.iter().sum();
    (pred, joint.iter().map(|w| w / total).collect(), theta1)
}
