//! Slow, independent reference computations used to check the closed forms
//! and recursions elsewhere in the crate. Nothing here is performance
//! sensitive.

use crate::dataio::{Dataset, SparseRow};
use crate::losses::LossModel;
use crate::regularizers::{GroupRegularizer, RegKind};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximize a unimodal function on `[a, b]` by golden-section search.
fn golden_max(phi: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let tol = 1e-11_f64.max(1e-15 * (a.abs() + b.abs()));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..500 {
        if b - a <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = phi(d);
        }
    }
    let z = 0.5 * (a + b);
    (z, phi(z))
}

/// Minimizer of a convex function on `[a, b]`, located by bisection on the
/// sign of its right derivative `slope`.
fn bisect_min(slope: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    if slope(a) >= 0.0 {
        return a;
    }
    if slope(b) < 0.0 {
        return b;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if slope(mid) >= 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    // the kink of |b| sits exactly at zero
    if a < 0.0 && b >= 0.0 && slope(0.0) >= 0.0 {
        return 0.0;
    }
    0.5 * (a + b)
}

/// Right derivative of `|b|`.
fn sign_right(b: f64) -> f64 {
    if b >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `sup_z θz − f(z; y)` by golden-section search on `[−50, 50]`, widened
/// by 10× while the maximizer hugs a bracket end. Returns `+∞` when the
/// objective still increases outward at the widest bracket.
pub fn numerical_conjugate(loss: &LossModel, theta: f64, y: f64) -> f64 {
    let phi = |z: f64| theta * z - loss.f(z, y);
    let mut half = 50.0;
    loop {
        let (z, v) = golden_max(phi, -half, half);
        let at_edge = z.abs() > 0.99 * half;
        if !at_edge {
            return v;
        }
        if half < 1e8 {
            half *= 10.0;
            continue;
        }
        let edge = half.copysign(z);
        let step = 1.0_f64.copysign(z);
        let rise = phi(edge + step) - phi(edge);
        return if rise > 1e-12 * (1.0 + phi(edge).abs()) {
            f64::INFINITY
        } else {
            v
        };
    }
}

/// `argmin_β τΩ(β) + ½‖β − z‖²` by exact-line coordinate descent within
/// each group, starting from `z`.
pub fn numerical_prox(reg: &GroupRegularizer, z: &[f64], tau: f64) -> Vec<f64> {
    let mut beta = z.to_vec();
    if tau == 0.0 {
        return beta;
    }
    for g in 0..reg.n_groups() {
        let idx = reg.groups().group(g).to_vec();
        match reg.kind() {
            RegKind::L1 => {
                for &j in &idx {
                    let zj = z[j];
                    let r = zj.abs() + 1.0;
                    beta[j] = bisect_min(|b| tau * sign_right(b) + (b - zj), -r, r);
                }
            }
            RegKind::GroupL12 => {
                for _sweep in 0..200_000 {
                    let mut moved = 0.0f64;
                    for &k in &idx {
                        let rest: f64 = idx
                            .iter()
                            .filter(|&&j| j != k)
                            .map(|&j| beta[j] * beta[j])
                            .sum();
                        let zk = z[k];
                        let r = zk.abs() + 1.0;
                        let slope = |b: f64| {
                            let norm = (b * b + rest).sqrt();
                            let d = if norm > 0.0 { b / norm } else { 1.0 };
                            tau * d + (b - zk)
                        };
                        let b = bisect_min(slope, -r, r);
                        moved = moved.max((b - beta[k]).abs());
                        beta[k] = b;
                    }
                    if moved < 1e-13 {
                        break;
                    }
                }
            }
        }
    }
    beta
}

/// `η_s^(t)` evaluated term by term from the product formula.
pub fn eta_direct(mu: &[f64]) -> Vec<f64> {
    let t = mu.len();
    (0..t)
        .map(|s| mu[s] * mu[s + 1..].iter().map(|m| 1.0 - m).product::<f64>())
        .collect()
}

/// `Σ_s η_s^(t) values_s`.
pub fn weighted_average(values: &[f64], mu: &[f64]) -> f64 {
    eta_direct(mu).iter().zip(values).map(|(e, v)| e * v).sum()
}

/// `−(1/λ) Σ_s η_s^(t) θ_s x_s` from the stored history.
pub fn reconstruct_certificate(history: &[(f64, SparseRow)], mu: &[f64], lambda: f64) -> Vec<f64> {
    let dim = history.first().map_or(0, |(_, x)| x.dim());
    let mut out = vec![0.0; dim];
    for (e, (theta, x)) in eta_direct(mu).iter().zip(history) {
        x.axpy(-e * theta / lambda, &mut out);
    }
    out
}

/// Coordinate descent for `(1/m) Σ f(x_i^T β) + λ‖β‖₁` on a dense copy
/// of the data. Each coordinate is set to zero when the subgradient test
/// allows it and otherwise minimized by bisection on the derivative.
pub fn dense_l1_solve(data: &Dataset, loss: &LossModel, lambda: f64, sweeps: usize) -> Vec<f64> {
    let m = data.m();
    let n = data.n();
    let cols: Vec<Vec<f64>> = {
        let mut c = vec![vec![0.0; m]; n];
        for (i, r) in data.rows().iter().enumerate() {
            for (j, v) in r.iter() {
                c[j][i] = v;
            }
        }
        c
    };
    let y = data.labels();
    let mut beta = vec![0.0; n];
    let mut margins = vec![0.0; m];
    for _ in 0..sweeps {
        let mut moved = 0.0f64;
        for j in 0..n {
            let col = &cols[j];
            let old = beta[j];
            // margins without coordinate j
            let base: Vec<f64> = (0..m).map(|i| margins[i] - col[i] * old).collect();
            let slope: f64 = (0..m).map(|i| loss.d(base[i], y[i]) * col[i]).sum::<f64>() / m as f64;
            let new = if slope.abs() <= lambda {
                0.0
            } else {
                let value0 = (0..m).map(|i| loss.f(base[i], y[i])).sum::<f64>() / m as f64;
                let slope = |b: f64| {
                    (0..m)
                        .map(|i| loss.d(base[i] + col[i] * b, y[i]) * col[i])
                        .sum::<f64>()
                        / m as f64
                        + lambda * sign_right(b)
                };
                let bound = value0 / lambda;
                bisect_min(slope, -bound, bound)
            };
            beta[j] = new;
            for i in 0..m {
                margins[i] = base[i] + col[i] * new;
            }
            moved = moved.max((new - old).abs());
        }
        if moved < 1e-13 {
            break;
        }
    }
    beta
}
