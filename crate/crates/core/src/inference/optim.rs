//! Derivative-free minimization and finite-difference curvature.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    pub restarts: usize,
    pub initial_step: f64,
    /// Stop when the spread of simplex values falls below `ftol · (1 + |f|)`,
    pub ftol: f64,
    /// or when every vertex is within this distance of the best (∞-norm).
    pub xtol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 200,
            restarts: 1,
            initial_step: 0.5,
            ftol: 1e-7,
            xtol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub restarts: usize,
    pub converged: bool,
}

/// Nelder–Mead on `f`, restarted from the best point until a restart no
/// longer improves the value by more than `ftol`. Non-finite values are
/// treated as +∞.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if n == 0 {
        let v = eval(x0, &mut evals);
        return Minimum {
            x: Vec::new(),
            value: v,
            evals,
            restarts: 0,
            converged: true,
        };
    }
    let mut best_x = x0.to_vec();
    let mut best_v = eval(x0, &mut evals);
    let mut restarts = 0;
    loop {
        let (x, v, converged) = simplex_run(&mut eval, &best_x, best_v, opts, &mut evals);
        let improved = best_v - v;
        if v < best_v {
            best_x = x;
            best_v = v;
        }
        if !converged {
            return Minimum {
                x: best_x,
                value: best_v,
                evals,
                restarts,
                converged: false,
            };
        }
        if restarts >= opts.restarts || !(improved > opts.ftol) {
            return Minimum {
                x: best_x,
                value: best_v,
                evals,
                restarts,
                converged: true,
            };
        }
        restarts += 1;
    }
}

fn simplex_run(
    eval: &mut impl FnMut(&[f64], &mut usize) -> f64,
    x0: &[f64],
    f0: f64,
    opts: &NelderMeadOptions,
    evals: &mut usize,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut vals = vec![f0];
    for i in 0..n {
        if *evals >= opts.max_evals {
            break;
        }
        let mut p = x0.to_vec();
        p[i] += opts.initial_step;
        vals.push(eval(&p, evals));
        pts.push(p);
    }
    if pts.len() < n + 1 {
        return best_of(&pts, &vals, false);
    }
    loop {
        // Sort ascending; stable on ties so the order is reproducible.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(core::cmp::Ordering::Equal));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let size = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.is_finite() && (spread <= opts.ftol * (1.0 + vals[0].abs()) || size <= opts.xtol) {
            return (pts[0].clone(), vals[0], true);
        }
        if *evals >= opts.max_evals {
            return (pts[0].clone(), vals[0], false);
        }

        let centroid: Vec<f64> = (0..n).map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (pts[n][k] - centroid[k])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr, evals);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        // Outside contraction if the reflection helped at all, inside otherwise.
        let xc = along(if fr < vals[n] { -0.5 } else { 0.5 });
        let fc = eval(&xc, evals);
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        for i in 1..=n {
            if *evals >= opts.max_evals {
                break;
            }
            let p: Vec<f64> = (0..n).map(|k| pts[0][k] + 0.5 * (pts[i][k] - pts[0][k])).collect();
            vals[i] = eval(&p, evals);
            pts[i] = p;
        }
    }
}

fn best_of(pts: &[Vec<f64>], vals: &[f64], converged: bool) -> (Vec<f64>, f64, bool) {
    let mut b = 0;
    for i in 1..vals.len() {
        if vals[i] < vals[b] {
            b = i;
        }
    }
    (pts[b].clone(), vals[b], converged)
}

/// Central finite-difference Hessian of `f` at `x` (row-major `n × n`).
pub fn fd_hessian(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut hess = vec![0.0; n * n];
    let mut at = |d: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, s) in d {
            p[i] += s;
        }
        f(&p)
    };
    for i in 0..n {
        let fp = at(&[(i, h)]);
        let fm = at(&[(i, -h)]);
        hess[i * n + i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let fpp = at(&[(i, h), (j, h)]);
            let fpm = at(&[(i, h), (j, -h)]);
            let fmp = at(&[(i, -h), (j, h)]);
            let fmm = at(&[(i, -h), (j, -h)]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[i * n + j] = v;
            hess[j * n + i] = v;
        }
    }
    hess
}

/// Inverse of a small symmetric positive-definite matrix, `None` if it is not PD.
pub fn spd_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    let mut inv = vec![0.0; n * n];
    for c in 0..n {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * inv[k * n + c];
            }
            inv[i * n + c] = s / l[i * n + i];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_evals: 2000,
            ftol: 1e-12,
            xtol: 1e-6,
            ..Default::default()
        };
        let m = nelder_mead(f, &[-1.2, 1.0], &opts);
        assert!(m.converged);
        assert_abs_diff_eq!(m.x[0], 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(m.x[1], 1.0, epsilon = 1e-3);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2) + x[2] * x[2];
        let m = nelder_mead(f, &[0.0, 0.0, 0.0], &NelderMeadOptions { max_evals: 10, ..Default::default() });
        assert!(!m.converged);
        assert!(m.evals <= 12);
    }

    #[test]
    fn handles_infinite_regions() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let opts = NelderMeadOptions {
            ftol: 1e-12,
            xtol: 1e-6,
            ..Default::default()
        };
        let m = nelder_mead(f, &[0.1], &opts);
        assert!(m.converged);
        assert_abs_diff_eq!(m.x[0], 0.5, epsilon = 1e-3);
    }

    #[test]
    fn hessian_and_inverse_of_quadratic() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let f = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += 0.5 * x[i] * a[i * 3 + j] * x[j];
                }
            }
            s
        };
        let h = fd_hessian(f, &[0.3, -0.2, 1.0], 0.05);
        for k in 0..9 {
            assert_abs_diff_eq!(h[k], a[k], epsilon = 1e-8);
        }
        let inv = spd_inverse(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert_abs_diff_eq!(s, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
        assert!(spd_inverse(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}
