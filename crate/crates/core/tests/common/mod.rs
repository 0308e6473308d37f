//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.random_range(lo..hi))
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn soft(v: f64, lam: f64) -> f64 {
    v.signum() * (v.abs() - lam).max(0.0)
}

/// Cyclic coordinate descent for `‖Xw − y‖² + lam‖w‖₁`, one task at a time.
pub fn cd_lasso(x: ArrayView2<f64>, y: ArrayView2<f64>, lam: f64) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut w = Array2::zeros((d, y.ncols()));
    let col_sq: Vec<f64> = (0..d).map(|j| x.column(j).dot(&x.column(j))).collect();
    for t in 0..y.ncols() {
        let mut r: Array1<f64> = y.column(t).to_owned();
        let mut wt = vec![0.0; d];
        for _sweep in 0..200_000 {
            let mut max_change: f64 = 0.0;
            for j in 0..d {
                let xj = x.column(j);
                let rho = xj.dot(&r) + col_sq[j] * wt[j];
                let new = soft(2.0 * rho, lam) / (2.0 * col_sq[j]);
                let delta = new - wt[j];
                if delta != 0.0 {
                    r.scaled_add(-delta, &xj);
                    wt[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < 1e-15 {
                break;
            }
        }
        let _ = n;
        for j in 0..d {
            w[[j, t]] = wt[j];
        }
    }
    w
}

pub fn lasso_objective(x: ArrayView2<f64>, y: ArrayView2<f64>, w: &Array2<f64>, lam: f64) -> f64 {
    let r = x.dot(w) - &y;
    r.iter().map(|v| v * v).sum::<f64>() + lam * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// `½‖x − z‖² + l1‖x‖₁ + l2·Σ|x_{j+1} − x_j| + l3‖x‖₂`.
pub fn fsgl_prox_objective(x: &[f64], z: &[f64], l1: f64, l2: f64, l3: f64) -> f64 {
    let fit: f64 = x.iter().zip(z).map(|(a, b)| 0.5 * (a - b).powi(2)).sum();
    let tv: f64 = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    fit + l1 * x.iter().map(|v| v.abs()).sum::<f64>() + l2 * tv + l3 * norm
}

/// The fsgl prox by accelerated projected gradient on its dual.
///
/// With `D` the forward-difference operator, the prox equals
/// `z − (u1 + Dᵀu2 + u3)` at the maximiser of the dual over
/// `|u1| ≤ l1`, `|u2| ≤ l2` (boxes) and `‖u3‖ ≤ l3` (ball).
pub fn fsgl_prox_dual_oracle(z: &[f64], l1: f64, l2: f64, l3: f64, iters: usize) -> Vec<f64> {
    let k = z.len();
    let m = k.saturating_sub(1);
    let dt = |u2: &[f64]| {
        let mut out = vec![0.0; k];
        for i in 0..m {
            out[i] -= u2[i];
            out[i + 1] += u2[i];
        }
        out
    };
    let primal = |u1: &[f64], u2: &[f64], u3: &[f64]| -> Vec<f64> {
        let d2 = dt(u2);
        (0..k).map(|i| z[i] - u1[i] - d2[i] - u3[i]).collect()
    };
    let project = |u1: &mut [f64], u2: &mut [f64], u3: &mut [f64]| {
        u1.iter_mut().for_each(|v| *v = v.clamp(-l1, l1));
        u2.iter_mut().for_each(|v| *v = v.clamp(-l2, l2));
        let n = u3.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > l3 {
            let s = if n > 0.0 { l3 / n } else { 0.0 };
            u3.iter_mut().for_each(|v| *v *= s);
        }
    };
    // Lipschitz constant of the dual gradient: ‖[I Dᵀ I]‖² ≤ 1 + 4 + 1.
    let step = 1.0 / 6.0;
    let (mut u1, mut u2, mut u3) = (vec![0.0; k], vec![0.0; m], vec![0.0; k]);
    let (mut v1, mut v2, mut v3) = (u1.clone(), u2.clone(), u3.clone());
    let mut t = 1.0_f64;
    for _ in 0..iters {
        // gradient of ½‖z − A v‖² w.r.t. v is −Aᵀx with x the primal point
        let x = primal(&v1, &v2, &v3);
        let mut n1: Vec<f64> = (0..k).map(|i| v1[i] + step * x[i]).collect();
        let mut n2: Vec<f64> = (0..m).map(|i| v2[i] + step * (x[i + 1] - x[i])).collect();
        let mut n3: Vec<f64> = (0..k).map(|i| v3[i] + step * x[i]).collect();
        project(&mut n1, &mut n2, &mut n3);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let extra = |new: &[f64], old: &[f64]| -> Vec<f64> {
            new.iter().zip(old).map(|(a, b)| a + beta * (a - b)).collect()
        };
        v1 = extra(&n1, &u1);
        v2 = extra(&n2, &u2);
        v3 = extra(&n3, &u3);
        u1 = n1;
        u2 = n2;
        u3 = n3;
        t = t_next;
    }
    primal(&u1, &u2, &u3)
}

/// Dense 1-D grid search for the fused prox of length ≤ 3.
///
/// The minimiser lies in `[min z, max z]`. One free coordinate is scanned
/// (the middle one for k = 3, the first for k = 2); the others then have a
/// closed-form optimum `x_free + soft(z_other − x_free, lam)`.
pub fn fused_prox_grid_oracle(z: &[f64], lam: f64, step: f64) -> Vec<f64> {
    let k = z.len();
    assert!((1..=3).contains(&k));
    if k == 1 {
        return z.to_vec();
    }
    let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let free = if k == 3 { 1 } else { 0 };
    let complete = |c: f64| -> Vec<f64> {
        (0..k)
            .map(|i| if i == free { c } else { c + soft(z[i] - c, lam) })
            .collect()
    };
    let objective = |x: &[f64]| -> f64 {
        x.iter().zip(z).map(|(a, b)| 0.5 * (a - b).powi(2)).sum::<f64>()
            + lam * x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
    };
    let steps = ((hi - lo) / step).ceil() as usize;
    let mut best = (f64::INFINITY, complete(lo));
    for s in 0..=steps {
        let c = (lo + s as f64 * step).min(hi);
        let x = complete(c);
        let f = objective(&x);
        if f < best.0 {
            best = (f, x);
        }
    }
    best.1
}

/// TGL with `δ = 0` via the stacked `dk × dk` normal equations on
/// column-major `vec(W)`, solved by LU.
pub fn tgl_stacked_oracle(x: ArrayView2<f64>, y: ArrayView2<f64>, theta1: f64, theta2: f64) -> Array2<f64> {
    let (d, k) = (x.ncols(), y.ncols());
    let gram = x.t().dot(&x);
    let xty = x.t().dot(&y);
    // HHᵀ for forward differences: tridiagonal graph Laplacian of a path
    let mut lap = Array2::<f64>::zeros((k, k));
    for i in 0..k.saturating_sub(1) {
        lap[[i, i]] += 1.0;
        lap[[i + 1, i + 1]] += 1.0;
        lap[[i, i + 1]] -= 1.0;
        lap[[i + 1, i]] -= 1.0;
    }
    let dk = d * k;
    let mut a = DMatrix::<f64>::zeros(dk, dk);
    for t in 0..k {
        for s in 0..k {
            for i in 0..d {
                for j in 0..d {
                    let mut v = 0.0;
                    if t == s {
                        v += gram[[i, j]];
                        if i == j {
                            v += theta1;
                        }
                    }
                    if i == j {
                        v += theta2 * lap[[t, s]];
                    }
                    a[(t * d + i, s * d + j)] = v;
                }
            }
        }
    }
    let b = DVector::from_iterator(dk, (0..k).flat_map(|t| (0..d).map(move |i| (t, i))).map(|(t, i)| xty[[i, t]]));
    let sol = a.lu().solve(&b).expect("stacked system is nonsingular");
    Array2::from_shape_fn((d, k), |(i, t)| sol[t * d + i])
}

/// Central finite-difference gradient of `f` at `w`.
pub fn finite_difference(f: impl Fn(&Array2<f64>) -> f64, w: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut g = Array2::zeros(w.dim());
    let mut probe = w.clone();
    for idx in 0..w.len() {
        let (i, j) = (idx / w.ncols(), idx % w.ncols());
        let orig = probe[[i, j]];
        probe[[i, j]] = orig + h;
        let up = f(&probe);
        probe[[i, j]] = orig - h;
        let down = f(&probe);
        probe[[i, j]] = orig;
        g[[i, j]] = (up - down) / (2.0 * h);
    }
    g
}

/// Per-task ridge closed form by normal equations through LU.
pub fn ridge_oracle(x: ArrayView2<f64>, y: ArrayView2<f64>, lam: f64) -> Array2<f64> {
    let d = x.ncols();
    let gram = x.t().dot(&x);
    let a = DMatrix::from_fn(d, d, |i, j| gram[[i, j]] + if i == j { lam } else { 0.0 });
    let lu = a.lu();
    let mut w = Array2::zeros((d, y.ncols()));
    for (t, col) in x.t().dot(&y).axis_iter(Axis(1)).enumerate() {
        let b = DVector::from_iterator(d, col.iter().cloned());
        let s = lu.solve(&b).expect("nonsingular");
        for i in 0..d {
            w[[i, t]] = s[i];
        }
    }
    w
}

/// Standardized random regression problem with a few strong features.
pub fn random_problem(seed: u64, n: usize, d: usize, k: usize) -> (Array2<f64>, Array2<f64>) {
    let mut r = rng(seed);
    let x = uniform_matrix(&mut r, n, d, -1.0, 1.0);
    let mut w = Array2::zeros((d, k));
    for f in 0..d.min(3) {
        for t in 0..k {
            w[[f, t]] = r.random_range(-2.0..2.0);
        }
    }
    let y = x.dot(&w) + uniform_matrix(&mut r, n, k, -0.3, 0.3);
    (x, y)
}

/// Write a small cohort CSV: rows are `(subject, visit, date, dx, mmse, rois…)`
/// with `None` for empty cells.
pub fn cohort_csv(roi_names: &[&str], rows: &[(&str, &str, &str, &str, Option<f64>, Vec<Option<f64>>)]) -> String {
    let mut s = String::from("subject_id,visit,scan_date,dx,mmse");
    for r in roi_names {
        s.push(',');
        s.push_str(r);
    }
    s.push('\n');
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for (id, visit, date, dx, mmse, rois) in rows {
        s.push_str(&format!("{id},{visit},{date},{dx},{}", cell(*mmse)));
        for v in rois {
            s.push(',');
            s.push_str(&cell(*v));
        }
        s.push('\n');
    }
    s
}
