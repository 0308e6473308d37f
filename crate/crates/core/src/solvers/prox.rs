//! Exact proximal operators for the penalties of the solver suite.
//!
//! All operators work on one feature-row of `W` (its `k` task coefficients)
//! and have an allocation-free in-place form used inside FISTA.

/// Elementwise `sign(z)·max(|z| − lam, 0)`, the prox of `lam·‖·‖₁`.
pub fn soft_threshold(z: &[f64], lam: f64) -> Vec<f64> {
    let mut out = z.to_vec();
    soft_threshold_in_place(&mut out, lam);
    out
}

pub fn soft_threshold_in_place(z: &mut [f64], lam: f64) {
    debug_assert!(lam >= 0.0);
    if lam == 0.0 {
        return;
    }
    for v in z.iter_mut() {
        *v = if *v > lam {
            *v - lam
        } else if *v < -lam {
            *v + lam
        } else {
            0.0
        };
    }
}

/// Block soft-threshold `row·max(1 − lam/‖row‖₂, 0)`, the prox of `lam·‖·‖₂`.
///
/// Applied row by row to `W` this is the prox of the ℓ2,1 norm, which groups
/// each feature across all tasks.
pub fn group_row_prox(row: &[f64], lam: f64) -> Vec<f64> {
    let mut out = row.to_vec();
    group_row_prox_in_place(&mut out, lam);
    out
}

pub fn group_row_prox_in_place(row: &mut [f64], lam: f64) {
    debug_assert!(lam >= 0.0);
    if lam == 0.0 {
        return;
    }
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= lam {
        row.iter_mut().for_each(|v| *v = 0.0);
    } else {
        let scale = 1.0 - lam / norm;
        row.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Exact prox of the 1-D total variation `lam·Σ|x[j+1] − x[j]|`.
///
/// Direct taut-string style algorithm (Condat 2013): linear time in practice,
/// no iterations and no tolerance.
pub fn fused_prox_1d(z: &[f64], lam: f64) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    fused_prox_1d_into(z, &mut out, lam);
    out
}

/// Writes the total-variation prox of `input` into `output` (same length).
pub fn fused_prox_1d_into(input: &[f64], output: &mut [f64], lam: f64) {
    debug_assert_eq!(input.len(), output.len());
    debug_assert!(lam >= 0.0);
    let width = input.len();
    if width == 0 {
        return;
    }
    if lam == 0.0 || width == 1 {
        output.copy_from_slice(input);
        return;
    }

    let last = width - 1;
    let (mut k, mut k0) = (0usize, 0usize);
    let (mut kplus, mut kminus) = (0usize, 0usize);
    let mut umin = lam;
    let mut umax = -lam;
    let mut vmin = input[0] - lam;
    let mut vmax = input[0] + lam;

    loop {
        while k == last {
            if umin < 0.0 {
                // segment ends at kminus with the lower bound
                while k0 <= kminus {
                    output[k0] = vmin;
                    k0 += 1;
                }
                k = k0;
                kminus = k0;
                vmin = input[k0];
                umin = lam;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                while k0 <= kplus {
                    output[k0] = vmax;
                    k0 += 1;
                }
                k = k0;
                kplus = k0;
                vmax = input[k0];
                umax = -lam;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    output[k0] = vmin;
                    k0 += 1;
                }
                return;
            }
        }

        umin += input[k + 1] - vmin;
        if umin < -lam {
            // negative jump
            while k0 <= kminus {
                output[k0] = vmin;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = input[k0];
            vmax = vmin + 2.0 * lam;
            umin = lam;
            umax = -lam;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lam {
            // positive jump
            while k0 <= kplus {
                output[k0] = vmax;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = input[k0];
            vmin = vmax - 2.0 * lam;
            umin = lam;
            umax = -lam;
            continue;
        }

        k += 1;
        if umin >= lam {
            kminus = k;
            vmin += (umin - lam) / (k - k0 + 1) as f64;
            umin = lam;
        }
        if umax <= -lam {
            kplus = k;
            vmax += (umax + lam) / (k - k0 + 1) as f64;
            umax = -lam;
        }
    }
}

/// Prox of `lam1‖x‖₁ + lam2·TV(x) + lam3‖x‖₂` for one feature-row.
///
/// Computed as fused prox, then soft-threshold, then group shrinkage; this
/// composition is the exact prox of the sum for this penalty family.
pub fn fsgl_prox(row: &[f64], lam1: f64, lam2: f64, lam3: f64) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    fsgl_prox_into(row, &mut out, lam1, lam2, lam3);
    out
}

pub fn fsgl_prox_into(row: &[f64], out: &mut [f64], lam1: f64, lam2: f64, lam3: f64) {
    fused_prox_1d_into(row, out, lam2);
    soft_threshold_in_place(out, lam1);
    group_row_prox_in_place(out, lam3);
}

/// `lam1‖x‖₁ + lam2·TV(x) + lam3‖x‖₂`, the penalty whose prox is [`fsgl_prox`].
pub fn fsgl_penalty(x: &[f64], lam1: f64, lam2: f64, lam3: f64) -> f64 {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let tv: f64 = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let l2 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    lam1 * l1 + lam2 * tv + lam3 * l2
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(&[3.0, -0.5], 1.0), vec![2.0, 0.0]);
        assert_eq!(soft_threshold(&[-3.0, 0.25], 0.0), vec![-3.0, 0.25]);
        assert_eq!(soft_threshold(&[0.0, 0.0, 0.0], 0.7), vec![0.0; 3]);
    }

    #[test]
    fn group_prox_cases() {
        let out = group_row_prox(&[3.0, 4.0], 1.0);
        assert!((out[0] - 2.4).abs() < 1e-15 && (out[1] - 3.2).abs() < 1e-15);
        assert_eq!(group_row_prox(&[0.3, 0.4], 1.0), vec![0.0, 0.0]);
        assert_eq!(group_row_prox(&[0.3, -0.4], 0.0), vec![0.3, -0.4]);
    }

    #[test]
    fn fused_prox_hand_cases() {
        let a = fused_prox_1d(&[1.0, 2.0], 0.5);
        assert!((a[0] - 1.5).abs() < 1e-15 && (a[1] - 1.5).abs() < 1e-15);
        let b = fused_prox_1d(&[1.0, 2.0], 0.25);
        assert!((b[0] - 1.25).abs() < 1e-15 && (b[1] - 1.75).abs() < 1e-15);
        assert_eq!(fused_prox_1d(&[1.0, -2.0, 5.0], 0.0), vec![1.0, -2.0, 5.0]);
        assert_eq!(fused_prox_1d(&[4.2], 3.0), vec![4.2]);
        assert!(fused_prox_1d(&[], 1.0).is_empty());
    }

    #[test]
    fn fused_prox_large_lambda_gives_mean() {
        let z = [1.0, 4.0, -2.0, 7.0, 0.5];
        let out = fused_prox_1d(&z, 100.0);
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        assert!(out.iter().all(|v| (v - mean).abs() < 1e-12));
    }

    #[test]
    fn fsgl_reductions() {
        let row = [1.0, -2.0, 0.3, 0.0];
        assert_eq!(fsgl_prox(&row, 0.0, 0.0, 0.0), row.to_vec());
        assert_eq!(fsgl_prox(&row, 0.5, 0.0, 0.0), soft_threshold(&row, 0.5));
    }

    fn row_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, 1..8)
    }

    proptest! {
        #[test]
        fn soft_threshold_non_expansive(a in row_strategy(), lam in 0.0f64..2.0, shift in -1.0f64..1.0) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + shift * (i as f64).sin()).collect();
            let (pa, pb) = (soft_threshold(&a, lam), soft_threshold(&b, lam));
            prop_assert!(norm(&pa, &pb) <= norm(&a, &b) + 1e-12);
        }

        #[test]
        fn group_prox_non_expansive(a in row_strategy(), lam in 0.0f64..2.0, shift in -1.0f64..1.0) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + shift * (i as f64 + 0.5).cos()).collect();
            let (pa, pb) = (group_row_prox(&a, lam), group_row_prox(&b, lam));
            prop_assert!(norm(&pa, &pb) <= norm(&a, &b) + 1e-12);
        }

        #[test]
        fn fused_prox_non_expansive(a in row_strategy(), lam in 0.0f64..2.0, shift in -1.0f64..1.0) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + shift * (1.7 * i as f64).sin()).collect();
            let (pa, pb) = (fused_prox_1d(&a, lam), fused_prox_1d(&b, lam));
            prop_assert!(norm(&pa, &pb) <= norm(&a, &b) + 1e-12);
        }

        #[test]
        fn fsgl_prox_non_expansive(
            a in row_strategy(),
            l1 in 0.0f64..2.0, l2 in 0.0f64..2.0, l3 in 0.0f64..2.0,
            shift in -1.0f64..1.0,
        ) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v - shift * (0.3 * i as f64).cos()).collect();
            let (pa, pb) = (fsgl_prox(&a, l1, l2, l3), fsgl_prox(&b, l1, l2, l3));
            prop_assert!(norm(&pa, &pb) <= norm(&a, &b) + 1e-12);
        }

        #[test]
        fn fused_prox_preserves_mean(a in row_strategy(), lam in 0.0f64..2.0) {
            // TV is shift invariant, so the prox keeps the sample mean.
            let out = fused_prox_1d(&a, lam);
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mo = out.iter().sum::<f64>() / out.len() as f64;
            prop_assert!((ma - mo).abs() < 1e-12);
        }
    }
}
