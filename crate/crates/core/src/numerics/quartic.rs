//! Polynomial roots up to degree 4 via companion-matrix eigenvalues, with a
//! Newton polish on p/p' (which keeps quadratic convergence at multiple
//! roots) and a merge pass for defective clusters.

use num_complex::Complex64 as C64;

use super::cmatrix::ComplexMatrix;
use super::eig::eig_complex;
use super::NumericsError;

/// Horner evaluation of p, p' and p'' for ascending coefficients.
fn horner2(coeffs: &[f64], z: C64) -> (C64, C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    let mut ddp = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        ddp = ddp * z + dp * 2.0;
        dp = dp * z + p;
        p = p * z + C64::new(c, 0.0);
    }
    (p, dp, ddp)
}

/// Newton iteration on u = p/p'; u has simple roots at roots of any
/// multiplicity, so this polishes defective roots too.
fn polish(coeffs: &[f64], mut z: C64) -> C64 {
    let mut last_step = f64::INFINITY;
    for _ in 0..8 {
        let (p, dp, ddp) = horner2(coeffs, z);
        let denom = dp * dp - p * ddp;
        let step = if denom.norm() > 0.0 {
            p * dp / denom
        } else if dp.norm() > 0.0 {
            p / dp
        } else {
            break;
        };
        let sn = step.norm();
        if !sn.is_finite() || sn > last_step * 4.0 {
            break;
        }
        z -= step;
        if sn <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
        last_step = sn;
    }
    z
}

fn companion_roots(monic_tail: &[f64]) -> Result<Vec<C64>, NumericsError> {
    // p = x^d + a_{d-1} x^{d-1} + ... + a_0, monic_tail = [a_0, ..., a_{d-1}]
    let d = monic_tail.len();
    let mut c = ComplexMatrix::zeros(d);
    for i in 1..d {
        c[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..d {
        c[(i, d - 1)] = C64::new(-monic_tail[i], 0.0);
    }
    Ok(eig_complex(&c, false)?.eigenvalues)
}

/// All complex roots of `c4 x^4 + c3 x^3 + c2 x^2 + c1 x + c0`.
///
/// Exactly-zero leading coefficients degrade the problem to the lower
/// degree. Residuals satisfy `|p(r)| <~ 1e-10 * sum_k |c_k| max(1,|r|)^k`;
/// defective clusters are merged to their mean when that does not hurt the
/// residual.
pub fn roots_quartic(c4: f64, c3: f64, c2: f64, c1: f64, c0: f64) -> Result<Vec<C64>, NumericsError> {
    let coeffs_full = [c0, c1, c2, c3, c4];
    if coeffs_full.iter().all(|&c| c == 0.0) {
        return Err(NumericsError::AllZeroCoefficients);
    }
    if coeffs_full.iter().any(|c| !c.is_finite()) {
        return Err(NumericsError::NonFiniteInput);
    }
    let mut deg = 4;
    while deg > 0 && coeffs_full[deg] == 0.0 {
        deg -= 1;
    }
    let coeffs = &coeffs_full[..=deg];
    let mut roots: Vec<C64> = match deg {
        0 => Vec::new(),
        1 => vec![C64::new(-coeffs[0] / coeffs[1], 0.0)],
        2 => {
            // stable quadratic formula
            let (a, b, c) = (coeffs[2], coeffs[1], coeffs[0]);
            let disc = C64::new(b * b - 4.0 * a * c, 0.0).sqrt();
            let sb = C64::new(b, 0.0);
            let q = if b >= 0.0 { -(sb + disc) * 0.5 } else { -(sb - disc) * 0.5 };
            if q.norm() > 0.0 {
                vec![q / a, C64::new(c, 0.0) / q]
            } else {
                vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
            }
        }
        _ => {
            let lead = coeffs[deg];
            let tail: Vec<f64> = coeffs[..deg].iter().map(|c| c / lead).collect();
            companion_roots(&tail)?
        }
    };
    let raw = roots.clone();
    for r in &mut roots {
        *r = polish(coeffs, *r);
    }
    merge_defective_clusters(coeffs, &raw, &mut roots);
    Ok(roots)
}

/// Residual scale `sum_k |c_k| max(1,|r|)^k` used in the contract.
pub fn residual_scale(coeffs: &[f64], r: C64) -> f64 {
    let m = r.norm().max(1.0);
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c.abs() * m.powi(k as i32))
        .sum()
}

/// Defective roots come out of the companion matrix as a symmetric scatter
/// whose mean is trace-accurate, while the Newton polish drags every member
/// to the same noise-limited point. The merge candidate is therefore the
/// mean of the *raw* eigenvalues, accepted only when its residual is no
/// worse than the polished members' (which rejects genuinely close simple
/// pairs).
fn merge_defective_clusters(coeffs: &[f64], raw: &[C64], roots: &mut [C64]) {
    let n = roots.len();
    if n < 2 {
        return;
    }
    let scale: f64 = roots.iter().map(|r| r.norm()).fold(1.0, f64::max);
    let tol = 5e-4 * scale;
    let mut assigned = vec![false; n];
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let mut members = vec![i];
        for j in (i + 1)..n {
            if !assigned[j] && (roots[i] - roots[j]).norm() < tol {
                members.push(j);
            }
        }
        if members.len() < 2 {
            continue;
        }
        let mean = members.iter().map(|&k| raw[k]).sum::<C64>() / members.len() as f64;
        let (p_mean, _, _) = horner2(coeffs, mean);
        let worst = members
            .iter()
            .map(|&k| horner2(coeffs, roots[k]).0.norm())
            .fold(0.0, f64::max);
        if p_mean.norm() <= (1.5 * worst).max(1e-10 * residual_scale(coeffs, mean)) {
            for &k in &members {
                roots[k] = mean;
                assigned[k] = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_root_set(got: &[C64], want: &[C64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for w in want {
            let best = got.iter().map(|g| (g - w).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < tol, "no root near {w} (best distance {best})");
        }
    }

    #[test]
    fn fourth_roots_of_unity() {
        let roots = roots_quartic(1.0, 0.0, 0.0, 0.0, -1.0).unwrap();
        assert_root_set(
            &roots,
            &[
                C64::new(1.0, 0.0),
                C64::new(-1.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, -1.0),
            ],
            1e-10,
        );
    }

    #[test]
    fn biquadratic_fixed_point_polynomial() {
        // 4 (g^2 + gamma^2) x^4 + (v^2 - g^2 - gamma^2) x^2 with v=1, g=2, gamma=0.5
        let a = 4.0 * (4.0 + 0.25);
        let b = 1.0 - 4.0 - 0.25;
        let roots = roots_quartic(a, 0.0, b, 0.0, 0.0).unwrap();
        let x = 0.5 * (1.0 - 1.0 / 4.25f64).sqrt();
        assert_root_set(
            &roots,
            &[
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(x, 0.0),
                C64::new(-x, 0.0),
            ],
            1e-10,
        );
        assert!((x - 0.4372373160976031).abs() < 1e-12);
    }

    #[test]
    fn fourfold_root_clusters_tightly() {
        // (x-2)^4 = x^4 - 8x^3 + 24x^2 - 32x + 16
        let roots = roots_quartic(1.0, -8.0, 24.0, -32.0, 16.0).unwrap();
        for r in &roots {
            assert!((r - C64::new(2.0, 0.0)).norm() < 1e-6, "root {r} too far from 2");
        }
    }

    #[test]
    fn degenerate_leading_coefficients() {
        // c4 = 0 -> cubic x^3 - x = x(x-1)(x+1)
        let roots = roots_quartic(0.0, 1.0, 0.0, -1.0, 0.0).unwrap();
        assert_root_set(
            &roots,
            &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
            1e-10,
        );
        // linear
        let roots = roots_quartic(0.0, 0.0, 0.0, 2.0, -1.0).unwrap();
        assert_root_set(&roots, &[C64::new(0.5, 0.0)], 1e-14);
        // constant nonzero: no roots
        assert!(roots_quartic(0.0, 0.0, 0.0, 0.0, 3.0).unwrap().is_empty());
        // all zero: error
        assert!(matches!(
            roots_quartic(0.0, 0.0, 0.0, 0.0, 0.0),
            Err(NumericsError::AllZeroCoefficients)
        ));
    }
}

