//! Eigenvalues of complex tridiagonal matrices by Aberth-Ehrlich refinement
//! of the characteristic-polynomial recurrence in double-double arithmetic.
//!
//! Near exceptional points the spectrum of the dimer Hamiltonians is so
//! ill-conditioned that eigenvalues computed from f64-rounded matrix entries
//! are wrong by order unity (the relevant pseudospectra grow exponentially
//! with the matrix dimension). The cure used here: the recurrence only needs
//! the diagonal entries and the *squares* of the symmetric off-diagonal
//! couplings, and both are exactly representable when built with error-free
//! products of the physical parameters. Refining the f64 QR eigenvalues
//! against that exact polynomial at ~31 digits recovers the spectrum to
//! near machine accuracy even at the worst grid points.

use num_complex::Complex64 as C64;

use super::dd::CDd;

const MAX_SWEEPS: usize = 500;
const STALL_LIMIT: usize = 40;

/// Characteristic polynomial p(z) = det(T - z I) and derivative via the
/// three-term recurrence over leading principal minors, with exact power-of-
/// two rescaling to dodge overflow.
fn charpoly(diag: &[CDd], offdiag_sq: &[CDd], z: CDd) -> (CDd, CDd) {
    let n = diag.len();
    let mut pm2 = CDd::from_f64(1.0, 0.0);
    let mut pm1 = diag[0].sub(z);
    let mut dm2 = CDd::ZERO;
    let mut dm1 = CDd::from_f64(-1.0, 0.0);
    for k in 1..n {
        let dz = diag[k].sub(z);
        let p = dz.mul(pm1).sub(offdiag_sq[k - 1].mul(pm2));
        let dp = dz.mul(dm1).sub(offdiag_sq[k - 1].mul(dm2)).sub(pm1);
        pm2 = pm1;
        pm1 = p;
        dm2 = dm1;
        dm1 = dp;
        let mag = pm1.abs_f64().max(dm1.abs_f64());
        if mag > 1e250 {
            let f = 2f64.powi(-900);
            pm2 = pm2.scale_pow2(f);
            pm1 = pm1.scale_pow2(f);
            dm2 = dm2.scale_pow2(f);
            dm1 = dm1.scale_pow2(f);
        }
    }
    (pm1, dm1)
}

/// Refine eigenvalue estimates of the tridiagonal matrix with diagonal
/// `diag` and off-diagonal products `offdiag_sq[k] = b_k c_k` (entries
/// `(k,k+1)` and `(k+1,k)` multiplied). `seeds` are f64 starting values,
/// typically from the dense QR eigensolver.
pub fn refine_eigenvalues(diag: &[CDd], offdiag_sq: &[CDd], seeds: &[C64]) -> Vec<C64> {
    let n = diag.len();
    assert_eq!(offdiag_sq.len(), n.saturating_sub(1));
    assert_eq!(seeds.len(), n);
    if n == 1 {
        return vec![diag[0].to_c64()];
    }
    let scale = seeds
        .iter()
        .map(|z| z.norm())
        .fold(1.0, f64::max)
        .max(diag.iter().map(|d| d.abs_f64()).fold(0.0, f64::max));

    // separate coincident seeds; Aberth needs distinct iterates
    let mut z: Vec<CDd> = seeds.iter().map(|s| CDd::from_f64(s.re, s.im)).collect();
    for i in 0..n {
        for j in 0..i {
            if z[i].sub(z[j]).abs_f64() < 1e-12 * scale {
                let jitter = 1e-9 * scale * (1.0 + i as f64);
                z[i] = z[i].add(CDd::from_f64(jitter, 0.5 * jitter));
            }
        }
    }

    let tol = 1e-13 * scale;
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    for _ in 0..MAX_SWEEPS {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, dp) = charpoly(diag, offdiag_sq, z[i]);
            if p.is_zero() {
                continue;
            }
            if dp.is_zero() {
                continue;
            }
            let ratio = p.div(dp);
            let mut repel = CDd::ZERO;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let diff = z[i].sub(z[j]);
                if diff.is_zero() {
                    continue;
                }
                repel = repel.add(CDd::from_f64(1.0, 0.0).div(diff));
            }
            let denom = CDd::from_f64(1.0, 0.0).sub(ratio.mul(repel));
            let w = if denom.abs_f64() > 0.0 { ratio.div(denom) } else { ratio };
            let wn = w.abs_f64();
            if !wn.is_finite() {
                continue;
            }
            z[i] = z[i].sub(w);
            moved = moved.max(wn);
        }
        if moved < tol {
            break;
        }
        if moved < best {
            best = moved;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                break;
            }
        }
    }
    z.into_iter().map(|w| w.to_c64()).collect()
}
