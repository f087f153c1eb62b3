//! Matrix exponential by scaling and squaring with diagonal Pade
//! approximants (Higham 2005). Chosen over eigendecomposition because the
//! Hamiltonians here become defective at exceptional points, where
//! diagonalization fails but the exponential stays perfectly smooth.

use num_complex::Complex64 as C64;

use super::cmatrix::{ComplexMatrix, Lu};
use super::NumericsError;

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068;
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// One-norm (max column sum), the norm the Pade bounds are stated in.
fn norm_1(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Evaluate the order-(3|5|7|9) Pade numerator/denominator halves
/// `U = A (b3 A2 + b1 I)` etc., given the precomputed even powers.
fn pade_low(a: &ComplexMatrix, powers: &[&ComplexMatrix], b: &[f64]) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.dim();
    let mut odd = ComplexMatrix::zeros(n);
    let mut even = ComplexMatrix::zeros(n);
    // powers[k] = A^(2k), powers[0] = I
    for (k, pw) in powers.iter().enumerate() {
        odd = odd.add(&pw.scaled(real(b[2 * k + 1])));
        even = even.add(&pw.scaled(real(b[2 * k])));
    }
    (a.matmul(&odd), even)
}

fn pade_13(
    a: &ComplexMatrix,
    a2: &ComplexMatrix,
    a4: &ComplexMatrix,
    a6: &ComplexMatrix,
) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.dim();
    let id = ComplexMatrix::identity(n);
    let b = &B13;
    let u_hi = a6.matmul(
        &a6.scaled(real(b[13]))
            .add(&a4.scaled(real(b[11])))
            .add(&a2.scaled(real(b[9]))),
    );
    let u_lo = a6
        .scaled(real(b[7]))
        .add(&a4.scaled(real(b[5])))
        .add(&a2.scaled(real(b[3])))
        .add(&id.scaled(real(b[1])));
    let u = a.matmul(&u_hi.add(&u_lo));
    let v_hi = a6.matmul(
        &a6.scaled(real(b[12]))
            .add(&a4.scaled(real(b[10])))
            .add(&a2.scaled(real(b[8]))),
    );
    let v = v_hi
        .add(&a6.scaled(real(b[6])))
        .add(&a4.scaled(real(b[4])))
        .add(&a2.scaled(real(b[2])))
        .add(&id.scaled(real(b[0])));
    (u, v)
}

/// `exp(A)` for a dense complex matrix.
pub fn expm(a: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    if !a.is_finite() {
        return Err(NumericsError::NonFiniteInput);
    }
    let n = a.dim();
    let id = ComplexMatrix::identity(n);
    let norm = norm_1(a);
    if norm == 0.0 {
        return Ok(id);
    }

    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let (u, v, squarings) = if norm <= THETA_3 {
        let (u, v) = pade_low(a, &[&id, &a2], &B3);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let (u, v) = pade_low(a, &[&id, &a2, &a4], &B5);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let (u, v) = pade_low(a, &[&id, &a2, &a4, &a6], &B7);
        (u, v, 0)
    } else if norm <= THETA_9 {
        let a8 = a6.matmul(&a2);
        let (u, v) = pade_low(a, &[&id, &a2, &a4, &a6, &a8], &B9);
        (u, v, 0)
    } else {
        let s = ((norm / THETA_13).log2().ceil().max(0.0)) as i32;
        if s > 1015 {
            return Err(NumericsError::ExpmOverflow);
        }
        let f = 0.5f64.powi(s);
        let a_s = a.scaled(real(f));
        let a2_s = a2.scaled(real(f * f));
        let a4_s = a4.scaled(real(f.powi(4)));
        let a6_s = a6.scaled(real(f.powi(6)));
        let (u, v) = pade_13(&a_s, &a2_s, &a4_s, &a6_s);
        (u, v, s)
    };

    // r = (V - U)^{-1} (V + U)
    let denom = v.sub(&u);
    let numer = v.add(&u);
    let lu = Lu::factor(&denom)?;
    let mut r = lu.solve_matrix(&numer);
    for _ in 0..squarings {
        r = r.matmul(&r);
        if !r.is_finite() {
            return Err(NumericsError::ExpmOverflow);
        }
    }
    if !r.is_finite() {
        return Err(NumericsError::ExpmOverflow);
    }
    Ok(r)
}
