//! Exact rational scalars.
//!
//! Every coefficient in the engine is a `BigRational`. There is no floating
//! point anywhere: equality of morphisms has to be decidable, so the ground
//! ring is fixed to the rationals.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

pub type Scalar = BigRational;

pub fn zero() -> Scalar {
    Scalar::zero()
}

pub fn one() -> Scalar {
    Scalar::one()
}

pub fn int(n: i64) -> Scalar {
    Scalar::from_integer(BigInt::from(n))
}

pub fn ratio(num: i64, den: i64) -> Scalar {
    Scalar::new(BigInt::from(num), BigInt::from(den))
}

/// Render a scalar the way the DSL writes rationals: `3`, `-1/2`, ...
pub fn fmt_scalar(s: &Scalar) -> String {
    if s.is_integer() {
        s.numer().to_string()
    } else {
        format!("{}/{}", s.numer(), s.denom())
    }
}

/// Parse `p` or `p/q` with an optional leading sign.
pub fn parse_scalar(text: &str) -> Option<Scalar> {
    let text = text.trim();
    match text.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(Scalar::new(n, d))
        }
        None => {
            let n: BigInt = text.parse().ok()?;
            Some(Scalar::from_integer(n))
        }
    }
}

/// Invert a square matrix over the rationals.
///
/// The elimination is fraction-free (Bareiss): rows are first scaled to a
/// common-denominator integer matrix, the Gauss-Jordan sweep keeps every
/// intermediate entry integral, and each entry is divided exactly once at the
/// end. Returns `None` on a singular matrix.
pub fn invert_matrix(m: &[Vec<Scalar>]) -> Option<Vec<Vec<Scalar>>> {
    let n = m.len();
    if n == 0 {
        return Some(Vec::new());
    }
    // Clear denominators: scale row i by l_i, so A_int = D A with D = diag(l_i)
    // and A^{-1} = A_int^{-1} D.
    let mut a: Vec<Vec<BigInt>> = Vec::with_capacity(n);
    let mut row_scale: Vec<BigInt> = Vec::with_capacity(n);
    for row in m {
        assert_eq!(row.len(), n, "matrix must be square");
        let mut l = BigInt::one();
        for x in row {
            let d = x.denom();
            let g = num_integer::gcd(l.clone(), d.clone());
            l = l / g * d;
        }
        a.push(row.iter().map(|x| x.numer() * (&l / x.denom())).collect());
        row_scale.push(l);
    }

    // Bareiss Gauss-Jordan on [A_int | I]. The division by the previous pivot
    // is exact; the final state is [diag(d_i) | R] with row i of the inverse
    // equal to R[i] / d_i.
    let mut aug: Vec<Vec<BigInt>> = (0..n)
        .map(|i| {
            let mut r = a[i].clone();
            for j in 0..n {
                r.push(if i == j { BigInt::one() } else { BigInt::zero() });
            }
            r
        })
        .collect();
    let mut prev = BigInt::one();
    for k in 0..n {
        if aug[k][k].is_zero() {
            let swap = (k + 1..n).find(|&i| !aug[i][k].is_zero())?;
            aug.swap(k, swap);
        }
        let pivot = aug[k][k].clone();
        for i in 0..n {
            if i == k {
                continue;
            }
            for j in 0..2 * n {
                if j == k {
                    continue;
                }
                aug[i][j] = (&pivot * &aug[i][j] - &aug[i][k] * &aug[k][j]) / &prev;
            }
            aug[i][k] = BigInt::zero();
        }
        prev = pivot;
    }
    let mut inv = vec![vec![Scalar::zero(); n]; n];
    for i in 0..n {
        if aug[i][i].is_zero() {
            return None;
        }
        for j in 0..n {
            let x = Scalar::new(aug[i][n + j].clone(), aug[i][i].clone());
            inv[i][j] = x * Scalar::from_integer(row_scale[j].clone());
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[i64]]) -> Vec<Vec<Scalar>> {
        rows.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect()
    }

    fn mul(a: &[Vec<Scalar>], b: &[Vec<Scalar>]) -> Vec<Vec<Scalar>> {
        let n = a.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| &a[i][k] * &b[k][j]).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn inverts_antidiagonal() {
        // Gram matrix of k[x]/(x^2) with tr(1)=0, tr(x)=1.
        let m = mat(&[&[0, 1], &[1, 0]]);
        let inv = invert_matrix(&m).unwrap();
        assert_eq!(inv, mat(&[&[0, 1], &[1, 0]]));
    }

    #[test]
    fn inverts_rational_matrix() {
        let m = vec![
            vec![ratio(1, 2), int(1)],
            vec![int(1), int(3)],
        ];
        let inv = invert_matrix(&m).unwrap();
        let prod = mul(&m, &inv);
        assert_eq!(prod[0][0], one());
        assert_eq!(prod[0][1], zero());
        assert_eq!(prod[1][0], zero());
        assert_eq!(prod[1][1], one());
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = mat(&[&[1, 2], &[2, 4]]);
        assert!(invert_matrix(&m).is_none());
    }

    #[test]
    fn scalar_round_trip() {
        for s in ["0", "7", "-3", "2/3", "-11/4"] {
            let v = parse_scalar(s).unwrap();
            assert_eq!(fmt_scalar(&v), s);
        }
        assert!(parse_scalar("1/0").is_none());
    }
}
