//! Exterior-algebra expansion of `(dd^c u)^m ∧ β^{n-m}` in top degree.
//!
//! Forms are coefficient vectors indexed by bitmasks over the generators
//! `dz_1..dz_n, dzbar_1..dzbar_n` (bit `p` is `dz_{p+1}`, bit `n + p` is
//! `dzbar_{p+1}`); a mask stands for the wedge of its generators in
//! increasing bit order.

use num_complex::Complex64;

use super::{GridError, Result, MAX_DIM};
use crate::cone::{sigma_k, HermitianMatrix};

struct Form {
    coeffs: Vec<Complex64>,
}

impl Form {
    fn zero(generators: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); 1 << generators],
        }
    }

    fn scalar(generators: usize, value: f64) -> Self {
        let mut f = Self::zero(generators);
        f.coeffs[0] = Complex64::new(value, 0.0);
        f
    }

    fn wedge(&self, other: &Form) -> Form {
        let mut out = Form {
            coeffs: vec![Complex64::new(0.0, 0.0); self.coeffs.len()],
        };
        for (a, ca) in self.coeffs.iter().enumerate() {
            if ca.norm_sqr() == 0.0 {
                continue;
            }
            for (b, cb) in other.coeffs.iter().enumerate() {
                if a & b != 0 || cb.norm_sqr() == 0.0 {
                    continue;
                }
                let sign = if reorder_parity(a, b) { -1.0 } else { 1.0 };
                out.coeffs[a | b] += ca * cb * sign;
            }
        }
        out
    }
}

/// Parity of the shuffle bringing `a`'s generators followed by `b`'s into
/// increasing order: the count of pairs `i in a, j in b` with `i > j`.
fn reorder_parity(a: usize, b: usize) -> bool {
    let mut inversions = 0u32;
    let mut bits = b;
    while bits != 0 {
        let j = bits.trailing_zeros();
        inversions += (a >> (j + 1)).count_ones();
        bits &= bits - 1;
    }
    inversions % 2 == 1
}

/// `2i Σ A_pq dz_p ∧ dzbar_q`.
fn hessian_form(a: &HermitianMatrix) -> Form {
    let n = a.dim();
    let mut f = Form::zero(2 * n);
    let two_i = Complex64::new(0.0, 2.0);
    for p in 0..n {
        for q in 0..n {
            f.coeffs[(1 << p) | (1 << (n + q))] += two_i * a.get(p, q);
        }
    }
    f
}

fn power(base: &Form, k: usize, generators: usize) -> Form {
    (0..k).fold(Form::scalar(generators, 1.0), |acc, _| acc.wedge(base))
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if n == 0 || n > MAX_DIM {
        return Err(GridError::Unsupported(format!(
            "wedge expansion for n = {n} (supported: 1..={MAX_DIM})"
        )));
    }
    if m == 0 || m > n {
        return Err(GridError::Config(format!("need 1 <= m <= n, got m = {m}, n = {n}")));
    }
    Ok(())
}

/// Top-degree coefficient of `(dd^c u)^m ∧ β^{n-m}` divided by
/// `S_m(A) ·` (coefficient of `β^n`), where `A` is the complex Hessian of `u`.
pub fn wedge_coefficient_ratio(a: &HermitianMatrix, m: usize) -> Result<f64> {
    let n = a.dim();
    check_dims(n, m)?;
    let generators = 2 * n;
    let ddc = hessian_form(a);
    let beta = hessian_form(&HermitianMatrix::identity(n));
    let top = (1 << generators) - 1;
    let lhs = power(&ddc, m, generators).wedge(&power(&beta, n - m, generators));
    let volume = power(&beta, n, generators).coeffs[top];
    let s_m = sigma_k(a, m).map_err(|e| GridError::Config(e.to_string()))?;
    if s_m.abs() < 1e-12 {
        return Err(GridError::Config("S_m vanishes; ratio undefined".into()));
    }
    let ratio = lhs.coeffs[top] / (volume * s_m);
    Ok(ratio.re)
}

/// The constant `κ(n, m)` with `(dd^c u)^m ∧ β^{n-m} = κ S_m(A) β^n`,
/// evaluated on `u = Σ λ_p |z_p|^2` with `λ = (1, 2, 3)`.
pub fn wedge_normalization(n: usize, m: usize) -> Result<f64> {
    check_dims(n, m)?;
    let lambda: Vec<f64> = (1..=n).map(|p| p as f64).collect();
    wedge_coefficient_ratio(&HermitianMatrix::diag(&lambda), m)
}
