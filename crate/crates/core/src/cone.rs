//! Elementary symmetric functions of Hermitian spectra and the Garding cone.
//!
//! `S_k(A)` is the k-th elementary symmetric function of the eigenvalues of a
//! Hermitian matrix `A`. Three independent routes compute it:
//!
//! * [`sigma_k`]: eigen-decomposition followed by [`elem_sym`];
//! * [`sigma_k_minors`]: the sum of all k-by-k principal minors;
//! * [`HermitianMatrix::symmetric_functions`]: the Faddeev-LeVerrier
//!   recurrence `S_k = tr(A T_{k-1}) / k`, `T_k = S_k I - A T_{k-1}`.
//!
//! The last route is the one used on hot paths since it produces the
//! derivative matrix `D_m(A) = T_{m-1}` as a by-product.

use itertools::Itertools;
use nalgebra::DMatrix;
use num_complex::Complex64;
use smallvec::SmallVec;
use thiserror::Error;

/// Absolute tolerance on `|a_pq - conj(a_qp)|` accepted by [`HermitianMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConeError {
    #[error("spectrum must contain at least one eigenvalue")]
    EmptySpectrum,
    #[error("non-finite entry at position {0}")]
    NonFinite(usize),
    #[error("index k = {k} is outside 0..={n}")]
    IndexOutOfRange { k: usize, n: usize },
    #[error("cone order m = {m} is outside 1..={n}")]
    OrderOutOfRange { m: usize, n: usize },
    #[error("expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("matrix is not Hermitian: |a[{p}][{q}] - conj(a[{q}][{p}])| = {defect:e}")]
    NotHermitian { p: usize, q: usize, defect: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("S_{k} = {value:e} is negative: argument lies outside the closed cone")]
    OutsideClosedCone { k: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, ConeError>;

/// Real eigenvalues of a Hermitian matrix (any order).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumVector(Vec<f64>);

impl SpectrumVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(ConeError::EmptySpectrum);
        }
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(ConeError::NonFinite(i));
        }
        Ok(Self(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Binomial coefficient as a float (exact for the small arguments used here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All elementary symmetric functions `S_0..=S_n` of `values`, by the
/// prefix-polynomial recurrence.
pub fn elem_sym_all(values: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; values.len() + 1];
    e[0] = 1.0;
    for (i, &v) in values.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            e[k] += v * e[k - 1];
        }
    }
    e
}

/// `S_k(lambda)`; `S_0 = 1`.
pub fn elem_sym(lambda: &SpectrumVector, k: usize) -> Result<f64> {
    let n = lambda.len();
    if k > n {
        return Err(ConeError::IndexOutOfRange { k, n });
    }
    Ok(elem_sym_all(lambda.as_slice())[k])
}

type Entries = SmallVec<[Complex64; 9]>;

/// Dense Hermitian matrix stored row-major. Entries are symmetrized on
/// construction, so `a[p][q] == conj(a[q][p])` holds exactly afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    n: usize,
    data: Entries,
}

impl HermitianMatrix {
    /// Validates `|a_pq - conj(a_qp)| <= HERMITIAN_TOL` and replaces the
    /// entries with `(A + A^*) / 2`.
    pub fn new(n: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != n * n || n == 0 {
            return Err(ConeError::Shape {
                expected: n * n,
                got: entries.len(),
            });
        }
        if let Some(i) = entries
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(ConeError::NonFinite(i));
        }
        let mut data: Entries = entries.into_iter().collect();
        for p in 0..n {
            for q in p..n {
                let a = data[p * n + q];
                let b = data[q * n + p];
                let defect = (a - b.conj()).norm();
                if defect > HERMITIAN_TOL {
                    return Err(ConeError::NotHermitian { p, q, defect });
                }
                let s = (a + b.conj()) * 0.5;
                data[p * n + q] = s;
                data[q * n + p] = s.conj();
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Complex64) -> Result<Self> {
        let entries = (0..n * n).map(|i| f(i / n, i % n)).collect();
        Self::new(n, entries)
    }

    /// Trusted constructor: the caller guarantees exact Hermitian symmetry.
    pub(crate) fn from_raw(n: usize, data: Entries) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut data: Entries = SmallVec::from_elem(Complex64::new(0.0, 0.0), n * n);
        for (p, &v) in values.iter().enumerate() {
            data[p * n + p] = Complex64::new(v, 0.0);
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, p: usize, q: usize) -> Complex64 {
        self.data[p * self.n + q]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|p| self.data[p * self.n + p].re).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self::from_raw(self.n, self.data.iter().map(|z| z * t).collect())
    }

    /// `A + s I`.
    pub fn shifted(&self, s: f64) -> Self {
        let mut out = self.clone();
        for p in 0..self.n {
            out.data[p * self.n + p].re += s;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(ConeError::DimensionMismatch(self.n, other.n));
        }
        Ok(Self::from_raw(
            self.n,
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        ))
    }

    /// `tr(A B)` for Hermitian `A`, `B` (always real).
    pub fn trace_product(&self, other: &Self) -> Result<f64> {
        if self.n != other.n {
            return Err(ConeError::DimensionMismatch(self.n, other.n));
        }
        let n = self.n;
        let mut acc = 0.0;
        for p in 0..n {
            for q in 0..n {
                acc += (self.data[p * n + q] * other.data[q * n + p]).re;
            }
        }
        Ok(acc)
    }

    pub fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    /// Eigenvalues through a Hermitian eigensolver.
    pub fn eigenvalues(&self) -> SpectrumVector {
        let evs = self.to_nalgebra().symmetric_eigenvalues();
        SpectrumVector(evs.iter().copied().collect())
    }

    /// `S_0..=S_n` by the Faddeev-LeVerrier recurrence.
    pub fn symmetric_functions(&self) -> SmallVec<[f64; 8]> {
        self.newton_transform(self.n).0
    }

    /// Returns `(S_0..=S_n, T_{m-1})`; `T_{m-1} = D_m(A)`. Requires `1 <= m <= n`.
    pub(crate) fn symmetric_functions_and_derivative(
        &self,
        m: usize,
    ) -> (SmallVec<[f64; 8]>, HermitianMatrix) {
        let (s, t) = self.newton_transform_keep(self.n, m - 1);
        (s, t)
    }

    fn newton_transform(&self, upto: usize) -> (SmallVec<[f64; 8]>, HermitianMatrix) {
        self.newton_transform_keep(upto, upto)
    }

    // Runs the recurrence up to S_upto and returns T_keep (keep <= upto).
    fn newton_transform_keep(
        &self,
        upto: usize,
        keep: usize,
    ) -> (SmallVec<[f64; 8]>, HermitianMatrix) {
        let n = self.n;
        let mut s: SmallVec<[f64; 8]> = SmallVec::from_elem(0.0, upto + 1);
        s[0] = 1.0;
        let mut t = Self::identity(n);
        let mut kept = if keep == 0 { Some(t.clone()) } else { None };
        let mut at: Entries = SmallVec::from_elem(Complex64::new(0.0, 0.0), n * n);
        for k in 1..=upto {
            matmul_into(n, &self.data, &t.data, &mut at);
            let tr: f64 = (0..n).map(|p| at[p * n + p].re).sum();
            s[k] = tr / k as f64;
            // T_k = S_k I - A T_{k-1}; symmetrize away round-off asymmetry.
            let mut next: Entries = at.iter().map(|z| -z).collect();
            for p in 0..n {
                next[p * n + p].re += s[k];
            }
            symmetrize(n, &mut next);
            t = Self::from_raw(n, next);
            if k == keep {
                kept = Some(t.clone());
            }
        }
        (s, kept.unwrap_or(t))
    }
}

fn matmul_into(n: usize, a: &[Complex64], b: &[Complex64], out: &mut [Complex64]) {
    for p in 0..n {
        for q in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..n {
                acc += a[p * n + r] * b[r * n + q];
            }
            out[p * n + q] = acc;
        }
    }
}

fn symmetrize(n: usize, data: &mut [Complex64]) {
    for p in 0..n {
        data[p * n + p].im = 0.0;
        for q in p + 1..n {
            let s = (data[p * n + q] + data[q * n + p].conj()) * 0.5;
            data[p * n + q] = s;
            data[q * n + p] = s.conj();
        }
    }
}

fn check_k(a: &HermitianMatrix, k: usize) -> Result<()> {
    if k > a.dim() {
        return Err(ConeError::IndexOutOfRange { k, n: a.dim() });
    }
    Ok(())
}

fn check_m(a: &HermitianMatrix, m: usize) -> Result<()> {
    if m == 0 || m > a.dim() {
        return Err(ConeError::OrderOutOfRange { m, n: a.dim() });
    }
    Ok(())
}

/// `S_k` of the eigenvalues of `a`, through the eigensolver.
pub fn sigma_k(a: &HermitianMatrix, k: usize) -> Result<f64> {
    check_k(a, k)?;
    if k == 0 {
        return Ok(1.0);
    }
    elem_sym(&a.eigenvalues(), k)
}

/// `S_k` as the sum of k-by-k principal minors.
pub fn sigma_k_minors(a: &HermitianMatrix, k: usize) -> Result<f64> {
    check_k(a, k)?;
    if k == 0 {
        return Ok(1.0);
    }
    let full = a.to_nalgebra();
    let mut total = 0.0;
    for rows in (0..a.dim()).combinations(k) {
        let sub = DMatrix::from_fn(k, k, |i, j| full[(rows[i], rows[j])]);
        total += sub.determinant().re;
    }
    Ok(total)
}

/// `D_m(A) = (dS_m / da_{pq})`, the (m-1)-th Newton transform of `A`.
pub fn d_matrix(a: &HermitianMatrix, m: usize) -> Result<HermitianMatrix> {
    check_m(a, m)?;
    Ok(a.newton_transform_keep(m - 1, m - 1).1)
}

/// Membership in the open cone `{S_1 > 0, ..., S_m > 0}` and its margin
/// `min_k S_k / C(n, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeMargin {
    pub member: bool,
    pub margin: f64,
}

impl ConeMargin {
    pub fn from_margin(margin: f64) -> Self {
        Self {
            member: margin > 0.0,
            margin,
        }
    }

    /// Margin from precomputed `S_0..=S_n`.
    pub fn from_symmetric(s: &[f64], m: usize) -> Self {
        let n = s.len() - 1;
        let margin = (1..=m)
            .map(|k| s[k] / binomial(n, k))
            .fold(f64::INFINITY, f64::min);
        Self::from_margin(margin)
    }
}

pub fn gamma_m_contains(a: &HermitianMatrix, m: usize) -> Result<ConeMargin> {
    check_m(a, m)?;
    Ok(ConeMargin::from_symmetric(&a.symmetric_functions(), m))
}

// Round-off allowance for "S_k >= 0" on the closed cone.
fn closed_cone_slack(a: &HermitianMatrix, k: usize) -> f64 {
    1e-12 * binomial(a.dim(), k) * (1.0 + a.frobenius()).powi(k as i32)
}

fn require_closed_cone(a: &HermitianMatrix, m: usize) -> Result<SmallVec<[f64; 8]>> {
    let s = a.symmetric_functions();
    for k in 1..=m {
        if s[k] < -closed_cone_slack(a, k) {
            return Err(ConeError::OutsideClosedCone { k, value: s[k] });
        }
    }
    Ok(s)
}

/// `tr(A1 D_m(A2)) - m S_m(A1)^{1/m} S_m(A2)^{(m-1)/m}` for `A1`, `A2` in the
/// closed cone. Negative `S_m` within round-off is read as 0, and `0^{1/m} = 0`.
pub fn garding_gap(a1: &HermitianMatrix, a2: &HermitianMatrix, m: usize) -> Result<f64> {
    if a1.dim() != a2.dim() {
        return Err(ConeError::DimensionMismatch(a1.dim(), a2.dim()));
    }
    check_m(a1, m)?;
    let s1 = require_closed_cone(a1, m)?;
    let s2 = require_closed_cone(a2, m)?;
    let lhs = a1.trace_product(&d_matrix(a2, m)?)?;
    let mf = m as f64;
    let root = |v: f64, p: f64| if v <= 0.0 { 0.0 } else { v.powf(p) };
    let rhs = mf * root(s1[m], 1.0 / mf) * root(s2[m], (mf - 1.0) / mf);
    Ok(lhs - rhs)
}

/// `tr(A D_m(A)) - m S_m(A)`, with `S_m` taken from the eigenvalue route so
/// the check is not circular with the recurrence that builds `D_m`.
pub fn euler_residual(a: &HermitianMatrix, m: usize) -> Result<f64> {
    check_m(a, m)?;
    let lhs = a.trace_product(&d_matrix(a, m)?)?;
    Ok(lhs - m as f64 * sigma_k(a, m)?)
}

/// Max-norm of `D_m(A) A - (D_m(A) A)^*`.
pub fn product_hermiticity_defect(a: &HermitianMatrix, m: usize) -> Result<f64> {
    check_m(a, m)?;
    let n = a.dim();
    let d = d_matrix(a, m)?;
    let mut prod = vec![Complex64::new(0.0, 0.0); n * n];
    matmul_into(n, d.entries(), a.entries(), &mut prod);
    let mut worst: f64 = 0.0;
    for p in 0..n {
        for q in 0..n {
            worst = worst.max((prod[p * n + q] - prod[q * n + p].conj()).norm());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_by_two() -> HermitianMatrix {
        HermitianMatrix::new(2, vec![c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]).unwrap()
    }

    #[test]
    fn elem_sym_small_cases() {
        let v = |x: Vec<f64>| SpectrumVector::new(x).unwrap();
        assert_eq!(elem_sym(&v(vec![1.0, 2.0, 3.0]), 2).unwrap(), 11.0);
        assert_eq!(elem_sym(&v(vec![1.0, 1.0, 1.0]), 3).unwrap(), 1.0);
        assert_eq!(elem_sym(&v(vec![-1.0, 3.0]), 1).unwrap(), 2.0);
        assert_eq!(elem_sym(&v(vec![5.0]), 0).unwrap(), 1.0);
        assert!(matches!(
            elem_sym(&v(vec![1.0, 2.0]), 3),
            Err(ConeError::IndexOutOfRange { k: 3, n: 2 })
        ));
    }

    #[test]
    fn spectrum_rejects_bad_input() {
        assert_eq!(SpectrumVector::new(vec![]), Err(ConeError::EmptySpectrum));
        assert_eq!(
            SpectrumVector::new(vec![1.0, f64::NAN]),
            Err(ConeError::NonFinite(1))
        );
    }

    #[test]
    fn sigma_k_examples() {
        let a = HermitianMatrix::diag(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(sigma_k(&a, 2).unwrap(), 11.0, epsilon = 1e-12);
        for n in 1..=5 {
            let id = HermitianMatrix::identity(n);
            for k in 0..=n {
                assert_relative_eq!(sigma_k(&id, k).unwrap(), binomial(n, k), epsilon = 1e-12);
            }
        }
        let b = two_by_two();
        assert_relative_eq!(sigma_k(&b, 2).unwrap(), 3.0, epsilon = 1e-12);
        assert_relative_eq!(sigma_k_minors(&b, 2).unwrap(), 3.0, epsilon = 1e-12);
        assert_relative_eq!(b.symmetric_functions()[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let err = HermitianMatrix::new(2, vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(err, Err(ConeError::NotHermitian { p: 0, q: 1, .. })));
        // Within tolerance: accepted and symmetrized.
        let ok = HermitianMatrix::new(
            2,
            vec![c(1.0, 1e-14), c(0.5, 0.25), c(0.5, -0.25 + 1e-13), c(1.0, 0.0)],
        )
        .unwrap();
        assert_eq!(ok.get(0, 1), ok.get(1, 0).conj());
        assert_eq!(ok.get(0, 0).im, 0.0);
    }

    #[test]
    fn d_matrix_examples() {
        let d = d_matrix(&HermitianMatrix::identity(3), 2).unwrap();
        assert_eq!(d, HermitianMatrix::diag(&[2.0, 2.0, 2.0]));
        let d = d_matrix(&HermitianMatrix::diag(&[1.0, 2.0, 3.0]), 3).unwrap();
        assert_eq!(d, HermitianMatrix::diag(&[6.0, 3.0, 2.0]));
        let d = d_matrix(&HermitianMatrix::diag(&[1.0, 2.0, 3.0]), 1).unwrap();
        assert_eq!(d, HermitianMatrix::identity(3));
        assert!(d_matrix(&HermitianMatrix::identity(2), 0).is_err());
    }

    #[test]
    fn cone_membership_examples() {
        let a = HermitianMatrix::diag(&[-1.0, 3.0]);
        assert!(gamma_m_contains(&a, 1).unwrap().member);
        let m2 = gamma_m_contains(&a, 2).unwrap();
        assert!(!m2.member);
        assert_relative_eq!(m2.margin, -3.0);
        for n in 1..=4 {
            for m in 1..=n {
                let cm = gamma_m_contains(&HermitianMatrix::identity(n), m).unwrap();
                assert!(cm.member);
                assert_relative_eq!(cm.margin, 1.0, epsilon = 1e-14);
            }
        }
        // S_2(-0.5, 1, 1) = -0.5 - 0.5 + 1 = 0: the open cone excludes it.
        let b = HermitianMatrix::diag(&[-0.5, 1.0, 1.0]);
        assert!(!gamma_m_contains(&b, 2).unwrap().member);
    }

    #[test]
    fn garding_gap_examples() {
        let id = HermitianMatrix::identity(3);
        assert_relative_eq!(garding_gap(&id, &id, 2).unwrap(), 0.0, epsilon = 1e-12);
        let a1 = HermitianMatrix::diag(&[1.0, 2.0, 3.0]);
        let expected = 12.0 - 2.0 * 11f64.sqrt() * 3f64.sqrt();
        assert_relative_eq!(garding_gap(&a1, &id, 2).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 0.5109, epsilon = 1e-4);
        let outside = HermitianMatrix::diag(&[-2.0, 1.0, 0.5]);
        assert!(matches!(
            garding_gap(&outside, &id, 2),
            Err(ConeError::OutsideClosedCone { .. })
        ));
    }

    #[test]
    fn garding_gap_on_cone_boundary_uses_zero_root() {
        // S_2(-0.5, 1, 1) = 0: closed cone, rhs vanishes.
        let b = HermitianMatrix::diag(&[-0.5, 1.0, 1.0]);
        let id = HermitianMatrix::identity(3);
        let gap = garding_gap(&b, &id, 2).unwrap();
        assert_relative_eq!(gap, b.trace_product(&d_matrix(&id, 2).unwrap()).unwrap());
    }

    #[test]
    fn identities_on_examples() {
        let id = HermitianMatrix::identity(3);
        assert!(euler_residual(&id, 2).unwrap().abs() < 1e-12);
        let a = HermitianMatrix::diag(&[1.0, 2.0, 3.0]);
        assert!(euler_residual(&a, 2).unwrap().abs() < 1e-12);
        assert_eq!(product_hermiticity_defect(&a, 2).unwrap(), 0.0);
        assert!(product_hermiticity_defect(&two_by_two(), 2).unwrap() < 1e-12);
    }

    #[test]
    fn trace_and_determinant() {
        let b = two_by_two();
        let s = b.symmetric_functions();
        assert_relative_eq!(s[1], b.trace());
        assert_relative_eq!(s[2], b.to_nalgebra().determinant().re, epsilon = 1e-12);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(6, 3), 20.0);
        assert_eq!(binomial(4, 0), 1.0);
        assert_eq!(binomial(3, 5), 0.0);
    }
}
