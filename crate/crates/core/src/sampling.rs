//! Seeded random Hermitian matrices for property sampling.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cone::{elem_sym_all, HermitianMatrix};

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries with real and imaginary parts uniform in `[-scale, scale]`.
pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize, scale: f64) -> HermitianMatrix {
    let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
    for p in 0..n {
        entries[p * n + p] = Complex64::new(rng.gen_range(-scale..=scale), 0.0);
        for q in p + 1..n {
            let z = Complex64::new(rng.gen_range(-scale..=scale), rng.gen_range(-scale..=scale));
            entries[p * n + q] = z;
            entries[q * n + p] = z.conj();
        }
    }
    HermitianMatrix::new(n, entries).expect("Hermitian by construction")
}

/// A random member of the open cone `Γ_m`: a random Hermitian matrix shifted
/// past the least `t` with `A + tI` in the closed cone, by a random amount in
/// `(0, scale]`. Samples therefore cluster near the cone boundary.
pub fn random_cone_member<R: Rng>(rng: &mut R, n: usize, m: usize, scale: f64) -> HermitianMatrix {
    let a = random_hermitian(rng, n, scale);
    let lambda = a.eigenvalues();
    let inside = |t: f64| {
        let shifted: Vec<f64> = lambda.as_slice().iter().map(|l| l + t).collect();
        elem_sym_all(&shifted)[1..=m].iter().all(|&s| s > 0.0)
    };
    // Every eigenvalue lies in [-n scale, n scale], so the bracket is valid.
    let bound = 2.0 * n as f64 * scale;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let extra = rng.gen_range(f64::EPSILON.sqrt()..=1.0) * scale;
    a.shifted(hi + extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::gamma_m_contains;

    #[test]
    fn samples_are_reproducible_and_in_the_cone() {
        let a = random_hermitian(&mut rng(7), 3, 1.0);
        let b = random_hermitian(&mut rng(7), 3, 1.0);
        assert_eq!(a.entries(), b.entries());
        let mut r = rng(11);
        for m in 1..=3 {
            for _ in 0..50 {
                let c = random_cone_member(&mut r, 3, m, 1.0);
                assert!(gamma_m_contains(&c, m).unwrap().member);
            }
        }
    }
}
