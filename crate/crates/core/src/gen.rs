//! Seeded random instance generators.
//!
//! Everything here is deterministic in the seed: generators drive a
//! ChaCha stream and never consult ambient state, so instances can be
//! pinned by content hash in tests and reports.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::Algebra;
use crate::bimodule::{present, FiberedBimodule, PresentedBimodule};
use crate::category::CStarCategory;
use crate::error::Error;
use crate::linalg::{self, CMatrix};
use crate::Result;

/// Random imprimitivity bimodule on `n` points: a seeded Fisher–Yates
/// permutation for the support graph and log-uniform metric scalars in
/// `[1/metric_spread, metric_spread]`.
pub fn random_imprimitivity(n: usize, metric_spread: f64, seed: u64) -> Result<FiberedBimodule> {
    if n == 0 {
        return Err(Error::Invalid("need at least one spectrum point".into()));
    }
    if metric_spread < 1.0 {
        return Err(Error::Invalid("metric spread must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let ln = metric_spread.ln();
    let metrics: Vec<f64> = (0..n)
        .map(|_| {
            let t: f64 = rng.random::<f64>() * 2.0 - 1.0;
            (t * ln).exp()
        })
        .collect();
    let left = Algebra::new((0..n).map(|i| format!("a{i}")))?;
    let right = Algebra::new((0..n).map(|i| format!("b{i}")))?;
    FiberedBimodule::from_bijection(left, right, &perm, Some(&metrics))
}

/// Wrap a fibered bimodule as a presented one through a seeded random
/// well-conditioned change of basis.
pub fn present_randomly(m: &FiberedBimodule, seed: u64) -> Result<PresentedBimodule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = linalg::random_well_conditioned(&mut rng, m.total_dim(), 100.0);
    present(m, &basis)
}

/// Random presented commutative algebra: `k` commuting normal matrices of
/// size `dim` with `chars` distinct joint-eigenvalue tuples (eigenvalue
/// gaps at least `gap`), conjugated by a seeded random unitary.  Returns
/// the generators together with the ground-truth character count.
pub fn random_presented_algebra(
    dim: usize,
    k: usize,
    chars: usize,
    gap: f64,
    seed: u64,
) -> Result<(Vec<CMatrix>, usize)> {
    if dim == 0 || k == 0 || chars == 0 || chars > dim {
        return Err(Error::Invalid("need 1 ≤ chars ≤ dim and k ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Multiplicities: a random composition of `dim` into `chars` parts.
    let mut mult = vec![1usize; chars];
    for _ in 0..dim - chars {
        let i = rng.random_range(0..chars);
        mult[i] += 1;
    }

    // Joint-eigenvalue tuples with pairwise separation at least `gap`.
    let mut tuples: Vec<Vec<num_complex::Complex64>> = Vec::with_capacity(chars);
    while tuples.len() < chars {
        let cand: Vec<num_complex::Complex64> = (0..k)
            .map(|_| {
                num_complex::Complex64::new(
                    rng.random::<f64>() * 4.0 - 2.0,
                    rng.random::<f64>() * 4.0 - 2.0,
                )
            })
            .collect();
        let ok = tuples.iter().all(|t| {
            t.iter()
                .zip(&cand)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0f64, f64::max)
                >= gap.max(1e-3)
        });
        if ok {
            tuples.push(cand);
        }
    }

    let u = linalg::random_unitary(&mut rng, dim);
    let mut generators = Vec::with_capacity(k);
    for j in 0..k {
        let mut diag = CMatrix::zeros(dim, dim);
        let mut off = 0usize;
        for (t, &m) in tuples.iter().zip(&mult) {
            for _ in 0..m {
                diag[(off, off)] = t[j];
                off += 1;
            }
        }
        generators.push(&u * diag * u.adjoint());
    }
    Ok((generators, chars))
}

/// Random full commutative category: `objects` objects with `spectrum`
/// characters each.  The ambient splits into `spectrum` summands of size
/// `objects`; object `i` takes one coordinate per summand, and everything
/// is conjugated by a seeded summand-respecting random unitary.
pub fn random_category(objects: usize, spectrum: usize, seed: u64) -> Result<CStarCategory> {
    if objects == 0 || spectrum == 0 {
        return Err(Error::Invalid("need at least one object and one spectrum point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = objects * spectrum;
    let mut summands = vec![0usize; d];
    for s in 0..spectrum {
        for i in 0..objects {
            summands[s * objects + i] = s;
        }
    }

    // Block-respecting unitary: one random unitary per summand.
    let mut v = CMatrix::zeros(d, d);
    for s in 0..spectrum {
        let us = linalg::random_unitary(&mut rng, objects);
        for r in 0..objects {
            for c in 0..objects {
                v[(s * objects + r, s * objects + c)] = us[(r, c)];
            }
        }
    }

    let mut projections = Vec::with_capacity(objects);
    for i in 0..objects {
        let mut p = CMatrix::zeros(d, d);
        for s in 0..spectrum {
            let idx = s * objects + i;
            p[(idx, idx)] = num_complex::Complex64::ONE;
        }
        projections.push(&v * p * v.adjoint());
    }

    let labels = (0..objects)
        .map(|i| {
            let c = (b'A' + (i % 26) as u8) as char;
            if i < 26 { c.to_string() } else { format!("{c}{}", i / 26) }
        })
        .collect();
    CStarCategory::new(labels, projections, summands, crate::DEFAULT_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::joint_diagonalize;
    use crate::bimodule::{decompose_presented, is_imprimitivity};
    use crate::category::{check_commutative, check_full};
    use crate::DEFAULT_TOL;

    #[test]
    fn imprimitivity_generator_is_deterministic() {
        let a = random_imprimitivity(5, 10.0, 7).unwrap();
        let b = random_imprimitivity(5, 10.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(is_imprimitivity(&a, DEFAULT_TOL));

        let one = random_imprimitivity(1, 1.0, 0).unwrap();
        assert_eq!(one.total_dim(), 1);
    }

    #[test]
    fn presented_wrapper_round_trips() {
        let m = random_imprimitivity(6, 10.0, 3).unwrap();
        let p = present_randomly(&m, 11).unwrap();
        let (fibered, _) = decompose_presented(&p, DEFAULT_TOL).unwrap();
        assert_eq!(fibered.dims(), m.dims());
    }

    #[test]
    fn presented_algebra_has_expected_characters() {
        let (gens, truth) = random_presented_algebra(12, 3, 5, 1e-6, 9).unwrap();
        let g = joint_diagonalize(&gens, DEFAULT_TOL).unwrap();
        assert_eq!(g.num_characters(), truth);
        assert!(g.reconstruction_residual() < 1e-8);
    }

    #[test]
    fn category_generator_is_full_and_commutative() {
        let c = random_category(3, 4, 13).unwrap();
        assert_eq!(c.ambient_dim(), 12);
        let fullness = check_full(&c, DEFAULT_TOL);
        assert!(fullness.full && fullness.consistent);
        let (comm, _) = check_commutative(&c, DEFAULT_TOL);
        assert!(comm);

        // Determinism.
        let c2 = random_category(3, 4, 13).unwrap();
        assert_eq!(c.projection(0), c2.projection(0));
    }
}
