//! Seeded random systems shared by the tests, the acceptance suite and the
//! CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::gaussflow::{FlowSystem, GaussianAtom, GaussianFamily};
use crate::matcore::{check_condition_ajab, lw_matrices, ExponentVector, SquareMatrix, SymMatrix};
use crate::perturbflow::{perturbed_matrix, PerturbedSystem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_vector<R: Rng>(rng: &mut R, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * normal(rng)).collect()
}

pub fn random_square<R: Rng>(rng: &mut R, d: usize) -> SquareMatrix {
    SquareMatrix::from_fn(d, |_, _| normal(rng))
}

/// Invertible matrix with singular values in `[0.5, 2]`-ish range.
pub fn random_invertible<R: Rng>(rng: &mut R, d: usize) -> SquareMatrix {
    loop {
        let g = random_square(rng, d).scale(0.4).add(&SquareMatrix::identity(d));
        let sv = g.singular_values();
        if sv[d - 1] > 0.3 {
            return g;
        }
    }
}

/// Positive definite matrix `G^T G / d + floor I`.
pub fn random_pd<R: Rng>(rng: &mut R, d: usize, floor: f64) -> SymMatrix {
    let g = random_square(rng, d);
    g.gram().scale(1.0 / d as f64) + SymMatrix::identity(d).scale(floor)
}

/// PSD matrix of the given rank.
pub fn random_psd_rank<R: Rng>(rng: &mut R, d: usize, rank: usize) -> SymMatrix {
    let mut m = SymMatrix::zeros(d);
    for _ in 0..rank {
        m = m + SymMatrix::outer(&random_vector(rng, d, 1.0 / (d as f64).sqrt()));
    }
    m
}

fn family<R: Rng>(rng: &mut R, matrix: SymMatrix, atoms: usize, vscale: f64) -> Result<GaussianFamily> {
    let d = matrix.dim();
    GaussianFamily::new(
        (0..atoms)
            .map(|_| GaussianAtom::new(matrix, random_vector(rng, d, vscale), rng.random_range(0.5..2.0)))
            .collect::<Result<_>>()?,
    )
}

/// Integer-exponent systems: `d, n <= 3`, `p_j in {1, 2}`, at most three
/// atoms per family, positive definite family matrices.
pub fn integer_corpus(seed: u64, count: usize) -> Result<Vec<FlowSystem>> {
    let mut rng = rng(seed);
    (0..count)
        .map(|k| {
            let d = [2, 2, 3, 1][k % 4];
            let n = rng.random_range(1..=3);
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(1..=2) as f64).collect();
            let fams = (0..n)
                .map(|_| {
                    let m = random_pd(&mut rng, d, 0.3);
                    let atoms = rng.random_range(1..=3);
                    family(&mut rng, m, atoms, 1.0)
                })
                .collect::<Result<_>>()?;
            FlowSystem::new(fams, ExponentVector::new(p)?)
        })
        .collect()
}

/// Fractional-exponent systems satisfying the Loewner condition, mixing
/// three constructions: exponents above one with arbitrary PSD matrices,
/// congruent Loomis-Whitney matrices with `p` just above `1/(d-1)`, and
/// rejection-sampled low-rank matrices with exponents below one.
pub fn ajab_corpus(seed: u64, count: usize, d3_every: usize) -> Result<Vec<FlowSystem>> {
    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(count);
    let mut k = 0usize;
    while out.len() < count {
        k += 1;
        let d = if d3_every > 0 && k % d3_every == 0 { 3 } else { 2 };
        let kind = k % 3;
        let (matrices, p): (Vec<SymMatrix>, Vec<f64>) = match kind {
            0 => {
                let n = rng.random_range(1..=3);
                let ms = (0..n)
                    .map(|_| {
                        let rank = rng.random_range(1..=d);
                        random_psd_rank(&mut rng, d, rank)
                    })
                    .collect();
                let p = (0..n).map(|_| fractional(&mut rng, 1.0, 2.5)).collect();
                (ms, p)
            }
            1 => {
                let dmat = random_invertible(&mut rng, d);
                let ms = lw_matrices(d)?.iter().map(|m| m.congruence(&dmat)).collect();
                let base = 1.0 / (d as f64 - 1.0);
                let p = (0..d).map(|_| fractional(&mut rng, base, base + 0.4)).collect();
                (ms, p)
            }
            _ => {
                let n = rng.random_range(2..=3);
                let ms = (0..n)
                    .map(|_| {
                        let rank = rng.random_range(1..=d);
                        random_psd_rank(&mut rng, d, rank)
                    })
                    .collect();
                let p = (0..n).map(|_| fractional(&mut rng, 0.3, 1.0)).collect();
                (ms, p)
            }
        };
        let p = ExponentVector::new(p)?;
        if !check_condition_ajab(&matrices, &p, 1e-12)? {
            continue;
        }
        // keep the integrand comfortably decaying so quadrature boxes stay small
        let a_star = crate::matcore::weighted_sum(&matrices, &p)?;
        if a_star.min_eigenvalue() < 0.15 {
            continue;
        }
        let fams = matrices
            .iter()
            .map(|m| {
                let atoms = rng.random_range(1..=3);
                family(&mut rng, *m, atoms, 0.6)
            })
            .collect::<Result<_>>()?;
        out.push(FlowSystem::new(fams, p)?);
    }
    Ok(out)
}

/// Fractional-exponent systems with positive definite matrices and
/// `p in (0, 3)^n` off the integers; the Loewner condition is not imposed.
pub fn fractional_corpus(seed: u64, count: usize) -> Result<Vec<FlowSystem>> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let d = 2;
            let n = rng.random_range(1..=3);
            let p: Vec<f64> = (0..n).map(|_| fractional(&mut rng, 0.2, 2.8)).collect();
            let fams = (0..n)
                .map(|_| {
                    let m = random_pd(&mut rng, d, 0.3);
                    let atoms = rng.random_range(1..=3);
                    family(&mut rng, m, atoms, 0.6)
                })
                .collect::<Result<_>>()?;
            FlowSystem::new(fams, ExponentVector::new(p)?)
        })
        .collect()
}

/// Uniform draw from `(lo, hi)` kept at least `0.05` away from integers.
fn fractional<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let x: f64 = rng.random_range(lo..hi);
        if (x - x.round()).abs() > 0.05 {
            return x;
        }
    }
}

/// Perturbations of the Loomis-Whitney base in dimension `d` with integer
/// exponents `p`: each atom matrix is `B^2` with `||B - M_j^{1/2}|| <= eps`.
pub fn perturbed_lw_corpus(seed: u64, count: usize, d: usize, p: f64, eps: f64) -> Result<Vec<PerturbedSystem>> {
    let mut rng = rng(seed);
    let base = lw_matrices(d)?;
    (0..count)
        .map(|_| {
            let fams = base
                .iter()
                .map(|m| {
                    let atoms = rng.random_range(1..=2);
                    GaussianFamily::new(
                        (0..atoms)
                            .map(|_| {
                                let a = perturbed_matrix(m, eps, &mut rng)?;
                                GaussianAtom::new(a, random_vector(&mut rng, d, 1.0), rng.random_range(0.5..2.0))
                            })
                            .collect::<Result<_>>()?,
                    )
                })
                .collect::<Result<_>>()?;
            let sys = FlowSystem::new(fams, ExponentVector::uniform(d, p)?)?;
            PerturbedSystem::new(base.clone(), sys)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpora_are_seeded() {
        let a = integer_corpus(7, 10).unwrap();
        let b = integer_corpus(7, 10).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.p().as_integers().is_some()));
    }

    #[test]
    fn ajab_corpus_satisfies_condition() {
        for s in ajab_corpus(11, 30, 0).unwrap() {
            let ms = s.constant_matrices().unwrap();
            assert!(check_condition_ajab(&ms, s.p(), 1e-12).unwrap());
            assert!(s.p().as_integers().is_none());
        }
    }
}
