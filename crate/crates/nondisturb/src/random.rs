//! Seeded random generators for matrices, states, POVMs, instruments, and
//! channels. Every generator takes the caller's RNG so that trial seeds can
//! be derived deterministically (base seed plus trial index).

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::measurement::{Channel, Instrument, Picture, Povm};
use crate::qmat::{c, CMat, DensityMatrix, HermMatrix};

/// Matrix with independent standard complex Gaussian entries.
pub fn ginibre<R: Rng>(rng: &mut R, dim: usize) -> CMat {
    CMat::from_fn(dim, dim, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Gaussian Hermitian matrix `(G + G')/2`.
pub fn herm<R: Rng>(rng: &mut R, dim: usize) -> HermMatrix {
    let g = ginibre(rng, dim);
    HermMatrix::new((&g + g.adjoint()).scale(0.5)).expect("symmetrized matrix is Hermitian")
}

/// Haar-distributed unitary via phase-corrected QR of a Ginibre matrix.
pub fn unitary<R: Rng>(rng: &mut R, dim: usize) -> CMat {
    let qr = ginibre(rng, dim).qr();
    let q = qr.q();
    let r = qr.r();
    let phases = DVector::<Complex64>::from_fn(dim, |i, _| {
        let rii = r[(i, i)];
        if rii.norm() < 1e-300 {
            c(1.0, 0.0)
        } else {
            rii / rii.norm()
        }
    });
    let mut u = q;
    for j in 0..dim {
        for i in 0..dim {
            u[(i, j)] *= phases[j];
        }
    }
    u
}

/// Haar-random pure state.
pub fn pure_state<R: Rng>(rng: &mut R, dim: usize) -> DensityMatrix {
    let v: Vec<Complex64> = (0..dim)
        .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    DensityMatrix::from_pure(&v).expect("Gaussian vector is nonzero")
}

/// Full-rank random density matrix `G G' / tr`.
pub fn state<R: Rng>(rng: &mut R, dim: usize) -> DensityMatrix {
    let g = ginibre(rng, dim);
    let m = &g * g.adjoint();
    let tr: f64 = (0..dim).map(|i| m[(i, i)].re).sum();
    DensityMatrix::new(HermMatrix::new(m.scale(1.0 / tr)).expect("G G' is Hermitian"))
        .expect("normalized Wishart is a state")
}

/// Random point on the probability simplex.
pub fn simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Column-stochastic kernel `k[out][in]` with `sum_out k[out][in] = 1`.
pub fn stochastic_kernel<R: Rng>(rng: &mut R, n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    let mut kernel = vec![vec![0.0; n_in]; n_out];
    for j in 0..n_in {
        for (i, w) in simplex(rng, n_out).into_iter().enumerate() {
            kernel[i][j] = w;
        }
    }
    kernel
}

/// Generic full-rank POVM: Wishart elements renormalized by the inverse
/// square root of their sum.
pub fn povm<R: Rng>(rng: &mut R, dim: usize, n_outcomes: usize) -> Povm {
    let raw: Vec<CMat> = (0..n_outcomes)
        .map(|_| {
            let g = ginibre(rng, dim);
            &g * g.adjoint()
        })
        .collect();
    let mut sum = CMat::zeros(dim, dim);
    for h in &raw {
        sum += h;
    }
    let eig = HermMatrix::new(sum).expect("Wishart sum Hermitian").into_matrix().symmetric_eigen();
    let mut inv_sqrt = CMat::zeros(dim, dim);
    for k in 0..dim {
        let col = eig.eigenvectors.column(k);
        let w = c(1.0 / eig.eigenvalues[k].max(1e-300).sqrt(), 0.0);
        for i in 0..dim {
            for j in 0..dim {
                inv_sqrt[(i, j)] += w * col[i] * col[j].conj();
            }
        }
    }
    let elements = raw
        .into_iter()
        .map(|h| HermMatrix::new(&inv_sqrt * h * &inv_sqrt).expect("conjugation keeps Hermitian"))
        .collect();
    Povm::from_elements(elements).expect("renormalized Wishart family is a POVM")
}

/// Haar-random rank-1 PVM with `dim` outcomes.
pub fn pvm<R: Rng>(rng: &mut R, dim: usize) -> Povm {
    let u = unitary(rng, dim);
    let elements = (0..dim)
        .map(|k| {
            let col: Vec<Complex64> = u.column(k).iter().copied().collect();
            HermMatrix::outer(&col)
        })
        .collect();
    Povm::from_elements(elements).expect("unitary columns give a PVM")
}

/// Pair of commuting POVMs: both diagonal in a common Haar-random basis with
/// independent stochastic eigenvalue kernels.
pub fn commuting_pair<R: Rng>(
    rng: &mut R,
    dim: usize,
    n_a: usize,
    n_b: usize,
) -> (Povm, Povm) {
    let u = unitary(rng, dim);
    let build = |kernel: Vec<Vec<f64>>| {
        let elements = kernel
            .iter()
            .map(|row| {
                let diag = CMat::from_fn(dim, dim, |i, j| {
                    if i == j {
                        c(row[i], 0.0)
                    } else {
                        c(0.0, 0.0)
                    }
                });
                HermMatrix::new(&u * diag * u.adjoint()).expect("conjugated diag Hermitian")
            })
            .collect();
        Povm::from_elements(elements).expect("stochastic diagonals form a POVM")
    };
    let a = build(stochastic_kernel(rng, n_a, dim));
    let b = build(stochastic_kernel(rng, n_b, dim));
    (a, b)
}

/// Random channel with `n_kraus` Ginibre Kraus operators, right-normalized
/// to be trace preserving.
pub fn channel<R: Rng>(rng: &mut R, dim: usize, n_kraus: usize) -> Channel {
    let raw: Vec<CMat> = (0..n_kraus).map(|_| ginibre(rng, dim)).collect();
    let mut s = CMat::zeros(dim, dim);
    for k in &raw {
        s += k.adjoint() * k;
    }
    let eig = HermMatrix::new(s).expect("K'K sum Hermitian").into_matrix().symmetric_eigen();
    let mut inv_sqrt = CMat::zeros(dim, dim);
    for k in 0..dim {
        let col = eig.eigenvectors.column(k);
        let w = c(1.0 / eig.eigenvalues[k].max(1e-300).sqrt(), 0.0);
        for i in 0..dim {
            for j in 0..dim {
                inv_sqrt[(i, j)] += w * col[i] * col[j].conj();
            }
        }
    }
    Channel::from_kraus(raw.into_iter().map(|k| k * &inv_sqrt).collect())
        .expect("right-normalized Kraus family is a channel")
}

/// Random instrument implementing the given POVM: each branch applies a
/// random channel after the Lueders branch, so the induced POVM is exact.
pub fn instrument<R: Rng>(rng: &mut R, p: &Povm) -> Instrument {
    let dim = p.dim();
    let kraus = p
        .elements()
        .iter()
        .map(|e| {
            let root = e.sqrt_psd().into_matrix();
            channel(rng, dim, 2)
                .kraus_list()
                .into_iter()
                .map(|l| l * &root)
                .collect()
        })
        .collect();
    Instrument::from_kraus_labeled(p.labels().to_vec(), kraus, Picture::Schroedinger)
        .expect("Lueders branches with post-channels stay complete")
}
