//! Complex Hermitian linear algebra: construction, spectral routines,
//! tensor/partial-trace operations, and the operator norm used by all
//! measures.
//!
//! Index convention for `kron`/partial traces is row-major first-factor-major:
//! the composite index is `i * dim_b + j`. The Choi constraints elsewhere in
//! the crate depend on this convention.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{tol, Error, Result};

/// Dense complex matrix carrier used throughout the crate.
pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Hermitian matrix; stored form is exactly symmetrized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HermMatrixJson", into = "HermMatrixJson")]
pub struct HermMatrix {
    dim: usize,
    m: CMat,
}

impl HermMatrix {
    /// Validates squareness and Hermiticity (tolerance
    /// [`tol::HERMITICITY`]), then stores `(m + m†)/2`.
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, not square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let adj = m.adjoint();
        let defect = (&m - &adj).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > tol::HERMITICITY {
            return Err(Error::InvalidInput(format!(
                "hermiticity defect {defect:.3e} exceeds {:.0e}",
                tol::HERMITICITY
            )));
        }
        let dim = m.nrows();
        Ok(Self {
            dim,
            m: (m + adj).scale(0.5),
        })
    }

    /// Builds from separate real and imaginary parts.
    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let d = re.len();
        if im.len() != d || re.iter().chain(im.iter()).any(|row| row.len() != d) {
            return Err(Error::InvalidInput("ragged re/im grids".into()));
        }
        Self::new(CMat::from_fn(d, d, |i, j| c(re[i][j], im[i][j])))
    }

    /// Builds from a real symmetric grid.
    pub fn from_real(rows: &[Vec<f64>]) -> Result<Self> {
        let zeros = vec![vec![0.0; rows.len()]; rows.len()];
        Self::from_parts(rows, &zeros)
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let d = diag.len();
        Self {
            dim: d,
            m: CMat::from_fn(d, d, |i, j| if i == j { c(diag[i], 0.0) } else { c(0.0, 0.0) }),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            m: CMat::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            m: CMat::identity(dim, dim),
        }
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        Self {
            dim,
            m: CMat::identity(dim, dim).scale(s),
        }
    }

    /// Rank-1 projector-like matrix `v v†` (not normalized).
    pub fn outer(v: &[Complex64]) -> Self {
        let d = v.len();
        Self {
            dim: d,
            m: CMat::from_fn(d, d, |i, j| v[i] * v[j].conj()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.m[(i, j)]
    }

    /// Trace; real because the matrix is Hermitian.
    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .m
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("nonempty spectrum")
    }

    /// Operator norm: max absolute eigenvalue.
    pub fn op_norm(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|l| l.abs())
            .fold(0.0, f64::max)
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// PSD within scale-relative slack: `min eig >= -PSD_REL * max(1, ||x||)`.
    pub fn is_psd(&self) -> bool {
        let ev = self.eigenvalues();
        let norm = ev.iter().map(|l| l.abs()).fold(0.0, f64::max);
        ev[0] >= -tol::PSD_REL * norm.max(1.0)
    }

    /// Principal square root with negative eigenvalues clamped to zero, so
    /// PSD noise cannot produce complex-spurious Kraus entries.
    pub fn sqrt_psd(&self) -> Self {
        let eig = self.m.clone().symmetric_eigen();
        let d = self.dim;
        let sq = DVector::from_iterator(d, eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
        let mut m = CMat::zeros(d, d);
        for k in 0..d {
            let v = eig.eigenvectors.column(k);
            let s = c(sq[k], 0.0);
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] += s * v[i] * v[j].conj();
                }
            }
        }
        Self { dim: d, m }
    }

    /// Kronecker product; composite index `(i, j) -> i * dim(b) + j`.
    pub fn kron(&self, b: &Self) -> Self {
        Self {
            dim: self.dim * b.dim,
            m: self.m.kronecker(&b.m),
        }
    }

    /// Traces out the second tensor factor.
    pub fn partial_trace_2(&self, dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a * dim_b != self.dim {
            return Err(Error::DimMismatch(format!(
                "partial_trace_2: {} != {dim_a} * {dim_b}",
                self.dim
            )));
        }
        let m = CMat::from_fn(dim_a, dim_a, |a, b| {
            (0..dim_b).map(|i| self.m[(a * dim_b + i, b * dim_b + i)]).sum()
        });
        Ok(Self { dim: dim_a, m })
    }

    /// Traces out the first tensor factor.
    pub fn partial_trace_1(&self, dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a * dim_b != self.dim {
            return Err(Error::DimMismatch(format!(
                "partial_trace_1: {} != {dim_a} * {dim_b}",
                self.dim
            )));
        }
        let m = CMat::from_fn(dim_b, dim_b, |i, j| {
            (0..dim_a).map(|a| self.m[(a * dim_b + i, a * dim_b + j)]).sum()
        });
        Ok(Self { dim: dim_b, m })
    }

    /// Block-diagonal embedding `diag(self, b)`.
    pub fn direct_sum(&self, b: &Self) -> Self {
        let d = self.dim + b.dim;
        let mut m = CMat::zeros(d, d);
        m.view_mut((0, 0), (self.dim, self.dim)).copy_from(&self.m);
        m.view_mut((self.dim, self.dim), (b.dim, b.dim)).copy_from(&b.m);
        Self { dim: d, m }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            m: self.m.scale(s),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch("add: unequal dims".into()));
        }
        Ok(Self {
            dim: self.dim,
            m: &self.m + &other.m,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch("sub: unequal dims".into()));
        }
        Ok(Self {
            dim: self.dim,
            m: &self.m - &other.m,
        })
    }

    /// Real linear combination; Hermiticity is preserved exactly.
    pub fn linear_combination(terms: &[(f64, &Self)]) -> Result<Self> {
        let d = terms
            .first()
            .ok_or_else(|| Error::InvalidInput("empty linear combination".into()))?
            .1
            .dim;
        let mut m = CMat::zeros(d, d);
        for (w, h) in terms {
            if h.dim != d {
                return Err(Error::DimMismatch("linear_combination: unequal dims".into()));
            }
            m += h.m.scale(*w);
        }
        Ok(Self { dim: d, m })
    }
}

/// Largest absolute entry difference; convenient for exactness assertions.
pub fn max_entry_diff(a: &HermMatrix, b: &HermMatrix) -> f64 {
    assert_eq!(a.dim(), b.dim(), "max_entry_diff: unequal dims");
    (&a.m - &b.m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Operator norm of the commutator `[a, b]`; `i[a,b]` is Hermitian.
pub fn commutator_norm(a: &HermMatrix, b: &HermMatrix) -> f64 {
    assert_eq!(a.dim(), b.dim(), "commutator_norm: unequal dims");
    let comm = &a.m * &b.m - &b.m * &a.m;
    let herm = comm.map(|z| z * c(0.0, 1.0));
    HermMatrix::new(herm).expect("i[a,b] is Hermitian").op_norm()
}

/// Least-squares projection of `x` onto the real span of `basis`.
///
/// Returns membership (Frobenius residual below [`tol::SPAN_RESIDUAL`]) and
/// the residual itself.
pub fn span_membership(x: &HermMatrix, basis: &[HermMatrix]) -> (bool, f64) {
    assert!(
        basis.iter().all(|b| b.dim() == x.dim()),
        "span_membership: unequal dims"
    );
    let d = x.dim();
    let rows = 2 * d * d;
    let embed = |h: &HermMatrix| {
        DVector::<f64>::from_iterator(
            rows,
            h.m.iter().map(|z| z.re).chain(h.m.iter().map(|z| z.im)),
        )
    };
    let a = nalgebra::DMatrix::<f64>::from_columns(
        &basis.iter().map(embed).collect::<Vec<_>>(),
    );
    let b = embed(x);
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&b, 1e-12).expect("SVD least squares");
    let residual = (a * coef - b).norm();
    (residual < tol::SPAN_RESIDUAL, residual)
}

pub fn pauli_x() -> HermMatrix {
    HermMatrix::from_real(&[vec![0.0, 1.0], vec![1.0, 0.0]]).expect("pauli")
}

pub fn pauli_y() -> HermMatrix {
    HermMatrix::new(CMat::from_row_slice(2, 2, &[
        c(0.0, 0.0),
        c(0.0, -1.0),
        c(0.0, 1.0),
        c(0.0, 0.0),
    ]))
    .expect("pauli")
}

pub fn pauli_z() -> HermMatrix {
    HermMatrix::from_diag(&[1.0, -1.0])
}

/// Density matrix: PSD with unit trace (a sub-normalized variant with
/// trace <= 1 is available where intermediate states need it).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DensityMatrixJson", into = "DensityMatrixJson")]
pub struct DensityMatrix {
    mat: HermMatrix,
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixJson {
    mat: HermMatrix,
}

impl TryFrom<DensityMatrixJson> for DensityMatrix {
    type Error = Error;
    fn try_from(j: DensityMatrixJson) -> Result<Self> {
        DensityMatrix::sub_normalized(j.mat)
    }
}

impl From<DensityMatrix> for DensityMatrixJson {
    fn from(d: DensityMatrix) -> Self {
        Self { mat: d.mat }
    }
}

impl DensityMatrix {
    pub fn new(mat: HermMatrix) -> Result<Self> {
        if !mat.is_psd() {
            return Err(Error::InvalidInput(format!(
                "state not PSD: min eigenvalue {:.3e}",
                mat.min_eigenvalue()
            )));
        }
        if (mat.trace() - 1.0).abs() > tol::PROB_NORM {
            return Err(Error::InvalidInput(format!(
                "state trace {} != 1",
                mat.trace()
            )));
        }
        Ok(Self { mat })
    }

    /// PSD with trace <= 1; used for unnormalized branch states.
    pub fn sub_normalized(mat: HermMatrix) -> Result<Self> {
        if !mat.is_psd() {
            return Err(Error::InvalidInput("state not PSD".into()));
        }
        if mat.trace() > 1.0 + tol::PROB_NORM {
            return Err(Error::InvalidInput(format!(
                "state trace {} > 1",
                mat.trace()
            )));
        }
        Ok(Self { mat })
    }

    /// Normalized pure state `|v><v| / <v|v>`.
    pub fn from_pure(v: &[Complex64]) -> Result<Self> {
        let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if n2 <= 0.0 {
            return Err(Error::InvalidInput("zero state vector".into()));
        }
        Self::new(HermMatrix::outer(v).scale(1.0 / n2))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            mat: HermMatrix::scaled_identity(dim, 1.0 / dim as f64),
        }
    }

    pub fn matrix(&self) -> &HermMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }
}

/// Parses an exact numeric literal: a decimal, a fraction `a/b`, or a surd
/// `sqrt(x)` optionally divided as `sqrt(x)/y`, each with an optional sign.
pub fn parse_exact_literal(s: &str) -> Result<f64> {
    let t = s.trim();
    let (sign, rest) = match t.strip_prefix('-') {
        Some(r) => (-1.0, r),
        None => (1.0, t.strip_prefix('+').unwrap_or(t)),
    };
    let bad = || Error::InvalidInput(format!("cannot parse numeric literal {s:?}"));
    let value = if let Some(r) = rest.strip_prefix("sqrt(") {
        let (inner, tail) = r.split_once(')').ok_or_else(bad)?;
        let base: f64 = inner.trim().parse().map_err(|_| bad())?;
        if base < 0.0 {
            return Err(bad());
        }
        match tail.trim() {
            "" => base.sqrt(),
            d => {
                let den: f64 = d.strip_prefix('/').ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
                if den == 0.0 {
                    return Err(bad());
                }
                base.sqrt() / den
            }
        }
    } else if let Some((num, den)) = rest.split_once('/') {
        let n: f64 = num.trim().parse().map_err(|_| bad())?;
        let d: f64 = den.trim().parse().map_err(|_| bad())?;
        if d == 0.0 {
            return Err(bad());
        }
        n / d
    } else {
        rest.parse().map_err(|_| bad())?
    };
    if !value.is_finite() {
        return Err(bad());
    }
    Ok(sign * value)
}

/// JSON entry: a plain number or an exact literal string such as `"1/3"`
/// or `"sqrt(2)/4"`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(f64),
    Str(String),
}

impl NumOrStr {
    fn value(&self) -> Result<f64> {
        match self {
            NumOrStr::Num(v) if v.is_finite() => Ok(*v),
            NumOrStr::Num(v) => Err(Error::InvalidInput(format!("non-finite entry {v}"))),
            NumOrStr::Str(s) => parse_exact_literal(s),
        }
    }
}

/// Wire form: `{"dim": n, "re": [[..]], "im": [[..]]}`; `im` defaults to
/// zeros when omitted.
#[derive(Serialize, Deserialize)]
struct HermMatrixJson {
    dim: usize,
    re: Vec<Vec<NumOrStr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    im: Option<Vec<Vec<NumOrStr>>>,
}

impl TryFrom<HermMatrixJson> for HermMatrix {
    type Error = Error;

    fn try_from(j: HermMatrixJson) -> Result<Self> {
        let d = j.dim;
        let grid = |g: &[Vec<NumOrStr>]| -> Result<Vec<Vec<f64>>> {
            if g.len() != d || g.iter().any(|row| row.len() != d) {
                return Err(Error::InvalidInput(format!("grid is not {d}x{d}")));
            }
            g.iter()
                .map(|row| row.iter().map(NumOrStr::value).collect())
                .collect()
        };
        let re = grid(&j.re)?;
        let im = match &j.im {
            Some(g) => grid(g)?,
            None => vec![vec![0.0; d]; d],
        };
        HermMatrix::from_parts(&re, &im)
    }
}

impl From<HermMatrix> for HermMatrixJson {
    fn from(h: HermMatrix) -> Self {
        let d = h.dim();
        let im_zero = h.m.iter().all(|z| z.im == 0.0);
        let grid = |f: fn(&Complex64) -> f64| {
            (0..d)
                .map(|i| (0..d).map(|j| NumOrStr::Num(f(&h.m[(i, j)]))).collect())
                .collect()
        };
        HermMatrixJson {
            dim: d,
            re: grid(|z| z.re),
            im: if im_zero { None } else { Some(grid(|z| z.im)) },
        }
    }
}

/// Wire form for a general (not necessarily Hermitian) complex matrix, with
/// the same entry conventions as the Hermitian form.
#[derive(Serialize, Deserialize)]
pub struct CMatJson {
    dim: usize,
    re: Vec<Vec<NumOrStr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    im: Option<Vec<Vec<NumOrStr>>>,
}

impl CMatJson {
    pub fn decode(&self) -> Result<CMat> {
        let d = self.dim;
        let grid = |g: &[Vec<NumOrStr>]| -> Result<Vec<Vec<f64>>> {
            if g.len() != d || g.iter().any(|row| row.len() != d) {
                return Err(Error::InvalidInput(format!("grid is not {d}x{d}")));
            }
            g.iter()
                .map(|row| row.iter().map(NumOrStr::value).collect())
                .collect()
        };
        let re = grid(&self.re)?;
        let im = match &self.im {
            Some(g) => grid(g)?,
            None => vec![vec![0.0; d]; d],
        };
        Ok(CMat::from_fn(d, d, |i, j| c(re[i][j], im[i][j])))
    }

    pub fn encode(m: &CMat) -> Self {
        let d = m.nrows();
        let im_zero = m.iter().all(|z| z.im == 0.0);
        let grid = |f: fn(&Complex64) -> f64| {
            (0..d)
                .map(|i| (0..d).map(|j| NumOrStr::Num(f(&m[(i, j)]))).collect())
                .collect()
        };
        CMatJson {
            dim: d,
            re: grid(|z| z.re),
            im: if im_zero { None } else { Some(grid(|z| z.im)) },
        }
    }
}
