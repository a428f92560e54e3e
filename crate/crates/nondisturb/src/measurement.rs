//! POVMs, instruments, and channels: construction, validation, canonical
//! instruments, Choi/Kraus conversion, and sequential composition.
//!
//! Choi convention (used by every SDP in the crate): a branch map with
//! Schroedinger Kraus operators `K` is stored as
//! `W = sum_K (K' (x) 1) |Om><Om| (K (x) 1)` with `|Om> = sum_i |ii>`
//! unnormalized and `K'` the adjoint. Consequences relied on throughout:
//! `tr_2[W] = sum K'K` is the induced POVM element, the Heisenberg action is
//! `tr_2[W (1 (x) B^T)]` (plain transpose), and the Schroedinger action is
//! `(tr_1[W (rho (x) 1)])^T`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::qmat::{c, CMat, HermMatrix};
use crate::{tol, Error, Result};

/// Validation report for a candidate POVM; never panics on bad input.
#[derive(Debug, Clone, Serialize)]
pub struct PovmValidation {
    /// Minimum eigenvalue of each element.
    pub element_min_eigs: Vec<f64>,
    /// Operator norm of `sum_x E_x - 1`.
    pub completeness_defect: f64,
    pub psd_ok: bool,
    pub complete_ok: bool,
    pub ok: bool,
}

/// Checks PSD-ness per element and completeness of the family.
pub fn validate_elements(elements: &[HermMatrix]) -> Result<PovmValidation> {
    let d = elements
        .first()
        .ok_or_else(|| Error::InvalidInput("empty POVM".into()))?
        .dim();
    if elements.iter().any(|e| e.dim() != d) {
        return Err(Error::DimMismatch("POVM elements of unequal dims".into()));
    }
    let element_min_eigs: Vec<f64> = elements.iter().map(|e| e.min_eigenvalue()).collect();
    let psd_ok = elements.iter().all(|e| e.is_psd());
    let sum = HermMatrix::linear_combination(
        &elements.iter().map(|e| (1.0, e)).collect::<Vec<_>>(),
    )?;
    let completeness_defect = sum.sub(&HermMatrix::identity(d))?.op_norm();
    let complete_ok = completeness_defect <= tol::COMPLETENESS;
    Ok(PovmValidation {
        element_min_eigs,
        completeness_defect,
        psd_ok,
        complete_ok,
        ok: psd_ok && complete_ok,
    })
}

/// Finite labeled family of PSD elements summing to identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PovmJson", into = "PovmJson")]
pub struct Povm {
    labels: Vec<String>,
    elements: Vec<HermMatrix>,
}

impl Povm {
    pub fn new(labels: Vec<String>, elements: Vec<HermMatrix>) -> Result<Self> {
        if labels.len() != elements.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} elements",
                labels.len(),
                elements.len()
            )));
        }
        let report = validate_elements(&elements)?;
        if !report.ok {
            return Err(Error::InvalidInput(format!(
                "invalid POVM: min eigenvalues {:?}, completeness defect {:.3e}",
                report.element_min_eigs, report.completeness_defect
            )));
        }
        Ok(Self { labels, elements })
    }

    /// Labels default to "1".."k".
    pub fn from_elements(elements: Vec<HermMatrix>) -> Result<Self> {
        let labels = (1..=elements.len()).map(|i| i.to_string()).collect();
        Self::new(labels, elements)
    }

    /// Trivial (coin-flip style) POVM with `k` equal elements `1/k`.
    pub fn trivial(dim: usize, k: usize) -> Self {
        let e = HermMatrix::scaled_identity(dim, 1.0 / k as f64);
        Self::from_elements(vec![e; k]).expect("trivial POVM is valid")
    }

    /// Computational-basis PVM.
    pub fn computational(dim: usize) -> Self {
        Self::from_elements(
            (0..dim)
                .map(|i| {
                    let mut diag = vec![0.0; dim];
                    diag[i] = 1.0;
                    HermMatrix::from_diag(&diag)
                })
                .collect(),
        )
        .expect("basis PVM is valid")
    }

    /// Rank-1 PVM from the eigenbasis of an observable, ordered by ascending
    /// eigenvalue; outcome labels carry the eigenvalues' order.
    pub fn projective_from_eigenbasis(observable: &HermMatrix) -> Self {
        let eig = observable.matrix().clone().symmetric_eigen();
        let d = observable.dim();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let elements = order
            .iter()
            .map(|&k| {
                let v: Vec<Complex64> = eig.eigenvectors.column(k).iter().copied().collect();
                HermMatrix::outer(&v)
            })
            .collect();
        Self::from_elements(elements).expect("eigenbasis PVM is valid")
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn n_outcomes(&self) -> usize {
        self.elements.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn elements(&self) -> &[HermMatrix] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &HermMatrix {
        &self.elements[i]
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// True when every element is an orthogonal projector.
    pub fn is_projective(&self) -> bool {
        self.elements.iter().all(|e| {
            let sq = HermMatrix::new(e.matrix() * e.matrix()).expect("E^2 Hermitian");
            crate::qmat::max_entry_diff(&sq, e) < tol::COMPLETENESS
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PovmJson {
    #[serde(default)]
    labels: Option<Vec<String>>,
    elements: Vec<HermMatrix>,
}

impl TryFrom<PovmJson> for Povm {
    type Error = Error;
    fn try_from(j: PovmJson) -> Result<Self> {
        match j.labels {
            Some(labels) => Povm::new(labels, j.elements),
            None => Povm::from_elements(j.elements),
        }
    }
}

impl From<Povm> for PovmJson {
    fn from(p: Povm) -> Self {
        PovmJson {
            labels: Some(p.labels),
            elements: p.elements,
        }
    }
}

/// Operator picture for Kraus input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Picture {
    Schroedinger,
    Heisenberg,
}

fn choi_from_schroedinger_kraus(dim: usize, kraus: &[CMat]) -> Result<HermMatrix> {
    let mut w = CMat::zeros(dim * dim, dim * dim);
    for k in kraus {
        if k.nrows() != dim || k.ncols() != dim {
            return Err(Error::DimMismatch("Kraus operator of wrong dim".into()));
        }
        let v = DVector::<Complex64>::from_fn(dim * dim, |p, _| {
            let (a, i) = (p / dim, p % dim);
            k[(i, a)].conj()
        });
        for r in 0..dim * dim {
            for s in 0..dim * dim {
                w[(r, s)] += v[r] * v[s].conj();
            }
        }
    }
    HermMatrix::new(w)
}

fn kraus_from_choi(dim: usize, choi: &HermMatrix) -> Vec<CMat> {
    let eig = choi.matrix().clone().symmetric_eigen();
    let mut out = Vec::new();
    for k in 0..dim * dim {
        let lam = eig.eigenvalues[k];
        if lam > 1e-12 {
            let s = c(lam.sqrt(), 0.0);
            let col = eig.eigenvectors.column(k);
            let vt = CMat::from_fn(dim, dim, |a, i| s * col[a * dim + i]);
            out.push(vt.adjoint());
        }
    }
    out
}

fn contract_adjoint(choi: &HermMatrix, x: &HermMatrix) -> HermMatrix {
    let d = x.dim();
    let prod = choi.matrix() * HermMatrix::identity(d).matrix().kronecker(&x.matrix().transpose());
    let r = CMat::from_fn(d, d, |a, b| (0..d).map(|i| prod[(a * d + i, b * d + i)]).sum());
    HermMatrix::new(r).expect("adjoint action of Hermitian input is Hermitian")
}

fn contract_apply(choi: &HermMatrix, rho: &HermMatrix) -> HermMatrix {
    let d = rho.dim();
    let prod = choi.matrix() * rho.matrix().kronecker(HermMatrix::identity(d).matrix());
    let r = CMat::from_fn(d, d, |i, j| (0..d).map(|a| prod[(a * d + i, a * d + j)]).sum());
    HermMatrix::new(r.transpose()).expect("branch action of Hermitian input is Hermitian")
}

/// Per-outcome CP maps with trace-preserving sum, stored as Choi matrices
/// (optionally with the Schroedinger Kraus lists they came from).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "InstrumentJson", into = "InstrumentJson")]
pub struct Instrument {
    povm_dim: usize,
    labels: Vec<String>,
    choi: Vec<HermMatrix>,
    kraus: Option<Vec<Vec<CMat>>>,
}

impl Instrument {
    /// Builds from per-outcome Kraus lists in the given picture; Heisenberg
    /// input is converted by taking adjoints.
    pub fn from_kraus(kraus_per_outcome: Vec<Vec<CMat>>, picture: Picture) -> Result<Self> {
        let labels = (1..=kraus_per_outcome.len()).map(|i| i.to_string()).collect();
        Self::from_kraus_labeled(labels, kraus_per_outcome, picture)
    }

    pub fn from_kraus_labeled(
        labels: Vec<String>,
        kraus_per_outcome: Vec<Vec<CMat>>,
        picture: Picture,
    ) -> Result<Self> {
        let dim = kraus_per_outcome
            .first()
            .and_then(|ks| ks.first())
            .ok_or_else(|| Error::InvalidInput("empty Kraus family".into()))?
            .nrows();
        let schroedinger: Vec<Vec<CMat>> = kraus_per_outcome
            .into_iter()
            .map(|ks| {
                ks.into_iter()
                    .map(|k| match picture {
                        Picture::Schroedinger => k,
                        Picture::Heisenberg => k.adjoint(),
                    })
                    .collect()
            })
            .collect();
        let mut total = CMat::zeros(dim, dim);
        for k in schroedinger.iter().flatten() {
            total += k.adjoint() * k;
        }
        let defect = HermMatrix::new(total)?
            .sub(&HermMatrix::identity(dim))?
            .op_norm();
        if defect > tol::COMPLETENESS {
            return Err(Error::InvalidInput(format!(
                "Kraus completeness defect {defect:.3e}"
            )));
        }
        let choi = schroedinger
            .iter()
            .map(|ks| choi_from_schroedinger_kraus(dim, ks))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            povm_dim: dim,
            labels,
            choi,
            kraus: Some(schroedinger),
        })
    }

    /// Builds from per-outcome Choi matrices in the crate convention.
    pub fn from_choi(choi: Vec<HermMatrix>) -> Result<Self> {
        let labels = (1..=choi.len()).map(|i| i.to_string()).collect();
        Self::from_choi_labeled(labels, choi)
    }

    pub fn from_choi_labeled(labels: Vec<String>, choi: Vec<HermMatrix>) -> Result<Self> {
        let d2 = choi
            .first()
            .ok_or_else(|| Error::InvalidInput("empty instrument".into()))?
            .dim();
        let dim = (d2 as f64).sqrt().round() as usize;
        if dim * dim != d2 || choi.iter().any(|w| w.dim() != d2) {
            return Err(Error::DimMismatch("Choi dims must all be d^2".into()));
        }
        if labels.len() != choi.len() {
            return Err(Error::InvalidInput("label/outcome count mismatch".into()));
        }
        for w in &choi {
            if !w.is_psd() {
                return Err(Error::InvalidInput(format!(
                    "branch not CP: Choi min eigenvalue {:.3e}",
                    w.min_eigenvalue()
                )));
            }
        }
        let induced: Vec<HermMatrix> = choi
            .iter()
            .map(|w| w.partial_trace_2(dim, dim))
            .collect::<Result<Vec<_>>>()?;
        let report = validate_elements(&induced)?;
        if !report.complete_ok {
            return Err(Error::InvalidInput(format!(
                "instrument not trace preserving: defect {:.3e}",
                report.completeness_defect
            )));
        }
        Ok(Self {
            povm_dim: dim,
            labels,
            choi,
            kraus: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.povm_dim
    }

    pub fn n_outcomes(&self) -> usize {
        self.choi.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn choi(&self, outcome: usize) -> &HermMatrix {
        &self.choi[outcome]
    }

    pub fn choi_list(&self) -> &[HermMatrix] {
        &self.choi
    }

    /// Schroedinger Kraus lists, recomputed from the Choi storage if absent.
    pub fn kraus_lists(&self) -> Vec<Vec<CMat>> {
        match &self.kraus {
            Some(k) => k.clone(),
            None => self
                .choi
                .iter()
                .map(|w| kraus_from_choi(self.povm_dim, w))
                .collect(),
        }
    }

    /// Induced POVM: element `x` is `tr_2` of the `x`-th Choi matrix.
    pub fn induced_povm(&self) -> Povm {
        let elements = self
            .choi
            .iter()
            .map(|w| {
                w.partial_trace_2(self.povm_dim, self.povm_dim)
                    .expect("Choi dim is d^2")
            })
            .collect();
        Povm::new(self.labels.clone(), elements).expect("induced family is a POVM")
    }

    /// Heisenberg action of one branch on a Hermitian operator.
    pub fn adjoint_apply(&self, outcome: &str, x: &HermMatrix) -> Result<HermMatrix> {
        let idx = self
            .labels
            .iter()
            .position(|l| l == outcome)
            .ok_or_else(|| Error::InvalidInput(format!("unknown outcome label {outcome:?}")))?;
        Ok(self.adjoint_apply_idx(idx, x))
    }

    pub fn adjoint_apply_idx(&self, outcome: usize, x: &HermMatrix) -> HermMatrix {
        assert_eq!(x.dim(), self.povm_dim, "operand dim mismatch");
        contract_adjoint(&self.choi[outcome], x)
    }

    /// Schroedinger action of one branch (accepts unnormalized states).
    pub fn apply_idx(&self, outcome: usize, rho: &HermMatrix) -> HermMatrix {
        assert_eq!(rho.dim(), self.povm_dim, "operand dim mismatch");
        contract_apply(&self.choi[outcome], rho)
    }

    /// Sum of all branch maps; always a valid channel.
    pub fn total_channel(&self) -> Channel {
        let sum = HermMatrix::linear_combination(
            &self.choi.iter().map(|w| (1.0, w)).collect::<Vec<_>>(),
        )
        .expect("nonempty instrument");
        Channel::new(sum).expect("branch sum is trace preserving")
    }

    /// New instrument measuring after `ch` acts: branches `I^x . Lambda`.
    pub fn after_channel(&self, ch: &Channel) -> Result<Self> {
        if ch.dim() != self.povm_dim {
            return Err(Error::DimMismatch("channel dim mismatch".into()));
        }
        let cks = ch.kraus_list();
        let kraus = self
            .kraus_lists()
            .iter()
            .map(|ks| {
                ks.iter()
                    .flat_map(|k| cks.iter().map(move |l| k * l))
                    .collect()
            })
            .collect();
        Self::from_kraus_labeled(self.labels.clone(), kraus, Picture::Schroedinger)
    }

    /// New instrument with `ch` applied to every branch output:
    /// branches `Lambda . I^x`.
    pub fn then_channel(&self, ch: &Channel) -> Result<Self> {
        if ch.dim() != self.povm_dim {
            return Err(Error::DimMismatch("channel dim mismatch".into()));
        }
        let cks = ch.kraus_list();
        let kraus = self
            .kraus_lists()
            .iter()
            .map(|ks| {
                ks.iter()
                    .flat_map(|k| cks.iter().map(move |l| l * k))
                    .collect()
            })
            .collect();
        Self::from_kraus_labeled(self.labels.clone(), kraus, Picture::Schroedinger)
    }

    /// Outcome-wise convex mixture `w a + (1-w) b`; both operands must have
    /// matching outcome structure.
    pub fn mix(a: &Self, b: &Self, weight_a: f64) -> Result<Self> {
        if a.n_outcomes() != b.n_outcomes() || a.povm_dim != b.povm_dim {
            return Err(Error::DimMismatch("instrument mixture shape mismatch".into()));
        }
        let choi = a
            .choi
            .iter()
            .zip(&b.choi)
            .map(|(wa, wb)| {
                HermMatrix::linear_combination(&[(weight_a, wa), (1.0 - weight_a, wb)])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_choi_labeled(a.labels.clone(), choi)
    }
}

/// Canonical instrument `rho -> sqrt(E_x) rho sqrt(E_x)`.
pub fn lueders_instrument(p: &Povm) -> Instrument {
    let kraus = p
        .elements()
        .iter()
        .map(|e| vec![e.sqrt_psd().into_matrix()])
        .collect();
    Instrument::from_kraus_labeled(p.labels().to_vec(), kraus, Picture::Schroedinger)
        .expect("Lueders family is complete")
}

/// Sequential measurement POVM `{(I^x)*(B_y)}_{x,y}` with product labels.
pub fn sequential_povm(i: &Instrument, tail: &Povm) -> Result<Povm> {
    if i.dim() != tail.dim() {
        return Err(Error::DimMismatch("sequential dims differ".into()));
    }
    let mut labels = Vec::new();
    let mut elements = Vec::new();
    for (x, lx) in i.labels().iter().enumerate() {
        for (y, ly) in tail.labels().iter().enumerate() {
            labels.push(format!("{lx},{ly}"));
            elements.push(i.adjoint_apply_idx(x, tail.element(y)));
        }
    }
    Povm::new(labels, elements)
}

#[derive(Serialize, Deserialize)]
struct InstrumentJson {
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    picture: Option<Picture>,
    #[serde(default)]
    kraus: Option<Vec<Vec<crate::qmat::CMatJson>>>,
    #[serde(default)]
    choi: Option<Vec<HermMatrix>>,
}

impl TryFrom<InstrumentJson> for Instrument {
    type Error = Error;
    fn try_from(j: InstrumentJson) -> Result<Self> {
        let build = |labels: Option<Vec<String>>, n: usize| {
            labels.unwrap_or_else(|| (1..=n).map(|i| i.to_string()).collect())
        };
        match (j.kraus, j.choi) {
            (Some(kraus), None) => {
                let picture = j.picture.unwrap_or(Picture::Schroedinger);
                let mats = kraus
                    .iter()
                    .map(|ks| ks.iter().map(|m| m.decode()).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                let labels = build(j.labels, mats.len());
                Instrument::from_kraus_labeled(labels, mats, picture)
            }
            (None, Some(choi)) => {
                let labels = build(j.labels, choi.len());
                Instrument::from_choi_labeled(labels, choi)
            }
            _ => Err(Error::InvalidInput(
                "instrument needs exactly one of kraus/choi".into(),
            )),
        }
    }
}

impl From<Instrument> for InstrumentJson {
    fn from(i: Instrument) -> Self {
        let kraus = i.kraus.as_ref().map(|lists| {
            lists
                .iter()
                .map(|ks| ks.iter().map(crate::qmat::CMatJson::encode).collect())
                .collect()
        });
        let choi = if kraus.is_some() { None } else { Some(i.choi) };
        InstrumentJson {
            labels: Some(i.labels.clone()),
            picture: kraus.as_ref().map(|_| Picture::Schroedinger),
            kraus,
            choi,
        }
    }
}

/// Trace-preserving completely positive map, stored as a Choi matrix in the
/// same convention as instrument branches.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ChannelJson", into = "ChannelJson")]
pub struct Channel {
    choi: HermMatrix,
    dim: usize,
}

impl Channel {
    pub fn new(choi: HermMatrix) -> Result<Self> {
        let d2 = choi.dim();
        let dim = (d2 as f64).sqrt().round() as usize;
        if dim * dim != d2 {
            return Err(Error::DimMismatch("channel Choi dim must be d^2".into()));
        }
        if !choi.is_psd() {
            return Err(Error::InvalidInput(format!(
                "channel not CP: Choi min eigenvalue {:.3e}",
                choi.min_eigenvalue()
            )));
        }
        let marginal = choi.partial_trace_2(dim, dim)?;
        let defect = marginal.sub(&HermMatrix::identity(dim))?.op_norm();
        if defect > tol::COMPLETENESS {
            return Err(Error::InvalidInput(format!(
                "channel not trace preserving: defect {defect:.3e}"
            )));
        }
        Ok(Self { choi, dim })
    }

    pub fn from_kraus(kraus: Vec<CMat>) -> Result<Self> {
        let dim = kraus
            .first()
            .ok_or_else(|| Error::InvalidInput("empty Kraus list".into()))?
            .nrows();
        Self::new(choi_from_schroedinger_kraus(dim, &kraus)?)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_kraus(vec![CMat::identity(dim, dim)]).expect("identity channel")
    }

    pub fn unitary(u: CMat) -> Result<Self> {
        let d = u.nrows();
        let defect = (u.adjoint() * &u - CMat::identity(d, d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if defect > tol::COMPLETENESS {
            return Err(Error::InvalidInput(format!(
                "not unitary: U'U defect {defect:.3e}"
            )));
        }
        Self::from_kraus(vec![u])
    }

    /// `rho -> tr(rho) 1/d`.
    pub fn completely_depolarizing(dim: usize) -> Self {
        let s = 1.0 / (dim as f64).sqrt();
        let kraus = (0..dim)
            .flat_map(|i| {
                (0..dim).map(move |j| {
                    let mut k = CMat::zeros(dim, dim);
                    k[(i, j)] = c(s, 0.0);
                    k
                })
            })
            .collect();
        Self::from_kraus(kraus).expect("depolarizing channel")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn choi(&self) -> &HermMatrix {
        &self.choi
    }

    pub fn kraus_list(&self) -> Vec<CMat> {
        kraus_from_choi(self.dim, &self.choi)
    }

    /// Heisenberg (adjoint, unital) action.
    pub fn adjoint_apply(&self, x: &HermMatrix) -> HermMatrix {
        assert_eq!(x.dim(), self.dim, "operand dim mismatch");
        contract_adjoint(&self.choi, x)
    }

    /// Schroedinger action.
    pub fn apply(&self, rho: &HermMatrix) -> HermMatrix {
        assert_eq!(rho.dim(), self.dim, "operand dim mismatch");
        contract_apply(&self.choi, rho)
    }

    /// Composition `other after self`: the returned channel applies `self`
    /// first, then `next`.
    pub fn then(&self, next: &Channel) -> Result<Channel> {
        if self.dim != next.dim {
            return Err(Error::DimMismatch("channel composition dims differ".into()));
        }
        let ka = self.kraus_list();
        let kb = next.kraus_list();
        let kraus = kb.iter().flat_map(|b| ka.iter().map(move |a| b * a)).collect();
        Self::from_kraus(kraus)
    }

    /// Returns the unitary when this channel is a unitary conjugation.
    pub fn as_unitary(&self) -> Option<CMat> {
        let ks = self.kraus_list();
        if ks.len() != 1 {
            return None;
        }
        let u = &ks[0];
        let defect = (u.adjoint() * u - CMat::identity(self.dim, self.dim))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        (defect < 1e-8).then(|| u.clone())
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelJson {
    #[serde(default)]
    kraus: Option<Vec<crate::qmat::CMatJson>>,
    #[serde(default)]
    choi: Option<HermMatrix>,
    #[serde(default)]
    unitary: Option<crate::qmat::CMatJson>,
}

impl TryFrom<ChannelJson> for Channel {
    type Error = Error;
    fn try_from(j: ChannelJson) -> Result<Self> {
        match (j.kraus, j.choi, j.unitary) {
            (Some(ks), None, None) => {
                Channel::from_kraus(ks.iter().map(|m| m.decode()).collect::<Result<Vec<_>>>()?)
            }
            (None, Some(choi), None) => Channel::new(choi),
            (None, None, Some(u)) => Channel::unitary(u.decode()?),
            _ => Err(Error::InvalidInput(
                "channel needs exactly one of kraus/choi/unitary".into(),
            )),
        }
    }
}

impl From<Channel> for ChannelJson {
    fn from(ch: Channel) -> Self {
        ChannelJson {
            kraus: None,
            choi: Some(ch.choi),
            unitary: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{max_entry_diff, pauli_x, pauli_z};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn pvm_z() -> Povm {
        Povm::computational(2)
    }

    fn pvm_x() -> Povm {
        Povm::projective_from_eigenbasis(&pauli_x())
    }

    #[test]
    fn validate_reports_defects() {
        let ok = validate_elements(&[
            HermMatrix::scaled_identity(2, 0.5),
            HermMatrix::scaled_identity(2, 0.5),
        ])
        .unwrap();
        assert!(ok.ok, "coin flip POVM valid");

        let bad = validate_elements(&[HermMatrix::identity(2), HermMatrix::identity(2)]).unwrap();
        assert!(!bad.ok && bad.psd_ok, "{{1,1}} fails only completeness");
        assert!(
            (bad.completeness_defect - 1.0).abs() < 1e-12,
            "defect is ||2*1 - 1|| = 1, got {}",
            bad.completeness_defect
        );

        let neg = validate_elements(&[
            HermMatrix::from_diag(&[1.5, 1.0]),
            HermMatrix::from_diag(&[-0.5, 0.0]),
        ])
        .unwrap();
        assert!(!neg.psd_ok && neg.complete_ok, "negative element flagged");
        assert!(neg.element_min_eigs[1] < -0.4, "min eig reported");
    }

    #[test]
    fn lueders_of_projective_uses_projectors() {
        let i = lueders_instrument(&pvm_z());
        let ks = i.kraus_lists();
        assert_eq!(ks[0].len(), 1, "one Kraus per outcome");
        assert!(
            (ks[0][0][(0, 0)].re - 1.0).abs() < 1e-12 && ks[0][0][(1, 1)].norm() < 1e-12,
            "sqrt of projector is the projector"
        );
        let induced = i.induced_povm();
        assert!(max_entry_diff(induced.element(0), pvm_z().element(0)) < 1e-12);
    }

    #[test]
    fn coin_flip_lueders_total_channel_is_identity() {
        let i = lueders_instrument(&Povm::trivial(2, 2));
        let total = i.total_channel();
        let x = crate::random::herm(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1), 2);
        assert!(
            max_entry_diff(&total.apply(&x), &x) < 1e-12,
            "coin flip Lueders acts as identity"
        );
    }

    #[test]
    fn adjoint_of_identity_recovers_povm() {
        let p = pvm_x();
        let i = lueders_instrument(&p);
        for (x, label) in p.labels().iter().enumerate() {
            let got = i.adjoint_apply(label, &HermMatrix::identity(2)).unwrap();
            assert!(
                max_entry_diff(&got, p.element(x)) < 1e-12,
                "(I^x)*(1) = E_x for outcome {label}"
            );
        }
        let total: HermMatrix = i
            .adjoint_apply_idx(0, &HermMatrix::identity(2))
            .add(&i.adjoint_apply_idx(1, &HermMatrix::identity(2)))
            .unwrap();
        assert!(
            max_entry_diff(&total, &HermMatrix::identity(2)) < 1e-12,
            "TP gives unital adjoint"
        );
    }

    #[test]
    fn heisenberg_picture_takes_adjoints() {
        let k1 = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let k2 = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let i = Instrument::from_kraus(vec![vec![k1], vec![k2]], Picture::Heisenberg).unwrap();
        let x = HermMatrix::from_diag(&[2.0, 3.0]);
        let got = i.adjoint_apply_idx(0, &x);
        assert!(
            max_entry_diff(&got, &HermMatrix::from_diag(&[3.0, 0.0])) < 1e-12,
            "branch 1 acts as K X K' with K = |0><1|"
        );
        let induced = i.induced_povm();
        assert!(
            max_entry_diff(induced.element(0), &HermMatrix::from_diag(&[1.0, 0.0])) < 1e-12,
            "induced element is K K'"
        );

        let half = CMat::identity(2, 2).scale(0.5);
        assert!(
            Instrument::from_kraus(vec![vec![half]], Picture::Schroedinger).is_err(),
            "incomplete Kraus rejected"
        );
    }

    #[test]
    fn total_channel_of_projective_lueders_is_pinching() {
        let i = lueders_instrument(&pvm_z());
        let total = i.total_channel();
        let x = crate::random::herm(&mut rand_chacha::ChaCha8Rng::seed_from_u64(2), 2);
        let pinched = total.apply(&x);
        assert!(
            pinched.entry(0, 1).norm() < 1e-12,
            "off-diagonal killed by pinching"
        );
        assert!(
            (pinched.entry(0, 0) - x.entry(0, 0)).norm() < 1e-12,
            "diagonal preserved"
        );
    }

    #[test]
    fn sequential_povm_of_z_then_x() {
        let p = sequential_povm(&lueders_instrument(&pvm_z()), &pvm_x()).unwrap();
        assert_eq!(p.n_outcomes(), 4, "product outcomes");
        for e in p.elements() {
            let ev = e.eigenvalues();
            assert!(ev[0].abs() < 1e-12 && (ev[1] - 0.5).abs() < 1e-12, "rank-1, weight 1/2");
        }
        assert_eq!(p.labels()[1], "1,2", "product labels");
    }

    #[test]
    fn identity_instrument_then_povm_relabels() {
        let id = Instrument::from_kraus(vec![vec![CMat::identity(2, 2)]], Picture::Schroedinger)
            .unwrap();
        let p = sequential_povm(&id, &pvm_x()).unwrap();
        assert_eq!(p.n_outcomes(), 2);
        for (a, b) in p.elements().iter().zip(pvm_x().elements()) {
            assert!(max_entry_diff(a, b) < 1e-12, "elements unchanged");
        }
    }

    #[test]
    fn pinching_fixes_exactly_commuting_operators() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for dim in [2usize, 3] {
            let p = crate::random::pvm(&mut rng, dim);
            let total = lueders_instrument(&p).total_channel();
            let x = crate::random::herm(&mut rng, dim);
            let fixed = max_entry_diff(&total.adjoint_apply(&x), &x) < 1e-9;
            let commutes = p
                .elements()
                .iter()
                .all(|e| crate::qmat::commutator_norm(e, &x) < 1e-9);
            assert_eq!(fixed, commutes, "pinching fixes iff commuting (dim {dim})");
            let diag = {
                let coefs: Vec<(f64, &HermMatrix)> = p
                    .elements()
                    .iter()
                    .enumerate()
                    .map(|(k, e)| (k as f64 + 0.5, e))
                    .collect();
                HermMatrix::linear_combination(&coefs).unwrap()
            };
            assert!(
                max_entry_diff(&total.adjoint_apply(&diag), &diag) < 1e-9,
                "operators diagonal in the PVM basis are fixed"
            );
        }
    }

    #[test]
    fn channel_constructors_validate() {
        assert!(Channel::unitary(CMat::identity(2, 2).scale(2.0)).is_err(), "non-unitary rejected");
        let dep = Channel::completely_depolarizing(3);
        let x = crate::random::herm(&mut rand_chacha::ChaCha8Rng::seed_from_u64(4), 3);
        let out = dep.apply(&x);
        assert!(
            max_entry_diff(&out, &HermMatrix::scaled_identity(3, x.trace() / 3.0)) < 1e-12,
            "depolarizing output is tr(x) 1/d"
        );
        let id = Channel::identity(3);
        assert!(id.as_unitary().is_some(), "identity detected as unitary");
        assert!(dep.as_unitary().is_none(), "depolarizing is not unitary");
    }

    #[test]
    fn channel_composition_multiplies_kraus() {
        let h = CMat::from_row_slice(2, 2, &[
            c(1.0, 0.0),
            c(1.0, 0.0),
            c(1.0, 0.0),
            c(-1.0, 0.0),
        ])
        .scale(0.5_f64.sqrt());
        let had = Channel::unitary(h).unwrap();
        let twice = had.then(&had).unwrap();
        let x = crate::random::herm(&mut rand_chacha::ChaCha8Rng::seed_from_u64(5), 2);
        assert!(
            max_entry_diff(&twice.apply(&x), &x) < 1e-10,
            "Hadamard twice is identity"
        );
        let z_to_x = had.adjoint_apply(&pauli_z());
        assert!(max_entry_diff(&z_to_x, &pauli_x()) < 1e-12, "H maps z to x in adjoint");
    }

    #[test]
    fn instrument_channel_composition_orders() {
        let p = pvm_z();
        let i = lueders_instrument(&p);
        let h = Channel::unitary(
            CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)])
                .scale(0.5_f64.sqrt()),
        )
        .unwrap();
        let after = i.after_channel(&h).unwrap();
        let got = after.induced_povm();
        let want = pvm_x();
        assert!(
            max_entry_diff(got.element(0), want.element(0)) < 1e-12
                || max_entry_diff(got.element(0), want.element(1)) < 1e-12,
            "measuring z after H measures x"
        );

        let then = i.then_channel(&h).unwrap();
        assert!(
            max_entry_diff(then.induced_povm().element(0), p.element(0)) < 1e-12,
            "post-channel leaves statistics alone"
        );
    }

    #[test]
    fn instrument_json_round_trip() {
        let i = lueders_instrument(&pvm_x());
        let text = serde_json::to_string(&i).unwrap();
        let back: Instrument = serde_json::from_str(&text).unwrap();
        for x in 0..2 {
            assert!(
                max_entry_diff(i.choi(x), back.choi(x)) < 1e-12,
                "Choi preserved through JSON"
            );
        }
        let heis = r#"{"picture":"heisenberg","kraus":[[{"dim":2,"re":[[0,1],[0,0]]}],[{"dim":2,"re":[[0,0],[1,0]]}]]}"#;
        let parsed: Instrument = serde_json::from_str(heis).unwrap();
        assert_eq!(parsed.n_outcomes(), 2, "Heisenberg JSON instrument parses");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn choi_round_trip_matches_direct_kraus_action(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dim = 3;
            let p = crate::random::povm(&mut rng, dim, 2);
            let i = crate::random::instrument(&mut rng, &p);
            let x = crate::random::herm(&mut rng, dim);
            for out in 0..i.n_outcomes() {
                let via_choi = i.adjoint_apply_idx(out, &x);
                let mut direct = CMat::zeros(dim, dim);
                for k in &i.kraus_lists()[out] {
                    direct += k.adjoint() * x.matrix() * k;
                }
                let direct = HermMatrix::new(direct).unwrap();
                prop_assert!(
                    max_entry_diff(&via_choi, &direct) < 1e-10,
                    "adjoint action agrees with sum K' X K"
                );

                let rho = crate::random::herm(&mut rng, dim);
                let via_choi = i.apply_idx(out, &rho);
                let mut direct = CMat::zeros(dim, dim);
                for k in &i.kraus_lists()[out] {
                    direct += k * rho.matrix() * k.adjoint();
                }
                let direct = HermMatrix::new(direct).unwrap();
                prop_assert!(
                    max_entry_diff(&via_choi, &direct) < 1e-10,
                    "branch action agrees with sum K rho K'"
                );
            }
        }

        #[test]
        fn induced_povm_and_total_channel_always_valid(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = crate::random::povm(&mut rng, 2, 3);
            let i = crate::random::instrument(&mut rng, &p);
            let induced = i.induced_povm();
            prop_assert!(validate_elements(induced.elements()).unwrap().ok);
            for (a, b) in induced.elements().iter().zip(p.elements()) {
                prop_assert!(max_entry_diff(a, b) < 1e-9, "instrument implements its POVM");
            }
            let _total = i.total_channel();

            let seq = sequential_povm(&i, &crate::random::povm(&mut rng, 2, 2)).unwrap();
            prop_assert!(validate_elements(seq.elements()).unwrap().ok, "sequential closure");
        }

        #[test]
        fn kraus_recovered_from_choi_reproduce_branch(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = crate::random::povm(&mut rng, 2, 2);
            let i = crate::random::instrument(&mut rng, &p);
            let stripped = Instrument::from_choi(i.choi_list().to_vec()).unwrap();
            let x = crate::random::herm(&mut rng, 2);
            for out in 0..2 {
                let want = i.adjoint_apply_idx(out, &x);
                let mut got = CMat::zeros(2, 2);
                for k in &stripped.kraus_lists()[out] {
                    got += k.adjoint() * x.matrix() * k;
                }
                prop_assert!(
                    max_entry_diff(&HermMatrix::new(got).unwrap(), &want) < 1e-9,
                    "Kraus factorization of Choi acts identically"
                );
            }
        }
    }
}
