//! POVMs and sesquilinear-form valued measures on finite-dimensional model
//! spaces, bounded operator integrals, and minimal Naimark dilations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, c, fro_norm, hermitian_eigen, hermiticity_defect, hermitize, psd_rank,
};
use crate::measure::{Atom, AtomicMeasure};
use crate::{C64, CMatrix, CVector};

/// Positivity tolerance on the smallest eigenvalue of an effect. Effects
/// failing it are rejected, not clipped.
pub const TOL_PSD: f64 = 1e-10;

/// Hermiticity tolerance for effect matrices.
pub const TOL_HERM: f64 = 1e-12;

/// Finite-dimensional truncation of a Hilbert space, or of the dense domain
/// spanned by a fixed orthonormal basis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpace {
    pub dimension: usize,
    pub basis_labels: Vec<String>,
    /// Set when the space models a truncation of the linear span of an
    /// orthonormal sequence rather than the whole space.
    pub is_domain_truncation: bool,
}

impl ModelSpace {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            basis_labels: (0..dimension).map(|i| format!("e{i}")).collect(),
            is_domain_truncation: false,
        }
    }

    /// Truncation of the span of a basis indexed from 1.
    pub fn domain_truncation(dimension: usize) -> Self {
        Self {
            dimension,
            basis_labels: (1..=dimension).map(|i| format!("phi{i}")).collect(),
            is_domain_truncation: true,
        }
    }

    pub fn basis_vector(&self, i: usize) -> CVector {
        let mut v = CVector::zeros(self.dimension);
        v[i] = c(1.0, 0.0);
        v
    }

    pub fn check_vector(&self, v: &CVector) -> Result<()> {
        if v.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// A positive operator on the model space.
#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    matrix: CMatrix,
}

impl Effect {
    /// Validates Hermiticity and positivity; rejects rather than clips.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if hermiticity_defect(&matrix) > TOL_HERM {
            return Err(Error::DecompositionFailure(
                "effect matrix is not Hermitian".into(),
            ));
        }
        let min = linalg::min_eigenvalue(&matrix)?;
        if min < -TOL_PSD {
            return Err(Error::DecompositionFailure(format!(
                "effect has negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// A labeled outcome with a real location, so moment functions of the outcome
/// variable are well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub label: String,
    pub location: f64,
}

/// A POVM with finitely many outcomes on a model space.
#[derive(Debug, Clone)]
pub struct DiscretePovm {
    pub space: ModelSpace,
    pub outcomes: Vec<Outcome>,
    effects: Vec<Effect>,
}

/// Report-only validation summary for a POVM.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PovmValidation {
    /// Minimum eigenvalue over all effects.
    pub positivity_margin: f64,
    /// `|sum E_i - I|` (Frobenius).
    pub normalization_defect: f64,
    /// `max_i |E_i^2 - E_i|` (Frobenius).
    pub projection_defect: f64,
    /// `max_{i != j} |E_i E_j|` (Frobenius).
    pub orthogonality_defect: f64,
}

impl DiscretePovm {
    pub fn new(space: ModelSpace, outcomes: Vec<Outcome>, effects: Vec<Effect>) -> Result<Self> {
        if outcomes.len() != effects.len() {
            return Err(Error::DimensionMismatch {
                expected: outcomes.len(),
                got: effects.len(),
            });
        }
        for e in &effects {
            if e.dim() != space.dimension {
                return Err(Error::DimensionMismatch {
                    expected: space.dimension,
                    got: e.dim(),
                });
            }
        }
        Ok(Self {
            space,
            outcomes,
            effects,
        })
    }

    /// Convenience constructor with outcome locations `0, 1, ...`.
    pub fn from_effects(effects: Vec<Effect>) -> Result<Self> {
        let dim = effects.first().map(|e| e.dim()).unwrap_or(0);
        let outcomes = (0..effects.len())
            .map(|i| Outcome {
                label: format!("w{i}"),
                location: i as f64,
            })
            .collect();
        Self::new(ModelSpace::new(dim), outcomes, effects)
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn effect(&self, i: usize) -> &CMatrix {
        self.effects[i].matrix()
    }

    pub fn dim(&self) -> usize {
        self.space.dimension
    }

    pub fn locations(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.location).collect()
    }

    /// Positivity margin, normalization defect, and projection defects.
    pub fn validate(&self) -> Result<PovmValidation> {
        let d = self.dim();
        let mut margin = f64::INFINITY;
        let mut sum = CMatrix::zeros(d, d);
        let mut proj = 0.0f64;
        for e in &self.effects {
            margin = margin.min(linalg::min_eigenvalue(e.matrix())?);
            sum += e.matrix();
            proj = proj.max(fro_norm(&(e.matrix() * e.matrix() - e.matrix())));
        }
        let mut ortho = 0.0f64;
        for i in 0..self.effects.len() {
            for j in 0..self.effects.len() {
                if i != j {
                    ortho = ortho.max(fro_norm(&(self.effect(i) * self.effect(j))));
                }
            }
        }
        Ok(PovmValidation {
            positivity_margin: if margin.is_finite() { margin } else { 0.0 },
            normalization_defect: fro_norm(&(sum - CMatrix::identity(d, d))),
            projection_defect: proj,
            orthogonality_defect: ortho,
        })
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.validate()
            .map(|v| v.normalization_defect <= tol)
            .unwrap_or(false)
    }

    pub fn is_projection_valued(&self, tol: f64) -> bool {
        self.validate()
            .map(|v| v.projection_defect <= tol && v.orthogonality_defect <= tol)
            .unwrap_or(false)
    }

    /// The complex measure `X -> <psi | E(X) phi>` on the outcome atoms.
    pub fn scalar_measure(&self, psi: &CVector, phi: &CVector) -> Result<AtomicMeasure> {
        self.space.check_vector(psi)?;
        self.space.check_vector(phi)?;
        let atoms = self
            .effects
            .iter()
            .zip(&self.outcomes)
            .map(|(e, o)| Atom::new(o.location, psi.dotc(&(e.matrix() * phi))))
            .collect();
        Ok(AtomicMeasure::finite(atoms))
    }

    /// The vector measure `X -> E(X) phi` on the outcome atoms.
    pub fn vector_measure(&self, phi: &CVector) -> Result<Vec<CVector>> {
        self.space.check_vector(phi)?;
        Ok(self.effects.iter().map(|e| e.matrix() * phi).collect())
    }

    /// Bounded operator integral `sum_i f(w_i) E_i`.
    pub fn bounded_integral<F>(&self, f: F) -> Result<CMatrix>
    where
        F: Fn(f64) -> C64,
    {
        let d = self.dim();
        let mut acc = CMatrix::zeros(d, d);
        for (e, o) in self.effects.iter().zip(&self.outcomes) {
            let v = f(o.location);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::NonEvaluable {
                    location: o.location,
                    reason: "non-finite value".into(),
                });
            }
            acc += e.matrix().map(|z| z * v);
        }
        Ok(acc)
    }
}

/// `E(X) = mu(X) I` on a model space: the smallest interesting POVM, whose
/// base measure may have infinitely many atoms.
#[derive(Debug, Clone)]
pub struct TrivialPovm {
    pub space: ModelSpace,
    pub mu: AtomicMeasure,
}

impl TrivialPovm {
    pub fn new(dimension: usize, mu: AtomicMeasure) -> Self {
        Self {
            space: ModelSpace::new(dimension),
            mu,
        }
    }

    pub fn scalar_measure(&self, psi: &CVector, phi: &CVector) -> Result<AtomicMeasure> {
        self.space.check_vector(psi)?;
        self.space.check_vector(phi)?;
        Ok(AtomicMeasure::linear_combination(vec![(
            psi.dotc(phi),
            self.mu.clone(),
        )]))
    }
}

/// Representation of a positive sesquilinear-form valued measure on the
/// truncated domain spanned by the model basis.
#[derive(Debug, Clone)]
pub enum FormMeasureRepr {
    /// Finite atom list with one Hermitian weight matrix per atom;
    /// `entry(n, m)` reads the `(n, m)` matrix element across atoms.
    MatrixOfMeasures(Vec<(f64, CMatrix)>),
    /// Diagonal family: `entry(n, m) = delta_nm mu_n`, with `mu_n` positive
    /// and indexed from 1 alongside the basis.
    DiagonalSequence(Vec<AtomicMeasure>),
}

/// A positive sesquilinear-form valued measure over a domain truncation.
#[derive(Debug, Clone)]
pub struct FormMeasure {
    pub space: ModelSpace,
    pub repr: FormMeasureRepr,
}

impl FormMeasure {
    pub fn diagonal(mus: Vec<AtomicMeasure>) -> Self {
        let space = ModelSpace::domain_truncation(mus.len());
        Self {
            space,
            repr: FormMeasureRepr::DiagonalSequence(mus),
        }
    }

    /// Diagonal family of unit point masses at `location(n)`, `n = 1..=dim`,
    /// so that `int f d mu_n = f(location(n))`.
    pub fn diagonal_points<L>(dim: usize, location: L) -> Self
    where
        L: Fn(u64) -> f64,
    {
        Self::diagonal(
            (1..=dim as u64)
                .map(|n| AtomicMeasure::finite(vec![Atom::real(location(n), 1.0)]))
                .collect(),
        )
    }

    /// View of a discrete POVM as a matrix of measures over the model basis.
    pub fn from_povm(povm: &DiscretePovm) -> Self {
        let atoms = povm
            .outcomes
            .iter()
            .zip(0..povm.len())
            .map(|(o, i)| (o.location, povm.effect(i).clone()))
            .collect();
        Self {
            space: povm.space.clone(),
            repr: FormMeasureRepr::MatrixOfMeasures(atoms),
        }
    }

    pub fn dim(&self) -> usize {
        self.space.dimension
    }

    /// The complex measure `entry(n, m)` for basis indices (0-based).
    pub fn entry(&self, n: usize, m: usize) -> AtomicMeasure {
        match &self.repr {
            FormMeasureRepr::MatrixOfMeasures(atoms) => AtomicMeasure::finite(
                atoms
                    .iter()
                    .map(|(loc, w)| Atom::new(*loc, w[(n, m)]))
                    .collect(),
            ),
            FormMeasureRepr::DiagonalSequence(mus) => {
                if n == m {
                    mus[n].clone()
                } else {
                    AtomicMeasure::zero()
                }
            }
        }
    }

    /// Hermiticity defect of the representation: `max |entry(n,m) -
    /// conj(entry(m,n))|` over atoms of the finite representation.
    pub fn hermiticity_defect(&self) -> f64 {
        match &self.repr {
            FormMeasureRepr::MatrixOfMeasures(atoms) => atoms
                .iter()
                .map(|(_, w)| hermiticity_defect(w))
                .fold(0.0, f64::max),
            FormMeasureRepr::DiagonalSequence(_) => 0.0,
        }
    }

    /// `X -> sum_{n,m} conj(psi_n) phi_m entry(n,m)(X)`.
    pub fn scalar_measure(&self, psi: &CVector, phi: &CVector) -> Result<AtomicMeasure> {
        self.space.check_vector(psi)?;
        self.space.check_vector(phi)?;
        match &self.repr {
            FormMeasureRepr::MatrixOfMeasures(atoms) => {
                let atoms = atoms
                    .iter()
                    .map(|(loc, w)| Atom::new(*loc, psi.dotc(&(w * phi))))
                    .collect();
                Ok(AtomicMeasure::finite(atoms))
            }
            FormMeasureRepr::DiagonalSequence(mus) => {
                let parts = mus
                    .iter()
                    .enumerate()
                    .map(|(n, mu)| (psi[n].conj() * phi[n], mu.clone()))
                    .collect();
                Ok(AtomicMeasure::linear_combination(parts))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Orthogonally scattered vector measures
// ---------------------------------------------------------------------------

/// Diagnostics for a Hilbert-space valued measure given by its values on
/// disjoint atoms.
#[derive(Debug, Clone)]
pub struct OrthoScatterReport {
    /// `max_{i != j} |<mu(X_i), mu(X_j)>|`.
    pub max_off_diagonal: f64,
    /// The induced positive measure `lambda(X_i) = |mu(X_i)|^2`.
    pub lambda_weights: Vec<f64>,
    /// `| sum_i f_i mu(X_i) |^2` for the supplied simple function.
    pub parseval_lhs: f64,
    /// `sum_i |f_i|^2 lambda(X_i)`.
    pub parseval_rhs: f64,
}

impl OrthoScatterReport {
    pub fn parseval_defect(&self) -> f64 {
        (self.parseval_lhs - self.parseval_rhs).abs()
    }
}

/// Check orthogonal scattering of a vector measure on disjoint atoms, and
/// verify the induced Parseval identity for a simple function with the given
/// coefficients.
pub fn orthogonally_scattered_check(values: &[CVector], simple_f: &[C64]) -> OrthoScatterReport {
    let mut max_off = 0.0f64;
    for i in 0..values.len() {
        for j in 0..values.len() {
            if i != j {
                max_off = max_off.max(values[i].dotc(&values[j]).norm());
            }
        }
    }
    let lambda: Vec<f64> = values.iter().map(|v| v.norm_squared()).collect();
    let dim = values.first().map(|v| v.len()).unwrap_or(0);
    let mut combo = CVector::zeros(dim);
    let mut rhs = 0.0;
    for (i, v) in values.iter().enumerate() {
        let fi = simple_f.get(i).copied().unwrap_or_else(|| c(0.0, 0.0));
        combo += v.map(|z| z * fi);
        rhs += fi.norm_sqr() * lambda[i];
    }
    OrthoScatterReport {
        max_off_diagonal: max_off,
        lambda_weights: lambda,
        parseval_lhs: combo.norm_squared(),
        parseval_rhs: rhs,
    }
}

// ---------------------------------------------------------------------------
// Naimark dilation
// ---------------------------------------------------------------------------

/// A Naimark dilation `(K, F, V)` of a discrete POVM: a spectral measure `F`
/// on the dilation space and a map `V` with `E(X) = V* F(X) V`.
#[derive(Debug, Clone)]
pub struct NaimarkDilation {
    pub dilation_dim: usize,
    /// `dilation_dim x d` block-stacked map; an isometry when the POVM is
    /// normalized.
    pub isometry: CMatrix,
    /// Coordinate projections onto the per-outcome blocks.
    pub projections: Vec<CMatrix>,
    /// Row range of each outcome block inside the dilation space.
    pub blocks: Vec<std::ops::Range<usize>>,
    pub minimal: bool,
}

impl NaimarkDilation {
    /// Spectral integral `int f dF` in the dilation space: block-diagonal
    /// with `f(w_i)` on block `i`.
    pub fn spectral_integral<F>(&self, locations: &[f64], f: F) -> CMatrix
    where
        F: Fn(f64) -> C64,
    {
        let mut m = CMatrix::zeros(self.dilation_dim, self.dilation_dim);
        for (range, &w) in self.blocks.iter().zip(locations) {
            let v = f(w);
            for r in range.clone() {
                m[(r, r)] = v;
            }
        }
        m
    }

    /// Compress a dilation-space operator back to the model space.
    pub fn compress(&self, op: &CMatrix) -> CMatrix {
        self.isometry.adjoint() * op * &self.isometry
    }
}

/// Construct the minimal block dilation of a positive discrete POVM.
///
/// For each outcome the positive square root of the effect is compressed to
/// the rows spanning its range; stacking the blocks gives `V`, and `F`
/// becomes the family of coordinate projections onto the blocks.
pub fn naimark_dilate(povm: &DiscretePovm) -> Result<NaimarkDilation> {
    let d = povm.dim();
    let mut blocks_rows: Vec<CMatrix> = Vec::with_capacity(povm.len());
    let mut ranges = Vec::with_capacity(povm.len());
    let mut offset = 0usize;
    for i in 0..povm.len() {
        let (vals, vecs) = hermitian_eigen(povm.effect(i))?;
        if vals[0] < -TOL_PSD {
            return Err(Error::DecompositionFailure(format!(
                "effect {i} has negative eigenvalue {:.3e}",
                vals[0]
            )));
        }
        let rank = psd_rank(&vals);
        // Rows sqrt(lambda_j) u_j* for the positive eigenpairs; then
        // B_i* B_i = E_i with B_i of full row rank.
        let mut block = CMatrix::zeros(rank, d);
        let n = vals.len();
        for (row, j) in ((n - rank)..n).rev().enumerate() {
            let s = vals[j].max(0.0).sqrt();
            let u = vecs.column(j);
            for col in 0..d {
                block[(row, col)] = u[col].conj() * s;
            }
        }
        ranges.push(offset..offset + rank);
        offset += rank;
        blocks_rows.push(block);
    }
    let dilation_dim = offset;
    let mut isometry = CMatrix::zeros(dilation_dim, d);
    for (range, block) in ranges.iter().zip(&blocks_rows) {
        for (bi, r) in range.clone().enumerate() {
            for col in 0..d {
                isometry[(r, col)] = block[(bi, col)];
            }
        }
    }
    let projections = ranges
        .iter()
        .map(|range| {
            let mut p = CMatrix::zeros(dilation_dim, dilation_dim);
            for r in range.clone() {
                p[(r, r)] = c(1.0, 0.0);
            }
            p
        })
        .collect();
    Ok(NaimarkDilation {
        dilation_dim,
        isometry,
        projections,
        blocks: ranges,
        minimal: true,
    })
}

/// Defect `|int f dE - V* (int f dF) V|` for a bounded function.
pub fn dilation_integral_check<F>(
    povm: &DiscretePovm,
    dilation: &NaimarkDilation,
    f: F,
) -> Result<f64>
where
    F: Fn(f64) -> C64 + Copy,
{
    let direct = povm.bounded_integral(f)?;
    let lifted = dilation.compress(&dilation.spectral_integral(&povm.locations(), f));
    Ok(fro_norm(&(direct - lifted)))
}

// ---------------------------------------------------------------------------
// Seeded random families
// ---------------------------------------------------------------------------

/// Seeded random normalized POVM: effects `W A_i* A_i W` with Gaussian `A_i`
/// and `W = (sum A_i* A_i)^{-1/2}`, outcome locations `0..k`.
pub fn random_normalized_povm<R: rand::Rng>(
    rng: &mut R,
    dim: usize,
    k: usize,
) -> Result<DiscretePovm> {
    let raw: Vec<CMatrix> = (0..k)
        .map(|_| {
            let a = linalg::gaussian_matrix(rng, dim, dim);
            a.adjoint() * a
        })
        .collect();
    let total = raw.iter().fold(CMatrix::zeros(dim, dim), |acc, m| acc + m);
    let w = linalg::pd_inv_sqrt(&total)?;
    let effects = raw
        .into_iter()
        .map(|m| Effect::new(hermitize(&(&w * m * &w))))
        .collect::<Result<Vec<_>>>()?;
    DiscretePovm::from_effects(effects)
}

/// Seeded random PVM: the spectral measure of a Gaussian Hermitian matrix,
/// with outcome locations at the eigenvalues.
pub fn random_pvm<R: rand::Rng>(rng: &mut R, dim: usize) -> Result<DiscretePovm> {
    let h = linalg::gaussian_hermitian(rng, dim);
    let (vals, vecs) = hermitian_eigen(&h)?;
    let mut effects = Vec::with_capacity(dim);
    let mut outcomes = Vec::with_capacity(dim);
    for j in 0..dim {
        let u = vecs.column(j).clone_owned();
        let p = &u * u.adjoint();
        effects.push(Effect::new(hermitize(&p))?);
        outcomes.push(Outcome {
            label: format!("l{j}"),
            location: vals[j],
        });
    }
    DiscretePovm::new(ModelSpace::new(dim), outcomes, effects)
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct OutcomeJson {
    label: String,
    location: f64,
    /// Row-major `[re, im]` pairs.
    effect: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct PovmJson {
    dimension: usize,
    outcomes: Vec<OutcomeJson>,
}

fn matrix_to_pairs(m: &CMatrix) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for col in 0..m.ncols() {
            out.push([m[(r, col)].re, m[(r, col)].im]);
        }
    }
    out
}

fn matrix_from_pairs(rows: usize, cols: usize, pairs: &[[f64; 2]]) -> Result<CMatrix> {
    if pairs.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            got: pairs.len(),
        });
    }
    Ok(CMatrix::from_fn(rows, cols, |r, col| {
        let p = pairs[r * cols + col];
        c(p[0], p[1])
    }))
}

impl DiscretePovm {
    /// Interchange format: `{dimension, outcomes: [{label, location, effect}]}`
    /// with effects as row-major `[re, im]` pairs.
    pub fn to_json(&self) -> serde_json::Value {
        let doc = PovmJson {
            dimension: self.dim(),
            outcomes: self
                .outcomes
                .iter()
                .zip(0..self.len())
                .map(|(o, i)| OutcomeJson {
                    label: o.label.clone(),
                    location: o.location,
                    effect: matrix_to_pairs(self.effect(i)),
                })
                .collect(),
        };
        serde_json::to_value(&doc).expect("serializable")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: PovmJson = serde_json::from_value(value.clone())?;
        let d = doc.dimension;
        let mut outcomes = Vec::with_capacity(doc.outcomes.len());
        let mut effects = Vec::with_capacity(doc.outcomes.len());
        for o in doc.outcomes {
            outcomes.push(Outcome {
                label: o.label,
                location: o.location,
            });
            effects.push(Effect::new(matrix_from_pairs(d, d, &o.effect)?)?);
        }
        Self::new(ModelSpace::new(d), outcomes, effects)
    }
}

impl NaimarkDilation {
    /// Export in the same style as the POVM interchange format.
    pub fn to_json(&self, povm: &DiscretePovm) -> serde_json::Value {
        serde_json::json!({
            "dimension": povm.dim(),
            "dilation_dim": self.dilation_dim,
            "minimal": self.minimal,
            "isometry": matrix_to_pairs(&self.isometry),
            "outcomes": povm
                .outcomes
                .iter()
                .zip(&self.projections)
                .map(|(o, p)| {
                    serde_json::json!({
                        "label": o.label,
                        "location": o.location,
                        "projection": matrix_to_pairs(p),
                    })
                })
                .collect::<Vec<_>>(),
        })
    }
}
