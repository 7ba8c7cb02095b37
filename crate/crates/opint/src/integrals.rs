//! Unbounded operator integrals over a measure, in three variants ordered by
//! inclusion of their domains, together with three-valued domain certificates,
//! weak integrals determined by a separating subspace, form integrals, the
//! variance form, and the operator associated to a positive closed form.
//!
//! Domain questions about an infinite object seen through a truncation are
//! answered `Member`, `NonMember`, or `Inconclusive`; a truncated computation
//! is never allowed to decide a limit question silently.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, fro_norm};
use crate::measure::{integrate, AtomicMeasure, IntegrationVerdict, SeriesPolicy, Status};
use crate::povm::{DiscretePovm, FormMeasure, FormMeasureRepr, ModelSpace, TrivialPovm};
use crate::{C64, CMatrix, CVector};

/// Agreement tolerance between integral variants on shared domain vectors.
pub const TOL_AGREE: f64 = 1e-10;

/// A measure an operator integral can be taken against.
#[derive(Debug, Clone)]
pub enum OpMeasure {
    /// A POVM with finitely many located outcomes.
    Discrete(DiscretePovm),
    /// `E(X) = mu(X) I`, where `mu` may have infinitely many atoms.
    Trivial(TrivialPovm),
    /// A sesquilinear-form valued measure over a domain truncation.
    Form(FormMeasure),
}

impl From<DiscretePovm> for OpMeasure {
    fn from(p: DiscretePovm) -> Self {
        OpMeasure::Discrete(p)
    }
}

impl From<TrivialPovm> for OpMeasure {
    fn from(p: TrivialPovm) -> Self {
        OpMeasure::Trivial(p)
    }
}

impl From<FormMeasure> for OpMeasure {
    fn from(m: FormMeasure) -> Self {
        OpMeasure::Form(m)
    }
}

impl OpMeasure {
    pub fn space(&self) -> &ModelSpace {
        match self {
            OpMeasure::Discrete(p) => &p.space,
            OpMeasure::Trivial(t) => &t.space,
            OpMeasure::Form(f) => &f.space,
        }
    }

    pub fn dim(&self) -> usize {
        self.space().dimension
    }

    pub fn scalar_measure(&self, psi: &CVector, phi: &CVector) -> Result<AtomicMeasure> {
        match self {
            OpMeasure::Discrete(p) => p.scalar_measure(psi, phi),
            OpMeasure::Trivial(t) => t.scalar_measure(psi, phi),
            OpMeasure::Form(f) => f.scalar_measure(psi, phi),
        }
    }

    /// True when the represented object is a truncation of something
    /// infinite, so that quantified-over-the-whole-space questions cannot be
    /// settled by inspection of the representation alone.
    fn is_truncation(&self) -> bool {
        match self {
            OpMeasure::Discrete(_) => false,
            OpMeasure::Trivial(t) => !t.mu.is_finite(),
            OpMeasure::Form(f) => match &f.repr {
                FormMeasureRepr::DiagonalSequence(_) => false,
                FormMeasureRepr::MatrixOfMeasures(_) => f.space.is_domain_truncation,
            },
        }
    }

    fn basis_label(&self, i: usize) -> String {
        self.space()
            .basis_labels
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("v{i}"))
    }
}

// ---------------------------------------------------------------------------
// Domain certificates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DomainKind {
    /// `int |f|^2 dE_{phi,phi} < infinity`.
    SquareIntegrability,
    /// `int |f| d|E_{psi,phi}| < infinity` for every test vector `psi`.
    Strong,
    /// `int |f| dE_{phi,phi} < infinity`.
    FormDomain,
    /// Continuity of `psi -> int f dE_{psi,phi}` on the separating subspace.
    WeakSym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Member,
    NonMember,
    Inconclusive,
}

/// Verdict plus the numerical evidence (or closed-form rule) behind it.
#[derive(Debug, Clone)]
pub struct DomainCertificate {
    pub vector_id: String,
    pub kind: DomainKind,
    pub verdict: Verdict,
    pub evidence: Vec<IntegrationVerdict>,
    /// Identifier of the closed-form rule that decided, when one applied.
    pub rule: Option<&'static str>,
}

impl DomainCertificate {
    fn from_single(vector_id: String, kind: DomainKind, v: IntegrationVerdict) -> Self {
        let verdict = match v.status {
            Status::Converged => Verdict::Member,
            Status::Divergent => Verdict::NonMember,
            Status::Inconclusive => Verdict::Inconclusive,
        };
        Self {
            vector_id,
            kind,
            verdict,
            evidence: vec![v],
            rule: None,
        }
    }

    pub fn is_member(&self) -> bool {
        self.verdict == Verdict::Member
    }

    /// Certificate invariant: `Member` needs all evidence converged,
    /// `NonMember` needs a divergent witness (or a deciding rule).
    pub fn check_invariant(&self) -> bool {
        match self.verdict {
            Verdict::Member => self.evidence.iter().all(|e| e.status == Status::Converged),
            Verdict::NonMember => {
                self.rule.is_some() || self.evidence.iter().any(|e| e.status == Status::Divergent)
            }
            Verdict::Inconclusive => true,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "vector_id": self.vector_id,
            "kind": self.kind,
            "verdict": self.verdict,
            "rule": self.rule,
            "evidence": self.evidence.iter().map(|e| serde_json::json!({
                "value": [e.value.re, e.value.im],
                "status": e.status,
                "rows": e.evidence.len(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Membership in the square-integrability domain: `|f|^2` against
/// `E_{phi,phi}`. For projection-valued measures this is exactly the domain
/// of the spectral integral.
pub fn sq_domain_member<F>(
    f: F,
    e: &OpMeasure,
    phi: &CVector,
    policy: &SeriesPolicy,
    vector_id: &str,
) -> Result<DomainCertificate>
where
    F: Fn(f64) -> C64,
{
    let diag = e.scalar_measure(phi, phi)?.total_variation();
    let v = integrate(|x| c(f(x).norm_sqr(), 0.0), &diag, policy)?;
    Ok(DomainCertificate::from_single(
        vector_id.to_string(),
        DomainKind::SquareIntegrability,
        v,
    ))
}

/// Membership in the form domain: `|f|` against `E_{phi,phi}`.
pub fn form_domain_member<F>(
    f: F,
    e: &OpMeasure,
    phi: &CVector,
    policy: &SeriesPolicy,
    vector_id: &str,
) -> Result<DomainCertificate>
where
    F: Fn(f64) -> C64,
{
    let diag = e.scalar_measure(phi, phi)?.total_variation();
    let v = integrate(|x| c(f(x).norm(), 0.0), &diag, policy)?;
    Ok(DomainCertificate::from_single(
        vector_id.to_string(),
        DomainKind::FormDomain,
        v,
    ))
}

/// Membership in the strong domain, which quantifies over every test vector
/// of the full space.
///
/// Structured measures are decided by closed-form rules; a generic truncated
/// representation is probed against the basis plus random unit vectors and
/// left `Inconclusive` when the probes cannot decide (density of a test set
/// is not enough to certify the quantifier).
pub fn strong_domain_member<F>(
    f: F,
    e: &OpMeasure,
    phi: &CVector,
    policy: &SeriesPolicy,
    vector_id: &str,
) -> Result<DomainCertificate>
where
    F: Fn(f64) -> C64 + Copy,
{
    e.space().check_vector(phi)?;
    let id = vector_id.to_string();
    let absf = move |x: f64| c(f(x).norm(), 0.0);
    match e {
        // E = mu I: membership for phi != 0 is mu-integrability of f.
        OpMeasure::Trivial(t) => {
            let v = integrate(absf, &t.mu.total_variation(), policy)?;
            let zero = phi.norm() == 0.0;
            let verdict = match v.status {
                Status::Converged => Verdict::Member,
                Status::Divergent if zero => Verdict::Member,
                Status::Divergent => Verdict::NonMember,
                Status::Inconclusive => Verdict::Inconclusive,
            };
            Ok(DomainCertificate {
                vector_id: id,
                kind: DomainKind::Strong,
                verdict,
                evidence: vec![v],
                rule: Some("scalar-multiple-of-identity"),
            })
        }
        // Diagonal rows pair one basis direction at a time, so only the rows
        // carrying a nonzero coefficient of phi matter.
        OpMeasure::Form(fm) => match &fm.repr {
            FormMeasureRepr::DiagonalSequence(mus) => {
                let mut evidence = Vec::new();
                let mut verdict = Verdict::Member;
                for (n, mu) in mus.iter().enumerate() {
                    if phi[n].norm() == 0.0 {
                        continue;
                    }
                    let v = integrate(absf, &mu.total_variation(), policy)?;
                    match v.status {
                        Status::Converged => {}
                        Status::Divergent => verdict = Verdict::NonMember,
                        Status::Inconclusive => {
                            if verdict == Verdict::Member {
                                verdict = Verdict::Inconclusive;
                            }
                        }
                    }
                    evidence.push(v);
                }
                Ok(DomainCertificate {
                    vector_id: id,
                    kind: DomainKind::Strong,
                    verdict,
                    evidence,
                    rule: Some("diagonal-rows"),
                })
            }
            FormMeasureRepr::MatrixOfMeasures(_) => probe_strong(absf, e, phi, policy, id),
        },
        OpMeasure::Discrete(_) => probe_strong(absf, e, phi, policy, id),
    }
}

/// Basis-plus-random-probe path for the strong domain. A divergent probe is a
/// decisive witness against membership; converged probes certify membership
/// only when the representation is not a truncation.
fn probe_strong<G>(
    absf: G,
    e: &OpMeasure,
    phi: &CVector,
    policy: &SeriesPolicy,
    vector_id: String,
) -> Result<DomainCertificate>
where
    G: Fn(f64) -> C64 + Copy,
{
    use rand::SeedableRng;
    let d = e.dim();
    let mut probes: Vec<CVector> = (0..d).map(|i| e.space().basis_vector(i)).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..4 {
        probes.push(crate::linalg::gaussian_unit_vector(&mut rng, d));
    }
    let mut evidence = Vec::new();
    let mut any_divergent = false;
    let mut any_inconclusive = false;
    for psi in &probes {
        let m = e.scalar_measure(psi, phi)?.total_variation();
        let v = integrate(absf, &m, policy)?;
        match v.status {
            Status::Converged => {}
            Status::Divergent => any_divergent = true,
            Status::Inconclusive => any_inconclusive = true,
        }
        evidence.push(v);
    }
    let verdict = if any_divergent {
        Verdict::NonMember
    } else if any_inconclusive || e.is_truncation() {
        Verdict::Inconclusive
    } else {
        Verdict::Member
    };
    Ok(DomainCertificate {
        vector_id,
        kind: DomainKind::Strong,
        verdict,
        evidence,
        rule: None,
    })
}

// ---------------------------------------------------------------------------
// Operator integrals on the truncation basis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntegralKind {
    Tilde,
    Strong,
    WeakSym,
    MaxWeakSym,
    Form,
}

/// An operator integral restricted to the certified part of the truncation
/// basis: column `j` of `matrix` is the action on basis vector
/// `domain_basis[j]`, expressed in the model basis.
#[derive(Debug, Clone)]
pub struct OperatorIntegral {
    pub kind: IntegralKind,
    pub matrix: CMatrix,
    pub domain_basis: Vec<usize>,
    pub symmetric: bool,
    pub certificates: Vec<DomainCertificate>,
}

impl OperatorIntegral {
    /// Action on a vector supported on the certified basis directions.
    pub fn apply(&self, v: &CVector) -> Result<CVector> {
        let dim = self.matrix.nrows();
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        for i in 0..dim {
            if v[i].norm() > 0.0 && !self.domain_basis.contains(&i) {
                return Err(Error::DomainViolation(format!(
                    "vector has weight on uncertified basis direction {i}"
                )));
            }
        }
        let mut out = CVector::zeros(dim);
        for (j, &i) in self.domain_basis.iter().enumerate() {
            out += self.matrix.column(j).clone_owned().map(|z| z * v[i]);
        }
        Ok(out)
    }

    /// Square block over basis directions certified for both row and column.
    pub fn certified_block(&self) -> CMatrix {
        let k = self.domain_basis.len();
        CMatrix::from_fn(k, k, |r, col| self.matrix[(self.domain_basis[r], col)])
    }

    /// Max column distance to `other` over the shared certified directions.
    pub fn agreement_defect(&self, other: &OperatorIntegral) -> f64 {
        let mut worst = 0.0f64;
        for (j, &i) in self.domain_basis.iter().enumerate() {
            if let Some(oj) = other.domain_basis.iter().position(|&x| x == i) {
                let diff = self.matrix.column(j) - other.matrix.column(oj);
                worst = worst.max(diff.norm());
            }
        }
        worst
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "domain_basis": self.domain_basis,
            "symmetric": self.symmetric,
            "matrix": {
                "rows": self.matrix.nrows(),
                "cols": self.matrix.ncols(),
                "entries": self.matrix.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            },
            "certificates": self.certificates.iter().map(|c| c.to_json()).collect::<Vec<_>>(),
        })
    }
}

/// Pairing coefficients `int f dE_{e_n, phi_m}` for all `n` against one basis
/// index `m`, with the worst status across entries.
fn pairing_column<F>(
    f: F,
    e: &OpMeasure,
    m: usize,
    policy: &SeriesPolicy,
) -> Result<(CVector, Status)>
where
    F: Fn(f64) -> C64 + Copy,
{
    let d = e.dim();
    let phi_m = e.space().basis_vector(m);
    let mut col = CVector::zeros(d);
    let mut status = Status::Converged;
    for n in 0..d {
        let psi_n = e.space().basis_vector(n);
        let mu = e.scalar_measure(&psi_n, &phi_m)?;
        let v = integrate(f, &mu, policy)?;
        match v.status {
            Status::Converged => {}
            Status::Divergent => status = Status::Divergent,
            Status::Inconclusive => {
                if status == Status::Converged {
                    status = Status::Inconclusive;
                }
            }
        }
        col[n] = v.value;
    }
    Ok((col, status))
}

fn build_integral<F>(
    f: F,
    e: &OpMeasure,
    kind: IntegralKind,
    domain_basis: Vec<usize>,
    certificates: Vec<DomainCertificate>,
    policy: &SeriesPolicy,
) -> Result<OperatorIntegral>
where
    F: Fn(f64) -> C64 + Copy,
{
    let d = e.dim();
    let mut matrix = CMatrix::zeros(d, domain_basis.len());
    for (j, &m) in domain_basis.iter().enumerate() {
        let (col, status) = pairing_column(f, e, m, policy)?;
        if status != Status::Converged {
            return Err(Error::DomainViolation(format!(
                "pairing integrals for certified basis vector {m} did not converge"
            )));
        }
        matrix.set_column(j, &col);
    }
    // Symmetry on the certified block.
    let block = {
        let k = domain_basis.len();
        CMatrix::from_fn(k, k, |r, col| matrix[(domain_basis[r], col)])
    };
    let symmetric = fro_norm(&(&block - block.adjoint())) <= TOL_AGREE;
    Ok(OperatorIntegral {
        kind,
        matrix,
        domain_basis,
        symmetric,
        certificates,
    })
}

/// Basis indices whose square-integrability certificate is `Member`.
pub fn certified_sq_basis<F>(f: F, e: &OpMeasure, policy: &SeriesPolicy) -> Result<Vec<usize>>
where
    F: Fn(f64) -> C64 + Copy,
{
    let mut out = Vec::new();
    for i in 0..e.dim() {
        let cert = sq_domain_member(f, e, &e.space().basis_vector(i), policy, &e.basis_label(i))?;
        if cert.is_member() {
            out.push(i);
        }
    }
    Ok(out)
}

/// Basis indices whose form-domain certificate is `Member`.
pub fn certified_form_basis<F>(f: F, e: &OpMeasure, policy: &SeriesPolicy) -> Result<Vec<usize>>
where
    F: Fn(f64) -> C64 + Copy,
{
    let mut out = Vec::new();
    for i in 0..e.dim() {
        let cert =
            form_domain_member(f, e, &e.space().basis_vector(i), policy, &e.basis_label(i))?;
        if cert.is_member() {
            out.push(i);
        }
    }
    Ok(out)
}

/// Operator integral on the square-integrability domain. Every requested
/// basis vector must certify as a member; the action is the pairing matrix on
/// the certified columns.
pub fn tilde_integral<F>(
    f: F,
    e: &OpMeasure,
    basis: &[usize],
    policy: &SeriesPolicy,
) -> Result<OperatorIntegral>
where
    F: Fn(f64) -> C64 + Copy,
{
    let mut certs = Vec::new();
    for &i in basis {
        let cert = sq_domain_member(f, e, &e.space().basis_vector(i), policy, &e.basis_label(i))?;
        if !cert.is_member() {
            return Err(Error::DomainViolation(format!(
                "basis vector {i} is not certified square-integrable"
            )));
        }
        certs.push(cert);
    }
    build_integral(f, e, IntegralKind::Tilde, basis.to_vec(), certs, policy)
}

/// Operator integral on the strong domain: basis vectors certified via
/// [`strong_domain_member`].
pub fn strong_integral<F>(f: F, e: &OpMeasure, policy: &SeriesPolicy) -> Result<OperatorIntegral>
where
    F: Fn(f64) -> C64 + Copy,
{
    let mut certs = Vec::new();
    let mut basis = Vec::new();
    for i in 0..e.dim() {
        let cert =
            strong_domain_member(f, e, &e.space().basis_vector(i), policy, &e.basis_label(i))?;
        if cert.is_member() {
            basis.push(i);
        }
        certs.push(cert);
    }
    build_integral(f, e, IntegralKind::Strong, basis, certs, policy)
}

/// Symmetric weak operator integral determined by the separating subspace
/// spanned by the given basis indices.
///
/// Preconditions: the subspace is nonempty and its basis vectors lie in the
/// form domain, so every pair is integrable by polarization. The domain keeps
/// the basis vectors whose pairing column is fully converged (continuity on
/// the truncation); the action is `phi_m -> sum_n (int f dE_{phi_n, phi_m})
/// phi_n` over the subspace.
pub fn weak_sym_integral<F>(
    f: F,
    e: &OpMeasure,
    ds_basis: &[usize],
    policy: &SeriesPolicy,
) -> Result<OperatorIntegral>
where
    F: Fn(f64) -> C64 + Copy,
{
    if ds_basis.is_empty() {
        return Err(Error::SeparatingSubspaceTooSmall);
    }
    let mut certs = Vec::new();
    for &i in ds_basis {
        let cert =
            form_domain_member(f, e, &e.space().basis_vector(i), policy, &e.basis_label(i))?;
        if !cert.is_member() {
            return Err(Error::DomainViolation(format!(
                "separating-subspace basis vector {i} is outside the form domain"
            )));
        }
        certs.push(cert);
    }
    // Keep columns with fully converged pairings; an undecided column leaves
    // its vector out of the domain rather than guessing.
    let mut domain = Vec::new();
    for &m in ds_basis {
        let (_, status) = pairing_column(f, e, m, policy)?;
        if status == Status::Converged {
            domain.push(m);
        }
    }
    let kept: Vec<DomainCertificate> = certs
        .into_iter()
        .filter(|cert| domain.iter().any(|&m| e.basis_label(m) == cert.vector_id))
        .collect();
    build_integral(f, e, IntegralKind::WeakSym, domain, kept, policy)
}

/// The largest symmetric weak operator integral: the weak integral determined
/// by the certified form-domain basis.
pub fn max_weak_sym_integral<F>(
    f: F,
    e: &OpMeasure,
    policy: &SeriesPolicy,
) -> Result<OperatorIntegral>
where
    F: Fn(f64) -> C64 + Copy,
{
    let ds = certified_form_basis(f, e, policy)?;
    if ds.is_empty() {
        return Err(Error::SeparatingSubspaceTooSmall);
    }
    let mut op = weak_sym_integral(f, e, &ds, policy)?;
    op.kind = IntegralKind::MaxWeakSym;
    Ok(op)
}

/// Direct action of the integral on a vector, using the structure of the
/// measure. Used for variance forms and cross-checks.
pub fn apply_integral<F>(f: F, e: &OpMeasure, v: &CVector, policy: &SeriesPolicy) -> Result<CVector>
where
    F: Fn(f64) -> C64 + Copy,
{
    e.space().check_vector(v)?;
    match e {
        OpMeasure::Discrete(p) => Ok(p.bounded_integral(f)? * v),
        OpMeasure::Trivial(t) => {
            let s = integrate(f, &t.mu, policy)?;
            if s.status != Status::Converged {
                return Err(Error::DomainViolation(
                    "base-measure integral did not converge".into(),
                ));
            }
            Ok(v.map(|z| z * s.value))
        }
        OpMeasure::Form(fm) => match &fm.repr {
            FormMeasureRepr::DiagonalSequence(mus) => {
                let mut out = CVector::zeros(fm.dim());
                for (n, mu) in mus.iter().enumerate() {
                    if v[n].norm() == 0.0 {
                        continue;
                    }
                    let s = integrate(f, mu, policy)?;
                    if s.status != Status::Converged {
                        return Err(Error::DomainViolation(format!(
                            "diagonal-row integral {n} did not converge"
                        )));
                    }
                    out[n] = s.value * v[n];
                }
                Ok(out)
            }
            FormMeasureRepr::MatrixOfMeasures(atoms) => {
                let mut acc = CMatrix::zeros(fm.dim(), fm.dim());
                for (loc, w) in atoms {
                    acc += w.map(|z| z * f(*loc));
                }
                Ok(acc * v)
            }
        },
    }
}

// ---------------------------------------------------------------------------
// Form integrals and quadratic forms
// ---------------------------------------------------------------------------

/// The form integral `(psi, phi) -> int f dE_{psi,phi}` on the form domain.
/// Both vectors must certify as form-domain members.
pub fn form_integral<F>(
    f: F,
    e: &OpMeasure,
    psi: &CVector,
    phi: &CVector,
    policy: &SeriesPolicy,
) -> Result<C64>
where
    F: Fn(f64) -> C64 + Copy,
{
    for (v, name) in [(psi, "psi"), (phi, "phi")] {
        let cert = form_domain_member(f, e, v, policy, name)?;
        if !cert.is_member() {
            return Err(Error::DomainViolation(format!(
                "{name} is not certified in the form domain"
            )));
        }
    }
    let mu = e.scalar_measure(psi, phi)?;
    let v = integrate(f, &mu, policy)?;
    if v.status != Status::Converged {
        return Err(Error::DomainViolation(
            "form integral did not converge despite certificates".into(),
        ));
    }
    Ok(v.value)
}

/// A quadratic form held as its Gram matrix on a stated domain basis.
#[derive(Debug, Clone)]
pub struct QuadraticFormRecord {
    pub gram: CMatrix,
    pub domain_basis: Vec<usize>,
    pub symmetric: bool,
    pub positive: bool,
}

impl QuadraticFormRecord {
    pub fn new(gram: CMatrix, domain_basis: Vec<usize>) -> Self {
        let symmetric = fro_norm(&(&gram - gram.adjoint())) <= 1e-12;
        let positive = symmetric
            && crate::linalg::min_eigenvalue(&gram)
                .map(|m| m >= -1e-12)
                .unwrap_or(false);
        Self {
            gram,
            domain_basis,
            symmetric,
            positive,
        }
    }

    /// Gram matrix of the form integral of `f` over the certified form-domain
    /// basis.
    pub fn from_form_integral<F>(f: F, e: &OpMeasure, policy: &SeriesPolicy) -> Result<Self>
    where
        F: Fn(f64) -> C64 + Copy,
    {
        let basis = certified_form_basis(f, e, policy)?;
        let k = basis.len();
        let mut gram = CMatrix::zeros(k, k);
        for (r, &n) in basis.iter().enumerate() {
            for (s, &m) in basis.iter().enumerate() {
                let mu =
                    e.scalar_measure(&e.space().basis_vector(n), &e.space().basis_vector(m))?;
                let v = integrate(f, &mu, policy)?;
                if v.status != Status::Converged {
                    return Err(Error::DomainViolation(format!(
                        "form Gram entry ({n},{m}) did not converge"
                    )));
                }
                gram[(r, s)] = v.value;
            }
        }
        Ok(Self::new(gram, basis))
    }

    /// Evaluate on coefficient vectors over the domain basis.
    pub fn eval(&self, psi: &CVector, phi: &CVector) -> Result<C64> {
        if psi.len() != self.gram.nrows() || phi.len() != self.gram.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.gram.nrows(),
                got: psi.len().max(phi.len()),
            });
        }
        Ok(psi.dotc(&(&self.gram * phi)))
    }

    /// Adjoint form `q*(phi, psi) = conj(q(psi, phi))` on the same domain.
    pub fn adjoint(&self) -> Self {
        Self::new(self.gram.adjoint(), self.domain_basis.clone())
    }

    /// `(q + q*) / 2`.
    pub fn real_part(&self) -> Self {
        Self::new(
            (&self.gram + self.gram.adjoint()).map(|z| z * 0.5),
            self.domain_basis.clone(),
        )
    }

    /// `(q - q*) / (2i)`.
    pub fn imag_part(&self) -> Self {
        Self::new(
            (&self.gram - self.gram.adjoint()).map(|z| z * c(0.0, -0.5)),
            self.domain_basis.clone(),
        )
    }
}

/// Decomposition of a complex function into four pointwise-nonnegative parts
/// `f = p1 - p2 + i (p3 - p4)` with `p1 p2 = p3 p4 = 0`.
pub struct DecomposedFn<F> {
    f: F,
}

pub fn decompose_function<F>(f: F) -> DecomposedFn<F>
where
    F: Fn(f64) -> C64,
{
    DecomposedFn { f }
}

impl<F> DecomposedFn<F>
where
    F: Fn(f64) -> C64,
{
    /// Part `i` in `1..=4`.
    pub fn part(&self, i: usize, x: f64) -> f64 {
        let v = (self.f)(x);
        match i {
            1 => v.re.max(0.0),
            2 => (-v.re).max(0.0),
            3 => v.im.max(0.0),
            4 => (-v.im).max(0.0),
            _ => panic!("part index must be 1..=4"),
        }
    }

    pub fn reassemble(&self, x: f64) -> C64 {
        c(
            self.part(1, x) - self.part(2, x),
            self.part(3, x) - self.part(4, x),
        )
    }
}

/// The variance form `(psi, phi) -> int x^2 dE_{psi,phi} - <T psi | T phi>`
/// with `T` the first-moment integral on the square-integrability domain.
pub fn variance_form(
    e: &OpMeasure,
    psi: &CVector,
    phi: &CVector,
    policy: &SeriesPolicy,
) -> Result<C64> {
    let x = |t: f64| c(t, 0.0);
    let xx = |t: f64| c(t * t, 0.0);
    for (v, name) in [(psi, "psi"), (phi, "phi")] {
        let cert = sq_domain_member(x, e, v, policy, name)?;
        if !cert.is_member() {
            return Err(Error::DomainViolation(format!(
                "{name} is outside the square-integrability domain of the first moment"
            )));
        }
    }
    let second = integrate(xx, &e.scalar_measure(psi, phi)?, policy)?;
    if second.status != Status::Converged {
        return Err(Error::DomainViolation(
            "second-moment pairing did not converge".into(),
        ));
    }
    let tpsi = apply_integral(x, e, psi, policy)?;
    let tphi = apply_integral(x, e, phi, policy)?;
    Ok(second.value - tpsi.dotc(&tphi))
}

/// The positive operator associated to the form `q(psi, phi) = <A psi|A phi>`:
/// `T = A* A`, Hermitian and positive on the form-domain truncation.
pub fn kato_operator_from_form(a: &CMatrix) -> CMatrix {
    a.adjoint() * a
}

// ---------------------------------------------------------------------------
// Strong-versus-weak gap probe
// ---------------------------------------------------------------------------

/// One row of the tail table: sup over the test sample of
/// `int_{|x| >= threshold} |f| d|E_{psi,phi}|`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapProbeRow {
    pub threshold: f64,
    pub sup_estimate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapProbeReport {
    pub rows: Vec<GapProbeRow>,
    /// True when the tail sup-estimates vanish along the nested sets; a
    /// non-vanishing tail is evidence that the strong and weak integrals
    /// differ on this input.
    pub tail_vanishes: bool,
}

/// Estimate the uniform tail of `int_{X_n} |f| d|E_{psi,phi}|` over unit
/// vectors `psi` in the separating subspace, along the nested sets
/// `X_n = {|x| >= thresholds[n]}`.
pub fn strong_weak_gap_probe<F>(
    f: F,
    e: &OpMeasure,
    ds_basis: &[usize],
    phi: &CVector,
    thresholds: &[f64],
    policy: &SeriesPolicy,
) -> Result<GapProbeReport>
where
    F: Fn(f64) -> C64 + Copy,
{
    use rand::SeedableRng;
    if ds_basis.is_empty() {
        return Err(Error::SeparatingSubspaceTooSmall);
    }
    for w in thresholds.windows(2) {
        if w[1] < w[0] {
            return Err(Error::ConfigError(
                "gap-probe thresholds must be nondecreasing".into(),
            ));
        }
    }
    let d = e.dim();
    // Basis directions of the subspace plus random unit combinations.
    let mut sample: Vec<CVector> = ds_basis
        .iter()
        .map(|&i| e.space().basis_vector(i))
        .collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9ab5);
    for _ in 0..6 {
        let g = crate::linalg::gaussian_unit_vector(&mut rng, ds_basis.len());
        let mut v = CVector::zeros(d);
        for (j, &i) in ds_basis.iter().enumerate() {
            v[i] = g[j];
        }
        sample.push(v);
    }
    let mut rows = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut sup = 0.0f64;
        for psi in &sample {
            let mu = e.scalar_measure(psi, phi)?.total_variation();
            let v = integrate(
                |x| {
                    if x.abs() >= t {
                        c(f(x).norm(), 0.0)
                    } else {
                        c(0.0, 0.0)
                    }
                },
                &mu,
                policy,
            )?;
            // A divergent tail has no finite sup; the last partial already
            // dominates every finite row.
            sup = sup.max(v.value.norm());
        }
        rows.push(GapProbeRow {
            threshold: t,
            sup_estimate: sup,
        });
    }
    let first = rows.first().map(|r| r.sup_estimate).unwrap_or(0.0);
    let last = rows.last().map(|r| r.sup_estimate).unwrap_or(0.0);
    let tail_vanishes = last <= 1e-6 * (1.0 + first);
    Ok(GapProbeReport {
        rows,
        tail_vanishes,
    })
}

// ---------------------------------------------------------------------------
// Moment operators
// ---------------------------------------------------------------------------

/// The three moment-operator variants for `f(x) = x^k`.
#[derive(Debug, Clone)]
pub struct MomentTriple {
    pub k: u32,
    pub tilde: OperatorIntegral,
    pub strong: OperatorIntegral,
    pub max_weak: OperatorIntegral,
}

/// Chain diagnostics: domain inclusions and action agreement on shared
/// certified vectors.
#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub tilde_in_strong: bool,
    pub strong_in_weak: bool,
    pub max_action_defect: f64,
}

pub fn moment_operators(e: &OpMeasure, k: u32, policy: &SeriesPolicy) -> Result<MomentTriple> {
    let f = move |x: f64| c(x.powi(k as i32), 0.0);
    let sq_basis = certified_sq_basis(f, e, policy)?;
    let tilde = tilde_integral(f, e, &sq_basis, policy)?;
    let strong = strong_integral(f, e, policy)?;
    let max_weak = max_weak_sym_integral(f, e, policy)?;
    Ok(MomentTriple {
        k,
        tilde,
        strong,
        max_weak,
    })
}

impl MomentTriple {
    pub fn chain_report(&self) -> ChainReport {
        let tilde_in_strong = self
            .tilde
            .domain_basis
            .iter()
            .all(|i| self.strong.domain_basis.contains(i));
        let strong_in_weak = self
            .strong
            .domain_basis
            .iter()
            .all(|i| self.max_weak.domain_basis.contains(i));
        let d1 = self.tilde.agreement_defect(&self.strong);
        let d2 = self.tilde.agreement_defect(&self.max_weak);
        let d3 = self.strong.agreement_defect(&self.max_weak);
        ChainReport {
            tilde_in_strong,
            strong_in_weak,
            max_action_defect: d1.max(d2).max(d3),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_unit_vector, hermitize};
    use crate::measure::Atom;
    use crate::povm::{naimark_dilate, random_normalized_povm, random_pvm};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn xf(x: f64) -> C64 {
        c(x, 0.0)
    }

    /// mu with atoms at n, masses z/n^3: f(x)=x is integrable, |f|^2 is not.
    fn heavy_trivial(dim: usize) -> TrivialPovm {
        let z: f64 = (1..200_000).map(|n| 1.0 / (n as f64).powi(3)).sum();
        TrivialPovm::new(
            dim,
            AtomicMeasure::sequence(move |n| Atom::real(n as f64, 1.0 / ((n as f64).powi(3) * z))),
        )
    }

    #[test]
    fn bounded_function_is_total_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let povm = random_normalized_povm(&mut rng, 3, 4).unwrap();
        let e = OpMeasure::from(povm);
        let phi = gaussian_unit_vector(&mut rng, 3);
        let cert = sq_domain_member(
            |x| c((x).sin(), 0.0),
            &e,
            &phi,
            &SeriesPolicy::default(),
            "phi",
        )
        .unwrap();
        assert_eq!(cert.verdict, Verdict::Member);
        assert!(cert.check_invariant());
    }

    #[test]
    fn heavy_tail_collapses_sq_domain_but_weak_is_total() {
        let e = OpMeasure::from(heavy_trivial(2));
        let policy = SeriesPolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = gaussian_unit_vector(&mut rng, 2);
        let sq = sq_domain_member(xf, &e, &phi, &policy, "phi").unwrap();
        assert_eq!(sq.verdict, Verdict::NonMember);
        assert!(sq.check_invariant());
        // Form domain (hence the weak integral) is total.
        let fd = form_domain_member(xf, &e, &phi, &policy, "phi").unwrap();
        assert_eq!(fd.verdict, Verdict::Member);
        let w = max_weak_sym_integral(xf, &e, &policy).unwrap();
        assert_eq!(w.domain_basis, vec![0, 1]);
        // Action is (int x dmu) I.
        let e0 = e.space().basis_vector(0);
        let mean = integrate(xf, &e.scalar_measure(&e0, &e0).unwrap(), &policy)
            .unwrap()
            .value;
        let block = w.certified_block();
        assert!((block[(0, 0)] - mean).norm() < 1e-12);
        assert!((block[(1, 1)] - mean).norm() < 1e-12);
        assert!(block[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn trivial_povm_strong_rule() {
        let policy = SeriesPolicy::default();
        // Finite mu: everything is a member.
        let mu = AtomicMeasure::finite(vec![Atom::real(0.0, 0.4), Atom::real(2.0, 0.6)]);
        let e = OpMeasure::from(TrivialPovm::new(2, mu));
        let phi = e.space().basis_vector(0);
        let cert = strong_domain_member(xf, &e, &phi, &policy, "e0").unwrap();
        assert_eq!(cert.verdict, Verdict::Member);
        assert_eq!(cert.rule, Some("scalar-multiple-of-identity"));
        // Non-integrable f over an infinite mu: nonzero vectors are excluded.
        let e2 = OpMeasure::from(heavy_trivial(2));
        let cert2 = strong_domain_member(|x| c(x * x, 0.0), &e2, &phi, &policy, "e0").unwrap();
        assert_eq!(cert2.verdict, Verdict::NonMember);
        let zero = CVector::zeros(2);
        let cert3 = strong_domain_member(|x| c(x * x, 0.0), &e2, &zero, &policy, "0").unwrap();
        assert_eq!(cert3.verdict, Verdict::Member);
    }

    #[test]
    fn pvm_three_variants_coincide() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pvm = random_pvm(&mut rng, 4).unwrap();
        let e = OpMeasure::from(pvm);
        let policy = SeriesPolicy::default();
        let triple = moment_operators(&e, 1, &policy).unwrap();
        let rep = triple.chain_report();
        assert!(rep.tilde_in_strong && rep.strong_in_weak);
        assert!(rep.max_action_defect < 1e-10);
        assert_eq!(triple.tilde.domain_basis.len(), 4);
        assert!(triple.max_weak.symmetric);
    }

    #[test]
    fn tilde_matches_dilation_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let povm = random_normalized_povm(&mut rng, 3, 5).unwrap();
        let dil = naimark_dilate(&povm).unwrap();
        let lifted = dil.compress(&dil.spectral_integral(&povm.locations(), xf));
        let e = OpMeasure::from(povm);
        let policy = SeriesPolicy::default();
        let tilde = tilde_integral(xf, &e, &[0, 1, 2], &policy).unwrap();
        assert!(fro_norm(&(tilde.matrix - lifted)) < 1e-10);
    }

    #[test]
    fn diagonal_weak_integral_is_diagonal_in_the_basis() {
        let policy = SeriesPolicy::default();
        // f_m = m on the diagonal family of point masses at m.
        let fm = FormMeasure::diagonal_points(6, |n| n as f64);
        let e = OpMeasure::from(fm);
        let w = weak_sym_integral(xf, &e, &[0, 1, 2, 3, 4, 5], &policy).unwrap();
        let block = w.certified_block();
        for m in 0..6 {
            for n in 0..6 {
                let expect = if n == m {
                    c((m + 1) as f64, 0.0)
                } else {
                    c(0.0, 0.0)
                };
                assert!((block[(n, m)] - expect).norm() < 1e-14);
            }
        }
        assert!(w.symmetric);
        // Bounded family f_m = 1/(m+1): norm stays below 1.
        let fm2 = FormMeasure::diagonal_points(64, |n| 1.0 / (n as f64 + 1.0));
        let e2 = OpMeasure::from(fm2);
        let w2 = max_weak_sym_integral(xf, &e2, &policy).unwrap();
        let norm = crate::linalg::hermitian_spectral_norm(&w2.certified_block()).unwrap();
        assert!(norm <= 1.0 + 1e-12);
    }

    #[test]
    fn empty_separating_subspace_is_rejected() {
        let fm = FormMeasure::diagonal_points(3, |n| n as f64);
        let e = OpMeasure::from(fm);
        let err = weak_sym_integral(xf, &e, &[], &SeriesPolicy::default());
        assert!(matches!(err, Err(Error::SeparatingSubspaceTooSmall)));
    }

    #[test]
    fn chain_strictness_on_a_mixed_diagonal_family() {
        // Row 1 carries a heavy-tailed measure: f integrable, f^2 not.
        // Rows 2..4 are point masses. The sq domain then excludes e0 while the
        // form domain keeps it.
        let policy = SeriesPolicy::default();
        let heavy = AtomicMeasure::sequence(|n| Atom::real(n as f64, 1.0 / (n as f64).powi(3)));
        let mut mus = vec![heavy];
        for m in 2..=4u64 {
            mus.push(AtomicMeasure::finite(vec![Atom::real(m as f64, 1.0)]));
        }
        let e = OpMeasure::from(FormMeasure::diagonal(mus));
        let sq = certified_sq_basis(xf, &e, &policy).unwrap();
        assert_eq!(sq, vec![1, 2, 3]);
        let form = certified_form_basis(xf, &e, &policy).unwrap();
        assert_eq!(form, vec![0, 1, 2, 3]);
        let triple = moment_operators(&e, 1, &policy).unwrap();
        let rep = triple.chain_report();
        assert!(rep.tilde_in_strong && rep.strong_in_weak);
        assert!(rep.max_action_defect < 1e-10);
        assert!(triple.tilde.domain_basis.len() < triple.max_weak.domain_basis.len());
    }

    #[test]
    fn predomain_membership_is_linear() {
        // Two certified vectors stay certified under random combinations.
        let e = OpMeasure::from(heavy_trivial(3));
        let policy = SeriesPolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v1 = gaussian_unit_vector(&mut rng, 3);
        let v2 = gaussian_unit_vector(&mut rng, 3);
        for (a, b) in [(c(0.3, -1.2), c(2.0, 0.4)), (c(-0.5, 0.0), c(0.0, 1.5))] {
            let combo = v1.map(|z| z * a) + v2.map(|z| z * b);
            let c1 = form_domain_member(xf, &e, &v1, &policy, "v1").unwrap();
            let c2 = form_domain_member(xf, &e, &v2, &policy, "v2").unwrap();
            let cc = form_domain_member(xf, &e, &combo, &policy, "combo").unwrap();
            assert!(c1.is_member() && c2.is_member() && cc.is_member());
        }
    }

    #[test]
    fn form_integral_symmetry_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let povm = random_normalized_povm(&mut rng, 3, 4).unwrap();
        let e = OpMeasure::from(povm);
        let policy = SeriesPolicy::default();
        let psi = gaussian_unit_vector(&mut rng, 3);
        let phi = gaussian_unit_vector(&mut rng, 3);
        // Real f: hermitian pairing.
        let a = form_integral(xf, &e, &psi, &phi, &policy).unwrap();
        let b = form_integral(xf, &e, &phi, &psi, &policy).unwrap();
        assert!((a - b.conj()).norm() < 1e-12);
        // Diagonal of a real f is real.
        let d = form_integral(xf, &e, &phi, &phi, &policy).unwrap();
        assert!(d.im.abs() < 1e-13);
    }

    #[test]
    fn quadratic_form_record_adjoint_and_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let povm = random_normalized_povm(&mut rng, 3, 4).unwrap();
        let e = OpMeasure::from(povm);
        let policy = SeriesPolicy::default();
        let g = |x: f64| c(x, 0.5 * x * x); // complex-valued f
        let q = QuadraticFormRecord::from_form_integral(g, &e, &policy).unwrap();
        let qa = q.adjoint();
        let psi = gaussian_unit_vector(&mut rng, 3);
        let phi = gaussian_unit_vector(&mut rng, 3);
        let lhs = qa.eval(&phi, &psi).unwrap();
        let rhs = q.eval(&psi, &phi).unwrap().conj();
        assert!((lhs - rhs).norm() < 1e-13);
        // Adjoint form integrates the conjugate function.
        let conj_direct =
            QuadraticFormRecord::from_form_integral(|x| g(x).conj(), &e, &policy).unwrap();
        assert!(fro_norm(&(qa.gram.clone() - conj_direct.gram)) < 1e-12);
        // Re/Im split reassembles.
        let re = q.real_part();
        let im = q.imag_part();
        let back = &re.gram + im.gram.map(|z| z * c(0.0, 1.0));
        assert!(fro_norm(&(back - q.gram)) < 1e-13);
    }

    #[test]
    fn positive_form_doubling_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let povm = random_normalized_povm(&mut rng, 4, 5).unwrap();
        let e = OpMeasure::from(povm);
        let policy = SeriesPolicy::default();
        let q = QuadraticFormRecord::from_form_integral(|x| c(x.abs(), 0.0), &e, &policy).unwrap();
        assert!(q.positive);
        for _ in 0..20 {
            let psi = gaussian_unit_vector(&mut rng, 4);
            let phi = gaussian_unit_vector(&mut rng, 4);
            let both = &psi + &phi;
            let lhs = q.eval(&both, &both).unwrap().re;
            let rhs = 2.0 * q.eval(&psi, &psi).unwrap().re + 2.0 * q.eval(&phi, &phi).unwrap().re;
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn decomposition_identities() {
        let f = |x: f64| c(x, x * x - 2.0);
        let d = decompose_function(f);
        for &x in &[-2.5, -1.0, 0.0, 0.3, 1.7, 4.0] {
            let v = f(x);
            assert!((d.reassemble(x) - v).norm() < 1e-15);
            for i in 1..=4 {
                assert!(d.part(i, x) >= 0.0);
            }
            assert!((d.part(1, x) + d.part(2, x) - v.re.abs()).abs() < 1e-15);
            assert!((d.part(3, x) + d.part(4, x) - v.im.abs()).abs() < 1e-15);
            assert_eq!(d.part(1, x) * d.part(2, x), 0.0);
            assert_eq!(d.part(3, x) * d.part(4, x), 0.0);
        }
        // f real and nonnegative decomposes as (f, 0, 0, 0).
        let g = decompose_function(|x: f64| c(x * x, 0.0));
        assert_eq!(g.part(1, 3.0), 9.0);
        assert_eq!(g.part(2, 3.0), 0.0);
        // Form-integral decomposition on finite atoms.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let povm = random_normalized_povm(&mut rng, 3, 4).unwrap();
        let e = OpMeasure::from(povm);
        let policy = SeriesPolicy::default();
        let psi = gaussian_unit_vector(&mut rng, 3);
        let phi = gaussian_unit_vector(&mut rng, 3);
        let whole = form_integral(f, &e, &psi, &phi, &policy).unwrap();
        let mut parts = c(0.0, 0.0);
        for (i, coef) in [
            (1, c(1.0, 0.0)),
            (2, c(-1.0, 0.0)),
            (3, c(0.0, 1.0)),
            (4, c(0.0, -1.0)),
        ] {
            let p = form_integral(|x| c(d.part(i, x), 0.0), &e, &psi, &phi, &policy).unwrap();
            parts += coef * p;
        }
        assert!((whole - parts).norm() < 1e-12);
    }

    #[test]
    fn variance_form_vanishes_for_pvm_and_scales_for_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let pvm = random_pvm(&mut rng, 4).unwrap();
        let e = OpMeasure::from(pvm);
        let policy = SeriesPolicy::default();
        for _ in 0..5 {
            let psi = gaussian_unit_vector(&mut rng, 4);
            let phi = gaussian_unit_vector(&mut rng, 4);
            let v = variance_form(&e, &psi, &phi, &policy).unwrap();
            assert!(v.norm() < 1e-10, "{v}");
        }
        // E = mu I: variance form is Var(mu) <psi|phi>.
        let mu = AtomicMeasure::finite(vec![
            Atom::real(-1.0, 0.25),
            Atom::real(0.5, 0.5),
            Atom::real(3.0, 0.25),
        ]);
        let mean = 0.25 * -1.0 + 0.5 * 0.5 + 0.25 * 3.0;
        let second = 0.25 * 1.0 + 0.5 * 0.25 + 0.25 * 9.0;
        let var = second - mean * mean;
        let et = OpMeasure::from(TrivialPovm::new(3, mu));
        let psi = gaussian_unit_vector(&mut rng, 3);
        let phi = gaussian_unit_vector(&mut rng, 3);
        let v = variance_form(&et, &psi, &phi, &policy).unwrap();
        let expect = psi.dotc(&phi) * var;
        assert!((v - expect).norm() < 1e-12);
    }

    #[test]
    fn kato_operator_reproduces_form_and_weak_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let povm = random_normalized_povm(&mut rng, 3, 4).unwrap();
        let dil = naimark_dilate(&povm).unwrap();
        let policy = SeriesPolicy::default();
        // Positive function x^2 over located atoms.
        let f = |x: f64| c(x * x, 0.0);
        let sqrt_f = |x: f64| c(x.abs(), 0.0);
        let a = dil.spectral_integral(&povm.locations(), sqrt_f) * &dil.isometry;
        let t = kato_operator_from_form(&a);
        assert!(crate::linalg::hermiticity_defect(&t) < 1e-12);
        assert!(crate::linalg::min_eigenvalue(&hermitize(&t)).unwrap() >= -1e-12);
        // q(psi, phi) = <A psi | A phi> = <psi | T phi>.
        let psi = gaussian_unit_vector(&mut rng, 3);
        let phi = gaussian_unit_vector(&mut rng, 3);
        let q = (&a * &psi).dotc(&(&a * &phi));
        let viat = psi.dotc(&(&t * &phi));
        assert!((q - viat).norm() < 1e-12);
        // T equals the largest symmetric weak integral of f.
        let e = OpMeasure::from(povm);
        let w = max_weak_sym_integral(f, &e, &policy).unwrap();
        assert!(fro_norm(&(w.certified_block() - t)) < 1e-10);
        // A = I gives T = I; A = sqrt(T0) for diagonal T0 recovers T0.
        let eye = CMatrix::identity(3, 3);
        assert!(fro_norm(&(kato_operator_from_form(&eye) - CMatrix::identity(3, 3))) < 1e-15);
        let mut t0 = CMatrix::zeros(2, 2);
        t0[(0, 0)] = c(4.0, 0.0);
        t0[(1, 1)] = c(9.0, 0.0);
        let r = crate::linalg::psd_sqrt(&t0, 1e-12).unwrap();
        assert!(fro_norm(&(kato_operator_from_form(&r) - t0)) < 1e-12);
    }

    #[test]
    fn norm_inequality_for_tilde_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let policy = SeriesPolicy::default();
        for _ in 0..10 {
            let povm = random_normalized_povm(&mut rng, 3, 5).unwrap();
            let e = OpMeasure::from(povm);
            let phi = gaussian_unit_vector(&mut rng, 3);
            let tphi = apply_integral(xf, &e, &phi, &policy).unwrap();
            let rhs = integrate(
                |x| c(x * x, 0.0),
                &e.scalar_measure(&phi, &phi).unwrap(),
                &policy,
            )
            .unwrap()
            .value
            .re;
            assert!(tphi.norm_squared() <= rhs + 1e-10);
        }
    }

    #[test]
    fn gap_probe_tail_vanishes_for_bounded_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let povm = random_normalized_povm(&mut rng, 3, 4).unwrap();
        let e = OpMeasure::from(povm);
        let policy = SeriesPolicy::default();
        let phi = gaussian_unit_vector(&mut rng, 3);
        let report = strong_weak_gap_probe(
            |x| c(x.cos(), 0.0),
            &e,
            &[0, 1, 2],
            &phi,
            &[0.0, 2.0, 4.0, 10.0],
            &policy,
        )
        .unwrap();
        assert!(report.tail_vanishes);
        assert_eq!(report.rows.last().unwrap().sup_estimate, 0.0);
    }

    #[test]
    fn gap_probe_flags_nonvanishing_tail() {
        // Diagonal family with unbounded f_m = m and phi with slowly decaying
        // coefficients: the uniform tail stays bounded away from zero.
        let dim = 400;
        let fm = FormMeasure::diagonal_points(dim, |n| n as f64);
        let e = OpMeasure::from(fm);
        let policy = SeriesPolicy::default();
        let mut phi = CVector::zeros(dim);
        for m in 0..dim {
            let mf = (m + 1) as f64;
            phi[m] = c(1.0 / (mf * (mf + 1.0).ln()), 0.0);
        }
        let nrm = phi.norm();
        phi /= c(nrm, 0.0);
        let ds: Vec<usize> = (0..dim).collect();
        let report =
            strong_weak_gap_probe(xf, &e, &ds, &phi, &[0.0, 50.0, 100.0, 200.0], &policy).unwrap();
        assert!(!report.tail_vanishes);
        let last = report.rows.last().unwrap().sup_estimate;
        assert!(last > 0.05, "tail {last}");
    }

    #[test]
    fn certificates_serialize() {
        let e = OpMeasure::from(heavy_trivial(2));
        let policy = SeriesPolicy::default();
        let phi = e.space().basis_vector(0);
        let cert = sq_domain_member(xf, &e, &phi, &policy, "e0").unwrap();
        let json = cert.to_json();
        assert_eq!(json["kind"], "SquareIntegrability");
        assert_eq!(json["verdict"], "NonMember");
        let op = max_weak_sym_integral(xf, &e, &policy).unwrap();
        let j = op.to_json();
        assert_eq!(j["kind"], "MaxWeakSym");
        assert_eq!(j["matrix"]["rows"], 2);
    }

    #[test]
    fn moment_triple_for_trivial_measure_is_scalar() {
        let mu = AtomicMeasure::finite(vec![Atom::real(1.0, 0.3), Atom::real(2.0, 0.7)]);
        let mean = 0.3 + 2.0 * 0.7;
        let e = OpMeasure::from(TrivialPovm::new(3, mu));
        let policy = SeriesPolicy::default();
        let triple = moment_operators(&e, 1, &policy).unwrap();
        for op in [&triple.tilde, &triple.strong, &triple.max_weak] {
            assert_eq!(op.domain_basis.len(), 3);
            let block = op.certified_block();
            let expect = CMatrix::identity(3, 3).map(|z| z * c(mean, 0.0));
            assert!(fro_norm(&(block - expect)) < 1e-12);
        }
    }

    #[test]
    fn uncertified_application_is_rejected() {
        let policy = SeriesPolicy::default();
        let heavy = AtomicMeasure::sequence(|n| Atom::real(n as f64, 1.0 / (n as f64).powi(3)));
        let mus = vec![heavy, AtomicMeasure::finite(vec![Atom::real(2.0, 1.0)])];
        let e = OpMeasure::from(FormMeasure::diagonal(mus));
        let sq = certified_sq_basis(xf, &e, &policy).unwrap();
        assert_eq!(sq, vec![1]);
        let tilde = tilde_integral(xf, &e, &sq, &policy).unwrap();
        let mut bad = CVector::zeros(2);
        bad[0] = c(1.0, 0.0);
        assert!(matches!(tilde.apply(&bad), Err(Error::DomainViolation(_))));
        // Asking for the uncertified vector directly also fails.
        assert!(matches!(
            tilde_integral(xf, &e, &[0, 1], &policy),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn linearity_of_integration_on_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let povm = random_normalized_povm(&mut rng, 3, 4).unwrap();
        let e = OpMeasure::from(povm);
        let policy = SeriesPolicy::default();
        let psi = gaussian_unit_vector(&mut rng, 3);
        let phi = gaussian_unit_vector(&mut rng, 3);
        let mu = e.scalar_measure(&psi, &phi).unwrap();
        let fa = |x: f64| c(x, -0.5);
        let fb = |x: f64| c(0.25 * x * x, 1.0);
        let alpha = c(1.5, -0.5);
        let beta = c(-0.75, 2.0);
        let lhs = integrate(|x| alpha * fa(x) + beta * fb(x), &mu, &policy)
            .unwrap()
            .value;
        let rhs = alpha * integrate(fa, &mu, &policy).unwrap().value
            + beta * integrate(fb, &mu, &policy).unwrap().value;
        assert!((lhs - rhs).norm() < 1e-12);
        // Triangle inequality against the total variation.
        let abs_int = integrate(|x| c(fa(x).norm(), 0.0), &mu.total_variation(), &policy)
            .unwrap()
            .value
            .re;
        let plain = integrate(fa, &mu, &policy).unwrap().value.norm();
        assert!(plain <= abs_int + 1e-12);
    }

    #[test]
    fn pvm_expectation_and_norm_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let pvm = random_pvm(&mut rng, 5).unwrap();
        let e = OpMeasure::from(pvm);
        let policy = SeriesPolicy::default();
        let psi = gaussian_unit_vector(&mut rng, 5);
        let phi = gaussian_unit_vector(&mut rng, 5);
        let tphi = apply_integral(xf, &e, &phi, &policy).unwrap();
        let pairing = integrate(xf, &e.scalar_measure(&psi, &phi).unwrap(), &policy)
            .unwrap()
            .value;
        assert!((psi.dotc(&tphi) - pairing).norm() < 1e-10);
        let norm2 = integrate(
            |x| c(x * x, 0.0),
            &e.scalar_measure(&phi, &phi).unwrap(),
            &policy,
        )
        .unwrap()
        .value
        .re;
        assert_relative_eq!(tphi.norm_squared(), norm2, max_relative = 1e-10);
    }

    #[test]
    fn membership_is_stable_under_combinations_on_heavy_family() {
        let e = OpMeasure::from(heavy_trivial(2));
        let policy = SeriesPolicy::default();
        let v1 = e.space().basis_vector(0);
        let v2 = e.space().basis_vector(1);
        let combo = v1.map(|z| z * c(0.6, 0.2)) + v2.map(|z| z * c(-0.1, 0.9));
        for v in [&v1, &v2, &combo] {
            let cert = form_domain_member(xf, &e, v, &policy, "v").unwrap();
            assert!(cert.is_member());
        }
    }
}
