//! Complex and positive measures on atomic outcome spaces and on the real
//! line (density representation), with integration, total variation, and
//! convergence/divergence diagnostics.
//!
//! Integration against a truncated representation of an infinite measure is
//! never allowed to decide a limit question silently: every integral carries
//! an [`IntegrationVerdict`] whose status is `Converged`, `Divergent`, or
//! `Inconclusive`, together with the partial-sum evidence that produced it.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::C64;

/// One atom of a discrete measure: a real outcome location and a complex weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub weight: C64,
}

impl Atom {
    pub fn new(location: f64, weight: C64) -> Self {
        Self { location, weight }
    }

    pub fn real(location: f64, weight: f64) -> Self {
        Self {
            location,
            weight: C64::new(weight, 0.0),
        }
    }
}

/// Generator of atoms indexed by `n = 1, 2, 3, ...`.
pub type AtomFn = Arc<dyn Fn(u64) -> Atom + Send + Sync>;

#[derive(Clone)]
enum AtomSeq {
    Finite(Vec<Atom>),
    /// Infinite sequence, truncated only by the integration policy horizon.
    Sequence(AtomFn),
}

#[derive(Clone)]
struct Term {
    coef: C64,
    atoms: AtomSeq,
}

/// A complex measure on an atomic outcome space.
///
/// Internally a linear combination of finitely many pieces, each either a
/// finite atom list or an atom generator. Generator pieces are assumed to
/// have pairwise disjoint supports, which holds for every family constructed
/// in this crate (diagonal form-measure rows live on distinct locations);
/// under that assumption total variation distributes over the combination.
#[derive(Clone)]
pub struct AtomicMeasure {
    terms: Vec<Term>,
}

impl fmt::Debug for AtomicMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let finite: usize = self
            .terms
            .iter()
            .map(|t| match &t.atoms {
                AtomSeq::Finite(v) => v.len(),
                AtomSeq::Sequence(_) => 0,
            })
            .sum();
        let seqs = self
            .terms
            .iter()
            .filter(|t| matches!(t.atoms, AtomSeq::Sequence(_)))
            .count();
        write!(f, "AtomicMeasure({finite} finite atoms, {seqs} generator terms)")
    }
}

impl AtomicMeasure {
    /// Finite measure from an explicit atom list.
    pub fn finite(atoms: Vec<Atom>) -> Self {
        Self {
            terms: vec![Term {
                coef: C64::new(1.0, 0.0),
                atoms: AtomSeq::Finite(atoms),
            }],
        }
    }

    /// Finite measure with weights placed at locations `0, 1, 2, ...`.
    pub fn from_weights(weights: &[C64]) -> Self {
        Self::finite(
            weights
                .iter()
                .enumerate()
                .map(|(i, &w)| Atom::new(i as f64, w))
                .collect(),
        )
    }

    /// Measure given by a generator of atoms indexed from 1.
    pub fn sequence<G>(gen: G) -> Self
    where
        G: Fn(u64) -> Atom + Send + Sync + 'static,
    {
        Self {
            terms: vec![Term {
                coef: C64::new(1.0, 0.0),
                atoms: AtomSeq::Sequence(Arc::new(gen)),
            }],
        }
    }

    /// Zero measure.
    pub fn zero() -> Self {
        Self::finite(Vec::new())
    }

    /// Linear combination `sum_k c_k mu_k`.
    pub fn linear_combination(parts: Vec<(C64, AtomicMeasure)>) -> Self {
        let mut terms = Vec::new();
        for (c, m) in parts {
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for t in m.terms {
                terms.push(Term {
                    coef: c * t.coef,
                    atoms: t.atoms,
                });
            }
        }
        Self { terms }
    }

    /// True when no generator piece is present.
    pub fn is_finite(&self) -> bool {
        self.terms
            .iter()
            .all(|t| matches!(t.atoms, AtomSeq::Finite(_)))
    }

    /// All atoms of a finite measure, with term coefficients folded in.
    /// Returns `None` when a generator piece is present.
    pub fn finite_atoms(&self) -> Option<Vec<Atom>> {
        let mut out = Vec::new();
        for t in &self.terms {
            match &t.atoms {
                AtomSeq::Finite(v) => {
                    out.extend(v.iter().map(|a| Atom::new(a.location, t.coef * a.weight)))
                }
                AtomSeq::Sequence(_) => return None,
            }
        }
        Some(out)
    }

    /// Total variation: atom-wise absolute weights. Exact on finite atoms;
    /// for generator combinations it relies on the disjoint-support
    /// convention stated on the type.
    pub fn total_variation(&self) -> AtomicMeasure {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let c = C64::new(t.coef.norm(), 0.0);
                let atoms = match &t.atoms {
                    AtomSeq::Finite(v) => AtomSeq::Finite(
                        v.iter()
                            .map(|a| Atom::real(a.location, a.weight.norm()))
                            .collect(),
                    ),
                    AtomSeq::Sequence(g) => {
                        let g = Arc::clone(g);
                        AtomSeq::Sequence(Arc::new(move |n| {
                            let a = g(n);
                            Atom::real(a.location, a.weight.norm())
                        }))
                    }
                };
                Term { coef: c, atoms }
            })
            .collect();
        Self { terms }
    }

    /// Positivity check on the finite part: weights real and `>= -tol`.
    pub fn is_positive_finite(&self, tol: f64) -> bool {
        match self.finite_atoms() {
            Some(atoms) => atoms
                .iter()
                .all(|a| a.weight.im.abs() <= tol && a.weight.re >= -tol),
            None => false,
        }
    }

    /// Exact sum of weights over a finite measure.
    pub fn finite_total(&self) -> Option<C64> {
        self.finite_atoms()
            .map(|atoms| atoms.iter().map(|a| a.weight).sum())
    }
}

/// Outcome of a truncated integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Status {
    Converged,
    Divergent,
    Inconclusive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Converged => write!(f, "Converged"),
            Status::Divergent => write!(f, "Divergent"),
            Status::Inconclusive => write!(f, "Inconclusive"),
        }
    }
}

/// One row of partial-result evidence.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EvidenceRow {
    pub horizon: f64,
    pub partial_real: f64,
    pub partial_imag: f64,
}

/// Least-squares fit of partial results against the logarithm of the horizon.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

/// Integral value plus the convergence verdict and its evidence.
#[derive(Debug, Clone)]
pub struct IntegrationVerdict {
    pub value: C64,
    pub status: Status,
    pub evidence: Vec<EvidenceRow>,
    pub log_fit: Option<LogFit>,
}

impl IntegrationVerdict {
    pub fn exact(value: C64) -> Self {
        Self {
            value,
            status: Status::Converged,
            evidence: Vec::new(),
            log_fit: None,
        }
    }

    pub fn is_converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// Evidence table as CSV with the fixed schema
    /// `horizon,partial_real,partial_imag`.
    pub fn evidence_csv(&self) -> String {
        let mut s = String::from("horizon,partial_real,partial_imag\n");
        for row in &self.evidence {
            s.push_str(&format!(
                "{},{:.17e},{:.17e}\n",
                row.horizon, row.partial_real, row.partial_imag
            ));
        }
        s
    }
}

/// Tuning for atomic (series) integration.
#[derive(Debug, Clone, Copy)]
pub struct SeriesPolicy {
    /// Converged when the partial change is `<= tol_conv * (1 + |partial|)`.
    pub tol_conv: f64,
    /// First horizon of the doubling schedule.
    pub n0: u64,
    /// Hard truncation horizon; exceeding it yields `Inconclusive`.
    pub n_max: u64,
    /// Divergent requires `slope > slope_margin * fit residual`.
    pub slope_margin: f64,
    /// Report geometric-tail-corrected partials when the increments between
    /// horizons decrease at a stable ratio.
    pub accelerate: bool,
}

impl Default for SeriesPolicy {
    fn default() -> Self {
        Self {
            tol_conv: 1e-8,
            n0: 64,
            n_max: 1_000_000,
            slope_margin: 5.0,
            accelerate: true,
        }
    }
}

/// Geometric continuation of the partial-result sequence: when the last
/// increments shrink at a stable ratio `r < 0.95`, the tail is estimated as
/// `d * r / (1 - r)` and added to the last partial. Divergent and irregular
/// sequences are returned unchanged.
pub fn accelerated_partial(raw: &[C64]) -> C64 {
    let k = raw.len();
    if k < 4 {
        return raw[k - 1];
    }
    let d2 = raw[k - 1] - raw[k - 2];
    let d1 = raw[k - 2] - raw[k - 3];
    let d0 = raw[k - 3] - raw[k - 4];
    let (n2, n1, n0) = (d2.norm(), d1.norm(), d0.norm());
    if n2 == 0.0 || n1 == 0.0 || n0 == 0.0 {
        return raw[k - 1];
    }
    let r2 = n2 / n1;
    let r1 = n1 / n0;
    if r2 < 0.95 && r1 < 0.95 && (r2 - r1).abs() < 0.2 {
        raw[k - 1] + d2 * (r2 / (1.0 - r2))
    } else {
        raw[k - 1]
    }
}

/// Classify a sequence of partial results recorded at growing horizons.
///
/// `Converged` when the last two partials differ by less than the tolerance;
/// `Divergent` when a least-squares fit of the partials against `ln(horizon)`
/// over at least three doublings has positive slope exceeding `margin` times
/// its own residual, and the fitted growth over the window dominates the
/// convergence tolerance. Otherwise `Inconclusive`.
pub fn classify_partials(
    horizons: &[f64],
    partials: &[C64],
    tol_conv: f64,
    slope_margin: f64,
) -> (Status, Option<LogFit>) {
    assert_eq!(horizons.len(), partials.len());
    if partials.is_empty() {
        return (Status::Inconclusive, None);
    }
    if partials.len() == 1 {
        return (Status::Inconclusive, None);
    }
    let last = partials[partials.len() - 1];
    let prev = partials[partials.len() - 2];
    let change = (last - prev).norm();
    // Log-slope fit on partial magnitudes (real for the absolute integrals
    // that drive every divergence question).
    let fit = if partials.len() >= 4 {
        Some(fit_log(horizons, partials))
    } else {
        None
    };
    if let Some(f) = fit {
        let span = (horizons[horizons.len() - 1] / horizons[0]).ln();
        // Require at least three doublings of the horizon.
        let enough_span = span >= 3.0 * std::f64::consts::LN_2 - 1e-9;
        let dominates = f.slope * span > 10.0 * tol_conv * (1.0 + last.norm());
        if enough_span && f.slope > slope_margin * f.residual && dominates {
            return (Status::Divergent, fit);
        }
    }
    if change <= tol_conv * (1.0 + last.norm()) {
        return (Status::Converged, fit);
    }
    (Status::Inconclusive, fit)
}

fn fit_log(horizons: &[f64], partials: &[C64]) -> LogFit {
    let n = horizons.len() as f64;
    let xs: Vec<f64> = horizons.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = partials.iter().map(|p| p.norm()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    LogFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    }
}

fn eval_checked<F>(f: &F, x: f64) -> Result<C64>
where
    F: Fn(f64) -> C64,
{
    let v = f(x);
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonEvaluable {
            location: x,
            reason: "non-finite value".into(),
        })
    }
}

/// Integrate `f` against an atomic measure.
///
/// Finite measures integrate exactly (status `Converged`). Generator pieces
/// are summed on a doubling horizon schedule and classified by
/// [`classify_partials`]; exhausting `n_max` without a decision yields
/// `Inconclusive`, never a silent answer.
pub fn integrate<F>(f: F, mu: &AtomicMeasure, policy: &SeriesPolicy) -> Result<IntegrationVerdict>
where
    F: Fn(f64) -> C64,
{
    // Exact finite part.
    let mut finite_part = C64::new(0.0, 0.0);
    let mut seq_terms: Vec<(C64, &AtomFn)> = Vec::new();
    for t in &mu.terms {
        match &t.atoms {
            AtomSeq::Finite(v) => {
                for a in v {
                    finite_part += t.coef * a.weight * eval_checked(&f, a.location)?;
                }
            }
            AtomSeq::Sequence(g) => seq_terms.push((t.coef, g)),
        }
    }
    if seq_terms.is_empty() {
        return Ok(IntegrationVerdict::exact(finite_part));
    }

    // Shared horizon schedule across generator terms.
    let mut horizons: Vec<u64> = Vec::new();
    let mut n = policy.n0.max(2);
    while n < policy.n_max {
        horizons.push(n);
        n = n.saturating_mul(2);
    }
    horizons.push(policy.n_max);

    let mut raw: Vec<C64> = Vec::new();
    let mut partials: Vec<C64> = Vec::new();
    let mut hs: Vec<f64> = Vec::new();
    let mut acc = finite_part;
    let mut next_index: u64 = 1;
    let mut rows = Vec::new();
    let mut status = Status::Inconclusive;
    let mut fit = None;
    for &h in &horizons {
        for k in next_index..=h {
            for (c, g) in &seq_terms {
                let a = g(k);
                acc += *c * a.weight * eval_checked(&f, a.location)?;
            }
        }
        next_index = h + 1;
        hs.push(h as f64);
        raw.push(acc);
        let reported = if policy.accelerate {
            accelerated_partial(&raw)
        } else {
            acc
        };
        partials.push(reported);
        rows.push(EvidenceRow {
            horizon: h as f64,
            partial_real: reported.re,
            partial_imag: reported.im,
        });
        let (s, lf) = classify_partials(&hs, &partials, policy.tol_conv, policy.slope_margin);
        status = s;
        fit = lf;
        if status == Status::Converged {
            break;
        }
    }
    Ok(IntegrationVerdict {
        value: *partials.last().unwrap_or(&acc),
        status,
        evidence: rows,
        log_fit: fit,
    })
}

/// Integrability test: integrates `|f|` against the total variation `|mu|`.
///
/// A `Divergent` verdict therefore certifies that `f` is not `mu`-integrable,
/// and requires a positive log-slope fit over at least three horizon
/// doublings.
pub fn integrability_test<F>(
    f: F,
    mu: &AtomicMeasure,
    policy: &SeriesPolicy,
) -> Result<IntegrationVerdict>
where
    F: Fn(f64) -> C64,
{
    let tv = mu.total_variation();
    integrate(|x| C64::new(f(x).norm(), 0.0), &tv, policy)
}

// ---------------------------------------------------------------------------
// Densities on the real line
// ---------------------------------------------------------------------------

/// Support descriptor for a density measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensitySupport {
    /// The whole real line, truncated at the policy cutoff.
    Unbounded,
    /// A fixed interval `[lo, hi]`; `hi` may exceed the cutoff, in which case
    /// the horizon schedule probes growing truncations.
    Interval(f64, f64),
    /// A half line `[lo, +inf)`.
    HalfLine(f64),
}

/// Quadrature tuning for density integration.
#[derive(Debug, Clone)]
pub struct QuadraturePolicy {
    pub tol_conv: f64,
    /// Target panel width; pick `<=` a quarter of the shortest oscillation
    /// period of the integrand.
    pub panel_width: f64,
    /// Gauss-Legendre nodes per panel.
    pub nodes_per_panel: usize,
    /// Explicit horizon schedule (absolute cutoffs). Defaults to three
    /// doublings ending at `x_max`.
    pub horizons: Option<Vec<f64>>,
    pub slope_margin: f64,
    /// Report geometric-tail-corrected partials, as in [`SeriesPolicy`].
    pub accelerate: bool,
}

impl QuadraturePolicy {
    pub fn with_panel_width(panel_width: f64) -> Self {
        Self {
            tol_conv: 1e-5,
            panel_width,
            nodes_per_panel: 15,
            horizons: None,
            slope_margin: 5.0,
            accelerate: true,
        }
    }
}

impl Default for QuadraturePolicy {
    fn default() -> Self {
        Self::with_panel_width(0.5)
    }
}

/// A complex measure on the real line given by a density sampler.
#[derive(Clone)]
pub struct DensityMeasure {
    pub density: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
    pub support: DensitySupport,
    /// Cutoff for the default horizon schedule.
    pub x_max: f64,
    pub policy: QuadraturePolicy,
}

impl fmt::Debug for DensityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DensityMeasure(support {:?}, x_max {})",
            self.support, self.x_max
        )
    }
}

impl DensityMeasure {
    pub fn new<D>(density: D, support: DensitySupport, x_max: f64, policy: QuadraturePolicy) -> Self
    where
        D: Fn(f64) -> C64 + Send + Sync + 'static,
    {
        Self {
            density: Arc::new(density),
            support,
            x_max,
            policy,
        }
    }

    /// Truncation window at horizon `x`.
    fn window(&self, x: f64) -> Option<(f64, f64)> {
        let (lo, hi) = match self.support {
            DensitySupport::Unbounded => (-x, x),
            DensitySupport::Interval(a, b) => (a.max(-x), b.min(x)),
            DensitySupport::HalfLine(a) => (a, x),
        };
        if lo < hi {
            Some((lo, hi))
        } else {
            None
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration and cached per order.
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(v) = guard.get(&n) {
        return v;
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_n'(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    let leaked: &'static (Vec<f64>, Vec<f64>) = Box::leak(Box::new((nodes, weights)));
    guard.insert(n, leaked);
    leaked
}

/// Composite Gauss-Legendre integral of `g` over `[lo, hi]` with panels no
/// wider than `panel_width`. Panel contributions are evaluated in parallel
/// and summed in panel order, so the result is deterministic.
pub fn integrate_panels<G>(g: &G, lo: f64, hi: f64, panel_width: f64, nodes: usize) -> C64
where
    G: Fn(f64) -> C64 + Sync,
{
    if hi <= lo {
        return C64::new(0.0, 0.0);
    }
    let n_panels = (((hi - lo) / panel_width).ceil() as usize).max(1);
    let h = (hi - lo) / n_panels as f64;
    let (xs, ws) = gauss_legendre(nodes);
    let parts = crate::par::map_indexed(n_panels, |p| {
        let a = lo + p as f64 * h;
        let mid = a + 0.5 * h;
        let half = 0.5 * h;
        let mut acc = C64::new(0.0, 0.0);
        for (x, w) in xs.iter().zip(ws.iter()) {
            acc += g(mid + half * x) * *w;
        }
        acc * half
    });
    parts.into_iter().sum()
}

/// Integrate `f` against a density measure on its horizon schedule.
pub fn integrate_density<F>(f: F, dm: &DensityMeasure) -> Result<IntegrationVerdict>
where
    F: Fn(f64) -> C64 + Sync,
{
    let density = Arc::clone(&dm.density);
    let g = move |x: f64| f(x) * density(x);
    let horizons: Vec<f64> = match &dm.policy.horizons {
        Some(h) => h.clone(),
        None => vec![dm.x_max / 8.0, dm.x_max / 4.0, dm.x_max / 2.0, dm.x_max],
    };
    let mut rows = Vec::new();
    let mut raw = Vec::new();
    let mut partials = Vec::new();
    let mut hs = Vec::new();
    let mut acc = C64::new(0.0, 0.0);
    let mut prev_window: Option<(f64, f64)> = None;
    let mut status = Status::Inconclusive;
    let mut fit = None;
    for &x in &horizons {
        let Some((lo, hi)) = dm.window(x) else {
            continue;
        };
        // Integrate only the annulus added since the previous horizon.
        match prev_window {
            None => {
                acc += integrate_panels(&g, lo, hi, dm.policy.panel_width, dm.policy.nodes_per_panel)
            }
            Some((plo, phi)) => {
                acc +=
                    integrate_panels(&g, lo, plo, dm.policy.panel_width, dm.policy.nodes_per_panel);
                acc +=
                    integrate_panels(&g, phi, hi, dm.policy.panel_width, dm.policy.nodes_per_panel);
            }
        }
        prev_window = Some((lo, hi));
        hs.push(x);
        raw.push(acc);
        let reported = if dm.policy.accelerate {
            accelerated_partial(&raw)
        } else {
            acc
        };
        partials.push(reported);
        rows.push(EvidenceRow {
            horizon: x,
            partial_real: reported.re,
            partial_imag: reported.im,
        });
        let (s, lf) = classify_partials(&hs, &partials, dm.policy.tol_conv, dm.policy.slope_margin);
        status = s;
        fit = lf;
    }
    for row in &rows {
        if !row.partial_real.is_finite() || !row.partial_imag.is_finite() {
            return Err(Error::NonEvaluable {
                location: row.horizon,
                reason: "non-finite partial integral".into(),
            });
        }
    }
    Ok(IntegrationVerdict {
        value: *partials.last().unwrap_or(&acc),
        status,
        evidence: rows,
        log_fit: fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn one(_: f64) -> C64 {
        c(1.0, 0.0)
    }

    #[test]
    fn finite_normalization() {
        let mu = AtomicMeasure::from_weights(&[c(0.2, 0.0), c(0.3, 0.0), c(0.5, 0.0)]);
        let v = integrate(one, &mu, &SeriesPolicy::default()).unwrap();
        assert_eq!(v.status, Status::Converged);
        assert_relative_eq!(v.value.re, 1.0, max_relative = 1e-15);
        assert_eq!(v.value.im, 0.0);
    }

    #[test]
    fn total_variation_on_atoms() {
        let mu = AtomicMeasure::from_weights(&[c(0.0, 1.0), c(-1.0, 0.0), c(0.5, 0.0)]);
        let tv = mu.total_variation();
        let atoms = tv.finite_atoms().unwrap();
        let expect = [1.0, 1.0, 0.5];
        for (a, e) in atoms.iter().zip(expect) {
            assert_relative_eq!(a.weight.re, e, max_relative = 1e-15);
            assert_eq!(a.weight.im, 0.0);
        }
        // Positive measures are fixed points.
        let pos = AtomicMeasure::from_weights(&[c(0.25, 0.0), c(0.75, 0.0)]);
        let tv2 = pos.total_variation();
        for (a, b) in pos
            .finite_atoms()
            .unwrap()
            .iter()
            .zip(tv2.finite_atoms().unwrap())
        {
            assert_eq!(a.weight, b.weight);
        }
    }

    #[test]
    fn total_variation_homogeneous_and_idempotent() {
        let mu = AtomicMeasure::from_weights(&[c(1.0, 2.0), c(-0.5, 0.25)]);
        let scaled = AtomicMeasure::linear_combination(vec![(c(0.0, -3.0), mu.clone())]);
        let tv_scaled = scaled.total_variation();
        let tv = mu.total_variation();
        for (a, b) in tv_scaled
            .finite_atoms()
            .unwrap()
            .iter()
            .zip(tv.finite_atoms().unwrap())
        {
            assert_relative_eq!(a.weight.re, 3.0 * b.weight.re, max_relative = 1e-14);
        }
        let twice = tv.total_variation();
        for (a, b) in twice
            .finite_atoms()
            .unwrap()
            .iter()
            .zip(tv.finite_atoms().unwrap())
        {
            assert_eq!(a.weight, b.weight);
        }
    }

    #[test]
    fn harmonic_series_diverges_logarithmically() {
        // Atoms at n with mass 1/n: partial sums grow like ln(N).
        let mu = AtomicMeasure::sequence(|n| Atom::real(n as f64, 1.0 / n as f64));
        let v = integrate(one, &mu, &SeriesPolicy::default()).unwrap();
        assert_eq!(v.status, Status::Divergent);
        let fit = v.log_fit.unwrap();
        // d/d(ln N) of H_N is 1.
        assert_relative_eq!(fit.slope, 1.0, max_relative = 0.02);
        assert!(fit.slope > 5.0 * fit.residual);
    }

    #[test]
    fn p_series_converges() {
        let mu = AtomicMeasure::sequence(|n| Atom::real(n as f64, 1.0 / (n as f64).powi(4)));
        let v = integrate(one, &mu, &SeriesPolicy::default()).unwrap();
        assert_eq!(v.status, Status::Converged);
        assert_relative_eq!(v.value.re, std::f64::consts::PI.powi(4) / 90.0, max_relative = 1e-8);
    }

    #[test]
    fn quadratic_tail_series_converges_via_acceleration() {
        // Sum 1/n^2: raw partials change by ~1/N at the horizon, but the
        // doubling increments halve, so the geometric continuation certifies
        // the limit.
        let mu = AtomicMeasure::sequence(|n| Atom::real(n as f64, 1.0 / (n as f64).powi(2)));
        let v = integrate(one, &mu, &SeriesPolicy::default()).unwrap();
        assert_eq!(v.status, Status::Converged);
        assert_relative_eq!(
            v.value.re,
            std::f64::consts::PI.powi(2) / 6.0,
            max_relative = 1e-7
        );
        // Without acceleration the same series stays undecided at the horizon.
        let strict = SeriesPolicy {
            accelerate: false,
            ..SeriesPolicy::default()
        };
        let raw = integrate(one, &mu, &strict).unwrap();
        assert_eq!(raw.status, Status::Inconclusive);
    }

    #[test]
    fn slow_series_is_inconclusive_not_divergent() {
        // 1/n^1.1 converges but far beyond the horizon; must not be classified
        // either way.
        let mu = AtomicMeasure::sequence(|n| Atom::real(n as f64, 1.0 / (n as f64).powf(1.1)));
        let v = integrate(one, &mu, &SeriesPolicy::default()).unwrap();
        assert_eq!(v.status, Status::Inconclusive);
    }

    #[test]
    fn non_evaluable_integrand_errors() {
        let mu = AtomicMeasure::from_weights(&[c(1.0, 0.0)]);
        let r = integrate(|x| c(1.0 / x, 0.0), &mu, &SeriesPolicy::default());
        assert!(matches!(r, Err(Error::NonEvaluable { .. })));
    }

    #[test]
    fn integrability_uses_total_variation() {
        // Signed weights (-1)^n / n: conditionally summable, but |f|=1 against
        // |mu| is the harmonic series.
        let mu = AtomicMeasure::sequence(|n| {
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            Atom::real(n as f64, s / n as f64)
        });
        let v = integrability_test(one, &mu, &SeriesPolicy::default()).unwrap();
        assert_eq!(v.status, Status::Divergent);
    }

    #[test]
    fn gauss_panels_integrate_oscillation() {
        // int_0^pi sin(x) dx = 2, with an oscillatory phase factor exactness check.
        let v = integrate_panels(&|x: f64| c(x.sin(), 0.0), 0.0, std::f64::consts::PI, 0.25, 15);
        assert_relative_eq!(v.re, 2.0, max_relative = 1e-13);
        // Plancherel-style check: int_{-20}^{20} cos(7x)^2 / (1+x^2) finite value
        // against a fine reference.
        let g = |x: f64| c((7.0 * x).cos().powi(2) / (1.0 + x * x), 0.0);
        let coarse = integrate_panels(&g, -20.0, 20.0, 0.2, 15);
        let fine = integrate_panels(&g, -20.0, 20.0, 0.05, 15);
        assert_relative_eq!(coarse.re, fine.re, max_relative = 1e-10);
    }

    #[test]
    fn density_log_divergence_detected() {
        // Density 1/x on [1, inf): partial integrals are ln(T).
        let dm = DensityMeasure::new(
            |x| c(1.0 / x, 0.0),
            DensitySupport::HalfLine(1.0),
            1e4,
            QuadraturePolicy {
                horizons: Some(vec![100.0, 316.23, 1000.0, 3162.3, 10000.0]),
                ..QuadraturePolicy::with_panel_width(0.5)
            },
        );
        let v = integrate_density(one, &dm).unwrap();
        assert_eq!(v.status, Status::Divergent);
        assert_relative_eq!(v.log_fit.unwrap().slope, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn density_gaussian_converges() {
        let dm = DensityMeasure::new(
            |x| c((-x * x).exp(), 0.0),
            DensitySupport::Unbounded,
            16.0,
            QuadraturePolicy::with_panel_width(0.25),
        );
        let v = integrate_density(one, &dm).unwrap();
        assert_eq!(v.status, Status::Converged);
        assert_relative_eq!(v.value.re, std::f64::consts::PI.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn evidence_csv_schema() {
        let mu = AtomicMeasure::sequence(|n| Atom::real(n as f64, 0.5f64.powi(n as i32)));
        let v = integrate(one, &mu, &SeriesPolicy::default()).unwrap();
        let csv = v.evidence_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "horizon,partial_real,partial_imag");
        assert!(lines.next().unwrap().split(',').count() == 3);
    }
}
