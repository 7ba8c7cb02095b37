//! Deterministic scenario runner: a closed registry of desk-scale
//! experiments over the measure, POVM, operator-integral, and interval
//! modules, with CSV artifacts and a machine-readable JSON summary.
//!
//! Runs are pure functions of `(config, seed)`: identical inputs produce
//! identical numerical outputs and byte-identical summaries up to the
//! wall-clock field.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boxmom::{
    self, BoundaryDomain, BoxConfig, BoxState, Wave, boundary_domain_detector,
    lemma_boundary_divergence_probe, moment, sine_basis, variance_free_check,
};
use crate::error::{Error, Result};
use crate::integrals::{
    self, OpMeasure, Verdict, apply_integral, decompose_function, form_integral,
    kato_operator_from_form, max_weak_sym_integral, moment_operators, sq_domain_member,
    strong_weak_gap_probe,
};
use crate::linalg::{self, c, fro_norm};
use crate::measure::{Atom, AtomicMeasure, SeriesPolicy, Status, integrate};
use crate::povm::{
    DiscretePovm, FormMeasure, TrivialPovm, dilation_integral_check, naimark_dilate,
    random_normalized_povm, random_pvm,
};
use crate::{C64, CMatrix, CVector};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum ScenarioId {
    Naimark,
    BoundedIntegrals,
    TrivialPovm,
    DiagonalPovm,
    Domains,
    BoxEigen,
    BoxMoments,
    LemmaA2,
    LemmaA3,
    VarianceFree,
    PvmCoincidence,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 11] = [
        ScenarioId::Naimark,
        ScenarioId::BoundedIntegrals,
        ScenarioId::TrivialPovm,
        ScenarioId::DiagonalPovm,
        ScenarioId::Domains,
        ScenarioId::BoxEigen,
        ScenarioId::BoxMoments,
        ScenarioId::LemmaA2,
        ScenarioId::LemmaA3,
        ScenarioId::VarianceFree,
        ScenarioId::PvmCoincidence,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioId::Naimark => "naimark",
            ScenarioId::BoundedIntegrals => "bounded-integrals",
            ScenarioId::TrivialPovm => "trivial-povm",
            ScenarioId::DiagonalPovm => "diagonal-povm",
            ScenarioId::Domains => "domains",
            ScenarioId::BoxEigen => "box-eigen",
            ScenarioId::BoxMoments => "box-moments",
            ScenarioId::LemmaA2 => "lemma-a2",
            ScenarioId::LemmaA3 => "lemma-a3",
            ScenarioId::VarianceFree => "variance-free",
            ScenarioId::PvmCoincidence => "pvm-coincidence",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::ConfigError(format!("unknown scenario '{s}'")))
    }

    /// Parameter keys this scenario accepts; anything else is rejected.
    fn allowed_params(&self) -> &'static [&'static str] {
        match self {
            ScenarioId::Naimark => &["trials", "max_dim", "max_outcomes"],
            ScenarioId::BoundedIntegrals => &["trials"],
            ScenarioId::TrivialPovm => &["vectors"],
            ScenarioId::DiagonalPovm => &[],
            ScenarioId::Domains => &["povms", "states"],
            ScenarioId::BoxEigen => &["ell", "grid_m", "count"],
            ScenarioId::BoxMoments => &["ell", "modes"],
            ScenarioId::LemmaA2 => &["ell", "grid_m"],
            ScenarioId::LemmaA3 => &["ell"],
            ScenarioId::VarianceFree => &["ell", "modes"],
            ScenarioId::PvmCoincidence => &["matrices", "dim", "pairs"],
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named tolerance knobs for the numerical policies. Acceptance bounds are
/// pinned in code and are not part of this set.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ToleranceSet {
    pub conv_atomic: f64,
    pub conv_density: f64,
    pub quad: f64,
    pub eig: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self {
            conv_atomic: 1e-8,
            conv_density: 1e-5,
            quad: 1e-3,
            eig: 5e-3,
        }
    }
}

impl ToleranceSet {
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "conv_atomic" => self.conv_atomic = value,
            "conv_density" => self.conv_density = value,
            "quad" => self.quad = value,
            "eig" => self.eig = value,
            _ => return Err(Error::ConfigError(format!("unknown tolerance '{name}'"))),
        }
        Ok(())
    }

    fn series_policy(&self) -> SeriesPolicy {
        SeriesPolicy {
            tol_conv: self.conv_atomic,
            ..SeriesPolicy::default()
        }
    }
}

/// A validated scenario configuration; the seed fully determines all random
/// POVMs and states the run generates.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub id: ScenarioId,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
    pub tols: ToleranceSet,
}

impl ScenarioConfig {
    pub fn new(id: ScenarioId, seed: u64) -> Self {
        Self {
            id,
            seed,
            params: BTreeMap::new(),
            tols: ToleranceSet::default(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Result<Self> {
        self.set_param(key, value)?;
        Ok(self)
    }

    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        if !self.id.allowed_params().contains(&key) {
            return Err(Error::ConfigError(format!(
                "scenario '{}' does not accept parameter '{key}'",
                self.id
            )));
        }
        self.params.insert(key.to_string(), value);
        Ok(())
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn param_usize(&self, key: &str, default: usize) -> usize {
        self.param(key, default as f64).max(0.0) as usize
    }

    /// Parse a sectioned `key = value` config file. Sections are
    /// `[scenario]`, `[params]`, and `[tol]`; unknown sections and keys are
    /// rejected. Values in `[scenario]` are `id` and `seed`.
    pub fn parse_file(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Scenario,
            Params,
            Tol,
        }
        let mut section = Section::None;
        let mut id: Option<ScenarioId> = None;
        let mut seed: u64 = 0;
        let mut params: Vec<(String, f64)> = Vec::new();
        let mut tols = ToleranceSet::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = match name.trim() {
                    "scenario" => Section::Scenario,
                    "params" => Section::Params,
                    "tol" => Section::Tol,
                    other => {
                        return Err(Error::ConfigError(format!(
                            "line {}: unknown section '[{other}]'",
                            lineno + 1
                        )));
                    }
                };
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::ConfigError(format!(
                    "line {}: expected 'key = value'",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            match section {
                Section::None => {
                    return Err(Error::ConfigError(format!(
                        "line {}: key outside any section",
                        lineno + 1
                    )));
                }
                Section::Scenario => match key {
                    "id" => id = Some(ScenarioId::parse(value)?),
                    "seed" => {
                        seed = value.parse().map_err(|_| {
                            Error::ConfigError(format!("line {}: bad seed", lineno + 1))
                        })?;
                    }
                    other => {
                        return Err(Error::ConfigError(format!(
                            "line {}: unknown scenario key '{other}'",
                            lineno + 1
                        )));
                    }
                },
                Section::Params => {
                    let v: f64 = value.parse().map_err(|_| {
                        Error::ConfigError(format!("line {}: bad number '{value}'", lineno + 1))
                    })?;
                    params.push((key.to_string(), v));
                }
                Section::Tol => {
                    let v: f64 = value.parse().map_err(|_| {
                        Error::ConfigError(format!("line {}: bad number '{value}'", lineno + 1))
                    })?;
                    tols.set(key, v)?;
                }
            }
        }
        let id = id.ok_or_else(|| Error::ConfigError("missing scenario id".into()))?;
        let mut config = ScenarioConfig::new(id, seed);
        config.tols = tols;
        for (k, v) in params {
            config.set_param(&k, v)?;
        }
        Ok(config)
    }

    /// Canonical echo used in summaries: sorted `key=value` pairs.
    pub fn echo(&self) -> String {
        let mut parts = vec![format!("id={}", self.id), format!("seed={}", self.seed)];
        for (k, v) in &self.params {
            parts.push(format!("{k}={v}"));
        }
        parts.push(format!(
            "tol.conv_atomic={};tol.conv_density={};tol.quad={};tol.eig={}",
            self.tols.conv_atomic, self.tols.conv_density, self.tols.quad, self.tols.eig
        ));
        parts.join(";")
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One named check with its measured value against a pinned bound.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
    pub detail: String,
}

impl CheckResult {
    /// `measured <= bound`.
    fn le(name: &str, measured: f64, bound: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed: measured <= bound,
            measured,
            bound,
            detail: detail.into(),
        }
    }

    /// Boolean check; measured is 1 for pass, 0 for fail.
    fn flag(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed: ok,
            measured: if ok { 1.0 } else { 0.0 },
            bound: 1.0,
            detail: detail.into(),
        }
    }

    /// `lo <= measured <= hi`.
    fn within(name: &str, measured: f64, lo: f64, hi: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed: (lo..=hi).contains(&measured),
            measured,
            bound: hi,
            detail: detail.into(),
        }
    }
}

/// A named CSV artifact produced by a run.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub csv: String,
}

/// Outcome of one scenario run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: ScenarioId,
    pub seed: u64,
    pub config_echo: String,
    pub checks: Vec<CheckResult>,
    pub artifacts: Vec<Artifact>,
    pub wall_ms: f64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Summary document; field order is fixed and `wall_ms` comes last so
    /// summaries are byte-identical across runs up to that field.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "scenario": self.scenario.as_str(),
            "seed": self.seed,
            "config": self.config_echo,
            "passed": self.passed(),
            "checks": self.checks,
            "artifacts": self
                .artifacts
                .iter()
                .map(|a| format!("{}-{}-{}.csv", self.scenario.as_str(), self.seed, a.name))
                .collect::<Vec<_>>(),
            "wall_ms": self.wall_ms,
        })
    }
}

/// Write the summary JSON and every CSV artifact under stable names
/// `{scenario}-{seed}-{name}`; returns the paths written.
pub fn emit_report(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let base = format!("{}-{}", report.scenario.as_str(), report.seed);
    let summary_path = out_dir.join(format!("{base}-summary.json"));
    let mut doc = serde_json::to_string_pretty(&report.to_json())?;
    doc.push('\n');
    std::fs::write(&summary_path, doc)?;
    written.push(summary_path);
    for artifact in &report.artifacts {
        let path = out_dir.join(format!("{base}-{}.csv", artifact.name));
        std::fs::write(&path, &artifact.csv)?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

/// Execute a scenario; a failed check does not abort the run (it is recorded
/// in the report), but infrastructure errors do.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    let start = Instant::now();
    let (checks, artifacts) = match config.id {
        ScenarioId::Naimark => naimark(config)?,
        ScenarioId::BoundedIntegrals => bounded_integrals(config)?,
        ScenarioId::TrivialPovm => trivial_povm(config)?,
        ScenarioId::DiagonalPovm => diagonal_povm(config)?,
        ScenarioId::Domains => domains(config)?,
        ScenarioId::BoxEigen => box_eigen(config)?,
        ScenarioId::BoxMoments => box_moments(config)?,
        ScenarioId::LemmaA2 => lemma_a2(config)?,
        ScenarioId::LemmaA3 => lemma_a3(config)?,
        ScenarioId::VarianceFree => variance_free(config)?,
        ScenarioId::PvmCoincidence => pvm_coincidence(config)?,
    };
    Ok(RunReport {
        scenario: config.id,
        seed: config.seed,
        config_echo: config.echo(),
        checks,
        artifacts,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

type ScenarioOutput = (Vec<CheckResult>, Vec<Artifact>);

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(trial))
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6e}")
}

// --- naimark ---------------------------------------------------------------

struct DilationTrial {
    dim: usize,
    outcomes: usize,
    isometry_defect: f64,
    compression_defect: f64,
    projection_defect: f64,
    rank_ok: bool,
    integral_defects: [f64; 3],
}

fn naimark(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let trials = config.param_usize("trials", 50);
    let max_dim = config.param_usize("max_dim", 6).max(2);
    let max_k = config.param_usize("max_outcomes", 8).max(2);
    let started = Instant::now();
    let seed = config.seed;
    let rows: Vec<Result<DilationTrial>> = crate::par::map_indexed(trials, |i| {
        let mut rng = trial_rng(seed, i as u64);
        let dim = 2 + (rng.gen::<u64>() as usize) % (max_dim - 1);
        let outcomes = 2 + (rng.gen::<u64>() as usize) % (max_k - 1);
        let povm = random_normalized_povm(&mut rng, dim, outcomes)?;
        let dil = naimark_dilate(&povm)?;
        let eye = CMatrix::identity(dim, dim);
        let isometry_defect = fro_norm(&(dil.isometry.adjoint() * &dil.isometry - eye));
        let mut compression_defect = 0.0f64;
        for j in 0..outcomes {
            let back = dil.compress(&dil.projections[j].clone());
            compression_defect = compression_defect.max(fro_norm(&(back - povm.effect(j))));
        }
        let mut projection_defect = 0.0f64;
        let mut sum = CMatrix::zeros(dil.dilation_dim, dil.dilation_dim);
        for a in 0..outcomes {
            for b in 0..outcomes {
                let prod = &dil.projections[a] * &dil.projections[b];
                let expect = if a == b {
                    dil.projections[a].clone()
                } else {
                    CMatrix::zeros(dil.dilation_dim, dil.dilation_dim)
                };
                projection_defect = projection_defect.max(fro_norm(&(prod - expect)));
            }
            sum += &dil.projections[a];
        }
        let eye_k = CMatrix::identity(dil.dilation_dim, dil.dilation_dim);
        projection_defect = projection_defect.max(fro_norm(&(sum - eye_k)));
        let rank_sum: usize = (0..outcomes)
            .map(|j| {
                let (vals, _) = linalg::hermitian_eigen(povm.effect(j)).unwrap();
                linalg::psd_rank(&vals)
            })
            .sum();
        let fs: [fn(f64) -> C64; 3] = [
            |_x| c(1.0, 0.0),
            |x| c(x, 0.0),
            |x| c(x * x, 0.0),
        ];
        let mut integral_defects = [0.0f64; 3];
        for (slot, f) in fs.iter().enumerate() {
            integral_defects[slot] = dilation_integral_check(&povm, &dil, *f)?;
        }
        Ok(DilationTrial {
            dim,
            outcomes,
            isometry_defect,
            compression_defect,
            projection_defect,
            rank_ok: dil.dilation_dim == rank_sum,
            integral_defects,
        })
    });
    let rows: Vec<DilationTrial> = rows.into_iter().collect::<Result<_>>()?;
    let elapsed = started.elapsed().as_secs_f64();

    let mut csv = String::from(
        "trial,dim,outcomes,isometry_defect,compression_defect,projection_defect,rank_ok,f_const,f_x,f_xx\n",
    );
    for (i, r) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{:.3e},{:.3e},{:.3e},{},{:.3e},{:.3e},{:.3e}\n",
            i,
            r.dim,
            r.outcomes,
            r.isometry_defect,
            r.compression_defect,
            r.projection_defect,
            r.rank_ok,
            r.integral_defects[0],
            r.integral_defects[1],
            r.integral_defects[2],
        ));
    }

    let worst = |f: fn(&DilationTrial) -> f64| rows.iter().map(f).fold(0.0f64, f64::max);
    let checks = vec![
        CheckResult::le(
            "isometry_defect",
            worst(|r| r.isometry_defect),
            1e-10,
            format!("max |V*V - I| over {trials} dilations"),
        ),
        CheckResult::le(
            "compression_defect",
            worst(|r| r.compression_defect),
            1e-10,
            "max_i |V* F_i V - E_i|",
        ),
        CheckResult::le(
            "projection_orthogonality",
            worst(|r| r.projection_defect),
            1e-10,
            "max |F_i F_j - delta_ij F_i| and completeness",
        ),
        CheckResult::flag(
            "minimal_dimension",
            rows.iter().all(|r| r.rank_ok),
            "dilation dimension equals the summed effect ranks",
        ),
        CheckResult::le(
            "bounded_integral_factorization",
            worst(|r| {
                r.integral_defects
                    .iter()
                    .fold(0.0f64, |m, &v| m.max(v))
            }),
            1e-10,
            "defect of int f dE = V* (int f dF) V for f in {1, x, x^2}",
        ),
        CheckResult::le("runtime_seconds", elapsed, 10.0, "wall-clock for the suite"),
    ];
    Ok((
        checks,
        vec![Artifact {
            name: "dilations".into(),
            csv,
        }],
    ))
}

// --- bounded-integrals (forms on finite atoms) ------------------------------

fn bounded_integrals(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let trials = config.param_usize("trials", 100);
    let policy = config.tols.series_policy();
    let seed = config.seed;
    struct Trial {
        doubling: f64,
        sesqui: f64,
        adjoint: f64,
        decomposition: f64,
        kato: f64,
        unit_defect: f64,
        chi_defect: f64,
        positivity: f64,
        multiplicativity: f64,
    }
    let rows: Vec<Result<Trial>> = crate::par::map_indexed(trials, |i| {
        let mut rng = trial_rng(seed, i as u64);
        let dim = 2 + (rng.gen::<u64>() as usize) % 4; // 2..=5
        let k = 2 + (rng.gen::<u64>() as usize) % 5; // 2..=6
        let povm = random_normalized_povm(&mut rng, dim, k)?;
        let e = OpMeasure::from(povm.clone());
        let psi = linalg::gaussian_unit_vector(&mut rng, dim);
        let phi = linalg::gaussian_unit_vector(&mut rng, dim);
        let chi = linalg::gaussian_unit_vector(&mut rng, dim);

        // Random polynomial test function with complex coefficients.
        let coef: Vec<C64> = (0..3)
            .map(|_| {
                c(
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                )
            })
            .collect();
        let (c0, c1, c2) = (coef[0], coef[1], coef[2]);
        let f = move |x: f64| c0 + c1 * x + c2 * (x * x);

        // Doubling inequality for the positive form of |f|.
        let q = integrals::QuadraticFormRecord::from_form_integral(
            move |x| c(f(x).norm(), 0.0),
            &e,
            &policy,
        )?;
        let both = &psi + &phi;
        let doubling = (q.eval(&both, &both)?.re
            - 2.0 * q.eval(&psi, &psi)?.re
            - 2.0 * q.eval(&phi, &phi)?.re)
            .max(0.0);

        // Sesquilinearity of the form integral.
        let a = c(0.8, -0.6);
        let b = c(-0.3, 1.1);
        let combo = psi.map(|z| z * a) + chi.map(|z| z * b);
        let lhs = form_integral(f, &e, &combo, &phi, &policy)?;
        let rhs = a.conj() * form_integral(f, &e, &psi, &phi, &policy)?
            + b.conj() * form_integral(f, &e, &chi, &phi, &policy)?;
        let sesqui = (lhs - rhs).norm();

        // Adjoint form identity.
        let adj_lhs = form_integral(move |x| f(x).conj(), &e, &psi, &phi, &policy)?;
        let adj_rhs = form_integral(f, &e, &phi, &psi, &policy)?.conj();
        let adjoint = (adj_lhs - adj_rhs).norm();

        // Four-part decomposition.
        let d = decompose_function(f);
        let whole = form_integral(f, &e, &psi, &phi, &policy)?;
        let mut parts = c(0.0, 0.0);
        for (idx, w) in [
            (1, c(1.0, 0.0)),
            (2, c(-1.0, 0.0)),
            (3, c(0.0, 1.0)),
            (4, c(0.0, -1.0)),
        ] {
            parts += w * form_integral(|x| c(d.part(idx, x), 0.0), &e, &psi, &phi, &policy)?;
        }
        let decomposition = (whole - parts).norm();

        // Positive f: the dilation route reproduces the weak integral.
        let dil = naimark_dilate(&povm)?;
        let amat = dil.spectral_integral(&povm.locations(), |x| c(x.abs(), 0.0)) * &dil.isometry;
        let t = kato_operator_from_form(&amat);
        let w = max_weak_sym_integral(|x| c(x * x, 0.0), &e, &policy)?;
        let kato = fro_norm(&(w.certified_block() - t));

        // Bounded-integral basics.
        let unit = povm.bounded_integral(|_| c(1.0, 0.0))?;
        let unit_defect = fro_norm(&(unit - CMatrix::identity(dim, dim)));
        let target = povm.outcomes[1].location;
        let chi_int = povm.bounded_integral(|x| {
            if (x - target).abs() < 0.25 {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })?;
        let chi_defect = fro_norm(&(chi_int - povm.effect(1)));
        let pos = povm.bounded_integral(|x| c(x * x + 0.5, 0.0))?;
        let positivity = (-linalg::min_eigenvalue(&pos)?).max(0.0);

        // Multiplicativity of characteristic functions for a PVM.
        let pvm = random_pvm(&mut rng, dim)?;
        let locs = pvm.locations();
        let in_x = {
            let cut = locs[dim / 2];
            move |x: f64| x <= cut + 1e-12
        };
        let in_y = {
            let lo = locs[0];
            let cut = locs[dim - 1];
            move |x: f64| x >= lo + 1e-12 && x <= cut + 1e-12
        };
        let ix = pvm.bounded_integral(|x| if in_x(x) { c(1.0, 0.0) } else { c(0.0, 0.0) })?;
        let iy = pvm.bounded_integral(|x| if in_y(x) { c(1.0, 0.0) } else { c(0.0, 0.0) })?;
        let ixy = pvm.bounded_integral(|x| {
            if in_x(x) && in_y(x) {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })?;
        let multiplicativity = fro_norm(&(ix * iy - ixy));

        Ok(Trial {
            doubling,
            sesqui,
            adjoint,
            decomposition,
            kato,
            unit_defect,
            chi_defect,
            positivity,
            multiplicativity,
        })
    });
    let rows: Vec<Trial> = rows.into_iter().collect::<Result<_>>()?;

    let mut csv = String::from(
        "trial,doubling_excess,sesquilinearity,adjoint_form,decomposition,kato_vs_weak,unit,characteristic,positivity,multiplicativity\n",
    );
    for (i, r) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e}\n",
            i,
            r.doubling,
            r.sesqui,
            r.adjoint,
            r.decomposition,
            r.kato,
            r.unit_defect,
            r.chi_defect,
            r.positivity,
            r.multiplicativity,
        ));
    }
    let worst = |f: fn(&Trial) -> f64| rows.iter().map(f).fold(0.0f64, f64::max);
    let checks = vec![
        CheckResult::le(
            "form_doubling_inequality",
            worst(|r| r.doubling),
            1e-12,
            "q(u+v,u+v) <= 2q(u,u) + 2q(v,v) for the positive form",
        ),
        CheckResult::le("form_sesquilinearity", worst(|r| r.sesqui), 1e-12, ""),
        CheckResult::le("adjoint_form_identity", worst(|r| r.adjoint), 1e-12, ""),
        CheckResult::le(
            "four_part_decomposition",
            worst(|r| r.decomposition),
            1e-12,
            "f = p1 - p2 + i(p3 - p4) transported through the form integral",
        ),
        CheckResult::le(
            "form_operator_via_dilation",
            worst(|r| r.kato),
            1e-10,
            "A*A with A the dilated root integral matches the weak integral",
        ),
        CheckResult::le("unit_function", worst(|r| r.unit_defect), 1e-12, ""),
        CheckResult::le("characteristic_function", worst(|r| r.chi_defect), 1e-13, ""),
        CheckResult::le(
            "positive_integrand_psd",
            worst(|r| r.positivity),
            1e-12,
            "min eigenvalue of int f dE for f >= 0",
        ),
        CheckResult::le(
            "pvm_multiplicativity",
            worst(|r| r.multiplicativity),
            1e-10,
            "int chi_X chi_Y dE = E(X cap Y) for spectral measures",
        ),
    ];
    Ok((
        checks,
        vec![Artifact {
            name: "forms".into(),
            csv,
        }],
    ))
}

// --- trivial-povm -----------------------------------------------------------

fn trivial_povm(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let vectors = config.param_usize("vectors", 10);
    let policy = config.tols.series_policy();
    let mut rng = trial_rng(config.seed, 0);
    let dim = 3;

    // Finite atomic base measure with an integrable f.
    let masses: Vec<f64> = (0..5).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = masses.iter().sum();
    let atoms: Vec<Atom> = masses
        .iter()
        .enumerate()
        .map(|(i, &w)| Atom::real(-1.0 + i as f64, w / total))
        .collect();
    let mean: C64 = atoms.iter().map(|a| a.weight * a.location).sum();
    let e = OpMeasure::from(TrivialPovm::new(dim, AtomicMeasure::finite(atoms)));
    let f = |x: f64| c(x, 0.0);
    let triple = moment_operators(&e, 1, &policy)?;
    let expect = CMatrix::identity(dim, dim).map(|z| z * mean);
    let scalar_defect = [&triple.tilde, &triple.strong, &triple.max_weak]
        .iter()
        .map(|op| fro_norm(&(op.certified_block() - expect.clone())))
        .fold(0.0f64, f64::max);
    let all_total = [&triple.tilde, &triple.strong, &triple.max_weak]
        .iter()
        .all(|op| op.domain_basis.len() == dim);

    // Infinite base measure: masses ~ n^-3 at locations n, probed with x^2
    // (not integrable) so the square-integrability domain collapses.
    let heavy = TrivialPovm::new(
        dim,
        AtomicMeasure::sequence(|n| Atom::real(n as f64, 1.0 / (n as f64).powi(3))),
    );
    let eh = OpMeasure::from(heavy);
    let fsq = |x: f64| c(x * x, 0.0);
    let mut csv = String::from("vector,sq_verdict,form_verdict\n");
    let mut all_nonmember = true;
    let mut form_total = true;
    for i in 0..vectors {
        let phi = linalg::gaussian_unit_vector(&mut rng, dim);
        let sq = sq_domain_member(fsq, &eh, &phi, &policy, &format!("v{i}"))?;
        // The same family pairs an integrable f with a collapsed sq domain.
        let form = integrals::form_domain_member(f, &eh, &phi, &policy, &format!("v{i}"))?;
        all_nonmember &= sq.verdict == Verdict::NonMember;
        form_total &= form.verdict == Verdict::Member;
        csv.push_str(&format!("{i},{:?},{:?}\n", sq.verdict, form.verdict));
    }
    // And the weak integral of the integrable f is total with scalar action.
    let wk = max_weak_sym_integral(f, &eh, &policy)?;
    let heavy_mean = integrate(
        f,
        &eh.scalar_measure(&eh.space().basis_vector(0), &eh.space().basis_vector(0))?,
        &policy,
    )?
    .value;
    let wk_defect = fro_norm(
        &(wk.certified_block() - CMatrix::identity(dim, dim).map(|z| z * heavy_mean)),
    );

    let checks = vec![
        CheckResult::le(
            "scalar_action",
            scalar_defect,
            1e-12,
            "all three integral variants act as (int f dmu) I",
        ),
        CheckResult::flag("total_domain", all_total, "finite base measure is total"),
        CheckResult::flag(
            "sq_domain_collapses",
            all_nonmember,
            format!("square-integrability excluded for {vectors} random nonzero vectors"),
        ),
        CheckResult::flag(
            "weak_domain_total_on_heavy_family",
            form_total && wk.domain_basis.len() == dim,
            "form domain total although the sq domain is trivial",
        ),
        CheckResult::le(
            "weak_action_on_heavy_family",
            wk_defect,
            1e-10,
            "weak integral is the scalar mean times the identity",
        ),
    ];
    Ok((
        checks,
        vec![Artifact {
            name: "certificates".into(),
            csv,
        }],
    ))
}

// --- diagonal-povm ----------------------------------------------------------

fn diagonal_povm(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let policy = config.tols.series_policy();
    let mut csv = String::from("family,size,operator_norm,action_defect\n");
    let mut checks = Vec::new();

    // Unbounded family f_m = m across growing truncations.
    let mut norms = Vec::new();
    let mut worst_action = 0.0f64;
    for &size in &[10usize, 100, 1000] {
        let fm = FormMeasure::diagonal_points(size, |n| n as f64);
        let e = OpMeasure::from(fm);
        let w = max_weak_sym_integral(|x| c(x, 0.0), &e, &policy)?;
        let block = w.certified_block();
        let mut defect = 0.0f64;
        for col in 0..size {
            for row in 0..size {
                let expect = if row == col {
                    c((col + 1) as f64, 0.0)
                } else {
                    c(0.0, 0.0)
                };
                defect = defect.max((block[(row, col)] - expect).norm());
            }
        }
        worst_action = worst_action.max(defect);
        let norm = linalg::hermitian_spectral_norm(&block)?;
        norms.push(norm);
        csv.push_str(&format!("unbounded,{size},{norm:.6e},{defect:.3e}\n"));
    }
    checks.push(CheckResult::le(
        "diagonal_action_exact",
        worst_action,
        1e-14,
        "weak integral is diagonal with entries f_m on the atoms",
    ));
    checks.push(CheckResult::flag(
        "unbounded_norm_growth",
        norms.windows(2).all(|w| w[1] > w[0]) && norms[2] >= 50.0 * norms[0],
        format!("operator norms {} over sizes 10, 100, 1000", norms
            .iter()
            .map(|n| fmt_f(*n))
            .collect::<Vec<_>>()
            .join(", ")),
    ));

    // Bounded family f_m = 1/(m+1).
    let size = 64;
    let fm = FormMeasure::diagonal_points(size, |n| 1.0 / (n as f64 + 1.0));
    let e = OpMeasure::from(fm);
    let w = max_weak_sym_integral(|x| c(x, 0.0), &e, &policy)?;
    let norm = linalg::hermitian_spectral_norm(&w.certified_block())?;
    csv.push_str(&format!("bounded,{size},{norm:.6e},0\n"));
    checks.push(CheckResult::le(
        "bounded_norm",
        norm,
        1.0 + 1e-12,
        "sup_m |f_m| = 1/2 bounds the family",
    ));
    Ok((
        checks,
        vec![Artifact {
            name: "norms".into(),
            csv,
        }],
    ))
}

// --- domains ----------------------------------------------------------------

fn domains(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let povms = config.param_usize("povms", 30);
    let states = config.param_usize("states", 100);
    let policy = config.tols.series_policy();
    let seed = config.seed;

    // Inclusion chain and the norm inequality on random POVMs.
    struct ChainTrial {
        inclusion: bool,
        action_defect: f64,
        norm_excess: f64,
    }
    let rows: Vec<Result<ChainTrial>> = crate::par::map_indexed(povms, |i| {
        let mut rng = trial_rng(seed, i as u64);
        let dim = 2 + (rng.gen::<u64>() as usize) % 4;
        let k = 2 + (rng.gen::<u64>() as usize) % 5;
        let povm = random_normalized_povm(&mut rng, dim, k)?;
        let e = OpMeasure::from(povm);
        let triple = moment_operators(&e, 1, &policy)?;
        let rep = triple.chain_report();
        let phi = linalg::gaussian_unit_vector(&mut rng, dim);
        let tphi = apply_integral(|x| c(x, 0.0), &e, &phi, &policy)?;
        let bound = integrate(
            |x| c(x * x, 0.0),
            &e.scalar_measure(&phi, &phi)?,
            &policy,
        )?
        .value
        .re;
        Ok(ChainTrial {
            inclusion: rep.tilde_in_strong && rep.strong_in_weak,
            action_defect: rep.max_action_defect,
            norm_excess: (tphi.norm_squared() - bound).max(0.0),
        })
    });
    let rows: Vec<ChainTrial> = rows.into_iter().collect::<Result<_>>()?;

    let mut checks = vec![
        CheckResult::flag(
            "inclusion_chain",
            rows.iter().all(|r| r.inclusion),
            format!("domain inclusions over {povms} random measures"),
        ),
        CheckResult::le(
            "chain_action_agreement",
            rows.iter().map(|r| r.action_defect).fold(0.0, f64::max),
            1e-10,
            "the three variants agree on shared certified vectors",
        ),
        CheckResult::le(
            "norm_inequality",
            rows.iter().map(|r| r.norm_excess).fold(0.0, f64::max),
            1e-10,
            "|T phi|^2 <= int x^2 dE_{phi,phi}",
        ),
    ];

    // Chain strictness witness on the mixed diagonal family.
    let heavy = AtomicMeasure::sequence(|n| Atom::real(n as f64, 1.0 / (n as f64).powi(3)));
    let mut mus = vec![heavy];
    for m in 2..=4u64 {
        mus.push(AtomicMeasure::finite(vec![Atom::real(m as f64, 1.0)]));
    }
    let mixed = OpMeasure::from(FormMeasure::diagonal(mus));
    let triple = moment_operators(&mixed, 1, &policy)?;
    checks.push(CheckResult::flag(
        "chain_strictness_witness",
        triple.tilde.domain_basis.len() < triple.max_weak.domain_basis.len()
            && triple.chain_report().tilde_in_strong,
        "square-integrability excludes a vector the form domain admits",
    ));

    // Tail probe: bounded function vanishes, unbounded diagonal does not.
    let fmq = FormMeasure::diagonal_points(200, |n| n as f64);
    let eq = OpMeasure::from(fmq);
    let mut phi = CVector::zeros(200);
    for m in 0..200 {
        let mf = (m + 1) as f64;
        phi[m] = c(1.0 / (mf * (mf + 1.0).ln()), 0.0);
    }
    let nrm = phi.norm();
    phi /= c(nrm, 0.0);
    let ds: Vec<usize> = (0..200).collect();
    let probe_unbounded =
        strong_weak_gap_probe(|x| c(x, 0.0), &eq, &ds, &phi, &[0.0, 25.0, 50.0, 100.0], &policy)?;
    let probe_bounded = strong_weak_gap_probe(
        |x| c((0.05 * x).cos(), 0.0),
        &eq,
        &ds,
        &phi,
        &[0.0, 25.0, 50.0, 100.0],
        &policy,
    )?;
    checks.push(CheckResult::flag(
        "tail_probe_contrast",
        !probe_unbounded.tail_vanishes && probe_bounded.tail_vanishes,
        "uniform tails vanish for bounded integrands only",
    ));
    let mut gap_csv = String::from("function,threshold,sup_estimate\n");
    for r in &probe_bounded.rows {
        gap_csv.push_str(&format!("bounded,{},{:.6e}\n", r.threshold, r.sup_estimate));
    }
    for r in &probe_unbounded.rows {
        gap_csv.push_str(&format!("unbounded,{},{:.6e}\n", r.threshold, r.sup_estimate));
    }

    // Boundary-condition truth table.
    let ell = PI;
    let cfg = BoxConfig::new(ell);
    let tol = 1e-10;
    let expect_table: Vec<(&str, BoxState, u32, BoundaryDomain)> = vec![
        (
            "mode3",
            BoxState::analytic(Wave::sine_mode(3, ell), ell),
            1,
            BoundaryDomain::InDomPprime2n,
        ),
        (
            "hump",
            BoxState::analytic(Wave::hump(ell), ell),
            1,
            BoundaryDomain::InDomPprime2n,
        ),
        (
            "hump_squared",
            BoxState::analytic(Wave::hump_squared(ell), ell),
            1,
            BoundaryDomain::InDomP2n,
        ),
        (
            "hump_squared",
            BoxState::analytic(Wave::hump_squared(ell), ell),
            2,
            BoundaryDomain::InDomPprime2n,
        ),
        (
            "ramp_1_1",
            BoxState::analytic(Wave::linear_boundary(c(1.0, 0.0), c(1.0, 0.0), ell), ell),
            1,
            BoundaryDomain::Neither,
        ),
        (
            "ramp_1_0",
            BoxState::analytic(Wave::linear_boundary(c(1.0, 0.0), c(0.0, 0.0), ell), ell),
            1,
            BoundaryDomain::Neither,
        ),
        (
            "ramp_0_1",
            BoxState::analytic(Wave::linear_boundary(c(0.0, 0.0), c(1.0, 0.0), ell), ell),
            1,
            BoundaryDomain::Neither,
        ),
        (
            "zero_ramp",
            BoxState::analytic(Wave::linear_boundary(c(0.0, 0.0), c(0.0, 0.0), ell), ell),
            1,
            BoundaryDomain::InDomP2n,
        ),
    ];
    let mut truth_csv = String::from("state,order,expected,got\n");
    let mut table_ok = true;
    for (name, state, order, expect) in &expect_table {
        let got = boundary_domain_detector(state, *order, tol)?;
        table_ok &= got == *expect;
        truth_csv.push_str(&format!("{name},{order},{expect:?},{got:?}\n"));
    }
    checks.push(CheckResult::flag(
        "boundary_truth_table",
        table_ok,
        "detector matches the analytic memberships",
    ));

    // Chain between the two flavors on seeded random states.
    let mut rng = trial_rng(seed, 0xb0);
    let mut chain_ok = true;
    for i in 0..states {
        let state = match i % 3 {
            0 => {
                let coeffs: Vec<C64> = (0..4)
                    .map(|_| {
                        c(
                            rng.sample::<f64, _>(rand_distr::StandardNormal),
                            rng.sample::<f64, _>(rand_distr::StandardNormal),
                        )
                    })
                    .collect();
                BoxState::analytic(Wave::sine_superposition(&coeffs, ell), ell)
            }
            1 => {
                let s: f64 = rng.gen_range(0.2..3.0);
                BoxState::analytic(
                    match i % 2 {
                        0 => Wave::hump(ell),
                        _ => Wave::hump_squared(ell),
                    },
                    ell,
                )
                .scaled(s)
            }
            _ => {
                let a = c(
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                );
                let b = c(
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                    rng.sample::<f64, _>(rand_distr::StandardNormal),
                );
                BoxState::analytic(Wave::linear_boundary(a, b, ell), ell)
            }
        };
        for order in 1..=2u32 {
            let got = boundary_domain_detector(&state, order, tol)?;
            if got == BoundaryDomain::InDomP2n {
                // The stronger membership must imply the weaker set of
                // conditions, re-checked from raw boundary data.
                let bd = state.boundary_derivatives((order as usize) - 1)?;
                let ok = bd
                    .iter()
                    .all(|(l, r)| l.norm() <= 1e-8 && r.norm() <= 1e-8);
                chain_ok &= ok;
            }
        }
    }
    let _ = cfg;
    checks.push(CheckResult::flag(
        "boundary_chain",
        chain_ok,
        format!("full membership implies half membership on {states} seeded states"),
    ));

    Ok((
        checks,
        vec![
            Artifact {
                name: "gap-probe".into(),
                csv: gap_csv,
            },
            Artifact {
                name: "boundary-table".into(),
                csv: truth_csv,
            },
        ],
    ))
}

// --- box-eigen ----------------------------------------------------------------

fn box_eigen(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let ell = config.param("ell", PI);
    let grid_m = config.param_usize("grid_m", 2000);
    let count = config.param_usize("count", 5);
    let started = Instant::now();
    let cfg = BoxConfig {
        grid_m,
        ..BoxConfig::new(ell)
    };
    let rep = boxmom::eigen_p0star_p0(&cfg, count)?;
    let cfg2 = BoxConfig {
        grid_m: 2 * grid_m,
        ..BoxConfig::new(ell)
    };
    let rep2 = boxmom::eigen_p0star_p0(&cfg2, count)?;

    let mut csv = String::from(
        "n,fd_eigenvalue,analytic,discrete_exact,stated_half,rel_err,refinement_ratio\n",
    );
    let mut worst_rel = 0.0f64;
    let mut ratios = Vec::with_capacity(count);
    for i in 0..count {
        let analytic = rep.analytic[i];
        let rel = (rep.eigenvalues[i] - analytic).abs() / analytic;
        worst_rel = worst_rel.max(rel);
        let e1 = (rep.eigenvalues[i] - analytic).abs();
        let e2 = (rep2.eigenvalues[i] - analytic).abs();
        let ratio = e1 / e2.max(1e-300);
        ratios.push(ratio);
        csv.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.3e},{:.3}\n",
            i + 1,
            rep.eigenvalues[i],
            analytic,
            rep.discrete_exact[i],
            rep.stated_half[i],
            rel,
            ratio,
        ));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let ratio_ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    let half_ok = rep
        .stated_half
        .iter()
        .zip(&rep.analytic)
        .all(|(h, a)| (h * 2.0 - a).abs() <= 1e-12 * a);
    let checks = vec![
        CheckResult::le(
            "eigenvalue_relative_error",
            worst_rel,
            5e-3,
            format!("first {count} eigenvalues against the analytic spectrum"),
        ),
        CheckResult::flag(
            "refinement_ratio",
            ratio_ok,
            format!(
                "error ratios on grid doubling: {}",
                ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
            ),
        ),
        CheckResult::flag(
            "half_factor_discrepancy_flagged",
            rep.half_factor_flag && half_ok,
            "the halved values are reported alongside, never substituted",
        ),
        CheckResult::le("runtime_seconds", elapsed, 30.0, ""),
    ];
    Ok((
        checks,
        vec![Artifact {
            name: "eigenvalues".into(),
            csv,
        }],
    ))
}

// --- box-moments --------------------------------------------------------------

fn box_moments(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let ell = config.param("ell", PI);
    let modes = config.param_usize("modes", 3);
    let cfg = BoxConfig::new(ell);
    let inv = 1.0 / 2f64.sqrt();
    let mut states: Vec<(String, BoxState)> = (1..=modes)
        .map(|n| (format!("mode{n}"), sine_basis(n, &cfg).unwrap()))
        .collect();
    states.push((
        "mode12_sum".into(),
        BoxState::analytic(
            Wave::sine_superposition(&[c(inv, 0.0), c(inv, 0.0)], ell),
            ell,
        ),
    ));
    states.push((
        "ramp_1_1".into(),
        BoxState::analytic(Wave::linear_boundary(c(1.0, 0.0), c(1.0, 0.0), ell), ell),
    ));
    states.push((
        "ramp_0_1".into(),
        BoxState::analytic(Wave::linear_boundary(c(0.0, 0.0), c(1.0, 0.0), ell), ell),
    ));

    let mut csv = String::from("state,k,value,status,slope\n");
    let mut mode_defect = 0.0f64;
    let mut first_moment_worst = 0.0f64;
    let mut plancherel_worst = 0.0f64;
    let mut ramp_divergent = true;
    let mut ramp_slope = f64::NAN;
    for (name, state) in &states {
        for k in 0..=2u32 {
            let m = moment(state, k, &cfg)?;
            let slope = m.slope.map(|f| f.slope).unwrap_or(f64::NAN);
            csv.push_str(&format!(
                "{name},{k},{:.9e},{},{}\n",
                m.value,
                m.status,
                if slope.is_nan() {
                    "".to_string()
                } else {
                    format!("{slope:.6e}")
                }
            ));
            match (name.as_str(), k) {
                (n, 0) if n.starts_with("mode") => {
                    plancherel_worst =
                        plancherel_worst.max((m.value - state.norm_sq(cfg.grid_m)).abs());
                }
                (n, 1) if n.starts_with("mode") => {
                    first_moment_worst = first_moment_worst.max(m.value.abs());
                }
                ("mode1", 2) | ("mode2", 2) | ("mode3", 2) => {
                    let n: f64 = name.trim_start_matches("mode").parse().unwrap();
                    let expect = (n * PI / ell).powi(2);
                    mode_defect = mode_defect.max((m.value - expect).abs() / expect);
                }
                ("mode12_sum", 2) => {
                    let expect = (1.0 + 4.0) / 2.0 * (PI / ell).powi(2);
                    mode_defect = mode_defect.max((m.value - expect).abs() / expect);
                }
                ("ramp_1_1", 1) => {
                    ramp_divergent &= m.status == Status::Divergent;
                    ramp_slope = slope;
                }
                ("ramp_0_1", 1) => {
                    ramp_divergent &= m.status == Status::Divergent;
                }
                _ => {}
            }
        }
    }
    let slope_err = (ramp_slope - 1.0 / PI).abs() / (1.0 / PI);
    let checks = vec![
        CheckResult::le(
            "second_moment_matches_derivative_energy",
            mode_defect,
            1e-3,
            "relative error of int x^2 rho against the mode energies",
        ),
        CheckResult::le("first_moments_vanish", first_moment_worst, 1e-8, ""),
        CheckResult::le("plancherel_defect", plancherel_worst, 1e-3, ""),
        CheckResult::flag(
            "boundary_states_diverge",
            ramp_divergent,
            "first moments of boundary-value states are certified divergent",
        ),
        CheckResult::le(
            "divergence_slope",
            slope_err,
            0.1,
            "log-slope of the flat-state first moment against 1/pi",
        ),
    ];
    Ok((
        checks,
        vec![Artifact {
            name: "moments".into(),
            csv,
        }],
    ))
}

// --- lemma-a2 -----------------------------------------------------------------

fn lemma_a2(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let ell = config.param("ell", PI);
    let grid_m = config.param_usize("grid_m", 2048);
    let xs16: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.4).collect();
    let xs4: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.1).collect();
    let cases: Vec<(&str, Wave, usize, &Vec<f64>, f64)> = vec![
        ("mode1", Wave::sine_mode(1, ell), 1, &xs16, 1e-8),
        (
            "ramp_0_1",
            Wave::linear_boundary(c(0.0, 0.0), c(1.0, 0.0), ell),
            1,
            &xs16,
            1e-8,
        ),
        ("hump_squared", Wave::hump_squared(ell), 2, &xs4, 1e-7),
    ];
    let mut csv = String::from("state,order,grid_m,residual\n");
    let mut checks = Vec::new();
    for (name, wave, order, grid, bound) in cases {
        let coarse = boxmom::identity_residual(&wave, order, grid, grid_m, ell)?;
        let fine = boxmom::identity_residual(&wave, order, grid, 2 * grid_m, ell)?;
        csv.push_str(&format!("{name},{order},{grid_m},{coarse:.3e}\n"));
        csv.push_str(&format!("{name},{order},{},{fine:.3e}\n", 2 * grid_m));
        checks.push(CheckResult::le(
            &format!("residual_{name}"),
            coarse,
            bound,
            format!("sup identity residual at order {order}"),
        ));
        checks.push(CheckResult::le(
            &format!("refinement_{name}"),
            fine,
            coarse / 2.0,
            "halving the grid step at least halves the residual",
        ));
    }
    Ok((
        checks,
        vec![Artifact {
            name: "residuals".into(),
            csv,
        }],
    ))
}

// --- lemma-a3 -----------------------------------------------------------------

fn lemma_a3(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let ell = config.param("ell", PI);
    let schedule = [100.0, 316.22776601683796, 1000.0, 3162.2776601683795, 10000.0];
    let pairs = [
        (c(1.0, 0.0), c(1.0, 0.0), Status::Divergent),
        (c(1.0, 0.0), c(0.0, 0.0), Status::Divergent),
        (c(0.0, 0.0), c(1.0, 0.0), Status::Divergent),
        (c(1.0, 0.0), c(-1.0, 0.0), Status::Divergent),
        (c(0.0, 0.0), c(0.0, 0.0), Status::Converged),
    ];
    let mut csv = String::from("a_re,b_re,theta,status,slope,residual\n");
    let mut class_ok = true;
    let mut slope_ok = true;
    for (a, b, expect) in pairs {
        let p = lemma_boundary_divergence_probe(a, b, None, ell, &schedule)?;
        class_ok &= p.status == expect;
        if expect == Status::Divergent {
            let fit = p.fit.unwrap_or(crate::measure::LogFit {
                slope: 0.0,
                intercept: 0.0,
                residual: 1.0,
            });
            slope_ok &= fit.slope > 5.0 * fit.residual;
            csv.push_str(&format!(
                "{},{},{:.6},{},{:.6e},{:.3e}\n",
                a.re, b.re, p.theta, p.status, fit.slope, fit.residual
            ));
        } else {
            csv.push_str(&format!(
                "{},{},{:.6},{},,\n",
                a.re, b.re, p.theta, p.status
            ));
        }
    }
    // Closed-form slope cross-check on the flat boundary state.
    let cfg = BoxConfig::new(ell);
    let flat = BoxState::analytic(Wave::linear_boundary(c(1.0, 0.0), c(1.0, 0.0), ell), ell);
    let m1 = moment(&flat, 1, &cfg)?;
    let slope = m1.slope.map(|f| f.slope).unwrap_or(f64::NAN);
    let slope_err = (slope - 1.0 / PI).abs() / (1.0 / PI);
    let checks = vec![
        CheckResult::flag(
            "classification",
            class_ok,
            "divergent for the four boundary pairs, convergent for (0, 0)",
        ),
        CheckResult::flag(
            "slope_dominates_residual",
            slope_ok,
            "positive log-slope exceeds five times the fit residual",
        ),
        CheckResult::le(
            "flat_state_slope",
            slope_err,
            0.1,
            "first-moment log-slope of the flat state against 1/pi",
        ),
    ];
    Ok((
        checks,
        vec![Artifact {
            name: "divergence".into(),
            csv,
        }],
    ))
}

// --- variance-free ------------------------------------------------------------

fn variance_free(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let ell = config.param("ell", PI);
    let modes = config.param_usize("modes", 5);
    let cfg = BoxConfig::new(ell);
    let mut rng = trial_rng(config.seed, 1);
    let inv = 1.0 / 2f64.sqrt();
    let mut states: Vec<(String, BoxState)> = (1..=modes)
        .map(|n| (format!("mode{n}"), sine_basis(n, &cfg).unwrap()))
        .collect();
    states.push((
        "mode12_sum".into(),
        BoxState::analytic(
            Wave::sine_superposition(&[c(inv, 0.0), c(inv, 0.0)], ell),
            ell,
        ),
    ));
    // Seeded real superposition, normalized.
    let mut coeffs = [0.0f64; 3];
    for slot in coeffs.iter_mut() {
        *slot = rng.sample(rand_distr::StandardNormal);
    }
    let norm = coeffs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let coeffs: Vec<C64> = coeffs.iter().map(|&v| c(v / norm, 0.0)).collect();
    states.push((
        "seeded_sum".into(),
        BoxState::analytic(Wave::sine_superposition(&coeffs, ell), ell),
    ));

    let mut csv = String::from("state,second_moment,derivative_norm_sq,relative_defect,first_moment\n");
    let mut worst_rel = 0.0f64;
    let mut worst_first = 0.0f64;
    for (name, state) in &states {
        let rep = variance_free_check(state, &cfg)?;
        worst_rel = worst_rel.max(rep.relative_defect);
        worst_first = worst_first.max(rep.first_moment.abs());
        csv.push_str(&format!(
            "{name},{:.9e},{:.9e},{:.3e},{:.3e}\n",
            rep.second_moment, rep.derivative_norm_sq, rep.relative_defect, rep.first_moment
        ));
    }
    let checks = vec![
        CheckResult::le(
            "variance_defect",
            worst_rel,
            1e-3,
            "relative gap between the second moment and the derivative energy",
        ),
        CheckResult::le("first_moments", worst_first, 1e-8, ""),
    ];
    Ok((
        checks,
        vec![Artifact {
            name: "variance".into(),
            csv,
        }],
    ))
}

// --- pvm-coincidence ------------------------------------------------------------

fn pvm_coincidence(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    let matrices = config.param_usize("matrices", 20);
    let dim = config.param_usize("dim", 5).max(2);
    let pairs = config.param_usize("pairs", 20);
    let policy = config.tols.series_policy();
    let seed = config.seed;
    struct Trial {
        agreement: f64,
        full_domain: bool,
    }
    let rows: Vec<Result<Trial>> = crate::par::map_indexed(matrices, |i| {
        let mut rng = trial_rng(seed, i as u64);
        let pvm = random_pvm(&mut rng, dim)?;
        let e = OpMeasure::from(pvm);
        let triple = moment_operators(&e, 1, &policy)?;
        let rep = triple.chain_report();
        let full = triple.tilde.domain_basis.len() == dim
            && triple.strong.domain_basis.len() == dim
            && triple.max_weak.domain_basis.len() == dim;
        Ok(Trial {
            agreement: rep.max_action_defect,
            full_domain: full && rep.tilde_in_strong && rep.strong_in_weak,
        })
    });
    let rows: Vec<Trial> = rows.into_iter().collect::<Result<_>>()?;

    let mut rng = trial_rng(seed, 0xf00);
    let mut worst_var = 0.0f64;
    for _ in 0..pairs {
        let pvm = random_pvm(&mut rng, dim)?;
        let e = OpMeasure::from(pvm);
        let psi = linalg::gaussian_unit_vector(&mut rng, dim);
        let phi = linalg::gaussian_unit_vector(&mut rng, dim);
        let v = integrals::variance_form(&e, &psi, &phi, &policy)?;
        worst_var = worst_var.max(v.norm());
    }

    let mut csv = String::from("trial,agreement_defect,full_domain\n");
    for (i, r) in rows.iter().enumerate() {
        csv.push_str(&format!("{i},{:.3e},{}\n", r.agreement, r.full_domain));
    }
    let checks = vec![
        CheckResult::le(
            "variant_agreement",
            rows.iter().map(|r| r.agreement).fold(0.0, f64::max),
            1e-10,
            format!("pairwise variant agreement over {matrices} spectral measures"),
        ),
        CheckResult::flag(
            "total_domains",
            rows.iter().all(|r| r.full_domain),
            "all three domains are total on the truncation",
        ),
        CheckResult::le(
            "variance_form",
            worst_var,
            1e-10,
            format!("variance form on {pairs} random pairs"),
        ),
    ];
    Ok((
        checks,
        vec![Artifact {
            name: "coincidence".into(),
            csv,
        }],
    ))
}

impl BoxState {
    fn scaled(&self, s: f64) -> BoxState {
        match &self.source {
            crate::boxmom::WaveSource::Analytic(w) => {
                let scaled = match w {
                    Wave::Trig(terms) => Wave::Trig(
                        terms
                            .iter()
                            .map(|t| crate::boxmom::TrigTerm {
                                coef: t.coef * s,
                                freq: t.freq,
                                kind: t.kind,
                            })
                            .collect(),
                    ),
                    Wave::Poly(coeffs) => {
                        Wave::Poly(coeffs.iter().map(|&z| z * s).collect())
                    }
                    Wave::Exp { amp, freq } => Wave::Exp {
                        amp: *amp * s,
                        freq: *freq,
                    },
                };
                BoxState::analytic(scaled, self.ell)
            }
            crate::boxmom::WaveSource::Grid(v) => {
                BoxState::from_grid(v.iter().map(|&z| z * s).collect(), self.ell)
            }
        }
    }
}
