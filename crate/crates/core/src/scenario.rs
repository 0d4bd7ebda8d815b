//! JSON scenario configs, the check pipeline and machine-readable reports.
//!
//! Checks run in dependency order — state, decomposition, diagonal,
//! measure, oracle — and a failure in one stage marks every selected check
//! of the later stages as skipped.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, volume_structure, QmsAnalysis, VolumeStructure};
use crate::check::CheckReport;
use crate::diagonal::{self, build_diagonal, diagonal_ce, DiagonalBasis, DiagonalCE};
use crate::matrixalg::{c, kron_all, max_abs, random, CMatrix, SiteSpec, Tolerance};
use crate::measure::{markov_measure, MarkovMeasure};
use crate::models::{self, ExplicitParams};
use crate::potential::{self, decompose_potential, PotentialDecomposition};
use crate::qms::{check_markov_state, finite_volume_state, QmsSpec};
use crate::subalgebra::ce_axioms;
use crate::tree::{build_tree, TreeGraph, VertexId};
use crate::{oracle, Error};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest tree depth a config may ask for.
pub const MAX_DEPTH: usize = 8;

/// Largest dense volume dimension a scenario will build.
pub const MAX_VOLUME_DIM: usize = 4096;

/// Seeded random observables per sampled check.
const SAMPLES: usize = 100;

/// Rows of `[re, im]` pairs.
pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub successors: Vec<usize>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionConfig {
    /// Path from the root with children numbered from 1: `[]` is the root,
    /// `[1, 2]` the second child of its first child.
    pub vertex: Vec<u32>,
    pub kraus: Vec<JsonMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Product {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        root_state: Option<JsonMatrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        site_state: Option<JsonMatrix>,
    },
    ClassicalKernel {
        kernel: Vec<Vec<f64>>,
        initial: Vec<f64>,
    },
    EntangledFixture {
        /// Weights of `Φ+, Φ−, Ψ+, Ψ−`; ignored when `psi` is given.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bell_weights: Option<[f64; 4]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        psi: Option<JsonMatrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        root_state: Option<JsonMatrix>,
    },
    Explicit {
        root_state: JsonMatrix,
        transitions: Vec<TransitionConfig>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    MarkovState,
    #[serde(rename = "prop_phiE")]
    PropPhiE,
    Commutation,
    Reconstruction,
    Diagonalizability,
    MeasureMarkov,
    Factorization,
    OracleCrosscheck,
}

impl CheckName {
    pub const ALL: [CheckName; 8] = [
        CheckName::MarkovState,
        CheckName::PropPhiE,
        CheckName::Commutation,
        CheckName::Reconstruction,
        CheckName::Diagonalizability,
        CheckName::MeasureMarkov,
        CheckName::Factorization,
        CheckName::OracleCrosscheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::MarkovState => "markov_state",
            CheckName::PropPhiE => "prop_phiE",
            CheckName::Commutation => "commutation",
            CheckName::Reconstruction => "reconstruction",
            CheckName::Diagonalizability => "diagonalizability",
            CheckName::MeasureMarkov => "measure_markov",
            CheckName::Factorization => "factorization",
            CheckName::OracleCrosscheck => "oracle_crosscheck",
        }
    }

    /// 0 state, 1 decomposition, 2 diagonal, 3 measure, 4 oracle.
    pub fn stage(self) -> usize {
        match self {
            CheckName::MarkovState => 0,
            CheckName::PropPhiE | CheckName::Commutation | CheckName::Reconstruction => 1,
            CheckName::Diagonalizability => 2,
            CheckName::MeasureMarkov | CheckName::Factorization => 3,
            CheckName::OracleCrosscheck => 4,
        }
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            CheckName::Diagonalizability | CheckName::Reconstruction => 1e-8,
            _ => 1e-9,
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        CheckName::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| format!("unknown check {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Required except for the entangled fixture, whose tree is fixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeConfig>,
    /// Site dimensions by vertex index; required for explicit models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<usize>>,
    pub model: ModelConfig,
    /// Volume `Λ_[0,n]` the checks run on.
    pub n: usize,
    #[serde(default)]
    pub tolerances: BTreeMap<CheckName, f64>,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to every check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<CheckName>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    /// Unreadable or invalid configuration (exit code 2).
    Config(String),
    /// The numerics could not proceed, e.g. a non-faithful state (exit 3).
    Numerical(Error),
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 2,
            ScenarioError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Config(m) => write!(f, "config error: {m}"),
            ScenarioError::Numerical(e) => write!(f, "numerical failure: {e}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

fn config_err(field: &str, e: impl fmt::Display) -> ScenarioError {
    ScenarioError::Config(format!("{field}: {e}"))
}

/// Model-building errors that stem from the input data are config errors.
fn classify(field: &str, e: Error) -> ScenarioError {
    match e {
        Error::InvalidModel(_)
        | Error::Tree(_)
        | Error::Malformed(_)
        | Error::MissingTransition(_)
        | Error::Volume { .. }
        | Error::DimensionCap { .. } => config_err(field, e),
        other => ScenarioError::Numerical(other),
    }
}

fn numerical(e: Error) -> ScenarioError {
    ScenarioError::Numerical(e)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))
}

pub fn matrix_from_json(field: &str, m: &JsonMatrix) -> Result<CMatrix, ScenarioError> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return Err(config_err(field, "matrix is empty"));
    }
    if let Some(k) = m.iter().position(|r| r.len() != cols) {
        return Err(config_err(field, format!("row {k} has {} entries, expected {cols}", m[k].len())));
    }
    if m.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(config_err(field, "entries must be finite"));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| c(m[i][j][0], m[i][j][1])))
}

pub fn matrix_to_json(m: &CMatrix) -> JsonMatrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

fn config_tree(cfg: &ScenarioConfig) -> Result<TreeGraph, ScenarioError> {
    let t = cfg.tree.as_ref().ok_or_else(|| config_err("tree", "required for this model kind"))?;
    if t.depth > MAX_DEPTH {
        return Err(config_err("tree.depth", format!("{} exceeds the cap {MAX_DEPTH}", t.depth)));
    }
    build_tree(&t.successors, t.depth).map_err(|e| config_err("tree", e))
}

/// Validates the config and instantiates the model.
pub fn build_spec(cfg: &ScenarioConfig) -> Result<QmsSpec, ScenarioError> {
    let spec = match &cfg.model {
        ModelConfig::Product { root_state, site_state } => {
            let tree = config_tree(cfg)?;
            let mut params = models::default_product_params();
            if let Some(m) = root_state {
                params.root_state = matrix_from_json("model.root_state", m)?;
            }
            if let Some(m) = site_state {
                params.site_state = matrix_from_json("model.site_state", m)?;
            }
            models::make_product_model(&tree, &params).map_err(|e| classify("model", e))?
        }
        ModelConfig::ClassicalKernel { kernel, initial } => {
            let tree = config_tree(cfg)?;
            models::make_classical_kernel_model(&tree, kernel, initial).map_err(|e| classify("model.kernel", e))?
        }
        ModelConfig::EntangledFixture { bell_weights, psi, root_state } => {
            if let Some(t) = &cfg.tree {
                if t.successors != [1] || t.depth != 1 {
                    return Err(config_err("tree", "the entangled fixture has one child and depth 1"));
                }
            }
            let mut params = models::default_entangled_params();
            if let Some(w) = bell_weights {
                params.psi = models::bell_diagonal(*w);
            }
            if let Some(m) = psi {
                params.psi = matrix_from_json("model.psi", m)?;
            }
            if let Some(m) = root_state {
                params.root_state = matrix_from_json("model.root_state", m)?;
            }
            models::make_entangled_fixture(&params).map_err(|e| classify("model", e))?
        }
        ModelConfig::Explicit { root_state, transitions } => {
            let tree = config_tree(cfg)?;
            let dims = cfg.sites.clone().ok_or_else(|| config_err("sites", "required for explicit models"))?;
            let sites = SiteSpec::new(dims).map_err(|e| config_err("sites", e))?;
            let mut ts = Vec::with_capacity(transitions.len());
            for (k, t) in transitions.iter().enumerate() {
                let kraus = t
                    .kraus
                    .iter()
                    .enumerate()
                    .map(|(j, m)| matrix_from_json(&format!("model.transitions[{k}].kraus[{j}]"), m))
                    .collect::<Result<Vec<_>, _>>()?;
                ts.push((VertexId(t.vertex.clone()), kraus));
            }
            let params = ExplicitParams { root_state: matrix_from_json("model.root_state", root_state)?, transitions: ts };
            models::make_explicit_model(&tree, sites, &params).map_err(|e| classify("model", e))?
        }
    };
    if let Some(dims) = &cfg.sites {
        if dims.as_slice() != spec.sites().dims() {
            return Err(config_err("sites", format!("{dims:?} does not match the model's {:?}", spec.sites().dims())));
        }
    }
    if cfg.n > spec.tree().depth() {
        return Err(config_err("n", format!("volume {} exceeds tree depth {}", cfg.n, spec.tree().depth())));
    }
    let dim = spec.volume_dim(cfg.n);
    if dim > MAX_VOLUME_DIM {
        return Err(config_err("n", format!("volume dimension {dim} exceeds the cap {MAX_VOLUME_DIM}")));
    }
    Ok(spec)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides every tolerance.
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub checks: Option<Vec<CheckName>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: CheckName,
    pub status: Status,
    pub tolerance: f64,
    pub max_deviation: Option<f64>,
    pub worst: Option<String>,
    pub items: Vec<(String, f64)>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub version: String,
    pub name: String,
    pub pass: bool,
    pub n: usize,
    pub volume_dim: usize,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub config: ScenarioConfig,
    pub wall_time_ms: f64,
}

impl Report {
    /// The report as JSON with every wall-time field zeroed, for
    /// reproducibility comparisons.
    pub fn without_timings(&self) -> Report {
        let mut r = self.clone();
        r.wall_time_ms = 0.0;
        for ch in &mut r.checks {
            ch.wall_time_ms = 0.0;
        }
        r
    }

    pub fn check(&self, name: CheckName) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Everything the checks are computed from, built once per scenario.
pub struct Pipeline {
    pub spec: QmsSpec,
    pub n: usize,
    pub seed: u64,
    pub density: CMatrix,
    pub analysis: QmsAnalysis,
    pub volume: VolumeStructure,
    pub decomposition: PotentialDecomposition,
    pub basis: DiagonalBasis,
    pub diagonal: DiagonalCE,
    /// `𝔈` on the next smaller volume, for the compatibility check.
    pub coarse: Option<DiagonalCE>,
    pub measure: MarkovMeasure,
}

fn diagonal_for(spec: &QmsSpec, analysis: &QmsAnalysis, n: usize, seed: u64, tol: &Tolerance)
    -> crate::Result<(VolumeStructure, PotentialDecomposition, DiagonalBasis, DiagonalCE)> {
    let vol = volume_structure(spec, analysis, n)?;
    let d = decompose_potential(spec, analysis, &vol, tol)?;
    let basis = build_diagonal(&d, seed)?;
    let dce = diagonal_ce(analysis, &vol, &basis)?;
    Ok((vol, d, basis, dce))
}

impl Pipeline {
    pub fn build(spec: QmsSpec, n: usize, seed: u64) -> crate::Result<Pipeline> {
        let tol = Tolerance::default();
        let density = finite_volume_state(&spec, n)?;
        let analysis = analyze(&spec, n, &tol, seed)?;
        let (volume, decomposition, basis, diagonal) = diagonal_for(&spec, &analysis, n, seed, &tol)?;
        let coarse = if n > 0 { Some(diagonal_for(&spec, &analysis, n - 1, seed, &tol)?.3) } else { None };
        let measure = markov_measure(&spec, &volume, &basis, &diagonal, &density)?;
        Ok(Pipeline { spec, n, seed, density, analysis, volume, decomposition, basis, diagonal, coarse, measure })
    }

    pub fn run_check(&self, name: CheckName, tol: f64) -> crate::Result<CheckReport> {
        let spec = &self.spec;
        let n = self.n;
        match name {
            CheckName::MarkovState => check_markov_state(spec, n, tol),
            CheckName::PropPhiE => diagonal::check_prop_phi_e(spec, &self.analysis, n, tol),
            CheckName::Commutation => potential::check_commutation(spec, &self.decomposition, tol),
            CheckName::Reconstruction => {
                let mtol = Tolerance::default();
                let mut r = potential::check_reconstruction(spec, &self.decomposition, tol, &mtol)?;
                let restricted = potential::check_restricted_potential(
                    spec,
                    &self.analysis,
                    &self.volume,
                    &self.decomposition,
                    tol,
                    &mtol,
                )?;
                r.absorb("restricted ", &restricted);
                Ok(r)
            }
            CheckName::Diagonalizability => {
                let masses = self.measure.direct.clone();
                let mut r = diagonal::check_diagonalizability(&self.density, &self.diagonal, &masses, SAMPLES, self.seed, tol);
                r.record("eigenbasis residual", self.basis.residual(&self.decomposition));
                r.absorb("𝔈 ", &self.diagonal.check_axioms(10, self.seed, tol));
                if let Some(coarse) = &self.coarse {
                    let compat = diagonal::check_compatibility(spec, &self.analysis, coarse, &self.diagonal, 20, self.seed, tol)?;
                    r.absorb("", &compat);
                }
                Ok(r)
            }
            CheckName::MeasureMarkov => Ok(self.measure.check_markov_property(tol)),
            CheckName::Factorization => Ok(self.measure.check_factorization(tol)),
            CheckName::OracleCrosscheck => self.oracle_crosscheck(tol),
        }
    }

    /// Fast path against the direct computations of [`oracle`].
    pub fn oracle_crosscheck(&self, tol: f64) -> crate::Result<CheckReport> {
        let spec = &self.spec;
        let n = self.n;
        let mut r = CheckReport::new("oracle_crosscheck", tol);
        let ball = spec.ball(n);
        let dims = spec.sites().dims_of(&ball);
        let mut rng = random::rng(self.seed ^ 0x0c1e);
        let mut eval: f64 = 0.0;
        for _ in 0..20 {
            let obs: Vec<CMatrix> = dims
                .iter()
                .map(|&d| random::observable(d, &mut rng))
                .collect();
            let fast = crate::matrixalg::trace_product(&self.density, &kron_all(&obs));
            let slow = oracle::oracle_state_eval(spec, n, &obs)?;
            eval = eval.max((fast - slow).norm());
        }
        r.record("state evaluation", eval);
        if self.density.nrows() <= oracle::DENSITY_CAP {
            r.record("density", max_abs(&(oracle::oracle_density(spec, n)? - &self.density)));
        }
        let slow = oracle::oracle_measure(&self.density, &self.diagonal);
        let fast = self.measure.factorized().unwrap_or_else(|| self.measure.direct.clone());
        r.record("measure", slow.iter().zip(&fast).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
        let mut diag_dev: f64 = 0.0;
        for _ in 0..5 {
            let a = random::observable(self.density.nrows(), &mut rng);
            diag_dev = diag_dev.max(max_abs(&(oracle::oracle_diagonal_apply(&self.diagonal, &a) - self.diagonal.apply(&a))));
        }
        r.record("𝔈 action", diag_dev);
        if self.diagonal.dim() <= oracle::AXIOM_CAP {
            let ax = oracle::oracle_ce_axioms(&self.diagonal.as_cpmap(oracle::AXIOM_CAP)?)?;
            r.record("𝔈 axioms", ax.max_violation());
        }
        let mtol = Tolerance::default();
        for &x in &ball {
            if spec.tree().level_of(x) >= n || spec.tree().is_leaf(x) {
                continue;
            }
            let e = spec.transition(x);
            if e.din() > oracle::AXIOM_CAP {
                continue;
            }
            let slow = oracle::oracle_ce_axioms(e)?;
            let fast = ce_axioms(e, &mtol)?;
            let label = spec.tree().vertex(x);
            r.record(format!("ℰ axioms {label}"), slow.max_violation());
            r.record(format!("ℰ axioms fast vs oracle {label}"), (slow.max_violation() - fast.max_violation()).abs());
            let pin = diagonal::pinching(&self.analysis.vertices[x].blocks)?;
            r.record(format!("E axioms {label}"), oracle::oracle_ce_axioms(&pin)?.max_violation());
        }
        Ok(r)
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs a parsed config; deterministic given config and seed.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Report, ScenarioError> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(ch) = &opts.checks {
        cfg.checks = Some(ch.clone());
    }
    if let Some(t) = opts.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(config_err("--tol", "must be a positive number"));
        }
        cfg.tolerances = CheckName::ALL.iter().map(|&c| (c, t)).collect();
    }
    if let Some((name, t)) = cfg.tolerances.iter().find(|(_, t)| !(t.is_finite() && **t > 0.0)) {
        return Err(config_err(&format!("tolerances.{name}"), format!("{t} is not a positive number")));
    }
    let spec = build_spec(&cfg)?;
    let volume_dim = spec.volume_dim(cfg.n);
    let pipeline = Pipeline::build(spec, cfg.n, cfg.seed).map_err(numerical)?;

    let mut selected: Vec<CheckName> = cfg.checks.clone().unwrap_or_else(|| CheckName::ALL.to_vec());
    selected.sort();
    selected.dedup();
    let mut checks = Vec::with_capacity(selected.len());
    let mut failed_stage: Option<usize> = None;
    for name in selected {
        let tol = cfg.tolerances.get(&name).copied().unwrap_or_else(|| name.default_tolerance());
        if failed_stage.is_some_and(|s| s < name.stage()) {
            checks.push(CheckResult {
                name,
                status: Status::Skipped,
                tolerance: tol,
                max_deviation: None,
                worst: None,
                items: Vec::new(),
                wall_time_ms: 0.0,
            });
            continue;
        }
        let t0 = Instant::now();
        let rep = pipeline.run_check(name, tol).map_err(numerical)?;
        if !rep.passed {
            failed_stage = Some(failed_stage.map_or(name.stage(), |s| s.min(name.stage())));
        }
        checks.push(CheckResult {
            name,
            status: if rep.passed { Status::Pass } else { Status::Fail },
            tolerance: tol,
            max_deviation: Some(rep.max_deviation),
            worst: rep.worst,
            items: rep.items,
            wall_time_ms: elapsed_ms(t0),
        });
    }
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        name: cfg.name.clone(),
        pass: checks.iter().all(|c| c.status == Status::Pass),
        n: cfg.n,
        volume_dim,
        seed: cfg.seed,
        checks,
        config: cfg,
        wall_time_ms: elapsed_ms(start),
    })
}

/// Bundled configs: `(name, json)`.
pub const FIXTURES: [(&str, &str); 5] = [
    ("product", include_str!("../fixtures/product.json")),
    ("product_depth3", include_str!("../fixtures/product_depth3.json")),
    ("kernel_binary_depth2", include_str!("../fixtures/kernel_binary_depth2.json")),
    ("entangled", include_str!("../fixtures/entangled.json")),
    ("explicit_hybrid_chain", include_str!("../fixtures/explicit_hybrid_chain.json")),
];

pub fn fixture(name: &str) -> Option<ScenarioConfig> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, text)| parse_config(text).expect("bundled fixtures parse"))
}

/// Names and one-line descriptions of the bundled configs.
pub fn list_fixtures() -> Vec<(String, String)> {
    FIXTURES
        .iter()
        .map(|(name, text)| (name.to_string(), parse_config(text).expect("bundled fixtures parse").description))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_parses_and_builds() {
        assert!(list_fixtures().len() >= 3);
        for (name, _) in list_fixtures() {
            let cfg = fixture(&name).unwrap();
            assert_eq!(cfg.name, name);
            build_spec(&cfg).unwrap();
        }
    }

    #[test]
    fn check_names_round_trip() {
        for c in CheckName::ALL {
            assert_eq!(c.as_str().parse::<CheckName>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
        }
        assert!("nope".parse::<CheckName>().is_err());
    }

    #[test]
    fn bad_kernel_row_is_a_config_error() {
        let mut cfg = fixture("kernel_binary_depth2").unwrap();
        cfg.model = ModelConfig::ClassicalKernel { kernel: vec![vec![0.5, 0.4], vec![0.3, 0.7]], initial: vec![0.5, 0.5] };
        let err = run_scenario(&cfg, &RunOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("model.kernel") && err.to_string().contains("row 0"), "{err}");
    }

    #[test]
    fn non_faithful_state_is_a_numerical_failure() {
        let mut cfg = fixture("product").unwrap();
        cfg.model = ModelConfig::Product {
            root_state: None,
            site_state: Some(vec![vec![[1.0, 0.0], [0.0, 0.0]], vec![[0.0, 0.0], [0.0, 0.0]]]),
        };
        let err = run_scenario(&cfg, &RunOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }

    #[test]
    fn malformed_json_and_caps() {
        assert_eq!(parse_config("{").unwrap_err().exit_code(), 2);
        let mut cfg = fixture("product").unwrap();
        cfg.n = 7;
        assert_eq!(build_spec(&cfg).unwrap_err().exit_code(), 2);
        cfg.n = 2;
        cfg.tree = Some(TreeConfig { successors: vec![4; 21], depth: 3 });
        assert!(build_spec(&cfg).unwrap_err().to_string().contains("cap"));
    }

    #[test]
    fn failed_prerequisite_skips_later_stages() {
        let cfg = fixture("entangled").unwrap();
        let opts = RunOptions {
            tol: Some(1e-300),
            checks: Some(vec![CheckName::MarkovState, CheckName::Diagonalizability, CheckName::Factorization]),
            ..Default::default()
        };
        let report = run_scenario(&cfg, &opts).unwrap();
        assert!(!report.pass);
        let statuses: Vec<Status> = report.checks.iter().map(|c| c.status).collect();
        if statuses[0] == Status::Fail {
            assert_eq!(&statuses[1..], &[Status::Skipped, Status::Skipped]);
        }
        assert!(statuses.contains(&Status::Fail));
    }
}
