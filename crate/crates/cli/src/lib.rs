//! Config-driven runner behind the `cartanlab` binary.
//!
//! A run reads one JSON document, executes the experiment it names and
//! produces a CSV table plus a JSON summary. Both are pure functions of the
//! config bytes and the seed, so repeated runs are byte-identical whatever
//! the thread count.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cartanlab::cclab::{
    curvature_weak_limit_experiment, div_curl_experiment, equi_integrability_experiment,
    ym_weak_continuity_experiment, EquiIntConfig, LimitConfig, LimitReport, SequenceFamily, Verdict,
    YmWeakConfig,
};
use cartanlab::gauge::{ym_relax, ConnectionField};
use cartanlab::identities::{identity_suite, IdentityConfig};
use cartanlab::immersion::{corrugation_experiment, immersion_sequence_experiment, CorrugationConfig, ImmersionSequenceConfig};
use cartanlab::rates::{refinement_rates, RatesConfig};
use cartanlab::{Error, LieAlgebra, TestFormBank};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "cartanlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Top-level config document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for random banks and seed connections; `--seed` takes precedence.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub outputs: Outputs,
    pub experiment: Experiment,
}

/// File names written inside the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub csv: String,
    pub summary: String,
    /// Stem of the binary form snapshot, if the experiment produces one.
    pub snapshot: Option<String>,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            csv: "report.csv".into(),
            summary: "summary.json".into(),
            snapshot: None,
        }
    }
}

/// Random test-form bank. The seed defaults to the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankConfig {
    pub size: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig { size: 8, seed: None }
    }
}

fn so3() -> String {
    "so:3".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Identities {
        #[serde(default)]
        suite: IdentityConfig,
    },
    Divcurl {
        #[serde(default = "so3")]
        algebra: String,
        a: SequenceFamily,
        b: SequenceFamily,
        #[serde(default)]
        bank: BankConfig,
        #[serde(default)]
        limit: LimitConfig,
    },
    CurvatureLimit {
        #[serde(default = "so3")]
        algebra: String,
        family: SequenceFamily,
        #[serde(default)]
        bank: BankConfig,
        #[serde(default)]
        limit: LimitConfig,
    },
    YmRelax {
        #[serde(default = "so3")]
        algebra: String,
        dim: usize,
        grid_size: usize,
        seed_amplitude: f64,
        steps: usize,
        grad_tol: f64,
    },
    YmWeak {
        #[serde(default = "so3")]
        algebra: String,
        #[serde(default)]
        bank: BankConfig,
        #[serde(default)]
        settings: YmWeakConfig,
    },
    ImmersionSeq {
        #[serde(default)]
        bank: BankConfig,
        sequence: ImmersionSequenceConfig,
    },
    Corrugation {
        #[serde(default)]
        settings: CorrugationConfig,
    },
    EquiInt {
        #[serde(default = "so3")]
        algebra: String,
        settings: EquiIntConfig,
    },
    Rates {
        #[serde(default)]
        settings: RatesConfig,
    },
}

impl Experiment {
    pub fn id(&self) -> &'static str {
        match self {
            Experiment::Identities { .. } => "identities",
            Experiment::Divcurl { .. } => "divcurl",
            Experiment::CurvatureLimit { .. } => "curvature-limit",
            Experiment::YmRelax { .. } => "ym-relax",
            Experiment::YmWeak { .. } => "ym-weak",
            Experiment::ImmersionSeq { .. } => "immersion-seq",
            Experiment::Corrugation { .. } => "corrugation",
            Experiment::EquiInt { .. } => "equi-int",
            Experiment::Rates { .. } => "rates",
        }
    }
}

/// Errors surfaced by the runner; all map to exit code 1.
#[derive(Debug)]
pub enum RunError {
    Schema(serde_json::Error),
    Experiment(Error),
    Io(std::io::Error, PathBuf),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Schema(e) => write!(f, "invalid config (line {}, column {}): {e}", e.line(), e.column()),
            RunError::Experiment(e) => write!(f, "{e}"),
            RunError::Io(e, p) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Experiment(e)
    }
}

/// Machine-readable payload of a failed run, written to stderr.
pub fn error_payload(e: &RunError) -> Value {
    let kind = match e {
        RunError::Schema(_) => "schema",
        RunError::Io(..) => "io",
        RunError::Experiment(Error::Degenerate { .. } | Error::Frame { .. }) => "frame",
        RunError::Experiment(Error::Solver { .. } | Error::Flow { .. }) => "solver",
        RunError::Experiment(_) => "experiment",
    };
    let mut v = json!({ "error": kind, "message": e.to_string() });
    match e {
        RunError::Schema(s) => {
            v["line"] = json!(s.line());
            v["column"] = json!(s.column());
        }
        RunError::Experiment(Error::Degenerate { point, min_eigenvalue }) => {
            v["point"] = json!(point);
            v["min_eigenvalue"] = json!(min_eigenvalue);
        }
        RunError::Experiment(Error::Frame { point, .. }) => v["point"] = json!(point),
        RunError::Experiment(Error::Solver { iterations, residual }) => {
            v["iterations"] = json!(iterations);
            v["residual"] = json!(residual);
        }
        _ => {}
    }
    v
}

/// Everything a run produces, before it touches the file system.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub verdict: Verdict,
    pub csv: Vec<u8>,
    pub summary: Vec<u8>,
    /// Binary snapshot payload and its sidecar text.
    pub snapshot: Option<(Vec<u8>, String)>,
}

impl Outcome {
    /// 0 on PASS/CONVERGES, 2 on FAILS/HYPOTHESIS_VIOLATION.
    pub fn exit_code(&self) -> i32 {
        if self.verdict.is_success() {
            0
        } else {
            2
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, RunError> {
    serde_json::from_str(text).map_err(RunError::Schema)
}

pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn algebra(label: &str) -> Result<Arc<LieAlgebra>, RunError> {
    Ok(Arc::new(LieAlgebra::from_label(label)?))
}

fn bank(cfg: &BankConfig, n: usize, degree: usize, alg_dim: usize, seed: u64) -> Result<TestFormBank, RunError> {
    Ok(TestFormBank::new(n, degree, alg_dim, cfg.size, cfg.seed.unwrap_or(seed))?)
}

struct Produced {
    verdict: Verdict,
    csv: Vec<u8>,
    fitted_limit: Value,
    target: Value,
    gap: Value,
    tolerance: Value,
    report: Value,
    snapshot: Option<(Vec<u8>, String)>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize to JSON")
}

fn from_limit(r: &LimitReport) -> Result<Produced, RunError> {
    let mut csv = Vec::new();
    r.write_csv(&mut csv)?;
    Ok(Produced {
        verdict: r.verdict,
        csv,
        fitted_limit: to_value(&r.fitted_limit),
        target: to_value(&r.target),
        gap: to_value(&r.gap),
        tolerance: to_value(&r.tol_gap),
        report: to_value(r),
        snapshot: None,
    })
}

fn plain<T: Serialize>(verdict: Verdict, csv: Vec<u8>, report: &T) -> Produced {
    Produced {
        verdict,
        csv,
        fitted_limit: Value::Null,
        target: Value::Null,
        gap: Value::Null,
        tolerance: Value::Null,
        report: to_value(report),
        snapshot: None,
    }
}

fn execute(exp: &Experiment, seed: u64, threads: usize) -> Result<Produced, RunError> {
    match exp {
        Experiment::Identities { suite } => {
            let r = identity_suite(suite, seed)?;
            let mut csv = Vec::new();
            r.write_csv(&mut csv)?;
            let worst = r.checks.iter().fold(0.0f64, |m, c| m.max(c.max_residual));
            Ok(Produced {
                gap: to_value(&worst),
                tolerance: to_value(&r.tolerance),
                ..plain(r.verdict, csv, &r)
            })
        }
        Experiment::Divcurl { algebra: label, a, b, bank: bc, limit } => {
            let alg = algebra(label)?;
            let bank = bank(bc, a.dim, a.degree() + b.degree(), alg.dim(), seed)?;
            let cfg = LimitConfig { threads, ..limit.clone() };
            from_limit(&div_curl_experiment(a, b, &alg, &bank, &cfg)?)
        }
        Experiment::CurvatureLimit { algebra: label, family, bank: bc, limit } => {
            let alg = algebra(label)?;
            let bank = bank(bc, family.dim, 2, alg.dim(), seed)?;
            let cfg = LimitConfig { threads, ..limit.clone() };
            from_limit(&curvature_weak_limit_experiment(family, &alg, &bank, &cfg)?)
        }
        Experiment::YmRelax {
            algebra: label,
            dim,
            grid_size,
            seed_amplitude,
            steps,
            grad_tol,
        } => {
            let alg = algebra(label)?;
            let grid = cartanlab::Grid::cube(*dim, *grid_size)?;
            let a0 = TestFormBank::new(*dim, 1, alg.dim(), 1, seed)?.forms()[0]
                .sample(&grid, &alg)?
                .scaled(*seed_amplitude);
            let (a, trace) = ym_relax(&a0, *steps, *grad_tol)?;
            let last = *trace.last().expect("trace holds the initial state");
            let verdict = if last.residual_norm <= *grad_tol && trace.is_monotone() {
                Verdict::Pass
            } else {
                Verdict::Fails
            };
            let mut csv = Vec::new();
            trace.write_csv(&mut csv)?;
            let report = json!({
                "initial_energy": trace.records[0].energy,
                "final_energy": last.energy,
                "final_residual": last.residual_norm,
                "steps": last.step,
                "monotone": trace.is_monotone(),
                "energy_fresh": cartanlab::gauge::ym_energy(&a)?,
            });
            Ok(Produced {
                gap: to_value(&last.residual_norm),
                tolerance: to_value(grad_tol),
                snapshot: Some(snapshot(&a)?),
                ..plain(verdict, csv, &report)
            })
        }
        Experiment::YmWeak { algebra: label, bank: bc, settings } => {
            let alg = algebra(label)?;
            let bank = bank(bc, settings.dim, 1, alg.dim(), seed)?;
            from_limit(&ym_weak_continuity_experiment(&alg, settings, &bank, seed, threads)?)
        }
        Experiment::ImmersionSeq { bank: bc, sequence } => {
            let bank = bank(bc, 2, 2, 1, seed)?;
            from_limit(&immersion_sequence_experiment(sequence, &bank, threads)?)
        }
        Experiment::Corrugation { settings } => {
            let r = corrugation_experiment(settings, threads)?;
            let mut csv = Vec::new();
            r.write_csv(&mut csv)?;
            Ok(plain(r.verdict, csv, &r))
        }
        Experiment::EquiInt { algebra: label, settings } => {
            let r = equi_integrability_experiment(settings, &algebra(label)?, threads)?;
            let mut csv = Vec::new();
            r.write_csv(&mut csv)?;
            Ok(plain(r.verdict, csv, &r))
        }
        Experiment::Rates { settings } => {
            let r = refinement_rates(settings, threads)?;
            let mut csv = Vec::new();
            r.write_csv(&mut csv)?;
            Ok(Produced {
                tolerance: to_value(&r.min_order),
                ..plain(r.verdict, csv, &r)
            })
        }
    }
}

fn snapshot(a: &ConnectionField) -> Result<(Vec<u8>, String), RunError> {
    let mut payload = Vec::new();
    let mut meta = Vec::new();
    a.write(&mut payload, &mut meta)?;
    Ok((payload, String::from_utf8(meta).expect("sidecar is text")))
}

/// Runs a config document held in memory.
pub fn run_bytes(bytes: &[u8], seed: Option<u64>, threads: usize) -> Result<Outcome, RunError> {
    let text = std::str::from_utf8(bytes).map_err(|e| RunError::Experiment(Error::Format(e.to_string())))?;
    let cfg = parse_config(text)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let p = execute(&cfg.experiment, seed, threads.max(1))?;
    let summary = json!({
        "tool": TOOL,
        "version": VERSION,
        "experiment": cfg.experiment.id(),
        "config_sha256": config_hash(bytes),
        "seed": seed,
        "verdict": p.verdict,
        "fitted_limit": p.fitted_limit,
        "target": p.target,
        "gap": p.gap,
        "tolerance": p.tolerance,
        "report": p.report,
    });
    let mut summary = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    summary.push(b'\n');
    Ok(Outcome {
        verdict: p.verdict,
        csv: p.csv,
        summary,
        snapshot: p.snapshot,
    })
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(&path, bytes).map_err(|e| RunError::Io(e, path))
}

/// Reads `config`, runs it and writes the artifacts under `out`.
pub fn run_file(config: &Path, out: &Path, seed: Option<u64>, threads: usize) -> Result<Outcome, RunError> {
    let bytes = fs::read(config).map_err(|e| RunError::Io(e, config.to_path_buf()))?;
    let outputs = parse_config(std::str::from_utf8(&bytes).unwrap_or_default())
        .map(|c| c.outputs)
        .unwrap_or_default();
    let outcome = run_bytes(&bytes, seed, threads)?;
    fs::create_dir_all(out).map_err(|e| RunError::Io(e, out.to_path_buf()))?;
    write(out.join(&outputs.csv), &outcome.csv)?;
    write(out.join(&outputs.summary), &outcome.summary)?;
    if let (Some(stem), Some((payload, meta))) = (&outputs.snapshot, &outcome.snapshot) {
        write(out.join(format!("{stem}.bin")), payload)?;
        write(out.join(format!("{stem}.meta")), meta.as_bytes())?;
    }
    Ok(outcome)
}
