//! End-to-end acceptance run. Prints one line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cartanlab::hodge::{hodge_decompose, HodgeSolveConfig};
use cartanlab::{Form, Grid, LieAlgebra, TestFormBank};
use serde_json::Value;

const SHIPPED: [&str; 12] = [
    "identities",
    "divcurl_witness",
    "divcurl_counterexample",
    "curvature_limit",
    "ym_relax",
    "ym_weak_so3",
    "ym_weak_abelian",
    "immersion_clifford",
    "immersion_twisted",
    "corrugation",
    "equi_int",
    "rates",
];

struct Run {
    exit: i32,
    csv: Vec<u8>,
    summary: Vec<u8>,
    elapsed: Duration,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.summary).expect("summary is JSON")
    }
}

struct Runner {
    scratch: tempfile::TempDir,
    first: BTreeMap<String, Run>,
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"))
}

impl Runner {
    fn exec(&self, name: &str, threads: usize, tag: &str) -> Run {
        let out = self.scratch.path().join(format!("{name}-{tag}"));
        let start = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_cartanlab"))
            .args(["run", "--config"])
            .arg(config_path(name))
            .arg("--out")
            .arg(&out)
            .args(["--threads", &threads.to_string()])
            .env_remove("CARTANLAB_THREADS")
            .output()
            .expect("binary runs");
        let elapsed = start.elapsed();
        let read = |f: &str| std::fs::read(out.join(f)).unwrap_or_default();
        if status.status.code() == Some(1) {
            eprintln!("{name}: {}", String::from_utf8_lossy(&status.stderr));
        }
        Run {
            exit: status.status.code().unwrap_or(-1),
            csv: read("report.csv"),
            summary: read("summary.json"),
            elapsed,
        }
    }

    fn run(&mut self, name: &str) -> &Run {
        if !self.first.contains_key(name) {
            let r = self.exec(name, 1, "a");
            self.first.insert(name.into(), r);
        }
        &self.first[name]
    }
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().map(|a| a.iter().map(f).collect()).unwrap_or_default()
}

fn identity_suite(r: &mut Runner) -> Outcome {
    let run = r.run("identities");
    let s = run.json();
    let checks = s["report"]["checks"].as_array().cloned().unwrap_or_default();
    let worst = checks.iter().map(|c| f(&c["max_residual"])).fold(0.0, f64::max);
    let counts_ok = checks.len() == 6 && checks.iter().all(|c| c["cases"] == 1000);
    let cfg: Value = serde_json::from_slice(&std::fs::read(config_path("identities")).unwrap()).unwrap();
    let suite = &cfg["experiment"]["suite"];
    let shape_ok = suite["dim"] == 3 && suite["grid_size"] == 16;
    check(
        run.exit == 0 && counts_ok && shape_ok && worst <= 1e-12 && run.elapsed < Duration::from_secs(30),
        format!("6 checks x 1000 cases on T^3 N=16, worst relative residual {worst:.2e}"),
    )
}

fn hodge(_: &mut Runner) -> Outcome {
    let start = Instant::now();
    let cfg = HodgeSolveConfig::default();
    let g = Grid::cube(2, 64).unwrap();
    let so3 = Arc::new(LieAlgebra::from_label("so:3").unwrap());
    let mut recon = 0.0f64;
    let mut ortho = 0.0f64;
    for degree in [1, 2] {
        for tf in TestFormBank::new(2, degree, 3, 4, 11).unwrap().forms() {
            let shift = Form::constant(&g, degree, &so3, &vec![vec![0.3, -0.2, 0.1]; if degree == 1 { 2 } else { 1 }]).unwrap();
            let a = tf.sample(&g, &so3).unwrap().add(&shift).unwrap();
            let h = hodge_decompose(&a, &cfg).unwrap();
            let norm = a.l2_norm();
            recon = recon.max(h.reconstruction_residual / norm);
            let ex = h.exact_part().unwrap();
            for (x, y) in [(&ex, &h.rho), (&ex, &h.harmonic), (&h.rho, &h.harmonic)] {
                ortho = ortho.max(x.pairing(y).unwrap().abs() / (norm * norm));
            }
        }
    }
    // Exact, constant and coexact inputs land in their own slot.
    let phi = Form::from_fn(&g, 0, &so3, |x, _, a| (2.0 * PI * (x[0] + a as f64 * x[1])).sin()).unwrap();
    let exact = phi.d().unwrap();
    let h = hodge_decompose(&exact, &cfg).unwrap();
    let exact_err = (h.exact_part().unwrap().sub(&exact).unwrap().l2_norm() + h.rho.l2_norm() + h.harmonic.l2_norm())
        / exact.l2_norm();
    let constant = Form::constant(&g, 1, &so3, &[vec![0.7, 0.0, -0.1], vec![0.2, 0.4, 0.0]]).unwrap();
    let h = hodge_decompose(&constant, &cfg).unwrap();
    let const_err = (h.harmonic.sub(&constant).unwrap().l2_norm() + h.rho.l2_norm() + h.psi.l2_norm()) / constant.l2_norm();
    let beta = Form::from_fn(&g, 2, &so3, |x, _, a| (2.0 * PI * (2.0 * x[0] - x[1]) + a as f64).cos()).unwrap();
    let coexact = beta.codiff().unwrap();
    let h = hodge_decompose(&coexact, &cfg).unwrap();
    let coexact_err = (h.rho.sub(&coexact).unwrap().l2_norm() + h.exact_part().unwrap().l2_norm() + h.harmonic.l2_norm())
        / coexact.l2_norm();
    let fixtures = exact_err.max(const_err).max(coexact_err);
    let elapsed = start.elapsed();
    check(
        recon <= 10.0 * cfg.rel_tol && ortho <= 1e-8 && fixtures <= 1e-8 && elapsed < Duration::from_secs(30),
        format!(
            "T^2 N=64: reconstruction {recon:.1e} (limit {:.0e}), orthogonality {ortho:.1e}, fixture recovery {fixtures:.1e}, {:.1}s",
            10.0 * cfg.rel_tol,
            elapsed.as_secs_f64()
        ),
    )
}

fn rates(r: &mut Runner) -> Outcome {
    let run = r.run("rates");
    let s = run.json();
    let fits = s["report"]["fits"].as_array().cloned().unwrap_or_default();
    let fit = |q: &str, subj: &str| fits.iter().find(|x| x["quantity"] == q && x["subject"] == subj).cloned();
    let mut required = vec![("bianchi", "so:3"), ("leibniz", "so:3")];
    for subj in ["cylinder", "clifford", "revolution"] {
        for q in ["structure", "cartan-lemma", "gauss", "codazzi", "ricci"] {
            required.push((q, subj));
        }
    }
    let present = required.iter().all(|(q, s)| fit(q, s).is_some());
    // A null order means every residual sat below the roundoff floor.
    let order = |x: &Value| x["order"].as_f64().unwrap_or(f64::INFINITY);
    let worst = fits.iter().map(order).fold(f64::INFINITY, f64::min);
    let finite = fits.iter().filter(|x| x["order"].is_f64()).count();
    check(
        run.exit == 0 && present && worst >= 0.9 && run.elapsed < Duration::from_secs(180),
        format!(
            "{} fits over N in 16,32,64 ({finite} above the floor), lowest order {worst:.2}, {:.1}s",
            fits.len(),
            run.elapsed.as_secs_f64()
        ),
    )
}

fn divcurl_witness(r: &mut Runner) -> Outcome {
    let run = r.run("divcurl_witness");
    let s = run.json();
    let gap = f(&s["gap"]);
    let scale = f(&s["report"]["pairing_scale"]);
    check(
        run.exit == 0
            && s["verdict"] == "CONVERGES"
            && floats(&s["fitted_limit"]).len() == 8
            && gap <= 0.05 * scale
            && run.elapsed < Duration::from_secs(60),
        format!("gap {gap:.2e} vs 5% of scale {scale:.3}, {:.1}s", run.elapsed.as_secs_f64()),
    )
}

fn divcurl_counterexample(r: &mut Runner) -> Outcome {
    let run = r.run("divcurl_counterexample");
    let s = run.json();
    let so3 = LieAlgebra::from_label("so:3").unwrap();
    let bank = TestFormBank::new(2, 2, 3, 8, s["seed"].as_u64().unwrap()).unwrap();
    // sin² averages to ½ along the shared axis; [e₁, e₂] = e₃.
    let m = 64;
    let mut worst = 0.0f64;
    let gaps = floats(&s["report"]["gaps"]);
    for (tf, gap) in bank.forms().iter().zip(&gaps) {
        let mut integral = 0.0;
        for i in 0..m {
            for j in 0..m {
                integral += tf.eval(&[i as f64 / m as f64, j as f64 / m as f64], 0, 2, &[1.0, 1.0]);
            }
        }
        integral /= (m * m) as f64;
        let want = 0.5 * so3.scale() * integral.abs();
        worst = worst.max((gap - want).abs() / want.max(1e-12));
    }
    let surrogate = floats(&s["report"]["surrogate"]);
    check(
        run.exit == 2
            && s["verdict"] == "FAILS"
            && s["report"]["confinement"] == "non-decaying"
            && gaps.len() == 8
            && worst <= 0.05
            && run.elapsed < Duration::from_secs(60),
        format!(
            "exit {}, gaps within {:.2}% of the analytic value, surrogate {:.3} -> {:.3}",
            run.exit,
            100.0 * worst,
            surrogate.first().copied().unwrap_or(f64::NAN),
            surrogate.last().copied().unwrap_or(f64::NAN)
        ),
    )
}

fn curvature(r: &mut Runner) -> Outcome {
    let run = r.run("curvature_limit");
    let s = run.json();
    let l1 = floats(&s["report"]["lp_bounds"]);
    let (lo, hi) = (l1.iter().cloned().fold(f64::INFINITY, f64::min), l1.iter().cloned().fold(0.0, f64::max));
    let gap = f(&s["gap"]);
    let scale = f(&s["report"]["pairing_scale"]);
    check(
        run.exit == 0
            && s["verdict"] == "CONVERGES"
            && gap <= 0.05 * scale
            && s["report"]["lp_bounded"] == true
            && hi / lo <= 1.5
            && run.elapsed < Duration::from_secs(120),
        format!(
            "gap {gap:.2e} vs 5% of {scale:.3}, |Omega|_L1 table {:?}",
            l1.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn yang_mills(r: &mut Runner) -> Outcome {
    let start = Instant::now();
    let so3 = r.run("ym_weak_so3").json();
    let ab = r.run("ym_weak_abelian").json();
    let elapsed = start.elapsed();
    let limit = f(&so3["gap"]);
    let member = f(&so3["report"]["extras"]["max_member_weak_residual"]);
    let tol = (2.0 * member).max(1e-4);
    let abelian = f(&ab["gap"]);
    let cfg: Value = serde_json::from_slice(&std::fs::read(config_path("ym_weak_so3")).unwrap()).unwrap();
    check(
        cfg["experiment"]["settings"]["grid_size"] == 64
            && limit <= tol
            && abelian <= 1e-6
            && so3["report"]["lp_bounded"] == true
            && elapsed < Duration::from_secs(300),
        format!("so(3) limit residual {limit:.2e} <= {tol:.2e}, abelian {abelian:.1e}, {:.1}s", elapsed.as_secs_f64()),
    )
}

/// `K √det g = −(√E)''` for `E = 1 + (2πa c)²`, `c = 1 + b cos 2πy`.
fn twisted_gauss_density(a: f64, b: f64, y: f64) -> f64 {
    let w = 2.0 * PI;
    let s = w * a * (1.0 + b * (w * y).cos());
    let s1 = -w * a * b * w * (w * y).sin();
    let s2 = -w * a * b * w * w * (w * y).cos();
    let e = 1.0 + s * s;
    -((s1 * s1 + s * s2) / e.sqrt() - (s * s1).powi(2) / e.powf(1.5))
}

fn gcr(r: &mut Runner) -> Outcome {
    let start = Instant::now();
    let cliff = r.run("immersion_clifford");
    let (cliff_exit, cs) = (cliff.exit, cliff.json());
    let twist = r.run("immersion_twisted");
    let (twist_exit, ts) = (twist.exit, twist.json());
    let elapsed = start.elapsed();

    let cfg: Value = serde_json::from_slice(&std::fs::read(config_path("immersion_twisted")).unwrap()).unwrap();
    let fam = &cfg["experiment"]["sequence"]["family"];
    let (a, b) = (f(&fam["amplitude"]), f(&fam["modulation"]));
    let bank = TestFormBank::new(2, 2, 1, 8, ts["seed"].as_u64().unwrap()).unwrap();
    let m = 256;
    let oracle: Vec<f64> = bank
        .forms()
        .iter()
        .map(|tf| {
            let mut sum = 0.0;
            for j in 0..m {
                let y = j as f64 / m as f64;
                let dens = twisted_gauss_density(a, b, y);
                for i in 0..m {
                    sum += dens * tf.eval(&[i as f64 / m as f64, y], 0, 0, &[1.0, 1.0]);
                }
            }
            (sum / (m * m) as f64).abs()
        })
        .collect();
    let oracle_max = oracle.iter().cloned().fold(0.0, f64::max);
    let gaps = floats(&ts["report"]["gaps"]);
    let per_form = gaps.iter().zip(&oracle).map(|(g, o)| (g - o).abs()).fold(0.0, f64::max) / oracle_max;
    let gap_err = (f(&ts["gap"]) - oracle_max).abs() / oracle_max;

    let sep = f(&ts["report"]["extras"]["equi_spread"]) - f(&cs["report"]["extras"]["equi_spread"]);
    let cliff_gap = f(&cs["gap"]);
    let cliff_tol = f(&cs["tolerance"]);
    check(
        cliff_exit == 0
            && cs["verdict"] == "CONVERGES"
            && cliff_gap <= cliff_tol
            && twist_exit == 2
            && ts["verdict"] == "HYPOTHESIS_VIOLATION"
            && gap_err <= 0.10
            && per_form <= 0.10
            && sep >= 0.5
            && elapsed < Duration::from_secs(180),
        format!(
            "clifford gap {cliff_gap:.1e} <= {cliff_tol:.2}; twisted Gauss gap {:.3} vs oracle {oracle_max:.3} ({:.1}%, per form {:.1}%); equi separation {:.0}%, {:.1}s",
            f(&ts["gap"]),
            100.0 * gap_err,
            100.0 * per_form,
            100.0 * sep,
            elapsed.as_secs_f64()
        ),
    )
}

fn corrugation(r: &mut Runner) -> Outcome {
    let run = r.run("corrugation");
    let s = run.json();
    let growth = f(&s["report"]["mass_growth_exponent"]);
    let decay = f(&s["report"]["defect_order"]);
    check(
        run.exit == 0 && growth >= 0.9 && decay >= 0.9 && run.elapsed < Duration::from_secs(60),
        format!("mass growth exponent {growth:.3}, bounded-family defect order {decay:.3}"),
    )
}

fn determinism(r: &mut Runner) -> Outcome {
    let mut differing = Vec::new();
    for name in SHIPPED {
        r.run(name);
        let again = r.exec(name, 2, "b");
        let first = &r.first[name];
        if again.csv != first.csv || again.summary != first.summary || first.csv.is_empty() || again.exit != first.exit {
            differing.push(name);
        }
    }
    check(
        differing.is_empty(),
        format!("{} shipped configs rerun with 2 threads; differing: {differing:?}", SHIPPED.len()),
    )
}

fn main() {
    let mut runner = Runner {
        scratch: tempfile::tempdir().expect("scratch dir"),
        first: BTreeMap::new(),
    };
    let criteria: [(&str, fn(&mut Runner) -> Outcome); 10] = [
        ("exact identities", identity_suite),
        ("hodge decomposition", hodge),
        ("refinement rates", rates),
        ("div-curl witness", divcurl_witness),
        ("div-curl counterexample", divcurl_counterexample),
        ("curvature weak continuity", curvature),
        ("yang-mills weak continuity", yang_mills),
        ("gcr weak continuity", gcr),
        ("corrugation mechanism", corrugation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run(&mut runner);
        if !o.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<28} {} ({:.1}s) {}",
            k + 1,
            name,
            if o.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
