//! Randomized checks of the identities that hold exactly on the lattice.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraElement, AlgebraLabel, LieAlgebra};
use crate::cclab::Verdict;
use crate::error::{Error, Result};
use crate::forms::{Form, Grid};
use crate::hodge::laplacian;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentityConfig {
    pub dim: usize,
    pub grid_size: usize,
    pub cases: usize,
    /// Largest accepted relative residual.
    pub tolerance: f64,
    /// Algebras cycled through case by case.
    pub algebras: Vec<String>,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig {
            dim: 3,
            grid_size: 16,
            cases: 1000,
            tolerance: 1e-12,
            algebras: vec!["so:3".into(), "so:4".into(), "abelian:2".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub cases: usize,
    pub max_residual: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub tolerance: f64,
    pub checks: Vec<IdentityCheck>,
    pub verdict: Verdict,
}

impl IdentityReport {
    pub const CSV_HEADER: &'static str = "check,cases,max_residual,tolerance,passed";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for c in &self.checks {
            writeln!(w, "{},{},{:e},{:e},{}", c.name, c.cases, c.max_residual, self.tolerance, c.passed)?;
        }
        Ok(())
    }
}

pub const CHECKS: [&str; 6] = [
    "d-squared",
    "adjointness",
    "graded-antisymmetry",
    "jacobi-ad-invariance",
    "laplacian-commutes-with-d",
    "star-involution",
];

fn random_form(grid: &Grid, degree: usize, alg: &Arc<LieAlgebra>, rng: &mut ChaCha8Rng) -> Result<Form> {
    let len = Form::zeros(grid, degree, alg)?.data().len();
    Form::from_data(grid, degree, alg, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn random_element(dim: usize, rng: &mut ChaCha8Rng) -> AlgebraElement {
    AlgebraElement((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Runs every check `cases` times with fresh random data and reports the
/// largest relative residual of each.
pub fn identity_suite(cfg: &IdentityConfig, seed: u64) -> Result<IdentityReport> {
    if cfg.dim == 0 || cfg.cases == 0 || cfg.algebras.is_empty() || !(cfg.tolerance > 0.0) {
        return Err(Error::Config("identity suite needs dim, cases, algebras and a tolerance".into()));
    }
    let grid = Grid::cube(cfg.dim, cfg.grid_size)?;
    let algebras = cfg
        .algebras
        .iter()
        .map(|s| LieAlgebra::from_label(s).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let n = cfg.dim;
    let d_norm: f64 = (0..n).map(|i| 2.0 / grid.spacing(i)).sum::<f64>().powi(2);
    let mut worst = [0.0f64; 6];
    let mut counts = [0usize; 6];
    for case in 0..cfg.cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(case as u64));
        let alg = &algebras[case % algebras.len()];
        let mut record = |k: usize, r: f64| {
            worst[k] = worst[k].max(r);
            counts[k] += 1;
        };

        if n >= 2 {
            let a = random_form(&grid, rng.gen_range(0..=n - 2), alg, &mut rng)?;
            record(0, a.d()?.d()?.l2_norm() / (a.l2_norm() * d_norm));
        }

        let k = rng.gen_range(0..n);
        let a = random_form(&grid, k, alg, &mut rng)?;
        let b = random_form(&grid, k + 1, alg, &mut rng)?;
        let (da, db) = (a.d()?, b.codiff()?);
        let lhs = da.pairing(&b)?;
        let rhs = a.pairing(&db)?;
        record(1, ratio((lhs - rhs).abs(), da.l2_norm() * b.l2_norm() + a.l2_norm() * db.l2_norm()));

        let p = rng.gen_range(0..=n);
        let q = rng.gen_range(0..=n - p);
        let a = random_form(&grid, p, alg, &mut rng)?;
        let b = random_form(&grid, q, alg, &mut rng)?;
        let ab = a.wedge_bracket(&b)?;
        let ba = b.wedge_bracket(&a)?;
        let sign = if (p * q) % 2 == 0 { -1.0 } else { 1.0 };
        record(2, ratio(ab.lin_comb(1.0, &ba, -sign)?.l2_norm(), ab.l2_norm() + ba.l2_norm()));

        let dim = alg.dim();
        let (x, y, z) = (
            random_element(dim, &mut rng),
            random_element(dim, &mut rng),
            random_element(dim, &mut rng),
        );
        let size = x.norm() * y.norm() * z.norm();
        let mut r = alg.jacobi_residual(&x, &y, &z)? / size;
        if !matches!(alg.label(), AlgebraLabel::SoIndefinite(..)) {
            let inv = alg.inner(&alg.bracket(&z, &x)?, &y)? + alg.inner(&x, &alg.bracket(&z, &y)?)?;
            r = r.max(inv.abs() / size);
        }
        record(3, r);

        let a = random_form(&grid, rng.gen_range(0..n), alg, &mut rng)?;
        let lhs = laplacian(&a.d()?)?;
        let rhs = laplacian(&a)?.d()?;
        record(4, ratio(lhs.sub(&rhs)?.l2_norm(), lhs.l2_norm() + rhs.l2_norm()));

        let k = rng.gen_range(0..=n);
        let a = random_form(&grid, k, alg, &mut rng)?;
        let sign = if (k * (n - k)).is_multiple_of(2) { 1.0 } else { -1.0 };
        record(5, a.star().star().lin_comb(1.0, &a, -sign)?.l2_norm() / a.l2_norm());
    }
    let checks: Vec<IdentityCheck> = CHECKS
        .iter()
        .enumerate()
        .map(|(k, name)| IdentityCheck {
            name: (*name).into(),
            cases: counts[k],
            max_residual: worst[k],
            passed: worst[k] <= cfg.tolerance,
        })
        .collect();
    let verdict = if checks.iter().all(|c| c.passed) {
        Verdict::Pass
    } else {
        Verdict::Fails
    };
    Ok(IdentityReport {
        tolerance: cfg.tolerance,
        checks,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let cfg = IdentityConfig {
            grid_size: 4,
            cases: 30,
            ..IdentityConfig::default()
        };
        let r = identity_suite(&cfg, 1).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.checks.iter().all(|c| c.cases == 30));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }

    #[test]
    fn indefinite_algebra_skips_invariance_only() {
        let cfg = IdentityConfig {
            dim: 2,
            grid_size: 4,
            cases: 10,
            algebras: vec!["so:2,1".into()],
            ..IdentityConfig::default()
        };
        assert_eq!(identity_suite(&cfg, 0).unwrap().verdict, Verdict::Pass);
    }
}
