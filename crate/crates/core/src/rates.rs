//! Grid-refinement study of the discrete identities that only hold up to
//! `O(h)`: Bianchi, Leibniz, and the Cartan and GCR residuals of sampled
//! immersions.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::LieAlgebra;
use crate::cclab::Verdict;
use crate::error::{Error, Result};
use crate::fit::convergence_order;
use crate::forms::{Form, Grid};
use crate::gauge::bianchi_residual;
use crate::immersion::{Analysis, Fixture};
use crate::parallel::par_map;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesConfig {
    pub sizes: Vec<usize>,
    pub min_order: f64,
    /// Residuals at or below this are treated as exact.
    pub floor: f64,
    pub algebra: String,
    pub fixtures: Vec<Fixture>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        RatesConfig {
            sizes: vec![16, 32, 64],
            min_order: 0.9,
            floor: 1e-11,
            algebra: "so:3".into(),
            fixtures: vec![
                Fixture::Cylinder,
                Fixture::Clifford,
                Fixture::Revolution { major: 2.0, minor: 1.0 },
                Fixture::Graph {
                    amplitude: 0.1,
                    wavevector: vec![1, 1],
                },
                Fixture::TwistedCorrugation {
                    amplitude: 0.3,
                    modulation: 0.5,
                    wavelength: 0.5,
                },
                Fixture::CliffordOscillation {
                    amplitude: 1.0,
                    wavelength: 0.5,
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub quantity: String,
    pub subject: String,
    pub size: usize,
    pub h: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub quantity: String,
    pub subject: String,
    /// Infinite when every residual is below the floor.
    #[serde(serialize_with = "finite_or_null")]
    pub order: f64,
    pub passed: bool,
}

fn finite_or_null<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatesReport {
    pub min_order: f64,
    pub rows: Vec<RateRow>,
    pub fits: Vec<RateFit>,
    pub verdict: Verdict,
}

impl RatesReport {
    pub const CSV_HEADER: &'static str = "quantity,subject,n,h,residual";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{:e},{:e}", r.quantity, r.subject, r.size, r.h, r.residual)?;
        }
        Ok(())
    }

    pub fn fit(&self, quantity: &str, subject: &str) -> Option<&RateFit> {
        self.fits.iter().find(|f| f.quantity == quantity && f.subject == subject)
    }
}

/// Smooth connection on `T³` used for the Bianchi rate.
pub fn smooth_connection(grid: &Grid, algebra: &Arc<LieAlgebra>) -> Result<Form> {
    Form::from_fn(grid, 1, algebra, |x, c, i| {
        let s: f64 = x.iter().sum();
        0.5 * (2.0 * PI * (s + 0.1 * (c + 3 * i) as f64)).sin() + 0.25 * (2.0 * PI * x[0] + i as f64).cos()
    })
}

fn leibniz_pair(grid: &Grid, algebra: &Arc<LieAlgebra>) -> Result<(Form, Form)> {
    let a = Form::from_fn(grid, 1, algebra, |x, c, i| {
        (2.0 * PI * (x[0] + 2.0 * x[1] + 0.2 * (c + i) as f64)).sin()
    })?;
    let b = Form::from_fn(grid, 1, algebra, |x, c, i| {
        (2.0 * PI * (x[2] - x[0] + 0.3 * (c * 2 + i) as f64)).cos()
    })?;
    Ok((a, b))
}

fn fixture_name(f: &Fixture) -> String {
    match f {
        Fixture::Affine { .. } => "affine",
        Fixture::Clifford => "clifford",
        Fixture::Revolution { .. } => "revolution",
        Fixture::Cylinder => "cylinder",
        Fixture::Graph { .. } => "graph",
        Fixture::Corrugation { .. } => "corrugation",
        Fixture::TwistedCorrugation { .. } => "twisted-corrugation",
        Fixture::CliffordOscillation { .. } => "clifford-oscillation",
    }
    .into()
}

const IMMERSION_QUANTITIES: [&str; 5] = ["structure", "cartan-lemma", "gauss", "codazzi", "ricci"];

fn immersion_residuals(f: &Fixture, size: usize) -> Result<[f64; 5]> {
    let grid = Grid::cube(f.base_dim(), size)?;
    let a = Analysis::new(&f.sample(&grid)?)?;
    let g = a.gcr(None)?;
    Ok([a.structure()?, a.cartan_lemma()?, g.gauss, g.codazzi, g.ricci])
}

/// Measures every residual on each grid size and fits its order in `h`.
pub fn refinement_rates(cfg: &RatesConfig, threads: usize) -> Result<RatesReport> {
    if cfg.sizes.len() < 2 || cfg.sizes.iter().any(|&n| n < 4) {
        return Err(Error::Config("rates need at least two grid sizes of 4 or more".into()));
    }
    let algebra = Arc::new(LieAlgebra::from_label(&cfg.algebra)?);
    let mut names: Vec<String> = cfg.fixtures.iter().map(fixture_name).collect();
    for i in 0..names.len() {
        let dup = names[..i].iter().filter(|n| **n == names[i]).count();
        if dup > 0 {
            names[i] = format!("{}-{}", names[i], dup + 1);
        }
    }

    let mut jobs: Vec<(Option<usize>, usize)> = Vec::new();
    for &n in &cfg.sizes {
        jobs.push((None, n));
        for k in 0..cfg.fixtures.len() {
            jobs.push((Some(k), n));
        }
    }
    let results = par_map(&jobs, threads, |&(job, n)| -> Result<Vec<RateRow>> {
        let row = |quantity: &str, subject: &str, residual: f64| RateRow {
            quantity: quantity.into(),
            subject: subject.into(),
            size: n,
            h: 1.0 / n as f64,
            residual,
        };
        match job {
            None => {
                let grid = Grid::cube(3, n)?;
                let bianchi = bianchi_residual(&smooth_connection(&grid, &algebra)?)?;
                let (a, b) = leibniz_pair(&grid, &algebra)?;
                Ok(vec![
                    row("bianchi", &cfg.algebra, bianchi),
                    row("leibniz", &cfg.algebra, a.leibniz_residual(&b)?),
                ])
            }
            Some(k) => {
                let r = immersion_residuals(&cfg.fixtures[k], n)?;
                Ok(IMMERSION_QUANTITIES
                    .iter()
                    .zip(r)
                    .map(|(q, v)| row(q, &names[k], v))
                    .collect())
            }
        }
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        (a.quantity.as_str(), a.subject.as_str(), a.size).cmp(&(b.quantity.as_str(), b.subject.as_str(), b.size))
    });

    let mut fits: Vec<RateFit> = Vec::new();
    for r in &rows {
        if fits.iter().any(|f| f.quantity == r.quantity && f.subject == r.subject) {
            continue;
        }
        let (h, e): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|s| s.quantity == r.quantity && s.subject == r.subject)
            .map(|s| (s.h, s.residual))
            .unzip();
        let order = convergence_order(&h, &e, cfg.floor);
        fits.push(RateFit {
            quantity: r.quantity.clone(),
            subject: r.subject.clone(),
            order,
            passed: order >= cfg.min_order,
        });
    }
    let verdict = if fits.iter().all(|f| f.passed) {
        Verdict::Pass
    } else {
        Verdict::Fails
    };
    Ok(RatesReport {
        min_order: cfg.min_order,
        rows,
        fits,
        verdict,
    })
}
