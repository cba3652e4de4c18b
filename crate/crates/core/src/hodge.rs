//! Hodge Laplacian, its conjugate-gradient inverse, and the Hodge
//! decomposition on periodic grids.
//!
//! `Δ = dδ + δd` built from the operators in [`crate::forms`] acts
//! componentwise as the `(2n+1)`-point second difference, so its kernel is the
//! constant-component forms. The decomposition therefore carries an explicit
//! harmonic part (the componentwise mean) next to the exact and co-exact parts.

use std::io::Write;

use crate::error::{Error, Result};
use crate::forms::Form;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HodgeSolveConfig {
    pub rel_tol: f64,
    /// `None` means `10 ×` the number of unknowns.
    pub max_iter: Option<usize>,
    /// Solve `(shift·I + Δ) x = b`; with `shift = 0` the mean is projected out.
    pub shift: f64,
}

impl Default for HodgeSolveConfig {
    fn default() -> Self {
        HodgeSolveConfig {
            rel_tol: 1e-10,
            max_iter: None,
            shift: 0.0,
        }
    }
}

impl HodgeSolveConfig {
    pub fn with_shift(self, shift: f64) -> Self {
        HodgeSolveConfig { shift, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("rel_tol must be positive".into()));
        }
        if self.max_iter == Some(0) {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if !(self.shift >= 0.0) {
            return Err(Error::Config("shift must be non-negative".into()));
        }
        Ok(())
    }
}

/// Result of a CG solve with its residual history.
#[derive(Clone, Debug)]
pub struct Solve {
    pub solution: Form,
    pub iterations: usize,
    /// Relative residual after each iteration (entry 0 is the initial one).
    pub history: Vec<f64>,
}

impl Solve {
    /// `iteration,residual` CSV.
    pub fn write_history_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,residual")?;
        for (i, r) in self.history.iter().enumerate() {
            writeln!(w, "{i},{r:e}")?;
        }
        Ok(())
    }
}

/// `Δα = dδα + δdα`; only the defined half is used in degrees 0 and n.
pub fn laplacian(alpha: &Form) -> Result<Form> {
    let n = alpha.grid().dim();
    let k = alpha.degree();
    let mut out = Form::zeros(alpha.grid(), k, alpha.algebra())?;
    if k < n {
        out.axpy(1.0, &alpha.d()?.codiff()?)?;
    }
    if k > 0 {
        out.axpy(1.0, &alpha.codiff()?.d()?)?;
    }
    Ok(out)
}

fn dot(a: &Form, b: &Form) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn apply(x: &Form, shift: f64) -> Result<Form> {
    let mut y = laplacian(x)?;
    if shift != 0.0 {
        y.axpy(shift, x)?;
    }
    Ok(y)
}

/// Solves `(shift + Δ) x = P b` by plain conjugate gradients, where `P`
/// removes the harmonic part when `shift = 0`. The returned solution is then
/// mean-free.
pub fn solve_laplace_with_history(rhs: &Form, cfg: &HodgeSolveConfig) -> Result<Solve> {
    cfg.validate()?;
    if !rhs.is_finite() {
        return Err(Error::Argument("non-finite right-hand side".into()));
    }
    let b = if cfg.shift == 0.0 {
        rhs.sub(&rhs.mean())?
    } else {
        rhs.clone()
    };
    let max_iter = cfg.max_iter.unwrap_or(10 * rhs.data().len());
    let bnorm = dot(&b, &b).sqrt();
    let mut x = Form::zeros(rhs.grid(), rhs.degree(), rhs.algebra())?;
    if bnorm == 0.0 {
        return Ok(Solve {
            solution: x,
            iterations: 0,
            history: vec![0.0],
        });
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut history = vec![1.0];
    for it in 1..=max_iter {
        let ap = apply(&p, cfg.shift)?;
        let alpha = rr / dot(&p, &ap);
        x.axpy(alpha, &p)?;
        r.axpy(-alpha, &ap)?;
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / bnorm;
        history.push(rel);
        if rel <= cfg.rel_tol {
            return Ok(Solve {
                solution: x,
                iterations: it,
                history,
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        let mut next = r.clone();
        next.axpy(beta, &p)?;
        p = next;
    }
    Err(Error::Solver {
        iterations: max_iter,
        residual: *history.last().expect("non-empty"),
    })
}

pub fn solve_laplace(rhs: &Form, cfg: &HodgeSolveConfig) -> Result<Form> {
    Ok(solve_laplace_with_history(rhs, cfg)?.solution)
}

/// `α = dψ + ρ + h` with `ψ = δΔ⁻¹α'`, `ρ = δdΔ⁻¹α'`, `h` the mean, `α' = α − h`.
#[derive(Clone, Debug)]
pub struct HodgeDecomposition {
    pub psi: Form,
    pub rho: Form,
    pub harmonic: Form,
    /// `‖α − dψ − ρ − h‖₂`.
    pub reconstruction_residual: f64,
}

impl HodgeDecomposition {
    pub fn exact_part(&self) -> Result<Form> {
        self.psi.d()
    }
}

pub fn hodge_decompose(alpha: &Form, cfg: &HodgeSolveConfig) -> Result<HodgeDecomposition> {
    let n = alpha.grid().dim();
    let k = alpha.degree();
    if k == 0 || k > n {
        return Err(Error::Degree(format!("Hodge decomposition of a {k}-form")));
    }
    let cfg = cfg.with_shift(0.0);
    let harmonic = alpha.mean();
    let fluctuation = alpha.sub(&harmonic)?;
    let potential = solve_laplace(&fluctuation, &cfg)?;
    let psi = potential.codiff()?;
    let rho = if k < n {
        potential.d()?.codiff()?
    } else {
        Form::zeros(alpha.grid(), k, alpha.algebra())?
    };
    let mut rest = alpha.sub(&psi.d()?)?;
    rest.axpy(-1.0, &rho)?;
    rest.axpy(-1.0, &harmonic)?;
    Ok(HodgeDecomposition {
        reconstruction_residual: rest.l2_norm(),
        psi,
        rho,
        harmonic,
    })
}

/// Discrete `W^{-1,2}` surrogate `⟨α, (I + Δ)⁻¹ α⟩^{1/2}`.
pub fn neg_sobolev_norm(alpha: &Form, cfg: &HodgeSolveConfig) -> Result<f64> {
    let x = solve_laplace(alpha, &cfg.with_shift(1.0))?;
    Ok(alpha.pairing(&x)?.max(0.0).sqrt())
}
