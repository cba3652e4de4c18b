//! Connections on the trivial bundle over a periodic grid, their curvature,
//! covariant (co)derivatives, Yang–Mills energy and residuals, and a gradient
//! flow that relaxes a connection towards a discrete Yang–Mills point.
//!
//! A connection is a `g`-valued 1-form `A` relative to the reference
//! connection `d`. Nothing here changes gauge.

use std::io::{Read, Write};
use std::ops::Deref;
use std::sync::Arc;

use serde::Serialize;

use crate::algebra::LieAlgebra;
use crate::error::{Error, Result};
use crate::forms::{Form, TestFormBank};

/// A `g`-valued 1-form used as a connection.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionField {
    a: Form,
}

impl ConnectionField {
    pub fn new(a: Form) -> Result<Self> {
        if a.degree() != 1 {
            return Err(Error::Degree(format!(
                "a connection is a 1-form, got degree {}",
                a.degree()
            )));
        }
        Ok(ConnectionField { a })
    }

    pub fn form(&self) -> &Form {
        &self.a
    }

    pub fn into_form(self) -> Form {
        self.a
    }

    /// Sidecar metadata line naming the algebra.
    pub fn sidecar(&self) -> String {
        format!("algebra={}\n", self.a.algebra().label())
    }

    /// Writes the binary payload (forms layout) and its sidecar.
    pub fn write<W: Write, M: Write>(&self, payload: W, mut meta: M) -> Result<()> {
        self.a.write_binary(payload)?;
        meta.write_all(self.sidecar().as_bytes())?;
        Ok(())
    }

    pub fn read<R: Read>(payload: R, sidecar: &str) -> Result<Self> {
        let label = sidecar
            .lines()
            .find_map(|l| l.trim().strip_prefix("algebra="))
            .ok_or_else(|| Error::Format("sidecar lacks an algebra= line".into()))?;
        let alg = Arc::new(LieAlgebra::from_label(label.trim())?);
        Self::new(Form::read_binary(payload, &alg)?)
    }
}

impl Deref for ConnectionField {
    type Target = Form;

    fn deref(&self) -> &Form {
        &self.a
    }
}

fn require_connection(a: &Form) -> Result<()> {
    if a.degree() != 1 {
        return Err(Error::Degree(format!(
            "connection must be a 1-form, got degree {}",
            a.degree()
        )));
    }
    Ok(())
}

/// `Ω = dA + ½[A∧A]`.
pub fn curvature(a: &Form) -> Result<Form> {
    require_connection(a)?;
    if a.grid().dim() < 2 {
        return Err(Error::Degree("curvature needs a base of dimension >= 2".into()));
    }
    let mut omega = a.d()?;
    if !a.algebra().is_abelian() {
        omega.axpy(0.5, &a.wedge_bracket(a)?)?;
    }
    Ok(omega)
}

/// `D_A ω = dω + [A∧ω]`.
pub fn covariant_derivative(a: &Form, omega: &Form) -> Result<Form> {
    require_connection(a)?;
    let mut out = omega.d()?;
    if !a.algebra().is_abelian() {
        out.axpy(1.0, &a.wedge_bracket(omega)?)?;
    }
    Ok(out)
}

/// `D*_A ω = δω − (−1)^{(n−k)(k−1)} *[A∧*ω]`, the adjoint of
/// [`covariant_derivative`] for compact algebras.
pub fn covariant_coderivative(a: &Form, omega: &Form) -> Result<Form> {
    require_connection(a)?;
    let mut out = omega.codiff()?;
    if !a.algebra().is_abelian() {
        let n = a.grid().dim();
        let k = omega.degree();
        let sign = if ((n - k) * (k - 1)).is_multiple_of(2) { 1.0 } else { -1.0 };
        out.axpy(-sign, &a.wedge_bracket(&omega.star())?.star())?;
    }
    Ok(out)
}

/// `‖Ω_A‖²_{L²}`.
pub fn ym_energy(a: &Form) -> Result<f64> {
    let l2 = curvature(a)?.l2_norm();
    Ok(l2 * l2)
}

/// `D*_A Ω_A`.
pub fn ym_residual_strong(a: &Form) -> Result<Form> {
    covariant_coderivative(a, &curvature(a)?)
}

/// `max_φ |⟨Ω_A, D_A φ⟩| / ‖φ‖_{W^{1,2}}` over a bank of 1-forms.
pub fn ym_residual_weak(a: &Form, bank: &TestFormBank) -> Result<f64> {
    let omega = curvature(a)?;
    let mut worst = 0.0f64;
    for tf in bank.forms() {
        if tf.degree() != 1 {
            return Err(Error::Degree("weak Yang–Mills residual needs 1-form tests".into()));
        }
        let phi = tf.sample(a.grid(), a.algebra())?;
        let w = phi.w12_norm();
        if w == 0.0 {
            continue;
        }
        let v = omega.pairing(&covariant_derivative(a, &phi)?)?.abs() / w;
        worst = worst.max(v);
    }
    Ok(worst)
}

/// `‖D_A Ω_A‖_{L¹}`; zero by degree on a 2-dimensional base.
pub fn bianchi_residual(a: &Form) -> Result<f64> {
    let omega = curvature(a)?;
    if a.grid().dim() < 3 {
        return Ok(0.0);
    }
    covariant_derivative(a, &omega)?.lp_norm(1.0)
}

fn duality_defect(omega: &Form, sign: f64) -> Result<f64> {
    if omega.grid().dim() != 4 || omega.degree() != 2 {
        return Err(Error::Degree(
            "duality defects need a 2-form on a 4-dimensional base".into(),
        ));
    }
    Ok(omega.star().lin_comb(1.0, omega, sign)?.l2_norm())
}

/// `‖*Ω + Ω‖_{L²}` for a curvature-like 2-form on `T⁴`.
pub fn asd_defect_of(omega: &Form) -> Result<f64> {
    duality_defect(omega, 1.0)
}

/// `‖*Ω − Ω‖_{L²}`.
pub fn sd_defect_of(omega: &Form) -> Result<f64> {
    duality_defect(omega, -1.0)
}

/// Anti-self-duality defect `‖*Ω_A + Ω_A‖_{L²}` (convention `*Ω = −Ω`).
pub fn asd_defect(a: &Form) -> Result<f64> {
    if a.grid().dim() != 4 {
        return Err(Error::Degree("anti-self-duality needs n = 4".into()));
    }
    asd_defect_of(&curvature(a)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowRecord {
    pub step: usize,
    pub energy: f64,
    pub residual_norm: f64,
    pub step_size: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
}

impl FlowTrace {
    pub fn last(&self) -> Option<&FlowRecord> {
        self.records.last()
    }

    /// True when no accepted step raised the energy.
    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].energy <= w[0].energy)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,energy,residual_norm,step_size")?;
        for r in &self.records {
            writeln!(w, "{},{:e},{:e},{:e}", r.step, r.energy, r.residual_norm, r.step_size)?;
        }
        Ok(())
    }
}

const INITIAL_STEP: f64 = 0.1;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Gradient descent on [`ym_energy`] with Armijo backtracking.
///
/// The search direction is the strong residual `G = D*_A Ω_A`; the energy
/// gradient is `2G`. Along `A − tG` the curvature is
/// `Ω − t D_A G + ½t²[G∧G]`, so the energy change is an exact quartic in `t`
/// evaluated from five pairings, which keeps the sufficient-decrease test
/// meaningful down to residuals near roundoff. Recorded energies accumulate
/// those decrements from the initial energy.
///
/// Each step starts from twice the previously accepted step (capped at the
/// initial step 0.1) and halves until the Armijo condition holds.
pub fn ym_relax(a0: &Form, steps: usize, grad_tol: f64) -> Result<(ConnectionField, FlowTrace)> {
    require_connection(a0)?;
    if steps == 0 {
        return Err(Error::Argument("ym_relax needs steps >= 1".into()));
    }
    if !(grad_tol >= 0.0) {
        return Err(Error::Argument("grad_tol must be non-negative".into()));
    }
    let mut a = a0.clone();
    let mut omega = curvature(&a)?;
    let mut energy = omega.l2_norm().powi(2);
    let mut trace = FlowTrace::default();
    let mut t = INITIAL_STEP;
    for step in 0..=steps {
        let g = covariant_coderivative(&a, &omega)?;
        let gnorm = g.l2_norm();
        trace.records.push(FlowRecord {
            step,
            energy,
            residual_norm: gnorm,
            step_size: if step == 0 { 0.0 } else { t },
        });
        if gnorm <= grad_tol || step == steps {
            break;
        }
        let dg = covariant_derivative(&a, &g)?;
        let gg = if a.algebra().is_abelian() {
            Form::zeros(a.grid(), 2, a.algebra())?
        } else {
            g.wedge_bracket(&g)?
        };
        // ΔE(t) = −2t⟨DG,Ω⟩ + t²(‖DG‖² + ⟨[G∧G],Ω⟩) − t³⟨DG,[G∧G]⟩ + ¼t⁴‖[G∧G]‖²
        let c1 = -2.0 * dg.pairing(&omega)?;
        let c2 = dg.pairing(&dg)? + gg.pairing(&omega)?;
        let c3 = -dg.pairing(&gg)?;
        let c4 = 0.25 * gg.pairing(&gg)?;
        let slope = 2.0 * gnorm * gnorm;
        let mut trial = (2.0 * t).min(INITIAL_STEP);
        let mut halvings = 0;
        let de = loop {
            let de = trial * (c1 + trial * (c2 + trial * (c3 + trial * c4)));
            if de <= -ARMIJO_C * trial * slope {
                break de;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::Flow {
                    step: step + 1,
                    halvings: MAX_HALVINGS,
                    energy,
                });
            }
            trial *= 0.5;
        };
        t = trial;
        a.axpy(-t, &g)?;
        energy += de;
        omega = curvature(&a)?;
    }
    Ok((ConnectionField::new(a)?, trace))
}
