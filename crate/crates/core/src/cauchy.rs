//! Cauchy data management and the solution constructors of the classical
//! theory: Lorenz-class evolution, inhomogeneous solves with the
//! compatibility equation for the initial velocity trace, gauge transforms
//! and the gauge-equivalence decision procedure, fundamental-solution
//! residuals, and the field-strength Cauchy problem.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{
    box_at, leapfrog_evolve, spacetime_d, spacetime_delta, trace, Current, Spacetime,
    SpacetimeForm, TraceKind,
};
use crate::forms::Slice;
use crate::green::GreensOperator;
use crate::lattice::{Cochain, CubicalComplex};

/// Relative tolerance for the data-level Lorenz conditions.
pub const LORENZ_DATA_TOL: f64 = 1e-8;

/// Relative tolerance for solution-level residual checks.
pub const SOLUTION_TOL: f64 = 1e-6;

/// The quadruple of trace cochains specifying a wave solution on a slice:
/// value and normal-derivative traces at degree p, normal and divergence
/// traces at degree p-1 (absent when p = 0).
#[derive(Debug, Clone)]
pub struct CauchyData {
    value: Cochain,
    velocity: Cochain,
    normal: Option<Cochain>,
    divergence: Option<Cochain>,
}

impl CauchyData {
    pub fn new(
        value: Cochain,
        velocity: Cochain,
        normal: Option<Cochain>,
        divergence: Option<Cochain>,
    ) -> Result<Self> {
        value.same_space(&velocity)?;
        let p = value.degree();
        match (&normal, &divergence) {
            (None, None) => {
                if p != 0 {
                    return Err(Error::DegreeOutOfRange {
                        degree: p,
                        dim: 0,
                    });
                }
            }
            (Some(n), Some(dv)) => {
                if p == 0 {
                    return Err(Error::DegreeOutOfRange { degree: 0, dim: 0 });
                }
                n.same_space(dv)?;
                if n.degree() + 1 != p {
                    return Err(Error::DegreeMismatch(n.degree(), p - 1));
                }
                if !n.complex().same_shape(value.complex()) {
                    return Err(Error::ComplexMismatch);
                }
            }
            _ => return Err(Error::DegreeMismatch(p, p)),
        }
        Ok(CauchyData {
            value,
            velocity,
            normal,
            divergence,
        })
    }

    /// Data with vanishing normal and divergence traces.
    pub fn coulomb(slice: &Slice, value: Cochain, velocity: Cochain) -> Result<Self> {
        let p = value.degree();
        let (normal, divergence) = if p == 0 {
            (None, None)
        } else {
            (Some(slice.zero(p - 1)), Some(slice.zero(p - 1)))
        };
        Self::new(value, velocity, normal, divergence)
    }

    pub fn zero(slice: &Slice, degree: usize) -> Result<Self> {
        Self::coulomb(slice, slice.zero(degree), slice.zero(degree))
    }

    pub fn degree(&self) -> usize {
        self.value.degree()
    }

    pub fn value(&self) -> &Cochain {
        &self.value
    }

    pub fn velocity(&self) -> &Cochain {
        &self.velocity
    }

    pub fn normal(&self) -> Option<&Cochain> {
        self.normal.as_ref()
    }

    pub fn divergence(&self) -> Option<&Cochain> {
        self.divergence.as_ref()
    }

    /// Largest metric norm among the four components.
    pub fn scale(&self, slice: &Slice) -> f64 {
        let mut s = slice.norm(&self.value).max(slice.norm(&self.velocity));
        if let Some(n) = &self.normal {
            s = s.max(slice.norm(n));
        }
        if let Some(dv) = &self.divergence {
            s = s.max(slice.norm(dv));
        }
        s
    }
}

/// The three data-level residuals whose vanishing characterizes Lorenz
/// evolutions.
#[derive(Debug, Clone, Copy)]
pub struct LorenzResiduals {
    pub velocity_divergence: f64,
    pub normal_divergence: f64,
    pub divergence_trace: f64,
    pub scale: f64,
}

impl LorenzResiduals {
    pub fn passes(&self, tolerance: f64) -> bool {
        let bound = tolerance * self.scale.max(1e-300);
        self.velocity_divergence <= bound
            && self.normal_divergence <= bound
            && self.divergence_trace <= bound
    }
}

/// Evaluates the three Lorenz conditions on a data quadruple.
pub fn is_lorenz_data(data: &CauchyData, slice: &Slice) -> Result<(bool, LorenzResiduals)> {
    let vel_div = if data.velocity().degree() >= 1 {
        slice.norm(&slice.codifferential(data.velocity())?)
    } else {
        0.0
    };
    let nrm_div = match data.normal() {
        Some(n) if n.degree() >= 1 => slice.norm(&slice.codifferential(n)?),
        _ => 0.0,
    };
    let div_trace = data.divergence().map(|dv| slice.norm(dv)).unwrap_or(0.0);
    let residuals = LorenzResiduals {
        velocity_divergence: vel_div,
        normal_divergence: nrm_div,
        divergence_trace: div_trace,
        scale: data.scale(slice),
    };
    Ok((residuals.passes(LORENZ_DATA_TOL), residuals))
}

/// Outcome of a constraint-propagation run.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintRun {
    /// Max over slices of the norm of the spacetime divergence.
    pub max_residual: f64,
    /// Max slice norm of the evolved solution.
    pub scale: f64,
}

impl ConstraintRun {
    pub fn relative(&self) -> f64 {
        self.max_residual / self.scale.max(1e-300)
    }
}

/// Max-slice norm of the spacetime divergence of a form (zero for scalars).
pub fn divergence_residual(form: &SpacetimeForm, st: &Spacetime) -> Result<f64> {
    if form.degree() == 0 {
        return Ok(0.0);
    }
    let delta = spacetime_delta(form, st)?;
    Ok(delta.max_slice_norm(st))
}

/// Evolves the data (with optional co-closed source) and reports how the
/// divergence constraint propagates.
pub fn lorenz_equivalence_check(
    data: &CauchyData,
    source: Option<&Current>,
    st: &Spacetime,
) -> Result<ConstraintRun> {
    let form = leapfrog_evolve(data, source, st)?;
    Ok(ConstraintRun {
        max_residual: divergence_residual(&form, st)?,
        scale: form.max_slice_norm(st).max(data.scale(st.slice())),
    })
}

/// Residual of the second-order field equation, evaluated through the
/// compatible splitting -delta d A = box A + d delta A so that all time
/// derivatives stay on the integrator's narrow stencil.
pub fn maxwell_residual(
    form: &SpacetimeForm,
    source: Option<&Current>,
    st: &Spacetime,
) -> Result<f64> {
    let slice = st.slice();
    let gauge_term = if form.degree() >= 1 {
        Some(spacetime_d(&spacetime_delta(form, st)?, st)?)
    } else {
        None
    };
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 1..st.steps() {
        // the doubly composed d(delta .) reaches one slice further than the
        // narrow stencil; keep it away from the boundary reconstructions
        let use_gauge_term = k >= 2 && k + 2 <= st.steps();
        let (ra, rb) = box_at(form, st, k)?;
        let mut resid2 = 0.0;
        let mut sc = 0.0;
        if let Some(mut ra) = ra {
            if let Some(j) = source.and_then(|j| j.tangential(k)) {
                ra = ra.sub(j)?;
                sc += slice.norm(j);
            }
            if use_gauge_term {
                if let Some(g) = gauge_term.as_ref().and_then(|g| g.tangential(k)) {
                    ra = ra.add(g)?;
                }
            }
            resid2 += slice.inner(&ra, &ra)?;
            sc += slice.norm(&slice.laplacian(form.tangential(k).unwrap())?);
        }
        if let Some(mut rb) = rb {
            if let Some(j) = source.and_then(|j| j.normal_part(k)) {
                rb = rb.sub(j)?;
                sc += slice.norm(j);
            }
            if use_gauge_term {
                if let Some(g) = gauge_term.as_ref().and_then(|g| g.normal_part(k)) {
                    rb = rb.add(g)?;
                }
            }
            resid2 += slice.inner(&rb, &rb)?;
            sc += slice.norm(&slice.laplacian(form.normal_part(k).unwrap())?);
        }
        worst = worst.max(resid2.sqrt());
        scale = scale.max(sc);
    }
    Ok(worst / scale.max(1e-300))
}

/// Lorenz-class solution from (value, velocity) data; the normal trace may
/// be any co-closed choice and defaults to zero.
pub fn solve_maxwell_homogeneous(
    value: Cochain,
    velocity: Cochain,
    normal: Option<Cochain>,
    st: &Spacetime,
) -> Result<SpacetimeForm> {
    let slice = st.slice();
    let p = value.degree();
    let scale = slice.norm(&velocity).max(slice.norm(&value)).max(1e-300);
    if velocity.degree() >= 1 {
        let div = slice.norm(&slice.codifferential(&velocity)?);
        if div > LORENZ_DATA_TOL * scale {
            return Err(Error::NotLorenz(format!(
                "velocity trace is not co-closed (residual {div:.3e})"
            )));
        }
    }
    if let Some(n) = &normal {
        if n.degree() >= 1 {
            let div = slice.norm(&slice.codifferential(n)?);
            if div > LORENZ_DATA_TOL * slice.norm(n).max(scale) {
                return Err(Error::NotLorenz(format!(
                    "normal trace is not co-closed (residual {div:.3e})"
                )));
            }
        }
    }
    let data = if p == 0 {
        CauchyData::new(value, velocity, None, None)?
    } else {
        let normal = normal.unwrap_or_else(|| slice.zero(p - 1));
        CauchyData::new(value, velocity, Some(normal), Some(slice.zero(p - 1)))?
    };
    leapfrog_evolve(&data, None, st)
}

/// Lorenz solution with a co-closed source current. The velocity trace is
/// the compatibility datum: its divergence must balance the normal trace of
/// the current on the initial surface, evaluated here with the staggered
/// integrator's own time averaging so the constraint propagates exactly.
/// Returns the solution together with the velocity trace used.
pub fn solve_maxwell_inhomogeneous(
    value: Cochain,
    source: &Current,
    st: &Spacetime,
) -> Result<(SpacetimeForm, Cochain)> {
    let slice = st.slice();
    let p = value.degree();
    if source.degree() != p {
        return Err(Error::DegreeMismatch(p, source.degree()));
    }
    source.require_co_closed(st, LORENZ_DATA_TOL)?;

    let omega = if p == 0 {
        slice.zero(0)
    } else {
        // time-staggered average of the source's normal component at the
        // initial slice; the pure value j_b(0) is its continuum limit
        let zero = slice.zero(p - 1);
        let jb0 = source.normal_part(0).unwrap_or(&zero);
        let jb1 = source.normal_part(1).unwrap_or(&zero);
        let mut rhs = jb0.scaled(0.5).axpy(0.25, jb1)?;
        rhs = rhs.axpy(-st.dt() * st.dt() / 4.0, &slice.laplacian(jb0)?)?;
        if slice.norm(&rhs) <= 1e-300 {
            slice.zero(p)
        } else {
            slice.solve_coderivative(&rhs)?
        }
    };

    let data = CauchyData::coulomb(slice, value, omega.clone())?;
    let form = leapfrog_evolve(&data, Some(source), st)?;
    Ok((form, omega))
}

/// A + d(parameter), with the field strength untouched.
pub fn gauge_transform(
    form: &SpacetimeForm,
    parameter: &SpacetimeForm,
    st: &Spacetime,
) -> Result<SpacetimeForm> {
    if form.degree() == 0 || parameter.degree() + 1 != form.degree() {
        return Err(Error::DegreeMismatch(
            parameter.degree(),
            form.degree().saturating_sub(1),
        ));
    }
    form.add(&spacetime_d(parameter, st)?)
}

/// Decides gauge equivalence of two Maxwell solutions from their slice
/// traces: the normal-derivative traces must agree and the value-trace
/// difference must be purely exact.
pub fn is_gauge_equivalent(
    x: &SpacetimeForm,
    y: &SpacetimeForm,
    source: Option<&Current>,
    k: usize,
    st: &Spacetime,
) -> Result<bool> {
    for form in [x, y] {
        let residual = maxwell_residual(form, source, st)?;
        if residual > SOLUTION_TOL {
            return Err(Error::NotASolution {
                residual,
                tolerance: SOLUTION_TOL,
            });
        }
    }
    let slice = st.slice();
    let scale = x
        .slice_norm(st, k)
        .max(y.slice_norm(st, k))
        .max(1e-300);
    let vel_x = trace(x, st, k, TraceKind::NormalDerivative)?.expect("tangential part");
    let vel_y = trace(y, st, k, TraceKind::NormalDerivative)?.expect("tangential part");
    if slice.norm(&vel_x.sub(&vel_y)?) > SOLUTION_TOL * scale {
        return Ok(false);
    }
    let val_x = trace(x, st, k, TraceKind::Value)?.expect("tangential part");
    let val_y = trace(y, st, k, TraceKind::Value)?.expect("tangential part");
    let diff = val_x.sub(&val_y)?;
    let parts = slice.hodge_decompose(&diff)?;
    let obstruction = slice.norm(&parts.coexact).max(slice.norm(&parts.harmonic));
    Ok(obstruction <= SOLUTION_TOL * scale)
}

/// Converts Lorenz data to the equivalent data with vanishing normal trace,
/// together with the homogeneous gauge parameter realizing the equivalence
/// (absent for scalars, where the normal trace does not exist).
pub fn make_coulomb(
    data: &CauchyData,
    st: &Spacetime,
) -> Result<(CauchyData, Option<SpacetimeForm>)> {
    let slice = st.slice();
    let (ok, residuals) = is_lorenz_data(data, slice)?;
    if !ok {
        return Err(Error::NotLorenz(format!(
            "residuals (velocity divergence {:.3e}, normal divergence {:.3e}, divergence trace {:.3e})",
            residuals.velocity_divergence, residuals.normal_divergence, residuals.divergence_trace,
        )));
    }
    let p = data.degree();
    let coulomb = CauchyData::coulomb(slice, data.value().clone(), data.velocity().clone())?;
    if p == 0 {
        return Ok((coulomb, None));
    }
    // gauge parameter: homogeneous evolution whose normal-derivative trace
    // cancels the normal trace of the original data
    let lambda_value = slice.zero(p - 1);
    let lambda_velocity = data.normal().expect("p >= 1").scaled(-1.0);
    let lambda_data = if p - 1 == 0 {
        CauchyData::new(lambda_value, lambda_velocity, None, None)?
    } else {
        CauchyData::new(
            lambda_value,
            lambda_velocity,
            Some(slice.zero(p - 2)),
            Some(slice.zero(p - 2)),
        )?
    };
    let lambda = leapfrog_evolve(&lambda_data, None, st)?;
    Ok((coulomb, Some(lambda)))
}

/// Residual of the fundamental-solution property: the causal solve of a
/// co-closed current satisfies the second-order field equation. For
/// non-co-closed input this reports the (large) defect instead of failing.
pub fn fundamental_solution_check(
    source: &Current,
    retarded: bool,
    st: &Spacetime,
) -> Result<f64> {
    let greens = if retarded {
        GreensOperator::retarded(st.clone())
    } else {
        GreensOperator::advanced(st.clone())
    };
    let form = greens.apply(source)?;
    maxwell_residual(&form, Some(source), st)
}

/// Residual report for the field-strength Cauchy problem.
#[derive(Debug, Clone, Copy)]
pub struct FieldStrengthResiduals {
    pub closure: f64,
    pub co_closure: f64,
    pub value_trace: f64,
    pub normal_trace: f64,
    pub normal_derivative_trace: f64,
    pub divergence_trace: f64,
}

impl FieldStrengthResiduals {
    pub fn max(&self) -> f64 {
        self.closure
            .max(self.co_closure)
            .max(self.value_trace)
            .max(self.normal_trace)
            .max(self.normal_derivative_trace)
            .max(self.divergence_trace)
    }
}

/// Solves the Cauchy problem for a field strength: given closed initial
/// data and a co-closed normal trace, reconstructs a potential whose
/// exterior derivative reproduces both and satisfies the field equations.
pub fn solve_field_strength_cauchy(
    f0: &Cochain,
    f_normal: &Cochain,
    st: &Spacetime,
) -> Result<(SpacetimeForm, SpacetimeForm, FieldStrengthResiduals)> {
    let slice = st.slice();
    let q = f0.degree();
    if q == 0 || f_normal.degree() + 1 != q {
        return Err(Error::DegreeMismatch(f_normal.degree(), q.max(1) - 1));
    }
    let scale = slice.norm(f0).max(slice.norm(f_normal)).max(1e-300);
    if q < slice.dim() {
        let closure = slice.norm(&slice.d(f0)?);
        if closure > LORENZ_DATA_TOL * scale {
            return Err(Error::NotLorenz(format!(
                "field-strength datum is not closed (residual {closure:.3e})"
            )));
        }
    }
    if f_normal.degree() >= 1 {
        let div = slice.norm(&slice.codifferential(f_normal)?);
        if div > LORENZ_DATA_TOL * scale {
            return Err(Error::NotLorenz(format!(
                "normal field-strength datum is not co-closed (residual {div:.3e})"
            )));
        }
    }

    // potential value trace from the elliptic solve (the cohomological
    // obstruction surfaces here), velocity trace directly from the data
    let a0 = slice.solve_exterior(f0)?;
    let potential = solve_maxwell_homogeneous(a0, f_normal.clone(), None, st)?;
    let field = spacetime_d(&potential, st)?;

    // closure residual: d applied to the field strength
    let closure = if field.degree() + 1 <= slice.dim() + 1 {
        let df = spacetime_d(&field, st)?;
        (1..st.steps())
            .map(|k| df.slice_norm(st, k))
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    // co-closure residual through the compatible splitting: for the
    // derivative of a wave solution, delta F = -(box A + d delta A); the
    // helper already normalizes by the field magnitudes
    let co_closure = maxwell_residual(&potential, None, st)?;

    let value0 = trace(&field, st, 0, TraceKind::Value)?.expect("q <= d");
    let normal0 = trace(&field, st, 0, TraceKind::Normal)?.expect("q >= 1");
    let value_trace = slice.norm(&value0.sub(f0)?);
    let normal_trace = slice.norm(&normal0.sub(f_normal)?);

    let ddelta = if potential.degree() >= 1 {
        Some(spacetime_d(&spacetime_delta(&potential, st)?, st)?)
    } else {
        None
    };
    let mut normal_derivative_trace: f64 = 0.0;
    let mut divergence_trace: f64 = 0.0;
    for k in 1..st.steps() {
        if let Some(t) = trace(&field, st, k, TraceKind::NormalDerivative)? {
            normal_derivative_trace = normal_derivative_trace.max(slice.norm(&t));
        }
        // the divergence trace of dA, evaluated on the narrow stencil:
        // tangential part of -(box A + d delta A)
        let (ra, _) = box_at(&potential, st, k)?;
        if let Some(mut ra) = ra {
            if let Some(g) = ddelta.as_ref().and_then(|g| g.tangential(k)) {
                ra = ra.add(g)?;
            }
            divergence_trace = divergence_trace.max(slice.norm(&ra));
        }
    }

    let residuals = FieldStrengthResiduals {
        closure: closure / scale,
        co_closure,
        value_trace: value_trace / scale,
        normal_trace: normal_trace / scale,
        normal_derivative_trace: normal_derivative_trace / scale,
        divergence_trace: divergence_trace / scale,
    };
    Ok((potential, field, residuals))
}

/// Sidecar metadata for Cauchy data CSV exchange.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CauchySidecar {
    pub dim: usize,
    pub resolution: usize,
    pub lengths: Vec<f64>,
    pub degree: usize,
    pub slice_index: usize,
    pub schema_version: u32,
}

const CSV_COMPONENTS: [&str; 4] = ["value", "velocity", "normal", "divergence"];

/// Writes the quadruple as CSV rows `component,degree,cell,value`.
pub fn write_cauchy_csv<W: Write>(data: &CauchyData, out: &mut W) -> Result<()> {
    writeln!(out, "component,degree,cell,value")?;
    let mut dump = |name: &str, c: Option<&Cochain>| -> Result<()> {
        if let Some(c) = c {
            for (cell, v) in c.values().iter().enumerate() {
                writeln!(out, "{name},{},{cell},{v}", c.degree())?;
            }
        }
        Ok(())
    };
    dump(CSV_COMPONENTS[0], Some(data.value()))?;
    dump(CSV_COMPONENTS[1], Some(data.velocity()))?;
    dump(CSV_COMPONENTS[2], data.normal())?;
    dump(CSV_COMPONENTS[3], data.divergence())?;
    Ok(())
}

/// Reads a quadruple back from CSV, against a given complex and degree.
pub fn read_cauchy_csv<R: BufRead>(
    complex: &Arc<CubicalComplex>,
    degree: usize,
    input: R,
) -> Result<CauchyData> {
    let mut parts: [Option<Cochain>; 4] = [None, None, None, None];
    for (number, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = number + 1;
        if line_no == 1 {
            if line.trim() != "component,degree,cell,value" {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let slot = CSV_COMPONENTS
            .iter()
            .position(|&c| c == fields[0])
            .ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("unknown component {:?}", fields[0]),
            })?;
        let parse_usize = |s: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad integer {s:?}"),
            })
        };
        let deg = parse_usize(fields[1])?;
        let cell = parse_usize(fields[2])?;
        let value: f64 = fields[3].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad value {:?}", fields[3]),
        })?;
        let expected_degree = if slot < 2 { degree } else { degree.max(1) - 1 };
        if deg != expected_degree {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "component {:?} carries degree {deg}, expected {expected_degree}",
                    fields[0]
                ),
            });
        }
        let slot_ref = &mut parts[slot];
        if slot_ref.is_none() {
            *slot_ref = Some(Cochain::zero(complex.clone(), deg)?);
        }
        let cochain = slot_ref.as_mut().unwrap();
        if cell >= cochain.values().len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("cell {cell} out of range"),
            });
        }
        cochain.values_mut()[cell] = value;
    }
    let [value, velocity, normal, divergence] = parts;
    let value = value.ok_or(Error::Parse {
        line: 0,
        message: "missing value component".into(),
    })?;
    let velocity = velocity.ok_or(Error::Parse {
        line: 0,
        message: "missing velocity component".into(),
    })?;
    CauchyData::new(value, velocity, normal, divergence)
}

/// Deterministic replay: two evolutions from the same data agree bitwise.
pub fn evolutions_agree_bitwise(
    data: &CauchyData,
    source: Option<&Current>,
    st: &Spacetime,
) -> Result<bool> {
    let first = leapfrog_evolve(data, source, st)?;
    let second = leapfrog_evolve(data, source, st)?;
    for k in 0..=st.steps() {
        match (first.tangential(k), second.tangential(k)) {
            (Some(x), Some(y)) => {
                if x.values() != y.values() {
                    return Ok(false);
                }
            }
            (None, None) => {}
            _ => return Ok(false),
        }
        match (first.normal_part(k), second.normal_part(k)) {
            (Some(x), Some(y)) => {
                if x.values() != y.values() {
                    return Ok(false);
                }
            }
            (None, None) => {}
            _ => return Ok(false),
        }
    }
    Ok(true)
}
