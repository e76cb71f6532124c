//! Retarded and advanced Green's operators realized by causal marching.
//!
//! The retarded solve starts from identically zero data on the earliest
//! slice and integrates forward through the source; the advanced solve is
//! the time reversal of a retarded solve on the reversed current. Support
//! properties therefore hold by construction: the output vanishes exactly
//! on the causally silent side of the source window. The difference
//! (advanced minus retarded) propagates any compactly supported current
//! into a source-free solution.

use crate::cauchy::CauchyData;
use crate::error::{Error, Result};
use crate::evolve::{
    leapfrog_evolve, spacetime_d, spacetime_delta, Current, EndVelocities, Spacetime,
    SpacetimeForm,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Retarded,
    Advanced,
}

/// A causal inverse of the wave operator on a fixed spacetime.
#[derive(Debug, Clone)]
pub struct GreensOperator {
    direction: Direction,
    st: Spacetime,
}

impl GreensOperator {
    pub fn retarded(st: Spacetime) -> Self {
        GreensOperator {
            direction: Direction::Retarded,
            st,
        }
    }

    pub fn advanced(st: Spacetime) -> Self {
        GreensOperator {
            direction: Direction::Advanced,
            st,
        }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn apply(&self, f: &Current) -> Result<SpacetimeForm> {
        let (k0, k1) = f.window();
        match self.direction {
            Direction::Retarded => {
                if k0 == 0 {
                    return Err(Error::WindowTouchesBoundary {
                        k0,
                        k1,
                        side: "early",
                    });
                }
                solve_from_rest(f, &self.st)
            }
            Direction::Advanced => {
                if k1 >= self.st.steps() {
                    return Err(Error::WindowTouchesBoundary {
                        k0,
                        k1,
                        side: "late",
                    });
                }
                let reversed = reverse_current(f, &self.st)?;
                let forward = solve_from_rest(&reversed, &self.st)?;
                Ok(reverse_form(&forward, &self.st))
            }
        }
    }
}

/// Advanced minus retarded solve: maps compact currents to source-free
/// solutions.
pub fn causal_propagator(f: &Current, st: &Spacetime) -> Result<SpacetimeForm> {
    let advanced = GreensOperator::advanced(st.clone()).apply(f)?;
    let retarded = GreensOperator::retarded(st.clone()).apply(f)?;
    advanced.sub(&retarded)
}

fn solve_from_rest(f: &Current, st: &Spacetime) -> Result<SpacetimeForm> {
    let slice = st.slice();
    let p = f.degree();
    if p <= slice.dim() {
        let data = CauchyData::zero(slice, p)?;
        leapfrog_evolve(&data, Some(f), st)
    } else {
        // top-degree spacetime forms have no tangential part; their normal
        // component satisfies its own wave equation and marches alone
        let mut wrapped = SpacetimeForm::zero(st, p - 1)?;
        for k in 0..=st.steps() {
            if let Some(j) = f.normal_part(k) {
                *wrapped.tangential_mut(k).expect("degree p-1 <= d") = j.clone();
            }
        }
        let proxy = Current::new(wrapped, f.window(), st)?;
        let data = CauchyData::zero(slice, p - 1)?;
        let solved = leapfrog_evolve(&data, Some(&proxy), st)?;
        let mut out = SpacetimeForm::zero(st, p)?;
        for k in 0..=st.steps() {
            *out.normal_part_mut(k).expect("p >= 1") =
                solved.tangential(k).expect("degree p-1 <= d").clone();
        }
        let solved_ends = solved.end_velocities().clone();
        out.set_end_velocities(EndVelocities {
            a_start: None,
            a_end: None,
            b_start: solved_ends.a_start,
            b_end: solved_ends.a_end,
        });
        Ok(out)
    }
}

fn reverse_current(f: &Current, st: &Spacetime) -> Result<Current> {
    let last = st.steps();
    let mut form = SpacetimeForm::zero(st, f.degree())?;
    for k in 0..=last {
        if let Some(ja) = f.tangential(last - k) {
            *form.tangential_mut(k).expect("matching layout") = ja.clone();
        }
        if let Some(jb) = f.normal_part(last - k) {
            *form.normal_part_mut(k).expect("matching layout") = jb.clone();
        }
    }
    let (k0, k1) = f.window();
    Current::new(form, (last - k1, last - k0), st)
}

fn reverse_form(form: &SpacetimeForm, st: &Spacetime) -> SpacetimeForm {
    let last = st.steps();
    let mut out = SpacetimeForm::zero(st, form.degree()).expect("degree already validated");
    for k in 0..=last {
        if let Some(a) = form.tangential(last - k) {
            *out.tangential_mut(k).expect("matching layout") = a.clone();
        }
        if let Some(b) = form.normal_part(last - k) {
            *out.normal_part_mut(k).expect("matching layout") = b.clone();
        }
    }
    // time reversal negates velocities and swaps the two ends
    let ends = form.end_velocities().clone();
    out.set_end_velocities(EndVelocities {
        a_start: ends.a_end.map(|c| c.scaled(-1.0)),
        a_end: ends.a_start.map(|c| c.scaled(-1.0)),
        b_start: ends.b_end.map(|c| c.scaled(-1.0)),
        b_end: ends.b_start.map(|c| c.scaled(-1.0)),
    });
    out
}

/// First-order spacetime operations whose commutation with the causal
/// solves is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormOp {
    Exterior,
    Codifferential,
}

fn apply_form_op(
    form: &SpacetimeForm,
    op: FormOp,
    st: &Spacetime,
) -> Result<Option<SpacetimeForm>> {
    match op {
        FormOp::Exterior => {
            if form.degree() + 1 > st.slice().dim() + 1 {
                return Ok(None);
            }
            Ok(Some(spacetime_d(form, st)?))
        }
        FormOp::Codifferential => {
            if form.degree() == 0 {
                return Ok(None);
            }
            Ok(Some(spacetime_delta(form, st)?))
        }
    }
}

fn current_form_op(f: &Current, op: FormOp, st: &Spacetime) -> Result<Option<Current>> {
    let Some(derived) = apply_form_op(f.form(), op, st)? else {
        return Ok(None);
    };
    // time derivatives widen the support by one slice on each side
    let (k0, k1) = f.window();
    let window = (k0.saturating_sub(1), (k1 + 1).min(st.steps()));
    Ok(Some(Current::new(derived, window, st)?))
}

/// Relative difference between applying a first-order operation before and
/// after the causal solve, measured over interior slices.
pub fn commutation_residual(
    f: &Current,
    op: FormOp,
    direction: Direction,
    st: &Spacetime,
) -> Result<f64> {
    let greens = match direction {
        Direction::Retarded => GreensOperator::retarded(st.clone()),
        Direction::Advanced => GreensOperator::advanced(st.clone()),
    };
    let solved = greens.apply(f)?;
    let Some(path_one) = apply_form_op(&solved, op, st)? else {
        return Ok(0.0);
    };
    let Some(op_current) = current_form_op(f, op, st)? else {
        return Ok(0.0);
    };
    let path_two = greens.apply(&op_current)?;
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 1..st.steps() {
        diff = diff.max(path_one.sub(&path_two)?.slice_norm(st, k));
        scale = scale.max(path_one.slice_norm(st, k));
    }
    Ok(diff / scale.max(1e-300))
}
