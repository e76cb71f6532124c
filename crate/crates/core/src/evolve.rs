//! Time evolution on an ultrastatic product spacetime.
//!
//! A spacetime p-form is stored as the pair (a, b) of its tangential part
//! (a p-cochain per integer time slice) and normal part (a (p-1)-cochain
//! per slice, absent for p = 0). With the spatial metric frozen in time the
//! operators split as
//!
//!   d(a, b)     = (d a,  da/dt - d b)
//!   delta(a, b) = (-(delta a + db/dt),  delta b)
//!
//! and the wave operator block-diagonalizes into two leapfrog-integrable
//! components: d^2a/dt^2 = -Lap a + j_a and likewise for b. The slice-level
//! pairing of two equal-degree forms is <a,a'> - <b,b'>, and the four trace
//! maps are
//!
//!   value             a
//!   normal           -b
//!   normal derivative d b - da/dt     (= the normal trace of dA)
//!   divergence        delta a + db/dt
//!
//! These sign constants are fixed once, here, and pinned by four exact
//! discrete identities (adjointness, the wave-operator factorization, the
//! summation-by-parts boundary identity, and the pairing/symplectic-form
//! consistency check); the test suites verify all four. Integer slices hold
//! field values, half steps hold velocities; the integrator stores its exact
//! initial and final velocities so boundary-slice traces reproduce Cauchy
//! data without interpolation error.

use std::io::Write;
use std::sync::Arc;

use crate::cauchy::CauchyData;
use crate::error::{Error, Result};
use crate::forms::Slice;
use crate::green;
use crate::lattice::Cochain;

/// Hard ceiling on dt * sqrt(lambda_max).
pub const CFL_LIMIT: f64 = 1.8;

/// Sign of the normal-part term in the slice pairing of spacetime forms.
pub const SLICE_PAIRING_SIGN: f64 = -1.0;

/// Ultrastatic spacetime: a spatial slice crossed with a uniform time grid
/// of `steps` intervals (slices 0..=steps).
#[derive(Debug, Clone)]
pub struct Spacetime {
    slice: Arc<Slice>,
    dt: f64,
    steps: usize,
}

impl Spacetime {
    pub fn new(slice: Arc<Slice>, dt: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidResolution(steps));
        }
        let product = dt * slice.lambda_max_bound().sqrt();
        if !(dt > 0.0) || product > CFL_LIMIT {
            return Err(Error::CflViolation {
                dt,
                product,
                limit: CFL_LIMIT,
            });
        }
        Ok(Spacetime { slice, dt, steps })
    }

    /// Chooses dt as `fraction` of the CFL ceiling.
    pub fn with_cfl_fraction(slice: Arc<Slice>, fraction: f64, steps: usize) -> Result<Self> {
        let dt = fraction * CFL_LIMIT / slice.lambda_max_bound().sqrt();
        Self::new(slice, dt, steps)
    }

    pub fn slice(&self) -> &Arc<Slice> {
        &self.slice
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of time intervals; valid slice indices are 0..=steps.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Spacetime dimension n = d + 1.
    pub fn n(&self) -> usize {
        self.slice.dim() + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }

    fn check_slice_index(&self, k: usize) -> Result<()> {
        if k > self.steps {
            return Err(Error::SliceOutOfRange {
                k,
                max: self.steps,
            });
        }
        Ok(())
    }
}

/// The four Cauchy trace maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Pullback of the form onto the slice.
    Value,
    /// Forward normal derivative (normal trace of dA).
    NormalDerivative,
    /// Pullback of the spacetime divergence.
    Divergence,
    /// Forward normal component.
    Normal,
}

/// Orientation prefactor that the continuum normalization of the four trace
/// maps carries at spacetime dimension `n` and form degree `p`; exposed for
/// reference and convention audits. The operational traces in this module
/// use the fixed constants stated in the module docs instead.
pub fn pullback_prefactor(kind: TraceKind, n: usize, p: usize) -> i64 {
    let n = n as i64;
    let p = p as i64;
    let exponent = match kind {
        TraceKind::Value | TraceKind::Divergence => 0,
        TraceKind::NormalDerivative => p * (n - p - 1) + (n - 1),
        TraceKind::Normal => (n - p) * (p - 1) + (n - 1),
    };
    if exponent.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct EndVelocities {
    pub(crate) a_start: Option<Cochain>,
    pub(crate) a_end: Option<Cochain>,
    pub(crate) b_start: Option<Cochain>,
    pub(crate) b_end: Option<Cochain>,
}

/// A spacetime form sampled on the integer time slices of a `Spacetime`.
///
/// The tangential series is empty when the degree exceeds the spatial
/// dimension (top-degree field strengths) and the normal series is empty
/// for degree 0.
#[derive(Debug, Clone)]
pub struct SpacetimeForm {
    degree: usize,
    a: Vec<Cochain>,
    b: Vec<Cochain>,
    ends: EndVelocities,
}

impl SpacetimeForm {
    pub fn zero(st: &Spacetime, degree: usize) -> Result<Self> {
        let d = st.slice().dim();
        if degree > d + 1 {
            return Err(Error::DegreeOutOfRange {
                degree,
                dim: d + 1,
            });
        }
        let slices = st.steps() + 1;
        let a = if degree <= d {
            vec![st.slice().zero(degree); slices]
        } else {
            Vec::new()
        };
        let b = if degree >= 1 {
            vec![st.slice().zero(degree - 1); slices]
        } else {
            Vec::new()
        };
        Ok(SpacetimeForm {
            degree,
            a,
            b,
            ends: EndVelocities::default(),
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn has_tangential(&self) -> bool {
        !self.a.is_empty()
    }

    pub fn has_normal(&self) -> bool {
        !self.b.is_empty()
    }

    pub fn tangential(&self, k: usize) -> Option<&Cochain> {
        self.a.get(k)
    }

    pub fn normal_part(&self, k: usize) -> Option<&Cochain> {
        self.b.get(k)
    }

    pub fn tangential_mut(&mut self, k: usize) -> Option<&mut Cochain> {
        self.ends = EndVelocities::default();
        self.a.get_mut(k)
    }

    pub fn normal_part_mut(&mut self, k: usize) -> Option<&mut Cochain> {
        self.ends = EndVelocities::default();
        self.b.get_mut(k)
    }

    pub(crate) fn end_velocities(&self) -> &EndVelocities {
        &self.ends
    }

    pub(crate) fn set_end_velocities(&mut self, ends: EndVelocities) {
        self.ends = ends;
    }

    fn series_velocity(
        series: &[Cochain],
        st: &Spacetime,
        k: usize,
        start: Option<&Cochain>,
        end: Option<&Cochain>,
    ) -> Cochain {
        let dt = st.dt();
        let last = st.steps();
        if k == 0 {
            if let Some(v) = start {
                return v.clone();
            }
            // second-order one-sided stencil
            return series[0]
                .scaled(-3.0 / (2.0 * dt))
                .axpy(4.0 / (2.0 * dt), &series[1])
                .and_then(|u| u.axpy(-1.0 / (2.0 * dt), &series[2]))
                .expect("series cochains share a complex");
        }
        if k == last {
            if let Some(v) = end {
                return v.clone();
            }
            return series[last]
                .scaled(3.0 / (2.0 * dt))
                .axpy(-4.0 / (2.0 * dt), &series[last - 1])
                .and_then(|u| u.axpy(1.0 / (2.0 * dt), &series[last - 2]))
                .expect("series cochains share a complex");
        }
        series[k + 1]
            .sub(&series[k - 1])
            .expect("series cochains share a complex")
            .scaled(1.0 / (2.0 * dt))
    }

    /// Centered time derivative of the tangential part (exact stored value
    /// at the two boundary slices when this form came out of the integrator).
    pub fn tangential_velocity(&self, st: &Spacetime, k: usize) -> Option<Cochain> {
        if self.a.is_empty() {
            return None;
        }
        Some(Self::series_velocity(
            &self.a,
            st,
            k,
            self.ends.a_start.as_ref(),
            self.ends.a_end.as_ref(),
        ))
    }

    pub fn normal_velocity(&self, st: &Spacetime, k: usize) -> Option<Cochain> {
        if self.b.is_empty() {
            return None;
        }
        Some(Self::series_velocity(
            &self.b,
            st,
            k,
            self.ends.b_start.as_ref(),
            self.ends.b_end.as_ref(),
        ))
    }

    pub fn scaled(&self, factor: f64) -> SpacetimeForm {
        let scale_all = |v: &Vec<Cochain>| v.iter().map(|c| c.scaled(factor)).collect();
        SpacetimeForm {
            degree: self.degree,
            a: scale_all(&self.a),
            b: scale_all(&self.b),
            ends: EndVelocities {
                a_start: self.ends.a_start.as_ref().map(|c| c.scaled(factor)),
                a_end: self.ends.a_end.as_ref().map(|c| c.scaled(factor)),
                b_start: self.ends.b_start.as_ref().map(|c| c.scaled(factor)),
                b_end: self.ends.b_end.as_ref().map(|c| c.scaled(factor)),
            },
        }
    }

    /// self + factor * other, combining stored end velocities when both
    /// operands carry them.
    pub fn axpy(&self, factor: f64, other: &SpacetimeForm) -> Result<SpacetimeForm> {
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch(self.degree, other.degree));
        }
        let combine = |x: &Vec<Cochain>, y: &Vec<Cochain>| -> Result<Vec<Cochain>> {
            x.iter()
                .zip(y.iter())
                .map(|(u, v)| u.axpy(factor, v))
                .collect()
        };
        let combine_ends = |x: &Option<Cochain>, y: &Option<Cochain>| -> Option<Cochain> {
            match (x, y) {
                (Some(u), Some(v)) => u.axpy(factor, v).ok(),
                _ => None,
            }
        };
        Ok(SpacetimeForm {
            degree: self.degree,
            a: combine(&self.a, &other.a)?,
            b: combine(&self.b, &other.b)?,
            ends: EndVelocities {
                a_start: combine_ends(&self.ends.a_start, &other.ends.a_start),
                a_end: combine_ends(&self.ends.a_end, &other.ends.a_end),
                b_start: combine_ends(&self.ends.b_start, &other.ends.b_start),
                b_end: combine_ends(&self.ends.b_end, &other.ends.b_end),
            },
        })
    }

    pub fn add(&self, other: &SpacetimeForm) -> Result<SpacetimeForm> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &SpacetimeForm) -> Result<SpacetimeForm> {
        self.axpy(-1.0, other)
    }

    /// Metric norm of one slice, combining both parts.
    pub fn slice_norm(&self, st: &Spacetime, k: usize) -> f64 {
        let mut total = 0.0;
        if let Some(a) = self.a.get(k) {
            total += st.slice().inner(a, a).expect("slice cochain");
        }
        if let Some(b) = self.b.get(k) {
            total += st.slice().inner(b, b).expect("slice cochain");
        }
        total.sqrt()
    }

    pub fn max_slice_norm(&self, st: &Spacetime) -> f64 {
        (0..=st.steps())
            .map(|k| self.slice_norm(st, k))
            .fold(0.0, f64::max)
    }

    /// Writes chosen slices of one component as CSV rows
    /// `slice,cell,value`.
    pub fn write_snapshot_csv<W: Write>(
        &self,
        out: &mut W,
        slices: &[usize],
        normal_component: bool,
    ) -> Result<()> {
        writeln!(out, "slice,cell,value")?;
        let series = if normal_component { &self.b } else { &self.a };
        for &k in slices {
            if let Some(c) = series.get(k) {
                for (cell, v) in c.values().iter().enumerate() {
                    writeln!(out, "{k},{cell},{v}")?;
                }
            }
        }
        Ok(())
    }
}

/// A source term: a spacetime form supported inside a declared slice window.
#[derive(Debug, Clone)]
pub struct Current {
    form: SpacetimeForm,
    window: (usize, usize),
}

impl Current {
    pub fn new(form: SpacetimeForm, window: (usize, usize), st: &Spacetime) -> Result<Self> {
        st.check_slice_index(window.0)?;
        st.check_slice_index(window.1)?;
        let (k0, k1) = window;
        for k in 0..=st.steps() {
            if k >= k0 && k <= k1 {
                continue;
            }
            if form.slice_norm(st, k) != 0.0 {
                return Err(Error::SupportOutsideWindow { k0, k1 });
            }
        }
        Ok(Current { form, window })
    }

    pub fn form(&self) -> &SpacetimeForm {
        &self.form
    }

    pub fn degree(&self) -> usize {
        self.form.degree()
    }

    pub fn window(&self) -> (usize, usize) {
        self.window
    }

    pub fn tangential(&self, k: usize) -> Option<&Cochain> {
        self.form.tangential(k)
    }

    pub fn normal_part(&self, k: usize) -> Option<&Cochain> {
        self.form.normal_part(k)
    }

    /// Max-slice norm of the spacetime codifferential, evaluated with the
    /// zero-extension convention outside the grid. Scalar currents are
    /// co-closed by construction.
    pub fn co_closure_residual(&self, st: &Spacetime) -> f64 {
        if self.form.degree() == 0 {
            return 0.0;
        }
        let slice = st.slice();
        let dt = st.dt();
        let mut worst: f64 = 0.0;
        for k in 0..=st.steps() {
            let mut total = 0.0;
            // tangential part of delta J: -(delta j_a + d(j_b)/dt)
            if let Some(ja) = self.form.tangential(k) {
                let mut part = if ja.degree() >= 1 {
                    slice.codifferential(ja).expect("degree checked")
                } else {
                    slice.zero(0)
                };
                if self.form.has_normal() {
                    let prev = if k > 0 {
                        self.form.normal_part(k - 1).cloned()
                    } else {
                        None
                    };
                    let next = self.form.normal_part(k + 1).cloned();
                    let zero = slice.zero(self.form.degree() - 1);
                    let vel = next
                        .unwrap_or_else(|| zero.clone())
                        .sub(&prev.unwrap_or(zero))
                        .expect("same space")
                        .scaled(1.0 / (2.0 * dt));
                    part = part.add(&vel).expect("same space");
                }
                total += slice.inner(&part, &part).expect("same space");
            }
            // normal part of delta J: delta j_b
            if let Some(jb) = self.form.normal_part(k) {
                if jb.degree() >= 1 {
                    let div = slice.codifferential(jb).expect("degree checked");
                    total += slice.inner(&div, &div).expect("same space");
                }
            }
            worst = worst.max(total.sqrt());
        }
        worst
    }

    pub fn max_slice_norm(&self, st: &Spacetime) -> f64 {
        self.form.max_slice_norm(st)
    }

    /// Checks co-closure against `tolerance * scale`.
    pub fn require_co_closed(&self, st: &Spacetime, tolerance: f64) -> Result<()> {
        let residual = self.co_closure_residual(st);
        let scale = self.max_slice_norm(st).max(1e-300);
        if residual > tolerance * scale {
            return Err(Error::NotCoClosed {
                residual: residual / scale,
                tolerance,
            });
        }
        Ok(())
    }
}

fn march_component(
    st: &Spacetime,
    initial: &Cochain,
    initial_velocity: &Cochain,
    source: impl Fn(usize) -> Option<Cochain>,
) -> Result<(Vec<Cochain>, Cochain, Cochain)> {
    let slice = st.slice();
    let dt = st.dt();
    let steps = st.steps();
    let accel = |u: &Cochain, k: usize| -> Result<Cochain> {
        let mut acc = slice.laplacian(u)?.scaled(-1.0);
        if let Some(j) = source(k) {
            acc = acc.add(&j)?;
        }
        Ok(acc)
    };
    let mut series = Vec::with_capacity(steps + 1);
    series.push(initial.clone());
    let mut velocity = initial_velocity.axpy(dt / 2.0, &accel(initial, 0)?)?;
    for k in 0..steps {
        let next = series[k].axpy(dt, &velocity)?;
        series.push(next);
        if k + 1 < steps {
            velocity = velocity.axpy(dt, &accel(&series[k + 1], k + 1)?)?;
        }
    }
    let final_velocity = velocity.axpy(dt / 2.0, &accel(&series[steps], steps)?)?;
    Ok((series, initial_velocity.clone(), final_velocity))
}

/// Integrates the block-diagonal wave system from Cauchy data, with an
/// optional source current of matching degree.
pub fn leapfrog_evolve(
    data: &CauchyData,
    source: Option<&Current>,
    st: &Spacetime,
) -> Result<SpacetimeForm> {
    let slice = st.slice();
    let p = data.degree();
    if p > slice.dim() {
        return Err(Error::DegreeOutOfRange {
            degree: p,
            dim: slice.dim(),
        });
    }
    if let Some(j) = source {
        if j.degree() != p {
            return Err(Error::DegreeMismatch(p, j.degree()));
        }
    }
    if !data.value().complex().same_shape(slice.complex()) {
        return Err(Error::ComplexMismatch);
    }

    let a0 = data.value().clone();
    // value trace is a; normal trace is -b; normal-derivative trace is
    // d b - da/dt; divergence trace is delta a + db/dt
    let b0 = data.normal().map(|an| an.scaled(-1.0));
    let mut a_dot0 = data.velocity().scaled(-1.0);
    if let Some(b) = &b0 {
        if p <= slice.dim() {
            a_dot0 = a_dot0.add(&slice.d(b)?)?;
        }
    }
    let (a_series, a_start, a_end) = march_component(st, &a0, &a_dot0, |k| {
        source.and_then(|j| j.tangential(k)).cloned()
    })?;

    let mut form = SpacetimeForm {
        degree: p,
        a: a_series,
        b: Vec::new(),
        ends: EndVelocities {
            a_start: Some(a_start),
            a_end: Some(a_end),
            b_start: None,
            b_end: None,
        },
    };

    if let Some(b0) = b0 {
        let b_dot0 = data
            .divergence()
            .expect("divergence datum exists whenever p >= 1")
            .sub(&slice.codifferential(&a0)?)?;
        let (b_series, b_start, b_end) = march_component(st, &b0, &b_dot0, |k| {
            source.and_then(|j| j.normal_part(k)).cloned()
        })?;
        form.b = b_series;
        form.ends.b_start = Some(b_start);
        form.ends.b_end = Some(b_end);
    }
    Ok(form)
}

/// One of the four Cauchy traces of a form at a slice. Returns `None` when
/// the requested trace is structurally empty at this degree.
pub fn trace(
    form: &SpacetimeForm,
    st: &Spacetime,
    k: usize,
    kind: TraceKind,
) -> Result<Option<Cochain>> {
    st.check_slice_index(k)?;
    let slice = st.slice();
    match kind {
        TraceKind::Value => Ok(form.tangential(k).cloned()),
        TraceKind::Normal => Ok(form.normal_part(k).map(|b| b.scaled(-1.0))),
        TraceKind::NormalDerivative => {
            let Some(a_dot) = form.tangential_velocity(st, k) else {
                return Ok(None);
            };
            let mut out = a_dot.scaled(-1.0);
            if let Some(b) = form.normal_part(k) {
                out = out.add(&slice.d(b)?)?;
            }
            Ok(Some(out))
        }
        TraceKind::Divergence => {
            if form.degree() == 0 {
                return Ok(None);
            }
            let mut out = form
                .normal_velocity(st, k)
                .expect("normal part exists for p >= 1");
            if let Some(a) = form.tangential(k) {
                if a.degree() >= 1 {
                    out = out.add(&slice.codifferential(a)?)?;
                }
            }
            Ok(Some(out))
        }
    }
}

/// Spacetime exterior derivative, with centered interior time derivatives
/// and the stored exact velocities at the boundary slices.
pub fn spacetime_d(form: &SpacetimeForm, st: &Spacetime) -> Result<SpacetimeForm> {
    let d = st.slice().dim();
    let p = form.degree();
    if p + 1 > d + 1 {
        return Err(Error::DegreeOutOfRange {
            degree: p + 1,
            dim: d + 1,
        });
    }
    let slice = st.slice();
    let slices = st.steps() + 1;
    let mut a_out = Vec::new();
    if p + 1 <= d {
        for k in 0..slices {
            a_out.push(slice.d(form.tangential(k).expect("p <= d"))?);
        }
    }
    let mut b_out = Vec::with_capacity(slices);
    for k in 0..slices {
        let mut value = form
            .tangential_velocity(st, k)
            .expect("dA needs a tangential part");
        if let Some(b) = form.normal_part(k) {
            if b.degree() < d {
                value = value.sub(&slice.d(b)?)?;
            }
        }
        b_out.push(value);
    }
    // d commutes with the time derivative, so the tangential end velocities
    // push forward exactly
    let push = |v: &Option<Cochain>| -> Option<Cochain> {
        if p + 1 <= d {
            v.as_ref().and_then(|c| slice.d(c).ok())
        } else {
            None
        }
    };
    Ok(SpacetimeForm {
        degree: p + 1,
        a: a_out,
        b: b_out,
        ends: EndVelocities {
            a_start: push(&form.ends.a_start),
            a_end: push(&form.ends.a_end),
            b_start: None,
            b_end: None,
        },
    })
}

/// Spacetime codifferential, same discretization conventions as
/// `spacetime_d`.
pub fn spacetime_delta(form: &SpacetimeForm, st: &Spacetime) -> Result<SpacetimeForm> {
    let p = form.degree();
    if p == 0 {
        return Err(Error::DegreeOutOfRange {
            degree: 0,
            dim: st.slice().dim() + 1,
        });
    }
    let slice = st.slice();
    let slices = st.steps() + 1;
    let mut a_out = Vec::with_capacity(slices);
    for k in 0..slices {
        let mut value = form
            .normal_velocity(st, k)
            .expect("normal part exists for p >= 1")
            .scaled(-1.0);
        if let Some(a) = form.tangential(k) {
            if a.degree() >= 1 {
                value = value.sub(&slice.codifferential(a)?)?;
            }
        }
        a_out.push(value);
    }
    let mut b_out = Vec::new();
    if p >= 2 {
        for k in 0..slices {
            b_out.push(slice.codifferential(form.normal_part(k).expect("p >= 2"))?);
        }
    }
    let push = |v: &Option<Cochain>| -> Option<Cochain> {
        if p >= 2 {
            v.as_ref().and_then(|c| slice.codifferential(c).ok())
        } else {
            None
        }
    };
    Ok(SpacetimeForm {
        degree: p - 1,
        a: a_out,
        b: b_out,
        ends: EndVelocities {
            a_start: None,
            a_end: None,
            b_start: push(&form.ends.b_start),
            b_end: push(&form.ends.b_end),
        },
    })
}

/// Narrow-stencil wave operator at an interior slice: second time
/// difference plus spatial Laplacian, per component.
pub fn box_at(
    form: &SpacetimeForm,
    st: &Spacetime,
    k: usize,
) -> Result<(Option<Cochain>, Option<Cochain>)> {
    if k == 0 || k >= st.steps() {
        return Err(Error::SliceOutOfRange {
            k,
            max: st.steps() - 1,
        });
    }
    let slice = st.slice();
    let dt2 = st.dt() * st.dt();
    let second = |s: &[Cochain]| -> Result<Cochain> {
        let lap = slice.laplacian(&s[k])?;
        s[k + 1]
            .axpy(-2.0, &s[k])?
            .add(&s[k - 1])?
            .scaled(1.0 / dt2)
            .add(&lap)
    };
    let a = if form.has_tangential() {
        Some(second(&form.a)?)
    } else {
        None
    };
    let b = if form.has_normal() {
        Some(second(&form.b)?)
    } else {
        None
    };
    Ok((a, b))
}

/// Max interior-slice residual of (box A - J), normalized by the magnitude
/// of the spatial and source terms.
pub fn box_residual(form: &SpacetimeForm, source: Option<&Current>, st: &Spacetime) -> f64 {
    let slice = st.slice();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 1..st.steps() {
        let (ra, rb) = box_at(form, st, k).expect("interior slice");
        let mut resid2 = 0.0;
        let mut sc = 0.0;
        if let Some(mut ra) = ra {
            if let Some(j) = source.and_then(|j| j.tangential(k)) {
                ra = ra.sub(j).expect("same space");
                sc += slice.norm(j);
            }
            resid2 += slice.inner(&ra, &ra).expect("same space");
            sc += slice.norm(&slice.laplacian(form.tangential(k).unwrap()).unwrap());
        }
        if let Some(mut rb) = rb {
            if let Some(j) = source.and_then(|j| j.normal_part(k)) {
                rb = rb.sub(j).expect("same space");
                sc += slice.norm(j);
            }
            resid2 += slice.inner(&rb, &rb).expect("same space");
            sc += slice.norm(&slice.laplacian(form.normal_part(k).unwrap()).unwrap());
        }
        worst = worst.max(resid2.sqrt());
        scale = scale.max(sc);
    }
    worst / scale.max(1e-300)
}

/// Time-quadrature (trapezoid) of the slice pairing of a form against a
/// compactly supported current of the same degree.
pub fn spacetime_pairing(form: &SpacetimeForm, f: &Current, st: &Spacetime) -> Result<f64> {
    if form.degree() != f.degree() {
        return Err(Error::DegreeMismatch(form.degree(), f.degree()));
    }
    let slice = st.slice();
    let mut total = 0.0;
    for k in 0..=st.steps() {
        let weight = if k == 0 || k == st.steps() { 0.5 } else { 1.0 };
        let mut term = 0.0;
        if let (Some(a), Some(ja)) = (form.tangential(k), f.tangential(k)) {
            term += slice.inner(a, ja)?;
        }
        if let (Some(b), Some(jb)) = (form.normal_part(k), f.normal_part(k)) {
            term += SLICE_PAIRING_SIGN * slice.inner(b, jb)?;
        }
        total += weight * st.dt() * term;
    }
    Ok(total)
}

/// The boundary bilinear of the summation-by-parts identity: the four trace
/// pairings of two equal-degree forms at one slice. Equals the discrete
/// Wronskian of the pair under the slice pairing.
pub fn trace_bilinear(
    x: &SpacetimeForm,
    y: &SpacetimeForm,
    st: &Spacetime,
    k: usize,
) -> Result<f64> {
    if x.degree() != y.degree() {
        return Err(Error::DegreeMismatch(x.degree(), y.degree()));
    }
    let slice = st.slice();
    let mut total = 0.0;
    let value_x = trace(x, st, k, TraceKind::Value)?;
    let value_y = trace(y, st, k, TraceKind::Value)?;
    let nder_x = trace(x, st, k, TraceKind::NormalDerivative)?;
    let nder_y = trace(y, st, k, TraceKind::NormalDerivative)?;
    if let (Some(vx), Some(dy)) = (&value_x, &nder_y) {
        total += slice.inner(vx, dy)?;
    }
    if let (Some(vy), Some(dx)) = (&value_y, &nder_x) {
        total -= slice.inner(vy, dx)?;
    }
    let div_x = trace(x, st, k, TraceKind::Divergence)?;
    let div_y = trace(y, st, k, TraceKind::Divergence)?;
    let nrm_x = trace(x, st, k, TraceKind::Normal)?;
    let nrm_y = trace(y, st, k, TraceKind::Normal)?;
    if let (Some(dx), Some(ny)) = (&div_x, &nrm_y) {
        total += slice.inner(dx, ny)?;
    }
    if let (Some(dy), Some(nx)) = (&div_y, &nrm_x) {
        total -= slice.inner(dy, nx)?;
    }
    Ok(total)
}

/// Residual of the representation identity: the full spacetime pairing of a
/// wave solution against a test current equals the causal source pairings
/// split at a Cauchy slice plus the trace bilinear against the propagated
/// test solution.
pub fn representation_check(
    form: &SpacetimeForm,
    source: Option<&Current>,
    f: &Current,
    k_surface: usize,
    st: &Spacetime,
) -> Result<f64> {
    st.check_slice_index(k_surface)?;
    let lhs = spacetime_pairing(form, f, st)?;

    let retarded = green::GreensOperator::retarded(st.clone()).apply(f)?;
    let advanced = green::GreensOperator::advanced(st.clone()).apply(f)?;
    let propagated = advanced.sub(&retarded)?;

    let mut source_terms = 0.0;
    if let Some(j) = source {
        let slice = st.slice();
        for k in 1..st.steps() {
            // past region pairs against the retarded solve, future against
            // the advanced one; the surface slice carries half weight in each
            let (weight_past, weight_future) = if k < k_surface {
                (1.0, 0.0)
            } else if k == k_surface {
                (0.5, 0.5)
            } else {
                (0.0, 1.0)
            };
            for (w, greens) in [(weight_past, &retarded), (weight_future, &advanced)] {
                if w == 0.0 {
                    continue;
                }
                let mut term = 0.0;
                if let (Some(ja), Some(ga)) = (j.tangential(k), greens.tangential(k)) {
                    term += slice.inner(ja, ga)?;
                }
                if let (Some(jb), Some(gb)) = (j.normal_part(k), greens.normal_part(k)) {
                    term += SLICE_PAIRING_SIGN * slice.inner(jb, gb)?;
                }
                source_terms += w * st.dt() * term;
            }
        }
    }

    let boundary = trace_bilinear(form, &propagated, st, k_surface)?;
    let rhs = source_terms + boundary;
    let scale = lhs.abs().max(source_terms.abs()).max(boundary.abs());
    Ok((lhs - rhs).abs() / scale.max(1e-300))
}

/// Residual of the discrete Green's identity over a slice window: the bulk
/// antisymmetric pairing against the wave operator balances the difference
/// of the boundary trace bilinears.
pub fn greens_identity_check(
    x: &SpacetimeForm,
    y: &SpacetimeForm,
    window: (usize, usize),
    st: &Spacetime,
) -> Result<f64> {
    let (k_lo, k_hi) = window;
    if k_lo >= k_hi || k_hi > st.steps() {
        return Err(Error::SliceOutOfRange {
            k: k_hi,
            max: st.steps(),
        });
    }
    if k_lo == 0 || k_hi == st.steps() {
        return Err(Error::SliceOutOfRange {
            k: if k_lo == 0 { 0 } else { k_hi },
            max: st.steps() - 1,
        });
    }
    let slice = st.slice();
    let mut bulk = 0.0;
    for k in (k_lo + 1)..k_hi {
        let (bx_a, bx_b) = box_at(x, st, k)?;
        let (by_a, by_b) = box_at(y, st, k)?;
        let mut term = 0.0;
        if let (Some(xa), Some(bya)) = (x.tangential(k), &by_a) {
            term += slice.inner(xa, bya)?;
        }
        if let (Some(ya), Some(bxa)) = (y.tangential(k), &bx_a) {
            term -= slice.inner(ya, bxa)?;
        }
        if let (Some(xb), Some(byb)) = (x.normal_part(k), &by_b) {
            term += SLICE_PAIRING_SIGN * slice.inner(xb, byb)?;
        }
        if let (Some(yb), Some(bxb)) = (y.normal_part(k), &bx_b) {
            term -= SLICE_PAIRING_SIGN * slice.inner(yb, bxb)?;
        }
        bulk += st.dt() * term;
    }
    // the bulk telescopes to the Wronskian of (y, x): swap orientation
    let boundary = trace_bilinear(y, x, st, k_hi)? - trace_bilinear(y, x, st, k_lo)?;
    let scale = bulk
        .abs()
        .max(boundary.abs())
        .max(x.slice_norm(st, k_lo) * y.slice_norm(st, k_lo))
        .max(x.slice_norm(st, k_hi) * y.slice_norm(st, k_hi));
    Ok((bulk - boundary).abs() / scale.max(1e-300))
}

/// The exactly conserved staggered leapfrog energy at half step k+1/2, for
/// a source-free evolution: kinetic term of the reconstructed half-step
/// velocity plus the mixed-slice potential term.
pub fn staggered_energy(form: &SpacetimeForm, st: &Spacetime, k: usize) -> Result<f64> {
    if k + 1 > st.steps() {
        return Err(Error::SliceOutOfRange {
            k,
            max: st.steps() - 1,
        });
    }
    let slice = st.slice();
    let dt = st.dt();
    let mut energy = 0.0;
    let mut add_part = |series: &[Cochain]| -> Result<()> {
        if series.is_empty() {
            return Ok(());
        }
        let vel = series[k + 1].sub(&series[k])?.scaled(1.0 / dt);
        energy += 0.5 * slice.inner(&vel, &vel)?;
        energy += 0.5 * slice.inner(&series[k], &slice.laplacian(&series[k + 1])?)?;
        Ok(())
    };
    add_part(&form.a)?;
    add_part(&form.b)?;
    Ok(energy)
}

/// Relative drift of the staggered energy over the whole run.
pub fn energy_drift(form: &SpacetimeForm, st: &Spacetime) -> Result<f64> {
    let initial = staggered_energy(form, st, 0)?;
    let mut worst: f64 = 0.0;
    for k in 0..st.steps() {
        let e = staggered_energy(form, st, k)?;
        worst = worst.max((e - initial).abs());
    }
    Ok(worst / initial.abs().max(1e-300))
}
