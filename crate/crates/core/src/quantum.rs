//! Canonical quantization over the oscillating modes.
//!
//! The one-particle machinery is built per coexact, strictly positive
//! frequency mode of the slice Laplacian: the positive bilinear form is
//! mode-diagonal, the compatible complex structure rotates (q, p) into
//! (p/w, -wq), and the projection onto positive-frequency amplitudes is
//! c = (sqrt(w) q - i p / sqrt(w)) / sqrt(2), the sign fixed by the inner
//! product identity (Ku, Kv) = mu(u,v) - (i/2) sigma(u,v). Zero-frequency
//! (harmonic) modes are not oscillators and stay out of the construction;
//! the excluded inventory is available for reporting.
//!
//! Operators act on a dense truncated symmetric Fock space, ordered by
//! occupation numbers with the first mode least significant. Unitaries are
//! matrix exponentials via Pade scaling-and-squaring.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::evolve::{spacetime_pairing, trace, Current, Spacetime, SpacetimeForm, TraceKind};
use crate::forms::{HodgeSector, ModeBasis, Slice};
use crate::green::causal_propagator;
use crate::lattice::Cochain;
use crate::phase::PhasePoint;

/// Largest admissible coherent amplitude for Weyl unitaries at the default
/// occupation cutoff; keeps truncation leakage below 1e-8.
pub const AMPLITUDE_GUARD: f64 = 0.2;

/// Relative mode-content tolerance outside the quantized subset.
pub const LEAKAGE_TOL: f64 = 1e-6;

/// Mode coordinates of a phase-space point restricted to the quantized
/// subset, with the relative content that falls outside it.
#[derive(Debug, Clone)]
pub struct ModeCoordinates {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub leakage: f64,
}

impl ModeCoordinates {
    pub fn zero(count: usize) -> Self {
        ModeCoordinates {
            q: vec![0.0; count],
            p: vec![0.0; count],
            leakage: 0.0,
        }
    }

    pub fn add(&self, other: &ModeCoordinates) -> ModeCoordinates {
        ModeCoordinates {
            q: self.q.iter().zip(&other.q).map(|(a, b)| a + b).collect(),
            p: self.p.iter().zip(&other.p).map(|(a, b)| a + b).collect(),
            leakage: self.leakage.max(other.leakage),
        }
    }

    pub fn scaled(&self, factor: f64) -> ModeCoordinates {
        ModeCoordinates {
            q: self.q.iter().map(|a| a * factor).collect(),
            p: self.p.iter().map(|a| a * factor).collect(),
            leakage: self.leakage,
        }
    }
}

/// The quantized mode subset with its frequencies and the mode-diagonal
/// one-particle structure.
#[derive(Debug, Clone)]
pub struct QuantStructure {
    degree: usize,
    modes: ModeBasis,
}

impl QuantStructure {
    /// Builds the structure over the `count` lowest coexact modes at one
    /// degree.
    pub fn new(slice: &Slice, degree: usize, count: usize) -> Result<Self> {
        let modes = slice.sector_modes(degree, HodgeSector::Coexact, count)?;
        Self::from_modes(modes)
    }

    /// Wraps an explicit mode selection; rejects zero-frequency modes,
    /// which are not oscillators.
    pub fn from_modes(modes: ModeBasis) -> Result<Self> {
        for m in 0..modes.len() {
            if modes.is_harmonic(m) || !(modes.omega(m) > 0.0) {
                return Err(Error::HarmonicMode { index: m });
            }
        }
        Ok(QuantStructure {
            degree: modes.degree(),
            modes,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn omega(&self, m: usize) -> f64 {
        self.modes.omega(m)
    }

    pub fn mode(&self, m: usize) -> &Cochain {
        self.modes.cochain(m)
    }

    pub fn modes(&self) -> &ModeBasis {
        &self.modes
    }

    /// The zero-frequency sector excluded from quantization at this degree:
    /// (mode index, eigenvalue) pairs from the full spectrum.
    pub fn harmonic_inventory(&self, slice: &Slice) -> Result<Vec<(usize, f64)>> {
        let all = slice.modes(self.degree)?;
        Ok((0..all.len())
            .filter(|&m| all.is_harmonic(m))
            .map(|m| (m, all.eigenvalue(m)))
            .collect())
    }

    /// Mode coordinates of a phase point, measuring how much of its content
    /// lies outside the quantized subset (harmonic and truncated modes).
    pub fn coordinates(&self, slice: &Slice, point: &PhasePoint) -> Result<ModeCoordinates> {
        if point.degree() != self.degree {
            return Err(Error::DegreeMismatch(point.degree(), self.degree));
        }
        let mut q = Vec::with_capacity(self.mode_count());
        let mut p = Vec::with_capacity(self.mode_count());
        let mut class_rest = point.class().clone();
        let mut mom_rest = point.momentum().clone();
        for m in 0..self.mode_count() {
            let e = self.mode(m);
            let qm = slice.inner(point.class(), e)?;
            let pm = slice.inner(point.momentum(), e)?;
            class_rest = class_rest.axpy(-qm, e)?;
            mom_rest = mom_rest.axpy(-pm, e)?;
            q.push(qm);
            p.push(pm);
        }
        let total = (slice.inner(point.class(), point.class())?
            + slice.inner(point.momentum(), point.momentum())?)
        .sqrt();
        let outside =
            (slice.inner(&class_rest, &class_rest)? + slice.inner(&mom_rest, &mom_rest)?).sqrt();
        let leakage = if total > 0.0 { outside / total } else { 0.0 };
        Ok(ModeCoordinates { q, p, leakage })
    }

    /// The positive-definite bilinear form, mode diagonal:
    /// mu(u,v) = 1/2 sum_m (w q q' + p p' / w).
    pub fn mu(&self, u: &ModeCoordinates, v: &ModeCoordinates) -> f64 {
        let mut acc = 0.0;
        for m in 0..self.mode_count() {
            let w = self.omega(m);
            acc += 0.5 * (w * u.q[m] * v.q[m] + u.p[m] * v.p[m] / w);
        }
        acc
    }

    /// The symplectic form in mode coordinates.
    pub fn sigma(&self, u: &ModeCoordinates, v: &ModeCoordinates) -> f64 {
        (0..self.mode_count())
            .map(|m| u.q[m] * v.p[m] - v.q[m] * u.p[m])
            .sum()
    }

    /// The compatible complex structure: (q, p) -> (p/w, -w q), squaring to
    /// minus the identity and turning mu into sigma/2.
    pub fn complex_structure(&self, u: &ModeCoordinates) -> ModeCoordinates {
        let mut out = ModeCoordinates::zero(self.mode_count());
        for m in 0..self.mode_count() {
            let w = self.omega(m);
            out.q[m] = u.p[m] / w;
            out.p[m] = -w * u.q[m];
        }
        out.leakage = u.leakage;
        out
    }

    /// Positive-frequency amplitudes, one per mode:
    /// c = (sqrt(w) q - i p/sqrt(w)) / sqrt(2).
    pub fn amplitudes(&self, u: &ModeCoordinates) -> Vec<Complex64> {
        (0..self.mode_count())
            .map(|m| {
                let w = self.omega(m);
                Complex64::new(
                    w.sqrt() * u.q[m] / 2.0_f64.sqrt(),
                    -u.p[m] / (w.sqrt() * 2.0_f64.sqrt()),
                )
            })
            .collect()
    }

    /// Residual of the saturation property: mu(u,u) equals a quarter of the
    /// supremum of sigma(u,v)^2/mu(v,v), attained at v = Ju.
    pub fn saturation_residual(&self, u: &ModeCoordinates) -> f64 {
        let mu_u = self.mu(u, u);
        if mu_u == 0.0 {
            return 0.0;
        }
        let ju = self.complex_structure(u);
        let sup = 0.25 * self.sigma(u, &ju).powi(2) / self.mu(&ju, &ju);
        (mu_u - sup).abs() / mu_u
    }

    /// Random scan of the saturation supremum; returns the largest sampled
    /// value of the quotient, which may approach but never exceed mu(u,u).
    pub fn saturation_scan(&self, u: &ModeCoordinates, samples: usize, seed: u64) -> f64 {
        // small deterministic xorshift generator, no external state
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).max(1);
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let mut best: f64 = 0.0;
        for _ in 0..samples {
            let mut v = ModeCoordinates::zero(self.mode_count());
            for m in 0..self.mode_count() {
                v.q[m] = next();
                v.p[m] = next();
            }
            let mv = self.mu(&v, &v);
            if mv > 1e-12 {
                best = best.max(0.25 * self.sigma(u, &v).powi(2) / mv);
            }
        }
        best
    }
}

/// A truncated symmetric Fock space: occupation cutoff per mode, dense
/// ordering with the first mode least significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpace {
    mode_count: usize,
    n_max: usize,
}

impl FockSpace {
    pub fn new(mode_count: usize, n_max: usize) -> Result<Self> {
        if mode_count == 0 || mode_count > 3 {
            return Err(Error::ValueCountMismatch {
                expected: 3,
                got: mode_count,
            });
        }
        if n_max == 0 || n_max > 6 {
            return Err(Error::ValueCountMismatch {
                expected: 6,
                got: n_max,
            });
        }
        Ok(FockSpace { mode_count, n_max })
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        (self.n_max + 1).pow(self.mode_count as u32)
    }

    pub fn occupation(&self, index: usize) -> Vec<usize> {
        let base = self.n_max + 1;
        let mut rest = index;
        (0..self.mode_count)
            .map(|_| {
                let n = rest % base;
                rest /= base;
                n
            })
            .collect()
    }

    pub fn index(&self, occupation: &[usize]) -> usize {
        let base = self.n_max + 1;
        occupation
            .iter()
            .rev()
            .fold(0, |acc, &n| acc * base + n)
    }

    /// Annihilation operator of one mode.
    pub fn annihilation(&self, mode: usize) -> DMatrix<Complex64> {
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let occ = self.occupation(col);
            if occ[mode] >= 1 {
                let mut lowered = occ.clone();
                lowered[mode] -= 1;
                out[(self.index(&lowered), col)] =
                    Complex64::new((occ[mode] as f64).sqrt(), 0.0);
            }
        }
        out
    }

    /// Projector onto the subspace with every occupation below the cutoff.
    pub fn below_cutoff_projector(&self) -> DMatrix<Complex64> {
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            if self.occupation(i).iter().all(|&n| n < self.n_max) {
                out[(i, i)] = Complex64::ONE;
            }
        }
        out
    }

    /// Normalized truncated coherent state with the given per-mode
    /// amplitudes; the standard probe for truncation effects.
    pub fn coherent_state(&self, amplitudes: &[Complex64]) -> nalgebra::DVector<Complex64> {
        let dim = self.dim();
        let mut out = nalgebra::DVector::zeros(dim);
        for i in 0..dim {
            let occ = self.occupation(i);
            let mut value = Complex64::ONE;
            for (m, &n) in occ.iter().enumerate() {
                let mut factorial = 1.0;
                for j in 1..=n {
                    factorial *= j as f64;
                }
                value *= amplitudes[m].powu(n as u32) / factorial.sqrt();
            }
            out[i] = value;
        }
        let norm = out.norm();
        out / Complex64::new(norm, 0.0)
    }
}

/// A dense operator on a truncated Fock space.
#[derive(Debug, Clone)]
pub struct FockOperator {
    space: FockSpace,
    matrix: DMatrix<Complex64>,
}

impl FockOperator {
    pub fn new(space: FockSpace, matrix: DMatrix<Complex64>) -> Self {
        FockOperator { space, matrix }
    }

    pub fn identity(space: FockSpace) -> Self {
        FockOperator {
            space,
            matrix: DMatrix::identity(space.dim(), space.dim()),
        }
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn adjoint(&self) -> FockOperator {
        FockOperator::new(self.space, self.matrix.adjoint())
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).norm()
    }

    pub fn scaled(&self, factor: Complex64) -> FockOperator {
        FockOperator::new(self.space, &self.matrix * factor)
    }

    pub fn add(&self, other: &FockOperator) -> FockOperator {
        FockOperator::new(self.space, &self.matrix + &other.matrix)
    }

    pub fn sub(&self, other: &FockOperator) -> FockOperator {
        FockOperator::new(self.space, &self.matrix - &other.matrix)
    }

    pub fn mul(&self, other: &FockOperator) -> FockOperator {
        FockOperator::new(self.space, &self.matrix * &other.matrix)
    }

    pub fn commutator(&self, other: &FockOperator) -> FockOperator {
        FockOperator::new(
            self.space,
            &self.matrix * &other.matrix - &other.matrix * &self.matrix,
        )
    }

    pub fn vacuum_expectation(&self) -> Complex64 {
        self.matrix[(0, 0)]
    }
}

/// Matrix exponential by Pade scaling-and-squaring (13th order), accurate
/// to well below the tolerances used by the Weyl checks.
pub fn expm(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = a.nrows();
    let ident: DMatrix<Complex64> = DMatrix::identity(n, n);
    // 1-norm (max column sum)
    let norm = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let theta13 = 5.371920351148152;
    let squarings = if norm > theta13 {
        (norm / theta13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / Complex64::new(2f64.powi(squarings as i32), 0.0);

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let c = |i: usize| Complex64::new(B[i], 0.0);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let u_inner = &a6 * (&a6 * c(13) + &a4 * c(11) + &a2 * c(9))
        + &a6 * c(7)
        + &a4 * c(5)
        + &a2 * c(3)
        + &ident * c(1);
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * c(12) + &a4 * c(10) + &a2 * c(8))
        + &a6 * c(6)
        + &a4 * c(4)
        + &a2 * c(2)
        + &ident * c(0);
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut result = lhs
        .lu()
        .solve(&rhs)
        .expect("Pade denominator is well conditioned");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

fn raw_coordinates_at_reference(
    structure: &QuantStructure,
    form: &SpacetimeForm,
    st: &Spacetime,
) -> Result<ModeCoordinates> {
    let slice = st.slice();
    let value = trace(form, st, 0, TraceKind::Value)?.expect("tangential part");
    let momentum = trace(form, st, 0, TraceKind::NormalDerivative)?.expect("tangential part");
    let mut coords = ModeCoordinates::zero(structure.mode_count());
    for m in 0..structure.mode_count() {
        coords.q[m] = slice.inner(&value, structure.mode(m))?;
        coords.p[m] = slice.inner(&momentum, structure.mode(m))?;
    }
    // gauge-invariant content outside the quantized subset: coexact plus
    // harmonic parts of the traces, minus what the subset captures
    let parts_v = slice.hodge_decompose(&value)?;
    let parts_m = slice.hodge_decompose(&momentum)?;
    let mut rest_v = parts_v.coexact.add(&parts_v.harmonic)?;
    let mut rest_m = parts_m.coexact.add(&parts_m.harmonic)?;
    for m in 0..structure.mode_count() {
        rest_v = rest_v.axpy(-coords.q[m], structure.mode(m))?;
        rest_m = rest_m.axpy(-coords.p[m], structure.mode(m))?;
    }
    let outside = (slice.inner(&rest_v, &rest_v)? + slice.inner(&rest_m, &rest_m)?).sqrt();
    let total = form.max_slice_norm(st)
        + coords
            .q
            .iter()
            .chain(coords.p.iter())
            .map(|x| x.abs())
            .fold(0.0, f64::max);
    coords.leakage = if total > 0.0 { outside / total } else { 0.0 };
    Ok(coords)
}

fn dominant_outside_modes(
    structure: &QuantStructure,
    slice: &Slice,
    value: &Cochain,
) -> Result<Vec<usize>> {
    let all = slice.sector_modes(
        structure.degree(),
        HodgeSector::Coexact,
        structure.mode_count().min(slice.complex().cell_count(structure.degree())),
    )?;
    let _ = all;
    // report the largest coefficients against the full coexact spectrum
    let full = slice.modes(structure.degree())?;
    let mut scored: Vec<(f64, usize)> = (structure.mode_count()..full.len())
        .map(|m| {
            let coeff = slice
                .inner(value, full.cochain(m))
                .unwrap_or(0.0)
                .abs();
            (coeff, m)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    Ok(scored.into_iter().take(3).map(|(_, m)| m).collect())
}

fn smeared_operator(
    structure: &QuantStructure,
    fock: FockSpace,
    amplitudes: &[Complex64],
) -> FockOperator {
    let dim = fock.dim();
    let mut matrix: DMatrix<Complex64> = DMatrix::zeros(dim, dim);
    for m in 0..structure.mode_count().min(fock.mode_count()) {
        let a = fock.annihilation(m);
        let i = Complex64::I;
        matrix += &a * (i * amplitudes[m].conj()) - a.adjoint() * (i * amplitudes[m]);
    }
    FockOperator::new(fock, matrix)
}

fn field_operator_impl(
    current: &Current,
    structure: &QuantStructure,
    fock: FockSpace,
    st: &Spacetime,
    enforce: bool,
) -> Result<(FockOperator, f64)> {
    if fock.mode_count() != structure.mode_count() {
        return Err(Error::ValueCountMismatch {
            expected: structure.mode_count(),
            got: fock.mode_count(),
        });
    }
    let propagated = causal_propagator(current, st)?;
    let coords = raw_coordinates_at_reference(structure, &propagated, st)?;
    if enforce && coords.leakage > LEAKAGE_TOL {
        let value = trace(&propagated, st, 0, TraceKind::Value)?.expect("tangential part");
        let modes = dominant_outside_modes(structure, st.slice(), &value)?;
        return Err(Error::ModeLeakage {
            leakage: coords.leakage,
            tolerance: LEAKAGE_TOL,
            modes,
        });
    }
    let amplitudes = structure.amplitudes(&coords);
    Ok((smeared_operator(structure, fock, &amplitudes), coords.leakage))
}

/// The smeared field operator of a co-closed current: the propagated
/// current's phase-space data, projected to positive-frequency amplitudes
/// and loaded onto ladder operators. Hermitian and linear in the current.
pub fn field_operator(
    current: &Current,
    structure: &QuantStructure,
    fock: FockSpace,
    st: &Spacetime,
) -> Result<FockOperator> {
    current.require_co_closed(st, LEAKAGE_TOL)?;
    field_operator_impl(current, structure, fock, st, true).map(|(op, _)| op)
}

/// Reported leakage of a current's propagated mode content.
pub fn mode_leakage(
    current: &Current,
    structure: &QuantStructure,
    st: &Spacetime,
) -> Result<f64> {
    let propagated = causal_propagator(current, st)?;
    Ok(raw_coordinates_at_reference(structure, &propagated, st)?.leakage)
}

/// Weak field-equation residual: the operator smeared with the spacetime
/// codifferential of the derivative of an arbitrary compact test form must
/// vanish, relative to the operator the test form itself produces.
pub fn weak_maxwell_check(
    theta: &Current,
    structure: &QuantStructure,
    fock: FockSpace,
    st: &Spacetime,
) -> Result<f64> {
    let d_theta = crate::evolve::spacetime_d(theta.form(), st)?;
    let dd_theta = crate::evolve::spacetime_delta(&d_theta, st)?;
    let (k0, k1) = theta.window();
    let window = (k0.saturating_sub(2), (k1 + 2).min(st.steps()));
    let gauge_current = Current::new(dd_theta, window, st)?;
    let (gauge_op, _) = field_operator_impl(&gauge_current, structure, fock, st, false)?;
    let (scale_op, _) = field_operator_impl(theta, structure, fock, st, false)?;
    Ok(gauge_op.norm() / scale_op.norm().max(1e-300))
}

/// Outcome of a canonical-commutator comparison.
#[derive(Debug, Clone, Copy)]
pub struct CcrReport {
    /// Frobenius defect of the commutator against i times the classical
    /// pairing, restricted below the occupation cutoff, relative to the
    /// pairing scale.
    pub restricted_residual: f64,
    /// Defect measured on a truncated coherent probe state built from the
    /// first current's amplitudes; decreases as the cutoff grows.
    pub probe_residual: f64,
    /// The classical pairing of the first current against the propagated
    /// second one.
    pub classical_pairing: f64,
    /// Norms of the two smeared operators, for absolute comparisons.
    pub operator_scale: f64,
}

/// Compares the commutator of two smeared field operators with i times the
/// classical pairing.
pub fn ccr_check(
    f: &Current,
    g: &Current,
    structure: &QuantStructure,
    fock: FockSpace,
    st: &Spacetime,
) -> Result<CcrReport> {
    let op_f = field_operator(f, structure, fock, st)?;
    let op_g = field_operator(g, structure, fock, st)?;
    let commutator = op_f.commutator(&op_g);

    let propagated_g = causal_propagator(g, st)?;
    let classical = spacetime_pairing(&propagated_g, f, st)?;
    let target = Complex64::new(0.0, classical);

    let projector = fock.below_cutoff_projector();
    let defect = &projector
        * (commutator.matrix() - DMatrix::identity(fock.dim(), fock.dim()) * target)
        * &projector;
    let sub_dim = (0..fock.dim())
        .filter(|&i| fock.occupation(i).iter().all(|&n| n < fock.n_max()))
        .count() as f64;
    let operator_scale = op_f.norm() * op_g.norm() / fock.dim() as f64;
    let scale = (classical.abs() * sub_dim.sqrt()).max(operator_scale).max(1e-300);
    let restricted_residual = defect.norm() / scale;

    // coherent probe from the first current's amplitudes, kept within the
    // Weyl amplitude guard
    let propagated_f = causal_propagator(f, st)?;
    let coords = raw_coordinates_at_reference(structure, &propagated_f, st)?;
    let mut amplitudes = structure.amplitudes(&coords);
    let total: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if total > AMPLITUDE_GUARD {
        let shrink = Complex64::new(AMPLITUDE_GUARD / total, 0.0);
        for c in amplitudes.iter_mut() {
            *c *= shrink;
        }
    }
    let probe = fock.coherent_state(&amplitudes);
    let probe_defect = commutator.matrix() * &probe - &probe * target;
    let probe_residual = probe_defect.norm() / classical.abs().max(operator_scale).max(1e-300);

    Ok(CcrReport {
        restricted_residual,
        probe_residual,
        classical_pairing: classical,
        operator_scale: op_f.norm() * op_g.norm(),
    })
}

/// The Weyl unitary of a phase-space displacement given in mode
/// coordinates. Amplitudes are guarded so truncation leakage stays below
/// the tolerance of the relation checks.
pub fn weyl(
    coords: &ModeCoordinates,
    structure: &QuantStructure,
    fock: FockSpace,
) -> Result<FockOperator> {
    let amplitudes = structure.amplitudes(coords);
    let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > AMPLITUDE_GUARD {
        return Err(Error::AmplitudeGuard {
            norm,
            guard: AMPLITUDE_GUARD,
        });
    }
    let generator = smeared_operator(structure, fock, &amplitudes);
    // exp(i op): the generator is hermitian, the exponent anti-hermitian
    let exponent = generator.matrix() * Complex64::I;
    Ok(FockOperator::new(fock, expm(&exponent)))
}

/// Residual of the composition law
/// W(u) W(v) = exp(-i sigma(u,v)/2) W(u+v).
pub fn weyl_relation_residual(
    u: &ModeCoordinates,
    v: &ModeCoordinates,
    structure: &QuantStructure,
    fock: FockSpace,
) -> Result<f64> {
    let w_u = weyl(u, structure, fock)?;
    let w_v = weyl(v, structure, fock)?;
    let w_uv = weyl(&u.add(v), structure, fock)?;
    let phase = Complex64::from_polar(1.0, -0.5 * structure.sigma(u, v));
    let lhs = w_u.mul(&w_v);
    let rhs = w_uv.scaled(phase);
    Ok(lhs.sub(&rhs).norm() / rhs.norm().max(1e-300))
}
