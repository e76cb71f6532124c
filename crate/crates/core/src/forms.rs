//! Discrete exterior calculus on a spatial slice.
//!
//! The metric enters through a diagonal Hodge star: every p-cell carries a
//! positive weight (dual volume over primal volume), and the codifferential
//! is *defined* as the exact adjoint of the coboundary under the weighted
//! pairing. That choice makes the duality `<d a, u> = <a, delta u>` hold to
//! machine precision and pins every downstream sign convention.
//!
//! Elliptic solves (Hodge decomposition, potential reconstruction) run
//! through a cached dense eigenbasis of the Laplacian, which is plenty at
//! the lattice sizes this crate targets and keeps everything deterministic.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lattice::{Cochain, CubicalComplex};

/// Relative eigenvalue threshold below which a mode counts as harmonic.
pub const HARMONIC_TOL: f64 = 1e-10;

/// Default relative tolerance for the elliptic solvers' pre- and post-checks.
pub const SOLVE_TOL: f64 = 1e-8;

/// Diagonal spatial metric: a positive scale factor per axis, sampled at
/// cell barycenters. `Flat` is the uniform torus metric.
#[derive(Debug, Clone, Copy)]
pub enum SpatialMetric {
    Flat,
    Diagonal(fn(axis: usize, point: &[f64]) -> f64),
}

impl SpatialMetric {
    fn axis_scale(&self, axis: usize, point: &[f64]) -> f64 {
        match self {
            SpatialMetric::Flat => 1.0,
            SpatialMetric::Diagonal(f) => f(axis, point),
        }
    }
}

/// Orthonormal eigencochains of the Laplacian at one degree, eigenvalues
/// ascending, harmonic subspace flagged.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    degree: usize,
    eigenvalues: Vec<f64>,
    omegas: Vec<f64>,
    harmonic: Vec<bool>,
    cochains: Vec<Cochain>,
}

impl ModeBasis {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalue(&self, m: usize) -> f64 {
        self.eigenvalues[m]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Frequency sqrt(lambda).
    pub fn omega(&self, m: usize) -> f64 {
        self.omegas[m]
    }

    pub fn is_harmonic(&self, m: usize) -> bool {
        self.harmonic[m]
    }

    pub fn harmonic_count(&self) -> usize {
        self.harmonic.iter().filter(|&&h| h).count()
    }

    pub fn cochain(&self, m: usize) -> &Cochain {
        &self.cochains[m]
    }

    fn truncated(&self, count: usize) -> ModeBasis {
        ModeBasis {
            degree: self.degree,
            eigenvalues: self.eigenvalues[..count].to_vec(),
            omegas: self.omegas[..count].to_vec(),
            harmonic: self.harmonic[..count].to_vec(),
            cochains: self.cochains[..count].to_vec(),
        }
    }

    /// Mode table as CSV rows `mode,eigenvalue,omega,harmonic`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> crate::error::Result<()> {
        writeln!(out, "mode,eigenvalue,omega,harmonic")?;
        for m in 0..self.len() {
            writeln!(
                out,
                "{m},{},{},{}",
                self.eigenvalues[m], self.omegas[m], self.harmonic[m] as u8
            )?;
        }
        Ok(())
    }
}

/// Result of a Hodge decomposition u = d(alpha) + delta(beta) + h.
#[derive(Debug, Clone)]
pub struct HodgeParts {
    pub exact: Cochain,
    pub coexact: Cochain,
    pub harmonic: Cochain,
}

/// The three orthogonal sectors of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HodgeSector {
    Exact,
    Coexact,
    Harmonic,
}

/// A discretized Cauchy slice: complex, metric weights, and a lazily built
/// spectral cache per degree. Immutable after construction, shareable.
#[derive(Debug)]
pub struct Slice {
    complex: Arc<CubicalComplex>,
    metric: SpatialMetric,
    weights: Vec<Vec<f64>>,
    spectra: Vec<OnceLock<Option<ModeBasis>>>,
}

impl Slice {
    pub fn new(complex: Arc<CubicalComplex>, metric: SpatialMetric) -> Result<Arc<Self>> {
        let d = complex.dim();
        let mut weights = Vec::with_capacity(d + 1);
        for p in 0..=d {
            let mut w = Vec::with_capacity(complex.cell_count(p));
            for cell in 0..complex.cell_count(p) {
                let axes = complex.cell_axes(p, cell);
                let x = complex.barycenter(p, cell);
                let mut value = 1.0;
                for axis in 0..d {
                    let factor = metric.axis_scale(axis, &x) * complex.spacing(axis);
                    if axes.contains(&axis) {
                        value /= factor;
                    } else {
                        value *= factor;
                    }
                }
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::NonPositiveWeight {
                        degree: p,
                        cell,
                        value,
                    });
                }
                w.push(value);
            }
            weights.push(w);
        }
        let spectra = (0..=d).map(|_| OnceLock::new()).collect();
        Ok(Arc::new(Slice {
            complex,
            metric,
            weights,
            spectra,
        }))
    }

    pub fn flat(complex: Arc<CubicalComplex>) -> Result<Arc<Self>> {
        Self::new(complex, SpatialMetric::Flat)
    }

    pub fn complex(&self) -> &Arc<CubicalComplex> {
        &self.complex
    }

    pub fn metric(&self) -> SpatialMetric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.complex.dim()
    }

    /// Diagonal Hodge weights at one degree.
    pub fn weights(&self, degree: usize) -> &[f64] {
        &self.weights[degree]
    }

    pub fn zero(&self, degree: usize) -> Cochain {
        Cochain::zero(self.complex.clone(), degree).expect("degree validated by caller")
    }

    /// Metric pairing: sum over cells of w * u * v, in fixed cell order.
    pub fn inner(&self, u: &Cochain, v: &Cochain) -> Result<f64> {
        u.same_space(v)?;
        let w = &self.weights[u.degree()];
        let mut acc = 0.0;
        for ((&wi, &ui), &vi) in w.iter().zip(u.values()).zip(v.values()) {
            acc += wi * (ui * vi);
        }
        Ok(acc)
    }

    pub fn norm(&self, u: &Cochain) -> f64 {
        self.inner(u, u).expect("norm of a slice cochain").sqrt()
    }

    /// Coboundary (exterior derivative).
    pub fn d(&self, u: &Cochain) -> Result<Cochain> {
        self.complex.coboundary(u)
    }

    /// Codifferential: the exact adjoint of `d` under `inner`.
    pub fn codifferential(&self, u: &Cochain) -> Result<Cochain> {
        let p = u.degree();
        if p == 0 {
            return Err(Error::DegreeOutOfRange {
                degree: 0,
                dim: self.dim(),
            });
        }
        let mut out = vec![0.0; self.complex.cell_count(p - 1)];
        let w_p = &self.weights[p];
        for cell in 0..self.complex.cell_count(p) {
            let scaled = w_p[cell] * u.values()[cell];
            for &(facet, sign) in self.complex.boundary_of(p, cell) {
                out[facet] += sign as f64 * scaled;
            }
        }
        let w_q = &self.weights[p - 1];
        for (v, &wq) in out.iter_mut().zip(w_q.iter()) {
            *v /= wq;
        }
        Cochain::from_values(self.complex.clone(), p - 1, out)
    }

    /// Positive semi-definite Laplacian (delta d + d delta).
    pub fn laplacian(&self, u: &Cochain) -> Result<Cochain> {
        let p = u.degree();
        let mut out = self.zero(p);
        if p < self.dim() {
            out = out.add(&self.codifferential(&self.d(u)?)?)?;
        }
        if p > 0 {
            out = out.add(&self.d(&self.codifferential(u)?)?)?;
        }
        Ok(out)
    }

    /// Rigorous upper bound on the largest Laplacian eigenvalue over all
    /// degrees; tight for the flat metric. Used for the CFL guard.
    pub fn lambda_max_bound(&self) -> f64 {
        let d = self.dim();
        let mut bound: f64 = 0.0;
        // operator norm bound for d at each degree:
        // |d u|^2 <= 2(p+1) max_cell (sum of cofacet weights / cell weight) |u|^2
        let mut dnorm2 = vec![0.0; d + 1];
        for p in 0..d {
            let mut cofacet_sum = vec![0.0; self.complex.cell_count(p)];
            for cell in 0..self.complex.cell_count(p + 1) {
                let w = self.weights[p + 1][cell];
                for &(facet, _) in self.complex.boundary_of(p + 1, cell) {
                    cofacet_sum[facet] += w;
                }
            }
            let ratio = cofacet_sum
                .iter()
                .zip(self.weights[p].iter())
                .map(|(&s, &w)| s / w)
                .fold(0.0f64, f64::max);
            dnorm2[p] = 2.0 * (p + 1) as f64 * ratio;
        }
        for p in 0..=d {
            let mut b = 0.0;
            if p < d {
                b += dnorm2[p];
            }
            if p > 0 {
                b += dnorm2[p - 1];
            }
            bound = bound.max(b);
        }
        bound
    }

    /// Full Laplacian eigenbasis at one degree (cached).
    pub fn modes(&self, degree: usize) -> Result<&ModeBasis> {
        if degree > self.dim() {
            return Err(Error::DegreeOutOfRange {
                degree,
                dim: self.dim(),
            });
        }
        let cell = &self.spectra[degree];
        let built = cell.get_or_init(|| self.build_modes(degree));
        built.as_ref().ok_or(Error::EigenFailure {
            degree,
            size: self.complex.cell_count(degree),
        })
    }

    fn build_modes(&self, degree: usize) -> Option<ModeBasis> {
        let n = self.complex.cell_count(degree);
        let w = &self.weights[degree];
        let sqrt_w: Vec<f64> = w.iter().map(|&x| x.sqrt()).collect();

        // Symmetrized operator S = W^{1/2} Lap W^{-1/2}, assembled column by
        // column through the matrix-free Laplacian.
        let mut matrix = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut unit = self.zero(degree);
            unit.values_mut()[j] = 1.0 / sqrt_w[j];
            let lap = self.laplacian(&unit).ok()?;
            for i in 0..n {
                matrix[(i, j)] = sqrt_w[i] * lap.values()[i];
            }
        }
        // enforce exact symmetry before factorization
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
                matrix[(i, j)] = avg;
                matrix[(j, i)] = avg;
            }
        }

        let eig = matrix.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .unwrap()
                .then(a.cmp(&b))
        });

        let lambda_max = order
            .last()
            .map(|&m| eig.eigenvalues[m].max(0.0))
            .unwrap_or(0.0);
        let tol = HARMONIC_TOL * lambda_max.max(1e-300);

        let mut eigenvalues = Vec::with_capacity(n);
        let mut omegas = Vec::with_capacity(n);
        let mut harmonic = Vec::with_capacity(n);
        let mut cochains = Vec::with_capacity(n);
        for &m in &order {
            let lambda = eig.eigenvalues[m].max(0.0);
            let is_harmonic = lambda <= tol;
            let col = eig.eigenvectors.column(m);
            // deterministic sign: largest-magnitude entry made positive
            let mut pivot = 0;
            for i in 0..n {
                if col[i].abs() > col[pivot].abs() {
                    pivot = i;
                }
            }
            let flip = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
            let values: Vec<f64> = (0..n).map(|i| flip * col[i] / sqrt_w[i]).collect();
            let cochain = Cochain::from_values(self.complex.clone(), degree, values).ok()?;
            eigenvalues.push(lambda);
            omegas.push(if is_harmonic { 0.0 } else { lambda.sqrt() });
            harmonic.push(is_harmonic);
            cochains.push(cochain);
        }
        Some(ModeBasis {
            degree,
            eigenvalues,
            omegas,
            harmonic,
            cochains,
        })
    }

    /// The `count` lowest eigenmodes at one degree.
    pub fn eigenmodes(&self, degree: usize, count: usize) -> Result<ModeBasis> {
        let n = self.complex.cell_count(degree);
        if count > n {
            return Err(Error::ValueCountMismatch {
                expected: n,
                got: count,
            });
        }
        Ok(self.modes(degree)?.truncated(count))
    }

    /// The `count` lowest eigenmodes lying in one Hodge sector.
    ///
    /// Degenerate eigenspaces of the torus mix exact and coexact fields, so
    /// the sector projector is applied inside each eigenvalue cluster and
    /// the projections re-orthonormalized in ascending order.
    pub fn sector_modes(
        &self,
        degree: usize,
        sector: HodgeSector,
        count: usize,
    ) -> Result<ModeBasis> {
        let all = self.modes(degree)?;
        let lambda_max = all
            .eigenvalues()
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(1e-300);
        let cluster_tol = 1e-8 * lambda_max;

        let mut eigenvalues = Vec::new();
        let mut omegas = Vec::new();
        let mut harmonic = Vec::new();
        let mut cochains: Vec<Cochain> = Vec::new();
        let mut cluster_start = 0;
        let mut m = 0;
        while m < all.len() && cochains.len() < count {
            if m > 0 && (all.eigenvalue(m) - all.eigenvalue(m - 1)).abs() > cluster_tol {
                cluster_start = cochains.len();
            }
            let is_harmonic = all.is_harmonic(m);
            let keep = match sector {
                HodgeSector::Harmonic => is_harmonic,
                HodgeSector::Exact | HodgeSector::Coexact => !is_harmonic,
            };
            if keep {
                let candidate = if is_harmonic {
                    all.cochain(m).clone()
                } else {
                    let parts = self.hodge_decompose(all.cochain(m))?;
                    match sector {
                        HodgeSector::Exact => parts.exact,
                        HodgeSector::Coexact => parts.coexact,
                        HodgeSector::Harmonic => unreachable!(),
                    }
                };
                // Gram-Schmidt against the accepted members of this cluster
                let mut vec = candidate;
                for prior in &cochains[cluster_start..] {
                    let overlap = self.inner(&vec, prior)?;
                    vec = vec.axpy(-overlap, prior)?;
                }
                let norm = self.norm(&vec);
                if norm > 1e-6 {
                    eigenvalues.push(all.eigenvalue(m));
                    omegas.push(all.omega(m));
                    harmonic.push(is_harmonic);
                    cochains.push(vec.scaled(1.0 / norm));
                }
            }
            m += 1;
        }
        if cochains.len() < count {
            return Err(Error::ValueCountMismatch {
                expected: count,
                got: cochains.len(),
            });
        }
        Ok(ModeBasis {
            degree,
            eigenvalues,
            omegas,
            harmonic,
            cochains,
        })
    }

    /// Solves Lap x = rhs on the orthogonal complement of the harmonic
    /// subspace (harmonic content of rhs is ignored).
    fn poisson_nonharmonic(&self, rhs: &Cochain) -> Result<Cochain> {
        let modes = self.modes(rhs.degree())?;
        let mut x = self.zero(rhs.degree());
        for m in 0..modes.len() {
            if modes.is_harmonic(m) {
                continue;
            }
            let coeff = self.inner(rhs, modes.cochain(m))? / modes.eigenvalue(m);
            x = x.axpy(coeff, modes.cochain(m))?;
        }
        Ok(x)
    }

    /// Projection of `u` onto the harmonic subspace at its degree.
    pub fn harmonic_part(&self, u: &Cochain) -> Result<Cochain> {
        let modes = self.modes(u.degree())?;
        let mut h = self.zero(u.degree());
        for m in 0..modes.len() {
            if !modes.is_harmonic(m) {
                break; // ascending order puts the kernel first
            }
            let coeff = self.inner(u, modes.cochain(m))?;
            h = h.axpy(coeff, modes.cochain(m))?;
        }
        Ok(h)
    }

    /// u = d(alpha) + delta(beta) + h with mutually orthogonal parts.
    pub fn hodge_decompose(&self, u: &Cochain) -> Result<HodgeParts> {
        let p = u.degree();
        let harmonic = self.harmonic_part(u)?;
        let exact = if p > 0 {
            let alpha = self.poisson_nonharmonic(&self.codifferential(u)?)?;
            self.d(&alpha)?
        } else {
            self.zero(p)
        };
        let coexact = if p < self.dim() {
            let beta = self.poisson_nonharmonic(&self.d(u)?)?;
            self.codifferential(&beta)?
        } else {
            self.zero(p)
        };
        let sum = exact.add(&coexact)?.add(&harmonic)?;
        let residual = self.norm(&u.sub(&sum)?);
        let tolerance = 1e-9 * self.norm(u).max(1e-300);
        if residual > tolerance && self.norm(u) > 0.0 {
            return Err(Error::SolverFailure {
                degree: p,
                residual,
                tolerance,
            });
        }
        Ok(HodgeParts {
            exact,
            coexact,
            harmonic,
        })
    }

    /// Finds omega with delta(omega) = psi, realized as d applied to a
    /// Poisson solve. Rejects psi with exact or harmonic content, which the
    /// torus topology makes unsolvable.
    pub fn solve_coderivative(&self, psi: &Cochain) -> Result<Cochain> {
        let q = psi.degree();
        if q + 1 > self.dim() {
            return Err(Error::DegreeOutOfRange {
                degree: q + 1,
                dim: self.dim(),
            });
        }
        let scale = self.norm(psi);
        if scale == 0.0 {
            return Ok(self.zero(q + 1));
        }
        let parts = self.hodge_decompose(psi)?;
        let exact = self.norm(&parts.exact);
        let harmonic = self.norm(&parts.harmonic);
        if exact > SOLVE_TOL * scale || harmonic > SOLVE_TOL * scale {
            return Err(Error::NotCoexact {
                exact,
                harmonic,
                tolerance: SOLVE_TOL * scale,
            });
        }
        let x = self.poisson_nonharmonic(psi)?;
        let omega = self.d(&x)?;
        let residual = self.norm(&self.codifferential(&omega)?.sub(psi)?);
        if residual > SOLVE_TOL * scale {
            return Err(Error::SolverFailure {
                degree: q,
                residual,
                tolerance: SOLVE_TOL * scale,
            });
        }
        Ok(omega)
    }

    /// Finds a potential with d(potential) = f0. Rejects f0 with coexact or
    /// harmonic content (the cohomological obstruction).
    pub fn solve_exterior(&self, f0: &Cochain) -> Result<Cochain> {
        let p = f0.degree();
        if p == 0 {
            return Err(Error::DegreeOutOfRange {
                degree: 0,
                dim: self.dim(),
            });
        }
        let scale = self.norm(f0);
        if scale == 0.0 {
            return Ok(self.zero(p - 1));
        }
        let parts = self.hodge_decompose(f0)?;
        let coexact = self.norm(&parts.coexact);
        let harmonic = self.norm(&parts.harmonic);
        if coexact > SOLVE_TOL * scale || harmonic > SOLVE_TOL * scale {
            return Err(Error::NotExact {
                coexact,
                harmonic,
                tolerance: SOLVE_TOL * scale,
            });
        }
        let x = self.poisson_nonharmonic(f0)?;
        let a0 = self.codifferential(&x)?;
        let residual = self.norm(&self.d(&a0)?.sub(f0)?);
        if residual > SOLVE_TOL * scale {
            return Err(Error::SolverFailure {
                degree: p,
                residual,
                tolerance: SOLVE_TOL * scale,
            });
        }
        Ok(a0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::{PI, TAU};

    fn circle(n: usize) -> Arc<Slice> {
        Slice::flat(CubicalComplex::build(1, n, &[TAU]).unwrap()).unwrap()
    }

    fn torus2(n: usize) -> Arc<Slice> {
        Slice::flat(CubicalComplex::build(2, n, &[TAU, TAU]).unwrap()).unwrap()
    }

    fn wavy_metric() -> SpatialMetric {
        SpatialMetric::Diagonal(|axis, x| {
            1.0 + 0.3 * (x[0] + 0.7 * x[axis % x.len()]).sin().powi(2)
        })
    }

    fn random_cochain(slice: &Slice, degree: usize, rng: &mut ChaCha12Rng) -> Cochain {
        Cochain::from_fn(slice.complex().clone(), degree, |_| {
            rng.random_range(-1.0..1.0)
        })
        .unwrap()
    }

    #[test]
    fn vertex_weights_sum_to_circumference() {
        let slice = circle(4);
        let ones = Cochain::from_fn(slice.complex().clone(), 0, |_| 1.0).unwrap();
        let total = slice.inner(&ones, &ones).unwrap();
        assert!((total - TAU).abs() < 1e-14);
        // edge weight is 1/dx on the flat circle
        assert!((slice.weights(1)[0] - 4.0 / TAU).abs() < 1e-14);
    }

    #[test]
    fn inner_is_symmetric_and_positive() {
        let slice = torus2(3);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let u = random_cochain(&slice, 1, &mut rng);
        let v = random_cochain(&slice, 1, &mut rng);
        assert_eq!(
            slice.inner(&u, &v).unwrap().to_bits(),
            slice.inner(&v, &u).unwrap().to_bits()
        );
        assert!(slice.inner(&u, &u).unwrap() > 0.0);
        let zero = slice.zero(1);
        assert_eq!(slice.inner(&zero, &zero).unwrap(), 0.0);
        let w = random_cochain(&slice, 2, &mut rng);
        assert!(matches!(
            slice.inner(&u, &w),
            Err(Error::DegreeMismatch(1, 2))
        ));
    }

    #[test]
    fn codifferential_reproduces_circle_stencil() {
        let n = 8;
        let slice = circle(n);
        let dx = TAU / n as f64;
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let u = random_cochain(&slice, 0, &mut rng);
        let lap = slice.codifferential(&slice.d(&u).unwrap()).unwrap();
        for i in 0..n {
            let expected = (2.0 * u.values()[i]
                - u.values()[(i + n - 1) % n]
                - u.values()[(i + 1) % n])
                / (dx * dx);
            assert!((lap.values()[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn codifferential_of_constant_edge_field_vanishes() {
        let slice = circle(6);
        let ones = Cochain::from_fn(slice.complex().clone(), 1, |_| 1.0).unwrap();
        let div = slice.codifferential(&ones).unwrap();
        assert!(slice.norm(&div) < 1e-14);
        let vertex = slice.zero(0);
        assert!(matches!(
            slice.codifferential(&vertex),
            Err(Error::DegreeOutOfRange { degree: 0, .. })
        ));
    }

    #[test]
    fn codifferential_is_exact_adjoint_of_coboundary() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for metric in [SpatialMetric::Flat, wavy_metric()] {
            let complex = CubicalComplex::build(2, 4, &[1.0, 1.7]).unwrap();
            let slice = Slice::new(complex, metric).unwrap();
            for p in 0..2usize {
                let mut worst: f64 = 0.0;
                for _ in 0..100 {
                    let alpha = random_cochain(&slice, p, &mut rng);
                    let u = random_cochain(&slice, p + 1, &mut rng);
                    let lhs = slice.inner(&slice.d(&alpha).unwrap(), &u).unwrap();
                    let rhs = slice
                        .inner(&alpha, &slice.codifferential(&u).unwrap())
                        .unwrap();
                    let scale = lhs.abs().max(rhs.abs()).max(1.0);
                    worst = worst.max((lhs - rhs).abs() / scale);
                }
                assert!(worst <= 1e-12, "adjointness residual {worst} at p={p}");
            }
        }
    }

    #[test]
    fn delta_squared_vanishes() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let complex = CubicalComplex::build(3, 3, &[1.0, 1.3, 0.8]).unwrap();
        let slice = Slice::new(complex, wavy_metric()).unwrap();
        for p in 2..=3usize {
            let u = random_cochain(&slice, p, &mut rng);
            let dd = slice
                .codifferential(&slice.codifferential(&u).unwrap())
                .unwrap();
            assert!(slice.norm(&dd) <= 1e-12 * slice.norm(&u));
        }
    }

    #[test]
    fn circle_spectrum_matches_closed_form() {
        let slice = circle(4);
        let modes = slice.modes(0).unwrap();
        let expected = [
            0.0,
            8.0 / (PI * PI),
            8.0 / (PI * PI),
            16.0 / (PI * PI),
        ];
        for (m, &lambda) in expected.iter().enumerate() {
            assert!(
                (modes.eigenvalue(m) - lambda).abs() < 1e-10,
                "mode {m}: {} vs {lambda}",
                modes.eigenvalue(m)
            );
        }
        assert_eq!(modes.harmonic_count(), 1);
    }

    #[test]
    fn laplacian_annihilates_constants_and_commutes_with_d() {
        let slice = torus2(4);
        let ones = Cochain::from_fn(slice.complex().clone(), 0, |_| 1.0).unwrap();
        assert!(slice.norm(&slice.laplacian(&ones).unwrap()) < 1e-13);

        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for p in 0..2usize {
            let u = random_cochain(&slice, p, &mut rng);
            let a = slice.d(&slice.laplacian(&u).unwrap()).unwrap();
            let b = slice.laplacian(&slice.d(&u).unwrap()).unwrap();
            assert!(slice.norm(&a.sub(&b).unwrap()) <= 1e-12 * slice.norm(&a).max(1.0));
        }
        for p in 1..=2usize {
            let u = random_cochain(&slice, p, &mut rng);
            let a = slice
                .codifferential(&slice.laplacian(&u).unwrap())
                .unwrap();
            let b = slice
                .laplacian(&slice.codifferential(&u).unwrap())
                .unwrap();
            assert!(slice.norm(&a.sub(&b).unwrap()) <= 1e-12 * slice.norm(&a).max(1.0));
        }
    }

    #[test]
    fn flat_one_form_laplacian_acts_componentwise() {
        // oracle: on the flat torus the edge Laplacian is the scalar
        // five-point stencil applied per component
        let slice = torus2(5);
        let n = 5;
        let dx = TAU / n as f64;
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let sites = n * n;
        let mut u = slice.zero(1);
        for c in 0..sites {
            u.values_mut()[c] = rng.random_range(-1.0..1.0); // x-edges only
        }
        let lap = slice.laplacian(&u).unwrap();
        for i in 0..n {
            for j in 0..n {
                let at = |a: usize, b: usize| u.values()[(a % n) * n + (b % n)];
                let expected = (4.0 * at(i, j)
                    - at(i + 1, j)
                    - at(i + n - 1, j)
                    - at(i, j + 1)
                    - at(i, j + n - 1))
                    / (dx * dx);
                assert!((lap.values()[i * n + j] - expected).abs() < 1e-11);
                // y-edge block stays zero
                assert!(lap.values()[sites + i * n + j].abs() < 1e-11);
            }
        }
    }

    #[test]
    fn harmonic_dimension_matches_betti_numbers() {
        let slice1 = circle(8);
        assert_eq!(slice1.modes(0).unwrap().harmonic_count(), 1);
        assert_eq!(slice1.modes(1).unwrap().harmonic_count(), 1);
        let slice2 = torus2(4);
        assert_eq!(slice2.modes(0).unwrap().harmonic_count(), 1);
        assert_eq!(slice2.modes(1).unwrap().harmonic_count(), 2);
        assert_eq!(slice2.modes(2).unwrap().harmonic_count(), 1);
    }

    #[test]
    fn mode_basis_is_orthonormal_with_small_residuals() {
        let slice = torus2(4);
        let modes = slice.modes(1).unwrap();
        assert_eq!(modes.len(), 32);
        for m in 0..modes.len() {
            for k in m..modes.len() {
                let ip = slice.inner(modes.cochain(m), modes.cochain(k)).unwrap();
                let expected = if m == k { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() <= 1e-10);
            }
            let lap = slice.laplacian(modes.cochain(m)).unwrap();
            let resid = lap.axpy(-modes.eigenvalue(m), modes.cochain(m)).unwrap();
            assert!(slice.norm(&resid) <= 1e-8);
        }
        // ascending with grouped duplicates
        for m in 1..modes.len() {
            assert!(modes.eigenvalue(m) + 1e-10 >= modes.eigenvalue(m - 1));
        }
    }

    #[test]
    fn eigenmode_count_is_validated() {
        let slice = circle(4);
        assert!(slice.eigenmodes(0, 4).is_ok());
        assert!(matches!(
            slice.eigenmodes(0, 5),
            Err(Error::ValueCountMismatch {
                expected: 4,
                got: 5
            })
        ));
    }

    #[test]
    fn circle_eigenvalues_converge_at_second_order() {
        // lambda_N(k) = (4/dx^2) sin^2(pi k / N) -> (2 pi k / L)^2 = k^2
        for k in 1..=2usize {
            let err = |n: usize| {
                let slice = circle(n);
                let lambda = slice.modes(0).unwrap().eigenvalue(2 * k - 1);
                (lambda - (k * k) as f64).abs()
            };
            let order = (err(8) / err(16)).log2();
            assert!(
                (order - 2.0).abs() <= 0.2,
                "k={k}: order {order} outside 2 +/- 0.2"
            );
        }
    }

    #[test]
    fn hodge_decomposition_splits_constructed_fields() {
        let slice = torus2(4);
        let mut rng = ChaCha12Rng::seed_from_u64(23);

        // a flat constant 1-cochain along x-edges is harmonic
        let sites = 16;
        let mut flat = slice.zero(1);
        for c in 0..sites {
            flat.values_mut()[c] = 1.0;
        }
        let parts = slice.hodge_decompose(&flat).unwrap();
        assert!(slice.norm(&parts.exact) <= 1e-10);
        assert!(slice.norm(&parts.coexact) <= 1e-10);
        assert!((slice.norm(&parts.harmonic) - slice.norm(&flat)).abs() <= 1e-10);

        // d(alpha) is recognized as exact
        let alpha = random_cochain(&slice, 0, &mut rng);
        let u = slice.d(&alpha).unwrap();
        let parts = slice.hodge_decompose(&u).unwrap();
        assert!(slice.norm(&parts.coexact) <= 1e-10 * slice.norm(&u));
        assert!(slice.norm(&parts.harmonic) <= 1e-10 * slice.norm(&u));

        // orthogonality of the three parts for a generic field
        let v = random_cochain(&slice, 1, &mut rng);
        let parts = slice.hodge_decompose(&v).unwrap();
        let scale = slice.inner(&v, &v).unwrap();
        for (x, y) in [
            (&parts.exact, &parts.coexact),
            (&parts.exact, &parts.harmonic),
            (&parts.coexact, &parts.harmonic),
        ] {
            assert!(slice.inner(x, y).unwrap().abs() <= 1e-10 * scale);
        }
        let sum = parts
            .exact
            .add(&parts.coexact)
            .unwrap()
            .add(&parts.harmonic)
            .unwrap();
        assert!(slice.norm(&v.sub(&sum).unwrap()) <= 1e-9 * slice.norm(&v));
    }

    #[test]
    fn solve_coderivative_round_trips_and_rejects() {
        let slice = torus2(4);
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let beta = random_cochain(&slice, 1, &mut rng);
        let psi = slice.codifferential(&beta).unwrap();
        let omega = slice.solve_coderivative(&psi).unwrap();
        let resid = slice.codifferential(&omega).unwrap().sub(&psi).unwrap();
        assert!(slice.norm(&resid) <= 1e-9 * slice.norm(&psi));

        let zero = slice.zero(0);
        assert!(slice.norm(&slice.solve_coderivative(&zero).unwrap()) == 0.0);

        // a harmonic 1-cochain is not co-exact
        let harmonic = slice.modes(1).unwrap().cochain(0).clone();
        assert!(matches!(
            slice.solve_coderivative(&harmonic),
            Err(Error::NotCoexact { .. })
        ));
    }

    #[test]
    fn solve_exterior_round_trips_and_rejects() {
        let slice = torus2(4);
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let alpha = random_cochain(&slice, 0, &mut rng);
        let f0 = slice.d(&alpha).unwrap();
        let a0 = slice.solve_exterior(&f0).unwrap();
        let resid = slice.d(&a0).unwrap().sub(&f0).unwrap();
        assert!(slice.norm(&resid) <= 1e-9 * slice.norm(&f0));

        let zero = slice.zero(1);
        assert!(slice.norm(&slice.solve_exterior(&zero).unwrap()) == 0.0);

        let harmonic = slice.modes(1).unwrap().cochain(0).clone();
        assert!(matches!(
            slice.solve_exterior(&harmonic),
            Err(Error::NotExact { .. })
        ));
    }

    #[test]
    fn lambda_bound_dominates_spectrum() {
        let slice = torus2(4);
        let bound = slice.lambda_max_bound();
        let mut top: f64 = 0.0;
        for p in 0..=2 {
            let modes = slice.modes(p).unwrap();
            top = top.max(modes.eigenvalue(modes.len() - 1));
        }
        // rigorous upper bound, and not wasteful by more than the triangle
        // inequality's factor of two
        assert!(top <= bound * (1.0 + 1e-12));
        assert!(bound <= 2.0 * top * (1.0 + 1e-12));
    }
}
