//! The classical symplectic phase space.
//!
//! Points are pairs (class of the value trace, co-closed velocity trace);
//! the symplectic form pairs value traces against normal-derivative traces
//! antisymmetrically. On solution pairs the form is conserved slice to
//! slice by the integrator, is blind to gauge moves of either argument, and
//! ties the spacetime pairing of a solution against a co-closed test
//! current to the propagated current's phase-space data.

use crate::cauchy::{maxwell_residual, CauchyData, SOLUTION_TOL};
use crate::error::{Error, Result};
use crate::evolve::{spacetime_pairing, trace, Current, Spacetime, SpacetimeForm, TraceKind};
use crate::forms::Slice;
use crate::green::causal_propagator;
use crate::lattice::Cochain;

/// A point of the reduced phase space: the gauge class of the value trace
/// (exact part projected away) and a co-closed momentum.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    class: Cochain,
    momentum: Cochain,
}

impl PhasePoint {
    /// Canonicalizes the value trace by dropping its exact part and checks
    /// that the momentum is co-closed.
    pub fn new(slice: &Slice, value: &Cochain, momentum: &Cochain) -> Result<Self> {
        value.same_space(momentum)?;
        let parts = slice.hodge_decompose(value)?;
        let class = parts.coexact.add(&parts.harmonic)?;
        if momentum.degree() >= 1 {
            let residual = slice.norm(&slice.codifferential(momentum)?);
            let scale = slice.norm(momentum).max(1e-300);
            if residual > 1e-8 * scale {
                return Err(Error::NotCoClosed {
                    residual: residual / scale,
                    tolerance: 1e-8,
                });
            }
        }
        Ok(PhasePoint {
            class,
            momentum: momentum.clone(),
        })
    }

    pub fn degree(&self) -> usize {
        self.class.degree()
    }

    pub fn class(&self) -> &Cochain {
        &self.class
    }

    pub fn momentum(&self) -> &Cochain {
        &self.momentum
    }

    /// The normal-free Cauchy quadruple with this data.
    pub fn to_cauchy(&self, slice: &Slice) -> Result<CauchyData> {
        CauchyData::coulomb(slice, self.class.clone(), self.momentum.clone())
    }
}

/// The symplectic form evaluated on raw slice data.
pub fn sigma_data(slice: &Slice, u: &PhasePoint, v: &PhasePoint) -> Result<f64> {
    Ok(slice.inner(u.class(), v.momentum())? - slice.inner(v.class(), u.momentum())?)
}

/// The symplectic form of two solutions at a slice, from their traces.
/// No solution validation; prefer [`sigma`] at API boundaries.
pub fn sigma_unchecked(
    x: &SpacetimeForm,
    y: &SpacetimeForm,
    st: &Spacetime,
    k: usize,
) -> Result<f64> {
    let slice = st.slice();
    let vx = trace(x, st, k, TraceKind::Value)?.expect("tangential part");
    let vy = trace(y, st, k, TraceKind::Value)?.expect("tangential part");
    let dx = trace(x, st, k, TraceKind::NormalDerivative)?.expect("tangential part");
    let dy = trace(y, st, k, TraceKind::NormalDerivative)?.expect("tangential part");
    Ok(slice.inner(&vx, &dy)? - slice.inner(&vy, &dx)?)
}

/// The symplectic form on validated source-free solutions.
pub fn sigma(x: &SpacetimeForm, y: &SpacetimeForm, st: &Spacetime, k: usize) -> Result<f64> {
    for form in [x, y] {
        let residual = maxwell_residual(form, None, st)?;
        if residual > SOLUTION_TOL {
            return Err(Error::NotASolution {
                residual,
                tolerance: SOLUTION_TOL,
            });
        }
    }
    sigma_unchecked(x, y, st, k)
}

/// Relative change of the symplectic form between two slices.
pub fn surface_independence_check(
    x: &SpacetimeForm,
    y: &SpacetimeForm,
    st: &Spacetime,
    k1: usize,
    k2: usize,
) -> Result<f64> {
    let first = sigma(x, y, st, k1)?;
    let second = sigma_unchecked(x, y, st, k2)?;
    let scale = first
        .abs()
        .max(second.abs())
        .max(x.slice_norm(st, k1) * y.slice_norm(st, k1))
        .max(1e-300);
    Ok((first - second).abs() / scale)
}

/// The unquotiented bilinear form evaluated on a pure-gauge first argument:
/// the pairing of an exact value trace against a momentum. Vanishes exactly
/// when the momentum is co-closed, which is the degeneracy being
/// demonstrated; a momentum with divergence exposes the leak through the
/// adjoint pairing.
pub fn degenerate_pairing(slice: &Slice, chi: &Cochain, momentum: &Cochain) -> Result<f64> {
    slice.inner(&slice.d(chi)?, momentum)
}

/// Residual of the identity tying the spacetime pairing of a homogeneous
/// solution against a co-closed current to the symplectic form against the
/// propagated current, evaluated at slice k.
pub fn pairing_vs_sigma(
    x: &SpacetimeForm,
    f: &Current,
    st: &Spacetime,
    k: usize,
) -> Result<f64> {
    f.require_co_closed(st, 1e-8)?;
    let residual = maxwell_residual(x, None, st)?;
    if residual > SOLUTION_TOL {
        return Err(Error::NotASolution {
            residual,
            tolerance: SOLUTION_TOL,
        });
    }
    let propagated = causal_propagator(f, st)?;
    let lhs = spacetime_pairing(x, f, st)?;
    let rhs = sigma_unchecked(x, &propagated, st, k)?;
    let scale = lhs.abs().max(rhs.abs()).max(1e-300);
    Ok((lhs - rhs).abs() / scale)
}

/// Poisson bracket of the two linear observables labeled by co-closed
/// currents: the symplectic form of their propagated solutions, evaluated
/// on the middle slice (any slice gives the same value).
pub fn poisson_bracket(f: &Current, g: &Current, st: &Spacetime) -> Result<f64> {
    f.require_co_closed(st, 1e-8)?;
    g.require_co_closed(st, 1e-8)?;
    let ef = causal_propagator(f, st)?;
    let eg = causal_propagator(g, st)?;
    sigma_unchecked(&ef, &eg, st, st.steps() / 2)
}

/// Cross-check of the bracket: by the pairing identity, the bracket of
/// (f, g) equals the spacetime pairing of g against the propagated f.
pub fn poisson_pairing_residual(f: &Current, g: &Current, st: &Spacetime) -> Result<f64> {
    let bracket = poisson_bracket(f, g, st)?;
    let ef = causal_propagator(f, st)?;
    let pairing = spacetime_pairing(&ef, g, st)?;
    let scale = bracket.abs().max(pairing.abs()).max(1e-300);
    Ok((bracket - pairing).abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::leapfrog_evolve;
    use crate::lattice::CubicalComplex;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::TAU;

    fn torus_st(n: usize, steps: usize) -> Spacetime {
        let slice = Slice::flat(CubicalComplex::build(2, n, &[TAU, TAU]).unwrap()).unwrap();
        Spacetime::with_cfl_fraction(slice, 0.9, steps).unwrap()
    }

    fn coexact_cochain(st: &Spacetime, degree: usize, index: usize) -> Cochain {
        let slice = st.slice();
        let upper = slice.modes(degree + 1).unwrap();
        let mut seen = 0;
        for m in 0..upper.len() {
            let candidate = slice.codifferential(upper.cochain(m)).unwrap();
            let norm = slice.norm(&candidate);
            if norm > 1e-8 {
                if seen == index {
                    return candidate.scaled(1.0 / norm);
                }
                seen += 1;
            }
        }
        panic!("not enough coexact modes");
    }

    fn coexact_current(
        st: &Spacetime,
        degree: usize,
        window: (usize, usize),
        index: usize,
        amplitude: f64,
    ) -> Current {
        let profile = coexact_cochain(st, degree, index);
        let mut form = SpacetimeForm::zero(st, degree).unwrap();
        let width = (window.1 - window.0) as f64;
        for k in window.0..=window.1 {
            let x = (k - window.0) as f64 / width;
            let env = amplitude * (std::f64::consts::PI * x).sin().powi(2);
            *form.tangential_mut(k).unwrap() = profile.scaled(env);
        }
        Current::new(form, window, st).unwrap()
    }

    fn lorenz_solution(st: &Spacetime, class_idx: usize, mom_idx: usize) -> SpacetimeForm {
        let slice = st.slice();
        let data = CauchyData::coulomb(
            slice,
            coexact_cochain(st, 1, class_idx),
            coexact_cochain(st, 1, mom_idx).scaled(0.7),
        )
        .unwrap();
        leapfrog_evolve(&data, None, st).unwrap()
    }

    #[test]
    fn phase_points_canonicalize_and_validate() {
        let mut rng = ChaCha12Rng::seed_from_u64(173);
        let st = torus_st(4, 8);
        let slice = st.slice();
        let raw = Cochain::from_fn(slice.complex().clone(), 1, |_| rng.random_range(-1.0..1.0))
            .unwrap();
        let momentum = coexact_cochain(&st, 1, 0);
        let point = PhasePoint::new(slice, &raw, &momentum).unwrap();
        // class part carries no exact component
        let parts = slice.hodge_decompose(point.class()).unwrap();
        assert!(slice.norm(&parts.exact) <= 1e-10 * slice.norm(&raw));

        let leaky = Cochain::from_fn(slice.complex().clone(), 1, |_| rng.random_range(-1.0..1.0))
            .unwrap();
        assert!(matches!(
            PhasePoint::new(slice, &raw, &leaky),
            Err(Error::NotCoClosed { .. })
        ));
    }

    #[test]
    fn sigma_is_antisymmetric_bilinear_and_mode_diagonal() {
        let st = torus_st(4, 16);
        let slice = st.slice();
        let x = lorenz_solution(&st, 0, 1);
        let y = lorenz_solution(&st, 2, 3);

        assert_eq!(sigma(&x, &x, &st, 3).unwrap(), 0.0);
        let s_xy = sigma(&x, &y, &st, 3).unwrap();
        let s_yx = sigma(&y, &x, &st, 3).unwrap();
        assert!((s_xy + s_yx).abs() <= 1e-12 * s_xy.abs().max(1.0));

        let combo = x.axpy(2.0, &y).unwrap();
        let s_combo = sigma_unchecked(&combo, &y, &st, 3).unwrap();
        assert!(
            (s_combo - (s_xy + 2.0 * sigma_unchecked(&y, &y, &st, 3).unwrap()) - 0.0).abs()
                <= 1e-12 * s_xy.abs().max(1.0)
        );

        // mode coordinates: unit class against unit momentum gives one
        let e = coexact_cochain(&st, 1, 0);
        let u = PhasePoint::new(slice, &e, &slice.zero(1)).unwrap();
        let v = PhasePoint::new(slice, &slice.zero(1), &e).unwrap();
        let qp = sigma_data(slice, &u, &v).unwrap();
        assert!((qp - 1.0).abs() <= 1e-12);
        // and the partner witnesses non-degeneracy
        assert!(qp.abs() >= 0.9);

        // non-solutions are rejected
        let mut junk = x.clone();
        let bump = junk.tangential(5).unwrap().scaled(2.0);
        *junk.tangential_mut(5).unwrap() = bump;
        assert!(matches!(
            sigma(&junk, &y, &st, 3),
            Err(Error::NotASolution { .. })
        ));
    }

    #[test]
    fn sigma_is_gauge_invariant_on_solutions() {
        let st = torus_st(4, 16);
        let slice = st.slice();
        let x = lorenz_solution(&st, 0, 1);
        let y = lorenz_solution(&st, 1, 2);
        let s = sigma(&x, &y, &st, 5).unwrap();
        // gauge move on the first argument: any wave-equation parameter
        let modes0 = slice.modes(0).unwrap();
        let lam = leapfrog_evolve(
            &CauchyData::new(
                modes0.cochain(1).clone(),
                modes0.cochain(2).scaled(0.4),
                None,
                None,
            )
            .unwrap(),
            None,
            &st,
        )
        .unwrap();
        let moved = crate::cauchy::gauge_transform(&x, &lam, &st).unwrap();
        let s_moved = sigma_unchecked(&moved, &y, &st, 5).unwrap();
        let scale = s.abs().max(x.slice_norm(&st, 5) * y.slice_norm(&st, 5));
        assert!((s - s_moved).abs() <= 1e-6 * scale, "moved by {}", (s - s_moved).abs());
    }

    #[test]
    fn sigma_is_conserved_across_slices() {
        let st = torus_st(4, 200);
        let x = lorenz_solution(&st, 0, 1);
        let y = lorenz_solution(&st, 1, 0);
        let residual = surface_independence_check(&x, &y, &st, 1, 199).unwrap();
        assert!(residual <= 1e-6, "sigma drifted by {residual}");
        for k in (3..200).step_by(37) {
            assert!(surface_independence_check(&x, &y, &st, 1, k).unwrap() <= 1e-6);
        }
        assert_eq!(surface_independence_check(&x, &x, &st, 1, 150).unwrap(), 0.0);
    }

    #[test]
    fn discrete_sigma_converges_to_the_continuum_value_at_second_order() {
        // the integrator conserves sigma exactly, so the discretization
        // error lives in its value: for a standing/rotating pair on one
        // mode the continuum form is omega, the discrete one sin(w dt)/dt
        let slice = Slice::flat(CubicalComplex::build(2, 4, &[TAU, TAU]).unwrap()).unwrap();
        let error_at = |dt: f64| {
            let st = Spacetime::new(slice.clone(), dt, 8).unwrap();
            let e = {
                let upper = slice.modes(2).unwrap();
                let c = slice.codifferential(upper.cochain(1)).unwrap();
                let n = slice.norm(&c);
                c.scaled(1.0 / n)
            };
            let lap = slice.laplacian(&e).unwrap();
            let omega = slice.inner(&lap, &e).unwrap().sqrt();
            let mut x = SpacetimeForm::zero(&st, 1).unwrap();
            let mut y = SpacetimeForm::zero(&st, 1).unwrap();
            for k in 0..=st.steps() {
                let t = st.time(k);
                *x.tangential_mut(k).unwrap() = e.scaled((omega * t).cos());
                *y.tangential_mut(k).unwrap() = e.scaled((omega * t).sin());
            }
            let discrete = sigma_unchecked(&x, &y, &st, 4).unwrap();
            // continuum: <x, dy/dt> - <y, dx/dt> = omega
            (discrete.abs() - omega).abs() / omega
        };
        let order = (error_at(0.2) / error_at(0.1)).log2();
        assert!((order - 2.0).abs() <= 0.1, "order {order}");
    }

    #[test]
    fn degeneracy_witness_vanishes_only_for_co_closed_momenta() {
        let mut rng = ChaCha12Rng::seed_from_u64(179);
        let st = torus_st(4, 8);
        let slice = st.slice();
        let chi = Cochain::from_fn(slice.complex().clone(), 0, |_| rng.random_range(-1.0..1.0))
            .unwrap();
        let co_closed = coexact_cochain(&st, 1, 2);
        let value = degenerate_pairing(slice, &chi, &co_closed).unwrap();
        assert!(value.abs() <= 1e-10 * slice.norm(&chi) * slice.norm(&co_closed));

        // a momentum with divergence leaks exactly the adjoint pairing
        let leaky = Cochain::from_fn(slice.complex().clone(), 1, |_| rng.random_range(-1.0..1.0))
            .unwrap();
        let leak = degenerate_pairing(slice, &chi, &leaky).unwrap();
        let adjoint = slice
            .inner(&chi, &slice.codifferential(&leaky).unwrap())
            .unwrap();
        assert!((leak - adjoint).abs() <= 1e-12 * leak.abs().max(1.0));
        assert!(leak.abs() > 1e-3);

        let zero = slice.zero(0);
        assert_eq!(degenerate_pairing(slice, &zero, &leaky).unwrap(), 0.0);
    }

    #[test]
    fn pairing_identity_holds_at_every_slice() {
        let st = torus_st(4, 64);
        let x = lorenz_solution(&st, 0, 1);
        let f = coexact_current(&st, 1, (24, 36), 0, 1.0);
        for k in [2usize, 17, 30, 45, 62] {
            let residual = pairing_vs_sigma(&x, &f, &st, k).unwrap();
            assert!(residual <= 5e-3, "k={k}: {residual}");
            assert!(residual <= 1e-9, "identity should be discrete-exact: {residual}");
        }

        // zero current gives the trivial identity
        let zero = Current::new(SpacetimeForm::zero(&st, 1).unwrap(), (24, 30), &st).unwrap();
        assert_eq!(spacetime_pairing(&x, &zero, &st).unwrap(), 0.0);

        // non-co-closed currents are rejected
        let mut rng = ChaCha12Rng::seed_from_u64(181);
        let mut bad_form = SpacetimeForm::zero(&st, 1).unwrap();
        for k in 24..=26 {
            *bad_form.tangential_mut(k).unwrap() =
                Cochain::from_fn(st.slice().complex().clone(), 1, |_| {
                    rng.random_range(-1.0..1.0)
                })
                .unwrap();
        }
        let bad = Current::new(bad_form, (24, 26), &st).unwrap();
        assert!(matches!(
            pairing_vs_sigma(&x, &bad, &st, 10),
            Err(Error::NotCoClosed { .. })
        ));
    }

    #[test]
    fn poisson_bracket_matches_pairing_and_respects_causality() {
        let st = torus_st(4, 64);
        // overlapping mode content so the bracket is order one
        let f = coexact_current(&st, 1, (10, 16), 0, 1.0);
        let g = coexact_current(&st, 1, (40, 46), 0, 0.8);

        assert_eq!(poisson_bracket(&f, &f, &st).unwrap(), 0.0);
        let fg = poisson_bracket(&f, &g, &st).unwrap();
        assert!(fg.abs() > 1e-3, "fixture must produce a visible bracket");
        let residual = poisson_pairing_residual(&f, &g, &st).unwrap();
        assert!(residual <= 5e-3, "bracket vs pairing: {residual}");
        assert!(residual <= 1e-9);

        // antisymmetry
        let gf = poisson_bracket(&g, &f, &st).unwrap();
        assert!((fg + gf).abs() <= 1e-12 * fg.abs().max(1.0));

        // spacelike-separated smearings commute: disjoint spatial supports
        // with short time windows on a wide torus
        let slice = Slice::flat(CubicalComplex::build(1, 32, &[TAU]).unwrap()).unwrap();
        let st = Spacetime::with_cfl_fraction(slice.clone(), 0.9, 48).unwrap();
        let mut near = SpacetimeForm::zero(&st, 0).unwrap();
        let mut far = SpacetimeForm::zero(&st, 0).unwrap();
        for k in 22..=24 {
            *near.tangential_mut(k).unwrap() =
                Cochain::from_fn(slice.complex().clone(), 0, |c| if c == 0 { 1.0 } else { 0.0 })
                    .unwrap();
            *far.tangential_mut(k).unwrap() =
                Cochain::from_fn(slice.complex().clone(), 0, |c| if c == 16 { 1.0 } else { 0.0 })
                    .unwrap();
        }
        let near = Current::new(near, (22, 24), &st).unwrap();
        let far = Current::new(far, (22, 24), &st).unwrap();
        let bracket = poisson_bracket(&near, &far, &st).unwrap();
        assert!(bracket.abs() <= 1e-8, "causal leak {bracket}");
    }
}

