//! Periodic cubical complexes on the flat d-torus and the real cochains
//! that live on their oriented cells.
//!
//! Cells of degree p are axis-aligned p-cubes: a subset S of p axes (the
//! extent) anchored at a lattice site. Edges point toward increasing
//! coordinate, higher cells are oriented by ascending axis order, and the
//! boundary of a (p+1)-cell alternates signs over its 2(p+1) facets. With
//! periodic identification baked into the incidence tables, the boundary of
//! a boundary cancels exactly in integer arithmetic.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Immutable incidence structure of a periodic cubical complex.
///
/// Cell ordering is deterministic: axis subsets in lexicographic order,
/// then anchor sites in row-major order (first axis most significant).
#[derive(Debug)]
pub struct CubicalComplex {
    dim: usize,
    resolution: usize,
    lengths: Vec<f64>,
    /// `subsets[p][s]` is the s-th (lexicographic) ascending p-subset of axes.
    subsets: Vec<Vec<Vec<usize>>>,
    /// `boundaries[q-1][cell]` lists the 2q oriented facets of a q-cell.
    boundaries: Vec<Vec<Vec<(usize, i8)>>>,
}

fn subsets_of_size(d: usize, p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut stack = vec![(Vec::new(), 0usize)];
    while let Some((cur, start)) = stack.pop() {
        if cur.len() == p {
            out.push(cur);
            continue;
        }
        // push in reverse so the pop order is lexicographic
        for first in (start..d).rev() {
            let mut next = cur.clone();
            next.push(first);
            stack.push((next, first + 1));
        }
    }
    out
}

impl CubicalComplex {
    /// Builds the complex for a d-torus with `resolution` cells per axis and
    /// the given physical side lengths.
    pub fn build(dim: usize, resolution: usize, lengths: &[f64]) -> Result<Arc<Self>> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        if resolution < 2 {
            return Err(Error::InvalidResolution(resolution));
        }
        if lengths.len() != dim {
            return Err(Error::LengthCountMismatch {
                expected: dim,
                got: lengths.len(),
            });
        }
        for (axis, &value) in lengths.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveLength { axis, value });
            }
        }

        let subsets: Vec<Vec<Vec<usize>>> = (0..=dim).map(|p| subsets_of_size(dim, p)).collect();
        let mut complex = CubicalComplex {
            dim,
            resolution,
            lengths: lengths.to_vec(),
            subsets,
            boundaries: Vec::new(),
        };
        let mut boundaries = Vec::with_capacity(dim);
        for q in 1..=dim {
            boundaries.push(complex.build_boundary(q));
        }
        complex.boundaries = boundaries;
        Ok(Arc::new(complex))
    }

    fn build_boundary(&self, q: usize) -> Vec<Vec<(usize, i8)>> {
        let sites = self.site_count();
        let subsets_q = &self.subsets[q];
        let mut table = Vec::with_capacity(subsets_q.len() * sites);
        for subset in subsets_q {
            for site in 0..sites {
                let coords = self.decode_site(site);
                let mut facets = Vec::with_capacity(2 * q);
                for (a, &axis) in subset.iter().enumerate() {
                    let sign: i8 = if a % 2 == 0 { 1 } else { -1 };
                    let facet_subset: Vec<usize> =
                        subset.iter().copied().filter(|&j| j != axis).collect();
                    let s_idx = self.subset_index(q - 1, &facet_subset);
                    let mut upper = coords.clone();
                    upper[axis] = (upper[axis] + 1) % self.resolution;
                    facets.push((self.cell_id(s_idx, &upper), sign));
                    facets.push((self.cell_id(s_idx, &coords), -sign));
                }
                table.push(facets);
            }
        }
        table
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// Grid spacing along one axis.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.resolution as f64
    }

    fn site_count(&self) -> usize {
        self.resolution.pow(self.dim as u32)
    }

    /// Number of p-cells: C(d,p) * N^d.
    pub fn cell_count(&self, degree: usize) -> usize {
        if degree > self.dim {
            return 0;
        }
        self.subsets[degree].len() * self.site_count()
    }

    fn subset_index(&self, degree: usize, subset: &[usize]) -> usize {
        self.subsets[degree]
            .iter()
            .position(|s| s == subset)
            .expect("facet subset must exist")
    }

    fn decode_site(&self, mut site: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            coords[axis] = site % self.resolution;
            site /= self.resolution;
        }
        coords
    }

    fn encode_site(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &k| acc * self.resolution + k)
    }

    fn cell_id(&self, subset_index: usize, coords: &[usize]) -> usize {
        subset_index * self.site_count() + self.encode_site(coords)
    }

    /// The axes a cell extends along.
    pub fn cell_axes(&self, degree: usize, cell: usize) -> &[usize] {
        &self.subsets[degree][cell / self.site_count()]
    }

    /// Anchor-site lattice coordinates of a cell.
    pub fn cell_coords(&self, _degree: usize, cell: usize) -> Vec<usize> {
        self.decode_site(cell % self.site_count())
    }

    /// Barycenter in physical coordinates (anchor + half a step along the extent).
    pub fn barycenter(&self, degree: usize, cell: usize) -> Vec<f64> {
        let coords = self.cell_coords(degree, cell);
        let axes = self.cell_axes(degree, cell);
        (0..self.dim)
            .map(|axis| {
                let mut x = coords[axis] as f64;
                if axes.contains(&axis) {
                    x += 0.5;
                }
                x * self.spacing(axis)
            })
            .collect()
    }

    /// Oriented facets of a q-cell (q >= 1): 2q pairs (facet id, sign).
    pub fn boundary_of(&self, degree: usize, cell: usize) -> &[(usize, i8)] {
        &self.boundaries[degree - 1][cell]
    }

    /// Structural equality: two complexes built from identical inputs carry
    /// identical cell orderings, so shape equality is enough to mix cochains.
    pub fn same_shape(&self, other: &CubicalComplex) -> bool {
        self.dim == other.dim
            && self.resolution == other.resolution
            && self.lengths == other.lengths
    }

    /// Signed sum of `u` over the facets of each (p+1)-cell.
    pub fn coboundary(&self, u: &Cochain) -> Result<Cochain> {
        let p = u.degree();
        if p >= self.dim {
            return Err(Error::DegreeOutOfRange {
                degree: p + 1,
                dim: self.dim,
            });
        }
        let mut values = vec![0.0; self.cell_count(p + 1)];
        let table = &self.boundaries[p];
        for (cell, facets) in table.iter().enumerate() {
            let mut acc = 0.0;
            for &(facet, sign) in facets {
                acc += sign as f64 * u.values()[facet];
            }
            values[cell] = acc;
        }
        Cochain::from_values(u.complex_arc().clone(), p + 1, values)
    }
}

/// A real-valued function on the oriented p-cells of a complex.
#[derive(Debug, Clone)]
pub struct Cochain {
    complex: Arc<CubicalComplex>,
    degree: usize,
    values: Vec<f64>,
}

impl Cochain {
    pub fn zero(complex: Arc<CubicalComplex>, degree: usize) -> Result<Self> {
        if degree > complex.dim() {
            return Err(Error::DegreeOutOfRange {
                degree,
                dim: complex.dim(),
            });
        }
        let n = complex.cell_count(degree);
        Ok(Cochain {
            complex,
            degree,
            values: vec![0.0; n],
        })
    }

    pub fn from_values(
        complex: Arc<CubicalComplex>,
        degree: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if degree > complex.dim() {
            return Err(Error::DegreeOutOfRange {
                degree,
                dim: complex.dim(),
            });
        }
        let expected = complex.cell_count(degree);
        if values.len() != expected {
            return Err(Error::ValueCountMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Cochain {
            complex,
            degree,
            values,
        })
    }

    pub fn from_fn(
        complex: Arc<CubicalComplex>,
        degree: usize,
        mut f: impl FnMut(usize) -> f64,
    ) -> Result<Self> {
        let n = complex.cell_count(degree);
        Self::from_values(complex, degree, (0..n).map(|c| f(c)).collect())
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn complex(&self) -> &CubicalComplex {
        &self.complex
    }

    pub fn complex_arc(&self) -> &Arc<CubicalComplex> {
        &self.complex
    }

    pub fn same_space(&self, other: &Cochain) -> Result<()> {
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch(self.degree, other.degree));
        }
        if !self.complex.same_shape(&other.complex) {
            return Err(Error::ComplexMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Cochain {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= factor;
        }
        out
    }

    /// self + factor * other
    pub fn axpy(&self, factor: f64, other: &Cochain) -> Result<Cochain> {
        self.same_space(other)?;
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(other.values.iter()) {
            *v += factor * w;
        }
        Ok(out)
    }

    pub fn add(&self, other: &Cochain) -> Result<Cochain> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Cochain) -> Result<Cochain> {
        self.axpy(-1.0, other)
    }

    /// Euclidean (unweighted) norm; metric norms live on `Slice`.
    pub fn flat_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
