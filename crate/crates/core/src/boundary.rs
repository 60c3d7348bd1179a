//! Cube boundary: faces, traces, shadowed/illuminated partitions, cutoffs and
//! facewise fractional Sobolev norms.
//!
//! A trace stores the `n x n` face-interior nodes of each of the six faces in
//! the fixed order `+e1, -e1, +e2, -e2, +e3, -e3`.  On a face normal to axis
//! `a`, the two tangential axes are taken in increasing order and the first one
//! varies fastest.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{dot3, read_dump, write_dump, Grid, ScalarField};
use crate::scalar::Scalar;
use crate::spectral::SineTransform;

/// Edge margin (in nodes) inside which admissible measurement traces vanish.
pub const EDGE_MARGIN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: usize,
    pub positive: bool,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face { axis: 0, positive: true },
        Face { axis: 0, positive: false },
        Face { axis: 1, positive: true },
        Face { axis: 1, positive: false },
        Face { axis: 2, positive: true },
        Face { axis: 2, positive: false },
    ];

    pub fn index(&self) -> usize {
        2 * self.axis + usize::from(!self.positive)
    }

    pub fn from_index(idx: usize) -> Face {
        Face::ALL[idx]
    }

    pub fn normal(&self) -> [f64; 3] {
        let mut nu = [0.0; 3];
        nu[self.axis] = if self.positive { 1.0 } else { -1.0 };
        nu
    }

    pub fn tangential_axes(&self) -> (usize, usize) {
        match self.axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }

    pub fn opposite(&self) -> Face {
        Face {
            axis: self.axis,
            positive: !self.positive,
        }
    }

    /// Interior grid index at depth `depth` (0 = adjacent to the face) below face node `(a, b)`.
    pub fn interior_index(&self, grid: &Grid, a: usize, b: usize, depth: usize) -> usize {
        let n = grid.n_axis();
        let mut ijk = [0usize; 3];
        let (t0, t1) = self.tangential_axes();
        ijk[t0] = a;
        ijk[t1] = b;
        ijk[self.axis] = if self.positive { n - 1 - depth } else { depth };
        grid.index(ijk[0], ijk[1], ijk[2])
    }

    pub fn point(&self, grid: &Grid, a: usize, b: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        let (t0, t1) = self.tangential_axes();
        x[t0] = grid.coord(a);
        x[t1] = grid.coord(b);
        x[self.axis] = if self.positive { 1.0 } else { -1.0 };
        x
    }
}

/// Boolean face selection (a union of whole faces).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FaceSet(pub [bool; 6]);

impl FaceSet {
    pub const ALL: FaceSet = FaceSet([true; 6]);
    pub const NONE: FaceSet = FaceSet([false; 6]);

    pub fn contains(&self, face: Face) -> bool {
        self.0[face.index()]
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&b| !b)
    }

    pub fn is_subset_of(&self, other: &FaceSet) -> bool {
        self.0.iter().zip(&other.0).all(|(&a, &b)| !a || b)
    }

    pub fn faces(&self) -> impl Iterator<Item = Face> + '_ {
        Face::ALL.into_iter().filter(|f| self.contains(*f))
    }

    pub fn intersection(&self, other: &FaceSet) -> FaceSet {
        let mut out = [false; 6];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0[i] && other.0[i];
        }
        FaceSet(out)
    }

    fn from_predicate(pred: impl Fn(Face) -> bool) -> FaceSet {
        let mut out = [false; 6];
        for f in Face::ALL {
            out[f.index()] = pred(f);
        }
        FaceSet(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace<T = f64> {
    grid: Grid,
    values: Vec<T>,
}

pub type ComplexTrace = BoundaryTrace<Complex64>;

impl<T: Scalar> BoundaryTrace<T> {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.n_axis();
        Self {
            grid,
            values: vec![T::zero(); 6 * n * n],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<T>) -> Result<Self> {
        let n = grid.n_axis();
        if values.len() != 6 * n * n {
            return Err(Error::InvalidInput(format!(
                "trace has {} values, expected {}",
                values.len(),
                6 * n * n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite trace value".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the face-interior boundary nodes.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3], Face) -> T) -> Self {
        let n = grid.n_axis();
        let mut values = Vec::with_capacity(6 * n * n);
        for face in Face::ALL {
            for b in 0..n {
                for a in 0..n {
                    values.push(f(face.point(&grid, a, b), face));
                }
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    fn face_range(&self, face: Face) -> std::ops::Range<usize> {
        let m = self.grid.n_axis() * self.grid.n_axis();
        face.index() * m..(face.index() + 1) * m
    }

    pub fn face(&self, face: Face) -> &[T] {
        let r = self.face_range(face);
        &self.values[r]
    }

    pub fn face_mut(&mut self, face: Face) -> &mut [T] {
        let r = self.face_range(face);
        &mut self.values[r]
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> BoundaryTrace<U> {
        BoundaryTrace {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with<U: Scalar, V: Scalar>(&self, other: &BoundaryTrace<U>, f: impl Fn(T, U) -> V) -> BoundaryTrace<V> {
        assert_eq!(self.grid, other.grid);
        BoundaryTrace {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(other.values())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn to_complex(&self) -> ComplexTrace {
        self.map(|v| v.to_complex())
    }

    /// Zero every face outside `faces`.
    pub fn restrict(&self, faces: &FaceSet) -> Self {
        let mut out = self.clone();
        for face in Face::ALL {
            if !faces.contains(face) {
                out.face_mut(face).fill(T::zero());
            }
        }
        out
    }

    /// Zero every node within [`EDGE_MARGIN`] of a face edge.
    pub fn with_edge_margin(&self) -> Self {
        let n = self.grid.n_axis();
        let mut out = self.clone();
        for face in Face::ALL {
            let vals = out.face_mut(face);
            for b in 0..n {
                for a in 0..n {
                    if !in_margin_interior(a, b, n) {
                        vals[a + n * b] = T::zero();
                    }
                }
            }
        }
        out
    }

    /// True when every value outside `faces` is exactly zero.
    pub fn supported_in(&self, faces: &FaceSet) -> bool {
        Face::ALL
            .into_iter()
            .filter(|f| !faces.contains(*f))
            .all(|f| self.face(f).iter().all(|v| v.abs_sqr() == 0.0))
    }

    pub fn vanishes_near_edges(&self) -> bool {
        let n = self.grid.n_axis();
        Face::ALL.into_iter().all(|face| {
            let vals = self.face(face);
            (0..n * n).all(|idx| in_margin_interior(idx % n, idx / n, n) || vals[idx].abs_sqr() == 0.0)
        })
    }

    /// Facewise `L^2` norm over `faces` with node weight `h^2`.
    pub fn l2_norm(&self, faces: &FaceSet) -> f64 {
        let h2 = self.grid.spacing().powi(2);
        faces
            .faces()
            .map(|f| self.face(f).iter().map(|v| v.abs_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
            * h2.sqrt()
    }

    /// Bilinear boundary pairing `int_faces a b dS` (no conjugation).
    pub fn pairing(&self, other: &Self, faces: &FaceSet) -> T {
        let h2 = self.grid.spacing().powi(2);
        let mut total = T::zero();
        for f in faces.faces() {
            for (&a, &b) in self.face(f).iter().zip(other.face(f)) {
                total += a * b;
            }
        }
        total * h2
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

impl BoundaryTrace<Complex64> {
    pub fn real_part(&self) -> BoundaryTrace<f64> {
        self.map(|v| v.re)
    }
}

fn in_margin_interior(a: usize, b: usize, n: usize) -> bool {
    let lo = EDGE_MARGIN;
    let hi = n.saturating_sub(EDGE_MARGIN + 1);
    (lo..=hi).contains(&a) && (lo..=hi).contains(&b)
}

/// Trace dump: same header and payload format as volume fields, six face
/// blocks in fixed normal order.
pub fn write_trace_dump<T: Scalar>(out: &mut impl Write, name: &str, trace: &BoundaryTrace<T>) -> Result<()> {
    write_dump(out, trace.grid().n_axis(), name, trace.values())
}

pub fn read_trace_dump<T: Scalar>(input: &mut impl BufRead) -> Result<(String, BoundaryTrace<T>)> {
    let (header, values) = read_dump::<T>(input)?;
    let grid = Grid::new(header.n_axis)?;
    Ok((header.name, BoundaryTrace::from_values(grid, values)?))
}

/// Interior samples together with the Dirichlet data they were solved with.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T = f64> {
    pub interior: ScalarField<T>,
    pub boundary: BoundaryTrace<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(interior: ScalarField<T>, boundary: BoundaryTrace<T>) -> Self {
        assert_eq!(interior.grid(), boundary.grid());
        Self { interior, boundary }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> T) -> Self {
        Self {
            interior: ScalarField::from_fn(grid, &f),
            boundary: BoundaryTrace::from_fn(grid, |x, _| f(x)),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.interior.grid()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            interior: self.interior.sub(&other.interior),
            boundary: self.boundary.sub(&other.boundary),
        }
    }
}

/// Dirichlet trace `t0 u`.
pub fn trace0<T: Scalar>(u: &GridFunction<T>) -> BoundaryTrace<T> {
    u.boundary.clone()
}

/// Outward normal derivative `t1 u` by the second-order one-sided difference
/// `(3 u_b - 4 u_1 + u_2) / 2h`.
pub fn trace1<T: Scalar>(u: &GridFunction<T>) -> BoundaryTrace<T> {
    let grid = *u.grid();
    let n = grid.n_axis();
    let inv2h = 0.5 / grid.spacing();
    let vals = u.interior.values();
    let mut out = BoundaryTrace::zeros(grid);
    for face in Face::ALL {
        let gb = u.boundary.face(face).to_vec();
        let dst = out.face_mut(face);
        for b in 0..n {
            for a in 0..n {
                let u1 = vals[face.interior_index(&grid, a, b, 0)];
                let u2 = vals[face.interior_index(&grid, a, b, 1)];
                dst[a + n * b] = (gb[a + n * b] * 3.0 - u1 * 4.0 + u2) * inv2h;
            }
        }
    }
    out
}

/// Outward normal difference `(u_b - u_1)/h`: the boundary flux for which the
/// 7-point scheme satisfies the discrete Green identity exactly,
/// `sum h^3 [(A u) v - u (A v)] = h^2 sum_b [u_b D v - v_b D u]`.
pub fn conormal_difference<T: Scalar>(u: &GridFunction<T>) -> BoundaryTrace<T> {
    let grid = *u.grid();
    let n = grid.n_axis();
    let inv_h = 1.0 / grid.spacing();
    let vals = u.interior.values();
    let mut out = BoundaryTrace::zeros(grid);
    for face in Face::ALL {
        let gb = u.boundary.face(face).to_vec();
        let dst = out.face_mut(face);
        for b in 0..n {
            for a in 0..n {
                let u1 = vals[face.interior_index(&grid, a, b, 0)];
                dst[a + n * b] = (gb[a + n * b] - u1) * inv_h;
            }
        }
    }
    out
}

/// Orthogonal map sending a unit vector `xi` to `e1` (Householder reflection).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionFrame {
    pub xi: [f64; 3],
    pub matrix: [[f64; 3]; 3],
}

impl DirectionFrame {
    pub fn new(xi: [f64; 3]) -> Result<Self> {
        let norm = dot3(&xi, &xi).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!("direction must be a unit vector, |xi| = {norm}")));
        }
        let v = [xi[0] - 1.0, xi[1], xi[2]];
        let vv = dot3(&v, &v);
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                let id = if i == j { 1.0 } else { 0.0 };
                *entry = if vv < 1e-28 { id } else { id - 2.0 * v[i] * v[j] / vv };
            }
        }
        Ok(Self { xi, matrix: m })
    }

    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        [dot3(&m[0], &x), dot3(&m[1], &x), dot3(&m[2], &x)]
    }

    /// `T^* x`
    pub fn apply_transpose(&self, x: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        [
            m[0][0] * x[0] + m[1][0] * x[1] + m[2][0] * x[2],
            m[0][1] * x[0] + m[1][1] * x[1] + m[2][1] * x[2],
            m[0][2] * x[0] + m[1][2] * x[1] + m[2][2] * x[2],
        ]
    }
}

/// Face sets induced by a direction and an angular tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePartition {
    pub xi: [f64; 3],
    pub epsilon: f64,
    /// `xi . nu > 0`
    pub gamma_plus: FaceSet,
    /// `xi . nu < 0`
    pub gamma_minus: FaceSet,
    /// `xi . nu < -epsilon`
    pub gamma_minus_eps: FaceSet,
    /// Input faces, a superset of `{xi . nu >= -2 epsilon}`.
    pub f: FaceSet,
    /// Output faces, a superset of `{xi . nu <= 2 epsilon}`.
    pub g: FaceSet,
}

pub fn face_partition(xi: [f64; 3], epsilon: f64) -> Result<FacePartition> {
    let norm = dot3(&xi, &xi).sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("|xi| = {norm}, expected 1")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidInput(format!("epsilon = {epsilon} outside [0, 1)")));
    }
    let dot = |f: Face| dot3(&xi, &f.normal());
    let gamma_minus_eps = FaceSet::from_predicate(|f| dot(f) < -epsilon);
    if gamma_minus_eps.is_empty() {
        return Err(Error::Geometry(format!(
            "no boundary face satisfies xi . nu < -{epsilon} for xi = {xi:?}"
        )));
    }
    Ok(FacePartition {
        xi,
        epsilon,
        gamma_plus: FaceSet::from_predicate(|f| dot(f) > 0.0),
        gamma_minus: FaceSet::from_predicate(|f| dot(f) < 0.0),
        gamma_minus_eps,
        f: FaceSet::from_predicate(|f| dot(f) >= -2.0 * epsilon),
        g: FaceSet::from_predicate(|f| dot(f) <= 2.0 * epsilon),
    })
}

impl FacePartition {
    /// Replace `F` and `G` by larger face sets.
    pub fn with_faces(mut self, f: FaceSet, g: FaceSet) -> Result<Self> {
        if !self.f.is_subset_of(&f) || !self.g.is_subset_of(&g) {
            return Err(Error::Geometry("F and G must contain the minimal face sets".into()));
        }
        self.f = f;
        self.g = g;
        Ok(self)
    }
}

/// Quintic `C^2` smoothstep on `[0, 1]`.
fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Cutoff profile in the variable `s = xi . nu`: 1 for `s <= -eps`, 0 for
/// `s >= -eps/2`.
pub fn cutoff_profile(s: f64, epsilon: f64) -> f64 {
    if s <= -epsilon {
        1.0
    } else if s >= -0.5 * epsilon {
        0.0
    } else {
        smoothstep5((-0.5 * epsilon - s) / (0.5 * epsilon))
    }
}

/// Cutoff equal to 1 on `Gamma_-^eps` and 0 outside `Gamma_-^{eps/2}` of the partition direction.
pub fn boundary_cutoff(grid: Grid, partition: &FacePartition, epsilon: f64) -> Result<BoundaryTrace> {
    if partition.gamma_minus_eps.is_empty() {
        return Err(Error::Geometry("empty cutoff face set".into()));
    }
    Ok(BoundaryTrace::from_fn(grid, |_, face| {
        cutoff_profile(dot3(&partition.xi, &face.normal()), epsilon)
    }))
}

/// Facewise sine-spectral machinery for `H^s` norms and Riesz maps.
#[derive(Debug, Clone)]
pub struct FaceSpectral {
    grid: Grid,
    dst: SineTransform,
}

impl FaceSpectral {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            dst: SineTransform::new(grid.n_axis()),
        }
    }

    fn multiplier(&self, a: usize, b: usize, s: f64) -> f64 {
        let k2 = (std::f64::consts::PI / 2.0).powi(2) * (((a + 1) * (a + 1) + (b + 1) * (b + 1)) as f64);
        (1.0 + k2).powf(s)
    }

    /// Normalized sine coefficients `g^_ab` with `sum |g^_ab|^2 = h^2 sum |g|^2`.
    fn coefficients(&self, face_vals: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n_axis();
        let mut buf = face_vals.to_vec();
        self.dst.forward_2d(&mut buf);
        let c = (2.0 / (n + 1) as f64).powi(2);
        buf.iter_mut().for_each(|v| *v *= c);
        buf
    }

    pub fn face_norm_sqr<T: Scalar>(&self, vals: &[T], s: f64) -> f64 {
        let n = self.grid.n_axis();
        let cvals: Vec<Complex64> = vals.iter().map(|v| v.to_complex()).collect();
        let coef = self.coefficients(&cvals);
        let mut total = 0.0;
        for b in 0..n {
            for a in 0..n {
                total += self.multiplier(a, b, s) * coef[a + n * b].norm_sqr();
            }
        }
        total
    }

    /// Apply `R_s` (or its inverse) on every face in `faces`, zero elsewhere, so
    /// that `<g, R_s g>` (Euclidean) is the squared `H^s` norm.
    pub fn riesz<T: Scalar>(&self, g: &BoundaryTrace<T>, s: f64, faces: &FaceSet, inverse: bool) -> BoundaryTrace<T> {
        let n = self.grid.n_axis();
        let mut out = BoundaryTrace::zeros(self.grid);
        let extra = if inverse { ((n + 1) as f64 / 2.0).powi(4) } else { 1.0 };
        for face in faces.faces() {
            let cvals: Vec<Complex64> = g.face(face).iter().map(|v| v.to_complex()).collect();
            let mut coef = self.coefficients(&cvals);
            for b in 0..n {
                for a in 0..n {
                    let m = self.multiplier(a, b, s);
                    coef[a + n * b] *= if inverse { extra / m } else { m };
                }
            }
            let back = self.coefficients(&coef);
            for (dst, v) in out.face_mut(face).iter_mut().zip(back) {
                *dst = T::from_complex(v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    F,
    G,
    Gamma,
}

/// Facewise `H^s` norm of `g` over a region of a partition.
pub fn boundary_sobolev_norm<T: Scalar>(
    g: &BoundaryTrace<T>,
    s: f64,
    region: Region,
    partition: &FacePartition,
) -> Result<f64> {
    let faces = match region {
        Region::F => partition.f,
        Region::G => partition.g,
        Region::Gamma => FaceSet::ALL,
    };
    if !g.supported_in(&faces) {
        return Err(Error::Support(format!("trace is non-zero outside region {region:?}")));
    }
    if s < 0.0 && region == Region::F && !g.vanishes_near_edges() {
        return Err(Error::Support(
            "negative-order norms on F need traces vanishing in the edge margin".into(),
        ));
    }
    let spectral = FaceSpectral::new(*g.grid());
    Ok(faces
        .faces()
        .map(|f| spectral.face_norm_sqr(g.face(f), s))
        .sum::<f64>()
        .sqrt())
}

/// `sin(pi a (y+1)/2) sin(pi b (z+1)/2)` on a single face, zero elsewhere.
pub fn face_mode(grid: Grid, face: Face, a: usize, b: usize) -> BoundaryTrace {
    use std::f64::consts::PI;
    let (t0, t1) = face.tangential_axes();
    BoundaryTrace::from_fn(grid, |x, f| {
        if f == face {
            (PI * a as f64 * (x[t0] + 1.0) / 2.0).sin() * (PI * b as f64 * (x[t1] + 1.0) / 2.0).sin()
        } else {
            0.0
        }
    })
}
