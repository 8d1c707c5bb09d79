//! Structured simplicial meshes of axis-aligned boxes.
//!
//! Every box is split into `n^dim` congruent cells and each cell into `dim!`
//! Kuhn simplices, one per ordering of the local coordinates. Because the
//! same splitting is used in every cell the mesh is conforming, and because
//! the Kuhn splitting of a `2n` grid refines the splitting of an `n` grid the
//! meshes produced by [`refine_uniform`] are nested.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for boundary detection and point location.
pub const GEOMETRY_TOL: f64 = 1e-12;

/// An axis-aligned box `lower[i] < x[i] < upper[i]` in one to three dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "lower has {} coordinates, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        if !(1..=3).contains(&lower.len()) {
            return Err(Error::InvalidDomain(format!(
                "dimension {} is not in 1..=3",
                lower.len()
            )));
        }
        for (axis, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(Error::InvalidDomain(format!(
                    "axis {axis}: upper {hi} must exceed lower {lo}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit box `(0,1)^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.extent(a)).product()
    }

    /// Whether `x` lies in the closed box, allowing `tol` of slack per axis.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&xi, (&lo, &hi))| xi >= lo - tol && xi <= hi + tol)
    }

    /// Whether `x` lies on one of the box faces.
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .any(|(&xi, (&lo, &hi))| (xi - lo).abs() <= GEOMETRY_TOL || (xi - hi).abs() <= GEOMETRY_TOL)
    }

    /// Maps `x` to the unit box coordinates `(x - lower) / extent`.
    pub fn normalized(&self, x: &[f64], out: &mut [f64]) {
        for a in 0..self.dim() {
            out[a] = (x[a] - self.lower[a]) / self.extent(a);
        }
    }
}

/// A conforming simplicial mesh of a [`BoxDomain`].
///
/// Coordinates and element connectivity are stored flat: vertex `v` occupies
/// `coords[v*dim..(v+1)*dim]` and element `e` occupies
/// `elements[e*(dim+1)..(e+1)*(dim+1)]`.
#[derive(Clone, Debug)]
pub struct Mesh {
    domain: BoxDomain,
    subdivisions: usize,
    level: usize,
    coords: Vec<f64>,
    elements: Vec<usize>,
    boundary: Vec<bool>,
    h: f64,
    permutations: Vec<Vec<usize>>,
}

/// Coarse-to-fine vertex correspondence between nested meshes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexEmbedding {
    pub coarse_to_fine: Vec<usize>,
}

impl VertexEmbedding {
    pub fn identity(n_vertices: usize) -> Self {
        Self {
            coarse_to_fine: (0..n_vertices).collect(),
        }
    }

    /// Chains `self: A -> B` with `next: B -> C` into `A -> C`.
    pub fn then(&self, next: &VertexEmbedding) -> Result<VertexEmbedding> {
        let coarse_to_fine = self
            .coarse_to_fine
            .iter()
            .map(|&v| {
                next.coarse_to_fine
                    .get(v)
                    .copied()
                    .ok_or_else(|| Error::MeshMismatch(format!("embedding target {v} is out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(VertexEmbedding { coarse_to_fine })
    }

    /// Checks injectivity and coordinate agreement between `coarse` and `fine`.
    pub fn validate(&self, coarse: &Mesh, fine: &Mesh) -> Result<()> {
        if coarse.dim() != fine.dim() {
            return Err(Error::MeshMismatch("meshes differ in dimension".into()));
        }
        if self.coarse_to_fine.len() != coarse.n_vertices() {
            return Err(Error::MeshMismatch(format!(
                "embedding covers {} vertices, coarse mesh has {}",
                self.coarse_to_fine.len(),
                coarse.n_vertices()
            )));
        }
        let mut seen = vec![false; fine.n_vertices()];
        for (c, &f) in self.coarse_to_fine.iter().enumerate() {
            if f >= fine.n_vertices() || seen[f] {
                return Err(Error::MeshMismatch(format!(
                    "coarse vertex {c} maps to invalid or repeated fine vertex {f}"
                )));
            }
            seen[f] = true;
            let agree = coarse
                .vertex(c)
                .iter()
                .zip(fine.vertex(f))
                .all(|(a, b)| (a - b).abs() <= GEOMETRY_TOL);
            if !agree {
                return Err(Error::MeshMismatch(format!(
                    "coarse vertex {c} and fine vertex {f} are at different coordinates"
                )));
            }
        }
        Ok(())
    }
}

fn permutations(dim: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, dim: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for a in 0..dim {
            if !prefix.contains(&a) {
                prefix.push(a);
                extend(prefix, dim, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(dim), dim, &mut out);
    out
}

/// Determinant of the `dim x dim` matrix with rows `rows[k]` (dim ≤ 3).
pub(crate) fn small_det(dim: usize, rows: &[[f64; 3]; 3]) -> f64 {
    match dim {
        1 => rows[0][0],
        2 => rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0],
        3 => {
            rows[0][0] * (rows[1][1] * rows[2][2] - rows[1][2] * rows[2][1])
                - rows[0][1] * (rows[1][0] * rows[2][2] - rows[1][2] * rows[2][0])
                + rows[0][2] * (rows[1][0] * rows[2][1] - rows[1][1] * rows[2][0])
        }
        _ => unreachable!("dimension {dim} is not supported"),
    }
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Builds the Kuhn/Freudenthal mesh of `domain` with `n` cells per axis.
pub fn build_uniform_mesh(domain: &BoxDomain, n: usize) -> Mesh {
    build_at_level(domain, n, 0)
}

fn build_at_level(domain: &BoxDomain, n: usize, level: usize) -> Mesh {
    assert!(n >= 1, "at least one subdivision per axis is required");
    let dim = domain.dim();
    let per_axis = n + 1;
    let n_vertices = per_axis.pow(dim as u32);

    let mut coords = Vec::with_capacity(n_vertices * dim);
    let mut boundary = Vec::with_capacity(n_vertices);
    for v in 0..n_vertices {
        let mut rest = v;
        let mut on_face = false;
        for a in 0..dim {
            let i = rest % per_axis;
            rest /= per_axis;
            on_face |= i == 0 || i == n;
            // Face vertices get the exact face coordinate.
            let x = if i == n {
                domain.upper[a]
            } else {
                domain.lower[a] + domain.extent(a) * (i as f64) / (n as f64)
            };
            coords.push(x);
        }
        boundary.push(on_face);
    }

    let perms = permutations(dim);
    let n_cells = n.pow(dim as u32);
    let mut elements = Vec::with_capacity(n_cells * perms.len() * (dim + 1));
    let stride: Vec<usize> = (0..dim).map(|a| per_axis.pow(a as u32)).collect();
    for cell in 0..n_cells {
        let mut rest = cell;
        let mut corner = 0;
        for s in &stride {
            corner += (rest % n) * s;
            rest /= n;
        }
        for perm in &perms {
            let start = elements.len();
            let mut v = corner;
            elements.push(v);
            for &a in perm {
                v += stride[a];
                elements.push(v);
            }
            // Odd permutations come out negatively oriented.
            if dim >= 2 && permutation_parity(perm) == 1 {
                elements.swap(start + dim - 1, start + dim);
            }
        }
    }

    let mut mesh = Mesh {
        domain: domain.clone(),
        subdivisions: n,
        level,
        coords,
        elements,
        boundary,
        h: 0.0,
        permutations: perms,
    };
    mesh.h = (0..mesh.n_elements())
        .map(|e| mesh.element_diameter(e))
        .fold(0.0, f64::max);
    mesh
}

fn permutation_parity(perm: &[usize]) -> usize {
    let mut inversions = 0;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2
}

/// Halves the mesh size. Returns the refined mesh and the embedding of the
/// old vertices into it.
pub fn refine_uniform(mesh: &Mesh) -> (Mesh, VertexEmbedding) {
    let n = mesh.subdivisions;
    let fine = build_at_level(&mesh.domain, 2 * n, mesh.level + 1);
    let dim = mesh.dim();
    let coarse_axis = n + 1;
    let fine_axis = 2 * n + 1;
    let coarse_to_fine = (0..mesh.n_vertices())
        .map(|v| {
            let mut rest = v;
            let mut f = 0;
            let mut stride = 1;
            for _ in 0..dim {
                f += 2 * (rest % coarse_axis) * stride;
                rest /= coarse_axis;
                stride *= fine_axis;
            }
            f
        })
        .collect();
    (fine, VertexEmbedding { coarse_to_fine })
}

impl Mesh {
    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }

    /// Refinement generation; 0 for a freshly built mesh.
    pub fn level(&self) -> usize {
        self.level
    }

    /// Maximal element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_vertices(&self) -> usize {
        self.boundary.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / (self.dim() + 1)
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[v * d..(v + 1) * d]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.dim() + 1;
        &self.elements[e * k..(e + 1) * k]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn n_interior(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    /// Edge vectors `x_k - x_0`, k = 1..=dim, of element `e`.
    pub(crate) fn edge_rows(&self, e: usize) -> [[f64; 3]; 3] {
        let d = self.dim();
        let verts = self.element(e);
        let origin = self.vertex(verts[0]);
        let mut rows = [[0.0; 3]; 3];
        for k in 0..d {
            let p = self.vertex(verts[k + 1]);
            for a in 0..d {
                rows[k][a] = p[a] - origin[a];
            }
        }
        rows
    }

    /// Signed volume of element `e`; positive for every element built here.
    pub fn signed_volume(&self, e: usize) -> f64 {
        let d = self.dim();
        small_det(d, &self.edge_rows(e)) / factorial(d) as f64
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        let verts = self.element(e);
        let mut diam: f64 = 0.0;
        for i in 0..verts.len() {
            for j in i + 1..verts.len() {
                let dist = self
                    .vertex(verts[i])
                    .iter()
                    .zip(self.vertex(verts[j]))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                diam = diam.max(dist);
            }
        }
        diam
    }

    /// Finds an element containing `x` together with the barycentric
    /// coordinates of `x` with respect to that element's vertex order.
    pub fn locate_point(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        if !self.domain.contains(x, GEOMETRY_TOL) {
            return Err(Error::PointOutsideDomain { point: x.to_vec() });
        }
        let n = self.subdivisions;
        let mut cell = 0;
        let mut cell_stride = 1;
        let mut local = [0.0f64; 3];
        for a in 0..d {
            let s = (x[a] - self.domain.lower[a]) / self.domain.extent(a) * n as f64;
            let c = (s.floor().max(0.0) as usize).min(n - 1);
            local[a] = (s - c as f64).clamp(0.0, 1.0);
            cell += c * cell_stride;
            cell_stride *= n;
        }
        // The Kuhn simplex of a cell is selected by the descending order of
        // the local coordinates.
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&p, &q| local[q].total_cmp(&local[p]).then(p.cmp(&q)));
        let perm_index = self
            .permutations
            .iter()
            .position(|p| *p == order)
            .expect("every ordering of the axes is a Kuhn permutation");
        let e = cell * self.permutations.len() + perm_index;
        Ok((e, self.barycentric(e, x)))
    }

    /// Barycentric coordinates of `x` in element `e`, clamped to `[0, 1]`.
    pub fn barycentric(&self, e: usize, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let rows = self.edge_rows(e);
        let origin = self.vertex(self.element(e)[0]);
        // Solve J^T mu = x - x0 where J has the edge vectors as rows.
        let mut a = [[0.0f64; 4]; 3];
        for i in 0..d {
            for k in 0..d {
                a[i][k] = rows[k][i];
            }
            a[i][d] = x[i] - origin[i];
        }
        let mu = gauss_solve(d, &mut a);
        let mut bary = vec![0.0; d + 1];
        let mut sum = 0.0;
        for k in 0..d {
            bary[k + 1] = mu[k].clamp(0.0, 1.0);
            sum += bary[k + 1];
        }
        bary[0] = (1.0 - sum).max(0.0);
        let total: f64 = bary.iter().sum();
        bary.iter_mut().for_each(|b| *b /= total);
        bary
    }
}

/// Solves a `d x d` system stored as an augmented matrix with partial pivoting.
fn gauss_solve(d: usize, a: &mut [[f64; 4]; 3]) -> [f64; 3] {
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for row in col + 1..d {
            let f = a[row][col] / a[col][col];
            for k in col..=d {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = [0.0; 3];
    for row in (0..d).rev() {
        let mut acc = a[row][d];
        for k in row + 1..d {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}
