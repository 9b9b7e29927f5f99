//! Uniform triangulations of the unit square and their nested hierarchies.
//!
//! Every one of the `n x n` squares is split by the diagonal from its
//! lower-left to its upper-right corner. Numbering is closed-form:
//!
//! * vertex `(i, j)` has index `j * (n + 1) + i` and sits at `(i / n, j / n)`;
//! * square `(i, j)` owns elements `2 (j n + i)` (below the diagonal) and
//!   `2 (j n + i) + 1` (above it), both counterclockwise;
//! * edges are numbered horizontals first, then verticals, then diagonals.
//!
//! Local edge `k` of an element is the edge opposite its local vertex `k`.
//! Each edge carries a unit normal pointing out of its lowest-indexed incident
//! element, so boundary normals are outward.

use std::io::Write;

use crate::error::{Error, Result};

/// Tolerance used when deciding whether a point lies in a closed triangle.
pub const LOCATE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeTag {
    Interior,
    /// `x = 0`, prescribed pressure.
    DirichletIn,
    /// `x = 1`, prescribed pressure.
    DirichletOut,
    /// `y = 0` or `y = 1`, no-flow.
    Neumann,
}

impl EdgeTag {
    pub fn is_dirichlet(self) -> bool {
        matches!(self, EdgeTag::DirichletIn | EdgeTag::DirichletOut)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeTag::Interior => "interior",
            EdgeTag::DirichletIn => "dirichlet_in",
            EdgeTag::DirichletOut => "dirichlet_out",
            EdgeTag::Neumann => "neumann",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_tags: Vec<EdgeTag>,
    edge_normals: Vec<[f64; 2]>,
    edge_elements: Vec<[Option<usize>; 2]>,
    element_edges: Vec<[usize; 3]>,
    element_signs: Vec<[f64; 3]>,
}

/// Builds the uniform `n x n` triangulation of the unit square.
pub fn build_uniform_mesh(n: usize) -> Result<Mesh> {
    Mesh::uniform(n)
}

/// Meshes with `n = n0 * 2^l` for `l = 0..=levels`.
pub fn mesh_hierarchy(n0: usize, levels: usize) -> Result<Vec<Mesh>> {
    if n0 == 0 {
        return Err(Error::invalid("coarsest mesh needs n0 >= 1"));
    }
    if levels > 16 {
        return Err(Error::invalid(format!("level count {levels} is unreasonably large")));
    }
    (0..=levels).map(|l| Mesh::uniform(n0 << l)).collect()
}

impl Mesh {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("mesh needs at least one subdivision per side"));
        }
        let h = 1.0 / n as f64;
        let nv = n + 1;
        let vid = |i: usize, j: usize| j * nv + i;

        let mut vertices = Vec::with_capacity(nv * nv);
        for j in 0..nv {
            for i in 0..nv {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }

        let n_horizontal = n * (n + 1);
        let horizontal = |i: usize, j: usize| j * n + i;
        let vertical = |i: usize, j: usize| n_horizontal + j * (n + 1) + i;
        let diagonal = |i: usize, j: usize| 2 * n_horizontal + j * n + i;
        let n_edges = 2 * n_horizontal + n * n;

        let mut edges = vec![[0usize; 2]; n_edges];
        let mut edge_tags = vec![EdgeTag::Interior; n_edges];
        for j in 0..=n {
            for i in 0..n {
                let e = horizontal(i, j);
                edges[e] = [vid(i, j), vid(i + 1, j)];
                if j == 0 || j == n {
                    edge_tags[e] = EdgeTag::Neumann;
                }
            }
        }
        for j in 0..n {
            for i in 0..=n {
                let e = vertical(i, j);
                edges[e] = [vid(i, j), vid(i, j + 1)];
                if i == 0 {
                    edge_tags[e] = EdgeTag::DirichletIn;
                } else if i == n {
                    edge_tags[e] = EdgeTag::DirichletOut;
                }
            }
        }
        for j in 0..n {
            for i in 0..n {
                edges[diagonal(i, j)] = [vid(i, j), vid(i + 1, j + 1)];
            }
        }

        let mut elements = Vec::with_capacity(2 * n * n);
        let mut element_edges = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                elements.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
                element_edges.push([vertical(i + 1, j), diagonal(i, j), horizontal(i, j)]);
                elements.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
                element_edges.push([horizontal(i, j + 1), vertical(i, j), diagonal(i, j)]);
            }
        }

        // Elements are visited in increasing order, so the first slot is the
        // lowest-indexed neighbour.
        let mut edge_elements = vec![[None, None]; n_edges];
        for (t, local) in element_edges.iter().enumerate() {
            for &e in local {
                let slot = &mut edge_elements[e];
                if slot[0].is_none() {
                    slot[0] = Some(t);
                } else {
                    debug_assert!(slot[1].is_none());
                    slot[1] = Some(t);
                }
            }
        }

        let element_signs = element_edges
            .iter()
            .enumerate()
            .map(|(t, local)| local.map(|e| if edge_elements[e][0] == Some(t) { 1.0 } else { -1.0 }))
            .collect();

        let mut mesh = Mesh {
            n,
            vertices,
            elements,
            edges,
            edge_tags,
            edge_normals: Vec::new(),
            edge_elements,
            element_edges,
            element_signs,
        };
        mesh.edge_normals = (0..n_edges).map(|e| mesh.outward_normal_from_owner(e)).collect();
        Ok(mesh)
    }

    fn outward_normal_from_owner(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let len = self.edge_length(e);
        let mut nrm = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        let owner = self.edge_elements[e][0].expect("every edge has an incident element");
        let c = self.centroid(owner);
        let m = self.edge_midpoint(e);
        if nrm[0] * (m[0] - c[0]) + nrm[1] * (m[1] - c[1]) < 0.0 {
            nrm = [-nrm[0], -nrm[1]];
        }
        nrm
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_interior_edges(&self) -> usize {
        self.edge_tags.iter().filter(|t| **t == EdgeTag::Interior).count()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    /// Index of grid vertex `(i, j)`.
    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn element_vertices(&self, t: usize) -> [[f64; 2]; 3] {
        self.elements[t].map(|v| self.vertices[v])
    }

    pub fn element_edges(&self, t: usize) -> [usize; 3] {
        self.element_edges[t]
    }

    /// `+1` where the global edge normal is outward for element `t`, `-1` otherwise.
    pub fn element_signs(&self, t: usize) -> [f64; 3] {
        self.element_signs[t]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_tag(&self, e: usize) -> EdgeTag {
        self.edge_tags[e]
    }

    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        self.edge_normals[e]
    }

    /// Incident elements, lowest index first.
    pub fn edge_elements(&self, e: usize) -> [Option<usize>; 2] {
        self.edge_elements[e]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        (pb[0] - pa[0]).hypot(pb[1] - pa[1])
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.element_vertices(t);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [p0, p1, p2] = self.element_vertices(t);
        [(p0[0] + p1[0] + p2[0]) / 3.0, (p0[1] + p1[1] + p2[1]) / 3.0]
    }

    /// Barycentric coordinates of `x` with respect to element `t`.
    pub fn barycentric(&self, t: usize, x: [f64; 2]) -> [f64; 3] {
        let [p0, p1, p2] = self.element_vertices(t);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let l1 = ((x[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (x[1] - p0[1])) / det;
        let l2 = ((p1[0] - p0[0]) * (x[1] - p0[1]) - (x[0] - p0[0]) * (p1[1] - p0[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Elements whose closed triangle contains `x`, in increasing index order.
    pub fn elements_containing(&self, x: [f64; 2]) -> Result<Vec<usize>> {
        let tol = LOCATE_TOL;
        if !(x[0] >= -tol && x[0] <= 1.0 + tol && x[1] >= -tol && x[1] <= 1.0 + tol) {
            return Err(Error::OutsideDomain { x: x[0], y: x[1] });
        }
        let n = self.n as f64;
        let window = |c: f64| {
            let lo = ((c * n) - 1e-9).floor().max(0.0) as usize;
            let hi = ((c * n) + 1e-9).floor().min(n - 1.0).max(0.0) as usize;
            lo.min(self.n - 1)..=hi
        };
        let mut found = Vec::new();
        for j in window(x[1]) {
            for i in window(x[0]) {
                for t in [2 * (j * self.n + i), 2 * (j * self.n + i) + 1] {
                    if self.barycentric(t, x).iter().all(|&b| b >= -tol) {
                        found.push(t);
                    }
                }
            }
        }
        found.sort_unstable();
        Ok(found)
    }

    /// Lowest-indexed element whose closed triangle contains `x`.
    pub fn locate_element(&self, x: [f64; 2]) -> Result<usize> {
        self.elements_containing(x)?
            .first()
            .copied()
            .ok_or(Error::OutsideDomain { x: x[0], y: x[1] })
    }

    /// True when every vertex of `self` is also a vertex of `fine`.
    pub fn nests_in(&self, fine: &Mesh) -> bool {
        fine.n.is_multiple_of(self.n)
    }

    /// For every element of `fine`, the element of `self` that contains it.
    pub fn parent_map(&self, fine: &Mesh) -> Result<Vec<usize>> {
        if !self.nests_in(fine) {
            return Err(Error::NotNested { coarse: self.n, fine: fine.n });
        }
        (0..fine.num_elements()).map(|t| self.locate_element(fine.centroid(t))).collect()
    }

    /// Writes the mesh as a sectioned CSV (vertices, elements, edges).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# vertices")?;
        writeln!(w, "id,x,y")?;
        for (i, p) in self.vertices.iter().enumerate() {
            writeln!(w, "{i},{},{}", p[0], p[1])?;
        }
        writeln!(w, "# elements")?;
        writeln!(w, "id,v0,v1,v2")?;
        for (i, t) in self.elements.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", t[0], t[1], t[2])?;
        }
        writeln!(w, "# edges")?;
        writeln!(w, "id,v0,v1,tag")?;
        for (i, e) in self.edges.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", e[0], e[1], self.edge_tags[i].as_str())?;
        }
        Ok(())
    }
}
