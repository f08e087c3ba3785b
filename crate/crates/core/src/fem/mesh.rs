//! Structured quadrilateral meshes of the beam and the h/p level hierarchies.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fem::shape::check_order;
use crate::scalar::Real;

/// How successive levels of a hierarchy are refined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefinementKind {
    /// Halve the element size in both directions; linear elements.
    H,
    /// Raise the polynomial order on the fixed base mesh.
    P,
}

/// Boundary conditions of the beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// Both end faces fully clamped; load at mid-span.
    ClampedClamped,
    /// Left end face clamped; load at the free end.
    Cantilever,
}

/// One level of an h- or p-hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelSpec {
    pub index: usize,
    pub kind: RefinementKind,
    pub elements_x: usize,
    pub elements_y: usize,
    pub order: usize,
}

impl LevelSpec {
    /// Level `index` of a hierarchy built on a `base_x × base_y` mesh.
    pub fn new(kind: RefinementKind, index: usize, base: (usize, usize)) -> Result<Self> {
        let spec = match kind {
            RefinementKind::H => Self {
                index,
                kind,
                elements_x: base.0 << index,
                elements_y: base.1 << index,
                order: 1,
            },
            RefinementKind::P => Self {
                index,
                kind,
                elements_x: base.0,
                elements_y: base.1,
                order: index + 1,
            },
        };
        check_order(spec.order)?;
        Ok(spec)
    }

    pub fn element_count(&self) -> usize {
        self.elements_x * self.elements_y
    }

    /// Degrees of freedom before constraints are eliminated.
    pub fn dof_count(&self) -> usize {
        2 * (self.elements_x * self.order + 1) * (self.elements_y * self.order + 1)
    }
}

/// Beam dimensions in metres.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BeamGeometry<T> {
    pub length: T,
    pub height: T,
    /// Out-of-plane width.
    pub thickness: T,
}

impl<T: Real> BeamGeometry<T> {
    pub fn second_moment(&self) -> T {
        self.thickness * self.height.powi(3) / T::lit(12.0)
    }

    pub fn cross_section(&self) -> T {
        self.thickness * self.height
    }
}

/// Structured mesh of Lagrange quadrilaterals.
///
/// Nodes are numbered lexicographically with x outermost:
/// `node = i·(rows) + j`, `i` the column and `j` the row index. Degrees of
/// freedom are interleaved `(u_x, u_y)` per node.
#[derive(Debug, Clone)]
pub struct Mesh<T> {
    order: usize,
    elements_x: usize,
    elements_y: usize,
    coords: Vec<[T; 2]>,
    connectivity: Vec<Vec<usize>>,
    fixed_nodes: Vec<usize>,
    load_nodes: Vec<usize>,
    qoi_node: usize,
    uniform: bool,
}

impl<T: Real> Mesh<T> {
    /// Structured mesh of `[0, length] × [0, height]` without boundary
    /// conditions (callers set them with [`Mesh::with_boundary`]).
    pub fn rectangle(elements_x: usize, elements_y: usize, order: usize, length: T, height: T) -> Result<Self> {
        check_order(order)?;
        if elements_x == 0 || elements_y == 0 {
            return Err(Error::Mesh("mesh needs at least one element per direction".into()));
        }
        if !(length > T::zero() && height > T::zero()) {
            return Err(Error::Mesh("mesh extents must be positive".into()));
        }
        let cols = elements_x * order + 1;
        let rows = elements_y * order + 1;
        let mut coords = Vec::with_capacity(cols * rows);
        for i in 0..cols {
            let x = length * T::from_usize_lossy(i) / T::from_usize_lossy(cols - 1);
            for j in 0..rows {
                let y = height * T::from_usize_lossy(j) / T::from_usize_lossy(rows - 1);
                coords.push([x, y]);
            }
        }
        let m = order + 1;
        let mut connectivity = Vec::with_capacity(elements_x * elements_y);
        for ex in 0..elements_x {
            for ey in 0..elements_y {
                let mut conn = Vec::with_capacity(m * m);
                for b in 0..m {
                    for a in 0..m {
                        conn.push((ex * order + a) * rows + ey * order + b);
                    }
                }
                connectivity.push(conn);
            }
        }
        Ok(Self {
            order,
            elements_x,
            elements_y,
            coords,
            connectivity,
            fixed_nodes: Vec::new(),
            load_nodes: Vec::new(),
            qoi_node: 0,
            uniform: true,
        })
    }

    /// Beam mesh for one hierarchy level with supports, load column and the
    /// default QoI node (top of the load column).
    pub fn beam(level: &LevelSpec, geometry: &BeamGeometry<T>, support: Support) -> Result<Self> {
        let mesh = Self::rectangle(
            level.elements_x,
            level.elements_y,
            level.order,
            geometry.length,
            geometry.height,
        )?;
        let cols = mesh.columns();
        let left: Vec<usize> = mesh.column_nodes(0).collect();
        let (fixed, load_col) = match support {
            Support::ClampedClamped => {
                if (cols - 1) % 2 != 0 {
                    return Err(Error::Mesh("clamped-clamped beam needs a node column at mid-span".into()));
                }
                let mut fixed = left;
                fixed.extend(mesh.column_nodes(cols - 1));
                (fixed, (cols - 1) / 2)
            }
            Support::Cantilever => (left, cols - 1),
        };
        let load: Vec<usize> = mesh.column_nodes(load_col).collect();
        let top = *load.last().expect("column is nonempty");
        Ok(mesh.with_boundary(fixed, load, top))
    }

    /// Replaces the fully clamped node set, the loaded node set and the QoI node.
    pub fn with_boundary(mut self, fixed_nodes: Vec<usize>, load_nodes: Vec<usize>, qoi_node: usize) -> Self {
        self.fixed_nodes = fixed_nodes;
        self.load_nodes = load_nodes;
        self.qoi_node = qoi_node;
        self
    }

    /// Moves node coordinates (for distorted patch tests); element
    /// templates are no longer shared afterwards.
    pub fn displace_node(&mut self, node: usize, to: [T; 2]) {
        self.coords[node] = to;
        self.uniform = false;
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn elements_x(&self) -> usize {
        self.elements_x
    }

    pub fn elements_y(&self) -> usize {
        self.elements_y
    }

    pub fn columns(&self) -> usize {
        self.elements_x * self.order + 1
    }

    pub fn rows(&self) -> usize {
        self.elements_y * self.order + 1
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn dof_count(&self) -> usize {
        2 * self.coords.len()
    }

    pub fn element_count(&self) -> usize {
        self.connectivity.len()
    }

    pub fn coords(&self) -> &[[T; 2]] {
        &self.coords
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        &self.connectivity[e]
    }

    pub fn fixed_nodes(&self) -> &[usize] {
        &self.fixed_nodes
    }

    pub fn load_nodes(&self) -> &[usize] {
        &self.load_nodes
    }

    pub fn qoi_node(&self) -> usize {
        self.qoi_node
    }

    pub fn set_qoi_node(&mut self, node: usize) {
        self.qoi_node = node;
    }

    /// True while all elements are congruent axis-aligned rectangles.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn column_nodes(&self, i: usize) -> impl Iterator<Item = usize> {
        let rows = self.rows();
        (0..rows).map(move |j| i * rows + j)
    }

    /// Node at grid position (column, row).
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.rows() + j
    }

    /// Node closest to a point, if one lies within `tol` of it.
    pub fn node_near(&self, p: [T; 2], tol: T) -> Option<usize> {
        self.coords
            .iter()
            .enumerate()
            .map(|(k, c)| (k, (c[0] - p[0]).hypot(c[1] - p[1])))
            .filter(|(_, d)| *d <= tol)
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distances"))
            .map(|(k, _)| k)
    }

    /// Element centroids (midpoint-rule field evaluation points).
    pub fn element_centroids(&self) -> Vec<[T; 2]> {
        let p = self.order;
        let m = p + 1;
        self.connectivity
            .iter()
            .map(|conn| {
                let corners = [conn[0], conn[p], conn[p * m], conn[m * m - 1]];
                let quarter = T::lit(0.25);
                let mut c = [T::zero(); 2];
                for n in corners {
                    c[0] += self.coords[n][0] * quarter;
                    c[1] += self.coords[n][1] * quarter;
                }
                c
            })
            .collect()
    }

    /// Smallest element edge length.
    pub fn min_element_size(&self) -> T {
        let p = self.order;
        let m = p + 1;
        self.connectivity
            .iter()
            .map(|conn| {
                let a = self.coords[conn[0]];
                let b = self.coords[conn[p]];
                let c = self.coords[conn[p * m]];
                let hx = (b[0] - a[0]).hypot(b[1] - a[1]);
                let hy = (c[0] - a[0]).hypot(c[1] - a[1]);
                hx.min(hy)
            })
            .fold(T::infinity(), |acc, h| acc.min(h))
    }

    /// Writes `node,x,y` rows followed by `element,node_0,…` rows into two
    /// CSV streams.
    pub fn write_csv<W1: Write, W2: Write>(&self, nodes: W1, elements: W2) -> Result<()> {
        let mut w = csv::Writer::from_writer(nodes);
        w.write_record(["node", "x", "y"])?;
        for (k, c) in self.coords.iter().enumerate() {
            w.write_record([k.to_string(), c[0].to_string(), c[1].to_string()])?;
        }
        w.flush()?;
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(elements);
        let mut header = vec!["element".to_string()];
        header.extend((0..(self.order + 1).pow(2)).map(|k| format!("node_{k}")));
        w.write_record(&header)?;
        for (e, conn) in self.connectivity.iter().enumerate() {
            let mut rec = vec![e.to_string()];
            rec.extend(conn.iter().map(|n| n.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
