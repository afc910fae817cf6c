//! Piecewise-linear discretization of a metric graph.
//!
//! Every edge carries a uniform grid that divides its computational length
//! exactly. Grid points at graph vertices are shared by all incident edges,
//! so a grid function is continuous across vertices by construction. Mass is
//! lumped (trapezoid weights), which keeps the mass matrix diagonal. The form
//! matrix `A` realizes
//!
//! ```text
//! 𝔉[u] = ∫|u′|² + ∫W|u|² − Σ_v α_v |u(v)|²
//! ```
//!
//! as `Re(u* A u)`: element stiffness, a diagonal lumped potential term and
//! `−α_v` on each vertex row. Truncation endpoints of external edges carry
//! the natural (free) boundary condition.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MetricGraph;
use crate::sparse::{Envelope, SymMatrix};

#[derive(Debug, Clone)]
pub struct EdgeGrid {
    pub step: f64,
    /// Global node index of local grid point `k` (position `k·step`).
    pub nodes: Vec<usize>,
}

impl EdgeGrid {
    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn position(&self, k: usize) -> f64 {
        k as f64 * self.step
    }
}

/// An element: adjacent global nodes `(left, right)` and its length.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub left: usize,
    pub right: usize,
    pub step: f64,
}

#[derive(Debug)]
pub struct Discretization {
    graph: MetricGraph,
    grids: Vec<EdgeGrid>,
    elements: Vec<Element>,
    mass: Vec<f64>,
    /// Lumped potential minus vertex couplings, the non-gradient part of
    /// the form matrix diagonal.
    zeroth: Vec<f64>,
    form: SymMatrix<f64>,
    envelope: Envelope,
    /// A representative `(edge, x)` for each node.
    locations: Vec<(usize, f64)>,
}

impl Discretization {
    /// Grids every edge with a step no larger than `target_h` and assembles
    /// the lumped mass and form matrix.
    pub fn build(graph: &MetricGraph, target_h: f64) -> Result<Arc<Self>> {
        if !(target_h.is_finite() && target_h > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {target_h}")));
        }
        let nv = graph.vertices().len();
        let mut next = nv;
        let mut grids = Vec::with_capacity(graph.edges().len());
        let mut locations: Vec<Option<(usize, f64)>> = vec![None; nv];
        for (ei, e) in graph.edges().iter().enumerate() {
            let len = e.length.computational();
            if target_h > len / 4.0 {
                return Err(Error::Config(format!(
                    "grid step {target_h} too large for edge `{}` of length {len} (at most length/4)",
                    e.id
                )));
            }
            let n = (len / target_h - 1e-9).ceil() as usize;
            let step = len / n as f64;
            let mut nodes = Vec::with_capacity(n + 1);
            nodes.push(e.from);
            if locations[e.from].is_none() {
                locations[e.from] = Some((ei, 0.0));
            }
            for k in 1..n {
                nodes.push(next);
                locations.push(Some((ei, k as f64 * step)));
                next += 1;
            }
            match e.to {
                Some(to) => {
                    nodes.push(to);
                    if locations[to].is_none() {
                        locations[to] = Some((ei, len));
                    }
                }
                None => {
                    nodes.push(next);
                    locations.push(Some((ei, len)));
                    next += 1;
                }
            }
            grids.push(EdgeGrid { step, nodes });
        }
        let locations: Vec<(usize, f64)> = locations
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                l.ok_or_else(|| {
                    Error::Config(format!("vertex `{}` has no incident edge", graph.vertices()[i].id))
                })
            })
            .collect::<Result<_>>()?;

        let n = next;
        let mut mass = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut zeroth = vec![0.0; n];
        let mut off = Vec::new();
        let mut elements = Vec::new();
        for (grid, e) in grids.iter().zip(graph.edges()) {
            let h = grid.step;
            for k in 0..grid.elements() {
                let (a, b) = (grid.nodes[k], grid.nodes[k + 1]);
                let (xa, xb) = (grid.position(k), grid.position(k + 1));
                mass[a] += 0.5 * h;
                mass[b] += 0.5 * h;
                let (wa, wb) = (0.5 * h * e.potential.eval(xa), 0.5 * h * e.potential.eval(xb));
                diag[a] += 1.0 / h + wa;
                diag[b] += 1.0 / h + wb;
                zeroth[a] += wa;
                zeroth[b] += wb;
                off.push((a, b, -1.0 / h));
                elements.push(Element { left: a, right: b, step: h });
            }
        }
        for (v, vertex) in graph.vertices().iter().enumerate() {
            diag[v] -= vertex.alpha;
            zeroth[v] -= vertex.alpha;
        }
        let form = SymMatrix::from_entries(diag, off);
        let envelope = Envelope::for_pattern(&form);
        Ok(Arc::new(Self {
            graph: graph.clone(),
            grids,
            elements,
            mass,
            zeroth,
            form,
            envelope,
            locations,
        }))
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn grids(&self) -> &[EdgeGrid] {
        &self.grids
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Lumped mass weights.
    pub fn mass_weights(&self) -> &[f64] {
        &self.mass
    }

    pub fn form_matrix(&self) -> &SymMatrix<f64> {
        &self.form
    }

    /// Envelope ordering valid for any matrix `a·A + diag(d)`.
    pub fn envelope(&self) -> &Envelope {
        &self.envelope
    }

    pub fn locations(&self) -> &[(usize, f64)] {
        &self.locations
    }

    /// Global node of graph vertex `v`.
    pub fn vertex_node(&self, v: usize) -> usize {
        v
    }

    pub fn min_step(&self) -> f64 {
        self.grids.iter().map(|g| g.step).fold(f64::INFINITY, f64::min)
    }

    // Raw-vector kernels used by the solvers.

    pub fn mass_of(&self, u: &[Complex64]) -> f64 {
        u.iter().zip(&self.mass).map(|(v, m)| m * v.norm_sqr()).sum()
    }

    /// `𝔉[u]`, summed element by element so the large stiffness entries
    /// never cancel against each other.
    pub fn form_of(&self, u: &[Complex64]) -> f64 {
        let zeroth: f64 = u.iter().zip(&self.zeroth).map(|(v, w)| w * v.norm_sqr()).sum();
        self.grad_sq_of(u) + zeroth
    }

    /// `‖u′‖²_{L²}` from element-constant gradients.
    pub fn grad_sq_of(&self, u: &[Complex64]) -> f64 {
        self.elements
            .iter()
            .map(|el| (u[el.right] - u[el.left]).norm_sqr() / el.step)
            .sum()
    }

    /// `Σ m_i |u_i|^q`.
    pub fn power_sum_of(&self, u: &[Complex64], q: f64) -> f64 {
        u.iter().zip(&self.mass).map(|(v, m)| m * v.norm().powf(q)).sum()
    }

    /// `Re ⟨u, v⟩_{H¹}`-compatible complex inner product `Σ ū′v′ + Σ m ū v`.
    pub fn h1_inner_of(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        let grad: Complex64 = self
            .elements
            .iter()
            .map(|el| (u[el.right] - u[el.left]).conj() * (v[el.right] - v[el.left]) / el.step)
            .sum();
        let l2: Complex64 = u
            .iter()
            .zip(v)
            .zip(&self.mass)
            .map(|((a, b), m)| a.conj() * b * *m)
            .sum();
        grad + l2
    }

    /// `M u`.
    pub fn apply_mass(&self, u: &[Complex64]) -> Vec<Complex64> {
        u.iter().zip(&self.mass).map(|(v, m)| v * m).collect()
    }
}

/// A complex grid function on a fixed discretization.
#[derive(Debug, Clone)]
pub struct GraphFunction {
    disc: Arc<Discretization>,
    values: Vec<Complex64>,
}

impl PartialEq for GraphFunction {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.disc, &other.disc) && self.values == other.values
    }
}

impl GraphFunction {
    pub fn new(disc: Arc<Discretization>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != disc.len() {
            return Err(Error::Domain(format!(
                "function has {} values but the discretization has {} nodes",
                values.len(),
                disc.len()
            )));
        }
        Ok(Self { disc, values })
    }

    pub fn zeros(disc: &Arc<Discretization>) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); disc.len()],
            disc: disc.clone(),
        }
    }

    pub fn from_real(disc: &Arc<Discretization>, values: &[f64]) -> Result<Self> {
        Self::new(disc.clone(), values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Samples `f(edge, x)` at every node, using each node's representative
    /// location.
    pub fn from_fn(disc: &Arc<Discretization>, f: impl Fn(usize, f64) -> Complex64) -> Self {
        Self {
            values: disc.locations.iter().map(|&(e, x)| f(e, x)).collect(),
            disc: disc.clone(),
        }
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            disc: self.disc.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        self.map(|v| v * s)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `‖u‖²_{L²}`.
    pub fn mass(&self) -> f64 {
        self.disc.mass_of(&self.values)
    }

    /// `𝔉[u]`.
    pub fn quadratic_form(&self) -> f64 {
        self.disc.form_of(&self.values)
    }

    /// `‖u‖²_G = 𝔉[u] + 2λ₀‖u‖²_{L²}`.
    pub fn g_norm_sq(&self, lambda0: f64) -> f64 {
        self.quadratic_form() + 2.0 * lambda0 * self.mass()
    }

    pub fn lp_norm(&self, q: f64) -> f64 {
        self.disc.power_sum_of(&self.values, q).powf(1.0 / q)
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.disc.grad_sq_of(&self.values)
    }

    pub fn h1_norm_sq(&self) -> f64 {
        self.grad_norm_sq() + self.mass()
    }

    pub fn h1_inner(&self, other: &GraphFunction) -> Complex64 {
        self.disc.h1_inner_of(&self.values, &other.values)
    }

    /// `‖u‖^{p+1}_{p+1} / (‖u′‖^{(p−1)/2} ‖u‖^{(p+3)/2})`, the quotient bounded
    /// by the Gagliardo–Nirenberg constant.
    pub fn gn_ratio(&self, p: f64) -> Result<f64> {
        let grad = self.grad_norm_sq().sqrt();
        let l2 = self.mass().sqrt();
        if grad == 0.0 || l2 == 0.0 {
            return Err(Error::Domain(
                "Gagliardo–Nirenberg ratio is undefined for a function with zero norm or gradient".into(),
            ));
        }
        let num = self.disc.power_sum_of(&self.values, p + 1.0);
        Ok(num / (grad.powf(0.5 * (p - 1.0)) * l2.powf(0.5 * (p + 3.0))))
    }

    /// Values along edge `e`, including both endpoints.
    pub fn edge_values(&self, e: usize) -> Vec<Complex64> {
        self.disc.grids[e].nodes.iter().map(|&n| self.values[n]).collect()
    }

    /// Writes `edge_id,x,re,im`, one row per grid point of every edge.
    /// Vertex values repeat on each incident edge.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for (grid, edge) in self.disc.grids.iter().zip(self.disc.graph.edges()) {
            for (k, &node) in grid.nodes.iter().enumerate() {
                let v = self.values[node];
                out.serialize(CsvRow {
                    edge_id: edge.id.clone(),
                    x: grid.position(k),
                    re: v.re,
                    im: v.im,
                })?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format written by [`write_csv`](Self::write_csv). Every
    /// node must be covered, and repeated vertex values must agree.
    pub fn read_csv<R: Read>(disc: &Arc<Discretization>, r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut values = vec![None::<Complex64>; disc.len()];
        for (line, row) in reader.deserialize::<CsvRow>().enumerate() {
            let row = row?;
            let field = format!("row {}", line + 2);
            let e = disc
                .graph
                .edge_index(&row.edge_id)
                .ok_or_else(|| Error::parse(&field, format!("unknown edge `{}`", row.edge_id)))?;
            let grid = &disc.grids[e];
            let k = (row.x / grid.step).round();
            if k < 0.0 || k as usize >= grid.nodes.len() || (row.x - k * grid.step).abs() > 1e-6 * grid.step {
                return Err(Error::parse(
                    &field,
                    format!("x = {} is not a grid point of edge `{}`", row.x, row.edge_id),
                ));
            }
            let node = grid.nodes[k as usize];
            let v = Complex64::new(row.re, row.im);
            match values[node] {
                Some(prev) if (prev - v).norm() > 1e-12 * (1.0 + prev.norm()) => {
                    return Err(Error::parse(&field, "inconsistent value at a shared vertex"));
                }
                _ => values[node] = Some(v),
            }
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::parse("csv", format!("node {i} missing"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(disc.clone(), values)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    edge_id: String,
    x: f64,
    re: f64,
    im: f64,
}
