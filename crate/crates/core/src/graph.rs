//! Metric graphs with δ-type vertex couplings and edge potentials.
//!
//! Every edge is identified with a segment `[0, L_e]` measured from its
//! `from` vertex. External edges are half-lines `[0, ∞)` attached to a single
//! vertex; numerically they are cut at a finite truncation length.

use std::collections::HashMap;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Truncation used when no vertex is attractive and no estimate of the decay
/// rate is available.
pub const FALLBACK_TRUNCATION: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: String,
    /// Coupling strength of the δ condition; `alpha > 0` is attractive.
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeLength {
    Finite(f64),
    /// A half-line, cut at `truncation` for computation.
    Infinite { truncation: f64 },
}

impl EdgeLength {
    /// Length of the computational segment.
    pub fn computational(&self) -> f64 {
        match *self {
            EdgeLength::Finite(l) => l,
            EdgeLength::Infinite { truncation } => truncation,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, EdgeLength::Infinite { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    /// Index of the vertex at `x = 0`.
    pub from: usize,
    /// Index of the vertex at `x = L_e`, or `None` for an external edge.
    pub to: Option<usize>,
    pub length: EdgeLength,
    pub potential: PotentialSpec,
}

/// Edge potential `W_e` in the edge's own coordinate. A single signed
/// profile carries `W = W₊ − W₋`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PotentialSpec {
    #[default]
    Zero,
    SquareWell {
        depth: f64,
        start: f64,
        width: f64,
    },
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// Piecewise-linear through `(x, w)`, held constant beyond the samples.
    Samples { x: Vec<f64>, w: Vec<f64> },
}

impl PotentialSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::SquareWell {
                depth,
                start,
                width,
            } => {
                if x >= *start && x <= start + width {
                    *depth
                } else {
                    0.0
                }
            }
            PotentialSpec::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let z = (x - center) / width;
                amplitude * (-0.5 * z * z).exp()
            }
            PotentialSpec::Samples { x: xs, w } => {
                if x <= xs[0] {
                    return w[0];
                }
                let last = xs.len() - 1;
                if x >= xs[last] {
                    return w[last];
                }
                let k = xs.partition_point(|&s| s <= x) - 1;
                let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
                w[k] + t * (w[k + 1] - w[k])
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, PotentialSpec::Zero)
    }

    /// Panel boundaries on `[0, len]` at which the profile (or its negative
    /// part) may fail to be smooth.
    fn breakpoints(&self, len: f64) -> Vec<f64> {
        let mut pts = vec![0.0, len];
        match self {
            PotentialSpec::SquareWell { start, width, .. } => {
                pts.push(*start);
                pts.push(start + width);
            }
            PotentialSpec::Gaussian { center, .. } => pts.push(*center),
            PotentialSpec::Samples { x, w } => {
                pts.extend_from_slice(x);
                for k in 0..x.len().saturating_sub(1) {
                    if w[k] * w[k + 1] < 0.0 {
                        pts.push(x[k] + w[k] / (w[k] - w[k + 1]) * (x[k + 1] - x[k]));
                    }
                }
            }
            PotentialSpec::Zero => {}
        }
        pts.retain(|&p| (0.0..=len).contains(&p));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    fn validate(&self, field: &str, len: f64) -> Result<()> {
        let positive = |v: f64, name: &str| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::parse(
                    format!("{field}.{name}"),
                    format!("{name} must be positive, got {v}"),
                ))
            }
        };
        let finite = |v: f64, name: &str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::parse(format!("{field}.{name}"), "must be finite"))
            }
        };
        match self {
            PotentialSpec::Zero => Ok(()),
            PotentialSpec::SquareWell {
                depth,
                start,
                width,
            } => {
                finite(*depth, "depth")?;
                finite(*start, "start")?;
                positive(*width, "width")
            }
            PotentialSpec::Gaussian {
                amplitude,
                center,
                width,
            } => {
                finite(*amplitude, "amplitude")?;
                finite(*center, "center")?;
                positive(*width, "width")
            }
            PotentialSpec::Samples { x, w } => {
                if x.is_empty() || x.len() != w.len() {
                    return Err(Error::parse(
                        format!("{field}.x"),
                        "sample positions and values must be non-empty and of equal length",
                    ));
                }
                if x.iter().chain(w).any(|v| !v.is_finite()) {
                    return Err(Error::parse(format!("{field}.w"), "samples must be finite"));
                }
                if x.windows(2).any(|p| p[1] <= p[0]) {
                    return Err(Error::parse(
                        format!("{field}.x"),
                        "sample positions must be strictly increasing",
                    ));
                }
                if x[0] < 0.0 || x[x.len() - 1] > len {
                    return Err(Error::parse(
                        format!("{field}.x"),
                        format!("sample positions must lie within [0, {len}]"),
                    ));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

impl MetricGraph {
    /// Builds a graph and checks every structural invariant together with
    /// the requirement of at least one external edge.
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        let g = Self::from_parts(vertices, edges)?;
        g.check_noncompact()?;
        Ok(g)
    }

    /// Structural validation only: ids, endpoints, lengths, potentials and
    /// connectivity. Compact graphs are accepted, which is useful for
    /// exercising the discretization on plain segments and cycles.
    pub fn from_parts(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::parse("vertices", "at least one vertex is required"));
        }
        let mut seen = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if seen.insert(v.id.as_str(), i).is_some() {
                return Err(Error::parse(
                    format!("vertices[{i}].id"),
                    format!("duplicate vertex id `{}`", v.id),
                ));
            }
            if !v.alpha.is_finite() {
                return Err(Error::parse(format!("vertices[{i}].alpha"), "must be finite"));
            }
        }
        let mut seen = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            let field = format!("edges[{i}]");
            if seen.insert(e.id.as_str(), i).is_some() {
                return Err(Error::parse(
                    format!("{field}.id"),
                    format!("duplicate edge id `{}`", e.id),
                ));
            }
            if e.from >= vertices.len() {
                return Err(Error::parse(format!("{field}.from"), "unknown vertex"));
            }
            if let Some(to) = e.to {
                if to >= vertices.len() {
                    return Err(Error::parse(format!("{field}.to"), "unknown vertex"));
                }
            }
            match e.length {
                EdgeLength::Finite(l) => {
                    if !(l.is_finite() && l > 0.0) {
                        return Err(Error::parse(
                            format!("{field}.length"),
                            "edge length must be positive",
                        ));
                    }
                    if e.to.is_none() {
                        return Err(Error::parse(
                            format!("{field}.length"),
                            "an external edge (to = null) must have infinite length",
                        ));
                    }
                }
                EdgeLength::Infinite { truncation } => {
                    if !(truncation.is_finite() && truncation > 0.0) {
                        return Err(Error::parse(
                            format!("{field}.truncation"),
                            "truncation length must be positive",
                        ));
                    }
                    if e.to.is_some() {
                        return Err(Error::parse(
                            format!("{field}.to"),
                            "an infinite edge has exactly one vertex endpoint",
                        ));
                    }
                }
            }
            e.potential
                .validate(&format!("{field}.potential"), e.length.computational())?;
        }

        let mut uf = UnionFind::<usize>::new(vertices.len());
        for e in &edges {
            if let Some(to) = e.to {
                uf.union(e.from, to);
            }
        }
        let root = uf.find(0);
        if let Some(i) = (0..vertices.len()).find(|&i| uf.find(i) != root) {
            return Err(Error::Assumption(format!(
                "the graph must be connected (vertex `{}` is unreachable from `{}`)",
                vertices[i].id, vertices[0].id
            )));
        }
        Ok(Self { vertices, edges })
    }

    fn check_noncompact(&self) -> Result<()> {
        if self.edges.iter().any(|e| e.length.is_infinite()) {
            Ok(())
        } else {
            Err(Error::Assumption(
                "the graph must have at least one external edge".into(),
            ))
        }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    /// Number of edge ends attached to each vertex (a loop counts twice).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.vertices.len()];
        for e in &self.edges {
            deg[e.from] += 1;
            if let Some(to) = e.to {
                deg[to] += 1;
            }
        }
        deg
    }

    /// Total length of the computational domain.
    pub fn truncated_measure(&self) -> f64 {
        self.edges.iter().map(|e| e.length.computational()).sum()
    }

    /// Returns `(N, α)` when the graph is a star of `N` potential-free
    /// half-lines on a single vertex.
    pub fn as_star(&self) -> Option<(usize, f64)> {
        if self.vertices.len() != 1 || self.edges.len() < 2 {
            return None;
        }
        let star = self
            .edges
            .iter()
            .all(|e| e.from == 0 && e.to.is_none() && e.potential.is_zero());
        star.then(|| (self.edges.len(), self.vertices[0].alpha))
    }

    /// Copy of the graph with every coupling strength replaced.
    pub fn with_alphas(&self, alpha: impl Fn(&Vertex) -> f64) -> Self {
        let mut g = self.clone();
        for v in &mut g.vertices {
            v.alpha = alpha(v);
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarGraphSpec {
    /// Number of half-lines.
    pub n: usize,
    /// Central coupling strength.
    pub gamma: f64,
    pub truncation: f64,
}

/// One central vertex with coupling `+γ` and `N` potential-free half-lines.
pub fn make_star(spec: StarGraphSpec) -> Result<MetricGraph> {
    if spec.n < 2 {
        return Err(Error::Domain(format!(
            "a star graph needs N ≥ 2 half-lines, got {}",
            spec.n
        )));
    }
    if !(spec.gamma.is_finite() && spec.gamma > 0.0) {
        return Err(Error::Domain(format!("γ must be positive, got {}", spec.gamma)));
    }
    let vertices = vec![Vertex {
        id: "v0".into(),
        alpha: spec.gamma,
    }];
    let edges = (1..=spec.n)
        .map(|i| Edge {
            id: format!("e{i}"),
            from: 0,
            to: None,
            length: EdgeLength::Infinite {
                truncation: spec.truncation,
            },
            potential: PotentialSpec::Zero,
        })
        .collect();
    MetricGraph::new(vertices, edges)
}

// ---------------------------------------------------------------------------
// JSON configuration

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphConfig {
    vertices: Vec<VertexConfig>,
    edges: Vec<EdgeConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexConfig {
    id: String,
    alpha: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeConfig {
    id: String,
    from: String,
    to: Option<String>,
    length: LengthConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truncation: Option<f64>,
    #[serde(default)]
    potential: PotentialSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum LengthConfig {
    Num(f64),
    Word(String),
}

/// Parses and validates a JSON graph configuration.
///
/// Infinite edges without an explicit `truncation` are cut at
/// `20/√λ̂`, where `λ̂ = max_v (α_v / deg v)²` over attractive vertices (exact
/// bottom of the spectrum for a star); [`FALLBACK_TRUNCATION`] otherwise.
pub fn parse_graph(text: &str) -> Result<MetricGraph> {
    let cfg: GraphConfig = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        // serde reports the missing/unknown field name inside backticks
        let field = msg
            .split('`')
            .nth(1)
            .map(str::to_owned)
            .unwrap_or_else(|| "<document>".into());
        Error::parse(field, msg)
    })?;

    let index: HashMap<&str, usize> = cfg
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| (v.id.as_str(), i))
        .collect();
    let vertices: Vec<Vertex> = cfg
        .vertices
        .iter()
        .map(|v| Vertex {
            id: v.id.clone(),
            alpha: v.alpha,
        })
        .collect();

    let mut degree = vec![0usize; vertices.len()];
    let mut edges = Vec::with_capacity(cfg.edges.len());
    let mut pending_truncation = Vec::new();
    for (i, e) in cfg.edges.iter().enumerate() {
        let field = format!("edges[{i}]");
        let from = *index
            .get(e.from.as_str())
            .ok_or_else(|| Error::parse(format!("{field}.from"), format!("unknown vertex `{}`", e.from)))?;
        let to = match &e.to {
            None => None,
            Some(t) => Some(
                *index
                    .get(t.as_str())
                    .ok_or_else(|| Error::parse(format!("{field}.to"), format!("unknown vertex `{t}`")))?,
            ),
        };
        degree[from] += 1;
        if let Some(t) = to {
            degree[t] += 1;
        }
        let length = match &e.length {
            LengthConfig::Num(l) => {
                if e.truncation.is_some() {
                    return Err(Error::parse(
                        format!("{field}.truncation"),
                        "truncation is only meaningful for infinite edges",
                    ));
                }
                EdgeLength::Finite(*l)
            }
            LengthConfig::Word(w) if matches!(w.as_str(), "inf" | "infinity" | "Infinity") => {
                match e.truncation {
                    Some(t) => EdgeLength::Infinite { truncation: t },
                    None => {
                        pending_truncation.push(i);
                        EdgeLength::Infinite { truncation: f64::NAN }
                    }
                }
            }
            LengthConfig::Word(w) => {
                return Err(Error::parse(
                    format!("{field}.length"),
                    format!("expected a number or \"inf\", got \"{w}\""),
                ))
            }
        };
        edges.push(Edge {
            id: e.id.clone(),
            from,
            to,
            length,
            potential: e.potential.clone(),
        });
    }

    if !pending_truncation.is_empty() {
        let estimate = vertices
            .iter()
            .zip(&degree)
            .filter(|(v, &d)| v.alpha > 0.0 && d > 0)
            .map(|(v, &d)| (v.alpha / d as f64).powi(2))
            .fold(0.0f64, f64::max);
        let t = if estimate > 0.0 {
            20.0 / estimate.sqrt()
        } else {
            FALLBACK_TRUNCATION
        };
        for i in pending_truncation {
            edges[i].length = EdgeLength::Infinite { truncation: t };
        }
    }

    MetricGraph::new(vertices, edges)
}

/// Serializes to the JSON configuration schema accepted by [`parse_graph`].
pub fn to_json(g: &MetricGraph) -> String {
    let cfg = GraphConfig {
        vertices: g
            .vertices
            .iter()
            .map(|v| VertexConfig {
                id: v.id.clone(),
                alpha: v.alpha,
            })
            .collect(),
        edges: g
            .edges
            .iter()
            .map(|e| {
                let (length, truncation) = match e.length {
                    EdgeLength::Finite(l) => (LengthConfig::Num(l), None),
                    EdgeLength::Infinite { truncation } => {
                        (LengthConfig::Word("inf".into()), Some(truncation))
                    }
                };
                EdgeConfig {
                    id: e.id.clone(),
                    from: g.vertices[e.from].id.clone(),
                    to: e.to.map(|t| g.vertices[t].id.clone()),
                    length,
                    truncation,
                    potential: e.potential.clone(),
                }
            })
            .collect(),
    };
    serde_json::to_string_pretty(&cfg).expect("graph config is always serializable")
}

// ---------------------------------------------------------------------------
// Potential diagnostics

#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityReport {
    /// `‖W₊‖_{L¹}` on the truncated domain.
    pub w_plus_l1: f64,
    /// `sup W₊` over the truncated domain.
    pub w_plus_sup: f64,
    /// `(r, ‖W₋‖_{L^r})` for `r = 1` and `r = 1 + 2/(p−1)`.
    pub w_minus: Vec<(f64, f64)>,
}

/// Quadrature of the positive and negative parts of the potential.
/// Purely diagnostic: sampled potentials on a truncated domain always have
/// finite norms.
pub fn potential_integrability_report(g: &MetricGraph, p: f64) -> Result<IntegrabilityReport> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("p must exceed 1, got {p}")));
    }
    const TOL: f64 = 1e-12;
    let exponents = [1.0, 1.0 + 2.0 / (p - 1.0)];
    let mut w_plus_l1 = 0.0;
    let mut w_plus_sup = 0.0f64;
    let mut minus = [0.0; 2];
    for e in &g.edges {
        if e.potential.is_zero() {
            continue;
        }
        let len = e.length.computational();
        let pts = e.potential.breakpoints(len);
        let w = |x: f64| e.potential.eval(x);
        w_plus_l1 += quad::piecewise(|x| w(x).max(0.0), &pts, TOL);
        for (acc, &r) in minus.iter_mut().zip(&exponents) {
            *acc += quad::piecewise(|x| (-w(x)).max(0.0).powf(r), &pts, TOL);
        }
        // the supremum of these profiles is attained on a breakpoint or at a
        // Gaussian center, both of which are in `pts`
        w_plus_sup = pts.iter().map(|&x| w(x).max(0.0)).fold(w_plus_sup, f64::max);
    }
    Ok(IntegrabilityReport {
        w_plus_l1,
        w_plus_sup,
        w_minus: exponents
            .iter()
            .zip(minus)
            .map(|(&r, s)| (r, s.powf(1.0 / r)))
            .collect(),
    })
}
