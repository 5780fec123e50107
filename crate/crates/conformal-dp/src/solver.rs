//! Graph Laplacian discretization of -Δ_g and the conformal structure.
//!
//! The Laplacian is the unnormalized L = D - W on a union-kNN graph with
//! heat-kernel edge weights exp(-ρ_g²/h_L²). The conformal scaling σ solves
//! the SPD system (L + υI)σ = h with h_i = c̃ - f̃_i by conjugate gradient,
//! and φ = e^{2σ} obeys the discrete maximum principle
//! (c̃ - f̃_max)/υ <= σ <= (c̃ - f̃_min)/υ.
//!
//! Conformal geodesic distances are shortest paths in the graph with edge
//! lengths ℓ*_ij = ρ_g(x_i, x_j)·(√φ_i + √φ_j)/2 (trapezoid rule on the
//! conformal length integral). Off-node query points are wired to their k
//! nearest nodes, and φ off the node set is clamped Shepard interpolation,
//! which keeps every edge factor inside [√φ_min, √φ_max] so the bilateral
//! estimates hold structurally against the same-graph base distance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rayon::prelude::*;

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::manifold::{ManifoldSpec, Point};

/// One adjacency entry: neighbor index, base geodesic length, heat weight.
#[derive(Clone, Copy, Debug)]
pub struct Edge {
    pub to: usize,
    pub rho: f64,
    pub weight: f64,
}

/// Unnormalized graph Laplacian L = D - W on a union-kNN graph.
#[derive(Clone, Debug)]
pub struct GraphLaplacian {
    nodes: Vec<Point>,
    neighbors: Vec<Vec<Edge>>,
    degrees: Vec<f64>,
    knn_k: usize,
    edge_bandwidth: f64,
}

impl GraphLaplacian {
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn knn_k(&self) -> usize {
        self.knn_k
    }

    pub fn edge_bandwidth(&self) -> f64 {
        self.edge_bandwidth
    }

    pub fn neighbors(&self, i: usize) -> &[Edge] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    /// y = L x.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for i in 0..x.len() {
            let mut acc = self.degrees[i] * x[i];
            for e in &self.neighbors[i] {
                acc -= e.weight * x[e.to];
            }
            y[i] = acc;
        }
        y
    }

    /// CSV edge list `i,j,rho_g,weight,ell_star` (each undirected edge once,
    /// i < j). `phi` supplies the conformal scaling for ℓ*.
    pub fn write_edges_csv<W: Write>(&self, phi: &[f64], mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,rho_g,weight,ell_star")?;
        for i in 0..self.len() {
            for e in &self.neighbors[i] {
                if e.to > i {
                    let ell = e.rho * 0.5 * (phi[i].sqrt() + phi[e.to].sqrt());
                    writeln!(out, "{},{},{},{},{}", i, e.to, e.rho, e.weight, ell)?;
                }
            }
        }
        Ok(())
    }
}

/// Default neighbor count: max(10, ⌈log₂ n⌉ + 5).
pub fn default_knn_k(n: usize) -> usize {
    let log2 = (n.max(2) as f64).log2().ceil() as usize;
    (log2 + 5).max(10)
}

/// Default edge bandwidth: median k-NN distance over all nodes.
pub fn default_edge_bandwidth(nodes: &[Point], k: usize, spec: &ManifoldSpec) -> Result<f64> {
    let n = nodes.len();
    for p in nodes {
        spec.validate_point(p)?;
    }
    let mut kth = Vec::with_capacity(n);
    for i in 0..n {
        let mut d: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| spec.distance_unchecked(&nodes[i], &nodes[j]))
            .collect();
        d.sort_by(f64::total_cmp);
        kth.push(d[(k - 1).min(d.len() - 1)]);
    }
    kth.sort_by(f64::total_cmp);
    Ok(kth[kth.len() / 2])
}

/// Build the symmetric union-kNN graph with heat-kernel weights and verify
/// connectivity.
pub fn build_graph(
    nodes: &[Point],
    k: usize,
    h_l: f64,
    spec: &ManifoldSpec,
) -> Result<GraphLaplacian> {
    let n = nodes.len();
    if n < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least k+1 = {} nodes, got {n}",
            k + 1
        )));
    }
    if !(h_l > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "edge bandwidth must be positive, got {h_l}"
        )));
    }
    for p in nodes {
        spec.validate_point(p)?;
    }
    // Pairwise distances, then per-node k nearest.
    let dist_rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        spec.distance_unchecked(&nodes[i], &nodes[j])
                    }
                })
                .collect()
        })
        .collect();

    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist_rows[i][a].total_cmp(&dist_rows[i][b]));
        for &j in order.iter().take(k) {
            adjacency[i].push((j, dist_rows[i][j]));
        }
    }
    // Union symmetrization.
    let mut neighbors: Vec<Vec<Edge>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, _) in &adjacency[i] {
            let (a, b) = (i.min(j), i.max(j));
            if neighbors[a].iter().any(|e| e.to == b) {
                continue;
            }
            let rho = dist_rows[a][b];
            let weight = (-(rho * rho) / (h_l * h_l)).exp();
            neighbors[a].push(Edge { to: b, rho, weight });
            neighbors[b].push(Edge { to: a, rho, weight });
        }
    }
    let degrees: Vec<f64> = neighbors
        .iter()
        .map(|es| es.iter().map(|e| e.weight).sum())
        .collect();

    let graph = GraphLaplacian {
        nodes: nodes.to_vec(),
        neighbors,
        degrees,
        knn_k: k,
        edge_bandwidth: h_l,
    };
    let components = graph.component_count();
    if components != 1 {
        return Err(Error::DisconnectedGraph { components });
    }
    Ok(graph)
}

impl GraphLaplacian {
    fn component_count(&self) -> usize {
        let n = self.len();
        let mut visited = vec![false; n];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if visited[start] {
                continue;
            }
            components += 1;
            stack.push(start);
            visited[start] = true;
            while let Some(i) = stack.pop() {
                for e in &self.neighbors[i] {
                    if !visited[e.to] {
                        visited[e.to] = true;
                        stack.push(e.to);
                    }
                }
            }
        }
        components
    }
}

/// Conjugate gradient for an SPD operator, relative residual target.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs_old: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..max_iters {
        if rs_old.sqrt() <= rel_tol * b_norm {
            return Ok(x);
        }
        let ap = apply(&p);
        let p_ap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if p_ap <= 0.0 || !p_ap.is_finite() {
            return Err(Error::CgDivergence {
                iterations: max_iters,
                residual: rs_old.sqrt(),
            });
        }
        let alpha = rs_old / p_ap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs_old;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs_old = rs_new;
    }
    if rs_old.sqrt() <= rel_tol * b_norm {
        Ok(x)
    } else {
        Err(Error::CgDivergence {
            iterations: max_iters,
            residual: rs_old.sqrt() / b_norm,
        })
    }
}

/// m implicit-Euler steps of the graph heat semigroup:
/// ((I + (t/m) L)^{-1})^m · values. Preserves constants exactly.
pub fn heat_smooth(
    laplacian: &GraphLaplacian,
    values: &[f64],
    t: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    if values.len() != laplacian.len() {
        return Err(Error::InvalidArgument(
            "value vector length must match node count".into(),
        ));
    }
    if !(t > 0.0) || steps == 0 {
        return Err(Error::InvalidArgument(
            "heat time and step count must be positive".into(),
        ));
    }
    let s = t / steps as f64;
    let n = laplacian.len();
    let apply = |x: &[f64]| -> Vec<f64> {
        let lx = laplacian.apply(x);
        x.iter().zip(&lx).map(|(xi, li)| xi + s * li).collect()
    };
    let mut current = values.to_vec();
    for _ in 0..steps {
        current = conjugate_gradient(apply, &current, 1e-12, 10 * n)?;
    }
    Ok(current)
}

/// Solved conformal structure: σ, φ = e^{2σ} and the graph they live on.
#[derive(Clone, Debug)]
pub struct ConformalStructure {
    laplacian: GraphLaplacian,
    upsilon: f64,
    sigma: Vec<f64>,
    phi: Vec<f64>,
    phi_min: f64,
    phi_max: f64,
    source: DensityField,
}

/// Solve (L + υI)σ = c̃ - f̃ and exponentiate.
pub fn solve_sigma(
    laplacian: &GraphLaplacian,
    field: &DensityField,
    upsilon: f64,
) -> Result<ConformalStructure> {
    if !field.is_sanitized() {
        return Err(Error::NotSanitized);
    }
    if !(upsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "upsilon must be positive, got {upsilon}"
        )));
    }
    if field.len() != laplacian.len() {
        return Err(Error::InvalidArgument(
            "field and graph node counts differ".into(),
        ));
    }
    let c = field.mean_c();
    let rhs: Vec<f64> = field.values().iter().map(|f| c - f).collect();
    let n = laplacian.len();
    let apply = |x: &[f64]| -> Vec<f64> {
        let lx = laplacian.apply(x);
        x.iter().zip(&lx).map(|(xi, li)| li + upsilon * xi).collect()
    };
    let sigma = conjugate_gradient(apply, &rhs, 1e-12, 50 * n)?;
    let phi: Vec<f64> = sigma.iter().map(|s| (2.0 * s).exp()).collect();
    let phi_min = phi.iter().cloned().fold(f64::INFINITY, f64::min);
    let phi_max = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ConformalStructure {
        laplacian: laplacian.clone(),
        upsilon,
        sigma,
        phi,
        phi_min,
        phi_max,
        source: field.clone(),
    })
}

/// Discrete comparison principle probe: solve (L + υI)σ_j = c - f_j with a
/// shared constant c and report whether f1 <= f2 pointwise produced
/// σ(f1) >= σ(f2) - 1e-9 componentwise. The difference σ1 - σ2 =
/// (L + υI)^{-1}(f2 - f1) does not depend on c, so the shared-mean
/// precondition is honored by construction.
pub fn comparison_monotonicity_check(
    laplacian: &GraphLaplacian,
    upsilon: f64,
    f1: &[f64],
    f2: &[f64],
) -> Result<bool> {
    let n = laplacian.len();
    if f1.len() != n || f2.len() != n {
        return Err(Error::InvalidArgument("length mismatch".into()));
    }
    let c = f1.iter().sum::<f64>() / n as f64;
    let apply = |x: &[f64]| -> Vec<f64> {
        let lx = laplacian.apply(x);
        x.iter().zip(&lx).map(|(xi, li)| li + upsilon * xi).collect()
    };
    let rhs1: Vec<f64> = f1.iter().map(|f| c - f).collect();
    let rhs2: Vec<f64> = f2.iter().map(|f| c - f).collect();
    let s1 = conjugate_gradient(&apply, &rhs1, 1e-12, 50 * n)?;
    let s2 = conjugate_gradient(&apply, &rhs2, 1e-12, 50 * n)?;
    Ok(s1.iter().zip(&s2).all(|(a, b)| *a >= *b - 1e-9))
}

impl ConformalStructure {
    pub fn laplacian(&self) -> &GraphLaplacian {
        &self.laplacian
    }

    pub fn upsilon(&self) -> f64 {
        self.upsilon
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn phi_min(&self) -> f64 {
        self.phi_min
    }

    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }

    pub fn source(&self) -> &DensityField {
        &self.source
    }

    pub fn nodes(&self) -> &[Point] {
        self.laplacian.nodes()
    }

    /// CSV dump `node_index,sigma,phi`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node_index,sigma,phi")?;
        for (i, (s, p)) in self.sigma.iter().zip(&self.phi).enumerate() {
            writeln!(out, "{i},{s},{p}")?;
        }
        Ok(())
    }

    /// k nearest node indices to an arbitrary point, with distances.
    /// Points are validated at the public entry points; the scan itself
    /// uses the unchecked distance.
    fn nearest_nodes(&self, z: &Point, spec: &ManifoldSpec) -> Vec<(usize, f64)> {
        let nodes = self.laplacian.nodes();
        let mut d: Vec<(usize, f64)> = nodes
            .iter()
            .enumerate()
            .map(|(i, p)| (i, spec.distance_unchecked(z, p)))
            .collect();
        d.sort_by(|a, b| a.1.total_cmp(&b.1));
        d.truncate(self.laplacian.knn_k());
        d
    }

    /// Clamped Shepard weight over a precomputed anchor set.
    fn shepard_phi(&self, anchors: &[(usize, f64)]) -> f64 {
        let h = self.laplacian.edge_bandwidth();
        let mut num = 0.0;
        let mut den = 0.0;
        for &(i, rho) in anchors {
            let w = (-(rho * rho) / (h * h)).exp();
            num += w * self.phi[i];
            den += w;
        }
        let value = if den > 0.0 {
            num / den
        } else {
            // all anchors beyond numeric reach; fall back to nearest
            self.phi[anchors[0].0]
        };
        value.clamp(self.phi_min, self.phi_max)
    }

    /// Shepard-interpolated conformal factor at z, clamped to
    /// [φ_min, φ_max]. Exact at nodes up to the weight concentration.
    pub fn phi_at(&self, z: &Point, spec: &ManifoldSpec) -> Result<f64> {
        let anchors = self.nearest_nodes(z, spec);
        Ok(self.shepard_phi(&anchors))
    }

    /// Conformal volume factor φ(z)^{dim/2} with the intrinsic dimension.
    pub fn conformal_volume_factor(&self, z: &Point, spec: &ManifoldSpec) -> Result<f64> {
        let phi = self.phi_at(z, spec)?;
        Ok(phi.powf(spec.intrinsic_dim() as f64 / 2.0))
    }

    /// Conformal edge length ℓ* between node i and an off-graph point with
    /// known φ value.
    fn ell_star_to_node(&self, i: usize, rho: f64, phi_z: f64) -> f64 {
        rho * 0.5 * (self.phi[i].sqrt() + phi_z.sqrt())
    }

    /// Dijkstra over the node graph from given seed distances.
    fn dijkstra(&self, seeds: &[(usize, f64)], scaled: bool) -> Vec<f64> {
        let n = self.laplacian.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut heap: BinaryHeap<HeapItem> = BinaryHeap::new();
        for &(i, d) in seeds {
            if d < dist[i] {
                dist[i] = d;
                heap.push(HeapItem { cost: d, node: i });
            }
        }
        while let Some(HeapItem { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for e in self.laplacian.neighbors(node) {
                let len = if scaled {
                    e.rho * 0.5 * (self.phi[node].sqrt() + self.phi[e.to].sqrt())
                } else {
                    e.rho
                };
                let next = cost + len;
                if next < dist[e.to] {
                    dist[e.to] = next;
                    heap.push(HeapItem {
                        cost: next,
                        node: e.to,
                    });
                }
            }
        }
        dist
    }

    /// Distances from a source point to every node, under conformal edge
    /// lengths (`scaled = true`) or base lengths. The source is wired to
    /// its k nearest vertices of the augmented graph. Cached by the
    /// samplers for one-source queries.
    pub fn distances_from(
        &self,
        a: &Point,
        spec: &ManifoldSpec,
        scaled: bool,
    ) -> Result<SourceDistances> {
        let anchors = self.nearest_nodes(a, spec);
        let phi_a = self.shepard_phi(&anchors);
        let seeds: Vec<(usize, f64)> = anchors
            .iter()
            .map(|&(i, rho)| {
                let d = if scaled {
                    self.ell_star_to_node(i, rho, phi_a)
                } else {
                    rho
                };
                (i, d)
            })
            .collect();
        let anchor_radius = anchors.last().map(|&(_, rho)| rho).unwrap_or(0.0);
        Ok(SourceDistances {
            node_dist: self.dijkstra(&seeds, scaled),
            scaled,
            source: a.clone(),
            source_phi: phi_a,
            source_anchor_radius: anchor_radius,
        })
    }

    /// Distances from a graph node to every node.
    pub fn distances_from_node(&self, i: usize, scaled: bool) -> SourceDistances {
        let anchor_radius = self
            .laplacian
            .neighbors(i)
            .iter()
            .map(|e| e.rho)
            .fold(0.0f64, f64::max);
        SourceDistances {
            node_dist: self.dijkstra(&[(i, 0.0)], scaled),
            scaled,
            source: self.laplacian.nodes()[i].clone(),
            source_phi: self.phi[i],
            source_anchor_radius: anchor_radius,
        }
    }

    /// ρ_{g*}(a, b) through the augmented graph.
    pub fn conformal_distance(&self, a: &Point, b: &Point, spec: &ManifoldSpec) -> Result<f64> {
        let source = self.distances_from(a, spec, true)?;
        self.distance_to_point(&source, b, spec)
    }

    /// Base-length shortest path ρ_G(a, b) over the same augmented graph.
    pub fn graph_distance(&self, a: &Point, b: &Point, spec: &ManifoldSpec) -> Result<f64> {
        let source = self.distances_from(a, spec, false)?;
        self.distance_to_point(&source, b, spec)
    }

    /// Finish a cached one-source query at an arbitrary target point.
    ///
    /// Besides the paths through the node set, the source and the target
    /// are wired to each other whenever one falls inside the other's
    /// k-nearest anchor radius (union-kNN over the augmented vertex set);
    /// this keeps ρ*(a, a) = 0 and removes the detour floor for nearby
    /// query pairs.
    pub fn distance_to_point(
        &self,
        source: &SourceDistances,
        b: &Point,
        spec: &ManifoldSpec,
    ) -> Result<f64> {
        Ok(self.query_point(source, b, spec)?.0)
    }

    /// One-scan query: distance from the cached source to `b` together
    /// with the interpolated conformal factor at `b`. The samplers call
    /// this once per proposal.
    pub fn query_point(
        &self,
        source: &SourceDistances,
        b: &Point,
        spec: &ManifoldSpec,
    ) -> Result<(f64, f64)> {
        let anchors = self.nearest_nodes(b, spec);
        let phi_b = if source.scaled {
            self.shepard_phi(&anchors)
        } else {
            1.0
        };
        let mut best = f64::INFINITY;
        for &(i, rho) in &anchors {
            let tail = if source.scaled {
                self.ell_star_to_node(i, rho, phi_b)
            } else {
                rho
            };
            best = best.min(source.node_dist[i] + tail);
        }
        let rho_ab = spec.distance_unchecked(&source.source, b);
        let b_anchor_radius = anchors.last().map(|&(_, rho)| rho).unwrap_or(0.0);
        if rho_ab <= source.source_anchor_radius.max(b_anchor_radius) {
            let direct = if source.scaled {
                rho_ab * 0.5 * (source.source_phi.sqrt() + phi_b.sqrt())
            } else {
                rho_ab
            };
            best = best.min(direct);
        }
        if best.is_finite() {
            Ok((best, phi_b))
        } else {
            Err(Error::DisconnectedGraph { components: 2 })
        }
    }

    /// Conformal distance between two graph nodes.
    pub fn conformal_distance_nodes(&self, i: usize, j: usize) -> f64 {
        self.distances_from_node(i, true).node_dist[j]
    }

    /// Base graph distance between two nodes.
    pub fn graph_distance_nodes(&self, i: usize, j: usize) -> f64 {
        self.distances_from_node(i, false).node_dist[j]
    }
}

/// Cached Dijkstra result from one source.
#[derive(Clone, Debug)]
pub struct SourceDistances {
    node_dist: Vec<f64>,
    scaled: bool,
    source: Point,
    source_phi: f64,
    source_anchor_radius: f64,
}

impl SourceDistances {
    pub fn node_dist(&self) -> &[f64] {
        &self.node_dist
    }
}

#[derive(PartialEq)]
struct HeapItem {
    cost: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost
        other.cost.total_cmp(&self.cost)
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
