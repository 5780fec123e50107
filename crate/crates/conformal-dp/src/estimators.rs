//! Fréchet means under the original and the conformal graph metric.
//!
//! The original-metric mean is Riemannian gradient descent on the Fréchet
//! energy F(x) = (1/2n) Σ ρ_g²(x, x_i): step along the tangent average of
//! log maps, halving the step on energy increase, until the gradient norm
//! drops below tolerance. The conformal mean is the graph node minimizing
//! the discrete energy under ρ_{g*}, found by exhaustive evaluation with
//! one Dijkstra per data node.

use crate::error::{Error, Result};
use crate::manifold::{ManifoldKind, ManifoldSpec, Point, Tangent, TangentVector};
use crate::solver::ConformalStructure;

use nalgebra::{DMatrix, DVector};

/// Outcome of the gradient-descent mean.
#[derive(Clone, Debug)]
pub struct FrechetResult {
    pub mean: Point,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub converged: bool,
}

/// Fréchet energy (1/2n) Σ ρ²(x, x_i). Assumes valid points (the descent
/// loop evaluates it many times behind one boundary validation).
pub fn frechet_energy(x: &Point, dataset: &[Point], spec: &ManifoldSpec) -> Result<f64> {
    let mut acc = 0.0;
    for p in dataset {
        let d = spec.distance_unchecked(x, p);
        acc += d * d;
    }
    Ok(acc / (2.0 * dataset.len() as f64))
}

/// Extrinsic initialization: normalized ambient average on the sphere,
/// log-Euclidean average on SPD. Cheap and inside the Karcher ball for
/// every regime the experiments use.
fn initial_guess(dataset: &[Point], spec: &ManifoldSpec) -> Result<Point> {
    match spec.kind() {
        ManifoldKind::Sphere => {
            let d = spec.dim_param();
            let mut acc = DVector::zeros(d);
            for p in dataset {
                acc += p.as_sphere()?;
            }
            let norm = acc.norm();
            if norm < 1e-12 {
                // degenerate balanced configuration; fall back to the first point
                return Ok(dataset[0].clone());
            }
            Ok(Point::Sphere(acc * (spec.radius() / norm)))
        }
        ManifoldKind::Spd => {
            let k = spec.dim_param();
            let mut acc = DMatrix::zeros(k, k);
            for p in dataset {
                acc += crate::manifold::spd_function(p.as_spd()?, |l| l.ln());
            }
            acc /= dataset.len() as f64;
            Ok(Point::Spd(crate::manifold::spd_symmetric_map(
                &acc,
                f64::exp,
            )))
        }
    }
}

/// Average of log maps at x: the negative Riemannian gradient of F.
fn tangent_mean(x: &Point, dataset: &[Point], spec: &ManifoldSpec) -> Result<TangentVector> {
    let mut acc = TangentVector::zero(spec, x)?;
    for p in dataset {
        let v = spec.log_map(x, p)?;
        match (&mut acc.direction, &v.direction) {
            (Tangent::Sphere(a), Tangent::Sphere(b)) => *a += b,
            (Tangent::Spd(a), Tangent::Spd(b)) => *a += b,
            _ => unreachable!("log_map preserves the manifold variant"),
        }
    }
    Ok(spec.scale_tangent(&acc, 1.0 / dataset.len() as f64))
}

/// Riemannian gradient descent for the Fréchet (Karcher) mean.
///
/// Returns with `converged = false` after `max_iter` iterations; the best
/// iterate seen is still returned.
pub fn frechet_mean(
    dataset: &[Point],
    spec: &ManifoldSpec,
    tol: f64,
    max_iter: usize,
) -> Result<FrechetResult> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    for p in dataset {
        spec.validate_point(p)?;
    }
    let mut x = initial_guess(dataset, spec)?;
    let mut energy = frechet_energy(&x, dataset, spec)?;
    let mut grad_norm = f64::INFINITY;
    for iter in 0..max_iter {
        let grad = tangent_mean(&x, dataset, spec)?;
        grad_norm = spec.tangent_norm(&grad)?;
        if grad_norm <= tol {
            return Ok(FrechetResult {
                mean: x,
                iterations: iter + 1,
                final_gradient_norm: grad_norm,
                converged: true,
            });
        }
        // step = 1, halving on energy increase
        let mut step = 1.0;
        loop {
            let candidate = spec.exp_map(&spec.scale_tangent(&grad, step))?;
            let cand_energy = frechet_energy(&candidate, dataset, spec)?;
            if cand_energy <= energy {
                x = candidate;
                energy = cand_energy;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                // no step reduces the energy; return the current iterate
                return Ok(FrechetResult {
                    mean: x,
                    iterations: iter + 1,
                    final_gradient_norm: grad_norm,
                    converged: grad_norm <= tol,
                });
            }
        }
    }
    Ok(FrechetResult {
        mean: x,
        iterations: max_iter,
        final_gradient_norm: grad_norm,
        converged: grad_norm <= tol,
    })
}

/// Node index minimizing the discrete conformal Fréchet energy
/// (1/2n) Σ_i ρ_{g*}²(node, x_i) over all graph nodes, computed with one
/// Dijkstra per data node. Ties break to the lowest index.
pub fn frechet_mean_conformal(data_indices: &[usize], cs: &ConformalStructure) -> Result<usize> {
    let n_nodes = cs.laplacian().len();
    if data_indices.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    for &i in data_indices {
        if i >= n_nodes {
            return Err(Error::InvalidArgument(format!(
                "data index {i} out of range ({n_nodes} nodes)"
            )));
        }
    }
    let mut energy = vec![0.0f64; n_nodes];
    for &i in data_indices {
        let dist = cs.distances_from_node(i, true);
        for (node, d) in dist.node_dist().iter().enumerate() {
            if !d.is_finite() {
                return Err(Error::DisconnectedGraph { components: 2 });
            }
            energy[node] += d * d;
        }
    }
    let scale = 1.0 / (2.0 * data_indices.len() as f64);
    let mut best = 0;
    for (node, e) in energy.iter().enumerate() {
        if e * scale < energy[best] * scale {
            best = node;
        }
    }
    Ok(best)
}

/// Geodesic distance between the non-private and privatized summary.
pub fn utility_error(eta_np: &Point, eta_p: &Point, spec: &ManifoldSpec) -> Result<f64> {
    spec.geodesic_distance(eta_np, eta_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{DensityField, KernelConfig, SanitizationRecord};
    use crate::manifold::sphere_point;
    use crate::rng::SplitMix64;
    use crate::solver::{build_graph, solve_sigma};
    use approx::assert_relative_eq;

    fn spec_s2() -> ManifoldSpec {
        ManifoldSpec::unit_sphere(3).unwrap()
    }

    fn cluster(n: usize, spread: f64, seed: u64) -> Vec<Point> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .map(|_| {
                let mut v = DVector::zeros(3);
                v[2] = 1.0;
                v[0] = spread * rng.next_normal();
                v[1] = spread * rng.next_normal();
                let norm = v.norm();
                Point::Sphere(v / norm)
            })
            .collect()
    }

    #[test]
    fn identical_points_converge_immediately() {
        let spec = spec_s2();
        let p = sphere_point(&[0.0, 0.0, 1.0]);
        let data = vec![p.clone(), p.clone(), p.clone()];
        let res = frechet_mean(&data, &spec, 1e-9, 200).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert_relative_eq!(
            spec.geodesic_distance(&res.mean, &p).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_points_give_midpoint() {
        let spec = spec_s2();
        let a = sphere_point(&[1.0, 0.0, 0.0]);
        let b = sphere_point(&[0.0, 1.0, 0.0]);
        let res = frechet_mean(&[a.clone(), b.clone()], &spec, 1e-9, 200).unwrap();
        assert!(res.converged);
        let da = spec.geodesic_distance(&res.mean, &a).unwrap();
        let db = spec.geodesic_distance(&res.mean, &b).unwrap();
        assert_relative_eq!(da, db, epsilon = 1e-9);
        assert_relative_eq!(da, std::f64::consts::FRAC_PI_4, epsilon = 1e-9);
    }

    #[test]
    fn spd_mean_of_commuting_pair() {
        // diag matrices: affine mean of diag(a), diag(b) is diag(sqrt(ab))
        let spec = ManifoldSpec::spd(2).unwrap();
        let a = crate::manifold::spd_point(2, &[1.0, 0.0, 0.0, 4.0]);
        let b = crate::manifold::spd_point(2, &[4.0, 0.0, 0.0, 1.0]);
        let res = frechet_mean(&[a, b], &spec, 1e-10, 200).unwrap();
        assert!(res.converged);
        let m = res.mean.as_spd().unwrap();
        assert_relative_eq!(m[(0, 0)], 2.0, epsilon = 1e-8);
        assert_relative_eq!(m[(1, 1)], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn gradient_norm_at_convergence() {
        let spec = spec_s2();
        let data = cluster(20, 0.2, 44);
        let res = frechet_mean(&data, &spec, 1e-9, 200).unwrap();
        assert!(res.converged);
        assert!(res.final_gradient_norm <= 1e-9);
    }

    #[test]
    fn permutation_invariance() {
        let spec = spec_s2();
        let data = cluster(25, 0.25, 45);
        let mut reversed = data.clone();
        reversed.reverse();
        let a = frechet_mean(&data, &spec, 1e-9, 200).unwrap();
        let b = frechet_mean(&reversed, &spec, 1e-9, 200).unwrap();
        assert_relative_eq!(
            spec.geodesic_distance(&a.mean, &b.mean).unwrap(),
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn descent_beats_grid_search() {
        let spec = spec_s2();
        let mut rng = SplitMix64::new(46);
        for trial in 0..5 {
            let data = cluster(20, 0.25, 400 + trial);
            let res = frechet_mean(&data, &spec, 1e-9, 200).unwrap();
            let our_energy = frechet_energy(&res.mean, &data, &spec).unwrap();
            // grid search over the containing ball
            let mut best = f64::INFINITY;
            for _ in 0..10_000 {
                let mut v = DVector::zeros(3);
                v[2] = 1.0;
                v[0] = 0.4 * (rng.next_f64() - 0.5) * 2.0;
                v[1] = 0.4 * (rng.next_f64() - 0.5) * 2.0;
                let g = Point::Sphere(&v / v.norm());
                best = best.min(frechet_energy(&g, &data, &spec).unwrap());
            }
            assert!(
                our_energy <= best + 1e-6,
                "descent energy {our_energy} vs grid {best}"
            );
        }
    }

    #[test]
    fn energy_nonincreasing_along_iterations() {
        // replicate the loop manually to watch the energy sequence
        let spec = spec_s2();
        let data = cluster(15, 0.3, 47);
        let mut x = sphere_point(&[0.3, 0.3, (1.0f64 - 0.18).sqrt()]);
        let mut energy = frechet_energy(&x, &data, &spec).unwrap();
        for _ in 0..50 {
            let grad = super::tangent_mean(&x, &data, &spec).unwrap();
            if spec.tangent_norm(&grad).unwrap() < 1e-12 {
                break;
            }
            let mut step = 1.0;
            loop {
                let cand = spec.exp_map(&spec.scale_tangent(&grad, step)).unwrap();
                let e = frechet_energy(&cand, &data, &spec).unwrap();
                if e <= energy || step < 1e-12 {
                    assert!(e <= energy + 1e-12, "energy increased");
                    x = cand;
                    energy = e;
                    break;
                }
                step *= 0.5;
            }
        }
    }

    fn conformal_fixture(values: Vec<f64>, nodes: Vec<Point>) -> ConformalStructure {
        let spec = spec_s2();
        let n = nodes.len();
        let g = build_graph(&nodes, 4.min(n - 1), 0.4, &spec).unwrap();
        let field = DensityField::from_parts(
            nodes,
            values,
            KernelConfig::bump(0.5, 2),
            vec![1.0; n],
            Some(SanitizationRecord {
                epsilon_phi: 1.0,
                sensitivity: 1.0,
                noise_scale: 1.0,
                rng_seed: 0,
            }),
        )
        .unwrap();
        solve_sigma(&g, &field, 1.0).unwrap()
    }

    #[test]
    fn conformal_mean_single_node() {
        let nodes = cluster(8, 0.2, 48);
        let cs = conformal_fixture(vec![0.0; 8], nodes);
        assert_eq!(frechet_mean_conformal(&[3], &cs).unwrap(), 3);
    }

    #[test]
    fn conformal_mean_constant_phi_matches_plain_graph_energy() {
        let nodes = cluster(12, 0.25, 49);
        let cs = conformal_fixture(vec![0.0; 12], nodes);
        let data: Vec<usize> = vec![0, 2, 5, 7, 9];
        let chosen = frechet_mean_conformal(&data, &cs).unwrap();
        // exhaustive oracle with base graph distances (phi = 1)
        let mut best = (usize::MAX, f64::INFINITY);
        for node in 0..12 {
            let mut e = 0.0;
            for &i in &data {
                let d = cs.graph_distance_nodes(node, i);
                e += d * d;
            }
            if e < best.1 {
                best = (node, e);
            }
        }
        assert_eq!(chosen, best.0);
    }

    #[test]
    fn conformal_mean_five_node_path_enumeration() {
        // path on the circle with heterogeneous phi
        let spec = ManifoldSpec::unit_sphere(2).unwrap();
        let step = 0.25;
        let nodes: Vec<Point> = (0..5)
            .map(|i| {
                let t = step * i as f64;
                sphere_point(&[t.cos(), t.sin()])
            })
            .collect();
        let g = build_graph(&nodes, 2, 0.4, &spec).unwrap();
        let field = DensityField::from_parts(
            nodes,
            vec![0.4, 0.1, -0.2, 0.3, 0.0],
            KernelConfig::bump(0.5, 1),
            vec![1.0; 5],
            Some(SanitizationRecord {
                epsilon_phi: 1.0,
                sensitivity: 1.0,
                noise_scale: 1.0,
                rng_seed: 0,
            }),
        )
        .unwrap();
        let cs = solve_sigma(&g, &field, 1.0).unwrap();
        let data = vec![0usize, 1, 4];
        let chosen = frechet_mean_conformal(&data, &cs).unwrap();
        // hand enumeration over all five candidates
        let mut best = (usize::MAX, f64::INFINITY);
        for node in 0..5 {
            let mut e = 0.0;
            for &i in &data {
                let d = cs.conformal_distance_nodes(node, i);
                e += d * d;
            }
            e /= 2.0 * data.len() as f64;
            if e < best.1 {
                best = (node, e);
            }
        }
        assert_eq!(chosen, best.0);
    }

    #[test]
    fn conformal_mean_agrees_with_original_under_flat_phi() {
        // phi == 1: the conformal node minimizer should coincide with the
        // node nearest to the continuous Fréchet mean in >= 95/100 trials
        // (graph discretization tolerance).
        let spec = spec_s2();
        let mut agree = 0;
        for trial in 0..100u64 {
            let nodes = cluster(25, 0.25, 7000 + trial);
            let g = build_graph(&nodes, 24, 0.6, &spec).unwrap();
            let field = DensityField::from_parts(
                nodes.clone(),
                vec![0.0; 25],
                KernelConfig::bump(0.5, 2),
                vec![1.0; 25],
                Some(SanitizationRecord {
                    epsilon_phi: 1.0,
                    sensitivity: 1.0,
                    noise_scale: 1.0,
                    rng_seed: 0,
                }),
            )
            .unwrap();
            let cs = solve_sigma(&g, &field, 1.0).unwrap();
            let data: Vec<usize> = (0..25).collect();
            let chosen = frechet_mean_conformal(&data, &cs).unwrap();
            let mean = frechet_mean(&nodes, &spec, 1e-9, 200).unwrap().mean;
            let nearest = (0..25)
                .min_by(|&a, &b| {
                    spec.geodesic_distance(&nodes[a], &mean)
                        .unwrap()
                        .total_cmp(&spec.geodesic_distance(&nodes[b], &mean).unwrap())
                })
                .unwrap();
            if chosen == nearest {
                agree += 1;
            }
        }
        assert!(agree >= 95, "agreement only {agree}/100");
    }

    #[test]
    fn utility_error_delegates_to_distance() {
        let spec = spec_s2();
        let mut rng = SplitMix64::new(50);
        for _ in 0..100 {
            let a = &cluster(1, 0.5, rng.next_u64())[0];
            let b = &cluster(1, 0.5, rng.next_u64())[0];
            assert_eq!(
                utility_error(a, b, &spec).unwrap(),
                spec.geodesic_distance(a, b).unwrap()
            );
        }
        let x = sphere_point(&[1.0, 0.0, 0.0]);
        let y = sphere_point(&[0.0, 1.0, 0.0]);
        assert_relative_eq!(
            utility_error(&x, &y, &spec).unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
        assert_eq!(utility_error(&x, &x, &spec).unwrap(), 0.0);
    }
}
