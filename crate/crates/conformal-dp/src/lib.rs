//! Density-aware differential privacy on Riemannian manifolds.
//!
//! The library implements a two-stage privatization pipeline for
//! manifold-valued statistics (Fréchet means on hyperspheres and on the
//! affine-invariant SPD manifold):
//!
//! 1. **Density stage** — an intrinsic kernel density estimate of the data
//!    is sanitized with a weighted-L¹ product-Laplace mechanism
//!    ([`density`]), then turned into a conformal factor `φ = e^{2σ}` by
//!    solving the discrete Helmholtz–Poisson system `(L + υI)σ = c̃ − f̃`
//!    on a k-NN graph Laplacian ([`solver`]).
//! 2. **Release stage** — a Laplace-type kernel in the conformal metric
//!    `g* = φ·g` is sampled by Metropolis–Hastings to produce the
//!    privatized point ([`mechanisms`]), with a budget ledger tracking the
//!    sequential composition `ε_total = ε_φ + ε_conf`.
//!
//! [`manifold`] provides the exact geometric primitives and [`estimators`]
//! the Fréchet-mean machinery used both for the released statistic and for
//! utility measurement. All randomness flows through the portable
//! counter-based generator in [`rng`], so runs are reproducible bit-for-bit
//! from a seed.
//!
//! # Example
//!
//! Privatize the Fréchet mean of a small cluster on S²:
//!
//! ```
//! use conformal_dp::density::{kde_evaluate, sanitize, KernelConfig};
//! use conformal_dp::estimators::frechet_mean;
//! use conformal_dp::manifold::{ManifoldSpec, Point};
//! use conformal_dp::mechanisms::{
//!     calibrate, global_sensitivity_flat, sample_conformal_laplace, MCMCConfig,
//! };
//! use conformal_dp::rng::SplitMix64;
//! use conformal_dp::solver::{build_graph, default_edge_bandwidth, default_knn_k, solve_sigma};
//! use nalgebra::DVector;
//!
//! let spec = ManifoldSpec::unit_sphere(3)?;
//! let mut rng = SplitMix64::new(7);
//! let data: Vec<Point> = (0..40)
//!     .map(|_| {
//!         let v = DVector::from_vec(vec![
//!             0.2 * rng.next_normal(),
//!             0.2 * rng.next_normal(),
//!             1.0,
//!         ]);
//!         let n = v.norm();
//!         Point::Sphere(v / n)
//!     })
//!     .collect();
//!
//! // stage 1: sanitized density and the conformal factor
//! let kernel = KernelConfig::bump(0.5, spec.intrinsic_dim());
//! let field = kde_evaluate(&data, kernel, &data, &spec)?;
//! let field = sanitize(&field, 0.1, data.len(), 42)?;
//! let k = default_knn_k(data.len());
//! let graph = build_graph(&data, k, default_edge_bandwidth(&data, k, &spec)?, &spec)?;
//! let structure = solve_sigma(&graph, &field, 1.0)?;
//!
//! // stage 2: calibrate and draw the privatized mean
//! let eta = frechet_mean(&data, &spec, 1e-9, 200)?.mean;
//! let radius = data
//!     .iter()
//!     .map(|p| spec.geodesic_distance(&eta, p).unwrap())
//!     .fold(0.0f64, f64::max);
//! let ledger = calibrate(0.1, 0.2, global_sensitivity_flat(radius, data.len()), &structure)?;
//! let mcmc = MCMCConfig::with_defaults(ledger.delta_star, 43);
//! let (private_mean, diagnostics) =
//!     sample_conformal_laplace(&structure, &eta, &ledger, &mcmc, &spec)?;
//!
//! assert!(spec.validate_point(&private_mean).is_ok());
//! assert!(diagnostics.acceptance_rate <= 1.0);
//! assert_eq!(ledger.total(), 0.1 + 0.2);
//! # Ok::<(), conformal_dp::Error>(())
//! ```

pub mod density;
pub mod error;
pub mod estimators;
pub mod manifold;
pub mod mechanisms;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use manifold::{GeodesicBall, ManifoldKind, ManifoldSpec, Point, Tangent, TangentVector};
