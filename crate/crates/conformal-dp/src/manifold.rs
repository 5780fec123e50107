//! Riemannian primitives for the two supported manifolds.
//!
//! Points on the radius-R hypersphere are stored as ambient vectors of norm
//! R (no chart singularities, every map closed-form). Points on the SPD
//! manifold carry the affine-invariant metric; matrix functions go through
//! a symmetric eigendecomposition with eigenvalues clamped at `EIG_FLOOR`
//! to tolerate numerically semidefinite inputs from descriptor extraction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Eigenvalue floor for SPD matrix functions.
const EIG_FLOOR: f64 = 1e-12;

/// Which manifold a spec describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifoldKind {
    /// Hypersphere S^{d-1}(R) embedded in R^d.
    Sphere,
    /// Symmetric positive-definite k×k matrices, affine-invariant metric.
    Spd,
}

/// Manifold identity plus the geometric constants used by sensitivity
/// formulas: curvature upper bound and injectivity radius.
#[derive(Clone, Copy, Debug)]
pub struct ManifoldSpec {
    kind: ManifoldKind,
    dim_param: usize,
    radius: f64,
}

impl ManifoldSpec {
    /// Sphere S^{ambient_dim-1}(radius).
    pub fn sphere(ambient_dim: usize, radius: f64) -> Result<Self> {
        if ambient_dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "sphere ambient dimension must be >= 2, got {ambient_dim}"
            )));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            kind: ManifoldKind::Sphere,
            dim_param: ambient_dim,
            radius,
        })
    }

    /// Unit sphere S^{ambient_dim-1}.
    pub fn unit_sphere(ambient_dim: usize) -> Result<Self> {
        Self::sphere(ambient_dim, 1.0)
    }

    /// SPD(k) with the affine-invariant metric.
    pub fn spd(matrix_size: usize) -> Result<Self> {
        if matrix_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "SPD matrix size must be >= 2, got {matrix_size}"
            )));
        }
        Ok(Self {
            kind: ManifoldKind::Spd,
            dim_param: matrix_size,
            radius: 1.0,
        })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    /// Sphere: ambient dimension d. SPD: matrix size k.
    pub fn dim_param(&self) -> usize {
        self.dim_param
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Intrinsic dimension: d-1 for the sphere, k(k+1)/2 for SPD.
    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere => self.dim_param - 1,
            ManifoldKind::Spd => self.dim_param * (self.dim_param + 1) / 2,
        }
    }

    /// Upper bound on sectional curvature: 1/R² (sphere), 0 (SPD).
    pub fn curvature_upper_bound(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => 1.0 / (self.radius * self.radius),
            ManifoldKind::Spd => 0.0,
        }
    }

    /// Injectivity radius: πR (sphere), +∞ (SPD).
    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => std::f64::consts::PI * self.radius,
            ManifoldKind::Spd => f64::INFINITY,
        }
    }

    /// Admissible dataset-ball radius r* = ½·min{inj(M), (π/2)κ^{-1/2}}
    /// for κ > 0, and ½·inj(M) otherwise.
    pub fn r_star(&self) -> f64 {
        let kappa = self.curvature_upper_bound();
        if kappa > 0.0 {
            0.5 * self
                .injectivity_radius()
                .min(std::f64::consts::FRAC_PI_2 / kappa.sqrt())
        } else {
            0.5 * self.injectivity_radius()
        }
    }

    /// Riemannian volume of the manifold. For SPD (infinite volume) this is
    /// the unit surrogate used by the uniform quadrature weights.
    pub fn volume(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => {
                let m = self.intrinsic_dim();
                unit_sphere_surface(m + 1) * self.radius.powi(m as i32)
            }
            ManifoldKind::Spd => 1.0,
        }
    }
}

/// Surface area of the unit sphere S^{n-1} in R^n, i.e. 2π^{n/2}/Γ(n/2).
///
/// Γ at integer and half-integer arguments is evaluated exactly by the
/// recurrence, so no gamma-function dependency is needed.
pub fn unit_sphere_surface(n: usize) -> f64 {
    debug_assert!(n >= 1);
    let half = 0.5 * n as f64;
    2.0 * std::f64::consts::PI.powf(half) / gamma_half_integer(n)
}

/// Γ(n/2) for positive integer n.
fn gamma_half_integer(n: usize) -> f64 {
    let mut x = 0.5 * n as f64;
    let mut acc = 1.0;
    while x > 1.0 {
        x -= 1.0;
        acc *= x;
    }
    if (x - 0.5).abs() < 1e-12 {
        acc * std::f64::consts::PI.sqrt()
    } else {
        acc // Γ(1) = 1
    }
}

/// A point on one of the supported manifolds.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    /// Ambient vector with ‖·‖₂ = R.
    Sphere(DVector<f64>),
    /// Symmetric positive-definite matrix.
    Spd(DMatrix<f64>),
}

impl Point {
    fn kind_name(&self) -> &'static str {
        match self {
            Point::Sphere(_) => "sphere",
            Point::Spd(_) => "spd",
        }
    }

    pub fn as_sphere(&self) -> Result<&DVector<f64>> {
        match self {
            Point::Sphere(v) => Ok(v),
            other => Err(Error::ManifoldMismatch {
                expected: "sphere",
                got: other.kind_name(),
            }),
        }
    }

    pub fn as_spd(&self) -> Result<&DMatrix<f64>> {
        match self {
            Point::Spd(m) => Ok(m),
            other => Err(Error::ManifoldMismatch {
                expected: "spd",
                got: other.kind_name(),
            }),
        }
    }
}

/// Raw tangent coordinates (ambient vector or symmetric matrix).
#[derive(Clone, Debug, PartialEq)]
pub enum Tangent {
    Sphere(DVector<f64>),
    Spd(DMatrix<f64>),
}

/// A tangent vector anchored at its base point.
#[derive(Clone, Debug)]
pub struct TangentVector {
    pub base: Point,
    pub direction: Tangent,
}

impl TangentVector {
    pub fn zero(spec: &ManifoldSpec, base: &Point) -> Result<Self> {
        spec.validate_point(base)?;
        let direction = match base {
            Point::Sphere(v) => Tangent::Sphere(DVector::zeros(v.len())),
            Point::Spd(m) => Tangent::Spd(DMatrix::zeros(m.nrows(), m.ncols())),
        };
        Ok(Self {
            base: base.clone(),
            direction,
        })
    }
}

/// Geodesic ball; the container assumption of the sensitivity analysis.
#[derive(Clone, Debug)]
pub struct GeodesicBall {
    pub center: Point,
    pub radius: f64,
}

impl ManifoldSpec {
    /// Check the point invariants for this manifold (norm, symmetry,
    /// positive definiteness) at 1e-10 tolerance.
    pub fn validate_point(&self, p: &Point) -> Result<()> {
        match (self.kind, p) {
            (ManifoldKind::Sphere, Point::Sphere(v)) => {
                if v.len() != self.dim_param {
                    return Err(Error::Domain {
                        what: "point",
                        detail: format!(
                            "expected ambient dimension {}, got {}",
                            self.dim_param,
                            v.len()
                        ),
                    });
                }
                let norm = v.norm();
                if !norm.is_finite() || (norm - self.radius).abs() > 1e-10 * self.radius.max(1.0) {
                    return Err(Error::Domain {
                        what: "point",
                        detail: format!("sphere norm {} differs from radius {}", norm, self.radius),
                    });
                }
                Ok(())
            }
            (ManifoldKind::Spd, Point::Spd(m)) => {
                if m.nrows() != self.dim_param || m.ncols() != self.dim_param {
                    return Err(Error::Domain {
                        what: "point",
                        detail: format!(
                            "expected {0}x{0} matrix, got {1}x{2}",
                            self.dim_param,
                            m.nrows(),
                            m.ncols()
                        ),
                    });
                }
                let scale = m.norm().max(1.0);
                let asym = (m - m.transpose()).norm();
                if asym > 1e-10 * scale {
                    return Err(Error::Domain {
                        what: "point",
                        detail: format!("matrix asymmetry {asym} exceeds tolerance"),
                    });
                }
                let eigs = symmetric_eigenvalues(m);
                let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
                if !(min_eig > 0.0) {
                    return Err(Error::Domain {
                        what: "point",
                        detail: format!("smallest eigenvalue {min_eig} is not positive"),
                    });
                }
                Ok(())
            }
            (_, p) => Err(Error::ManifoldMismatch {
                expected: match self.kind {
                    ManifoldKind::Sphere => "sphere",
                    ManifoldKind::Spd => "spd",
                },
                got: p.kind_name(),
            }),
        }
    }

    /// Geodesic distance ρ_g(x, y).
    pub fn geodesic_distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.validate_point(x)?;
        self.validate_point(y)?;
        Ok(self.distance_unchecked(x, y))
    }

    /// Distance without the invariant checks. Internal hot loops validate
    /// their points once at the boundary and then use this.
    pub(crate) fn distance_unchecked(&self, x: &Point, y: &Point) -> f64 {
        match (x, y) {
            (Point::Sphere(a), Point::Sphere(b)) => {
                let u = (a.dot(b) / (self.radius * self.radius)).clamp(-1.0, 1.0);
                // acos loses ~sqrt(eps) accuracy near |u| = 1; switch to the
                // chord-based asin form there.
                let theta = if u > 0.95 {
                    let chord = (a - b).norm() / (2.0 * self.radius);
                    2.0 * chord.clamp(0.0, 1.0).asin()
                } else if u < -0.95 {
                    let chord = (a + b).norm() / (2.0 * self.radius);
                    std::f64::consts::PI - 2.0 * chord.clamp(0.0, 1.0).asin()
                } else {
                    u.acos()
                };
                self.radius * theta
            }
            (Point::Spd(a), Point::Spd(b)) => {
                let inv_sqrt = spd_function(a, |l| 1.0 / l.sqrt());
                let mid = symmetrize(&(&inv_sqrt * b * &inv_sqrt));
                let eigs = symmetric_eigenvalues(&mid);
                let mut sum = 0.0;
                for l in eigs.iter() {
                    let ll = l.max(EIG_FLOOR).ln();
                    sum += ll * ll;
                }
                sum.sqrt()
            }
            _ => unreachable!("callers guarantee matching variants"),
        }
    }

    /// Exponential map exp_base(v).
    pub fn exp_map(&self, v: &TangentVector) -> Result<Point> {
        self.validate_point(&v.base)?;
        match (&v.base, &v.direction) {
            (Point::Sphere(base), Tangent::Sphere(dir)) => {
                let norm = dir.norm();
                if norm == 0.0 {
                    return Ok(v.base.clone());
                }
                let theta = norm / self.radius;
                let unit = dir / norm;
                let out = base * theta.cos() + unit * (self.radius * theta.sin());
                // Renormalize to kill accumulated rounding.
                let out = &out * (self.radius / out.norm());
                Ok(Point::Sphere(out))
            }
            (Point::Spd(base), Tangent::Spd(dir)) => {
                let sqrt = spd_function(base, f64::sqrt);
                let inv_sqrt = spd_function(base, |l| 1.0 / l.sqrt());
                let inner = symmetrize(&(&inv_sqrt * dir * &inv_sqrt));
                let exp_inner = spd_symmetric_map(&inner, f64::exp);
                Ok(Point::Spd(symmetrize(&(&sqrt * exp_inner * &sqrt))))
            }
            _ => Err(Error::ManifoldMismatch {
                expected: "matching base and direction",
                got: "mixed",
            }),
        }
    }

    /// Logarithm map log_x(y); errors at the sphere cut locus.
    pub fn log_map(&self, x: &Point, y: &Point) -> Result<TangentVector> {
        self.validate_point(x)?;
        self.validate_point(y)?;
        match (x, y) {
            (Point::Sphere(a), Point::Sphere(b)) => {
                let u = (a.dot(b) / (self.radius * self.radius)).clamp(-1.0, 1.0);
                if u < -1.0 + 1e-9 {
                    return Err(Error::CutLocus);
                }
                let theta = u.acos();
                let proj = b - a * u; // component of y in T_x, scaled by R sinθ
                let proj_norm = proj.norm();
                let dir = if proj_norm < 1e-300 || theta < 1e-15 {
                    // y == x to machine precision
                    DVector::zeros(a.len())
                } else {
                    &proj * (self.radius * theta / proj_norm)
                };
                Ok(TangentVector {
                    base: x.clone(),
                    direction: Tangent::Sphere(dir),
                })
            }
            (Point::Spd(a), Point::Spd(b)) => {
                let sqrt = spd_function(a, f64::sqrt);
                let inv_sqrt = spd_function(a, |l| 1.0 / l.sqrt());
                let mid = symmetrize(&(&inv_sqrt * b * &inv_sqrt));
                let log_mid = spd_function(&mid, |l| l.ln());
                Ok(TangentVector {
                    base: x.clone(),
                    direction: Tangent::Spd(symmetrize(&(&sqrt * log_mid * &sqrt))),
                })
            }
            _ => unreachable!("validate_point enforces matching variants"),
        }
    }

    /// Riemannian inner product of two tangent vectors at the same base.
    pub fn tangent_inner(&self, a: &TangentVector, b: &TangentVector) -> Result<f64> {
        match (&a.base, &a.direction, &b.direction) {
            (Point::Sphere(_), Tangent::Sphere(u), Tangent::Sphere(v)) => Ok(u.dot(v)),
            (Point::Spd(base), Tangent::Spd(u), Tangent::Spd(v)) => {
                let inv = spd_function(base, |l| 1.0 / l);
                Ok((&inv * u * &inv * v).trace())
            }
            _ => Err(Error::ManifoldMismatch {
                expected: "matching tangents",
                got: "mixed",
            }),
        }
    }

    /// Riemannian norm ‖v‖_g.
    pub fn tangent_norm(&self, v: &TangentVector) -> Result<f64> {
        Ok(self.tangent_inner(v, v)?.max(0.0).sqrt())
    }

    /// Scale a tangent vector in place.
    pub fn scale_tangent(&self, v: &TangentVector, factor: f64) -> TangentVector {
        let direction = match &v.direction {
            Tangent::Sphere(d) => Tangent::Sphere(d * factor),
            Tangent::Spd(d) => Tangent::Spd(d * factor),
        };
        TangentVector {
            base: v.base.clone(),
            direction,
        }
    }

    /// Isotropic Gaussian tangent vector at `base`: each coordinate of an
    /// orthonormal tangent basis is N(0, scale²).
    pub fn random_tangent_gaussian(
        &self,
        base: &Point,
        scale: f64,
        rng: &mut SplitMix64,
    ) -> Result<TangentVector> {
        self.validate_point(base)?;
        match base {
            Point::Sphere(v) => {
                let d = v.len();
                let mut g = DVector::zeros(d);
                for i in 0..d {
                    g[i] = scale * rng.next_normal();
                }
                // Ambient isotropic Gaussian projected to T_x is isotropic in
                // any orthonormal tangent basis.
                let coef = v.dot(&g) / (self.radius * self.radius);
                let dir = &g - v * coef;
                Ok(TangentVector {
                    base: base.clone(),
                    direction: Tangent::Sphere(dir),
                })
            }
            Point::Spd(m) => {
                let k = m.nrows();
                let mut s = DMatrix::zeros(k, k);
                for i in 0..k {
                    s[(i, i)] = scale * rng.next_normal();
                    for j in (i + 1)..k {
                        let off = scale * rng.next_normal() / std::f64::consts::SQRT_2;
                        s[(i, j)] = off;
                        s[(j, i)] = off;
                    }
                }
                // x^{1/2} S x^{1/2} is isotropic for the affine metric at x.
                let sqrt = spd_function(m, f64::sqrt);
                Ok(TangentVector {
                    base: base.clone(),
                    direction: Tangent::Spd(symmetrize(&(&sqrt * s * &sqrt))),
                })
            }
        }
    }

    /// Smallest geodesic ball around the non-private Fréchet mean that
    /// contains the dataset. Errors with `BallTooLarge` when the radius
    /// reaches the admissible bound r* on positively curved manifolds.
    pub fn ball_radius_of(&self, dataset: &[Point]) -> Result<GeodesicBall> {
        if dataset.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let mean = crate::estimators::frechet_mean(dataset, self, 1e-9, 200)?;
        let center = mean.mean;
        let mut radius: f64 = 0.0;
        for p in dataset {
            radius = radius.max(self.geodesic_distance(&center, p)?);
        }
        if self.curvature_upper_bound() > 0.0 && radius >= self.r_star() {
            return Err(Error::BallTooLarge {
                radius,
                r_star: self.r_star(),
            });
        }
        Ok(GeodesicBall { center, radius })
    }
}

/// Symmetrize a nearly-symmetric matrix.
pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix.
pub(crate) fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    symmetrize(m).symmetric_eigenvalues()
}

/// Apply a scalar function to the clamped eigenvalues of an SPD matrix.
pub(crate) fn spd_function(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut diag = DMatrix::zeros(n, n);
    for i in 0..n {
        diag[(i, i)] = f(eig.eigenvalues[i].max(EIG_FLOOR));
    }
    &eig.eigenvectors * diag * eig.eigenvectors.transpose()
}

/// Apply a scalar function to the raw eigenvalues of a symmetric matrix
/// (no positivity clamp; used for tangent-space matrices).
pub(crate) fn spd_symmetric_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut diag = DMatrix::zeros(n, n);
    for i in 0..n {
        diag[(i, i)] = f(eig.eigenvalues[i]);
    }
    &eig.eigenvectors * diag * eig.eigenvectors.transpose()
}

/// Convenience constructors used throughout the tests and the harness.
pub fn sphere_point(coords: &[f64]) -> Point {
    Point::Sphere(DVector::from_row_slice(coords))
}

pub fn spd_point(k: usize, entries: &[f64]) -> Point {
    Point::Spd(DMatrix::from_row_slice(k, k, entries))
}
