//! von Mises–Fisher sampling via Wood's acceptance–rejection algorithm.
//!
//! The marginal along the mean direction is drawn with the classic
//! envelope: b = (-2κ + √(4κ² + (d-1)²))/(d-1), x₀ = (1-b)/(1+b),
//! c = κx₀ + (d-1)ln(1-x₀²); a Beta((d-1)/2, (d-1)/2) proposal Z gives
//! W = (1-(1+b)Z)/(1-(1-b)Z), accepted when
//! κW + (d-1)ln(1-x₀W) - c >= ln U. The tangential part is a uniform unit
//! direction, and a Householder reflection carries the e_d frame onto μ.
//! κ = 0 degenerates to the exact uniform sphere law.

use conformal_dp::error::{Error, Result};
use conformal_dp::manifold::Point;
use conformal_dp::rng::SplitMix64;
use nalgebra::DVector;

const REJECTION_CAP: usize = 1_000_000;

/// Mean direction and concentration of a vMF law.
#[derive(Clone, Debug)]
pub struct VMFParams {
    pub mu: DVector<f64>,
    pub kappa: f64,
}

impl VMFParams {
    pub fn new(mu: Vec<f64>, kappa: f64) -> Result<Self> {
        let mu = DVector::from_vec(mu);
        if (mu.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mean direction must be unit length, got norm {}",
                mu.norm()
            )));
        }
        if !(kappa >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "concentration must be nonnegative, got {kappa}"
            )));
        }
        Ok(Self { mu, kappa })
    }

    /// The experiment convention κ = 1/std².
    pub fn from_std(mu: Vec<f64>, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "std must be positive, got {std}"
            )));
        }
        Self::new(mu, 1.0 / (std * std))
    }
}

/// Draw the cosine W of the angle to μ.
fn sample_w(kappa: f64, d: usize, rng: &mut SplitMix64) -> Result<f64> {
    let dm1 = (d - 1) as f64;
    let b = (-2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt()) / dm1;
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let a = dm1 / 2.0;
    for _ in 0..REJECTION_CAP {
        let z = rng.next_beta(a, a);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u = rng.next_f64_open();
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            return Ok(w);
        }
    }
    Err(Error::RejectionCap(REJECTION_CAP))
}

/// n i.i.d. vMF(μ, κ) draws on S^{d-1}(radius).
pub fn sample_vmf(
    params: &VMFParams,
    n: usize,
    d: usize,
    seed: u64,
    radius: f64,
) -> Result<Vec<Point>> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "ambient dimension must be >= 2, got {d}"
        )));
    }
    if params.mu.len() != d {
        return Err(Error::InvalidArgument(format!(
            "mean direction has dimension {}, expected {d}",
            params.mu.len()
        )));
    }
    let mut rng = SplitMix64::new(seed);

    // Householder u = e_d - μ maps e_d onto μ (identity when μ = e_d).
    let mut u = -params.mu.clone();
    u[d - 1] += 1.0;
    let u_norm2 = u.dot(&u);

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w = sample_w(params.kappa, d, &mut rng)?;
        // uniform unit tangent direction in R^{d-1}
        let mut v = DVector::zeros(d - 1);
        loop {
            for i in 0..d - 1 {
                v[i] = rng.next_normal();
            }
            let norm = v.norm();
            if norm > 1e-12 {
                v /= norm;
                break;
            }
        }
        let mut z = DVector::zeros(d);
        let tangential = (1.0 - w * w).max(0.0).sqrt();
        for i in 0..d - 1 {
            z[i] = tangential * v[i];
        }
        z[d - 1] = w;
        if u_norm2 > 1e-24 {
            let proj = 2.0 * z.dot(&u) / u_norm2;
            z -= &u * proj;
        }
        out.push(Point::Sphere(z * radius));
    }
    Ok(out)
}
