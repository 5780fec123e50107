//! Experiment configuration: JSON with keys matching the struct fields in
//! snake_case; unknown keys are rejected.

use conformal_dp::error::{Error, Result};
use conformal_dp::manifold::ManifoldSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKindConfig {
    Sphere,
    Spd,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub kind: ManifoldKindConfig,
    /// Sphere ambient dimension d, or SPD matrix size k.
    pub dim_param: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    1.0
}

impl ManifoldConfig {
    pub fn to_spec(&self) -> Result<ManifoldSpec> {
        match self.kind {
            ManifoldKindConfig::Sphere => ManifoldSpec::sphere(self.dim_param, self.radius),
            ManifoldKindConfig::Spd => ManifoldSpec::spd(self.dim_param),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    ConformalLaplace,
    RiemannianLaplace,
    TangentGaussian,
}

impl MechanismKind {
    pub fn name(&self) -> &'static str {
        match self {
            MechanismKind::ConformalLaplace => "conformal_laplace",
            MechanismKind::RiemannianLaplace => "riemannian_laplace",
            MechanismKind::TangentGaussian => "tangent_gaussian",
        }
    }
}

fn default_mechanisms() -> Vec<MechanismKind> {
    vec![
        MechanismKind::ConformalLaplace,
        MechanismKind::RiemannianLaplace,
        MechanismKind::TangentGaussian,
    ]
}

/// Stage-1/stage-2 solver knobs; `None` means the built-in default.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default)]
    pub kde_bandwidth: Option<f64>,
    #[serde(default)]
    pub knn_k: Option<usize>,
    #[serde(default)]
    pub edge_bandwidth: Option<f64>,
    #[serde(default)]
    pub upsilon: Option<f64>,
    #[serde(default)]
    pub heat_t: Option<f64>,
    #[serde(default)]
    pub heat_steps: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcOverrides {
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub thin: Option<usize>,
    #[serde(default)]
    pub proposal_scale: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifold: ManifoldConfig,
    pub n_samples: usize,
    /// vMF spread for synthetic sphere data (κ = 1/std²). Ignored for SPD.
    #[serde(default)]
    pub vmf_std: Option<f64>,
    pub epsilon_total: f64,
    /// Fraction of the total budget spent on ε_φ.
    #[serde(default = "default_budget_split")]
    pub budget_split: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_mechanisms")]
    pub mechanisms: Vec<MechanismKind>,
    pub repetitions: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub mcmc: McmcOverrides,
}

fn default_budget_split() -> f64 {
    1.0 / 3.0
}

fn default_delta() -> f64 {
    1e-9
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_total > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon_total must be positive, got {}",
                self.epsilon_total
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be >= 1".into()));
        }
        if !(self.budget_split > 0.0 && self.budget_split < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "budget_split must be in (0,1), got {}",
                self.budget_split
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
        }
        if self.mechanisms.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one mechanism must be requested".into(),
            ));
        }
        if matches!(self.manifold.kind, ManifoldKindConfig::Sphere) {
            match self.vmf_std {
                Some(s) if s > 0.0 => {}
                _ => {
                    return Err(Error::InvalidArgument(
                        "sphere experiments need a positive vmf_std".into(),
                    ))
                }
            }
        }
        self.manifold.to_spec()?;
        Ok(())
    }

    /// Budget split with the exact-composition guarantee:
    /// epsilon_phi() + epsilon_conf() == epsilon_total bitwise.
    ///
    /// The larger share is computed by multiplication; the smaller is the
    /// complement. Since the larger share is >= epsilon_total/2, the
    /// subtraction is exact by the Sterbenz lemma, so adding the pair back
    /// reproduces epsilon_total without rounding.
    fn budget_pair(&self) -> (f64, f64) {
        let (phi, conf) = if self.budget_split <= 0.5 {
            let conf = (1.0 - self.budget_split) * self.epsilon_total;
            (self.epsilon_total - conf, conf)
        } else {
            let phi = self.budget_split * self.epsilon_total;
            (phi, self.epsilon_total - phi)
        };
        debug_assert_eq!(phi + conf, self.epsilon_total);
        (phi, conf)
    }

    pub fn epsilon_phi(&self) -> f64 {
        self.budget_pair().0
    }

    pub fn epsilon_conf(&self) -> f64 {
        self.budget_pair().1
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical JSON of the parsed config (struct field order).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// FNV-1a 64 over the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical_json().as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        format!("{h:016x}")
    }
}
