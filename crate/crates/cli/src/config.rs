//! Experiment configuration: a TOML file with an `[experiment]` section and
//! one section per module. Every key can be overridden by a command-line
//! flag of the same name.

use std::path::Path;

use delayembed::dynamics::Diffeo;
use delayembed::geometry::Manifold;
use delayembed::observables::{BaseObservable, MAX_DEGREE};
use delayembed::sampling::MeasureKind;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Upper limit on any sample-size key.
pub const MAX_SAMPLES: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// `cat` or `rotation:<ω>`.
    pub system: String,
    /// Defaults to the manifold of `system`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold: Option<String>,
    pub k: usize,
    /// `cos1` or `zero`.
    pub base: String,
    /// Radius of the ball the perturbation coefficients are drawn from.
    pub radius: f64,
    pub seed: u64,
    /// `lebesgue`, `orbit:<n>` or `cantor:<level>`.
    pub measure: String,
    pub points: usize,
    /// `delay` (perturbed delay map) or `coordinate` (first `k` ambient coordinates).
    pub map: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            system: "cat".into(),
            manifold: None,
            k: 3,
            base: "cos1".into(),
            radius: 1.0,
            seed: 0,
            measure: "lebesgue".into(),
            points: 1000,
            map: "delay".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilipSection {
    pub probes: usize,
    pub exclusion_radius: f64,
}

impl Default for BilipSection {
    fn default() -> Self {
        Self { probes: 100, exclusion_radius: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntersectSection {
    pub eps_sep: f64,
    pub deltas: Vec<f64>,
    pub pairs: usize,
}

impl Default for IntersectSection {
    fn default() -> Self {
        Self { eps_sep: 0.2, deltas: vec![1e-4, 1e-3, 1e-2, 1e-1], pairs: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImmersionSection {
    pub draws: usize,
    pub base_points: usize,
    pub rank_pairs: usize,
    pub targets: usize,
}

impl Default for ImmersionSection {
    fn default() -> Self {
        Self { draws: 100, base_points: 100, rank_pairs: 10_000, targets: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvboundSection {
    pub m: usize,
    pub instances: usize,
    pub draws: usize,
    pub strip_draws: usize,
    pub strip_eps: f64,
}

impl Default for SvboundSection {
    fn default() -> Self {
        Self { m: 126, instances: 100, draws: 20_000, strip_draws: 100_000, strip_eps: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub n: usize,
    pub probes: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    pub cells: usize,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self { n: 100_000, probes: 64, eps_min: 10f64.powf(-2.5), eps_max: 0.1, cells: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSection {
    pub n: usize,
    pub eps: Vec<f64>,
    pub m_grid: Vec<f64>,
    pub orbit: usize,
}

impl Default for LyapunovSection {
    fn default() -> Self {
        Self { n: 1000, eps: vec![0.01, 0.02, 0.05, 0.1], m_grid: vec![1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0], orbit: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectSection {
    pub samples: usize,
    pub base_points: usize,
    pub haar_samples: usize,
}

impl Default for ProjectSection {
    fn default() -> Self {
        Self { samples: 100, base_points: 100, haar_samples: 10_000 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub bilip: BilipSection,
    pub intersect: IntersectSection,
    pub immersion: ImmersionSection,
    pub svbound: SvboundSection,
    pub predict: PredictSection,
    pub lyapunov: LyapunovSection,
    pub project: ProjectSection,
}

fn check_size(key: &str, v: usize, min: usize) -> Result<()> {
    if v < min || v > MAX_SAMPLES {
        return Err(HarnessError::config(key, format!("must lie in [{min}, {MAX_SAMPLES}], got {v}")));
    }
    Ok(())
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(HarnessError::config(key, format!("must be positive and finite, got {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn diffeo(&self) -> Result<Diffeo> {
        Diffeo::from_id(&self.experiment.system).map_err(|e| HarnessError::config("system", e.to_string()))
    }

    pub fn manifold(&self) -> Result<Manifold> {
        let from_system = *self.diffeo()?.manifold();
        match &self.experiment.manifold {
            None => Ok(from_system),
            Some(id) => {
                let m = Manifold::from_id(id).map_err(|e| HarnessError::config("manifold", e.to_string()))?;
                if m != from_system {
                    return Err(HarnessError::config("manifold", format!("`{id}` does not match system `{}`", self.experiment.system)));
                }
                Ok(m)
            }
        }
    }

    pub fn base(&self) -> Result<BaseObservable> {
        BaseObservable::from_id(&self.experiment.base).map_err(|e| HarnessError::config("base", e.to_string()))
    }

    pub fn measure(&self) -> Result<MeasureKind> {
        MeasureKind::from_id(&self.experiment.measure).map_err(|e| HarnessError::config("measure", e.to_string()))
    }

    /// Check ids, `k` and sample sizes; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.k == 0 {
            return Err(HarnessError::config("k", "delay length must be at least 1"));
        }
        if 2 * e.k - 1 > MAX_DEGREE {
            return Err(HarnessError::config("k", format!("k = {} needs monomial degree {} > {MAX_DEGREE}", e.k, 2 * e.k - 1)));
        }
        let m = self.manifold()?;
        self.base()?;
        self.measure()?;
        if e.map != "delay" && e.map != "coordinate" {
            return Err(HarnessError::config("map", format!("unknown map `{}`", e.map)));
        }
        if e.map == "coordinate" && e.k > m.ambient_dim() {
            return Err(HarnessError::config("k", "coordinate map needs k <= ambient dimension"));
        }
        if !(e.radius >= 0.0 && e.radius.is_finite()) {
            return Err(HarnessError::config("radius", "must be nonnegative and finite"));
        }
        check_size("points", e.points, 1)?;
        check_size("probes", self.bilip.probes, 1)?;
        if !(self.bilip.exclusion_radius >= 0.0) {
            return Err(HarnessError::config("exclusion_radius", "must be nonnegative"));
        }
        check_positive("eps_sep", self.intersect.eps_sep)?;
        for &d in &self.intersect.deltas {
            check_positive("deltas", d)?;
        }
        check_size("pairs", self.intersect.pairs, 1)?;
        check_size("draws", self.immersion.draws, 1)?;
        check_size("base_points", self.immersion.base_points, 1)?;
        check_size("rank_pairs", self.immersion.rank_pairs, 1)?;
        check_size("targets", self.immersion.targets, 1)?;
        check_size("m", self.svbound.m, 3)?;
        check_size("instances", self.svbound.instances, 1)?;
        check_size("draws", self.svbound.draws, 1)?;
        check_size("strip_draws", self.svbound.strip_draws, 1)?;
        if !(self.svbound.strip_eps > 0.0 && self.svbound.strip_eps < 1.0) {
            return Err(HarnessError::config("strip_eps", "must lie in (0, 1)"));
        }
        check_size("n", self.predict.n, 2)?;
        check_size("probes", self.predict.probes, 1)?;
        check_positive("eps_min", self.predict.eps_min)?;
        check_positive("eps_max", self.predict.eps_max)?;
        if self.predict.eps_min >= self.predict.eps_max {
            return Err(HarnessError::config("eps_min", "must be below eps_max"));
        }
        check_size("cells", self.predict.cells, 2)?;
        check_size("n", self.lyapunov.n, 10)?;
        check_size("orbit", self.lyapunov.orbit, 1)?;
        for &v in &self.lyapunov.eps {
            check_positive("eps", v)?;
        }
        for &v in &self.lyapunov.m_grid {
            check_positive("m_grid", v)?;
        }
        check_size("samples", self.project.samples, 1)?;
        check_size("base_points", self.project.base_points, 1)?;
        check_size("haar_samples", self.project.haar_samples, 2)?;
        Ok(())
    }
}
