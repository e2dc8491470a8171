//! The acceptance battery: one entry per criterion, each with an explicit
//! pass/fail verdict and the metrics behind it.
//!
//! The quick profile divides Monte Carlo sample sizes by 10 and relaxes the
//! statistical thresholds as listed in [`Profile::slope_min`] and
//! [`Profile::prediction_grid`]; deterministic checks run unchanged.

use std::time::Instant;

use delayembed::embedding::{DelayMap, Embedding, Projection};
use delayembed::dynamics::Diffeo;
use delayembed::geometry::{tangent_frame, Manifold};
use delayembed::lyapunov::{direct_exponents, observed_frequency, OseledetsData};
use delayembed::observables::{interpolate_gradients, MonomialBasis, Observable, BaseObservable};
use delayembed::prediction::{error_curve, error_curve_at, log_grid, PredictionDataset};
use delayembed::regularity::{
    immersion_scan, isotropic_constant, pair_rank_scan, self_intersection_rate, surjectivity_check, svalue_measure_bound,
    svalue_sweep, AlphaSource,
};
use delayembed::rng::{gaussian_vector, stream, uniform_ball};
use delayembed::sampling::{MeasureKind, MeasureSampler};
use delayembed::{Matrix, Vector};
use rand::Rng;
use serde::Serialize;
use serde_json::json;
use std::sync::Arc;

use crate::config::ExperimentConfig;
use crate::output::num;

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}
use crate::run::{delay_map, lebesgue_points, run, screened_base_point, strip_fraction, Subcommand};

/// Rotation number used by the circle experiments.
pub const GOLDEN_OMEGA: f64 = 0.6180339887;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Quick,
    Full,
}

impl Profile {
    /// Unknown names fall back to `quick` with a warning.
    pub fn parse(name: &str) -> Self {
        match name {
            "full" => Self::Full,
            "quick" => Self::Quick,
            other => {
                log::warn!("unknown acceptance profile `{other}`, using quick");
                Self::Quick
            }
        }
    }

    /// Monte Carlo sizes: `full` as given, `quick` divided by 10.
    pub fn size(self, full: usize) -> usize {
        match self {
            Self::Full => full,
            Self::Quick => (full / 10).max(1),
        }
    }

    /// Minimum prediction-error slope (quick: 0.8 instead of 0.9).
    pub fn slope_min(self) -> f64 {
        match self {
            Self::Full => 0.9,
            Self::Quick => 0.8,
        }
    }

    /// `(log10 ε_min, log10 ε_max)`. With 10× fewer points the resolution
    /// floor rises by about √10, so the quick grid moves up by half a decade.
    pub fn prediction_grid(self) -> (f64, f64) {
        match self {
            Self::Full => (-2.5, -1.0),
            Self::Quick => (-2.0, -0.5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: serde_json::Value,
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AcceptanceSummary {
    pub profile: Profile,
    pub criteria: Vec<CriterionResult>,
    pub passed: bool,
}

impl AcceptanceSummary {
    /// One line per criterion.
    pub fn lines(&self) -> Vec<String> {
        self.criteria
            .iter()
            .map(|c| {
                format!(
                    "[{}] {}. {} ({:.1}s): {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.id,
                    c.name,
                    c.elapsed_seconds,
                    c.detail
                )
            })
            .collect()
    }
}

type Outcome = (bool, String, serde_json::Value);

fn seed0() -> ExperimentConfig {
    ExperimentConfig::default()
}

fn lyapunov_recovery(_p: Profile) -> crate::Result<Outcome> {
    let cfg = seed0();
    let dm = delay_map(&cfg)?;
    let t = *dm.dynamics();
    let x = screened_base_point(&cfg)?;
    let n = 1000;
    let oracle = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    let direct = direct_exponents(&t, &x, n)?;
    let err = (direct[0].exponent + oracle).abs().max((direct[1].exponent - oracle).abs());
    let freq = observed_frequency(&dm, &x, &OseledetsData::analytic(&t), n, &[0.05])?;
    let last = freq.records.last().and_then(|r| r.observed_deviation).unwrap_or(f64::INFINITY);
    let passed = err < 1e-6 && last < 0.02 && freq.fractions[0] >= 0.95;
    let detail = format!(
        "direct error {} (< 1e-6), deviation at n={n} {} (< 0.02), frequency {} (>= 0.95)",
        sci(err),
        sci(last),
        num(freq.fractions[0])
    );
    Ok((passed, detail, json!({ "direct_error": err, "final_deviation": last, "frequency": freq.fractions[0] })))
}

fn prediction_decay(p: Profile) -> crate::Result<Outcome> {
    let n = p.size(100_000);
    let mut cfg = seed0();
    cfg.experiment.measure = format!("orbit:{n}");
    let dm = delay_map(&cfg)?;
    let pts = crate::run::sample_points(&cfg, n)?;
    let ds = PredictionDataset::from_delay(&dm, pts)?;
    let (lo, hi) = p.prediction_grid();
    let grid = log_grid(10f64.powf(lo), 10f64.powf(hi), 8);
    let curve = error_curve(&ds, 64, &grid, cfg.experiment.seed)?;
    let kept = curve.median_sigma.iter().filter(|s| s.is_some()).count();
    let slope = curve.slope.unwrap_or(f64::NEG_INFINITY);
    let passed = slope >= p.slope_min();
    let detail = format!(
        "slope {} (>= {}) over {kept} of 8 cells, floor {}, {} dropped cells",
        format!("{slope:.4}"),
        p.slope_min(),
        curve.resolution_floor.map_or("none".into(), sci),
        curve.dropped.len()
    );
    Ok((passed, detail, json!({ "slope": curve.slope, "median_sigma": curve.median_sigma, "eps": curve.eps, "floor": curve.resolution_floor })))
}

fn negative_control(p: Profile) -> crate::Result<Outcome> {
    let c = Manifold::circle();
    let t = Diffeo::rotation(GOLDEN_OMEGA);
    let pts = MeasureSampler::new(c, MeasureKind::Lebesgue, 0).sample(p.size(10_000))?;
    let phi = Projection::coordinate(2, 1);
    let ds = PredictionDataset::build(&t, pts, &phi)?;
    let rate = self_intersection_rate(&ds.cloud, 0.2, 1e-3, p.size(10_000), 0)?;
    // mirror probes: u and 1 − u share the first coordinate
    let probes: Vec<Vector> = (0..16).map(|i| phi.embed(&c.point(&[0.15 + 0.2 * i as f64 / 15.0]))).collect();
    let grid = log_grid(1e-3, 0.05, 5);
    let curve = error_curve_at(&ds, &probes, &grid)?;
    let diam = ds.image_diameter();
    let finest: Vec<Option<f64>> = curve.per_probe.iter().map(|row| row.iter().flatten().next().copied()).collect();
    let min_finest = finest.iter().map(|s| s.unwrap_or(0.0)).fold(f64::INFINITY, f64::min);
    let passed = rate.rate > 0.0 && min_finest > 0.1 * diam;
    let detail = format!(
        "intersection rate {} (> 0), min σ at finest retained ε {} (> {})",
        sci(rate.rate),
        sci(min_finest),
        sci(0.1 * diam)
    );
    Ok((passed, detail, json!({ "rate": rate.rate, "violations": rate.violations, "min_sigma": min_finest, "diameter": diam })))
}

fn rank_prevalence(p: Profile) -> crate::Result<Outcome> {
    let cfg = seed0();
    let dm = delay_map(&cfg)?;
    let ranks = pair_rank_scan(&dm, p.size(10_000), 0)?;
    let pts = lebesgue_points(&cfg, 100, 1)?;
    let scan = immersion_scan(&dm, &pts, AlphaSource::Ball { draws: p.size(100), radius: 1.0 }, 0)?;
    let surj = surjectivity_check(&dm, &screened_base_point(&cfg)?, p.size(100), 0)?;
    let passed = ranks.full_rank == ranks.pairs && scan.fraction == 1.0 && surj.max_residual < 1e-7;
    let detail = format!(
        "full-rank pairs {}/{}, immersion {}/{}, max surjectivity residual {} (< 1e-7)",
        ranks.full_rank,
        ranks.pairs,
        scan.full_rank,
        scan.evaluations,
        sci(surj.max_residual)
    );
    Ok((passed, detail, json!({ "pair_rank": ranks, "immersion": scan, "surjectivity": surj.max_residual })))
}

fn measure_bound(p: Profile) -> crate::Result<Outcome> {
    let l = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let strip = svalue_measure_bound(&l, &Vector::zeros(1), 1.0, 0.1, 1, p.size(100_000), 0)?;
    let exact = strip_fraction(0.1);
    let strip_ok = (strip.empirical_fraction - exact).abs() <= 3.0 * strip.std_err;
    let sweep = svalue_sweep(126, 100, p.size(20_000), 0)?;
    let below_analytic = sweep.instances.iter().all(|i| {
        let r = &i.result;
        r.empirical_fraction <= isotropic_constant(i.m, i.p) * r.bound + 4.0 * r.std_err.max(1.0 / r.draws as f64)
    });
    let normalized: Vec<(usize, f64)> = [5usize, 20, 126]
        .iter()
        .map(|&m| svalue_sweep(m, 40, p.size(20_000), 1).map(|s| (m, s.fitted_constant / s.analytic_constant)))
        .collect::<delayembed::Result<_>>()?;
    let passed = strip_ok && sweep.all_within_fitted && below_analytic;
    let detail = format!(
        "strip {} vs exact {} (s.e. {}); fitted C = {} bounds all 100 instances: {}; all below V_p V_(m-p)/V_m: {}",
        sci(strip.empirical_fraction),
        sci(exact),
        sci(strip.std_err),
        sci(sweep.fitted_constant),
        sweep.all_within_fitted,
        below_analytic
    );
    Ok((
        passed,
        detail,
        json!({ "strip": strip, "exact": exact, "fitted_constant": sweep.fitted_constant, "analytic_constant": sweep.analytic_constant, "normalized_by_m": normalized }),
    ))
}

fn bilipschitz(p: Profile) -> crate::Result<Outcome> {
    let mut cfg = seed0();
    cfg.experiment.measure = "cantor:8".into();
    cfg.experiment.points = p.size(10_000);
    cfg.bilip.probes = p.size(100);
    let out = run(Subcommand::Bilip, &cfg)?;
    let detail = out.record.checks.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; ");
    Ok((out.record.passed, detail, out.record.output))
}

fn interpolation_and_differentials(p: Profile) -> crate::Result<Outcome> {
    let count = p.size(100);
    let torus = Manifold::flat_torus();
    let mut rng = stream(0, "acceptance-interp", 0);
    let mut worst_residual: f64 = 0.0;
    for _ in 0..count {
        let k = rng.random_range(1..=5usize);
        let basis = MonomialBasis::for_delay(4, k)?;
        let pts: Vec<Vector> = (0..k).map(|_| torus.point(&[rng.random(), rng.random()]).ambient).collect();
        let targets: Vec<Vector> = (0..k).map(|_| gaussian_vector(&mut rng, 4)).collect();
        let alpha = interpolate_gradients(&basis, &pts, &targets)?;
        for (z, v) in pts.iter().zip(&targets) {
            worst_residual = worst_residual.max((basis.gradients(z.as_slice()) * &alpha - v).norm());
        }
    }
    let mut worst_fd: f64 = 0.0;
    let h = 1e-6;
    for i in 0..count {
        let t = if i % 2 == 0 { Diffeo::cat_map() } else { Diffeo::rotation(GOLDEN_OMEGA) };
        let m = *t.manifold();
        let k = rng.random_range(1..=4usize);
        let basis = Arc::new(MonomialBasis::for_delay(m.ambient_dim(), k)?);
        let alpha = uniform_ball(&mut rng, basis.len(), 1.0);
        let dm = DelayMap::new(t, Observable::new(basis, BaseObservable::Cos1, alpha)?, k)?;
        let chart: Vec<f64> = (0..m.intrinsic_dim()).map(|_| rng.random()).collect();
        let frame = tangent_frame(&m, &m.point(&chart))?;
        let analytic = dm.delay_differential(&frame)? * &frame.chart_factor;
        let mut fd = Matrix::zeros(k, m.intrinsic_dim());
        for j in 0..m.intrinsic_dim() {
            let (mut up, mut down) = (chart.clone(), chart.clone());
            up[j] += h;
            down[j] -= h;
            let col = (dm.delay_eval(&m.point(&up)) - dm.delay_eval(&m.point(&down))) / (2.0 * h);
            fd.set_column(j, &col);
        }
        worst_fd = worst_fd.max((&analytic - fd).norm() / analytic.norm());
    }
    let passed = worst_residual < 1e-8 && worst_fd < 1e-6;
    let detail = format!(
        "max interpolation residual {} (< 1e-8), max relative finite-difference error {} (< 1e-6) over {count} instances each",
        sci(worst_residual),
        sci(worst_fd)
    );
    Ok((passed, detail, json!({ "interpolation_residual": worst_residual, "finite_difference_error": worst_fd })))
}

fn projections(p: Profile) -> crate::Result<Outcome> {
    let mut cfg = seed0();
    cfg.project.samples = p.size(100);
    cfg.project.base_points = 100;
    cfg.project.haar_samples = p.size(10_000);
    let out = run(Subcommand::Project, &cfg)?;
    let detail = out.record.checks.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; ");
    Ok((out.record.passed, detail, out.record.output))
}

/// Small configuration used to replay every subcommand.
pub fn replay_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.points = 300;
    cfg.bilip.probes = 10;
    cfg.intersect.pairs = 1000;
    cfg.immersion.draws = 5;
    cfg.immersion.base_points = 10;
    cfg.immersion.rank_pairs = 100;
    cfg.immersion.targets = 5;
    cfg.svbound.instances = 10;
    cfg.svbound.draws = 2000;
    cfg.svbound.strip_draws = 10_000;
    cfg.predict.n = 5000;
    cfg.predict.probes = 8;
    cfg.predict.eps_min = 0.05;
    cfg.predict.eps_max = 0.3;
    cfg.predict.cells = 4;
    cfg.lyapunov.n = 200;
    cfg.lyapunov.orbit = 500;
    cfg.project.samples = 10;
    cfg.project.base_points = 10;
    cfg.project.haar_samples = 500;
    cfg
}

fn reproducibility(p: Profile) -> crate::Result<Outcome> {
    let cfg = replay_config();
    let mut mismatched = Vec::new();
    for sub in Subcommand::ALL {
        let a = run(sub, &cfg)?;
        let b = run(sub, &cfg)?;
        if a.record.canonical_json()? != b.record.canonical_json()? || a.tables != b.tables {
            mismatched.push(sub.name());
        }
    }
    // a full acceptance criterion replayed end to end
    let (_, _, first) = measure_bound(p)?;
    let (_, _, second) = measure_bound(p)?;
    if serde_json::to_string(&first)? != serde_json::to_string(&second)? {
        mismatched.push("acceptance:5");
    }
    let passed = mismatched.is_empty();
    let detail = if passed {
        format!("{} subcommands and criterion 5 replayed byte-identically", Subcommand::ALL.len())
    } else {
        format!("differences in {mismatched:?}")
    };
    Ok((passed, detail, json!({ "mismatched": mismatched })))
}

type CriterionFn = fn(Profile) -> crate::Result<Outcome>;

const CRITERIA: [(u32, &str, CriterionFn); 9] = [
    (1, "Lyapunov recovery", lyapunov_recovery),
    (2, "Prediction-error decay", prediction_decay),
    (3, "Negative control", negative_control),
    (4, "Rank prevalence", rank_prevalence),
    (5, "Singular-value measure bound", measure_bound),
    (6, "Bi-Lipschitz diagnostics", bilipschitz),
    (7, "Interpolation and differentials", interpolation_and_differentials),
    (8, "Projections", projections),
    (9, "Reproducibility", reproducibility),
];

/// Run one criterion by number; errors become failures.
pub fn run_criterion(id: u32, profile: Profile) -> Option<CriterionResult> {
    let (id, name, f) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail, metrics) = match f(profile) {
        Ok(o) => o,
        Err(e) => (false, format!("error: {e}"), serde_json::Value::Null),
    };
    Some(CriterionResult { id: *id, name: name.to_string(), passed, detail, metrics, elapsed_seconds: start.elapsed().as_secs_f64() })
}

/// Run the whole battery. Failures are reported, never raised.
pub fn acceptance_suite(profile: &str) -> AcceptanceSummary {
    let profile = Profile::parse(profile);
    let criteria: Vec<CriterionResult> = CRITERIA.iter().filter_map(|c| run_criterion(c.0, profile)).collect();
    AcceptanceSummary { profile, passed: criteria.iter().all(|c| c.passed), criteria }
}
