//! Subcommand dispatch: build the objects a config describes, run one
//! module's experiment and collect a record plus CSV tables.

use std::sync::Arc;

use delayembed::dynamics::orbit;
use delayembed::embedding::{sample_projection, DelayMap, Embedding, Projection};
use delayembed::geometry::{ManifoldPoint, Manifold};
use delayembed::lyapunov::{direct_exponents, em_occupancy, observed_frequency, OseledetsData};
use delayembed::observables::{MonomialBasis, Observable};
use delayembed::prediction::{error_curve, log_grid, PredictionDataset};
use delayembed::regularity::{
    bilip_report, immersion_fraction, immersion_scan, intersection_curve, pair_rank_scan, surjectivity_check,
    svalue_measure_bound, svalue_sweep, AlphaSource, isotropic_constant,
};
use delayembed::rng::{stream, uniform_ball};
use delayembed::sampling::{MeasureKind, MeasureSampler, PointCloud};
use delayembed::{Matrix, Vector};
use rand::seq::index;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output::{num, Check, ExperimentRecord, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Embed,
    Bilip,
    Intersect,
    Immersion,
    Svbound,
    PredictError,
    Lyapunov,
    Project,
}

impl Subcommand {
    pub const ALL: [Subcommand; 8] = [
        Self::Embed,
        Self::Bilip,
        Self::Intersect,
        Self::Immersion,
        Self::Svbound,
        Self::PredictError,
        Self::Lyapunov,
        Self::Project,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Embed => "embed",
            Self::Bilip => "bilip",
            Self::Intersect => "intersect",
            Self::Immersion => "immersion",
            Self::Svbound => "svbound",
            Self::PredictError => "predict-error",
            Self::Lyapunov => "lyapunov",
            Self::Project => "project",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: ExperimentRecord,
    pub tables: Vec<Table>,
}

/// Delay map with coefficients drawn uniformly from `B_m(0, radius)` on the
/// `observable` stream of the configured seed.
pub fn delay_map(cfg: &ExperimentConfig) -> Result<DelayMap> {
    let t = cfg.diffeo()?;
    let e = &cfg.experiment;
    let basis = Arc::new(MonomialBasis::for_delay(t.manifold().ambient_dim(), e.k)?);
    let alpha = uniform_ball(&mut stream(e.seed, "observable", 0), basis.len(), e.radius);
    Ok(DelayMap::new(t, Observable::new(basis, cfg.base()?, alpha)?, e.k)?)
}

/// The configured map into `ℝ^k`.
pub fn embedding(cfg: &ExperimentConfig) -> Result<Box<dyn Embedding>> {
    match cfg.experiment.map.as_str() {
        "delay" => Ok(Box::new(delay_map(cfg)?)),
        "coordinate" => Ok(Box::new(Projection::coordinate(cfg.manifold()?.ambient_dim(), cfg.experiment.k))),
        other => Err(HarnessError::config("map", format!("unknown map `{other}`"))),
    }
}

fn require_delay(cfg: &ExperimentConfig, sub: Subcommand) -> Result<()> {
    if cfg.experiment.map != "delay" {
        return Err(HarnessError::config("map", format!("`{}` needs map = \"delay\"", sub.name())));
    }
    Ok(())
}

/// `n` points from the configured measure.
pub fn sample_points(cfg: &ExperimentConfig, n: usize) -> Result<Vec<ManifoldPoint>> {
    Ok(MeasureSampler::new(cfg.manifold()?, cfg.measure()?, cfg.experiment.seed)
        .with_dynamics(cfg.diffeo()?, cfg.experiment.k)
        .sample(n)?)
}

/// `n` Lebesgue points, independent of the configured measure.
pub fn lebesgue_points(cfg: &ExperimentConfig, n: usize, seed_offset: u64) -> Result<Vec<ManifoldPoint>> {
    Ok(MeasureSampler::new(cfg.manifold()?, MeasureKind::Lebesgue, cfg.experiment.seed.wrapping_add(seed_offset))
        .with_dynamics(cfg.diffeo()?, cfg.experiment.k)
        .sample(n)?)
}

fn chart_header(m: &Manifold, k: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..m.intrinsic_dim()).map(|i| format!("chart_{i}")).collect();
    h.extend((0..k).map(|i| format!("phi_{i}")));
    h
}

pub fn run(sub: Subcommand, cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (output, checks, tables) = match sub {
        Subcommand::Embed => embed(cfg)?,
        Subcommand::Bilip => bilip(cfg)?,
        Subcommand::Intersect => intersect(cfg)?,
        Subcommand::Immersion => immersion(cfg)?,
        Subcommand::Svbound => svbound(cfg)?,
        Subcommand::PredictError => predict(cfg)?,
        Subcommand::Lyapunov => lyapunov(cfg)?,
        Subcommand::Project => project(cfg)?,
    };
    Ok(RunOutput { record: ExperimentRecord::new(sub.name(), cfg, output, checks), tables })
}

type Parts = (serde_json::Value, Vec<Check>, Vec<Table>);

fn embed(cfg: &ExperimentConfig) -> Result<Parts> {
    let m = cfg.manifold()?;
    let map = embedding(cfg)?;
    let pts = sample_points(cfg, cfg.experiment.points)?;
    let header = chart_header(&m, map.output_dim());
    let mut table = Table::new("embedding", &header.iter().map(String::as_str).collect::<Vec<_>>());
    let mut finite = true;
    for p in &pts {
        let y = map.embed(p);
        finite &= y.iter().all(|v| v.is_finite());
        table.push(p.chart.iter().chain(y.iter()).map(|&v| num(v)).collect());
    }
    let out = json!({ "points": pts.len(), "output_dim": map.output_dim() });
    Ok((out, vec![Check::new("finite embedding", finite, "all coordinates finite")], vec![table]))
}

fn bilip(cfg: &ExperimentConfig) -> Result<Parts> {
    let m = cfg.manifold()?;
    let map = embedding(cfg)?;
    let pc = PointCloud::build(m, sample_points(cfg, cfg.experiment.points)?, map.as_ref(), true)?;
    let probes = cfg.bilip.probes.min(pc.len());
    let mut rng = stream(cfg.experiment.seed, "bilip-probes", 0);
    let mut idx = index::sample(&mut rng, pc.len(), probes).into_vec();
    idx.sort_unstable();
    let r0 = cfg.bilip.exclusion_radius;
    let rep = bilip_report(&pc, &idx, r0)?;
    let twice = bilip_report(&pc.scaled(2.0), &idx, r0)?;
    let homogeneous = rep
        .records
        .iter()
        .zip(&twice.records)
        .all(|(a, b)| b.c_global == a.c_global / 2.0 && b.c_local == a.c_local / 2.0);
    let needed = (0.99 * probes as f64).ceil() as usize;
    let mut table = Table::new("bilip", &["index", "c_global", "c_local", "witness", "collision"]);
    for r in &rep.records {
        table.push(vec![
            r.index.to_string(),
            num(r.c_global),
            num(r.c_local),
            r.witness.map_or(String::new(), |w| w.to_string()),
            r.exact_collision.to_string(),
        ]);
    }
    let checks = vec![
        Check::new("finite global constant", rep.finite_global >= needed, format!("{} of {probes} probes finite, need {needed}", rep.finite_global)),
        Check::new("homogeneity under rescaling by 2", homogeneous, "constants halve exactly"),
    ];
    let out = json!({
        "probes": probes,
        "finite_global": rep.finite_global,
        "collisions": rep.collisions,
        "median_combined": rep.median_combined,
        "max_combined": rep.max_combined,
        "homogeneous": homogeneous,
    });
    Ok((out, checks, vec![table]))
}

fn intersect(cfg: &ExperimentConfig) -> Result<Parts> {
    let m = cfg.manifold()?;
    let map = embedding(cfg)?;
    let pc = PointCloud::build(m, sample_points(cfg, cfg.experiment.points)?, map.as_ref(), false)?;
    let mut deltas = cfg.intersect.deltas.clone();
    deltas.sort_by(f64::total_cmp);
    let curve = intersection_curve(&pc, cfg.intersect.eps_sep, &deltas, cfg.intersect.pairs, cfg.experiment.seed)?;
    let mut table = Table::new("intersection", &["delta_emb", "violations", "rate"]);
    for r in &curve {
        table.push(vec![num(r.delta_emb), r.violations.to_string(), num(r.rate)]);
    }
    let monotone = curve.windows(2).all(|w| w[0].rate <= w[1].rate);
    let out = json!({ "eps_sep": cfg.intersect.eps_sep, "pairs": cfg.intersect.pairs, "curve": curve });
    Ok((out, vec![Check::new("rate monotone in delta", monotone, "same pair sample")], vec![table]))
}

/// First Lebesgue point that is non-periodic below period `k` and where
/// the delay differential has full rank.
pub fn screened_base_point(cfg: &ExperimentConfig) -> Result<ManifoldPoint> {
    Ok(lebesgue_points(cfg, 1, 0)?.remove(0))
}

fn immersion(cfg: &ExperimentConfig) -> Result<Parts> {
    require_delay(cfg, Subcommand::Immersion)?;
    let dm = delay_map(cfg)?;
    let s = &cfg.immersion;
    let pts = lebesgue_points(cfg, s.base_points, 1)?;
    let scan = immersion_scan(&dm, &pts, AlphaSource::Ball { draws: s.draws, radius: cfg.experiment.radius }, cfg.experiment.seed)?;
    let ranks = pair_rank_scan(&dm, s.rank_pairs, cfg.experiment.seed)?;
    let surj = surjectivity_check(&dm, &screened_base_point(cfg)?, s.targets, cfg.experiment.seed)?;
    let mut table = Table::new("surjectivity", &["trial", "residual"]);
    for (i, r) in surj.residuals.iter().enumerate() {
        table.push(vec![i.to_string(), num(*r)]);
    }
    let checks = vec![
        Check::new("immersion fraction 1", scan.fraction == 1.0, format!("{} of {}", scan.full_rank, scan.evaluations)),
        Check::new("pair matrices full rank", ranks.full_rank == ranks.pairs, format!("{} of {}, min ratio {}", ranks.full_rank, ranks.pairs, num(ranks.min_ratio))),
        Check::new("surjectivity residual", surj.max_residual < 1e-7, format!("max residual {}", num(surj.max_residual))),
    ];
    let out = json!({ "immersion": scan, "pair_rank": ranks, "surjectivity_max_residual": surj.max_residual });
    Ok((out, checks, vec![table]))
}

/// Area fraction of the strip `|x| ≤ ε` in the unit disc.
pub fn strip_fraction(eps: f64) -> f64 {
    (2.0 / std::f64::consts::PI) * (eps.asin() + eps * (1.0 - eps * eps).sqrt())
}

fn svbound(cfg: &ExperimentConfig) -> Result<Parts> {
    let s = &cfg.svbound;
    let seed = cfg.experiment.seed;
    let l = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let strip = svalue_measure_bound(&l, &Vector::zeros(1), 1.0, s.strip_eps, 1, s.strip_draws, seed)?;
    let exact = strip_fraction(s.strip_eps);
    let sweep = svalue_sweep(s.m, s.instances, s.draws, seed)?;
    let within_analytic = sweep.instances.iter().all(|i| {
        let r = &i.result;
        r.empirical_fraction <= isotropic_constant(i.m, i.p) * r.bound + 4.0 * r.std_err.max(1.0 / r.draws as f64)
    });
    let mut table = Table::new("sweep", &["instance", "m", "k", "p", "isotropic", "centered", "eps", "sigma_p", "hits", "fraction", "bound", "ratio"]);
    for (n, i) in sweep.instances.iter().enumerate() {
        let r = &i.result;
        table.push(vec![
            n.to_string(),
            i.m.to_string(),
            i.k.to_string(),
            i.p.to_string(),
            i.isotropic.to_string(),
            i.centered.to_string(),
            num(i.eps),
            num(r.sigma_p),
            r.hits.to_string(),
            num(r.empirical_fraction),
            num(r.bound),
            num(r.ratio),
        ]);
    }
    let checks = vec![
        Check::new(
            "strip area",
            (strip.empirical_fraction - exact).abs() <= 3.0 * strip.std_err,
            format!("empirical {} vs exact {}, s.e. {}", num(strip.empirical_fraction), num(exact), num(strip.std_err)),
        ),
        Check::new("fitted constant bounds every instance", sweep.all_within_fitted, format!("C = {}", num(sweep.fitted_constant))),
        Check::new("instances below the isotropic constant", within_analytic, format!("C* = {}", num(sweep.analytic_constant))),
    ];
    let out = json!({
        "strip": { "eps": s.strip_eps, "exact": exact, "result": strip },
        "fitted_constant": sweep.fitted_constant,
        "analytic_constant": sweep.analytic_constant,
        "normalized_constant": sweep.fitted_constant / sweep.analytic_constant,
    });
    Ok((out, checks, vec![table]))
}

fn predict(cfg: &ExperimentConfig) -> Result<Parts> {
    let p = &cfg.predict;
    let map = embedding(cfg)?;
    let ds = PredictionDataset::build(&cfg.diffeo()?, sample_points(cfg, p.n)?, map.as_ref())?;
    let grid = log_grid(p.eps_min, p.eps_max, p.cells);
    let curve = error_curve(&ds, p.probes, &grid, cfg.experiment.seed)?;
    let mut table = Table::new("curve", &["eps", "median_sigma", "median_occupancy"]);
    for ((e, s), o) in curve.eps.iter().zip(&curve.median_sigma).zip(&curve.median_occupancy) {
        table.push(vec![num(*e), s.map_or(String::new(), num), o.map_or(String::new(), num)]);
    }
    let slope_ok = curve.slope.is_some_and(|s| s >= 0.9);
    let checks = vec![Check::new("slope at least 0.9", slope_ok, format!("slope {:?}", curve.slope))];
    let out = json!({
        "slope": curve.slope,
        "intercept": curve.intercept,
        "resolution_floor": curve.resolution_floor,
        "dropped": curve.dropped,
    });
    Ok((out, checks, vec![table]))
}

fn lyapunov(cfg: &ExperimentConfig) -> Result<Parts> {
    require_delay(cfg, Subcommand::Lyapunov)?;
    let dm = delay_map(cfg)?;
    let t = *dm.dynamics();
    let l = &cfg.lyapunov;
    let x = screened_base_point(cfg)?;
    let data = OseledetsData::analytic(&t);
    let direct = direct_exponents(&t, &x, l.n)?;
    let direct_err = direct.iter().zip(&data.exponents).map(|(d, e)| (d.exponent - e).abs()).fold(0.0, f64::max);
    let mut eps = l.eps.clone();
    eps.sort_by(f64::total_cmp);
    let freq = observed_frequency(&dm, &x, &data, l.n, &eps)?;
    let occ = em_occupancy(&dm, &orbit(&t, &x, l.orbit), &l.m_grid)?;
    let last = freq.records.last().and_then(|r| r.observed_deviation);
    let mut records = Table::new("steps", &["n", "direct_deviation", "observed_deviation", "log_m"]);
    for r in &freq.records {
        records.push(vec![
            r.n.to_string(),
            num(r.direct_deviation),
            r.observed_deviation.map_or(String::new(), num),
            r.log_m.map_or(String::new(), num),
        ]);
    }
    let mut em = Table::new("em_occupancy", &["m", "fraction"]);
    for (m, f) in occ.m_grid.iter().zip(&occ.fractions) {
        em.push(vec![num(*m), num(*f)]);
    }
    let mut checks = vec![
        Check::new("direct exponents", direct_err < 1e-6, format!("max error {}", num(direct_err))),
        Check::new("final observed deviation", last.is_some_and(|d| d < 0.02), format!("{last:?} at n = {}", l.n)),
    ];
    if let Some(i) = eps.iter().position(|&e| e >= 0.05) {
        checks.push(Check::new(
            "frequency of good times",
            freq.fractions[i] >= 0.95,
            format!("{} at eps = {}", num(freq.fractions[i]), num(eps[i])),
        ));
    }
    let out = json!({
        "base_chart": x.chart,
        "direct": direct.iter().map(|d| json!({ "exponent": d.exponent, "direction": d.direction.as_slice() })).collect::<Vec<_>>(),
        "analytic": data.exponents,
        "frequencies": { "eps": eps, "fractions": freq.fractions, "rank_deficient": freq.rank_deficient },
        "final_observed_deviation": last,
        "em_occupancy": occ,
    });
    Ok((out, checks, vec![records, em]))
}

fn project(cfg: &ExperimentConfig) -> Result<Parts> {
    let m = cfg.manifold()?;
    let n = m.ambient_dim();
    let k = cfg.experiment.k;
    if k > n {
        return Err(HarnessError::config("k", "projection dimension exceeds the ambient dimension"));
    }
    let p = &cfg.project;
    let mut rng = stream(cfg.experiment.seed, "project", 0);
    let projections: Vec<Projection> = (0..p.samples).map(|_| sample_projection(n, k, &mut rng)).collect::<delayembed::Result<_>>()?;
    let mut table = Table::new("projections", &["sample", "idempotence_error", "symmetry_error"]);
    let mut worst: f64 = 0.0;
    for (i, pr) in projections.iter().enumerate() {
        let q = pr.projector();
        let (idem, sym) = ((&q * &q - &q).amax(), (q.transpose() - &q).amax());
        worst = worst.max(idem).max(sym);
        table.push(vec![i.to_string(), num(idem), num(sym)]);
    }
    let mut haar = stream(cfg.experiment.seed, "project-haar", 0);
    let u = Vector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let norms: Vec<f64> = (0..p.haar_samples)
        .map(|_| sample_projection(n, k, &mut haar).map(|pr| pr.apply(&u).norm_squared()))
        .collect::<delayembed::Result<_>>()?;
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let var = norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (norms.len() - 1) as f64;
    let se = (var / norms.len() as f64).sqrt();
    let target = k as f64 / n as f64;
    let pts = lebesgue_points(cfg, p.base_points, 2)?;
    let maps: Vec<&dyn Embedding> = projections.iter().map(|p| p as &dyn Embedding).collect();
    let mut checks = vec![
        Check::new("orthogonal projectors", worst <= 1e-12, format!("max error {worst:.3e}")),
        Check::new("Haar mean of squared projection", (mean - target).abs() <= 3.0 * se, format!("{mean:.4} vs {target} (s.e. {se:.2e})")),
    ];
    let imm = if k >= m.intrinsic_dim() {
        let r = immersion_fraction(&m, &maps, &pts)?;
        checks.push(Check::new("immersion fraction 1", r.fraction == 1.0, format!("{} of {}", r.full_rank, r.evaluations)));
        Some(r)
    } else {
        None
    };
    let out = json!({ "max_projector_error": worst, "haar_mean": mean, "haar_se": se, "target": target, "immersion": imm });
    Ok((out, checks, vec![table]))
}
