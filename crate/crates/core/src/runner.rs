//! The three command-line operations as library calls: validate, run and
//! oracle check.

use crate::cce::{enumerate_clusters, gcce_coherence, ClusterPolicy, MAX_ORDER};
use crate::config::RunConfig;
use crate::constants::CONSTANTS_VERSION;
use crate::eseem::DecayFit;
use crate::oracle::{exact_normalized, OracleLimit};
use crate::output::{
    CurveSet, OutputWriter, SpectrumSet, ABLATION_FILE, CENSUS_FILE, CONVERGENCE_FILE, PROVENANCE_FILE,
};
use crate::sweep::{ablate_bath, convergence_study, run_sweep, simulate, Ablation, PointOutcome, SweepTable};
use crate::{Error, Result};
use log::{info, warn};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Result of [`validate_config`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub config_sha256: String,
    pub bath_spins: usize,
    pub boron: usize,
    pub nitrogen: usize,
    pub strongest_hyperfine_mhz: Vec<f64>,
    pub sweep_points: usize,
}

/// Full schema check plus dataset coverage, without any propagation.
pub fn validate_config(config: &RunConfig) -> Result<ValidationReport> {
    config.validate()?;
    let dataset = config.dataset()?;
    let missing = dataset.missing_sites(&config.lattice);
    if !missing.is_empty() {
        return Err(Error::MissingHyperfine { sites: missing.iter().map(|s| s.describe()).collect() });
    }
    let bath = config.bath()?;
    let boron = bath.iter().filter(|s| s.species.isotope.element() == crate::constants::Element::B).count();
    Ok(ValidationReport {
        config_sha256: config.sha256(),
        bath_spins: bath.len(),
        boron,
        nitrogen: bath.len() - boron,
        strongest_hyperfine_mhz: crate::bath::hyperfine_shell_profile(&bath, 6).into_iter().map(|(_, n)| n).collect(),
        sweep_points: config.sweep.as_ref().map_or(0, |s| s.points.len()),
    })
}

#[derive(Debug, Clone, Serialize)]
struct Provenance {
    crate_version: &'static str,
    constants_version: &'static str,
    seed: u64,
    threads: usize,
    bath_spins: usize,
    hyperfine_source: String,
    points_run: usize,
    points_failed: usize,
    failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct AblationRecord {
    variant: Ablation,
    field_mt: f64,
    fit: Option<DecayFit>,
    error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct Ablations {
    ablations: Vec<AblationRecord>,
}

#[derive(Debug, Clone, Serialize)]
struct Fit {
    field_mt: f64,
    fit: DecayFit,
    degraded_fraction: f64,
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub points_run: usize,
    pub points_failed: usize,
    pub sweep: Option<SweepTable>,
}

impl RunSummary {
    pub fn total_failure(&self) -> bool {
        self.points_run > 0 && self.points_failed == self.points_run
    }
}

/// Runs the base point (or the sweep), the convergence study and the
/// ablations of `config`, writing everything to `out_dir`.
pub fn run_config(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    let hash = config.sha256();
    let writer = OutputWriter::create(out_dir, &hash)?;
    let scenario = config.scenario()?;
    let mut files = Vec::new();
    let mut failures = Vec::new();
    let mut points_run = 0;

    let census = enumerate_clusters(&scenario.bath, &scenario.point.policy)?.census;
    files.push(writer.write_json(CENSUS_FILE, &census)?);

    let mut base: Option<PointOutcome> = None;
    let mut table: Option<SweepTable> = None;
    match &config.sweep {
        Some(spec) if spec.points.is_empty() => warn!("sweep has no points; nothing to run"),
        Some(spec) => {
            let t = run_sweep(spec, &scenario)?;
            points_run += t.rows.len();
            for r in &t.rows {
                if let Some(e) = &r.error {
                    failures.push(format!("{:?} = {}: {e}", spec.axis, r.point));
                }
            }
            files.push(writer.write_sweep(&t)?);
            table = Some(t);
        }
        None => {
            points_run += 1;
            match simulate(&scenario, true) {
                Ok(o) => {
                    files.push(writer.write_json(
                        "fit.json",
                        &Fit { field_mt: scenario.point.field_mt, fit: o.fit, degraded_fraction: o.result.degraded_fraction },
                    )?);
                    base = Some(o);
                }
                Err(e) => {
                    warn!("base point failed: {e}");
                    failures.push(format!("base point: {e}"));
                }
            }
        }
    }

    if let Some(spec) = &config.convergence {
        match convergence_study(&scenario, spec) {
            Ok(report) => {
                for f in &report.flags {
                    warn!("convergence: {f}");
                }
                files.push(writer.write_json(CONVERGENCE_FILE, &report)?);
            }
            Err(e) => failures.push(format!("convergence study: {e}")),
        }
    }

    let mut ablation_out = Vec::new();
    let mut records = Vec::new();
    for &variant in &config.ablations {
        points_run += 1;
        match ablate_bath(&scenario, variant) {
            Ok(o) => {
                records.push(AblationRecord { variant, field_mt: scenario.point.field_mt, fit: Some(o.fit), error: None });
                ablation_out.push((variant, o));
            }
            Err(e) => {
                failures.push(format!("ablation {variant:?}: {e}"));
                records.push(AblationRecord {
                    variant,
                    field_mt: scenario.point.field_mt,
                    fit: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    if !records.is_empty() {
        files.push(writer.write_json(ABLATION_FILE, &Ablations { ablations: records })?);
    }

    let label = |v: Ablation| format!("ablation:{}", serde_json::to_value(v).ok().and_then(|j| j.as_str().map(String::from)).unwrap_or_default());
    let mut curves = Vec::new();
    let mut spectra = Vec::new();
    if let Some(o) = &base {
        curves.push(CurveSet { series: "base".into(), point: scenario.point.field_mt, result: &o.result });
        if let Some(p) = &o.spectrum {
            spectra.push(SpectrumSet { series: "base".into(), point: scenario.point.field_mt, peaks: p });
        }
    }
    if let Some(t) = &table {
        for (x, r) in &t.curves {
            curves.push(CurveSet { series: "sweep".into(), point: *x, result: r });
        }
        for row in &t.rows {
            if let Some(p) = &row.spectrum {
                spectra.push(SpectrumSet { series: "sweep".into(), point: row.point, peaks: p });
            }
        }
    }
    for (v, o) in &ablation_out {
        curves.push(CurveSet { series: label(*v), point: scenario.point.field_mt, result: &o.result });
        if let Some(p) = &o.spectrum {
            spectra.push(SpectrumSet { series: label(*v), point: scenario.point.field_mt, peaks: p });
        }
    }
    if !curves.is_empty() {
        files.push(writer.write_curves(&curves)?);
    }
    if !spectra.is_empty() {
        files.push(writer.write_spectra(&spectra)?);
    }

    let provenance = Provenance {
        crate_version: env!("CARGO_PKG_VERSION"),
        constants_version: CONSTANTS_VERSION,
        seed: config.seed,
        threads: rayon::current_num_threads(),
        bath_spins: scenario.bath.len(),
        hyperfine_source: config
            .hyperfine_dataset
            .as_ref()
            .map_or("built-in model tensors".to_string(), |d| d.path.display().to_string()),
        points_run,
        points_failed: failures.len(),
        failures,
    };
    files.push(writer.write_json(PROVENANCE_FILE, &provenance)?);
    info!("wrote {} files to {}", files.len(), out_dir.display());
    Ok(RunSummary { files, points_run, points_failed: provenance.points_failed, sweep: table })
}

/// Per-order comparison against exact propagation.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub bath_spins: usize,
    pub hilbert_dim: usize,
    pub times: Vec<f64>,
    /// max_t |L_gCCE − L_exact| for orders 1..
    pub max_deviation_by_order: Vec<f64>,
    /// |L_gCCE − L_exact| at every time for the highest order.
    pub deviation: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Tolerance of the full-order comparison.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

/// Compares gCCE with exact propagation of the whole bath of `config`. The
/// check passes when the full-order expansion is within [`ORACLE_TOLERANCE`].
pub fn oracle_check(config: &RunConfig, limit: OracleLimit) -> Result<OracleReport> {
    config.validate()?;
    let scenario = config.scenario()?;
    let system = scenario.system()?;
    let dim = crate::model::cluster_dimension(&system.bath);
    if dim > limit.max_dim {
        return Err(Error::ClusterTooLarge { dim, cap: limit.max_dim });
    }
    let times = scenario.times()?;
    let state = scenario.bath_state();
    let exact = exact_normalized(&system, &state, &times, limit)?;
    let n = system.bath.len().clamp(1, MAX_ORDER);
    let mut by_order = Vec::with_capacity(n);
    let mut deviation = Vec::new();
    for order in 1..=n {
        let policy = ClusterPolicy {
            max_order: order,
            r_bath: f64::INFINITY,
            r_connect: f64::INFINITY,
            max_clusters_per_order: None,
            core_conditioning: 0,
            ..scenario.point.policy
        };
        let g = gcce_coherence(&system.clone().with_max_dim(limit.max_dim), &policy, &state, &times)?;
        deviation = g.total.values.iter().zip(&exact.values).map(|(a, b)| (a - b).norm()).collect();
        by_order.push(deviation.iter().copied().fold(0.0, f64::max));
    }
    let full = system.bath.len() <= MAX_ORDER;
    let passed = full && by_order.last().is_some_and(|&d| d < ORACLE_TOLERANCE);
    Ok(OracleReport {
        bath_spins: system.bath.len(),
        hilbert_dim: dim,
        times,
        max_deviation_by_order: by_order,
        deviation,
        tolerance: ORACLE_TOLERANCE,
        passed,
    })
}
