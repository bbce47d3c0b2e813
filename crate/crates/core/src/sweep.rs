//! Sweeps over field, transverse ZFS or first-shell polarization, together
//! with convergence studies and bath ablations.

use crate::bath::DEFAULT_R_PAIR;
use crate::cce::{gcce_coherence, uniform_times, BathState, ClusterPolicy, GcceResult, SpinState, SpinSystem};
use crate::constants::Element;
use crate::eseem::{fit_decay, modulation_spectrum, DecayFit, SpectralPeak, DEFAULT_MIN_NYQUIST_MHZ};
use crate::model::{gslac_field, BathSpin, CentralSpinParams, HyperfineMode, MagneticField, DEFAULT_MAX_DIM};
use crate::tensor::norm;
use crate::{Error, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Nitrogens closer than this to the vacancy form the first shell, Å.
pub const FIRST_SHELL_RADIUS: f64 = 2.0;

/// Relative T2 change above which a convergence step is flagged.
pub const CONVERGENCE_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Field along c, mT.
    #[serde(rename = "B_z")]
    Bz,
    /// Transverse zero-field splitting, MHz.
    #[serde(rename = "E")]
    E,
    /// First-shell nitrogen polarization along −z, in [0, 1].
    #[serde(rename = "polarization")]
    Polarization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOutputs {
    #[serde(default = "yes")]
    pub t2: bool,
    #[serde(default)]
    pub curves: bool,
    #[serde(default)]
    pub spectra: bool,
}

fn yes() -> bool {
    true
}

impl Default for SweepOutputs {
    fn default() -> Self {
        SweepOutputs { t2: true, curves: false, spectra: false }
    }
}

/// Cluster policy used at one sweep point instead of the base policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyOverride {
    pub point: f64,
    pub policy: ClusterPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub points: Vec<f64>,
    #[serde(default)]
    pub policy_overrides: Vec<PolicyOverride>,
    #[serde(default)]
    pub outputs: SweepOutputs,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, points: Vec<f64>) -> Self {
        SweepSpec { axis, points, policy_overrides: Vec::new(), outputs: SweepOutputs::default() }
    }

    /// Checks the points; an empty list is allowed and makes the sweep a no-op.
    pub fn validate(&self) -> Result<()> {
        for &p in &self.points {
            if !p.is_finite() {
                return Err(Error::Validation(format!("sweep point {p} is not finite")));
            }
            match self.axis {
                SweepAxis::E if p < 0.0 => {
                    return Err(Error::Validation(format!("E is a magnitude and must be >= 0, got {p}")));
                }
                SweepAxis::Polarization if !(0.0..=1.0).contains(&p) => {
                    return Err(Error::Validation(format!("polarization {p} outside [0, 1]")));
                }
                _ => {}
            }
        }
        for o in &self.policy_overrides {
            if !self.points.contains(&o.point) {
                return Err(Error::Validation(format!("policy override for {} matches no sweep point", o.point)));
            }
            o.policy.validate()?;
        }
        Ok(())
    }

    fn policy_at(&self, point: f64) -> Option<&ClusterPolicy> {
        self.policy_overrides.iter().find(|o| o.point == point).map(|o| &o.policy)
    }
}

/// Time grid of a simulation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeGrid {
    Fixed { t_max_us: f64, points: usize },
    /// t_max taken from a coarse pilot run.
    Auto { points: usize },
}

impl TimeGrid {
    pub fn validate(&self) -> Result<()> {
        let n = match *self {
            TimeGrid::Fixed { t_max_us, points } => {
                if !(t_max_us > 0.0 && t_max_us.is_finite()) {
                    return Err(Error::Validation(format!("t_max_us must be positive, got {t_max_us}")));
                }
                points
            }
            TimeGrid::Auto { points } => points,
        };
        if n < 2 {
            return Err(Error::Validation(format!("a time grid needs at least 2 points, got {n}")));
        }
        Ok(())
    }
}

/// Everything needed to simulate one point apart from the bath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub field_mt: f64,
    #[serde(default)]
    pub central: CentralSpinParams,
    #[serde(default)]
    pub mode: HyperfineMode,
    pub policy: ClusterPolicy,
    /// Polarization of the first-shell nitrogens along −z.
    #[serde(default)]
    pub first_shell_polarization: f64,
    pub times: TimeGrid,
    #[serde(default = "default_r_pair")]
    pub r_pair: f64,
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
}

fn default_r_pair() -> f64 {
    DEFAULT_R_PAIR
}

fn default_max_dim() -> usize {
    DEFAULT_MAX_DIM
}

impl PointSpec {
    /// Reports every problem at once, one per line.
    pub fn validate(&self) -> Result<()> {
        let mut problems: Vec<String> = [self.central.validate(), self.policy.validate(), self.times.validate()]
            .into_iter()
            .filter_map(|r| r.err().map(|e| e.to_string()))
            .collect();
        if !self.field_mt.is_finite() {
            problems.push("field_mt must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.first_shell_polarization) {
            problems.push(format!("first_shell_polarization {} outside [0, 1]", self.first_shell_polarization));
        }
        if !(self.r_pair >= 0.0) {
            problems.push("r_pair must be >= 0".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }
}

/// A bath together with the settings of one simulation point.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub bath: Vec<BathSpin>,
    pub point: PointSpec,
}

/// Indices of the first-shell nitrogens of `bath`.
pub fn first_shell(bath: &[BathSpin]) -> Vec<usize> {
    (0..bath.len())
        .filter(|&i| bath[i].species.isotope.element() == Element::N && norm(bath[i].position) < FIRST_SHELL_RADIUS)
        .collect()
}

impl Scenario {
    pub fn new(bath: Vec<BathSpin>, point: PointSpec) -> Result<Self> {
        point.validate()?;
        Ok(Scenario { bath, point })
    }

    pub fn system(&self) -> Result<SpinSystem> {
        Ok(SpinSystem::new(self.point.central, self.bath.clone(), MagneticField::along_c(self.point.field_mt), self.point.mode)?
            .with_r_pair(self.point.r_pair)
            .with_max_dim(self.point.max_dim))
    }

    pub fn bath_state(&self) -> BathState {
        let p = self.point.first_shell_polarization;
        if p == 0.0 {
            return BathState::maximally_mixed();
        }
        BathState::polarized(&first_shell(&self.bath), SpinState::Polarized { p, axis: [0.0, 0.0, -1.0] })
    }

    /// The time grid, running a pilot for [`TimeGrid::Auto`].
    pub fn times(&self) -> Result<Vec<f64>> {
        match self.point.times {
            TimeGrid::Fixed { t_max_us, points } => Ok(uniform_times(t_max_us, points)),
            TimeGrid::Auto { points } => Ok(uniform_times(self.pilot_t_max()?, points)),
        }
    }

    /// Coarse run with at most second order on a logarithmic grid. Returns three times the first instant after which
    /// |L| stays below 1/2, clamped to [0.05, 2000] μs.
    pub fn pilot_t_max(&self) -> Result<f64> {
        const T_MIN: f64 = 0.05;
        const T_MAX: f64 = 2000.0;
        let policy = ClusterPolicy { max_order: self.point.policy.max_order.min(2), ..self.point.policy };
        let times: Vec<f64> =
            std::iter::once(0.0).chain((0..48).map(|k| 1e-3 * (T_MAX / 1e-3f64).powf(k as f64 / 47.0))).collect();
        let r = gcce_coherence(&self.system()?, &policy, &self.bath_state(), &times)?;
        let mag = r.total.magnitudes();
        // Truncated expansions can grow again far past the decay, so look for
        // the first lasting drop rather than the last high point.
        const HOLD: usize = 8;
        let drop = (1..mag.len()).find(|&i| mag[i..(i + HOLD).min(mag.len())].iter().all(|&m| m < 0.5));
        let t_max = drop.map_or(T_MAX, |i| 3.0 * times[i]);
        Ok(t_max.clamp(T_MIN, T_MAX))
    }
}

/// gCCE curves of one point with their fit and optional spectrum.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub result: GcceResult,
    pub fit: DecayFit,
    pub spectrum: Option<Vec<SpectralPeak>>,
}

/// Simulates `scenario`; the spectrum is computed if `spectrum` is set and
/// the grid resolves it.
pub fn simulate(scenario: &Scenario, spectrum: bool) -> Result<PointOutcome> {
    let times = scenario.times()?;
    let result = gcce_coherence(&scenario.system()?, &scenario.point.policy, &scenario.bath_state(), &times)?;
    let fit = fit_decay(&result.total)?;
    let spectrum = if spectrum {
        match modulation_spectrum(&result.total, DEFAULT_MIN_NYQUIST_MHZ) {
            Ok(p) => Some(p),
            Err(e) => {
                warn!("no spectrum: {e}");
                None
            }
        }
    } else {
        None
    };
    Ok(PointOutcome { result, fit, spectrum })
}

/// Field regions used to label sweep points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    ZeroField,
    LowField,
    Gslac,
    Transition,
    HighField,
}

impl Region {
    /// Boundaries at 10 mT, 100 mT, 180 mT and 350 mT; the GSLAC region
    /// is widened to gslac ± 30 mT when that reaches beyond [100, 180).
    pub fn classify(field_mt: f64, central: &CentralSpinParams) -> Region {
        let b = field_mt.abs();
        let g = gslac_field(central);
        let (lo, hi) = ((g - 30.0).min(100.0), (g + 30.0).max(180.0));
        if b < 10.0f64.min(lo) {
            Region::ZeroField
        } else if b < lo {
            Region::LowField
        } else if b < hi {
            Region::Gslac
        } else if b < 350.0f64.max(hi) {
            Region::Transition
        } else {
            Region::HighField
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Region::ZeroField => "zero_field",
            Region::LowField => "low_field",
            Region::Gslac => "gslac",
            Region::Transition => "transition",
            Region::HighField => "high_field",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: f64,
    pub region: Region,
    pub fit: Option<DecayFit>,
    pub degraded_fraction: f64,
    pub spectrum: Option<Vec<SpectralPeak>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// Curves of the successful points, if requested.
    pub curves: Vec<(f64, GcceResult)>,
}

impl SweepTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Scenario of one sweep point.
pub fn point_scenario(spec: &SweepSpec, base: &Scenario, point: f64) -> Result<Scenario> {
    let mut p = base.point.clone();
    match spec.axis {
        SweepAxis::Bz => p.field_mt = point,
        SweepAxis::E => p.central.e_mhz = point,
        SweepAxis::Polarization => p.first_shell_polarization = point,
    }
    if let Some(policy) = spec.policy_at(point) {
        p.policy = *policy;
    }
    Scenario::new(base.bath.clone(), p)
}

/// Runs every point of `spec` on top of `base`. A failing point is recorded
/// in its row and the remaining points still run.
pub fn run_sweep(spec: &SweepSpec, base: &Scenario) -> Result<SweepTable> {
    spec.validate()?;
    if spec.points.is_empty() {
        warn!("empty sweep");
    }
    let outcomes: Vec<(f64, Result<PointOutcome>)> = spec
        .points
        .par_iter()
        .map(|&x| {
            let r = point_scenario(spec, base, x).and_then(|s| simulate(&s, spec.outputs.spectra));
            match &r {
                Ok(o) => info!("{:?} = {x}: {:?}", spec.axis, o.fit),
                Err(e) => warn!("{:?} = {x} failed: {e}", spec.axis),
            }
            (x, r)
        })
        .collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut curves = Vec::new();
    for (x, r) in outcomes {
        let field = if spec.axis == SweepAxis::Bz { x } else { base.point.field_mt };
        let region = Region::classify(field, &base.point.central);
        match r {
            Ok(o) => {
                rows.push(SweepRow {
                    point: x,
                    region,
                    fit: Some(o.fit),
                    degraded_fraction: o.result.degraded_fraction,
                    spectrum: o.spectrum,
                    error: None,
                });
                if spec.outputs.curves {
                    curves.push((x, o.result));
                }
            }
            Err(e) => rows.push(SweepRow {
                point: x,
                region,
                fit: None,
                degraded_fraction: 0.0,
                spectrum: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(SweepTable { axis: spec.axis, rows, curves })
}

/// Knob settings of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    /// Field of the studied point, mT.
    pub field_mt: f64,
    /// Highest order; T2 is reported for every order from 1.
    pub max_order: usize,
    #[serde(default)]
    pub bath_radii: Vec<f64>,
    #[serde(default)]
    pub cluster_caps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnobStep {
    pub value: f64,
    pub t2_us: Option<f64>,
    /// |ΔT2| / T2 relative to the previous setting.
    pub relative_change: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub field_mt: f64,
    /// T2 for orders 1, 2, ... (None where no decay was resolved).
    pub t2_by_order: Vec<Option<f64>>,
    pub order_steps: Vec<KnobStep>,
    pub cluster_cap_steps: Vec<KnobStep>,
    pub bath_radius_steps: Vec<KnobStep>,
    pub degraded_fraction: f64,
    /// Human-readable non-convergence flags.
    pub flags: Vec<String>,
}

fn steps(values: &[f64], t2: &[Option<f64>], knob: &str, flags: &mut Vec<String>) -> Vec<KnobStep> {
    let mut out: Vec<KnobStep> = Vec::with_capacity(values.len());
    for (k, (&v, &t)) in values.iter().zip(t2).enumerate() {
        let rel = if k == 0 {
            None
        } else {
            match (t2[k - 1], t) {
                (Some(prev), Some(cur)) => Some((cur - prev).abs() / cur),
                (None, None) => Some(0.0),
                _ => None,
            }
        };
        let converged = k == 0 || rel.is_some_and(|r| r <= CONVERGENCE_TOLERANCE);
        if !converged {
            flags.push(match rel {
                Some(r) => format!("{knob} {v}: T2 changed by {:.1}%", 100.0 * r),
                None => format!("{knob} {v}: decay resolved at only one of two successive settings"),
            });
        }
        out.push(KnobStep { value: v, t2_us: t, relative_change: rel, converged });
    }
    out
}

/// T2 at successive orders, cluster caps and bath radii around `base`.
pub fn convergence_study(base: &Scenario, spec: &ConvergenceSpec) -> Result<ConvergenceReport> {
    if spec.max_order == 0 {
        return Err(Error::Validation("convergence max_order must be >= 1".into()));
    }
    for (name, n) in [("bath_radii", spec.bath_radii.len()), ("cluster_caps", spec.cluster_caps.len())] {
        if n == 1 {
            return Err(Error::Validation(format!("{name} needs at least two settings to be varied")));
        }
    }
    let mut point = base.point.clone();
    point.field_mt = spec.field_mt;
    point.policy.max_order = spec.max_order;
    let at = |p: PointSpec| Scenario::new(base.bath.clone(), p);

    let scenario = at(point.clone())?;
    let times = scenario.times()?;
    let fixed = TimeGrid::Fixed { t_max_us: *times.last().unwrap_or(&1.0), points: times.len() };
    point.times = fixed;
    let full = simulate(&at(point.clone())?, false)?;
    let mut t2_by_order = Vec::with_capacity(spec.max_order);
    for n in 1..=spec.max_order {
        t2_by_order.push(fit_decay(&full.result.up_to_order(n))?.t2());
    }
    let mut flags = Vec::new();
    let orders: Vec<f64> = (1..=spec.max_order).map(|n| n as f64).collect();
    let order_steps = steps(&orders, &t2_by_order, "order", &mut flags);

    let mut caps = Vec::new();
    for &c in &spec.cluster_caps {
        let mut p = point.clone();
        p.policy.max_clusters_per_order = Some(c);
        caps.push(simulate(&at(p)?, false)?.fit.t2());
    }
    let cap_values: Vec<f64> = spec.cluster_caps.iter().map(|&c| c as f64).collect();
    let cluster_cap_steps = steps(&cap_values, &caps, "cluster cap", &mut flags);

    let mut radii = Vec::new();
    for &r in &spec.bath_radii {
        let mut p = point.clone();
        p.policy.r_bath = r;
        radii.push(simulate(&at(p)?, false)?.fit.t2());
    }
    let bath_radius_steps = steps(&spec.bath_radii, &radii, "bath radius", &mut flags);

    Ok(ConvergenceReport {
        field_mt: spec.field_mt,
        t2_by_order,
        order_steps,
        cluster_cap_steps,
        bath_radius_steps,
        degraded_fraction: full.result.degraded_fraction,
        flags,
    })
}

/// Bath modifications for isolating noise sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NitrogenOnly,
    BoronOnly,
    DropFirstShell,
}

/// `bath` with the spins removed by `variant`; order is preserved.
pub fn ablated_spins(bath: &[BathSpin], variant: Ablation) -> Result<Vec<BathSpin>> {
    let shell = first_shell(bath);
    let keep = |i: usize| {
        let el = bath[i].species.isotope.element();
        match variant {
            Ablation::NitrogenOnly => el == Element::N,
            Ablation::BoronOnly => el == Element::B,
            Ablation::DropFirstShell => !shell.contains(&i),
        }
    };
    let out: Vec<BathSpin> = (0..bath.len()).filter(|&i| keep(i)).map(|i| bath[i]).collect();
    let applicable = match variant {
        Ablation::DropFirstShell => !shell.is_empty(),
        _ => !out.is_empty() && out.len() < bath.len(),
    };
    if !applicable {
        return Err(Error::Validation(format!("ablation {variant:?} does not change this bath")));
    }
    Ok(out)
}

/// Curves of the ablated bath under the policy and grid of `base`.
pub fn ablate_bath(base: &Scenario, variant: Ablation) -> Result<PointOutcome> {
    let mut point = base.point.clone();
    if variant == Ablation::DropFirstShell {
        // the strongest remaining spins are no longer a strongly coupled core
        point.policy.core_conditioning = 0;
    }
    let scenario = Scenario::new(ablated_spins(&base.bath, variant)?, point)?;
    simulate(&scenario, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_labels() {
        let c = CentralSpinParams::default();
        let labels: Vec<&str> = [0.0, 9.9, 10.0, 50.0, 99.0, 100.0, 123.8, 179.0, 180.0, 349.0, 350.0, 3000.0]
            .iter()
            .map(|&b| Region::classify(b, &c).label())
            .collect();
        assert_eq!(
            labels,
            [
                "zero_field",
                "zero_field",
                "low_field",
                "low_field",
                "gslac",
                "gslac",
                "gslac",
                "gslac",
                "transition",
                "transition",
                "high_field",
                "high_field"
            ]
        );
    }

    #[test]
    fn repeated_setting_has_zero_delta() {
        let mut flags = Vec::new();
        let s = steps(&[5.0, 5.0], &[Some(0.2), Some(0.2)], "knob", &mut flags);
        assert_eq!(s[1].relative_change, Some(0.0));
        assert!(s[1].converged);
        assert!(flags.is_empty());
    }

    #[test]
    fn large_change_is_flagged() {
        let mut flags = Vec::new();
        let s = steps(&[1.0, 2.0], &[Some(0.2), Some(0.1)], "order", &mut flags);
        assert!(!s[1].converged);
        assert_eq!(flags.len(), 1);
    }

    #[test]
    fn validation_rejects_bad_points() {
        assert!(SweepSpec::new(SweepAxis::E, vec![-1.0]).validate().is_err());
        assert!(SweepSpec::new(SweepAxis::Polarization, vec![1.5]).validate().is_err());
        assert!(SweepSpec::new(SweepAxis::Bz, vec![f64::NAN]).validate().is_err());
        assert!(SweepSpec::new(SweepAxis::Bz, vec![]).validate().is_ok());
    }
}
