//! JSON run configuration and the named presets.

use crate::bath::{generate_bath, HyperfineDataset, IsotopeConfig, LatticeSpec, SyntheticHyperfineModel};
use crate::cce::ClusterPolicy;
use crate::constants::Isotope;
use crate::model::{BathSpin, CentralSpinParams, HyperfineMode};
use crate::sweep::{Ablation, ConvergenceSpec, PointSpec, Scenario, SweepAxis, SweepOutputs, SweepSpec, TimeGrid};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Hyperfine tensors read from a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub path: PathBuf,
    /// Isotopes the tensors were computed for.
    pub boron_reference: Isotope,
    pub nitrogen_reference: Isotope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub isotopes: IsotopeConfig,
    /// CSV dataset; the built-in model tensors are used when absent.
    #[serde(default)]
    pub hyperfine_dataset: Option<DatasetSource>,
    /// Settings of the base point: field, defect parameters, cluster policy,
    /// time grid.
    pub point: PointSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSpec>,
    #[serde(default)]
    pub ablations: Vec<Ablation>,
    /// Keep only this many spins, those with the largest hyperfine norm.
    /// Meant for oracle checks on small baths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_strongest: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Seed for natural-abundance isotope draws.
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("hbn-cce-output")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Schema-level checks that need no dataset. All problems are reported
    /// together, one per line.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |what: &str, r: Result<()>| {
            if let Err(e) = r {
                problems.push(format!("{what}: {e}"));
            }
        };
        check("lattice", self.lattice.validate());
        check("isotopes", self.isotopes.validate());
        check("point", self.point.validate());
        if let Some(s) = &self.sweep {
            check("sweep", s.validate());
        }
        if let Some(c) = &self.convergence {
            let mut r = Ok(());
            if c.max_order == 0 || c.max_order > crate::cce::MAX_ORDER {
                r = Err(Error::Validation(format!("max_order must be 1..={}", crate::cce::MAX_ORDER)));
            } else if c.bath_radii.len() == 1 || c.cluster_caps.len() == 1 {
                r = Err(Error::Validation("a varied knob needs at least two settings".into()));
            }
            check("convergence", r);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("\n")))
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring `output_dir`.
    pub fn sha256(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn dataset(&self) -> Result<HyperfineDataset> {
        match &self.hyperfine_dataset {
            Some(src) => HyperfineDataset::from_csv(&src.path, src.boron_reference, src.nitrogen_reference),
            None => SyntheticHyperfineModel::default().dataset(&self.lattice),
        }
    }

    pub fn bath(&self) -> Result<Vec<BathSpin>> {
        let bath = generate_bath(&self.lattice, &self.isotopes, &self.dataset()?, self.seed)?;
        Ok(match self.keep_strongest {
            Some(n) => {
                crate::cce::strongest_spins(&bath, f64::INFINITY, n).into_iter().map(|i| bath[i]).collect()
            }
            None => bath,
        })
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(self.bath()?, self.point.clone())
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 5] = ["table-1", "figure-2a", "figure-3a", "figure-4", "figure-5"];

/// Cluster policy for low fields, where the first-shell nitrogens are
/// conditioned on and pairs dominate. Third order is left out: triples with
/// two first-shell spins do not converge.
fn low_field_policy() -> ClusterPolicy {
    ClusterPolicy {
        max_order: 2,
        r_bath: 20.0,
        max_clusters_per_order: Some(5000),
        core_conditioning: 3,
        ..Default::default()
    }
}

fn high_field_policy() -> ClusterPolicy {
    ClusterPolicy { max_order: 2, r_bath: 20.0, max_clusters_per_order: None, ..Default::default() }
}

/// Fields from which the high-field policy is used, mT.
pub const HIGH_FIELD_FROM_MT: f64 = 180.0;

/// The cluster policy the presets use at `field_mt`.
pub fn default_policy(field_mt: f64) -> ClusterPolicy {
    if field_mt.abs() >= HIGH_FIELD_FROM_MT {
        high_field_policy()
    } else {
        low_field_policy()
    }
}

fn base(field_mt: f64, policy: ClusterPolicy) -> RunConfig {
    RunConfig {
        lattice: LatticeSpec::default().with_radius(20.0),
        isotopes: IsotopeConfig::default(),
        hyperfine_dataset: None,
        point: PointSpec {
            field_mt,
            central: CentralSpinParams::default(),
            mode: HyperfineMode::Full,
            policy,
            first_shell_polarization: 0.0,
            times: TimeGrid::Auto { points: 201 },
            r_pair: crate::bath::DEFAULT_R_PAIR,
            max_dim: crate::model::DEFAULT_MAX_DIM,
        },
        sweep: None,
        convergence: None,
        ablations: Vec::new(),
        keep_strongest: None,
        output_dir: default_output_dir(),
        seed: 0,
    }
}

/// Policy overrides giving every high-field point of `points` the high-field
/// policy.
fn overrides(points: &[f64]) -> Vec<crate::sweep::PolicyOverride> {
    points
        .iter()
        .filter(|&&b| b.abs() >= HIGH_FIELD_FROM_MT)
        .map(|&b| crate::sweep::PolicyOverride { point: b, policy: default_policy(b) })
        .collect()
}

/// The configuration behind a named figure or table.
pub fn preset(name: &str) -> Result<RunConfig> {
    let cfg = match name {
        "table-1" => {
            let points = vec![0.0, 8.0, 8.5, 8.7, 15.0, 20.0, 3000.0];
            let mut c = base(0.0, low_field_policy());
            c.sweep = Some(SweepSpec {
                axis: SweepAxis::Bz,
                policy_overrides: overrides(&points),
                points,
                outputs: SweepOutputs { t2: true, curves: true, spectra: false },
            });
            c
        }
        "figure-2a" => {
            let points = vec![
                1.0, 2.0, 5.0, 10.0, 20.0, 35.0, 50.0, 70.0, 100.0, 110.0, 115.0, 120.0, 123.8, 128.0, 135.0, 150.0, 180.0,
                220.0, 280.0, 350.0, 600.0, 1000.0, 2000.0, 3000.0,
            ];
            let mut c = base(0.0, low_field_policy());
            c.sweep = Some(SweepSpec {
                axis: SweepAxis::Bz,
                policy_overrides: overrides(&points),
                points,
                outputs: SweepOutputs { t2: true, curves: true, spectra: false },
            });
            c
        }
        "figure-3a" => {
            let mut c = base(0.0, low_field_policy());
            c.convergence = Some(ConvergenceSpec { field_mt: 0.0, max_order: 3, bath_radii: Vec::new(), cluster_caps: Vec::new() });
            c.ablations = vec![Ablation::NitrogenOnly, Ablation::BoronOnly, Ablation::DropFirstShell];
            c
        }
        "figure-4" => {
            let mut c = base(50.0, low_field_policy());
            c.sweep = Some(SweepSpec {
                axis: SweepAxis::Polarization,
                points: vec![0.0, 0.3, 0.62, 1.0],
                policy_overrides: Vec::new(),
                outputs: SweepOutputs { t2: true, curves: true, spectra: true },
            });
            c.ablations = vec![Ablation::BoronOnly, Ablation::NitrogenOnly];
            c
        }
        "figure-5" => {
            let points = vec![180.0, 200.0, 225.0, 250.0, 275.0, 300.0, 350.0, 500.0, 1000.0];
            let mut c = base(180.0, high_field_policy());
            c.sweep = Some(SweepSpec {
                axis: SweepAxis::Bz,
                policy_overrides: Vec::new(),
                points,
                outputs: SweepOutputs { t2: true, curves: true, spectra: false },
            });
            c
        }
        other => {
            return Err(Error::Validation(format!("unknown preset {other:?}; expected one of {}", PRESETS.join(", "))));
        }
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            c.validate().unwrap();
            let back = RunConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.sha256(), c.sha256());
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&preset("figure-4").unwrap().to_json()).unwrap();
        v["point"]["colour"] = serde_json::json!(1);
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = preset("table-1").unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.sha256(), b.sha256());
        b.seed = 7;
        assert_ne!(a.sha256(), b.sha256());
    }
}
