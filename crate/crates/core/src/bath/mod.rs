//! hBN nuclear-spin baths: lattice geometry, isotope assignment, hyperfine
//! dataset ingestion and nuclear dipolar couplings.

mod dataset;
mod lattice;
mod synthetic;

pub use dataset::{HyperfineDataset, HyperfineEntry, CSV_HEADER, IN_PLANE_ZERO_TOLERANCE, SITE_TOLERANCE};
pub use lattice::{DefectSite, LatticeSpec, Site, Stacking};
pub use synthetic::SyntheticHyperfineModel;

use crate::constants::{Element, Isotope, PhysicalConstants, CONSTANTS, NATURAL_B11_FRACTION, NATURAL_N14_FRACTION};
use crate::model::{BathSpin, PairCoupling, SpinSpecies};
use crate::tensor::{norm, sub, Tensor3};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Default cutoff for nuclear pair couplings, Å.
pub const DEFAULT_R_PAIR: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoronIsotope {
    #[serde(rename = "11B")]
    B11,
    #[serde(rename = "10B")]
    B10,
    #[serde(rename = "natural")]
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NitrogenIsotope {
    #[serde(rename = "15N")]
    N15,
    #[serde(rename = "14N")]
    N14,
    #[serde(rename = "natural")]
    Natural,
}

/// Isotopic composition of the crystal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsotopeConfig {
    pub boron: BoronIsotope,
    pub nitrogen: NitrogenIsotope,
    /// ¹⁴N quadrupole constant C_q, MHz. Required whenever ¹⁴N can occur.
    #[serde(default)]
    pub n14_quadrupole_mhz: Option<f64>,
}

impl Default for IsotopeConfig {
    fn default() -> Self {
        IsotopeConfig {
            boron: BoronIsotope::B11,
            nitrogen: NitrogenIsotope::N15,
            n14_quadrupole_mhz: None,
        }
    }
}

impl IsotopeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nitrogen != NitrogenIsotope::N15 && self.n14_quadrupole_mhz.is_none() {
            return Err(Error::Validation(
                "14N can occur in this bath: isotopes.n14_quadrupole_mhz must be given".into(),
            ));
        }
        if let Some(c) = self.n14_quadrupole_mhz {
            if !c.is_finite() {
                return Err(Error::Validation("n14_quadrupole_mhz must be finite".into()));
            }
        }
        Ok(())
    }

    fn species(&self, isotope: Isotope) -> Result<SpinSpecies> {
        match isotope {
            Isotope::N14 => SpinSpecies::new(
                isotope,
                self.n14_quadrupole_mhz
                    .ok_or_else(|| Error::Validation("missing n14_quadrupole_mhz".into()))?,
            ),
            other => SpinSpecies::from_table(other),
        }
    }
}

/// Builds the bath for `lattice`, sorted by descending hyperfine Frobenius
/// norm (ties keep lattice order).
///
/// Natural-abundance draws consume the stream seeded by `seed` in lattice
/// order, so identical inputs give a bit-identical bath.
pub fn generate_bath(lattice: &LatticeSpec, isotopes: &IsotopeConfig, dataset: &HyperfineDataset, seed: u64) -> Result<Vec<BathSpin>> {
    lattice.validate()?;
    isotopes.validate()?;
    let sites = lattice.sites();
    let mut missing = Vec::new();
    let mut found = Vec::with_capacity(sites.len());
    for s in &sites {
        match dataset.lookup(s) {
            Some(e) => found.push(*e),
            None => missing.push(s.describe()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingHyperfine { sites: missing });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bath = Vec::with_capacity(sites.len());
    for (site, entry) in sites.iter().zip(&found) {
        let isotope = match site.element {
            Element::B => match isotopes.boron {
                BoronIsotope::B11 => Isotope::B11,
                BoronIsotope::B10 => Isotope::B10,
                BoronIsotope::Natural => {
                    if rng.gen::<f64>() < NATURAL_B11_FRACTION {
                        Isotope::B11
                    } else {
                        Isotope::B10
                    }
                }
            },
            Element::N => match isotopes.nitrogen {
                NitrogenIsotope::N15 => Isotope::N15,
                NitrogenIsotope::N14 => Isotope::N14,
                NitrogenIsotope::Natural => {
                    if rng.gen::<f64>() < NATURAL_N14_FRACTION {
                        Isotope::N14
                    } else {
                        Isotope::N15
                    }
                }
            },
        };
        let species = isotopes.species(isotope)?;
        let reference = dataset.reference(site.element);
        let a = entry.tensor.scaled(isotope.g_factor() / reference.g_factor());
        bath.push(BathSpin::new(site.position, species, a));
    }
    bath.sort_by(|x, y| y.hyperfine.frobenius().total_cmp(&x.hyperfine.frobenius()));
    Ok(bath)
}

/// Point-dipole coupling J between two nuclei (H ∋ I₁ J I₂), MHz:
/// J_ab = k g₁ g₂ / d³ (δ_ab − 3 n_a n_b).
pub fn dipolar_tensor(s1: &BathSpin, s2: &BathSpin) -> Result<Tensor3> {
    dipolar_tensor_with(s1, s2, &CONSTANTS)
}

pub(crate) fn dipolar_tensor_with(s1: &BathSpin, s2: &BathSpin, k: &PhysicalConstants) -> Result<Tensor3> {
    let r = sub(s2.position, s1.position);
    let d = norm(r);
    if d <= 0.1 {
        return Err(Error::Validation(format!("nuclei {d:.3} Å apart are treated as coincident")));
    }
    let n = [r[0] / d, r[1] / d, r[2] / d];
    let pref = k.nuclear_dipolar * s1.species.g_n * s2.species.g_n / d.powi(3);
    Ok((Tensor3::IDENTITY - Tensor3::outer(n, n).scaled(3.0)).scaled(pref))
}

/// Dipolar couplings of all pairs closer than `r_pair`, with `i < j`
/// indexing into `bath`.
pub fn pair_couplings(bath: &[BathSpin], r_pair: f64) -> Result<Vec<PairCoupling>> {
    let mut out = Vec::new();
    for i in 0..bath.len() {
        for j in i + 1..bath.len() {
            if norm(sub(bath[i].position, bath[j].position)) <= r_pair {
                out.push(PairCoupling { i, j, tensor: dipolar_tensor(&bath[i], &bath[j])? });
            }
        }
    }
    Ok(out)
}

/// The first `count` hyperfine Frobenius norms as `(rank, norm)`, rank from 1.
pub fn hyperfine_shell_profile(bath: &[BathSpin], count: usize) -> Vec<(usize, f64)> {
    let mut norms: Vec<f64> = bath.iter().map(|s| s.hyperfine.frobenius()).collect();
    norms.sort_by(|a, b| b.total_cmp(a));
    norms.into_iter().take(count).enumerate().map(|(k, v)| (k + 1, v)).collect()
}

/// A group of spins with equal element and equal hyperfine norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shell {
    pub element: Element,
    pub norm_mhz: f64,
    pub members: Vec<usize>,
}

/// Groups spins into symmetry shells by element and hyperfine norm
/// (relative tolerance `rel_tol`), strongest first.
pub fn hyperfine_shells(bath: &[BathSpin], rel_tol: f64) -> Vec<Shell> {
    let mut order: Vec<usize> = (0..bath.len()).collect();
    order.sort_by(|&a, &b| bath[b].hyperfine.frobenius().total_cmp(&bath[a].hyperfine.frobenius()));
    let mut shells: Vec<Shell> = Vec::new();
    for i in order {
        let n = bath[i].hyperfine.frobenius();
        let el = bath[i].species.isotope.element();
        match shells
            .iter_mut()
            .find(|s| s.element == el && (s.norm_mhz - n).abs() <= rel_tol * s.norm_mhz.max(1e-12))
        {
            Some(s) => s.members.push(i),
            None => shells.push(Shell { element: el, norm_mhz: n, members: vec![i] }),
        }
    }
    shells
}

/// Indices of the three first-neighbor nitrogens (the nitrogens closest to
/// the vacancy).
pub fn first_neighbor_nitrogens(bath: &[BathSpin]) -> Vec<usize> {
    let mut n: Vec<usize> = (0..bath.len()).filter(|&i| bath[i].species.isotope.element() == Element::N).collect();
    n.sort_by(|&a, &b| norm(bath[a].position).total_cmp(&norm(bath[b].position)).then(a.cmp(&b)));
    n.truncate(3);
    n.sort_unstable();
    n
}

/// Bath export for reproducing a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSnapshot {
    pub lattice: LatticeSpec,
    pub isotopes: IsotopeConfig,
    pub seed: u64,
    pub spins: Vec<BathSpin>,
}

impl BathSnapshot {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let snap: BathSnapshot = serde_json::from_reader(std::io::BufReader::new(f))?;
        for s in &snap.spins {
            s.validate()?;
        }
        Ok(snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spin_at(p: [f64; 3]) -> BathSpin {
        BathSpin::new(p, SpinSpecies::b11(), Tensor3::ZERO)
    }

    #[test]
    fn dipolar_along_z_is_axial() {
        let j = dipolar_tensor(&spin_at([0.0; 3]), &spin_at([0.0, 0.0, 2.5])).unwrap();
        assert!((j[(2, 2)] + 2.0 * j[(0, 0)]).abs() < 1e-15);
        assert_eq!(j[(0, 0)], j[(1, 1)]);
        assert_eq!(j[(0, 1)], 0.0);
        assert!(j.is_symmetric(0.0));
    }

    #[test]
    fn dipolar_in_plane_neighbors_by_hand() {
        // two ¹¹B at d = a along x: J_zz = k g² / a³
        let a = 2.504;
        let j = dipolar_tensor(&spin_at([0.0; 3]), &spin_at([a, 0.0, 0.0])).unwrap();
        let g = 1.792_433f64;
        let hand = 3.850_1e-3 * g * g / (a * a * a);
        let direct = CONSTANTS.nuclear_dipolar * g * g / (a * a * a);
        assert!((j[(2, 2)] - direct).abs() < 1e-10);
        assert!((j[(2, 2)] - hand).abs() / hand < 1e-3);
        assert!((j[(0, 0)] + 2.0 * direct).abs() < 1e-10);
    }

    #[test]
    fn coincident_nuclei_are_rejected() {
        assert!(dipolar_tensor(&spin_at([0.0; 3]), &spin_at([0.05, 0.0, 0.0])).is_err());
    }

    #[test]
    fn profile_of_empty_request() {
        assert!(hyperfine_shell_profile(&[spin_at([1.0, 0.0, 0.0])], 0).is_empty());
    }
}
