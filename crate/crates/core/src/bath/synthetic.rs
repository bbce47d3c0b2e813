//! Model hyperfine tensors for the boron vacancy.
//!
//! The first-neighbor nitrogens get a contact-dominated tensor with its
//! largest principal value along the bond. Every other site gets the
//! point-dipole field of the spin density, represented as three equal lobes
//! sitting on the dangling bonds between the vacancy and the first-neighbor
//! nitrogens.

use super::dataset::{HyperfineDataset, HyperfineEntry};
use super::lattice::LatticeSpec;
use crate::constants::{Element, Isotope, CONSTANTS, G_ELECTRON};
use crate::tensor::{norm, scale, sub, Tensor3, Vec3};
use crate::Result;
use serde::{Deserialize, Serialize};

/// Parameters of the model tensors, for ¹⁴N and ¹¹B reference nuclei.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticHyperfineModel {
    /// First-neighbor ¹⁴N principal value along the N–vacancy bond, MHz.
    pub bond_mhz: f64,
    /// First-neighbor ¹⁴N in-plane principal value perpendicular to the bond, MHz.
    pub tangential_mhz: f64,
    /// First-neighbor ¹⁴N A_zz, MHz.
    pub axial_mhz: f64,
    /// Distance of each spin-density lobe from its nitrogen, towards the vacancy, Å.
    pub lobe_offset_ang: f64,
}

impl Default for SyntheticHyperfineModel {
    fn default() -> Self {
        SyntheticHyperfineModel {
            bond_mhz: 90.0,
            tangential_mhz: 46.7,
            axial_mhz: 47.14,
            lobe_offset_ang: 0.45,
        }
    }
}

impl SyntheticHyperfineModel {
    pub const BORON_REFERENCE: Isotope = Isotope::B11;
    pub const NITROGEN_REFERENCE: Isotope = Isotope::N14;

    fn first_neighbors(lattice: &LatticeSpec) -> Vec<Vec3> {
        let bond = norm(lattice.bond_offset());
        lattice
            .with_radius(bond * 1.01)
            .sites()
            .into_iter()
            .filter(|s| s.element == Element::N && s.position[2].abs() < 1e-9)
            .map(|s| s.position)
            .collect()
    }

    /// Hyperfine tensor of a nucleus of `element` at `p`.
    pub fn tensor(&self, lattice: &LatticeSpec, element: Element, p: Vec3) -> Tensor3 {
        let neighbors = Self::first_neighbors(lattice);
        self.tensor_with(&neighbors, element, p)
    }

    fn tensor_with(&self, neighbors: &[Vec3], element: Element, p: Vec3) -> Tensor3 {
        if element == Element::N {
            if let Some(nb) = neighbors.iter().find(|q| norm(sub(**q, p)) < 1e-6) {
                let angle = nb[1].atan2(nb[0]);
                let frame = Tensor3::diag(self.bond_mhz, self.tangential_mhz, self.axial_mhz);
                return frame.rotated(&Tensor3::rotation_z(angle));
            }
        }
        let g_n = match element {
            Element::B => Self::BORON_REFERENCE.g_factor(),
            Element::N => Self::NITROGEN_REFERENCE.g_factor(),
        };
        let pref = CONSTANTS.electron_nuclear_dipolar * G_ELECTRON * g_n / neighbors.len() as f64;
        let mut a = Tensor3::ZERO;
        for nb in neighbors {
            let lobe = scale(*nb, 1.0 - self.lobe_offset_ang / norm(*nb));
            let r = sub(p, lobe);
            let d = norm(r);
            let n = scale(r, 1.0 / d);
            a = a + (Tensor3::outer(n, n).scaled(3.0) - Tensor3::IDENTITY).scaled(pref / d.powi(3));
        }
        a
    }

    /// Dataset covering every site of `lattice`, referenced to ¹¹B and ¹⁴N.
    pub fn dataset(&self, lattice: &LatticeSpec) -> Result<HyperfineDataset> {
        lattice.validate()?;
        let neighbors = Self::first_neighbors(lattice);
        let entries = lattice
            .sites()
            .into_iter()
            .map(|s| HyperfineEntry {
                position: s.position,
                element: s.element,
                tensor: self.tensor_with(&neighbors, s.element, s.position),
            })
            .collect();
        HyperfineDataset::new(entries, Self::BORON_REFERENCE, Self::NITROGEN_REFERENCE)
    }
}
