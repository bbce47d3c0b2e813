//! Physical constants and the nuclear species table.
//!
//! All energies in the crate are linear frequencies in MHz, fields in mT,
//! distances in Å and times in μs.

use serde::{Deserialize, Serialize};

/// Version tag of the constants table, recorded in run provenance.
pub const CONSTANTS_VERSION: &str = "codata2018-nuclear-v1";

/// Electron g-factor used by default for the defect spin.
pub const G_ELECTRON: f64 = 2.0023;

const PLANCK_J_S: f64 = 6.626_070_15e-34;
const BOHR_MAGNETON_J_T: f64 = 9.274_010_078_3e-24;
const NUCLEAR_MAGNETON_J_T: f64 = 5.050_783_746_1e-27;
const MU0_OVER_4PI: f64 = 1.000_000_000_55e-7;
const ANGSTROM3_M3: f64 = 1e-30;

/// Unit factors converting magnetic quantities into MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// μ_B / h in MHz per mT.
    pub mu_b: f64,
    /// μ_N / h in MHz per mT.
    pub mu_n: f64,
    /// (μ0/4π) μ_N² / h in MHz·Å³, multiplied by g₁g₂ for a nuclear pair.
    pub nuclear_dipolar: f64,
    /// (μ0/4π) μ_B μ_N / h in MHz·Å³, multiplied by g_e g_N for the
    /// point-dipole electron-nuclear coupling.
    pub electron_nuclear_dipolar: f64,
}

impl PhysicalConstants {
    pub const fn standard() -> Self {
        // MHz/mT = (J/T) / (J s) * 1e-3 T/mT * 1e-6 MHz/Hz
        PhysicalConstants {
            mu_b: BOHR_MAGNETON_J_T / PLANCK_J_S * 1e-9,
            mu_n: NUCLEAR_MAGNETON_J_T / PLANCK_J_S * 1e-9,
            nuclear_dipolar: MU0_OVER_4PI * NUCLEAR_MAGNETON_J_T * NUCLEAR_MAGNETON_J_T
                / PLANCK_J_S
                / ANGSTROM3_M3
                * 1e-6,
            electron_nuclear_dipolar: MU0_OVER_4PI * BOHR_MAGNETON_J_T * NUCLEAR_MAGNETON_J_T
                / PLANCK_J_S
                / ANGSTROM3_M3
                * 1e-6,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::standard()
    }
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants::standard();

/// Chemical element of a lattice site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    B,
    N,
}

impl Element {
    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::N => "N",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "B" | "b" => Some(Element::B),
            "N" | "n" => Some(Element::N),
            _ => None,
        }
    }
}

/// Spin-active isotopes of boron and nitrogen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Isotope {
    #[serde(rename = "10B")]
    B10,
    #[serde(rename = "11B")]
    B11,
    #[serde(rename = "14N")]
    N14,
    #[serde(rename = "15N")]
    N15,
}

impl Isotope {
    pub fn element(self) -> Element {
        match self {
            Isotope::B10 | Isotope::B11 => Element::B,
            Isotope::N14 | Isotope::N15 => Element::N,
        }
    }

    /// Twice the nuclear spin quantum number.
    pub fn twice_spin(self) -> u8 {
        match self {
            Isotope::B10 => 6,
            Isotope::B11 => 3,
            Isotope::N14 => 2,
            Isotope::N15 => 1,
        }
    }

    /// Nuclear g-factor.
    pub fn g_factor(self) -> f64 {
        match self {
            Isotope::B10 => 0.600_215,
            Isotope::B11 => 1.792_433,
            Isotope::N14 => 0.403_761,
            Isotope::N15 => -0.566_378,
        }
    }

    /// Default quadrupole coupling constant C_q in MHz, if the table has one.
    ///
    /// ¹¹B uses the bulk hBN value. ¹⁰B is scaled from it by the ratio of the
    /// nuclear quadrupole moments (84.59 mb / 40.59 mb). ¹⁴N has no default
    /// and must be supplied by the caller.
    pub fn default_quadrupole(self) -> Option<f64> {
        match self {
            Isotope::B11 => Some(3.72),
            Isotope::B10 => Some(3.72 * 84.59 / 40.59),
            Isotope::N14 => None,
            Isotope::N15 => Some(0.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Isotope::B10 => "10B",
            Isotope::B11 => "11B",
            Isotope::N14 => "14N",
            Isotope::N15 => "15N",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "10B" | "B10" => Some(Isotope::B10),
            "11B" | "B11" => Some(Isotope::B11),
            "14N" | "N14" => Some(Isotope::N14),
            "15N" | "N15" => Some(Isotope::N15),
            _ => None,
        }
    }
}

impl std::fmt::Display for Isotope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Natural abundance of ¹¹B among boron nuclei.
pub const NATURAL_B11_FRACTION: f64 = 0.801;
/// Natural abundance of ¹⁴N among nitrogen nuclei.
pub const NATURAL_N14_FRACTION: f64 = 0.996;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn electron_gyromagnetic_anchor() {
        let gamma = G_ELECTRON * CONSTANTS.mu_b;
        assert!((gamma - 28.02).abs() / 28.02 < 1e-3, "{gamma}");
    }

    #[test]
    fn nuclear_magneton_in_mhz_per_mt() {
        assert!((CONSTANTS.mu_n - 7.622_593e-3).abs() < 1e-8);
    }

    #[test]
    fn boron_to_nitrogen_g_ratio() {
        let r = Isotope::B11.g_factor() / Isotope::N15.g_factor().abs();
        assert!((r - 3.2).abs() < 0.05, "{r}");
    }

    #[test]
    fn dipolar_prefactors() {
        // (μ0/4π) μ_N² / h ≈ 3.85 kHz Å³
        assert!((CONSTANTS.nuclear_dipolar - 3.850e-3).abs() < 2e-6);
        // (μ0/4π) μ_B μ_N / h ≈ 7.07 MHz Å³
        assert!((CONSTANTS.electron_nuclear_dipolar - 7.069).abs() < 2e-3);
    }
}
