//! Spin-system value types and assembly of the cluster Hamiltonian
//!
//! H = D(S_z² − 2/3) + E/2 (S₊² + S₋²) + g_e μ_B B·S
//!   − Σ_i g_N μ_N B·I_i + Σ_i I_i Q_i I_i + Σ_{i<j} I_i J_ij I_j + Σ_i S A_i I_i
//!
//! for the S = 1 defect spin and an arbitrary subset of bath nuclei. The
//! defect spin is always the most significant tensor factor and keeps all
//! three `m_S` levels.

use crate::constants::{Isotope, PhysicalConstants, CONSTANTS, G_ELECTRON};
use crate::linalg::{self, ONE, ZERO};
use crate::spin::SpinMatrices;
use crate::tensor::{Tensor3, Vec3};
use crate::{Error, Result};
use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

/// Default Hilbert-space cap for a single cluster.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Parameters of the S = 1 defect spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentralSpinParams {
    /// Axial zero-field splitting in MHz.
    pub d_mhz: f64,
    /// Transverse zero-field splitting in MHz, stored as a magnitude.
    pub e_mhz: f64,
    pub g_e: f64,
    /// `(first, second)` qubit levels; the coherence is `⟨second|ρ_e|first⟩`.
    pub qubit_levels: (i8, i8),
}

impl Default for CentralSpinParams {
    fn default() -> Self {
        CentralSpinParams {
            d_mhz: 3470.0,
            e_mhz: 50.0,
            g_e: G_ELECTRON,
            qubit_levels: (0, -1),
        }
    }
}

impl CentralSpinParams {
    /// Only S = 1 defects are modelled.
    pub const SPIN_TWICE: u8 = 2;

    pub fn with_e(mut self, e_mhz: f64) -> Self {
        self.e_mhz = e_mhz;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.qubit_levels;
        let ok = |m: i8| (-1..=1).contains(&m);
        if !ok(a) || !ok(b) || a == b {
            return Err(Error::Validation(format!(
                "qubit levels must be two distinct values from {{-1, 0, 1}}, got ({a}, {b})"
            )));
        }
        if !self.d_mhz.is_finite() || !self.e_mhz.is_finite() || !self.g_e.is_finite() {
            return Err(Error::Validation("central spin parameters must be finite".into()));
        }
        if self.e_mhz < 0.0 {
            return Err(Error::Validation(format!(
                "E is a magnitude and must be >= 0, got {}",
                self.e_mhz
            )));
        }
        Ok(())
    }

    /// Electron gyromagnetic factor g_e μ_B in MHz/mT.
    pub fn gamma_e(&self) -> f64 {
        self.g_e * CONSTANTS.mu_b
    }
}

/// Nuclear species: spin quantum number, g-factor and quadrupole constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSpecies {
    pub isotope: Isotope,
    pub twice_spin: u8,
    pub g_n: f64,
    /// Quadrupole coupling constant C_q in MHz (zero for I = 1/2).
    pub c_q_mhz: f64,
}

impl SpinSpecies {
    /// Species from the constants table. ¹⁴N needs an explicit C_q, see
    /// [`SpinSpecies::n14`].
    pub fn from_table(isotope: Isotope) -> Result<Self> {
        let c_q = isotope.default_quadrupole().ok_or_else(|| {
            Error::Validation(format!("{isotope} requires an explicit quadrupole constant"))
        })?;
        SpinSpecies::new(isotope, c_q)
    }

    pub fn new(isotope: Isotope, c_q_mhz: f64) -> Result<Self> {
        let s = SpinSpecies {
            isotope,
            twice_spin: isotope.twice_spin(),
            g_n: isotope.g_factor(),
            c_q_mhz,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn b11() -> Self {
        SpinSpecies::from_table(Isotope::B11).expect("table species")
    }

    pub fn b10() -> Self {
        SpinSpecies::from_table(Isotope::B10).expect("table species")
    }

    pub fn n15() -> Self {
        SpinSpecies::from_table(Isotope::N15).expect("table species")
    }

    pub fn n14(c_q_mhz: f64) -> Self {
        SpinSpecies::new(Isotope::N14, c_q_mhz).expect("finite quadrupole")
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.twice_spin, 1 | 2 | 3 | 6) {
            return Err(Error::Validation(format!(
                "unsupported nuclear spin 2I = {}",
                self.twice_spin
            )));
        }
        if !self.c_q_mhz.is_finite() || !self.g_n.is_finite() {
            return Err(Error::Validation("species constants must be finite".into()));
        }
        if self.twice_spin == 1 && self.c_q_mhz != 0.0 {
            return Err(Error::Validation(
                "spin-1/2 nuclei have no quadrupole coupling".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.twice_spin as usize + 1
    }

    pub fn spin(&self) -> f64 {
        self.twice_spin as f64 / 2.0
    }

    /// Axially symmetric quadrupole tensor with its principal axis along c:
    /// I·Q·I = C_q / (4I(2I−1)) [3I_z² − I(I+1)].
    pub fn quadrupole_tensor(&self) -> Tensor3 {
        if self.twice_spin < 2 || self.c_q_mhz == 0.0 {
            return Tensor3::ZERO;
        }
        let i = self.spin();
        let pref = self.c_q_mhz / (4.0 * i * (2.0 * i - 1.0));
        Tensor3::diag(-pref, -pref, 2.0 * pref)
    }
}

/// One nuclear spin of the bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpin {
    /// Position relative to the vacancy, Å.
    pub position: Vec3,
    pub species: SpinSpecies,
    /// Hyperfine tensor A in MHz (H ∋ S·A·I).
    pub hyperfine: Tensor3,
    /// Quadrupole tensor Q in MHz (H ∋ I·Q·I), symmetric and traceless.
    pub quadrupole: Tensor3,
}

impl BathSpin {
    pub fn new(position: Vec3, species: SpinSpecies, hyperfine: Tensor3) -> Self {
        BathSpin {
            position,
            species,
            hyperfine,
            quadrupole: species.quadrupole_tensor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.species.validate()?;
        let q = &self.quadrupole;
        if !q.is_symmetric(1e-9) || q.trace().abs() > 1e-9 {
            return Err(Error::Validation(
                "quadrupole tensor must be symmetric and traceless".into(),
            ));
        }
        if self.position.iter().chain(self.hyperfine.0.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("bath spin has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Nuclear dipolar coupling between two bath spins (H ∋ I_i J I_j).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCoupling {
    pub i: usize,
    pub j: usize,
    pub tensor: Tensor3,
}

/// Static magnetic field in mT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MagneticField(pub Vec3);

impl MagneticField {
    /// Field parallel to the c axis of the defect.
    pub fn along_c(b_z_mt: f64) -> Self {
        MagneticField([0.0, 0.0, b_z_mt])
    }

    pub fn b_z(&self) -> f64 {
        self.0[2]
    }

    pub fn is_on_axis(&self) -> bool {
        self.0[0] == 0.0 && self.0[1] == 0.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        MagneticField(crate::tensor::scale(self.0, s))
    }
}

/// Which hyperfine components enter the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HyperfineMode {
    /// The complete S·A·I coupling, including electron spin-flip terms.
    #[default]
    Full,
    /// Only S_z (A_zx I_x + A_zy I_y + A_zz I_z).
    PseudoSecular,
}

/// Nuclear Zeeman splitting |g_N μ_N B| between adjacent sublevels, MHz.
pub fn zeeman_splitting(species: &SpinSpecies, field: &MagneticField) -> f64 {
    (species.g_n * CONSTANTS.mu_n * crate::tensor::norm(field.0)).abs()
}

/// Field along c where the m_S = 0 and m_S = −1 levels cross, D / (g_e μ_B), mT.
pub fn gslac_field(central: &CentralSpinParams) -> f64 {
    central.d_mhz / central.gamma_e()
}

/// Assembled Hamiltonian of the defect spin plus a set of nuclei.
#[derive(Debug, Clone)]
pub struct ClusterHamiltonian {
    pub matrix: Mat<c64>,
    /// Hilbert-space dimension of each nucleus, in cluster order.
    pub nuclear_dims: Vec<usize>,
}

impl ClusterHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn bath_dim(&self) -> usize {
        self.nuclear_dims.iter().product()
    }
}

/// Hilbert-space dimension of the defect spin plus `spins`.
pub fn cluster_dimension<'a>(spins: impl IntoIterator<Item = &'a BathSpin>) -> usize {
    spins.into_iter().fold(3usize, |d, s| d.saturating_mul(s.species.dim()))
}

struct Layout {
    dims: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(dims: Vec<usize>) -> Self {
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        let total = dims.iter().product();
        Layout { dims, strides, total }
    }

    fn local(&self, index: usize, site: usize) -> usize {
        (index / self.strides[site]) % self.dims[site]
    }

    /// Adds a single-site operator.
    fn add_one(&self, h: &mut Mat<c64>, site: usize, op: MatRef<'_, c64>) {
        let (d, st) = (self.dims[site], self.strides[site]);
        for col in 0..self.total {
            let l = self.local(col, site);
            let base = col - l * st;
            for r in 0..d {
                let v = op[(r, l)];
                if v != ZERO {
                    h[(base + r * st, col)] += v;
                }
            }
        }
    }

    /// Adds an operator acting on two distinct sites, given as a
    /// (d1·d2)×(d1·d2) matrix with `s1` the more significant factor.
    fn add_two(&self, h: &mut Mat<c64>, s1: usize, s2: usize, op: MatRef<'_, c64>) {
        let (d1, st1) = (self.dims[s1], self.strides[s1]);
        let (d2, st2) = (self.dims[s2], self.strides[s2]);
        for col in 0..self.total {
            let l1 = self.local(col, s1);
            let l2 = self.local(col, s2);
            let base = col - l1 * st1 - l2 * st2;
            let c = l1 * d2 + l2;
            for r1 in 0..d1 {
                for r2 in 0..d2 {
                    let v = op[(r1 * d2 + r2, c)];
                    if v != ZERO {
                        h[(base + r1 * st1 + r2 * st2, col)] += v;
                    }
                }
            }
        }
    }
}

/// Σ_ab T_ab A_a ⊗ B_b as a dense two-site operator.
fn bilinear(t: &Tensor3, a: &SpinMatrices, b: &SpinMatrices) -> Mat<c64> {
    let (da, db) = (a.dim(), b.dim());
    let mut out = Mat::<c64>::zeros(da * db, da * db);
    for i in 0..3 {
        for j in 0..3 {
            let coeff = t[(i, j)];
            if coeff == 0.0 {
                continue;
            }
            let k = linalg::kron(a.component(i).as_ref(), b.component(j).as_ref());
            out += &k * faer::Scale(c64::new(coeff, 0.0));
        }
    }
    out
}

/// Σ_ab T_ab A_a A_b on one site.
fn quadratic(t: &Tensor3, a: &SpinMatrices) -> Mat<c64> {
    let d = a.dim();
    let mut out = Mat::<c64>::zeros(d, d);
    for i in 0..3 {
        for j in 0..3 {
            let coeff = t[(i, j)];
            if coeff == 0.0 {
                continue;
            }
            let p = a.component(i) * a.component(j);
            out += &p * faer::Scale(c64::new(coeff, 0.0));
        }
    }
    out
}

/// 3×3 Hamiltonian of the isolated defect spin in the `m_S = +1, 0, −1` basis.
pub fn electron_hamiltonian(central: &CentralSpinParams, field: &MagneticField) -> Mat<c64> {
    let s = SpinMatrices::new(CentralSpinParams::SPIN_TWICE);
    let gamma = central.gamma_e();
    let sz2 = &s.z * &s.z;
    let sp2 = &s.plus * &s.plus;
    let sm2 = &s.minus * &s.minus;
    Mat::from_fn(3, 3, |i, j| {
        let mut v = central.d_mhz * sz2[(i, j)] + 0.5 * central.e_mhz * (sp2[(i, j)] + sm2[(i, j)]);
        if i == j {
            v -= c64::new(central.d_mhz * 2.0 / 3.0, 0.0);
        }
        for a in 0..3 {
            v += s.component(a)[(i, j)] * (gamma * field.0[a]);
        }
        v
    })
}

/// Assembles the cluster Hamiltonian for `spins` (in the given order) and the
/// pair couplings among them. Pair indices refer to positions in `spins`.
pub fn build_cluster_hamiltonian(
    central: &CentralSpinParams,
    spins: &[BathSpin],
    pairs: &[PairCoupling],
    field: &MagneticField,
    mode: HyperfineMode,
    max_dim: usize,
) -> Result<ClusterHamiltonian> {
    build_with_constants(central, spins, pairs, field, mode, max_dim, None, &CONSTANTS)
}

/// Static fields from nuclei outside a cluster whose states are fixed:
/// H gains S·h_e + Σ_i I_i·h_i (MHz).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeanField {
    pub electron: Vec3,
    /// One entry per cluster spin.
    pub nuclear: Vec<Vec3>,
}

/// [`build_cluster_hamiltonian`] plus the static terms of `mean_field`.
#[allow(clippy::too_many_arguments)]
pub fn build_cluster_hamiltonian_with_mean_field(
    central: &CentralSpinParams,
    spins: &[BathSpin],
    pairs: &[PairCoupling],
    field: &MagneticField,
    mode: HyperfineMode,
    max_dim: usize,
    mean_field: &MeanField,
) -> Result<ClusterHamiltonian> {
    if mean_field.nuclear.len() != spins.len() {
        return Err(Error::Validation(format!(
            "mean field has {} nuclear entries for {} spins",
            mean_field.nuclear.len(),
            spins.len()
        )));
    }
    build_with_constants(central, spins, pairs, field, mode, max_dim, Some(mean_field), &CONSTANTS)
}

pub(crate) fn build_with_constants(
    central: &CentralSpinParams,
    spins: &[BathSpin],
    pairs: &[PairCoupling],
    field: &MagneticField,
    mode: HyperfineMode,
    max_dim: usize,
    mean_field: Option<&MeanField>,
    constants: &PhysicalConstants,
) -> Result<ClusterHamiltonian> {
    let dim = cluster_dimension(spins);
    if dim > max_dim {
        return Err(Error::ClusterTooLarge { dim, cap: max_dim });
    }
    for p in pairs {
        if p.i >= spins.len() || p.j >= spins.len() || p.i == p.j {
            return Err(Error::Validation(format!(
                "pair ({}, {}) does not reference two distinct spins of a {}-spin cluster",
                p.i,
                p.j,
                spins.len()
            )));
        }
    }

    let mut dims = vec![3usize];
    dims.extend(spins.iter().map(|s| s.species.dim()));
    let layout = Layout::new(dims);
    let mut h = Mat::<c64>::zeros(dim, dim);

    let electron = SpinMatrices::new(CentralSpinParams::SPIN_TWICE);
    let mut he = electron_hamiltonian(central, field);
    if let Some(mf) = mean_field {
        for a in 0..3 {
            he += electron.component(a) * faer::Scale(c64::new(mf.electron[a], 0.0));
        }
    }
    layout.add_one(&mut h, 0, he.as_ref());

    let mut nuclear_ops: Vec<SpinMatrices> = Vec::with_capacity(spins.len());
    for (k, spin) in spins.iter().enumerate() {
        let site = k + 1;
        let ops = SpinMatrices::new(spin.species.twice_spin);
        let gamma = spin.species.g_n * constants.mu_n;
        let mut local = quadratic(&spin.quadrupole, &ops);
        let bias = mean_field.map_or([0.0; 3], |mf| mf.nuclear[k]);
        for a in 0..3 {
            let coeff = -gamma * field.0[a] + bias[a];
            if coeff != 0.0 {
                local += ops.component(a) * faer::Scale(c64::new(coeff, 0.0));
            }
        }
        layout.add_one(&mut h, site, local.as_ref());

        let a = match mode {
            HyperfineMode::Full => spin.hyperfine,
            HyperfineMode::PseudoSecular => {
                let mut t = Tensor3::ZERO;
                t.0[2] = spin.hyperfine.0[2];
                t
            }
        };
        layout.add_two(&mut h, 0, site, bilinear(&a, &electron, &ops).as_ref());
        nuclear_ops.push(ops);
    }

    for p in pairs {
        let (i, j, t) = if p.i < p.j {
            (p.i, p.j, p.tensor)
        } else {
            (p.j, p.i, p.tensor.transpose())
        };
        let op = bilinear(&t, &nuclear_ops[i], &nuclear_ops[j]);
        layout.add_two(&mut h, i + 1, j + 1, op.as_ref());
    }

    Ok(ClusterHamiltonian {
        matrix: h,
        nuclear_dims: spins.iter().map(|s| s.species.dim()).collect(),
    })
}

/// Eigenstates of the isolated defect spin that serve as the qubit.
///
/// The two qubit states are the eigenvectors adiabatically connected to the
/// requested `m_S` levels; the remaining eigenvector is the spectator level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitFrame {
    pub first: [c64; 3],
    pub second: [c64; 3],
    pub spectator: [c64; 3],
    pub energies: [f64; 3],
}

fn level_index(m: i8) -> usize {
    (1 - m) as usize
}

impl QubitFrame {
    pub fn new(central: &CentralSpinParams, field: &MagneticField) -> Result<Self> {
        central.validate()?;
        let (vecs, energies) = if field.is_on_axis() {
            on_axis_eigenbasis(central, field.b_z())
        } else {
            numeric_eigenbasis(central, field)?
        };
        let pick = |m: i8, exclude: Option<usize>| -> usize {
            let li = level_index(m);
            let mut best = usize::MAX;
            let mut best_w = -1.0;
            for k in 0..3 {
                if Some(k) == exclude {
                    continue;
                }
                let w = vecs[k][li].norm_sqr();
                let better = if (w - best_w).abs() < 1e-9 && best != usize::MAX {
                    // tie inside the ±1 doublet: the m = -1 branch is the lower
                    // one for a positive Zeeman term
                    let lower = energies[k] < energies[best];
                    let up = central.gamma_e() * field.b_z() >= 0.0;
                    if m < 0 { lower == up } else { lower != up }
                } else {
                    w > best_w
                };
                if better {
                    best = k;
                    best_w = w;
                }
            }
            best
        };
        let (m1, m2) = central.qubit_levels;
        let i1 = pick(m1, None);
        let i2 = pick(m2, Some(i1));
        let i3 = (0..3).find(|k| *k != i1 && *k != i2).unwrap();
        Ok(QubitFrame {
            first: vecs[i1],
            second: vecs[i2],
            spectator: vecs[i3],
            energies: [energies[i1], energies[i2], energies[i3]],
        })
    }

    /// |first⟩⟨second| + |second⟩⟨first| + |spectator⟩⟨spectator|, an ideal
    /// π pulse that exchanges the qubit states.
    pub fn pi_pulse(&self) -> [[c64; 3]; 3] {
        let mut p = [[ZERO; 3]; 3];
        for (i, row) in p.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.first[i] * self.second[j].conj()
                    + self.second[i] * self.first[j].conj()
                    + self.spectator[i] * self.spectator[j].conj();
            }
        }
        p
    }

    /// (|first⟩ + |second⟩)/√2
    pub fn plus_state(&self) -> [c64; 3] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        [
            (self.first[0] + self.second[0]) * s,
            (self.first[1] + self.second[1]) * s,
            (self.first[2] + self.second[2]) * s,
        ]
    }
}

/// Closed-form eigenbasis for B ∥ c; m_S = 0 decouples and the ±1 doublet is
/// a 2×2 problem. Vectors are returned as `[+1, 0, −1]` amplitudes.
fn on_axis_eigenbasis(central: &CentralSpinParams, b_z: f64) -> ([[c64; 3]; 3], [f64; 3]) {
    let z = central.gamma_e() * b_z;
    let d3 = central.d_mhz / 3.0;
    let e = central.e_mhz;
    let zero = [ZERO, ONE, ZERO];
    let e0 = -2.0 * central.d_mhz / 3.0;
    let r = (z * z + e * e).sqrt();
    let (upper, lower) = if e == 0.0 {
        if z >= 0.0 {
            ([ONE, ZERO, ZERO], [ZERO, ZERO, ONE])
        } else {
            ([ZERO, ZERO, ONE], [ONE, ZERO, ZERO])
        }
    } else {
        // [[d3 + z, e], [e, d3 - z]]: eigenvector for d3 + r is (cos θ, sin θ)
        let theta = 0.5 * e.atan2(z);
        let (s, c) = theta.sin_cos();
        (
            [c64::new(c, 0.0), ZERO, c64::new(s, 0.0)],
            [c64::new(-s, 0.0), ZERO, c64::new(c, 0.0)],
        )
    };
    ([zero, upper, lower], [e0, d3 + r, d3 - r])
}

fn numeric_eigenbasis(
    central: &CentralSpinParams,
    field: &MagneticField,
) -> Result<([[c64; 3]; 3], [f64; 3])> {
    let h = electron_hamiltonian(central, field);
    let e = linalg::eigh(h.as_ref())?;
    let mut vecs = [[ZERO; 3]; 3];
    for (k, v) in vecs.iter_mut().enumerate() {
        for i in 0..3 {
            v[i] = e.vectors[(i, k)];
        }
    }
    Ok((vecs, [e.values[0], e.values[1], e.values[2]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigh, hermiticity_defect, trace};

    fn n15_spin(a: Tensor3) -> BathSpin {
        BathSpin::new([1.0, 0.5, 1.7], SpinSpecies::n15(), a)
    }

    #[test]
    fn central_spectrum_zero_field() {
        let c = CentralSpinParams { e_mhz: 0.0, ..Default::default() };
        let h = build_cluster_hamiltonian(&c, &[], &[], &MagneticField::along_c(0.0), HyperfineMode::Full, 4096)
            .unwrap();
        let e = eigh(h.matrix.as_ref()).unwrap();
        assert!((e.values[0] + 2313.333_333).abs() < 1e-3);
        assert!((e.values[1] - 1156.666_667).abs() < 1e-3);
        assert!((e.values[2] - 1156.666_667).abs() < 1e-3);
    }

    #[test]
    fn transverse_zfs_splits_doublet_by_2e() {
        let c = CentralSpinParams::default();
        let h = electron_hamiltonian(&c, &MagneticField::along_c(0.0));
        let e = eigh(h.as_ref()).unwrap();
        assert!((e.values[2] - e.values[1] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn pseudo_secular_differs_only_in_transverse_electron_blocks() {
        let a = Tensor3::from_row_major([30.0, 12.0, 0.0, 12.0, 30.0, 0.0, 0.0, 0.0, 20.0]);
        let spins = [n15_spin(a)];
        let c = CentralSpinParams { e_mhz: 0.0, ..Default::default() };
        let f = MagneticField::along_c(20.0);
        let full = build_cluster_hamiltonian(&c, &spins, &[], &f, HyperfineMode::Full, 4096).unwrap();
        let ps = build_cluster_hamiltonian(&c, &spins, &[], &f, HyperfineMode::PseudoSecular, 4096).unwrap();
        // difference = Σ_{a∈{x,y}} A_ab S_a ⊗ I_b
        let s = SpinMatrices::new(2);
        let i = SpinMatrices::new(1);
        let mut expected = Mat::<c64>::zeros(6, 6);
        for ax in 0..2 {
            for b in 0..3 {
                expected += linalg::kron(s.component(ax).as_ref(), i.component(b).as_ref())
                    * faer::Scale(c64::new(a[(ax, b)], 0.0));
            }
        }
        let diff = &full.matrix - &ps.matrix;
        for r in 0..6 {
            for col in 0..6 {
                assert!((diff[(r, col)] - expected[(r, col)]).norm() < 1e-12);
            }
        }
        // pseudo-secular commutes with S_z ⊗ 1
        let sz = linalg::kron(s.z.as_ref(), linalg::identity(2).as_ref());
        let comm = &ps.matrix * &sz - &sz * &ps.matrix;
        assert!(comm.norm_max() < 1e-12);
        assert!(hermiticity_defect(full.matrix.as_ref()) < 1e-12);
    }

    #[test]
    fn hamiltonian_is_traceless() {
        let a = Tensor3::from_row_major([3.0, 1.0, 0.4, 1.0, 2.0, 0.2, 0.4, 0.2, 5.0]);
        let spins = [
            BathSpin::new([2.0, 0.0, 3.3], SpinSpecies::b11(), a),
            n15_spin(a.scaled(0.3)),
        ];
        let pairs = [PairCoupling { i: 0, j: 1, tensor: Tensor3::diag(0.001, 0.001, -0.002) }];
        let h = build_cluster_hamiltonian(
            &CentralSpinParams::default(),
            &spins,
            &pairs,
            &MagneticField([3.0, -1.0, 40.0]),
            HyperfineMode::Full,
            4096,
        )
        .unwrap();
        assert_eq!(h.dim(), 3 * 4 * 2);
        assert!(trace(h.matrix.as_ref()).norm() < 1e-9);
        assert!(hermiticity_defect(h.matrix.as_ref()) < 1e-12);
    }

    #[test]
    fn dimension_cap_and_pair_validation() {
        let spins = vec![BathSpin::new([1.0, 0.0, 0.0], SpinSpecies::b11(), Tensor3::ZERO); 6];
        let err = build_cluster_hamiltonian(
            &CentralSpinParams::default(),
            &spins,
            &[],
            &MagneticField::along_c(0.0),
            HyperfineMode::Full,
            DEFAULT_MAX_DIM,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ClusterTooLarge { dim: 12288, cap: 4096 }));
        let err = build_cluster_hamiltonian(
            &CentralSpinParams::default(),
            &spins[..2],
            &[PairCoupling { i: 0, j: 2, tensor: Tensor3::ZERO }],
            &MagneticField::along_c(0.0),
            HyperfineMode::Full,
            DEFAULT_MAX_DIM,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn zeeman_and_gslac_anchors() {
        let b = zeeman_splitting(&SpinSpecies::b11(), &MagneticField::along_c(350.0));
        assert!((b - 4.9).abs() / 4.9 < 0.03, "{b}");
        assert_eq!(zeeman_splitting(&SpinSpecies::n15(), &MagneticField::along_c(0.0)), 0.0);
        let c = CentralSpinParams::default();
        assert!((gslac_field(&c) - 123.8).abs() < 0.1);
        assert_eq!(gslac_field(&CentralSpinParams { d_mhz: 0.0, ..c }), 0.0);
        // independent hand evaluation: 2870 / (2.0023 * 13.996245)
        let nv = gslac_field(&CentralSpinParams { d_mhz: 2870.0, ..c });
        assert!((nv - 2870.0 / (2.0023 * 13.996_245)).abs() < 1e-3);
        assert!((nv - 102.4).abs() < 0.1);
    }

    #[test]
    fn qubit_frame_zero_field_clock_states() {
        let c = CentralSpinParams::default();
        let f = QubitFrame::new(&c, &MagneticField::along_c(0.0)).unwrap();
        // first = m_S 0, second = the lower member of the E-split doublet
        assert!((f.first[1].norm() - 1.0).abs() < 1e-12);
        assert!((f.second[0].norm_sqr() - 0.5).abs() < 1e-12);
        assert!((f.energies[1] - (3470.0 / 3.0 - 50.0)).abs() < 1e-9);
        // continuity with a small positive field
        let g = QubitFrame::new(&c, &MagneticField::along_c(0.5)).unwrap();
        assert!(g.second[2].norm() > g.second[0].norm());
    }

    #[test]
    fn qubit_frame_off_axis_matches_on_axis_limit() {
        let c = CentralSpinParams::default();
        let a = QubitFrame::new(&c, &MagneticField::along_c(30.0)).unwrap();
        let b = QubitFrame::new(&c, &MagneticField([1e-9, 0.0, 30.0])).unwrap();
        for k in 0..3 {
            assert!((a.energies[k] - b.energies[k]).abs() < 1e-6);
        }
        let overlap: c64 = (0..3).map(|i| a.second[i].conj() * b.second[i]).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-9);
    }
}
