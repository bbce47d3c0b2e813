//! Generalized cluster-correlation expansion of the Hahn-echo coherence.
//!
//! Every cluster is propagated together with the full three-level defect
//! spin. The irreducible contribution of a cluster is its raw curve divided
//! by the electron-only curve and the irreducible contributions of all its
//! proper sub-clusters; the coherence is the product of these.

use crate::bath::{dipolar_tensor, DEFAULT_R_PAIR};
use crate::linalg::{self, ZERO};
use crate::model::{
    build_cluster_hamiltonian, build_cluster_hamiltonian_with_mean_field, cluster_dimension, BathSpin, CentralSpinParams, ClusterHamiltonian, HyperfineMode,
    MagneticField, MeanField, PairCoupling, QubitFrame, DEFAULT_MAX_DIM,
};
use crate::spin::SpinMatrices;
use crate::tensor::{norm, sub, Vec3};
use crate::{c64, Error, Result};
use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Denominator magnitude below which the irreducible ratio is held.
pub const REGULARIZATION_THRESHOLD: f64 = 1e-6;

/// Highest supported expansion order.
pub const MAX_ORDER: usize = 4;

/// Largest core whose configurations may be enumerated.
pub const MAX_CORE: usize = 6;

/// The defect spin, its bath and the conditions of one simulation point.
#[derive(Debug, Clone)]
pub struct SpinSystem {
    pub central: CentralSpinParams,
    pub bath: Vec<BathSpin>,
    pub field: MagneticField,
    pub mode: HyperfineMode,
    /// Nuclear pairs further apart than this are left uncoupled, Å.
    pub r_pair: f64,
    /// Hilbert-space cap per cluster.
    pub max_dim: usize,
    /// Spins held in fixed I_z eigenstates, as (bath index, m). Outside a
    /// cluster they act on it through their static mean field.
    background: Vec<(usize, f64)>,
    frame: QubitFrame,
}

impl SpinSystem {
    pub fn new(central: CentralSpinParams, bath: Vec<BathSpin>, field: MagneticField, mode: HyperfineMode) -> Result<Self> {
        central.validate()?;
        for s in &bath {
            s.validate()?;
        }
        if field.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("magnetic field must be finite".into()));
        }
        let frame = QubitFrame::new(&central, &field)?;
        Ok(SpinSystem {
            central,
            bath,
            field,
            mode,
            r_pair: DEFAULT_R_PAIR,
            max_dim: DEFAULT_MAX_DIM,
            background: Vec::new(),
            frame,
        })
    }

    pub fn with_r_pair(mut self, r_pair: f64) -> Self {
        self.r_pair = r_pair;
        self
    }

    pub fn with_max_dim(mut self, max_dim: usize) -> Self {
        self.max_dim = max_dim;
        self
    }

    /// Same bath and settings under another field.
    pub fn with_field(&self, field: MagneticField) -> Result<Self> {
        let mut s = self.clone();
        s.frame = QubitFrame::new(&s.central, &field)?;
        s.field = field;
        Ok(s)
    }

    pub fn with_mode(mut self, mode: HyperfineMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn frame(&self) -> &QubitFrame {
        &self.frame
    }

    /// Holds the listed spins in I_z eigenstates `(index, m)`. The qubit
    /// states become the eigenstates of the defect Hamiltonian including the
    /// static hyperfine field of all listed spins.
    pub fn with_background(mut self, background: Vec<(usize, f64)>) -> Result<Self> {
        for &(i, m) in &background {
            if i >= self.bath.len() {
                return Err(Error::Validation(format!("background spin {i} outside a bath of {}", self.bath.len())));
            }
            z_index(self.bath[i].species.twice_spin, (2.0 * m).round() as i8)?;
        }
        self.background = background;
        let h = self.mean_field(&[])?.electron;
        let g = self.central.gamma_e();
        let eff = MagneticField([self.field.0[0] + h[0] / g, self.field.0[1] + h[1] / g, self.field.0[2] + h[2] / g]);
        self.frame = QubitFrame::new(&self.central, &eff)?;
        Ok(self)
    }

    pub fn background(&self) -> &[(usize, f64)] {
        &self.background
    }

    /// Static field of the background spins outside `indices`.
    pub fn mean_field(&self, indices: &[usize]) -> Result<MeanField> {
        let mut mf = MeanField { electron: [0.0; 3], nuclear: vec![[0.0; 3]; indices.len()] };
        for &(j, m) in &self.background {
            if indices.contains(&j) {
                continue;
            }
            let src = &self.bath[j];
            for a in 0..3 {
                if self.mode == HyperfineMode::Full || a == 2 {
                    mf.electron[a] += src.hyperfine[(a, 2)] * m;
                }
            }
            for (k, &i) in indices.iter().enumerate() {
                if norm(sub(self.bath[i].position, src.position)) <= self.r_pair {
                    let j_t = dipolar_tensor(&self.bath[i], src)?;
                    for a in 0..3 {
                        mf.nuclear[k][a] += j_t[(a, 2)] * m;
                    }
                }
            }
        }
        Ok(mf)
    }

    /// Spins of `indices` and the pair couplings among them, re-indexed to
    /// cluster positions.
    pub fn subsystem(&self, indices: &[usize]) -> Result<(Vec<BathSpin>, Vec<PairCoupling>)> {
        let spins: Vec<BathSpin> = indices.iter().map(|&i| self.bath[i]).collect();
        let mut pairs = Vec::new();
        for a in 0..spins.len() {
            for b in a + 1..spins.len() {
                if norm(sub(spins[a].position, spins[b].position)) <= self.r_pair {
                    pairs.push(PairCoupling { i: a, j: b, tensor: dipolar_tensor(&spins[a], &spins[b])? });
                }
            }
        }
        Ok((spins, pairs))
    }

    pub fn cluster_hamiltonian(&self, indices: &[usize]) -> Result<ClusterHamiltonian> {
        let (spins, pairs) = self.subsystem(indices)?;
        if self.background.is_empty() {
            return build_cluster_hamiltonian(&self.central, &spins, &pairs, &self.field, self.mode, self.max_dim);
        }
        let mf = self.mean_field(indices)?;
        build_cluster_hamiltonian_with_mean_field(&self.central, &spins, &pairs, &self.field, self.mode, self.max_dim, &mf)
    }
}

/// A set of bath spins treated together; indices are sorted and distinct.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cluster {
    pub indices: Vec<usize>,
}

impl Cluster {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("cluster {indices:?} repeats a spin")));
        }
        Ok(Cluster { indices })
    }

    pub fn order(&self) -> usize {
        self.indices.len()
    }

    /// All non-empty proper subsets, smallest first.
    pub fn proper_subsets(&self) -> Vec<Vec<usize>> {
        let n = self.indices.len();
        let mut out: Vec<Vec<usize>> = (1..(1u32 << n) - 1)
            .map(|mask| (0..n).filter(|k| mask & (1 << k) != 0).map(|k| self.indices[k]).collect())
            .collect();
        out.sort_by(|a: &Vec<usize>, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out
    }
}

/// Rules for building the cluster set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterPolicy {
    pub max_order: usize,
    /// Only spins this close to the vacancy enter any cluster, Å.
    pub r_bath: f64,
    /// A spin joins a cluster if it is this close to one of its members, Å.
    pub r_connect: f64,
    /// Keep at most this many clusters of each order (all if absent).
    #[serde(default)]
    pub max_clusters_per_order: Option<usize>,
    /// Rank by coupling strength when truncating; otherwise by proximity to
    /// the vacancy.
    #[serde(default = "default_true")]
    pub strongest_first: bool,
    /// Energy gap used to weigh electron-mediated pair couplings in the
    /// ranking score, MHz.
    #[serde(default = "default_flip_gap")]
    pub flip_gap_mhz: f64,
    /// Number of most strongly coupled spins whose I_z configurations are
    /// summed exactly (see [`gcce_conditioned`]); 0 for the plain expansion.
    #[serde(default)]
    pub core_conditioning: usize,
}

fn default_true() -> bool {
    true
}

fn default_flip_gap() -> f64 {
    3470.0
}

impl Default for ClusterPolicy {
    fn default() -> Self {
        ClusterPolicy {
            max_order: 2,
            r_bath: 20.0,
            r_connect: 3.4,
            max_clusters_per_order: None,
            strongest_first: true,
            flip_gap_mhz: default_flip_gap(),
            core_conditioning: 0,
        }
    }
}

impl ClusterPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_ORDER).contains(&self.max_order) {
            return Err(Error::Validation(format!("max_order must be 1..={MAX_ORDER}, got {}", self.max_order)));
        }
        if !(self.r_bath >= 0.0 && self.r_connect >= 0.0 && self.flip_gap_mhz > 0.0) {
            return Err(Error::Validation("cluster radii must be >= 0 and flip_gap_mhz > 0".into()));
        }
        if self.core_conditioning > MAX_CORE {
            return Err(Error::Validation(format!(
                "core_conditioning must be <= {MAX_CORE}, got {}",
                self.core_conditioning
            )));
        }
        if self.max_clusters_per_order == Some(0) {
            return Err(Error::Validation("max_clusters_per_order must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-order bookkeeping of the enumeration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderCensus {
    pub order: usize,
    /// Connected candidates found before truncation.
    pub candidates: usize,
    /// Kept after truncation.
    pub kept: usize,
    /// Added afterwards so that every kept cluster has all its sub-clusters.
    pub added_for_closure: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterCensus {
    pub orders: Vec<OrderCensus>,
}

impl ClusterCensus {
    pub fn total(&self) -> usize {
        self.orders.iter().map(|o| o.kept + o.added_for_closure).sum()
    }

    pub fn count(&self, order: usize) -> usize {
        self.orders.iter().find(|o| o.order == order).map_or(0, |o| o.kept + o.added_for_closure)
    }
}

/// Clusters sorted by order, then lexicographically; closed under taking
/// sub-clusters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub census: ClusterCensus,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn of_order(&self, n: usize) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(move |c| c.order() == n)
    }

    /// Builds a set from explicit clusters, adding missing sub-clusters.
    pub fn from_clusters(clusters: impl IntoIterator<Item = Cluster>) -> Self {
        let mut by_order: BTreeMap<usize, HashSet<Vec<usize>>> = BTreeMap::new();
        for c in clusters {
            by_order.entry(c.order()).or_default().insert(c.indices);
        }
        let kept: BTreeMap<usize, usize> = by_order.iter().map(|(k, v)| (*k, v.len())).collect();
        close_downward(&mut by_order);
        let census = ClusterCensus {
            orders: by_order
                .iter()
                .map(|(&n, set)| OrderCensus {
                    order: n,
                    candidates: kept.get(&n).copied().unwrap_or(0),
                    kept: kept.get(&n).copied().unwrap_or(0),
                    added_for_closure: set.len() - kept.get(&n).copied().unwrap_or(0),
                })
                .collect(),
        };
        ClusterSet { clusters: flatten(by_order), census }
    }
}

fn close_downward(by_order: &mut BTreeMap<usize, HashSet<Vec<usize>>>) {
    let max = by_order.keys().copied().max().unwrap_or(0);
    for n in (2..=max).rev() {
        let parents: Vec<Vec<usize>> = by_order.get(&n).map(|s| s.iter().cloned().collect()).unwrap_or_default();
        let lower = by_order.entry(n - 1).or_default();
        for p in parents {
            for skip in 0..p.len() {
                let sub: Vec<usize> = p.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, v)| *v).collect();
                lower.insert(sub);
            }
        }
    }
}

fn flatten(by_order: BTreeMap<usize, HashSet<Vec<usize>>>) -> Vec<Cluster> {
    let mut out = Vec::new();
    for (_, set) in by_order {
        let mut v: Vec<Vec<usize>> = set.into_iter().collect();
        v.sort();
        out.extend(v.into_iter().map(|indices| Cluster { indices }));
    }
    out
}

/// Strength of the coupling between two spins used to rank clusters: the
/// dipolar norm plus the electron-mediated estimate ‖A⊥ᵢ‖‖A⊥ⱼ‖ / gap.
fn pair_score(a: &BathSpin, b: &BathSpin, flip_gap: f64) -> f64 {
    let j = dipolar_tensor(a, b).map(|t| t.frobenius()).unwrap_or(0.0);
    j + a.hyperfine.transverse_block_norm() * b.hyperfine.transverse_block_norm() / flip_gap
}

/// Enumerates clusters of orders 1..=max_order.
///
/// Singletons are the spins within `r_bath` of the vacancy. Clusters of
/// order n+1 grow from kept clusters of order n by one spin within
/// `r_connect` of a member. Each order is truncated to
/// `max_clusters_per_order` by summed pair score (or proximity), and the
/// result is finally closed under taking sub-clusters.
pub fn enumerate_clusters(bath: &[BathSpin], policy: &ClusterPolicy) -> Result<ClusterSet> {
    policy.validate()?;
    let members: Vec<usize> = (0..bath.len()).filter(|&i| norm(bath[i].position) <= policy.r_bath).collect();
    let in_bath: HashSet<usize> = members.iter().copied().collect();

    let mut neighbors: HashMap<usize, Vec<usize>> = HashMap::new();
    if policy.max_order > 1 {
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                if norm(sub(bath[i].position, bath[j].position)) <= policy.r_connect {
                    neighbors.entry(i).or_default().push(j);
                    neighbors.entry(j).or_default().push(i);
                }
            }
        }
    }

    let mut pair_cache: HashMap<(usize, usize), f64> = HashMap::new();
    let mut score = |c: &[usize]| -> f64 {
        if c.len() == 1 {
            return bath[c[0]].hyperfine.frobenius();
        }
        let mut s = 0.0;
        for a in 0..c.len() {
            for b in a + 1..c.len() {
                let key = (c[a], c[b]);
                s += *pair_cache
                    .entry(key)
                    .or_insert_with(|| pair_score(&bath[c[a]], &bath[c[b]], policy.flip_gap_mhz));
            }
        }
        s
    };
    let reach = |c: &[usize]| -> f64 { c.iter().map(|&i| norm(bath[i].position)).fold(0.0, f64::max) };

    let mut by_order: BTreeMap<usize, HashSet<Vec<usize>>> = BTreeMap::new();
    let mut census = Vec::new();
    let mut current: Vec<Vec<usize>> = members.iter().map(|&i| vec![i]).collect();
    for n in 1..=policy.max_order {
        if n > 1 {
            let mut next: HashSet<Vec<usize>> = HashSet::new();
            for c in &current {
                for &m in c {
                    for &j in neighbors.get(&m).map(Vec::as_slice).unwrap_or(&[]) {
                        if c.contains(&j) || !in_bath.contains(&j) {
                            continue;
                        }
                        let mut g = c.clone();
                        g.push(j);
                        g.sort_unstable();
                        next.insert(g);
                    }
                }
            }
            current = next.into_iter().collect();
            current.sort();
        }
        let candidates = current.len();
        if let Some(cap) = policy.max_clusters_per_order {
            if current.len() > cap {
                let mut ranked: Vec<(f64, Vec<usize>)> = current
                    .drain(..)
                    .map(|c| {
                        let key = if policy.strongest_first { -score(&c) } else { reach(&c) };
                        (key, c)
                    })
                    .collect();
                ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
                ranked.truncate(cap);
                current = ranked.into_iter().map(|(_, c)| c).collect();
                current.sort();
            }
        }
        census.push(OrderCensus { order: n, candidates, kept: current.len(), added_for_closure: 0 });
        by_order.insert(n, current.iter().cloned().collect());
        if current.is_empty() {
            break;
        }
    }
    let kept: Vec<usize> = by_order.values().map(HashSet::len).collect();
    close_downward(&mut by_order);
    for (o, (k, set)) in census.iter_mut().zip(kept.iter().zip(by_order.values())) {
        o.added_for_closure = set.len() - k;
    }
    Ok(ClusterSet { clusters: flatten(by_order), census: ClusterCensus { orders: census } })
}

/// Initial state of one nuclear spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpinState {
    #[default]
    MaximallyMixed,
    /// (1 − p)·𝟙/(2I+1) + p·|m = I⟩⟨m = I| with the quantization axis along `axis`.
    Polarized { p: f64, axis: Vec3 },
    /// I_z eigenstate with m = twice_m / 2.
    ZEigen { twice_m: i8 },
}

impl SpinState {
    pub fn validate(&self) -> Result<()> {
        if let SpinState::Polarized { p, axis } = self {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::NonPhysicalState(format!("polarization {p} outside [0, 1]")));
            }
            if !(norm(*axis) > 0.0) || axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonPhysicalState("polarization axis must be a finite nonzero vector".into()));
            }
        }
        Ok(())
    }

    /// Density matrix of a spin with `2I = twice_spin`.
    pub fn density_matrix(&self, twice_spin: u8) -> Result<Mat<c64>> {
        self.validate()?;
        let d = twice_spin as usize + 1;
        let mixed = c64::new(1.0 / d as f64, 0.0);
        match *self {
            SpinState::MaximallyMixed => Ok(Mat::from_fn(d, d, |i, j| if i == j { mixed } else { ZERO })),
            SpinState::Polarized { p, axis } => {
                let ops = SpinMatrices::new(twice_spin);
                let n = norm(axis);
                let proj = Mat::from_fn(d, d, |i, j| {
                    (0..3).map(|a| ops.component(a)[(i, j)] * (axis[a] / n)).sum::<c64>()
                });
                let e = linalg::eigh(proj.as_ref())?;
                let top = e.vectors.col(d - 1);
                Ok(Mat::from_fn(d, d, |i, j| {
                    let pure = top[i] * top[j].conj() * p;
                    if i == j {
                        pure + mixed * (1.0 - p)
                    } else {
                        pure
                    }
                }))
            }
            SpinState::ZEigen { twice_m } => {
                let k = z_index(twice_spin, twice_m)?;
                Ok(Mat::from_fn(d, d, |i, j| if i == k && j == k { c64::new(1.0, 0.0) } else { ZERO }))
            }
        }
    }

    /// Populations of the I_z eigenstates, in descending m, if the state is
    /// diagonal in that basis.
    pub fn z_populations(&self, twice_spin: u8) -> Result<Vec<f64>> {
        let rho = self.density_matrix(twice_spin)?;
        let d = rho.nrows();
        for i in 0..d {
            for j in 0..d {
                if i != j && rho[(i, j)].norm() > 1e-12 {
                    return Err(Error::NonPhysicalState(format!("{self:?} is not diagonal in the I_z basis")));
                }
            }
        }
        Ok((0..d).map(|i| rho[(i, i)].re).collect())
    }

    /// Principal square root of [`SpinState::density_matrix`].
    pub fn sqrt_density_matrix(&self, twice_spin: u8) -> Result<Mat<c64>> {
        match self {
            SpinState::MaximallyMixed => {
                let d = twice_spin as usize + 1;
                let v = c64::new((1.0 / d as f64).sqrt(), 0.0);
                Ok(Mat::from_fn(d, d, |i, j| if i == j { v } else { ZERO }))
            }
            SpinState::ZEigen { .. } => self.density_matrix(twice_spin),
            _ => linalg::psd_sqrt(self.density_matrix(twice_spin)?.as_ref()),
        }
    }
}

fn z_index(twice_spin: u8, twice_m: i8) -> Result<usize> {
    let (s, m) = (twice_spin as i32, twice_m as i32);
    if m.abs() > s || (s - m) % 2 != 0 {
        return Err(Error::NonPhysicalState(format!("2m = {m} is not a level of a spin with 2I = {s}")));
    }
    Ok(((s - m) / 2) as usize)
}

/// Initial nuclear state: one state for every spin, with per-spin overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathState {
    #[serde(default)]
    pub default: SpinState,
    #[serde(default)]
    pub overrides: BTreeMap<usize, SpinState>,
}

impl BathState {
    pub fn maximally_mixed() -> Self {
        BathState::default()
    }

    /// Mixed bath with `spins` polarized.
    pub fn polarized(spins: &[usize], state: SpinState) -> Self {
        BathState {
            default: SpinState::MaximallyMixed,
            overrides: spins.iter().map(|&i| (i, state)).collect(),
        }
    }

    pub fn state_of(&self, index: usize) -> SpinState {
        self.overrides.get(&index).copied().unwrap_or(self.default)
    }

    pub fn validate(&self) -> Result<()> {
        self.default.validate()?;
        self.overrides.values().try_for_each(SpinState::validate)
    }

    /// ρ^{1/2} of the product state of `indices`, first index most significant.
    pub fn cluster_sqrt(&self, bath: &[BathSpin], indices: &[usize]) -> Result<Mat<c64>> {
        let mut acc = Mat::from_fn(1, 1, |_, _| c64::new(1.0, 0.0));
        for &i in indices {
            let s = self.state_of(i).sqrt_density_matrix(bath[i].species.twice_spin)?;
            acc = linalg::kron(acc.as_ref(), s.as_ref());
        }
        Ok(acc)
    }
}

/// Complex coherence sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceCurve {
    /// μs
    pub times: Vec<f64>,
    pub values: Vec<c64>,
    /// Divided by the electron-only curve, so that L(0) = 1.
    pub normalized: bool,
    /// |L(0)| of the raw curve before normalization.
    pub raw_l0_magnitude: f64,
}

impl CoherenceCurve {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Pointwise product, used to combine independent factors.
    pub fn times_curve(&self, other: &CoherenceCurve) -> CoherenceCurve {
        CoherenceCurve {
            times: self.times.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
            normalized: self.normalized && other.normalized,
            raw_l0_magnitude: self.raw_l0_magnitude,
        }
    }
}

/// Uniform grid of `n` points on [0, t_max].
pub fn uniform_times(t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Hahn echo of one cluster Hamiltonian.
///
/// The defect starts in (|first⟩ + |second⟩)/√2, the nuclei in the product
/// state whose square root is `rho_sqrt`; the sequence is U(t/2) P U(t/2)
/// with an ideal π pulse P. Returns ⟨second|ρ_e(t)|first⟩.
///
/// With H = VΛV† and X = |+⟩ ⊗ ρ^{1/2}, the echo operator applied to X is
/// V φ K φ V†X with K = V†(P ⊗ 𝟙)V and φ = exp(−i2πΛt/2), so each time
/// point costs two products with d columns.
pub fn echo_curve(h: MatRef<'_, c64>, frame: &QubitFrame, rho_sqrt: MatRef<'_, c64>, times: &[f64]) -> Result<Vec<c64>> {
    let dim = h.nrows();
    let d = rho_sqrt.nrows();
    if dim != 3 * d {
        return Err(Error::Validation(format!("Hamiltonian dimension {dim} does not match 3 x {d}")));
    }
    let eig = linalg::eigh(h)?;
    let v = &eig.vectors;
    let plus = frame.plus_state();
    let pulse = frame.pi_pulse();

    let x = Mat::from_fn(dim, d, |r, c| plus[r / d] * rho_sqrt[(r % d, c)]);
    let y = linalg::adjoint_mul(v.as_ref(), x.as_ref());
    let pv = Mat::from_fn(dim, dim, |r, k| {
        let (e, b) = (r / d, r % d);
        (0..3).map(|e2| pulse[e][e2] * v[(e2 * d + b, k)]).sum::<c64>()
    });
    let kmat = linalg::adjoint_mul(v.as_ref(), pv.as_ref());
    let project = |q: &[c64; 3]| Mat::from_fn(d, dim, |b, k| (0..3).map(|e| q[e].conj() * v[(e * d + b, k)]).sum::<c64>());
    let e_first = project(&frame.first);
    let e_second = project(&frame.second);

    let mut z = Mat::<c64>::zeros(dim, d);
    let mut f = Mat::<c64>::zeros(dim, d);
    let mut g_first = Mat::<c64>::zeros(d, d);
    let mut g_second = Mat::<c64>::zeros(d, d);
    let mut phase = vec![ZERO; dim];
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let tau = 0.5 * t;
        for (k, p) in phase.iter_mut().enumerate() {
            let angle = -2.0 * std::f64::consts::PI * eig.values[k] * tau;
            *p = c64::new(angle.cos(), angle.sin());
        }
        for c in 0..d {
            for r in 0..dim {
                z[(r, c)] = phase[r] * y[(r, c)];
            }
        }
        linalg::mul_into(&mut f, kmat.as_ref(), z.as_ref());
        for c in 0..d {
            for r in 0..dim {
                f[(r, c)] = phase[r] * f[(r, c)];
            }
        }
        linalg::mul_into(&mut g_first, e_first.as_ref(), f.as_ref());
        linalg::mul_into(&mut g_second, e_second.as_ref(), f.as_ref());
        let mut l = ZERO;
        for c in 0..d {
            for r in 0..d {
                l += g_second[(r, c)] * g_first[(r, c)].conj();
            }
        }
        out.push(l);
    }
    Ok(out)
}

/// Raw (unnormalized) Hahn-echo curve of the defect spin together with the
/// bath spins of `cluster`. An empty cluster gives the electron-only curve.
pub fn hahn_echo_cluster_curve(system: &SpinSystem, cluster: &[usize], bath_state: &BathState, times: &[f64]) -> Result<Vec<c64>> {
    let dim = cluster_dimension(cluster.iter().map(|&i| &system.bath[i]));
    if dim > system.max_dim {
        return Err(Error::ClusterTooLarge { dim, cap: system.max_dim });
    }
    let h = system.cluster_hamiltonian(cluster)?;
    let rho = bath_state.cluster_sqrt(&system.bath, cluster)?;
    echo_curve(h.matrix.as_ref(), system.frame(), rho.as_ref(), times)
}

/// Irreducible contribution l̃ of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterContribution {
    pub cluster: Cluster,
    pub curve: Vec<c64>,
    /// Set if a vanishing denominator forced the ratio to be held.
    pub degraded: bool,
}

/// l̃_C = raw_C / (l0 ∏_{S ⊊ C, S ≠ ∅} l̃_S), with the l̃_S of all proper
/// subsets built the same way from `raw_curves`.
///
/// Where the denominator drops below [`REGULARIZATION_THRESHOLD`] the
/// previous ratio is held and the contribution is flagged `degraded`.
pub fn irreducible_contribution(cluster: &Cluster, raw_curves: &HashMap<Vec<usize>, Vec<c64>>, l0: &[c64]) -> Result<ClusterContribution> {
    let mut subsets = cluster.proper_subsets();
    subsets.sort_by_key(Vec::len);
    let mut tilde: HashMap<Vec<usize>, Vec<c64>> = HashMap::new();
    let mut degraded = false;
    for s in subsets.into_iter().chain(std::iter::once(cluster.indices.clone())) {
        let missing = || Error::MissingSubCluster { cluster: cluster.indices.clone(), missing: s.clone() };
        let raw = raw_curves.get(&s).ok_or_else(missing)?;
        let sub = Cluster::new(s.clone())?;
        let (curve, d) = irreducible_with(&sub, raw, |x| tilde.get(x).map(Vec::as_slice), l0)?;
        degraded = d;
        tilde.insert(s, curve);
    }
    let curve = tilde.remove(&cluster.indices).unwrap_or_default();
    Ok(ClusterContribution { cluster: cluster.clone(), curve, degraded })
}

fn irreducible_with<'a>(
    cluster: &Cluster,
    raw: &[c64],
    tilde: impl Fn(&[usize]) -> Option<&'a [c64]>,
    l0: &[c64],
) -> Result<(Vec<c64>, bool)> {
    let subs: Vec<&[c64]> = cluster
        .proper_subsets()
        .into_iter()
        .map(|s| tilde(&s).ok_or_else(|| Error::MissingSubCluster { cluster: cluster.indices.clone(), missing: s }))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(l0.len());
    let mut degraded = false;
    let mut last = c64::new(1.0, 0.0);
    for t in 0..l0.len() {
        let mut den = l0[t];
        for c in &subs {
            den *= c[t];
        }
        let ratio = if den.norm() < REGULARIZATION_THRESHOLD {
            degraded = true;
            last
        } else {
            raw[t] / den
        };
        last = ratio;
        out.push(ratio);
    }
    Ok((out, degraded))
}

/// Output of a gCCE evaluation.
#[derive(Debug, Clone)]
pub struct GcceResult {
    /// Normalized coherence ∏ over all clusters.
    pub total: CoherenceCurve,
    /// L_n = ∏ over clusters of order n, normalized, for n = 1..=max order.
    pub per_order: Vec<CoherenceCurve>,
    pub census: ClusterCensus,
    /// Electron-only raw curve.
    pub l0: Vec<c64>,
    pub degraded_clusters: usize,
    /// Fraction of clusters whose contribution was regularized.
    pub degraded_fraction: f64,
}

impl GcceResult {
    /// ∏_{k ≤ n} L_k
    pub fn up_to_order(&self, n: usize) -> CoherenceCurve {
        let mut c = CoherenceCurve {
            times: self.total.times.clone(),
            values: vec![c64::new(1.0, 0.0); self.total.len()],
            normalized: true,
            raw_l0_magnitude: self.total.raw_l0_magnitude,
        };
        for l in self.per_order.iter().take(n) {
            c = c.times_curve(l);
        }
        c
    }
}

/// gCCE coherence with clusters from [`enumerate_clusters`], conditioned on
/// the core selected by `policy.core_conditioning`.
pub fn gcce_coherence(system: &SpinSystem, policy: &ClusterPolicy, bath_state: &BathState, times: &[f64]) -> Result<GcceResult> {
    let set = enumerate_clusters(&system.bath, policy)?;
    let core = strongest_spins(&system.bath, policy.r_bath, policy.core_conditioning);
    gcce_conditioned(system, &set, bath_state, times, &core)
}

/// Indices of the `count` spins within `r_bath` with the largest hyperfine
/// norm, ascending.
pub fn strongest_spins(bath: &[BathSpin], r_bath: f64, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..bath.len()).filter(|&i| norm(bath[i].position) <= r_bath).collect();
    idx.sort_by(|&a, &b| bath[b].hyperfine.frobenius().total_cmp(&bath[a].hyperfine.frobenius()).then(a.cmp(&b)));
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// gCCE coherence over an explicit cluster set. Raw curves are evaluated in
/// parallel; the product is reduced sequentially in cluster order.
pub fn gcce_with_clusters(system: &SpinSystem, set: &ClusterSet, bath_state: &BathState, times: &[f64]) -> Result<GcceResult> {
    bath_state.validate()?;
    let l0 = hahn_echo_cluster_curve(system, &[], bath_state, times)?;
    let raw: Vec<Vec<c64>> = set
        .clusters
        .par_iter()
        .map(|c| hahn_echo_cluster_curve(system, &c.indices, bath_state, times))
        .collect::<Result<_>>()?;
    let index: HashMap<&[usize], usize> = set.clusters.iter().enumerate().map(|(k, c)| (c.indices.as_slice(), k)).collect();
    let mut by_order: Vec<usize> = (0..set.len()).collect();
    by_order.sort_by_key(|&k| set.clusters[k].order());

    let max_order = set.clusters.iter().map(Cluster::order).max().unwrap_or(0);
    let one = c64::new(1.0, 0.0);
    let mut tilde: Vec<Option<Vec<c64>>> = vec![None; set.len()];
    let mut degraded = 0usize;
    for k in by_order {
        let c = &set.clusters[k];
        let lookup = |s: &[usize]| index.get(s).and_then(|&j| tilde[j].as_deref());
        let (curve, d) = irreducible_with(c, &raw[k], lookup, &l0)?;
        if d {
            degraded += 1;
        }
        tilde[k] = Some(curve);
    }
    let mut per_order = vec![vec![one; times.len()]; max_order];
    for (c, curve) in set.clusters.iter().zip(tilde.iter().flatten()) {
        let acc = &mut per_order[c.order() - 1];
        for (a, v) in acc.iter_mut().zip(curve) {
            *a *= v;
        }
    }
    let l0_mag = l0.first().map_or(0.5, |v| v.norm());
    let curve = |values: Vec<c64>| CoherenceCurve { times: times.to_vec(), values, normalized: true, raw_l0_magnitude: l0_mag };
    let mut total = vec![one; times.len()];
    for l in &per_order {
        for (a, v) in total.iter_mut().zip(l) {
            *a *= v;
        }
    }
    Ok(GcceResult {
        total: curve(total),
        per_order: per_order.into_iter().map(curve).collect(),
        census: set.census.clone(),
        l0,
        degraded_clusters: degraded,
        degraded_fraction: if set.is_empty() { 0.0 } else { degraded as f64 / set.len() as f64 },
    })
}

/// gCCE averaged exactly over the I_z configurations of the `core` spins.
///
/// For every configuration with nonzero weight the core spins are held in
/// I_z eigenstates (see [`SpinSystem::with_background`]): inside a cluster
/// they evolve from that state, outside it they act through their static
/// field, and the qubit states follow the defect levels shifted by that
/// field. The raw configuration curves are summed with their populations
/// and divided by the electron-only curve of the bare defect.
///
/// At full order each configuration term is exact, so the result equals the
/// population-weighted average of exact echoes with configuration-resolved
/// qubit states. An empty core gives [`gcce_with_clusters`].
pub fn gcce_conditioned(
    system: &SpinSystem,
    set: &ClusterSet,
    bath_state: &BathState,
    times: &[f64],
    core: &[usize],
) -> Result<GcceResult> {
    if core.is_empty() {
        return gcce_with_clusters(system, set, bath_state, times);
    }
    bath_state.validate()?;
    let mut levels: Vec<Vec<(i8, f64)>> = Vec::with_capacity(core.len());
    for &i in core {
        let spin = system
            .bath
            .get(i)
            .ok_or_else(|| Error::Validation(format!("core spin {i} outside a bath of {}", system.bath.len())))?;
        let ts = spin.species.twice_spin;
        let pops = bath_state.state_of(i).z_populations(ts)?;
        levels.push(
            pops.iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(k, &p)| (ts as i8 - 2 * k as i8, p))
                .collect(),
        );
    }
    let bare = SpinSystem { background: Vec::new(), ..system.clone() };
    let l0 = hahn_echo_cluster_curve(&bare, &[], bath_state, times)?;

    let max_order = set.clusters.iter().map(Cluster::order).max().unwrap_or(0);
    let one = c64::new(1.0, 0.0);
    // cumulative[n] = Σ_config w l0_config ∏_{k ≤ n} L_k
    let mut cumulative = vec![vec![c64::new(0.0, 0.0); times.len()]; max_order + 1];
    let mut degraded = 0usize;
    let mut configs = 0usize;
    let mut choice = vec![0usize; core.len()];
    loop {
        let weight: f64 = choice.iter().zip(&levels).map(|(&c, l)| l[c].1).product();
        let background: Vec<(usize, f64)> =
            choice.iter().zip(&levels).zip(core).map(|((&c, l), &i)| (i, l[c].0 as f64 / 2.0)).collect();
        let mut state = bath_state.clone();
        for (&c, (l, &i)) in choice.iter().zip(levels.iter().zip(core)) {
            state.overrides.insert(i, SpinState::ZEigen { twice_m: l[c].0 });
        }
        let sys = system.clone().with_background(background)?;
        let r = gcce_with_clusters(&sys, set, &state, times)?;
        degraded += r.degraded_clusters;
        configs += 1;
        let mut acc: Vec<c64> = r.l0.iter().map(|v| v * weight).collect();
        for (a, c) in cumulative[0].iter_mut().zip(&acc) {
            *a += c;
        }
        for n in 1..=max_order {
            for (a, v) in acc.iter_mut().zip(&r.per_order[n - 1].values) {
                *a *= v;
            }
            for (a, c) in cumulative[n].iter_mut().zip(&acc) {
                *a += c;
            }
        }

        let mut k = 0;
        while k < choice.len() {
            choice[k] += 1;
            if choice[k] < levels[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == choice.len() {
            break;
        }
    }

    let l0_mag = l0.first().map_or(0.5, |v| v.norm());
    let curve = |values: Vec<c64>| CoherenceCurve { times: times.to_vec(), values, normalized: true, raw_l0_magnitude: l0_mag };
    let normalized: Vec<Vec<c64>> = cumulative.iter().map(|c| c.iter().zip(&l0).map(|(a, b)| a / b).collect()).collect();
    let per_order = (1..=max_order)
        .map(|n| curve(normalized[n].iter().zip(&normalized[n - 1]).map(|(a, b)| if b.norm() > 0.0 { a / b } else { one }).collect()))
        .collect();
    let total = curve(normalized[max_order].clone());
    let evaluated = configs * set.len();
    Ok(GcceResult {
        total,
        per_order,
        census: set.census.clone(),
        l0,
        degraded_clusters: degraded,
        degraded_fraction: if evaluated == 0 { 0.0 } else { degraded as f64 / evaluated as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpinSpecies;
    use crate::tensor::Tensor3;

    fn triangle() -> Vec<BathSpin> {
        let a = Tensor3::diag(0.1, 0.1, 0.2);
        vec![
            BathSpin::new([3.0, 0.0, 0.0], SpinSpecies::n15(), a),
            BathSpin::new([4.0, 0.0, 0.0], SpinSpecies::n15(), a),
            BathSpin::new([3.5, 0.8, 0.0], SpinSpecies::n15(), a),
        ]
    }

    #[test]
    fn three_connected_spins() {
        let bath = triangle();
        let p2 = ClusterPolicy { max_order: 2, r_connect: 2.0, ..Default::default() };
        let s2 = enumerate_clusters(&bath, &p2).unwrap();
        assert_eq!(s2.of_order(1).count(), 3);
        assert_eq!(s2.of_order(2).count(), 3);
        let p3 = ClusterPolicy { max_order: 3, ..p2 };
        let s3 = enumerate_clusters(&bath, &p3).unwrap();
        assert_eq!(s3.len(), 7);
        assert_eq!(s3.of_order(3).count(), 1);
    }

    #[test]
    fn truncation_keeps_subclusters() {
        let bath = triangle();
        let p = ClusterPolicy { max_order: 3, r_connect: 2.0, max_clusters_per_order: Some(1), ..Default::default() };
        let s = enumerate_clusters(&bath, &p).unwrap();
        // the single kept pair grows into the triple, whose pairs and
        // singletons are restored
        assert_eq!(s.census.orders[0].kept, 1);
        assert_eq!(s.len(), 7);
    }

    #[test]
    fn subsets_are_ordered() {
        let c = Cluster::new(vec![5, 2, 9]).unwrap();
        let s = c.proper_subsets();
        assert_eq!(s.len(), 6);
        assert_eq!(s[0], vec![2]);
        assert_eq!(s[5], vec![5, 9]);
        assert!(Cluster::new(vec![1, 1]).is_err());
    }

    #[test]
    fn polarized_state_is_physical() {
        let rho = SpinState::Polarized { p: 0.62, axis: [0.0, 0.0, -1.0] }.density_matrix(2).unwrap();
        let tr: c64 = (0..3).map(|i| rho[(i, i)]).sum();
        assert!((tr.re - 1.0).abs() < 1e-12);
        // population of m = -1
        assert!((rho[(2, 2)].re - (0.38 / 3.0 + 0.62)).abs() < 1e-12);
        assert!(SpinState::Polarized { p: 1.2, axis: [0.0, 0.0, 1.0] }.validate().is_err());
    }
}
