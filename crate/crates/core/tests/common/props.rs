//! Property bodies shared by the invariant tests and the acceptance suite.

use super::random_bath;
use hbn_cce::bath::{dipolar_tensor, generate_bath, pair_couplings, IsotopeConfig, LatticeSpec, SyntheticHyperfineModel};
use hbn_cce::cce::{gcce_coherence, hahn_echo_cluster_curve, uniform_times, BathState, ClusterPolicy, SpinSystem};
use hbn_cce::model::{build_cluster_hamiltonian, BathSpin, CentralSpinParams, HyperfineMode, MagneticField, SpinSpecies};
use hbn_cce::oracle::{exact_normalized, OracleLimit};
use hbn_cce::tensor::Tensor3;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type PropResult = Result<(), TestCaseError>;

pub fn mode(pseudo_secular: bool) -> HyperfineMode {
    if pseudo_secular {
        HyperfineMode::PseudoSecular
    } else {
        HyperfineMode::Full
    }
}

pub fn full_order(n: usize) -> ClusterPolicy {
    ClusterPolicy { max_order: n, r_bath: f64::INFINITY, r_connect: f64::INFINITY, ..Default::default() }
}

/// L(0) = 1 and |L| ≤ 1 + 1e−6 for full-order gCCE and exact propagation.
pub fn normalized_and_bounded(n: usize, seed: u64, field: f64, e: f64, ps: bool) -> PropResult {
    let central = CentralSpinParams::default().with_e(e);
    let sys = SpinSystem::new(central, random_bath(n, seed), MagneticField::along_c(field), mode(ps)).unwrap();
    let times = uniform_times(2.0, 41);
    let g = gcce_coherence(&sys, &full_order(n), &BathState::maximally_mixed(), &times).unwrap();
    let exact = exact_normalized(&sys, &BathState::maximally_mixed(), &times, OracleLimit::default()).unwrap();
    for curve in [&g.total, &exact] {
        prop_assert!((curve.values[0] - hbn_cce::c64::new(1.0, 0.0)).norm() < 1e-12);
        prop_assert!(curve.magnitudes().iter().all(|&m| m <= 1.0 + 1e-6));
    }
    Ok(())
}

pub fn raw_l0_is_one_half(field: f64, e: f64, d: f64) -> PropResult {
    let central = CentralSpinParams { d_mhz: d, ..CentralSpinParams::default().with_e(e) };
    let sys = SpinSystem::new(central, Vec::new(), MagneticField::along_c(field), HyperfineMode::Full).unwrap();
    let l0 = hahn_echo_cluster_curve(&sys, &[], &BathState::maximally_mixed(), &[0.0, 0.3]).unwrap();
    prop_assert!((l0[0].norm() - 0.5).abs() < 1e-12);
    Ok(())
}

pub fn hermitian(n: usize, seed: u64, bx: f64, bz: f64, ps: bool) -> PropResult {
    let bath = random_bath(n, seed);
    let pairs = pair_couplings(&bath, 10.0).unwrap();
    let h = build_cluster_hamiltonian(&CentralSpinParams::default(), &bath, &pairs, &MagneticField([bx, 0.0, bz]), mode(ps), 4096)
        .unwrap();
    let m = &h.matrix;
    let mut scale: f64 = 1.0;
    let mut defect: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            scale = scale.max(m[(i, j)].norm());
            defect = defect.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    prop_assert!(defect <= 1e-12 * scale);
    Ok(())
}

pub fn inverse_cube(dir: [f64; 3], r: f64, k: f64) -> PropResult {
    let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    prop_assume!(len > 0.1);
    let at = |d: f64| BathSpin::new([dir[0] / len * d, dir[1] / len * d, dir[2] / len * d], SpinSpecies::n15(), Tensor3::ZERO);
    let origin = BathSpin::new([0.0; 3], SpinSpecies::b11(), Tensor3::ZERO);
    let near = dipolar_tensor(&origin, &at(r)).unwrap();
    let far = dipolar_tensor(&origin, &at(k * r)).unwrap();
    let cube = k * k * k;
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = (near.0[i][j], far.0[i][j] * cube);
            prop_assert!((a - b).abs() <= 1e-9 * near.frobenius());
        }
    }
    Ok(())
}

/// Same seed, same bath; same bath, bitwise the same curve.
pub fn deterministic_rerun(seed: u64) -> PropResult {
    let lattice = LatticeSpec::default().with_radius(7.0);
    let dataset = SyntheticHyperfineModel::default().dataset(&lattice).unwrap();
    let isotopes = IsotopeConfig {
        boron: hbn_cce::bath::BoronIsotope::Natural,
        nitrogen: hbn_cce::bath::NitrogenIsotope::Natural,
        n14_quadrupole_mhz: Some(-2.7),
    };
    let a = generate_bath(&lattice, &isotopes, &dataset, seed).unwrap();
    let b = generate_bath(&lattice, &isotopes, &dataset, seed).unwrap();
    prop_assert_eq!(&a, &b);

    let sys = SpinSystem::new(CentralSpinParams::default(), a, MagneticField::along_c(50.0), HyperfineMode::Full).unwrap();
    let policy = ClusterPolicy { max_order: 2, r_bath: 7.0, ..Default::default() };
    let times = uniform_times(1.0, 51);
    let first = gcce_coherence(&sys, &policy, &BathState::maximally_mixed(), &times).unwrap();
    let second = gcce_coherence(&sys, &policy, &BathState::maximally_mixed(), &times).unwrap();
    let bits = |r: &hbn_cce::cce::GcceResult| -> Vec<(u64, u64)> {
        r.total.values.iter().map(|v| (v.re.to_bits(), v.im.to_bits())).collect()
    };
    prop_assert_eq!(bits(&first), bits(&second));
    Ok(())
}
