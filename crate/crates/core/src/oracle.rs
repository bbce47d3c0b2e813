//! Brute-force Hahn-echo propagation of the full density matrix.
//!
//! Deliberately independent of the cluster kernel in [`crate::cce`]: the
//! echo operator W = U P U is formed explicitly, ρ(t) = W ρ(0) W† is
//! propagated as a full matrix and the defect spin is obtained by partial
//! trace.

use crate::cce::{BathState, CoherenceCurve, SpinSystem};
use crate::linalg::{self, ZERO};
use crate::model::{cluster_dimension, DEFAULT_MAX_DIM};
use crate::{c64, Error, Result};
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest Hilbert space the oracle accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLimit {
    pub max_dim: usize,
}

impl Default for OracleLimit {
    fn default() -> Self {
        OracleLimit { max_dim: DEFAULT_MAX_DIM }
    }
}

impl OracleLimit {
    pub fn validate(&self) -> Result<()> {
        if self.max_dim < 3 {
            return Err(Error::Validation(format!("oracle max_dim must be >= 3, got {}", self.max_dim)));
        }
        Ok(())
    }
}

/// Exact propagation with per-time diagnostics.
#[derive(Debug, Clone)]
pub struct OracleRun {
    /// Raw (unnormalized) coherence ⟨second|ρ_e|first⟩.
    pub curve: CoherenceCurve,
    /// Reduced defect-spin density matrices in the m_S = +1, 0, −1 basis.
    pub electron_states: Vec<[[c64; 3]; 3]>,
    /// max_t |Tr ρ(t) − 1|
    pub max_trace_error: f64,
    /// max_t of the relative anti-Hermitian part of ρ(t)
    pub max_hermiticity_defect: f64,
}

impl OracleRun {
    /// Tr ρ_e² at every time.
    pub fn electron_purity(&self) -> Vec<f64> {
        self.electron_states
            .iter()
            .map(|r| {
                let mut p = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        p += (r[i][j] * r[j][i]).re;
                    }
                }
                p
            })
            .collect()
    }
}

/// Raw Hahn-echo coherence of the whole bath of `system`.
pub fn exact_coherence(system: &SpinSystem, bath_state: &BathState, times: &[f64], limit: OracleLimit) -> Result<CoherenceCurve> {
    Ok(exact_run(system, bath_state, times, limit)?.curve)
}

pub fn exact_run(system: &SpinSystem, bath_state: &BathState, times: &[f64], limit: OracleLimit) -> Result<OracleRun> {
    limit.validate()?;
    bath_state.validate()?;
    let dim = cluster_dimension(&system.bath);
    if dim > limit.max_dim {
        return Err(Error::ClusterTooLarge { dim, cap: limit.max_dim });
    }
    let all: Vec<usize> = (0..system.bath.len()).collect();
    let h = system.clone().with_max_dim(limit.max_dim).cluster_hamiltonian(&all)?;
    let d = dim / 3;
    let eig = linalg::eigh(h.matrix.as_ref())?;
    let v = &eig.vectors;

    // ρ(0) = |+⟩⟨+| ⊗ ρ_B
    let mut rho_b = Mat::from_fn(1, 1, |_, _| c64::new(1.0, 0.0));
    for (i, s) in system.bath.iter().enumerate() {
        let r = bath_state.state_of(i).density_matrix(s.species.twice_spin)?;
        rho_b = linalg::kron(rho_b.as_ref(), r.as_ref());
    }
    let frame = system.frame();
    let plus = frame.plus_state();
    let rho0 = Mat::from_fn(dim, dim, |r, c| plus[r / d] * plus[c / d].conj() * rho_b[(r % d, c % d)]);
    let pulse = frame.pi_pulse();

    let step = |t: f64| -> (c64, [[c64; 3]; 3], f64, f64) {
        let tau = 0.5 * t;
        let phase: Vec<c64> = eig
            .values
            .iter()
            .map(|&e| {
                let a = -2.0 * std::f64::consts::PI * e * tau;
                c64::new(a.cos(), a.sin())
            })
            .collect();
        let vphi = Mat::from_fn(dim, dim, |r, k| v[(r, k)] * phase[k]);
        let mut u = Mat::<c64>::zeros(dim, dim);
        faer::linalg::matmul::matmul(
            u.as_mut(),
            faer::Accum::Replace,
            vphi.as_ref(),
            v.adjoint(),
            c64::new(1.0, 0.0),
            faer::Par::Seq,
        );
        let pu = Mat::from_fn(dim, dim, |r, c| {
            let (e, b) = (r / d, r % d);
            (0..3).map(|e2| pulse[e][e2] * u[(e2 * d + b, c)]).sum::<c64>()
        });
        let w = linalg::mul(u.as_ref(), pu.as_ref());
        let wr = linalg::mul(w.as_ref(), rho0.as_ref());
        let mut rho = Mat::<c64>::zeros(dim, dim);
        faer::linalg::matmul::matmul(
            rho.as_mut(),
            faer::Accum::Replace,
            wr.as_ref(),
            w.adjoint(),
            c64::new(1.0, 0.0),
            faer::Par::Seq,
        );
        let mut re = [[ZERO; 3]; 3];
        for (a, row) in re.iter_mut().enumerate() {
            for (b, x) in row.iter_mut().enumerate() {
                *x = (0..d).map(|k| rho[(a * d + k, b * d + k)]).sum();
            }
        }
        let mut l = ZERO;
        for a in 0..3 {
            for b in 0..3 {
                l += frame.second[a].conj() * re[a][b] * frame.first[b];
            }
        }
        let tr = (linalg::trace(rho.as_ref()) - c64::new(1.0, 0.0)).norm();
        (l, re, tr, linalg::hermiticity_defect(rho.as_ref()))
    };
    let results: Vec<_> = times.par_iter().map(|&t| step(t)).collect();

    let values: Vec<c64> = results.iter().map(|r| r.0).collect();
    Ok(OracleRun {
        curve: CoherenceCurve {
            times: times.to_vec(),
            raw_l0_magnitude: values.first().map_or(0.5, |v| v.norm()),
            values,
            normalized: false,
        },
        electron_states: results.iter().map(|r| r.1).collect(),
        max_trace_error: results.iter().map(|r| r.2).fold(0.0, f64::max),
        max_hermiticity_defect: results.iter().map(|r| r.3).fold(0.0, f64::max),
    })
}

/// Oracle curve divided by the electron-only raw curve, comparable to a
/// normalized gCCE result.
pub fn exact_normalized(system: &SpinSystem, bath_state: &BathState, times: &[f64], limit: OracleLimit) -> Result<CoherenceCurve> {
    let full = exact_coherence(system, bath_state, times, limit)?;
    let empty = SpinSystem::new(system.central, Vec::new(), system.field, system.mode)?;
    let l0 = exact_coherence(&empty, bath_state, times, limit)?;
    Ok(CoherenceCurve {
        times: full.times,
        values: full.values.iter().zip(&l0.values).map(|(a, b)| a / b).collect(),
        normalized: true,
        raw_l0_magnitude: full.raw_l0_magnitude,
    })
}
