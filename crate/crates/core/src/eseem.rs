//! Closed-form first-order echo envelope modulation, the electron-mediated
//! pair coupling estimate, decay fits and modulation spectra.

use crate::cce::CoherenceCurve;
use crate::constants::CONSTANTS;
use crate::model::{BathSpin, CentralSpinParams, MagneticField};
use crate::tensor::Tensor3;
use crate::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Smallest |D − g_e μ_B B_z| accepted by [`effective_flip_coupling`], MHz.
pub const GSLAC_GAP_THRESHOLD: f64 = 1.0;

/// Parameters of one nucleus in the ESEEM product formula. Frequencies in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EseemParams {
    pub twice_spin: u8,
    /// Modulation depth k².
    pub k2: f64,
    /// Signed Larmor frequency g_N μ_N B_z.
    pub omega: f64,
    pub a_par: f64,
    pub a_perp: f64,
}

impl EseemParams {
    pub fn new(twice_spin: u8, omega: f64, a_par: f64, a_perp: f64) -> Self {
        let den = (omega + a_par).powi(2) + a_perp * a_perp;
        let k2 = if a_perp == 0.0 || den == 0.0 { 0.0 } else { a_perp * a_perp / den };
        EseemParams { twice_spin, k2, omega, a_par, a_perp }
    }

    /// A_∥ = A_zz and A_⊥ = √(A_zx² + A_zy²) of a bath spin under a field along c.
    pub fn from_spin(spin: &BathSpin, field: &MagneticField) -> Self {
        let a = &spin.hyperfine;
        EseemParams::new(
            spin.species.twice_spin,
            spin.species.g_n * CONSTANTS.mu_n * field.b_z(),
            a[(2, 2)],
            (a[(2, 0)].powi(2) + a[(2, 1)].powi(2)).sqrt(),
        )
    }

    fn spin(&self) -> f64 {
        self.twice_spin as f64 / 2.0
    }

    /// One factor of the product at time `t` (μs).
    pub fn factor(&self, t: f64) -> f64 {
        let i = self.spin();
        let big = ((self.omega + self.a_par).powi(2) + self.a_perp.powi(2)).sqrt();
        let s1 = (2.0 * PI * big * t / 4.0).sin();
        let s2 = (2.0 * PI * self.omega * t / 4.0).sin();
        1.0 - 8.0 / 3.0 * i * (i + 1.0) * self.k2 * s1 * s1 * s2 * s2
    }
}

/// L₁(t) = ∏ᵢ [1 − (8/3) Iᵢ(Iᵢ+1) kᵢ² sin²(Ωᵢ t/4) sin²(ωᵢ t/4)] with
/// Ωᵢ = √((ωᵢ + A∥ᵢ)² + A⊥ᵢ²), angular frequencies 2π × the MHz values.
pub fn eseem_l1(params: &[EseemParams], times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| params.iter().map(|p| p.factor(t)).product()).collect()
}

/// Second-order estimate of the electron-mediated coupling between two
/// nuclei, ‖A₁⊥‖‖A₂⊥‖ / |D − g_e μ_B B_z| with the x,y-block norms, MHz.
pub fn effective_flip_coupling(a1: &Tensor3, a2: &Tensor3, central: &CentralSpinParams, field: &MagneticField) -> Result<f64> {
    let gap = (central.d_mhz - central.gamma_e() * field.b_z()).abs();
    if gap < GSLAC_GAP_THRESHOLD {
        return Err(Error::GslacVicinity { gap_mhz: gap });
    }
    Ok(a1.transverse_block_norm() * a2.transverse_block_norm() / gap)
}

/// Fitted A·exp(−(t/T2)^n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub t2_us: f64,
    pub stretch_n: f64,
    pub amplitude: f64,
    pub residual_rms: f64,
    /// Whether the fit used the local-maxima envelope.
    pub used_envelope: bool,
}

/// Outcome of [`fit_decay`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DecayFit {
    Fitted(FitResult),
    /// |L| stays above 0.9 at the last time point.
    NoDecayResolved { final_magnitude: f64 },
}

impl DecayFit {
    pub fn t2(&self) -> Option<f64> {
        match self {
            DecayFit::Fitted(f) => Some(f.t2_us),
            DecayFit::NoDecayResolved { .. } => None,
        }
    }

    pub fn fitted(&self) -> Option<&FitResult> {
        match self {
            DecayFit::Fitted(f) => Some(f),
            DecayFit::NoDecayResolved { .. } => None,
        }
    }
}

/// Stretch exponent bounds of the fit model.
pub const STRETCH_MIN: f64 = 0.5;
pub const STRETCH_MAX: f64 = 4.0;
const MIN_SAMPLES: usize = 20;
/// Modulation depth above which the envelope is fitted instead of |L|.
const ENVELOPE_DEPTH: f64 = 0.1;

/// Index 0 followed by the interior local maxima of `y`.
fn local_maxima(y: &[f64]) -> Vec<usize> {
    let mut idx = vec![0];
    for i in 1..y.len().saturating_sub(1) {
        if y[i] > y[i - 1] && y[i] >= y[i + 1] {
            idx.push(i);
        }
    }
    idx
}

/// Upper envelope: linear interpolation through the local maxima, |L|
/// itself beyond the last maximum.
pub fn envelope(times: &[f64], y: &[f64]) -> Vec<f64> {
    let peaks = local_maxima(y);
    let mut out = Vec::with_capacity(y.len());
    let mut k = 0;
    for (i, &t) in times.iter().enumerate() {
        while k + 1 < peaks.len() && peaks[k + 1] <= i {
            k += 1;
        }
        let a = peaks[k];
        if k + 1 == peaks.len() {
            out.push(y[i]);
            continue;
        }
        let b = peaks[k + 1];
        let w = (t - times[a]) / (times[b] - times[a]);
        out.push((y[a] + w * (y[b] - y[a])).max(y[i]));
    }
    out
}

fn model(p: &[f64; 3], t: f64) -> f64 {
    // p = [amplitude, ln T2, n]
    p[0] * (-(t / p[1].exp()).powf(p[2])).exp()
}

fn rms(p: &[f64; 3], t: &[f64], y: &[f64]) -> f64 {
    let s: f64 = t.iter().zip(y).map(|(&t, &y)| (y - model(p, t)).powi(2)).sum();
    (s / t.len() as f64).sqrt()
}

fn clamp(p: &mut [f64; 3]) {
    p[0] = p[0].clamp(1e-6, 10.0);
    p[2] = p[2].clamp(STRETCH_MIN + 1e-9, STRETCH_MAX);
}

/// Levenberg–Marquardt on (A, ln T2, n) with analytic Jacobian.
fn levenberg_marquardt(t: &[f64], y: &[f64], mut p: [f64; 3]) -> [f64; 3] {
    clamp(&mut p);
    let mut lambda = 1e-3;
    let mut cost = rms(&p, t, y);
    for _ in 0..500 {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&ti, &yi) in t.iter().zip(y) {
            let t2 = p[1].exp();
            let x = if ti > 0.0 { ti / t2 } else { 0.0 };
            let xn = if x > 0.0 { x.powf(p[2]) } else { 0.0 };
            let e = (-xn).exp();
            let f = p[0] * e;
            let g = [e, f * xn * p[2], if x > 0.0 { -f * xn * x.ln() } else { 0.0 }];
            let r = yi - f;
            for a in 0..3 {
                jtr[a] += g[a] * r;
                for b in 0..3 {
                    jtj[a][b] += g[a] * g[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * (jtj[a][a] + 1e-12);
            }
            let Some(step) = solve3(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut q = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            clamp(&mut q);
            let c = rms(&q, t, y);
            if c < cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = q;
                cost = c;
                lambda = (lambda / 3.0).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    p
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut mk = m;
        for r in 0..3 {
            mk[r][k] = b[r];
        }
        *o = det(&mk) / d;
    }
    Some(out)
}

/// Fits |L(t)| of a normalized curve with A·exp(−(t/T2)^n).
///
/// The window ends at the first point with |L| < 0.05. If the curve is
/// modulated by more than 0.1 the fit runs through its local maxima.
pub fn fit_decay(curve: &CoherenceCurve) -> Result<DecayFit> {
    if curve.len() < MIN_SAMPLES {
        return Err(Error::Validation(format!(
            "decay fit needs at least {MIN_SAMPLES} samples, got {}",
            curve.len()
        )));
    }
    let mags = curve.magnitudes();
    let last = *mags.last().unwrap();
    if last > 0.9 {
        return Ok(DecayFit::NoDecayResolved { final_magnitude: last });
    }
    let end = mags.iter().position(|&m| m < 0.05).map_or(mags.len(), |i| i + 1);
    let t = &curve.times[..end];
    let y = &mags[..end];
    let env = envelope(t, y);
    let depth = env.iter().zip(y).map(|(e, v)| e - v).fold(0.0, f64::max);
    let used_envelope = depth > ENVELOPE_DEPTH;
    let (tf, yf): (Vec<f64>, Vec<f64>) = if used_envelope {
        local_maxima(y).into_iter().map(|i| (t[i], y[i])).unzip()
    } else {
        (t.to_vec(), y.to_vec())
    };
    let mut fit = fit_points(&tf, &yf);
    fit.used_envelope = used_envelope;
    Ok(DecayFit::Fitted(fit))
}

/// Stretched-exponential fit of explicit points.
pub fn fit_points(t: &[f64], y: &[f64]) -> FitResult {
    // linearized guess: ln(−ln y) = n ln t − n ln T2
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(&t, &y)| t > 0.0 && y > 0.02 && y < 0.98)
        .map(|(&t, &y)| (t.ln(), (-y.ln()).ln()))
        .collect();
    let t_max = t.iter().copied().fold(0.0, f64::max).max(1e-12);
    let (mut n0, mut lt0) = (2.0, (0.5 * t_max).ln());
    if pts.len() >= 2 {
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / m, sy / m);
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 && sxy / sxx > 0.0 {
            n0 = sxy / sxx;
            lt0 = mx - my / n0;
        }
    }
    let mut best: Option<([f64; 3], f64)> = None;
    for n_start in [n0, 1.0, 2.0, 3.0] {
        let p = levenberg_marquardt(t, y, [1.0, lt0, n_start.clamp(STRETCH_MIN + 0.01, STRETCH_MAX)]);
        let c = rms(&p, t, y);
        if best.map_or(true, |(_, bc)| c < bc) {
            best = Some((p, c));
        }
    }
    let (p, c) = best.expect("at least one start");
    FitResult { t2_us: p[1].exp(), stretch_n: p[2], amplitude: p[0], residual_rms: c, used_envelope: false }
}

/// One line of a modulation spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    pub frequency_mhz: f64,
    /// Amplitude of the relative modulation at this frequency.
    pub weight: f64,
}

/// Default Nyquist requirement of [`modulation_spectrum`], MHz.
pub const DEFAULT_MIN_NYQUIST_MHZ: f64 = 100.0;
const PEAK_FLOOR: f64 = 1e-6;

/// Spectrum of the modulation of |L(t)| around its local-maxima envelope,
/// peaks sorted by descending weight.
pub fn modulation_spectrum(curve: &CoherenceCurve, min_nyquist_mhz: f64) -> Result<Vec<SpectralPeak>> {
    let t = &curve.times;
    let n = t.len();
    if n < 4 {
        return Err(Error::Validation("spectrum needs at least four samples".into()));
    }
    let dt = t[1] - t[0];
    if !(dt > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::Validation("spectrum needs a uniform time grid".into()));
    }
    let nyquist = 0.5 / dt;
    if nyquist < min_nyquist_mhz {
        return Err(Error::Nyquist { nyquist_mhz: nyquist, required_mhz: min_nyquist_mhz });
    }
    let mags = curve.magnitudes();
    let env = envelope(t, &mags);
    let mut s: Vec<f64> = mags.iter().zip(&env).map(|(m, e)| if *e > 1e-12 { m / e } else { 1.0 }).collect();
    let mean = s.iter().sum::<f64>() / n as f64;
    s.iter_mut().for_each(|v| *v -= mean);

    let padded = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = s.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(padded, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let amp: Vec<f64> = buf[..=padded / 2].iter().map(|c| 2.0 * c.norm() / n as f64).collect();
    let df = 1.0 / (padded as f64 * dt);

    let mut peaks = Vec::new();
    for k in 1..amp.len() - 1 {
        if amp[k] > PEAK_FLOOR && amp[k] > amp[k - 1] && amp[k] >= amp[k + 1] {
            // parabolic refinement of the bin position
            let (a, b, c) = (amp[k - 1], amp[k], amp[k + 1]);
            let den = a - 2.0 * b + c;
            let shift = if den.abs() > 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            peaks.push(SpectralPeak { frequency_mhz: (k as f64 + shift) * df, weight: b });
        }
    }
    peaks.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    Ok(peaks)
}
