//! Pulse construction: resonant single-qubit drives (plain and
//! derivative-corrected), synchronized gate-time solutions, adiabatic CZ
//! barrier pulses, and the driven-exchange SWAP pulse with its phase
//! tracking.
//!
//! All envelopes are emitted on an inclusive uniform grid t_k = k·dt covering
//! [0, t_g]. Amplitudes are physical: `envelope_x` *is* the on-resonance Rabi
//! frequency in GHz, so the accumulated flip angle is 2π·∫envelope_x dt.

use crate::exchange::{
    bessel_i, delta_ez_of_v, j_of_v, v_of_j, ExchangeError, ExchangeModel, ZeemanShiftModel,
};
use crate::sigchain::{
    butterworth_lowpass_from, frequency_response, FilterSpec, SampledWaveform, SigchainError,
};
use crate::windows::{sample_window, WindowKind, WindowsError};
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShaperError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("amplitude solve not bracketed: {0}")]
    NotBracketed(String),
    #[error("pulse cannot be represented in voltage: {0}")]
    UnrepresentableVoltage(String),
    #[error("phase ODE produced a non-finite value at step {step}")]
    OdeDiverged { step: usize },
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Sigchain(#[from] SigchainError),
    #[error(transparent)]
    Windows(#[from] WindowsError),
}

// ---------------------------------------------------------------------------
// small uniform-grid calculus helpers shared by the constructors

pub(crate) fn trapz(dt: f64, y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let inner: f64 = y[1..y.len() - 1].iter().sum();
    dt * (0.5 * (y[0] + y[y.len() - 1]) + inner)
}

pub(crate) fn cumtrapz(dt: f64, y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..y.len() {
        acc += 0.5 * dt * (y[k - 1] + y[k]);
        out.push(acc);
    }
    out
}

/// Second-order finite difference: centered inside, one-sided at the ends.
pub(crate) fn deriv(dt: f64, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    assert!(n >= 3, "derivative needs at least 3 samples");
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt);
    for k in 1..n - 1 {
        out[k] = (y[k + 1] - y[k - 1]) / (2.0 * dt);
    }
    out[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * dt);
    out
}

fn grid_len(t_g: f64, dt: f64) -> Result<usize, ShaperError> {
    if !(t_g > 0.0) || !(dt > 0.0) {
        return Err(ShaperError::BadInput(format!(
            "need t_g > 0 and dt > 0, got t_g = {t_g}, dt = {dt}"
        )));
    }
    let n = (t_g / dt).round() as usize + 1;
    if n < 3 {
        return Err(ShaperError::BadInput(format!(
            "grid too coarse: dt = {dt} leaves {n} samples over t_g = {t_g}"
        )));
    }
    Ok(n)
}

// ---------------------------------------------------------------------------
// pulse containers

/// A resonant microwave pulse in its I/Q decomposition. The drive applied to
/// the device is envelope_x·cos(2πν_D t + θ) + envelope_y·sin(2πν_D t + θ).
#[derive(Clone, Debug, PartialEq)]
pub struct IqPulse {
    /// Gate duration, ns.
    pub t_g: f64,
    /// Sample spacing, ns (inclusive grid: n = t_g/dt + 1).
    pub dt: f64,
    /// In-phase envelope, GHz (equals the instantaneous Rabi frequency when
    /// envelope_y = 0).
    pub envelope_x: Vec<f64>,
    /// Quadrature envelope, GHz.
    pub envelope_y: Vec<f64>,
    /// Slow phase-tracking offset θ(t), rad.
    pub theta: Vec<f64>,
    /// Carrier frequency ν_D, GHz.
    pub drive_freq: f64,
    /// Which qubit the carrier addresses (1 or 2).
    pub target_qubit: u8,
}

impl IqPulse {
    pub fn n_samples(&self) -> usize {
        self.envelope_x.len()
    }

    /// Accumulated flip angle 2π·∫√(x² + y²) dt, rad.
    pub fn flip_angle(&self) -> f64 {
        let mag: Vec<f64> = self
            .envelope_x
            .iter()
            .zip(&self.envelope_y)
            .map(|(&x, &y)| (x * x + y * y).sqrt())
            .collect();
        TAU * trapz(self.dt, &mag)
    }
}

/// Carrier block of an AC (driven-exchange) barrier pulse.
#[derive(Clone, Debug, PartialEq)]
pub struct AcCarrier {
    /// Carrier frequency, GHz.
    pub nu_st: f64,
    /// Slow drive envelope v_B1(t), mV.
    pub envelope_mv: Vec<f64>,
    /// Phase-tracking offset θ_j(t), rad, on the same grid.
    pub theta_j: Vec<f64>,
    /// Accumulated exchange phase π·∫⟨J⟩ dt picked up by the odd-parity
    /// block during the pulse, rad.
    pub phi_swap: f64,
    /// Dimensionless envelope scale fixed by the flip-area calibration.
    pub kappa: f64,
}

/// A barrier-gate voltage pulse. DC pulses carry the exchange profile in
/// `j_samples` (and the voltage when it exists); AC pulses carry the carrier
/// block and keep `j_samples` as the cycle-averaged exchange.
#[derive(Clone, Debug, PartialEq)]
pub struct VoltagePulse {
    pub t_g: f64,
    pub dt: f64,
    /// Exchange profile, GHz. For AC pulses: the cycle-averaged exchange.
    pub j_samples: Vec<f64>,
    /// Absolute barrier voltage, mV, when the profile is representable
    /// (strictly positive exchange with a finite resting level).
    pub v_samples: Option<Vec<f64>>,
    /// Resting voltage, mV, when representable.
    pub baseline_v: Option<f64>,
    /// Resting exchange: the residual J for DC pulses, the bias J₀ for AC
    /// pulses, GHz.
    pub j_res: f64,
    /// Target conditional phase 2π·∫(J − J_res) dt for DC pulses, rad.
    pub phi_cz: f64,
    pub carrier: Option<AcCarrier>,
}

// ---------------------------------------------------------------------------
// single-qubit pulses

fn validate_qubit(q: u8) -> Result<(), ShaperError> {
    if q == 1 || q == 2 {
        Ok(())
    } else {
        Err(ShaperError::BadInput(format!("target qubit must be 1 or 2, got {q}")))
    }
}

/// Plain windowed resonant pulse: envelope_x(t) = angle·w(t)/(2π·t_g) with
/// the window normalized to unit mean, so the flip angle comes out exactly
/// `angle`.
pub fn static_1q_pulse(
    kind: &WindowKind,
    t_g: f64,
    dt: f64,
    angle: f64,
    drive_freq: f64,
    target_qubit: u8,
) -> Result<IqPulse, ShaperError> {
    validate_qubit(target_qubit)?;
    let n = grid_len(t_g, dt)?;
    let w = sample_window(kind, t_g, n);
    let c = angle / (TAU * t_g);
    Ok(IqPulse {
        t_g,
        dt: t_g / (n - 1) as f64,
        envelope_x: w.iter().map(|&wk| c * wk).collect(),
        envelope_y: vec![0.0; n],
        theta: vec![0.0; n],
        drive_freq,
        target_qubit,
    })
}

/// Knobs for the derivative-corrected pulse.
#[derive(Clone, Copy, Debug)]
pub struct DragParams {
    /// Self-consistency sweeps for the quadrature correction.
    pub iterations: usize,
    /// Track the second-order AC-Stark phase θ̇ = −2π·B_y²/ΔEz.
    pub track_phase: bool,
}

impl Default for DragParams {
    fn default() -> Self {
        DragParams { iterations: 4, track_phase: true }
    }
}

/// Derivative-corrected resonant pulse. The quadrature is built so that the
/// off-resonant spectator transition (detuned by ±ΔEz) sees no net spectral
/// weight at its dressed frequency: with the dressed phase rate
/// ḟ(t) = 2π·sgn·√((ΔEz − θ̇/2π)² + B_x² + B_y²) — the detuning measured
/// from the phase-modulated carrier — the choice B_y = −d/dt[B_x/ḟ]
/// integrates the spectator error channel by parts to a pure boundary term,
/// which vanishes for windows with w(0) = w(t_g) = 0.
///
/// `delta_ez` is the (positive) splitting difference; the sign of the
/// spectator detuning follows from which qubit is driven.
pub fn drag_1q_pulse(
    kind: &WindowKind,
    t_g: f64,
    dt: f64,
    angle: f64,
    drive_freq: f64,
    target_qubit: u8,
    delta_ez: f64,
    params: DragParams,
) -> Result<IqPulse, ShaperError> {
    validate_qubit(target_qubit)?;
    if delta_ez == 0.0 || !delta_ez.is_finite() {
        return Err(ShaperError::BadInput(format!(
            "derivative correction needs a finite nonzero splitting, got {delta_ez}"
        )));
    }
    let eff = if target_qubit == 2 { delta_ez } else { -delta_ez };
    let n = grid_len(t_g, dt)?;
    let dt = t_g / (n - 1) as f64;
    let w = sample_window(kind, t_g, n);

    let c0 = angle / (TAU * t_g);
    let mut bx: Vec<f64> = w.iter().map(|&wk| c0 * wk).collect();
    let mut by = vec![0.0; n];
    let mut thdot = vec![0.0; n];
    let sgn = eff.signum();

    for _ in 0..params.iterations.max(1) {
        // signed dressed rotation rate of the spectator transition, rad/ns
        let fdot: Vec<f64> = (0..n)
            .map(|k| {
                let d = eff - thdot[k] / TAU;
                sgn * TAU * (d * d + bx[k] * bx[k] + by[k] * by[k]).sqrt()
            })
            .collect();
        let u: Vec<f64> = (0..n).map(|k| bx[k] / fdot[k]).collect();
        by = deriv(dt, &u).iter().map(|&d| -d).collect();
        if params.track_phase {
            thdot = by.iter().map(|&y| -TAU * y * y / eff).collect();
        }
        // re-pin the flip angle exactly; the quadrature scales along
        let mag: Vec<f64> =
            (0..n).map(|k| (bx[k] * bx[k] + by[k] * by[k]).sqrt()).collect();
        let scale = angle / (TAU * trapz(dt, &mag));
        for k in 0..n {
            bx[k] *= scale;
            by[k] *= scale;
        }
    }
    if params.track_phase {
        // refresh the phase for the final amplitudes
        thdot = by.iter().map(|&y| -TAU * y * y / eff).collect();
    }
    let theta = cumtrapz(dt, &thdot);
    Ok(IqPulse {
        t_g,
        dt,
        envelope_x: bx,
        envelope_y: by,
        theta,
        drive_freq,
        target_qubit,
    })
}

// ---------------------------------------------------------------------------
// synchronized gate times

/// Which rotation the synchronization targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateAngle {
    Pi,
    PiHalf,
}

/// One synchronized operating point: with the companion drive amplitude set
/// to `amplitude`, the spectator's dressed precession completes an integer
/// (π/2 gates) or half-integer (π gates) number of cycles during the flip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyncSolution {
    /// Dressed-cycle count.
    pub m: u32,
    /// Flip-angle branch index (flips of (4n+1)·π/2 resp. (2n+1)·π).
    pub n: u32,
    /// Companion amplitude, GHz.
    pub amplitude: f64,
    /// Gate time of the equal-amplitude (simultaneous) solution for this m,
    /// ns.
    pub t_g_equal: f64,
}

/// Enumerates synchronized amplitude solutions for a resonant gate on one
/// qubit while the other is driven with amplitude `bx_drive`:
/// B = c·√(bx_drive²/4 + ΔEz²) with c = (4n+1)/(2m) for π/2 rotations and
/// c = (2n+1)/m for π rotations (π flips need only half a dressed cycle).
pub fn sync_1q(
    delta_ez: f64,
    bx_drive: f64,
    gate: GateAngle,
    m_max: u32,
    n_max: u32,
) -> Result<Vec<SyncSolution>, ShaperError> {
    if !(delta_ez > 0.0) {
        return Err(ShaperError::BadInput(format!(
            "synchronization needs ΔEz > 0, got {delta_ez}"
        )));
    }
    let nu_gen = (0.25 * bx_drive * bx_drive + delta_ez * delta_ez).sqrt();
    let mut out = Vec::new();
    for m in 1..=m_max {
        let mf = m as f64;
        let t_g_equal = match gate {
            GateAngle::PiHalf => (16.0 * mf * mf - 1.0).sqrt() / (4.0 * delta_ez),
            GateAngle::Pi => (4.0 * mf * mf - 1.0).sqrt() / (2.0 * delta_ez),
        };
        for n in 0..=n_max {
            let nf = n as f64;
            let coef = match gate {
                GateAngle::PiHalf => (4.0 * nf + 1.0) / (2.0 * mf),
                GateAngle::Pi => (2.0 * nf + 1.0) / mf,
            };
            out.push(SyncSolution { m, n, amplitude: coef * nu_gen, t_g_equal });
        }
    }
    Ok(out)
}

/// Gate time at which the spectator phase wound up during an adiabatic CZ
/// pulse closes: t_g = √(4m²−1)/(2ΔEz). Identical to the equal-amplitude π
/// synchronization times.
pub fn sync_cz(delta_ez: f64, m: u32) -> f64 {
    let mf = m as f64;
    (4.0 * mf * mf - 1.0).sqrt() / (2.0 * delta_ez)
}

// ---------------------------------------------------------------------------
// adiabatic CZ barrier pulse

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CzMode {
    /// J(t) = J_res + (Φ_cz/2π)·w(t)/t_g directly from the window.
    Simplified,
    /// Window applied to the adiabatic mixing angle in the dilated frame:
    /// J(s) = tan(2A·w(t_g·s) + arctan(J_res/ΔEz))·ΔEz(s), with A solved so
    /// the total conditional phase 2π·∫J dt hits Φ_cz.
    Full,
}

/// Builds the barrier pulse of an adiabatic CZ gate.
pub fn cz_pulse(
    kind: &WindowKind,
    t_g: f64,
    dt: f64,
    model: &ExchangeModel,
    shift: &ZeemanShiftModel,
    j_res: f64,
    phi_cz: f64,
    mode: CzMode,
) -> Result<VoltagePulse, ShaperError> {
    if j_res < 0.0 {
        return Err(ShaperError::BadInput(format!("residual exchange must be ≥ 0, got {j_res}")));
    }
    if !(phi_cz > 0.0) {
        return Err(ShaperError::BadInput(format!("conditional phase must be > 0, got {phi_cz}")));
    }
    let n = grid_len(t_g, dt)?;
    let dt = t_g / (n - 1) as f64;
    let j_samples = match mode {
        CzMode::Simplified => {
            let w = sample_window(kind, t_g, n);
            w.iter().map(|&wk| j_res + phi_cz / TAU * wk / t_g).collect::<Vec<f64>>()
        }
        CzMode::Full => cz_full_profile(kind, t_g, n, model, shift, j_res, phi_cz)?,
    };
    finish_dc_pulse(t_g, dt, model, j_res, phi_cz, j_samples)
}

fn finish_dc_pulse(
    t_g: f64,
    dt: f64,
    model: &ExchangeModel,
    j_res: f64,
    phi_cz: f64,
    j_samples: Vec<f64>,
) -> Result<VoltagePulse, ShaperError> {
    let (v_samples, baseline_v) = if j_res > 0.0 {
        let mut v = Vec::with_capacity(j_samples.len());
        for &j in &j_samples {
            v.push(v_of_j(model, j)?);
        }
        (Some(v), Some(v_of_j(model, j_res)?))
    } else {
        // the resting level sits at J = 0, which has no finite voltage
        (None, None)
    };
    Ok(VoltagePulse {
        t_g,
        dt,
        j_samples,
        v_samples,
        baseline_v,
        j_res,
        phi_cz,
        carrier: None,
    })
}

/// Fixed-point + bisection solve of the full adiabatic profile. Works in the
/// dilated coordinate s where the two-spin phase advances uniformly; the
/// window shapes the mixing angle there.
fn cz_full_profile(
    kind: &WindowKind,
    t_g: f64,
    n: usize,
    model: &ExchangeModel,
    shift: &ZeemanShiftModel,
    j_res: f64,
    phi_cz: f64,
) -> Result<Vec<f64>, ShaperError> {
    let delta0 = shift.delta_ez0;
    if !(delta0 > 0.0) {
        return Err(ShaperError::BadInput(format!(
            "full mode needs ΔEz > 0 at the bias, got {delta0}"
        )));
    }
    if j_res == 0.0 && shift.beta != 0.0 {
        return Err(ShaperError::UnrepresentableVoltage(
            "a Zeeman lever arm needs a finite resting voltage, but J_res = 0 has none".into(),
        ));
    }
    let v_b0 = if j_res > 0.0 { Some(v_of_j(model, j_res)?) } else { None };
    let chi0 = (j_res / delta0).atan();
    let w_s = sample_window(kind, t_g, n); // shape in the dilated coordinate
    let w_max = w_s.iter().cloned().fold(0.0, f64::max);
    if !(w_max > 0.0) {
        return Err(ShaperError::BadInput("window has no positive part".into()));
    }
    let ds = 1.0 / (n - 1) as f64;

    // evaluates the achieved conditional phase for a given angle scale A and
    // returns the converged profile in s together with the time map
    let evaluate = |a: f64| -> Result<(f64, Vec<f64>, Vec<f64>), ShaperError> {
        let mut t_s: Vec<f64> = (0..n).map(|k| t_g * k as f64 * ds).collect();
        let mut dez = vec![delta0; n];
        let mut j_s = vec![j_res; n];
        for _ in 0..8 {
            for k in 0..n {
                let arg = 2.0 * a * w_s[k] + chi0;
                if arg >= 0.5 * PI {
                    return Err(ShaperError::NotBracketed(format!(
                        "mixing angle {arg:.4} rad reached π/2; amplitude {a} too large"
                    )));
                }
                j_s[k] = arg.tan() * dez[k];
            }
            if let (Some(v0), true) = (v_b0, shift.beta != 0.0) {
                for k in 0..n {
                    let v = v_of_j(model, j_s[k].max(f64::MIN_POSITIVE))?;
                    dez[k] = delta_ez_of_v(shift, v, v0);
                    if !(dez[k] > 0.0) {
                        return Err(ShaperError::BadInput(format!(
                            "Zeeman shift drove ΔEz non-positive at sample {k}"
                        )));
                    }
                }
            }
            // rebuild the time map from the two-spin rate ν_j = √(ΔEz² + J²)
            let inv_nu: Vec<f64> = (0..n)
                .map(|k| 1.0 / (dez[k] * dez[k] + j_s[k] * j_s[k]).sqrt())
                .collect();
            let tau = cumtrapz(ds, &inv_nu);
            let total = *tau.last().unwrap();
            for k in 0..n {
                t_s[k] = t_g * tau[k] / total;
            }
        }
        // conditional phase 2π·∫J dt = 2π·∫ J(s)·(dt/ds) ds
        let total_tau = {
            let inv_nu: Vec<f64> = (0..n)
                .map(|k| 1.0 / (dez[k] * dez[k] + j_s[k] * j_s[k]).sqrt())
                .collect();
            *cumtrapz(ds, &inv_nu).last().unwrap()
        };
        let integrand: Vec<f64> = (0..n)
            .map(|k| {
                let nu = (dez[k] * dez[k] + j_s[k] * j_s[k]).sqrt();
                j_s[k] * (t_g / total_tau) / nu
            })
            .collect();
        let area = TAU * trapz(ds, &integrand);
        Ok((area, j_s, t_s))
    };

    // geometric cap on A (mixing angle must stay below π/2), shrunk further
    // if the exchange model saturates first
    let mut a_hi = (0.49995 * PI - chi0) / (2.0 * w_max);
    let mut hi_area = None;
    for _ in 0..200 {
        match evaluate(a_hi) {
            Ok((area, _, _)) => {
                hi_area = Some(area);
                break;
            }
            Err(ShaperError::Exchange(_)) | Err(ShaperError::NotBracketed(_)) => a_hi *= 0.85,
            Err(e) => return Err(e),
        }
    }
    let hi_area = hi_area.ok_or_else(|| {
        ShaperError::NotBracketed("no feasible amplitude below the saturation cap".into())
    })?;
    let base_area = TAU * j_res * t_g;
    if phi_cz <= base_area {
        return Err(ShaperError::NotBracketed(format!(
            "requested phase {phi_cz:.6} rad is below the resting background {base_area:.6} rad"
        )));
    }
    if hi_area < phi_cz {
        return Err(ShaperError::NotBracketed(format!(
            "requested phase {phi_cz:.4} rad exceeds the achievable {hi_area:.4} rad at t_g = {t_g} ns"
        )));
    }
    let mut lo = 0.0;
    let mut hi = a_hi;
    let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (area, j_s, t_s) = evaluate(mid)?;
        if area < phi_cz {
            lo = mid;
        } else {
            hi = mid;
        }
        best = Some((j_s, t_s));
        if (area - phi_cz).abs() <= 1e-11 * phi_cz {
            break;
        }
    }
    let (j_s, t_s) = best.unwrap();

    // resample the profile from the dilated solution onto the uniform grid
    let dt = t_g / (n - 1) as f64;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        // invert the monotone map t_s by binary search
        let mut a = 0usize;
        let mut b = n - 1;
        while b - a > 1 {
            let m = (a + b) / 2;
            if t_s[m] <= t {
                a = m;
            } else {
                b = m;
            }
        }
        let span = (t_s[b] - t_s[a]).max(f64::MIN_POSITIVE);
        let f = ((t - t_s[a]) / span).clamp(0.0, 1.0);
        out.push(j_s[a] * (1.0 - f) + j_s[b] * f);
    }
    Ok(out)
}

/// Measures how much the conditional-phase area of a DC pulse drifts when
/// the waveform passes through the line filter. Returns the relative drift
/// |2π·∫(J_filt − J_res) dt − Φ_cz| / Φ_cz, integrated over the pulse plus a
/// 3τ settling tail.
pub fn filtered_area_drift(
    pulse: &VoltagePulse,
    model: &ExchangeModel,
    filter: &FilterSpec,
) -> Result<f64, ShaperError> {
    if pulse.carrier.is_some() {
        return Err(ShaperError::BadInput("area drift is defined for DC pulses".into()));
    }
    let v = pulse.v_samples.as_ref().ok_or_else(|| {
        ShaperError::UnrepresentableVoltage(
            "filtering needs a voltage waveform; this pulse rests at J = 0".into(),
        )
    })?;
    let baseline = pulse.baseline_v.unwrap();
    let n_tail = (3.0 * filter.tau() / pulse.dt).ceil() as usize;
    let mut samples = v.clone();
    samples.extend(std::iter::repeat(baseline).take(n_tail));
    let wave = SampledWaveform::new(pulse.dt, samples);
    let filtered = butterworth_lowpass_from(&wave, filter, baseline)?;
    let j: Vec<f64> = filtered.samples.iter().map(|&vk| j_of_v(model, vk) - pulse.j_res).collect();
    let area = TAU * trapz(pulse.dt, &j);
    Ok((area - pulse.phi_cz).abs() / pulse.phi_cz)
}

// ---------------------------------------------------------------------------
// driven-exchange SWAP pulse

/// How the slow phase offset θ_j(t) of the carrier is tracked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwapPhaseMode {
    /// No tracking: θ_j ≡ 0.
    None,
    /// Closed-form harmonic bookkeeping through the modified-Bessel sideband
    /// amplitudes of the exponential exchange map.
    Bessel,
    /// Direct integration of the first-order memory equation for the dressed
    /// phase.
    Ode,
}

/// Builds the resonantly driven exchange pulse that swaps the two spins.
///
/// The barrier is driven as v(t) = v_B0 + v_B1(t)·cos(2πν_ST·t + θ_j(t))
/// with ν_ST = √(ΔEz² + J₀²) and the envelope
/// v_B1(t) = ln(κ·w(t)/(4·J₀·t_g) + 1)/(2α). The scale κ is solved so the
/// first-harmonic flip area ∫b₁ dt equals flip_angle/π.
///
/// When a filter spec is supplied (and enabled), the constructor models the
/// line's action on the drive in complex baseband: the response to
/// v₁(t)·cos(2πνt + ϑ(t)) is Re{env(t)·e^{i2πνt}} with env obtained from
/// two quadrature passes through the causal filter. The flip area is then
/// calibrated on the *arriving* envelope |env|, the phase bookkeeping runs
/// on |env|, and the composed carrier phase is pre-distorted by the
/// filter's phase contribution so the tracked phase is what the device
/// actually sees.
pub fn swap_ac_pulse(
    kind: &WindowKind,
    t_g: f64,
    dt: f64,
    model: &ExchangeModel,
    shift: &ZeemanShiftModel,
    delta_ez: f64,
    j0: f64,
    flip_angle: f64,
    phase_mode: SwapPhaseMode,
    filter: Option<&FilterSpec>,
) -> Result<VoltagePulse, ShaperError> {
    let alpha = match *model {
        ExchangeModel::Exponential { alpha, .. } => alpha,
        ExchangeModel::Saturating { .. } => {
            return Err(ShaperError::BadInput(
                "the driven-exchange envelope is defined for the exponential model".into(),
            ))
        }
    };
    if !(delta_ez > 0.0) || !(j0 > 0.0) {
        return Err(ShaperError::BadInput(format!(
            "need ΔEz > 0 and J₀ > 0, got ΔEz = {delta_ez}, J₀ = {j0}"
        )));
    }
    if flip_angle < 0.0 {
        return Err(ShaperError::BadInput(format!("flip angle must be ≥ 0, got {flip_angle}")));
    }
    let n = grid_len(t_g, dt)?;
    let dt = t_g / (n - 1) as f64;
    let w = sample_window(kind, t_g, n);
    let v_b0 = v_of_j(model, j0)?;
    let nu = (delta_ez * delta_ez + j0 * j0).sqrt();
    let filt = filter.filter(|f| f.enabled);
    if let Some(f) = filt {
        f.tau(); // touch to make intent clear; validation happens in the run
        if dt * nu > 0.05 {
            return Err(ShaperError::BadInput(format!(
                "dt = {dt} under-resolves the carrier at ν = {nu}; need dt·ν ≤ 0.05"
            )));
        }
    }

    let envelope = |kappa: f64| -> Vec<f64> {
        w.iter().map(|&wk| (kappa * wk / (4.0 * j0 * t_g) + 1.0).ln() / (2.0 * alpha)).collect()
    };
    // first-harmonic flip rate b₁ = (2·ΔEz·J₀·I₁(2αv) − J₀·β·v)/ν of an
    // arriving envelope sample v
    let b1_of = |v: f64| -> f64 {
        (2.0 * delta_ez * j0 * bessel_i(1, 2.0 * alpha * v) - j0 * shift.beta * v) / nu
    };
    // Complex-baseband response of the line to v₁(t)·cos(2πνt + ϑ(t)):
    // returns (|env|, arg env) on the pulse-plus-settling grid, the phase
    // unwrapped and held wherever the envelope is too small to define one.
    let baseband = |v1: &[f64],
                    theta: &[f64],
                    f: &FilterSpec|
     -> Result<(Vec<f64>, Vec<f64>), ShaperError> {
        let n_tail = (3.0 * f.tau() / dt).ceil() as usize;
        let m = v1.len() + n_tail;
        let mut xc = Vec::with_capacity(m);
        let mut xs = Vec::with_capacity(m);
        for k in 0..m {
            let (v, th) = if k < v1.len() { (v1[k], theta[k]) } else { (0.0, 0.0) };
            let ph = TAU * nu * k as f64 * dt + th;
            xc.push(v * ph.cos());
            xs.push(v * ph.sin());
        }
        let yc = butterworth_lowpass_from(&SampledWaveform::new(dt, xc), f, 0.0)?;
        let ys = butterworth_lowpass_from(&SampledWaveform::new(dt, xs), f, 0.0)?;
        let env: Vec<Complex64> = (0..m)
            .map(|k| {
                Complex64::new(yc.samples[k], ys.samples[k])
                    * Complex64::from_polar(1.0, -TAU * nu * k as f64 * dt)
            })
            .collect();
        let amp: Vec<f64> = env.iter().map(|z| z.norm()).collect();
        let peak = amp.iter().cloned().fold(0.0, f64::max);
        let mut phi = Vec::with_capacity(m);
        let mut prev = 0.0f64;
        for k in 0..m {
            let mut p = if amp[k] > 1e-6 * peak { env[k].arg() } else { prev };
            while p - prev > PI {
                p -= TAU;
            }
            while p - prev < -PI {
                p += TAU;
            }
            phi.push(p);
            prev = p;
        }
        Ok((amp, phi))
    };

    // solve κ by bisection on the (monotone) flip area ∫b₁ dt, evaluated on
    // the envelope the device sees
    let target = flip_angle / PI;
    let metric = |kappa: f64| -> Result<f64, ShaperError> {
        let v1 = envelope(kappa);
        let area = match filt {
            Some(f) => {
                let (amp, _) = baseband(&v1, &vec![0.0; v1.len()], f)?;
                let b1: Vec<f64> = amp.iter().map(|&a| b1_of(a)).collect();
                trapz(dt, &b1)
            }
            None => {
                let b1: Vec<f64> = v1.iter().map(|&v| b1_of(v)).collect();
                trapz(dt, &b1)
            }
        };
        Ok(area)
    };
    let kappa = if flip_angle == 0.0 {
        0.0
    } else {
        let mut hi = 1.0;
        let mut doubles = 0;
        while metric(hi)? < target {
            hi *= 2.0;
            doubles += 1;
            if doubles > 60 {
                return Err(ShaperError::NotBracketed(format!(
                    "flip angle {flip_angle} not reachable: metric {} at κ = {hi}",
                    metric(hi)?
                )));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if metric(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi.max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let v1 = envelope(kappa);

    // required tracking phase for an arriving envelope, per mode
    let theta_required = |v: &[f64]| -> Result<Vec<f64>, ShaperError> {
        Ok(match phase_mode {
            SwapPhaseMode::None => vec![0.0; v.len()],
            SwapPhaseMode::Bessel => {
                let thdot = bessel_phase_rate(v, alpha, j0, delta_ez, nu, shift.beta);
                cumtrapz(dt, &thdot)
            }
            SwapPhaseMode::Ode => {
                if dt * nu > 0.05 {
                    return Err(ShaperError::BadInput(format!(
                        "dt = {dt} under-resolves the carrier at ν = {nu}; need dt·ν ≤ 0.05"
                    )));
                }
                ode_phase(v, dt, alpha, j0, delta_ez, nu, shift.beta)?
            }
        })
    };

    // The phase bookkeeping runs on the envelope the device sees, and the
    // composed phase is pre-distorted so the *arriving* phase equals the
    // required track: θ_design ← θ_design + (θ_required(|env|) − arg env),
    // iterated to self-consistency (the correction is slow, so two passes
    // converge).
    let (v_eff, theta_j) = match filt {
        None => {
            let th = theta_required(&v1)?;
            (v1.clone(), th)
        }
        Some(f) => {
            let mut theta_design = vec![0.0; n];
            let mut v_eff: Vec<f64>;
            let track = !matches!(phase_mode, SwapPhaseMode::None);
            let passes = if track { 3 } else { 1 };
            let mut last = (Vec::new(), Vec::new());
            for _ in 0..passes {
                last = baseband(&v1, &theta_design, f)?;
                let (amp, psi) = (&last.0, &last.1);
                if track {
                    let th_req = theta_required(&amp[..n])?;
                    for k in 0..n {
                        theta_design[k] += th_req[k] - psi[k];
                    }
                }
            }
            v_eff = last.0;
            v_eff.truncate(n);
            (v_eff, theta_design)
        }
    };

    // cycle-averaged exchange and the accumulated odd-block phase
    let j_avg: Vec<f64> = v_eff.iter().map(|&v| j0 * bessel_i(0, 2.0 * alpha * v)).collect();
    let phi_swap = PI * trapz(dt, &j_avg);

    Ok(VoltagePulse {
        t_g,
        dt,
        j_samples: j_avg,
        v_samples: None,
        baseline_v: Some(v_b0),
        j_res: j0,
        phi_cz: 0.0,
        carrier: Some(AcCarrier {
            nu_st: nu,
            envelope_mv: v1,
            theta_j,
            phi_swap,
            kappa,
        }),
    })
}

const SIDEBAND_MAX: usize = 10;

/// Closed-form secular phase rate θ̇_j(t) of the driven exponential
/// exchange. The transverse coupling is expanded in carrier harmonics,
///   X̃(t) = Σ_m b_m(t)·cos(2πνmt),   with
///   b₀ = ΔEz(𝒥₀ − J₀)/ν,  b₁ = (2ΔEz𝒥₁ − J₀βv₁)/ν,  b_k = 2ΔEz𝒥_k/ν,
///   𝒥_k = J₀·I_k(2αv₁),
/// and the memory equation for the slow phase is averaged over a carrier
/// cycle (the envelope is treated as frozen and switched on smoothly, so
/// boundary terms of the memory kernel vanish). The result is
///   θ̇/2π = (J₀𝒥₀ + ΔEz² − ν²)/ν + D/ν,
///   D = −b₀(b₀/2 + b₂/4) − (b₁/4)·(b₁ + b₃)/4
///       + Σ_{m≥2} (b_m/2)·[P_{m−1}/(m−1) − P_{m+1}/(m+1)],
///   P₁ = b₀/2 + b₂/4,  P_a = (b_{a−1} + b_{a+1})/4 (a ≥ 2).
/// In the weak-drive limit D → −b₁²/16, i.e. θ̇ → −π·b₁²/(8ν) rad/ns, the
/// dressed rate of the exactly solvable resonant two-level limit.
fn bessel_phase_rate(
    v1: &[f64],
    alpha: f64,
    j0: f64,
    delta_ez: f64,
    nu: f64,
    beta: f64,
) -> Vec<f64> {
    v1.iter()
        .map(|&v| {
            let x = 2.0 * alpha * v;
            let jk: Vec<f64> = (0..=SIDEBAND_MAX + 2).map(|k| j0 * bessel_i(k, x)).collect();
            let mut b = vec![0.0; SIDEBAND_MAX + 3];
            b[0] = delta_ez * (jk[0] - j0) / nu;
            b[1] = (2.0 * delta_ez * jk[1] - j0 * beta * v) / nu;
            for k in 2..=SIDEBAND_MAX + 2 {
                b[k] = 2.0 * delta_ez * jk[k] / nu;
            }
            let p1 = 0.5 * b[0] + 0.25 * b[2];
            let mut d = -b[0] * p1 - 0.25 * b[1] * 0.25 * (b[1] + b[3]);
            for m in 2..=SIDEBAND_MAX {
                let p_lo = if m == 2 { p1 } else { 0.25 * (b[m - 2] + b[m]) };
                let p_hi = 0.25 * (b[m] + b[m + 2]);
                d += 0.5 * b[m] * (p_lo / (m - 1) as f64 - p_hi / (m + 1) as f64);
            }
            let secular = (j0 * jk[0] + delta_ez * delta_ez - nu * nu) / nu;
            TAU * (secular + d / nu)
        })
        .collect()
}

/// RK4 integration of the first-order dressed-phase memory equation
///   θ̇ = 2π(A(t) − ν) + 4π²·X̃(t)·cos(2πνt + θ)·∫₀ᵗ X̃(s)·sin(2πνs) ds
/// with the *full carrier-resolved* signals
///   X̃(t) = (ΔEz·J(t) − J₀·ΔEz(t))/ν,  A(t) = (J₀·J(t) + ΔEz·ΔEz(t))/ν,
///   J(t) = J₀·e^{2αv₁(t)cos(2πνt)},  ΔEz(t) = ΔEz + β·v₁(t)cos(2πνt).
/// Integrated on the pulse grid with half-step tables. For an envelope that
/// switches on smoothly (v₁(0) = 0) the memory kernel carries no secular
/// offset, and the cycle average of the memory term is the dressed rate
/// −π·b₁(t)²/(8ν) of the resonant fundamental, matching the sideband
/// ladder of `bessel_phase_rate`.
fn ode_phase(
    v1: &[f64],
    dt: f64,
    alpha: f64,
    j0: f64,
    delta_ez: f64,
    nu: f64,
    beta: f64,
) -> Result<Vec<f64>, ShaperError> {
    let n = v1.len();
    let m = 2 * (n - 1) + 1; // half-step grid
    let h = 0.5 * dt;
    let mut x_full = Vec::with_capacity(m);
    let mut a_rate = Vec::with_capacity(m);
    for k in 0..m {
        let v = if k % 2 == 0 {
            v1[k / 2]
        } else {
            0.5 * (v1[k / 2] + v1[k / 2 + 1])
        };
        let carrier = (TAU * nu * k as f64 * h).cos();
        let j_t = j0 * (2.0 * alpha * v * carrier).exp();
        let dez_t = delta_ez + beta * v * carrier;
        x_full.push((delta_ez * j_t - j0 * dez_t) / nu);
        a_rate.push((j0 * j_t + delta_ez * dez_t) / nu);
    }
    // memory kernel M(t) = ∫ X̃(s)·sin(2πνs) ds, cumulative on the half grid
    let mem = {
        let integrand: Vec<f64> =
            (0..m).map(|k| x_full[k] * (TAU * nu * k as f64 * h).sin()).collect();
        cumtrapz(h, &integrand)
    };
    let rate = |idx: usize, t: f64, th: f64| -> f64 {
        TAU * (a_rate[idx] - nu)
            + 4.0 * PI * PI * x_full[idx] * (TAU * nu * t + th).cos() * mem[idx]
    };
    let mut theta = Vec::with_capacity(n);
    let mut th = 0.0;
    theta.push(0.0);
    for i in 0..n - 1 {
        let t = i as f64 * dt;
        let k1 = rate(2 * i, t, th);
        let k2 = rate(2 * i + 1, t + h, th + h * k1);
        let k3 = rate(2 * i + 1, t + h, th + h * k2);
        let k4 = rate(2 * i + 2, t + dt, th + dt * k3);
        th += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !th.is_finite() {
            return Err(ShaperError::OdeDiverged { step: i + 1 });
        }
        theta.push(th);
    }
    Ok(theta)
}
