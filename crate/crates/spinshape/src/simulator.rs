//! Time-domain propagation of two-spin control sequences.
//!
//! The engine assembles the 4×4 Hamiltonian of an exchange-coupled spin pair
//! in one of three frames — the lab frame, the exact rotating frame (counter-
//! rotating terms kept) or the rotating-wave approximation — and steps the
//! propagator with
//!
//! ```text
//! U(t+Δt) = exp(−i·2π·H(t+Δt)·Δt) · U(t)
//! ```
//!
//! on a fixed grid, the Hamiltonian being sampled at the end of each
//! interval. Frequencies are in GHz, times in ns, voltages in mV; the basis
//! is {|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩} with the first arrow naming qubit 1 and |↓⟩
//! the ground state.
//!
//! A simulation consumes a sequence of [`PulseSegment`]s. Each segment is
//! pre-processed once into a sample-by-sample control plan: envelopes are
//! resampled onto the simulation grid and, when the control chain's low-pass
//! filter is enabled, passed through it with a ring-down tail appended so the
//! transient completes at the resting level. Noise ensembles then reuse the
//! plan across realizations, perturbing the barrier voltage (1/f charge
//! noise, mapped through the exchange curve) and the individual Zeeman
//! splittings (quasi-static draws) per realization with deterministic
//! counter-based substreams.

use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::errframe::Frame;
use crate::exchange::{self, ExchangeError, ExchangeModel, ZeemanShiftModel};
use crate::noise::{self, NoiseError, NoiseSpec, NoiseTrace};
use crate::qcore::{self, CMatrix, GateTarget, QcoreError, Unitary};
use crate::shaper::{self, IqPulse, VoltagePulse};
use crate::sigchain::{self, FilterSpec, SampledWaveform, SigchainError};

const TAU: f64 = std::f64::consts::TAU;
const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Unitarity drift allowed over a full run.
const UNITARITY_BUDGET: f64 = 1e-9;

/// Largest spectral-bound step angle (rad) handled by the fast diagonal Padé
/// exponential; bigger steps fall back to the eigendecomposition.
const PADE_MAX_ANGLE: f64 = 0.03;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    BadInput(String),
    #[error("control sample {index} (t = {time_ns} ns) is not finite")]
    NanControl { index: usize, time_ns: f64 },
    #[error("propagator drifted from unitarity: ‖U†U − 1‖ = {deviation:.3e}")]
    NonUnitary { deviation: f64 },
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Signal(#[from] SigchainError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Algebra(#[from] QcoreError),
}

// ---------------------------------------------------------------------------
// Configuration types
// ---------------------------------------------------------------------------

/// Static description of the two-qubit device.
#[derive(Clone, Debug)]
pub struct SystemParams {
    /// Mean Zeeman splitting E_z, GHz.
    pub ez: f64,
    /// Residual exchange at the resting bias, GHz. Zero means the barrier
    /// pulses have no voltage representation (pure exchange profiles).
    pub j_res: f64,
    /// Barrier-voltage → exchange map.
    pub exchange: ExchangeModel,
    /// Splitting difference and its voltage lever arm. `shift.delta_ez0` is
    /// the bias-point ΔEz = B_z,1 − B_z,2 (single source of truth).
    pub shift: ZeemanShiftModel,
    /// Transverse drive scale seen by each qubit; a microwave tone couples
    /// to both, so unequal entries model crosstalk asymmetry.
    pub drive_coupling: (f64, f64),
}

impl SystemParams {
    /// Splitting difference at the resting bias, GHz.
    pub fn delta_ez(&self) -> f64 {
        self.shift.delta_ez0
    }

    /// Static Zeeman splittings (B_z,1, B_z,2) split symmetrically about Ez.
    pub fn bz_static(&self) -> (f64, f64) {
        let d = self.delta_ez();
        (self.ez + 0.5 * d, self.ez - 0.5 * d)
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.ez > 0.0) || !self.ez.is_finite() {
            return Err(SimError::BadInput(format!("Ez must be positive, got {}", self.ez)));
        }
        if !(self.j_res >= 0.0) || !self.j_res.is_finite() {
            return Err(SimError::BadInput(format!(
                "residual exchange must be ≥ 0, got {}",
                self.j_res
            )));
        }
        let (c1, c2) = self.drive_coupling;
        if !c1.is_finite() || !c2.is_finite() {
            return Err(SimError::BadInput("drive coupling must be finite".into()));
        }
        if !self.shift.delta_ez0.is_finite() || !self.shift.beta.is_finite() {
            return Err(SimError::BadInput("Zeeman shift model must be finite".into()));
        }
        Ok(())
    }
}

/// How a propagation run is performed.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub frame: Frame,
    /// Step size, ns. Defaults: 2e−4 in the lab and exact rotating frames,
    /// 1e−2 under the RWA.
    pub dt: f64,
    /// Control-chain low-pass applied to every segment's waveforms.
    pub filter: FilterSpec,
    /// Stochastic inputs for ensembles; `None` behaves as zero noise.
    pub noise: Option<NoiseSpec>,
    pub n_realizations: usize,
    /// Master seed of the realization substreams. (A `NoiseSpec` carries its
    /// own seed for standalone trace generation; the ensemble runner keys
    /// everything off this field so one knob controls reproducibility.)
    pub seed: u64,
    /// Worker threads for ensembles; results are identical for any value.
    pub jobs: usize,
    /// Retain the final propagator in the result.
    pub keep_unitaries: bool,
}

impl SimConfig {
    pub fn default_dt(frame: Frame) -> f64 {
        match frame {
            Frame::Rwa => 1e-2,
            Frame::Lab | Frame::RotatingExact => 2e-4,
        }
    }

    pub fn new(frame: Frame) -> Self {
        SimConfig {
            frame,
            dt: Self::default_dt(frame),
            filter: FilterSpec::default(),
            noise: None,
            n_realizations: 1,
            seed: 1,
            jobs: 1,
            keep_unitaries: false,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::BadInput(format!("step size must be positive, got {}", self.dt)));
        }
        if self.n_realizations == 0 {
            return Err(SimError::BadInput("at least one realization is required".into()));
        }
        if let Some(ns) = &self.noise {
            if !(ns.charge_amp >= 0.0) {
                return Err(SimError::BadInput(format!(
                    "charge-noise amplitude must be ≥ 0, got {}",
                    ns.charge_amp
                )));
            }
            if !(ns.f_min_hz > 0.0) {
                return Err(SimError::BadInput(format!(
                    "low-frequency cutoff must be positive, got {}",
                    ns.f_min_hz
                )));
            }
            let (s1, s2) = ns.quasi_static_sigma;
            if !(s1 >= 0.0) || !(s2 >= 0.0) {
                return Err(SimError::BadInput("quasi-static σ must be ≥ 0".into()));
            }
        }
        Ok(())
    }
}

/// One element of a control sequence.
#[derive(Clone, Debug)]
pub enum PulseSegment {
    /// Rest at the bias point for `t_g` ns.
    Idle { t_g: f64 },
    /// Resonant microwave pulse (IQ envelopes on a carrier).
    Microwave(IqPulse),
    /// Barrier-voltage pulse, DC or with an AC carrier.
    Barrier(VoltagePulse),
}

impl PulseSegment {
    pub fn duration(&self) -> f64 {
        match self {
            PulseSegment::Idle { t_g } => *t_g,
            PulseSegment::Microwave(p) => p.t_g,
            PulseSegment::Barrier(p) => p.t_g,
        }
    }
}

/// Instantaneous control values feeding the Hamiltonian.
#[derive(Clone, Copy, Debug)]
pub struct ControlsAtT {
    /// Exchange coupling, GHz.
    pub j: f64,
    /// Zeeman splittings including any noise shifts, GHz.
    pub bz1: f64,
    pub bz2: f64,
    /// IQ drive envelopes, GHz (unscaled; the per-qubit coupling from
    /// `SystemParams` is applied inside the Hamiltonian builder).
    pub ex: f64,
    pub ey: f64,
    /// Accumulated carrier phase 2π·ν_D·t + θ(t), rad. Sets the drive phase
    /// in the lab frame and the counter-rotating phase in the exact rotating
    /// frame; ignored under the RWA.
    pub phi: f64,
    /// dθ/dt, rad/ns. Enters the rotating-frame diagonal as −θ̇/2π per spin.
    pub theta_dot: f64,
    /// Frame reference frequency ν_D, GHz.
    pub nu_d: f64,
}

// ---------------------------------------------------------------------------
// Hamiltonian assembly
// ---------------------------------------------------------------------------

fn z_pair(c: &ControlsAtT, frame: Frame) -> (f64, f64) {
    match frame {
        Frame::Lab => (c.bz1, c.bz2),
        Frame::RotatingExact | Frame::Rwa => {
            let shift = c.nu_d + c.theta_dot / TAU;
            (c.bz1 - shift, c.bz2 - shift)
        }
    }
}

fn build_h_internal(params: &SystemParams, c: &ControlsAtT, frame: Frame) -> CMatrix {
    let (z1, z2) = z_pair(c, frame);
    let half_sum = 0.5 * (z1 + z2);
    let half_diff = 0.5 * (z1 - z2);
    let j2 = 0.5 * c.j;

    let mut h = CMatrix::zeros(4).expect("dim 4 is supported");
    h.set(0, 0, Complex64::new(half_sum, 0.0));
    h.set(1, 1, Complex64::new(half_diff - j2, 0.0));
    h.set(2, 2, Complex64::new(-half_diff - j2, 0.0));
    h.set(3, 3, Complex64::new(-half_sum, 0.0));
    h.set(1, 2, Complex64::new(j2, 0.0));
    h.set(2, 1, Complex64::new(j2, 0.0));

    if c.ex != 0.0 || c.ey != 0.0 {
        // One tone drives both qubits; the entry below sits at the
        // |↓⟩→|↑⟩ (row < column) positions of each qubit.
        let entry = match frame {
            // Field 2(ex·cosφ + ey·sinφ) coupling through S^x.
            Frame::Lab => Complex64::new(c.ex * c.phi.cos() + c.ey * c.phi.sin(), 0.0),
            // The same field seen from the frame e^{iφ·S^z_tot}: the raising
            // entry picks up e^{iφ}, splitting into the co-rotating part
            // (ex − i·ey)/2 and the counter-rotating (ex + i·ey)·e^{2iφ}/2.
            Frame::RotatingExact => {
                Complex64::from_polar(c.ex * c.phi.cos() + c.ey * c.phi.sin(), c.phi)
            }
            Frame::Rwa => Complex64::new(0.5 * c.ex, -0.5 * c.ey),
        };
        let (cp1, cp2) = params.drive_coupling;
        let e1 = entry * cp1;
        let e2 = entry * cp2;
        // qubit 2 flips: (0,1), (2,3); qubit 1 flips: (0,2), (1,3)
        h.set(0, 1, e2);
        h.set(2, 3, e2);
        h.set(1, 0, e2.conj());
        h.set(3, 2, e2.conj());
        h.set(0, 2, e1);
        h.set(1, 3, e1);
        h.set(2, 0, e1.conj());
        h.set(3, 1, e1.conj());
    }
    h
}

/// The 4×4 hermitian Hamiltonian (frequency units) for one control sample.
pub fn build_hamiltonian(
    params: &SystemParams,
    c: &ControlsAtT,
    frame: Frame,
) -> Result<CMatrix, SimError> {
    params.validate()?;
    for (name, v) in [
        ("J", c.j),
        ("bz1", c.bz1),
        ("bz2", c.bz2),
        ("ex", c.ex),
        ("ey", c.ey),
        ("phi", c.phi),
        ("theta_dot", c.theta_dot),
        ("nu_d", c.nu_d),
    ] {
        if !v.is_finite() {
            return Err(SimError::BadInput(format!("control '{name}' is not finite: {v}")));
        }
    }
    if frame != Frame::Lab && !(c.nu_d > 0.0) {
        return Err(SimError::BadInput(format!(
            "rotating frames need a positive reference frequency, got ν_D = {}",
            c.nu_d
        )));
    }
    Ok(build_h_internal(params, c, frame))
}

// ---------------------------------------------------------------------------
// Segment planning
// ---------------------------------------------------------------------------

struct SegmentPlan {
    dt: f64,
    /// Global time of this segment's first sample, ns.
    t0: f64,
    nu_d: f64,
    /// Absolute barrier voltage per sample, when representable.
    v: Option<Vec<f64>>,
    /// Reference voltage of the Zeeman lever arm (resting bias).
    v_b0: f64,
    /// Noiseless exchange per sample.
    j: Vec<f64>,
    /// Noiseless splitting difference per sample.
    dez: Vec<f64>,
    ex: Vec<f64>,
    ey: Vec<f64>,
    theta: Vec<f64>,
    theta_dot: Vec<f64>,
    drive_free: bool,
}

impl SegmentPlan {
    fn n(&self) -> usize {
        self.j.len()
    }
}

fn maybe_resample(dt_in: f64, samples: &[f64], dt_out: f64) -> Result<(f64, Vec<f64>), SimError> {
    if samples.len() < 2 {
        return Err(SimError::BadInput("a pulse needs at least two samples".into()));
    }
    if (dt_in - dt_out).abs() <= 1e-9 * dt_out {
        return Ok((dt_in, samples.to_vec()));
    }
    let r = sigchain::resample(&SampledWaveform::new(dt_in, samples.to_vec()), dt_out)?;
    Ok((r.dt, r.samples))
}

fn tail_len(filter: &FilterSpec, dt: f64) -> usize {
    (3.0 * filter.tau() / dt).ceil() as usize
}

fn resting_voltage(params: &SystemParams) -> Result<Option<f64>, SimError> {
    if params.j_res > 0.0 {
        Ok(Some(exchange::v_of_j(&params.exchange, params.j_res)?))
    } else {
        Ok(None)
    }
}

fn plan_microwave(
    params: &SystemParams,
    p: &IqPulse,
    config: &SimConfig,
    v_rest: Option<f64>,
) -> Result<SegmentPlan, SimError> {
    let n_raw = p.n_samples();
    if p.envelope_y.len() != n_raw || p.theta.len() != n_raw {
        return Err(SimError::BadInput("IQ envelope and phase grids differ in length".into()));
    }
    if !(p.drive_freq > 0.0) {
        return Err(SimError::BadInput(format!(
            "microwave carrier frequency must be positive, got {}",
            p.drive_freq
        )));
    }
    if p.target_qubit != 1 && p.target_qubit != 2 {
        return Err(SimError::BadInput(format!(
            "target qubit must be 1 or 2, got {}",
            p.target_qubit
        )));
    }
    let (dt, mut ex) = maybe_resample(p.dt, &p.envelope_x, config.dt)?;
    let (_, mut ey) = maybe_resample(p.dt, &p.envelope_y, config.dt)?;
    let (_, mut theta) = maybe_resample(p.dt, &p.theta, config.dt)?;
    if config.filter.enabled {
        let n_tail = tail_len(&config.filter, dt);
        let hold = *theta.last().expect("checked length");
        ex.extend(std::iter::repeat(0.0).take(n_tail));
        ey.extend(std::iter::repeat(0.0).take(n_tail));
        theta.extend(std::iter::repeat(hold).take(n_tail));
        ex = sigchain::butterworth_lowpass_from(
            &SampledWaveform::new(dt, ex),
            &config.filter,
            0.0,
        )?
        .samples;
        ey = sigchain::butterworth_lowpass_from(
            &SampledWaveform::new(dt, ey),
            &config.filter,
            0.0,
        )?
        .samples;
    }
    let n = ex.len();
    let theta_dot = shaper::deriv(dt, &theta);
    let drive_free = ex.iter().all(|&v| v == 0.0) && ey.iter().all(|&v| v == 0.0);
    Ok(SegmentPlan {
        dt,
        t0: 0.0,
        nu_d: p.drive_freq,
        v: v_rest.map(|v| vec![v; n]),
        v_b0: v_rest.unwrap_or(0.0),
        j: vec![params.j_res; n],
        dez: vec![params.delta_ez(); n],
        ex,
        ey,
        theta,
        theta_dot,
        drive_free,
    })
}

fn check_baseline_consistency(pulse_baseline: Option<f64>, v_rest: Option<f64>) -> Result<f64, SimError> {
    match (pulse_baseline, v_rest) {
        (Some(b), Some(r)) => {
            if (b - r).abs() > 1e-6 * r.abs().max(1.0) {
                return Err(SimError::BadInput(format!(
                    "pulse resting voltage {b} mV disagrees with the system bias {r} mV; \
                     the pulse was shaped for a different exchange model"
                )));
            }
            Ok(r)
        }
        (Some(b), None) => Ok(b),
        (None, Some(r)) => Ok(r),
        (None, None) => Err(SimError::BadInput(
            "voltage pulse without a resting reference (set a residual exchange)".into(),
        )),
    }
}

fn plan_barrier_dc(
    params: &SystemParams,
    p: &VoltagePulse,
    config: &SimConfig,
    v_rest: Option<f64>,
) -> Result<SegmentPlan, SimError> {
    let n_plan;
    let dt_plan;
    let v_opt;
    let j;
    let dez;
    let v_b0;
    if let Some(vs) = &p.v_samples {
        if vs.len() != p.j_samples.len() {
            return Err(SimError::BadInput("voltage and exchange grids differ in length".into()));
        }
        v_b0 = check_baseline_consistency(p.baseline_v, v_rest)?;
        let (dt, mut v) = maybe_resample(p.dt, vs, config.dt)?;
        if config.filter.enabled {
            let n_tail = tail_len(&config.filter, dt);
            v.extend(std::iter::repeat(v_b0).take(n_tail));
            v = sigchain::butterworth_lowpass_from(
                &SampledWaveform::new(dt, v),
                &config.filter,
                v_b0,
            )?
            .samples;
        }
        j = v.iter().map(|&vk| exchange::j_of_v(&params.exchange, vk)).collect::<Vec<_>>();
        dez = v
            .iter()
            .map(|&vk| exchange::delta_ez_of_v(&params.shift, vk, v_b0))
            .collect::<Vec<_>>();
        n_plan = v.len();
        dt_plan = dt;
        v_opt = Some(v);
    } else {
        if config.filter.enabled {
            return Err(SimError::BadInput(
                "filtering a barrier pulse needs its voltage representation \
                 (build it with a positive residual exchange)"
                    .into(),
            ));
        }
        let (dt, jr) = maybe_resample(p.dt, &p.j_samples, config.dt)?;
        n_plan = jr.len();
        dt_plan = dt;
        j = jr;
        dez = vec![params.delta_ez(); n_plan];
        v_b0 = 0.0;
        v_opt = None;
    }
    Ok(SegmentPlan {
        dt: dt_plan,
        t0: 0.0,
        nu_d: params.ez,
        v: v_opt,
        v_b0,
        j,
        dez,
        ex: vec![0.0; n_plan],
        ey: vec![0.0; n_plan],
        theta: vec![0.0; n_plan],
        theta_dot: vec![0.0; n_plan],
        drive_free: true,
    })
}

fn plan_barrier_ac(
    params: &SystemParams,
    p: &VoltagePulse,
    config: &SimConfig,
    v_rest: Option<f64>,
) -> Result<SegmentPlan, SimError> {
    let carrier = p.carrier.as_ref().expect("caller checked");
    if carrier.theta_j.len() != carrier.envelope_mv.len() {
        return Err(SimError::BadInput("carrier envelope and phase grids differ in length".into()));
    }
    if !(carrier.nu_st > 0.0) {
        return Err(SimError::BadInput(format!(
            "carrier frequency must be positive, got {}",
            carrier.nu_st
        )));
    }
    let v_b0 = check_baseline_consistency(p.baseline_v, v_rest)?;
    let (dt, env) = maybe_resample(p.dt, &carrier.envelope_mv, config.dt)?;
    let (_, thj) = maybe_resample(p.dt, &carrier.theta_j, config.dt)?;
    // The carrier restarts its phase at the segment boundary, matching the
    // calibration the pulse was shaped with.
    let mut v: Vec<f64> = env
        .iter()
        .zip(&thj)
        .enumerate()
        .map(|(k, (&e, &th))| v_b0 + e * (TAU * carrier.nu_st * k as f64 * dt + th).cos())
        .collect();
    if config.filter.enabled {
        let n_tail = tail_len(&config.filter, dt);
        v.extend(std::iter::repeat(v_b0).take(n_tail));
        v = sigchain::butterworth_lowpass_from(&SampledWaveform::new(dt, v), &config.filter, v_b0)?
            .samples;
    }
    let j: Vec<f64> = v.iter().map(|&vk| exchange::j_of_v(&params.exchange, vk)).collect();
    let dez: Vec<f64> =
        v.iter().map(|&vk| exchange::delta_ez_of_v(&params.shift, vk, v_b0)).collect();
    let n = v.len();
    Ok(SegmentPlan {
        dt,
        t0: 0.0,
        nu_d: params.ez,
        v: Some(v),
        v_b0,
        j,
        dez,
        ex: vec![0.0; n],
        ey: vec![0.0; n],
        theta: vec![0.0; n],
        theta_dot: vec![0.0; n],
        drive_free: true,
    })
}

fn plan_idle(
    params: &SystemParams,
    t_g: f64,
    config: &SimConfig,
    v_rest: Option<f64>,
) -> Result<SegmentPlan, SimError> {
    if !(t_g > 0.0) || !t_g.is_finite() {
        return Err(SimError::BadInput(format!("idle duration must be positive, got {t_g}")));
    }
    let steps = (t_g / config.dt).round().max(1.0) as usize;
    let n = steps + 1;
    Ok(SegmentPlan {
        dt: config.dt,
        t0: 0.0,
        nu_d: params.ez,
        v: v_rest.map(|v| vec![v; n]),
        v_b0: v_rest.unwrap_or(0.0),
        j: vec![params.j_res; n],
        dez: vec![params.delta_ez(); n],
        ex: vec![0.0; n],
        ey: vec![0.0; n],
        theta: vec![0.0; n],
        theta_dot: vec![0.0; n],
        drive_free: true,
    })
}

fn plan_segments(
    params: &SystemParams,
    pulses: &[PulseSegment],
    config: &SimConfig,
) -> Result<Vec<SegmentPlan>, SimError> {
    if pulses.is_empty() {
        return Err(SimError::BadInput("empty pulse sequence".into()));
    }
    let v_rest = resting_voltage(params)?;
    let mut plans = Vec::with_capacity(pulses.len());
    let mut t0 = 0.0;
    for seg in pulses {
        let mut plan = match seg {
            PulseSegment::Microwave(p) => plan_microwave(params, p, config, v_rest)?,
            PulseSegment::Barrier(p) => match p.carrier {
                None => plan_barrier_dc(params, p, config, v_rest)?,
                Some(_) => plan_barrier_ac(params, p, config, v_rest)?,
            },
            PulseSegment::Idle { t_g } => plan_idle(params, *t_g, config, v_rest)?,
        };
        plan.t0 = t0;
        t0 += (plan.n() - 1) as f64 * plan.dt;
        plans.push(plan);
    }
    if config.frame == Frame::Lab {
        let nu0 = plans[0].nu_d;
        if plans.iter().any(|p| (p.nu_d - nu0).abs() > 1e-9 * nu0) {
            return Err(SimError::BadInput(
                "lab-frame scoring needs a single carrier reference; \
                 this sequence mixes segments with different ν_D"
                    .into(),
            ));
        }
    }
    // Reject non-finite samples up front, naming the first offender.
    let mut base = 0usize;
    for plan in &plans {
        for k in 0..plan.n() {
            let mut ok = plan.j[k].is_finite()
                && plan.dez[k].is_finite()
                && plan.ex[k].is_finite()
                && plan.ey[k].is_finite()
                && plan.theta[k].is_finite()
                && plan.theta_dot[k].is_finite();
            if let Some(v) = &plan.v {
                ok = ok && v[k].is_finite();
            }
            if !ok {
                return Err(SimError::NanControl {
                    index: base + k,
                    time_ns: plan.t0 + k as f64 * plan.dt,
                });
            }
        }
        base += plan.n() - 1;
    }
    Ok(plans)
}

// ---------------------------------------------------------------------------
// Stepping
// ---------------------------------------------------------------------------

struct RealizationNoise<'a> {
    charge: Option<&'a NoiseTrace>,
    d_bz: (f64, f64),
}

fn controls_at(
    params: &SystemParams,
    plan: &SegmentPlan,
    k: usize,
    noise: Option<&RealizationNoise>,
    trace_idx: usize,
) -> ControlsAtT {
    let mut dv = 0.0;
    let mut d_bz = (0.0, 0.0);
    if let Some(rn) = noise {
        if let Some(tr) = rn.charge {
            dv = tr.value(trace_idx);
        }
        d_bz = rn.d_bz;
    }
    let (j, dez) = if dv != 0.0 {
        let vk = plan.v.as_ref().expect("noise plumbing validated")[k] + dv;
        (
            exchange::j_of_v(&params.exchange, vk),
            exchange::delta_ez_of_v(&params.shift, vk, plan.v_b0),
        )
    } else {
        (plan.j[k], plan.dez[k])
    };
    let t = plan.t0 + k as f64 * plan.dt;
    ControlsAtT {
        j,
        bz1: params.ez + 0.5 * dez + d_bz.0,
        bz2: params.ez - 0.5 * dez + d_bz.1,
        ex: plan.ex[k],
        ey: plan.ey[k],
        phi: TAU * plan.nu_d * t + plan.theta[k],
        theta_dot: plan.theta_dot[k],
        nu_d: plan.nu_d,
    }
}

/// Left-multiplies `u` by the exact exponential of a drive-free step.
///
/// Without a transverse drive the even-parity states only pick up phases and
/// the odd-parity pair rotates under a real symmetric 2×2 block, so the step
/// has a closed form (exactly unitary, no eigensolve).
fn apply_drive_free_step(u: &mut CMatrix, z1: f64, z2: f64, j: f64, dt: f64) {
    let d0 = 0.5 * (z1 + z2);
    let delta = 0.5 * (z1 - z2);
    let p0 = Complex64::from_polar(1.0, -TAU * dt * d0);
    let p3 = p0.conj();

    let omega = (delta * delta + 0.25 * j * j).sqrt();
    let g = Complex64::from_polar(1.0, std::f64::consts::PI * j * dt);
    let (m11, m12, m22) = if omega > 0.0 {
        let lam = TAU * dt * omega;
        let (s, c) = lam.sin_cos();
        let f = Complex64::new(0.0, -s / omega);
        (
            g * (Complex64::new(c, 0.0) + f * delta),
            g * f * (0.5 * j),
            g * (Complex64::new(c, 0.0) - f * delta),
        )
    } else {
        (g, C0, g)
    };

    for col in 0..4 {
        let x0 = u.get(0, col);
        let x1 = u.get(1, col);
        let x2 = u.get(2, col);
        let x3 = u.get(3, col);
        u.set(0, col, p0 * x0);
        u.set(1, col, m11 * x1 + m12 * x2);
        u.set(2, col, m12 * x1 + m22 * x2);
        u.set(3, col, p3 * x3);
    }
}

/// Solves D·X = N for 4×4 complex matrices by Gaussian elimination with
/// partial pivoting. D is diagonally dominant here (a Padé denominator).
fn solve4(d: &CMatrix, n: &CMatrix) -> CMatrix {
    let dim = d.dim;
    debug_assert_eq!(dim, 4);
    let mut a = [[C0; 8]; 4];
    for r in 0..4 {
        for c in 0..4 {
            a[r][c] = d.get(r, c);
            a[r][c + 4] = n.get(r, c);
        }
    }
    for col in 0..4 {
        let mut piv = col;
        let mut best = a[col][col].norm_sqr();
        for r in col + 1..4 {
            let v = a[r][col].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        a.swap(col, piv);
        let inv = Complex64::new(1.0, 0.0) / a[col][col];
        for c in col..8 {
            a[col][c] *= inv;
        }
        for r in 0..4 {
            if r == col {
                continue;
            }
            let f = a[r][col];
            if f != C0 {
                for c in col..8 {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut x = CMatrix::zeros(4).expect("dim 4 is supported");
    for r in 0..4 {
        for c in 0..4 {
            x.set(r, c, a[r][c + 4]);
        }
    }
    x
}

/// exp(−i·2π·dt·H) through the diagonal (2,2) Padé approximant. Diagonal
/// Padé maps skew-hermitian arguments to exactly unitary matrices; with the
/// step angles used here the truncation error sits far below the stepper's
/// own sampling error.
fn pade22_step(h: &CMatrix, dt: f64) -> CMatrix {
    let a = h.scale(Complex64::new(0.0, -TAU * dt));
    let a2 = a.mul(&a);
    let id = CMatrix::identity(4).expect("dim 4 is supported");
    let n = id.scale(Complex64::new(12.0, 0.0)).add(&a.scale(Complex64::new(6.0, 0.0))).add(&a2);
    let d = id.scale(Complex64::new(12.0, 0.0)).sub(&a.scale(Complex64::new(6.0, 0.0))).add(&a2);
    solve4(&d, &n)
}

fn general_step(h: &CMatrix, dt: f64) -> Result<CMatrix, SimError> {
    // Spectral bound ‖2π·dt·H‖ ≤ 2π·dt·dim·max|H_ij|.
    if TAU * dt * 4.0 * h.max_abs() <= PADE_MAX_ANGLE {
        Ok(pade22_step(h, dt))
    } else {
        Ok(qcore::matexp_skew(h, TAU * dt)?.into_matrix())
    }
}

struct FrameClose {
    nu_d: f64,
    t_total: f64,
    theta_start: f64,
    theta_end: f64,
}

fn propagate_plans(
    params: &SystemParams,
    plans: &[SegmentPlan],
    config: &SimConfig,
    noise: Option<&RealizationNoise>,
) -> Result<(CMatrix, FrameClose), SimError> {
    let mut u = CMatrix::identity(4).expect("dim 4 is supported");
    let mut base = 0usize;
    for plan in plans {
        let noisy_z = noise.map_or(false, |rn| rn.charge.is_some() || rn.d_bz != (0.0, 0.0));
        for k in 1..plan.n() {
            let c = controls_at(params, plan, k, noise, base + k);
            if plan.drive_free {
                let (z1, z2) = z_pair(&c, config.frame);
                apply_drive_free_step(&mut u, z1, z2, c.j, plan.dt);
            } else {
                let h = build_h_internal(params, &c, config.frame);
                let step = general_step(&h, plan.dt)?;
                u = step.mul(&u);
            }
            // Noise can only push controls out of range through the exchange
            // map; everything else was screened at planning time.
            if noisy_z && !c.j.is_finite() {
                return Err(SimError::NanControl {
                    index: base + k,
                    time_ns: plan.t0 + k as f64 * plan.dt,
                });
            }
        }
        base += plan.n() - 1;
    }
    let last = plans.last().expect("validated non-empty");
    let close = FrameClose {
        nu_d: last.nu_d,
        t_total: last.t0 + (last.n() - 1) as f64 * last.dt,
        theta_start: plans[0].theta[0],
        theta_end: *last.theta.last().expect("non-empty plan"),
    };
    Ok((u, close))
}

/// Rotates a lab-frame propagator into the carrier's rotating frame so it can
/// be scored against a rotating-frame target: U → R(T)·U·R(0)† with
/// R(t) = exp(i·(2π·ν_D·t + θ(t))·S^z_tot).
fn frame_scored(u: &CMatrix, close: &FrameClose, frame: Frame) -> CMatrix {
    match frame {
        Frame::Rwa | Frame::RotatingExact => *u,
        Frame::Lab => {
            let a_end = TAU * close.nu_d * close.t_total + close.theta_end;
            let mut out = qcore::apply_virtual_z(u, a_end, a_end);
            let a0 = close.theta_start;
            if a0 != 0.0 {
                let sz_tot = [1.0, 0.0, 0.0, -1.0];
                for c in 0..4 {
                    let ph = Complex64::from_polar(1.0, -a0 * sz_tot[c]);
                    for r in 0..4 {
                        out.set(r, c, out.get(r, c) * ph);
                    }
                }
            }
            out
        }
    }
}

fn finish_unitary(mut u: CMatrix) -> Result<Unitary, SimError> {
    let dev = u.unitarity_deviation();
    if dev > UNITARITY_BUDGET {
        return Err(SimError::NonUnitary { deviation: dev });
    }
    if dev > 5e-11 {
        // One polar Newton sweep soaks up accumulated round-off without
        // moving the propagator beyond the drift budget.
        let uuu = u.mul(&u.adjoint()).mul(&u);
        u = u.scale(Complex64::new(1.5, 0.0)).sub(&uuu.scale(Complex64::new(0.5, 0.0)));
    }
    Ok(Unitary::new(u)?)
}

// ---------------------------------------------------------------------------
// Public runs
// ---------------------------------------------------------------------------

/// Propagates a pulse sequence without noise and returns the raw propagator
/// in the configured frame.
pub fn propagate(
    params: &SystemParams,
    pulses: &[PulseSegment],
    config: &SimConfig,
) -> Result<Unitary, SimError> {
    params.validate()?;
    config.validate()?;
    let plans = plan_segments(params, pulses, config)?;
    let (u, _) = propagate_plans(params, &plans, config, None)?;
    finish_unitary(u)
}

/// Outcome of a simulation run.
#[derive(Clone, Debug, Serialize)]
pub struct SimResult {
    pub fidelity: f64,
    pub infidelity: f64,
    /// Ensemble standard error (sample stddev / √N), when N ≥ 2.
    pub stderr: Option<f64>,
    pub n_realizations: usize,
    /// Virtual-z correction phases used for scoring, when the target allows
    /// them.
    pub vz_phases: Option<(f64, f64)>,
    /// Per-channel analytic error rates, filled in by higher-level pipelines.
    pub channel_rates: Vec<(String, f64)>,
    pub runtime_ms: f64,
    /// Final propagator, row-major (re, im) pairs, when retained.
    pub final_unitary: Option<Vec<[f64; 2]>>,
}

fn flatten_unitary(u: &CMatrix) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(16);
    for r in 0..4 {
        for c in 0..4 {
            let z = u.get(r, c);
            out.push([z.re, z.im]);
        }
    }
    out
}

fn clamp_fidelity(f: f64) -> f64 {
    f.clamp(0.0, 1.0)
}

/// Propagates without noise and scores against the target, optimizing the
/// virtual-z phases when the target allows them.
pub fn run_noiseless(
    gate: &GateTarget,
    pulses: &[PulseSegment],
    params: &SystemParams,
    config: &SimConfig,
) -> Result<SimResult, SimError> {
    let started = Instant::now();
    params.validate()?;
    config.validate()?;
    let plans = plan_segments(params, pulses, config)?;
    let (u_raw, close) = propagate_plans(params, &plans, config, None)?;
    let dev = u_raw.unitarity_deviation();
    if dev > UNITARITY_BUDGET {
        return Err(SimError::NonUnitary { deviation: dev });
    }
    let u_scored = gate.logical_frame(&frame_scored(&u_raw, &close, config.frame));
    let target = gate.unitary(4)?;
    let (fidelity, phases) = if gate.allow_virtual_z {
        let vz = qcore::fidelity_up_to_virtual_z(&u_scored, &target)?;
        (clamp_fidelity(vz.fidelity), Some(vz.phases))
    } else {
        (clamp_fidelity(qcore::avg_gate_fidelity(&target.adjoint().mul(&u_scored))), None)
    };
    Ok(SimResult {
        fidelity,
        infidelity: 1.0 - fidelity,
        stderr: None,
        n_realizations: 1,
        vz_phases: phases,
        channel_rates: Vec::new(),
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
        final_unitary: config.keep_unitaries.then(|| flatten_unitary(&u_scored)),
    })
}

/// Propagates an ensemble of noise realizations and reports the mean
/// fidelity. The virtual-z correction is calibrated once on the noiseless
/// propagator and then held fixed, the way a hardware phase calibration
/// would be.
///
/// Realization `j` draws, in order: the qubit-1 and qubit-2 quasi-static
/// Zeeman shifts, then the 1/f barrier-voltage trace, all from the
/// counter-based substream (seed, j) — so serial and parallel ensembles
/// agree bit-exactly.
pub fn run_ensemble(
    gate: &GateTarget,
    pulses: &[PulseSegment],
    params: &SystemParams,
    config: &SimConfig,
) -> Result<SimResult, SimError> {
    let started = Instant::now();
    params.validate()?;
    config.validate()?;
    let plans = plan_segments(params, pulses, config)?;
    let zero_noise = NoiseSpec {
        charge_amp: 0.0,
        f_min_hz: 0.1,
        quasi_static_sigma: (0.0, 0.0),
        seed: config.seed,
    };
    let spec = config.noise.clone().unwrap_or(zero_noise);
    if spec.charge_amp > 0.0 && plans.iter().any(|p| p.v.is_none()) {
        return Err(SimError::BadInput(
            "charge noise perturbs the barrier voltage, but a segment has no voltage \
             representation; set a positive residual exchange or provide voltage samples"
                .into(),
        ));
    }
    let total_samples: usize = plans.iter().map(|p| p.n() - 1).sum::<usize>() + 1;

    // Fixed virtual-z calibration from the noiseless run.
    let (u0, close0) = propagate_plans(params, &plans, config, None)?;
    let u0_scored = gate.logical_frame(&frame_scored(&u0, &close0, config.frame));
    let target = gate.unitary(4)?;
    let vz = if gate.allow_virtual_z {
        qcore::fidelity_up_to_virtual_z(&u0_scored, &target)?.phases
    } else {
        (0.0, 0.0)
    };
    let target_adj = target.adjoint();

    let realize = |idx: usize| -> Result<f64, SimError> {
        let mut rng = noise::substream_rng(config.seed, idx as u64);
        let d1 = noise::quasi_static_draw(spec.quasi_static_sigma.0, &mut rng);
        let d2 = noise::quasi_static_draw(spec.quasi_static_sigma.1, &mut rng);
        let trace = if spec.charge_amp > 0.0 {
            Some(noise::charge_noise_realization(
                spec.charge_amp,
                spec.f_min_hz,
                total_samples,
                config.dt,
                &mut rng,
            )?)
        } else {
            None
        };
        let rn = RealizationNoise { charge: trace.as_ref(), d_bz: (d1, d2) };
        let (u, close) = propagate_plans(params, &plans, config, Some(&rn))?;
        let dev = u.unitarity_deviation();
        if dev > UNITARITY_BUDGET {
            return Err(SimError::NonUnitary { deviation: dev });
        }
        let scored = gate.logical_frame(&frame_scored(&u, &close, config.frame));
        let corrected = qcore::apply_virtual_z(&scored, vz.0, vz.1);
        Ok(qcore::avg_gate_fidelity(&target_adj.mul(&corrected)))
    };

    let n = config.n_realizations;
    let mut fids = vec![0.0f64; n];
    let jobs = config.jobs.max(1).min(n);
    if jobs <= 1 {
        for (idx, slot) in fids.iter_mut().enumerate() {
            *slot = realize(idx)?;
        }
    } else {
        let chunk = n.div_ceil(jobs);
        std::thread::scope(|scope| -> Result<(), SimError> {
            let mut handles = Vec::new();
            for (b, block) in fids.chunks_mut(chunk).enumerate() {
                let realize = &realize;
                handles.push(scope.spawn(move || -> Result<(), SimError> {
                    for (i, slot) in block.iter_mut().enumerate() {
                        *slot = realize(b * chunk + i)?;
                    }
                    Ok(())
                }));
            }
            for h in handles {
                h.join().expect("ensemble worker panicked")?;
            }
            Ok(())
        })?;
    }

    // The mean of per-realization average gate fidelities equals the
    // ensemble (superoperator) fidelity: both are affine in mean|tr E_j|².
    let mean = fids.iter().sum::<f64>() / n as f64;
    let stderr = if n >= 2 {
        let var = fids.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / (n as f64 - 1.0);
        Some((var / n as f64).sqrt())
    } else {
        None
    };
    let fidelity = clamp_fidelity(mean);
    Ok(SimResult {
        fidelity,
        infidelity: 1.0 - fidelity,
        stderr,
        n_realizations: n,
        vz_phases: gate.allow_virtual_z.then_some(vz),
        channel_rates: Vec::new(),
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
        final_unitary: None,
    })
}

/// Propagates the same sequence under the RWA and in the exact rotating
/// frame (default step sizes for each) and returns the average-fidelity
/// mismatch 1 − F̄(U_RWA† · U_exact) between the two propagators — the
/// rotating-wave error of the run, used as a guard by figure pipelines.
pub fn rwa_gap(
    params: &SystemParams,
    pulses: &[PulseSegment],
    config: &SimConfig,
) -> Result<f64, SimError> {
    let mut cfg_rwa = config.clone();
    cfg_rwa.frame = Frame::Rwa;
    cfg_rwa.noise = None;
    if config.frame != Frame::Rwa {
        cfg_rwa.dt = SimConfig::default_dt(Frame::Rwa);
    }
    let mut cfg_exact = config.clone();
    cfg_exact.frame = Frame::RotatingExact;
    cfg_exact.noise = None;
    cfg_exact.dt = config.dt.min(SimConfig::default_dt(Frame::RotatingExact));
    let driven = pulses.iter().any(|p| match p {
        PulseSegment::Microwave(q) => {
            q.envelope_x.iter().any(|&v| v != 0.0) || q.envelope_y.iter().any(|&v| v != 0.0)
        }
        _ => false,
    });
    if !driven {
        // Identical Hamiltonians: keep the grids identical too, so the gap
        // is exactly zero rather than step-size noise.
        cfg_exact.dt = cfg_rwa.dt;
    }
    let u_rwa = propagate(params, pulses, &cfg_rwa)?;
    let u_exact = propagate(params, pulses, &cfg_exact)?;
    let e = u_rwa.matrix().adjoint().mul(u_exact.matrix());
    Ok((1.0 - qcore::avg_gate_fidelity(&e)).abs())
}

/// Richardson-style convergence probe: the same noiseless run at dt and
/// dt/2.
#[derive(Clone, Copy, Debug)]
pub struct StepAudit {
    pub infidelity: f64,
    pub infidelity_half_dt: f64,
    /// |Δ(1−F)| / max(1−F, unitarity budget). Infidelities below the
    /// propagator's own unitarity budget cannot be resolved, so the
    /// comparison floors the denominator there.
    pub relative_change: f64,
}

pub fn step_size_audit(
    gate: &GateTarget,
    pulses: &[PulseSegment],
    params: &SystemParams,
    config: &SimConfig,
) -> Result<StepAudit, SimError> {
    let r1 = run_noiseless(gate, pulses, params, config)?;
    let mut half = config.clone();
    half.dt = 0.5 * config.dt;
    let r2 = run_noiseless(gate, pulses, params, &half)?;
    let denom = r1.infidelity.abs().max(UNITARITY_BUDGET);
    Ok(StepAudit {
        infidelity: r1.infidelity,
        infidelity_half_dt: r2.infidelity,
        relative_change: (r1.infidelity - r2.infidelity).abs() / denom,
    })
}

// ---------------------------------------------------------------------------
