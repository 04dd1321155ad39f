//! Interaction-frame error analysis.
//!
//! The pipeline: a [`HamiltonianTrajectory`] (what the hardware actually
//! applies) is compared against an [`IdealTrajectory`] (the evolution the
//! gate is meant to produce). Conjugating the difference into the ideal
//! interaction frame gives the error Hamiltonian; its first Magnus term
//! exponentiates to the coherent error operator ℰ, and projections
//! |tr(ℰ·O)|² onto transition operators O give per-channel error rates.
//!
//! For the supported gate families the same rates have a spectral form:
//! each channel carries a complex envelope g(t) and a phase rate ḟ(t) so
//! that the rate is |∫ g e^{if} dt|². When ḟ has one sign throughout, the
//! integral dilates onto the unit interval and becomes the energy spectral
//! density of module `windows`, evaluated at the total accumulated phase.
//!
//! Units follow the crate convention: Hamiltonians in GHz (frequency
//! units), times in ns. Channel envelopes and phase rates are stored in
//! angular units (rad/ns); the single 2π conversion happens at channel
//! construction.

use crate::qcore::{self, spin_op, Axis, CMatrix, QcoreError, Unitary};
use crate::shaper::{cumtrapz, deriv, trapz};
use crate::windows::{self, WindowsError};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

const TAU: f64 = 2.0 * PI;
const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const CI: Complex64 = Complex64::new(0.0, 1.0);

/// Hermiticity budget for error-Hamiltonian samples.
pub const ERR_HERM_TOL: f64 = 1e-12;
/// First-order Magnus action (rad) above which the truncation is suspect.
pub const MAGNUS_WARN_ACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ErrframeError {
    #[error("trajectory grids do not match: {0}")]
    GridMismatch(String),
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("sample {index}: not hermitian (residual {residual:.3e})")]
    NotHermitian { index: usize, residual: f64 },
    #[error("phase dilation rejected the channel: {0}")]
    Dilation(#[from] WindowsError),
    #[error("matrix algebra failed: {0}")]
    Algebra(#[from] QcoreError),
    #[error("trajectory must span one drive period: {0}")]
    BadPeriod(String),
}

/// Reference frame a trajectory is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    /// Static lab basis; carriers appear explicitly.
    Lab,
    /// Rotating frame at the drive frequency with counter-rotating terms
    /// kept exactly.
    RotatingExact,
    /// Rotating-wave approximation: counter-rotating terms dropped.
    Rwa,
}

// ---------------------------------------------------------------------------
// trajectories

/// A sampled Hamiltonian H(t_k) on a uniform inclusive grid.
#[derive(Clone, Debug)]
pub struct HamiltonianTrajectory {
    /// Sample spacing, ns.
    pub dt: f64,
    /// H(t_k) in frequency units (GHz), one per grid point.
    pub h: Vec<CMatrix>,
    pub frame: Frame,
}

impl HamiltonianTrajectory {
    pub fn new(dt: f64, h: Vec<CMatrix>, frame: Frame) -> Result<Self, ErrframeError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(ErrframeError::BadInput(format!("dt must be positive, got {dt}")));
        }
        if h.len() < 2 {
            return Err(ErrframeError::BadInput(format!(
                "trajectory needs at least 2 samples, got {}",
                h.len()
            )));
        }
        let dim = h[0].dim;
        for (k, m) in h.iter().enumerate() {
            if m.dim != dim {
                return Err(ErrframeError::BadInput(format!(
                    "sample {k} has dim {} but sample 0 has dim {dim}",
                    m.dim
                )));
            }
            let scale = m.max_abs().max(1.0);
            if m.herm_deviation() > 1e-9 * scale {
                return Err(ErrframeError::NotHermitian {
                    index: k,
                    residual: m.herm_deviation(),
                });
            }
        }
        Ok(HamiltonianTrajectory { dt, h, frame })
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    /// Grid span (n−1)·dt, ns.
    pub fn t_g(&self) -> f64 {
        (self.h.len() - 1) as f64 * self.dt
    }
}

/// The intended evolution: U_ideal(t_k) together with its generator
/// H_gen(t_k) = (i/2π)·U̇·U†, both kept analytically by the builders so the
/// interaction-frame subtraction is exact even when the ideal is
/// time-ordered (adiabatic CZ, dressed SWAP).
#[derive(Clone, Debug)]
pub struct IdealTrajectory {
    pub dt: f64,
    /// U_ideal at each grid point; u[0] = 𝟙.
    pub u: Vec<CMatrix>,
    /// Generator in frequency units (GHz).
    pub h_gen: Vec<CMatrix>,
}

impl IdealTrajectory {
    /// The do-nothing ideal: U ≡ 𝟙, generator ≡ 0.
    pub fn identity(dim: usize, n: usize, dt: f64) -> Result<Self, ErrframeError> {
        if n < 2 {
            return Err(ErrframeError::BadInput(format!("need at least 2 samples, got {n}")));
        }
        let id = CMatrix::identity(dim)?;
        let z = CMatrix::zeros(dim)?;
        Ok(IdealTrajectory { dt, u: vec![id; n], h_gen: vec![z; n] })
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }
}

// ---------------------------------------------------------------------------
// small dense helpers

fn rot_x(beta: f64) -> CMatrix {
    let (s, c) = (0.5 * beta).sin_cos();
    let mut m = CMatrix::zeros(2).expect("dim 2");
    m.set(0, 0, Complex64::new(c, 0.0));
    m.set(1, 1, Complex64::new(c, 0.0));
    m.set(0, 1, Complex64::new(0.0, -s));
    m.set(1, 0, Complex64::new(0.0, -s));
    m
}

fn rot_y(beta: f64) -> CMatrix {
    let (s, c) = (0.5 * beta).sin_cos();
    let mut m = CMatrix::zeros(2).expect("dim 2");
    m.set(0, 0, Complex64::new(c, 0.0));
    m.set(1, 1, Complex64::new(c, 0.0));
    m.set(0, 1, Complex64::new(-s, 0.0));
    m.set(1, 0, Complex64::new(s, 0.0));
    m
}

fn rot_z(beta: f64) -> CMatrix {
    let mut m = CMatrix::zeros(2).expect("dim 2");
    m.set(0, 0, Complex64::from_polar(1.0, -0.5 * beta));
    m.set(1, 1, Complex64::from_polar(1.0, 0.5 * beta));
    m
}

/// Embed a 2×2 block on the odd-parity pair {|↑↓⟩, |↓↑⟩} (indices 1, 2) of
/// the standard 4×4 basis; the even diagonal gets `even`.
fn embed_odd(sub: &CMatrix, even: Complex64) -> CMatrix {
    let mut m = CMatrix::zeros(4).expect("dim 4");
    m.set(0, 0, even);
    m.set(3, 3, even);
    m.set(1, 1, sub.get(0, 0));
    m.set(1, 2, sub.get(0, 1));
    m.set(2, 1, sub.get(1, 0));
    m.set(2, 2, sub.get(1, 1));
    m
}

fn mat_trapz(dt: f64, ms: &[CMatrix]) -> CMatrix {
    let n = ms.len();
    let mut acc = CMatrix::zeros(ms[0].dim).expect("valid dim");
    for (k, m) in ms.iter().enumerate() {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc.add_assign(&m.scale(Complex64::new(w * dt, 0.0)));
    }
    acc
}

fn mat_cumtrapz(dt: f64, ms: &[CMatrix]) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(ms.len());
    let mut acc = CMatrix::zeros(ms[0].dim).expect("valid dim");
    out.push(acc.clone());
    for k in 1..ms.len() {
        let step = ms[k - 1].add(&ms[k]).scale(Complex64::new(0.5 * dt, 0.0));
        acc.add_assign(&step);
        out.push(acc.clone());
    }
    out
}

fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.mul(b).sub(&b.mul(a))
}

fn spectral_norm_hermitian(m: &CMatrix) -> Result<f64, QcoreError> {
    let (vals, _) = m.eigh()?;
    Ok(vals.iter().fold(0.0f64, |a, &v| a.max(v.abs())))
}

// ---------------------------------------------------------------------------
// core operations

/// Error Hamiltonian in the ideal interaction frame:
/// H_err(t) = U_ideal†(t)·(H(t) − H_gen(t))·U_ideal(t).
///
/// When the ideal commutes with its own history (every one-qubit ideal
/// here) this equals U†HU − H_ideal; for the time-ordered adiabatic ideals
/// the generator subtraction keeps the expression exact, absorbing the
/// frame-derivative term analytically.
pub fn error_hamiltonian(
    h: &HamiltonianTrajectory,
    ideal: &IdealTrajectory,
) -> Result<HamiltonianTrajectory, ErrframeError> {
    if h.n() != ideal.n() {
        return Err(ErrframeError::GridMismatch(format!(
            "{} Hamiltonian samples vs {} ideal samples",
            h.n(),
            ideal.n()
        )));
    }
    if (h.dt - ideal.dt).abs() > 1e-12 * h.dt.max(ideal.dt) {
        return Err(ErrframeError::GridMismatch(format!(
            "dt {} vs ideal dt {}",
            h.dt, ideal.dt
        )));
    }
    if h.h[0].dim != ideal.u[0].dim {
        return Err(ErrframeError::GridMismatch(format!(
            "dim {} vs ideal dim {}",
            h.h[0].dim, ideal.u[0].dim
        )));
    }
    let mut out = Vec::with_capacity(h.n());
    for k in 0..h.n() {
        let rest = h.h[k].sub(&ideal.h_gen[k]);
        let m = ideal.u[k].adjoint().mul(&rest).mul(&ideal.u[k]);
        let scale = m.max_abs().max(1.0);
        let residual = m.herm_deviation();
        if residual > ERR_HERM_TOL * scale.max(1.0) * 10.0 {
            return Err(ErrframeError::NotHermitian { index: k, residual });
        }
        out.push(m);
    }
    Ok(HamiltonianTrajectory { dt: h.dt, h: out, frame: h.frame })
}

/// First-order Magnus error operator with its accumulated action.
#[derive(Clone, Debug)]
pub struct MagnusOp {
    /// ℰ = exp(−i·2π·∫H_err dt).
    pub op: Unitary,
    /// Spectral norm of the exponent, rad.
    pub action: f64,
    /// Set when the action exceeds [`MAGNUS_WARN_ACTION`]; the first-order
    /// truncation is then unreliable.
    pub large_action: bool,
}

/// Exponentiate the trapezoid-accumulated error Hamiltonian:
/// ℰ = exp(−i 2π ∫₀^{t_g} H_err dt).
pub fn magnus1_error_op(h_err: &HamiltonianTrajectory) -> Result<MagnusOp, ErrframeError> {
    let a = mat_trapz(h_err.dt, &h_err.h);
    let action = TAU * spectral_norm_hermitian(&a)?;
    let op = qcore::matexp_skew(&a, TAU)?;
    Ok(MagnusOp { op, action, large_action: action > MAGNUS_WARN_ACTION })
}

/// Coherent error rate |tr(ℰ·O)|².
pub fn error_rate(e: &CMatrix, o: &CMatrix) -> f64 {
    e.mul(o).trace().norm_sqr()
}

// ---------------------------------------------------------------------------
// channels

/// One sparse-evolution error channel: rate = |∫ g e^{if} dt|² with
/// f(t) = ∫₀ᵗ ḟ, both in angular units.
///
/// Channels representing a conjugate ± operator pair are stored once with
/// `pair_weight = 2`: the two branch rates are equal at first order
/// (tr(Φ·P₊) = conj tr(Φ·P₋) for hermitian Φ), and the mirror branch's
/// phase runs backward, so a literal second entry would not survive the
/// positive-rate dilation. Reported totals multiply by `pair_weight`;
/// [`esd_error_rate`] itself returns the single-branch value.
#[derive(Clone, Debug)]
pub struct ErrorChannel {
    pub label: String,
    /// Transition operator the rate projects onto.
    pub o: CMatrix,
    /// Complex envelope, rad/ns.
    pub g: Vec<Complex64>,
    /// Phase rate, rad/ns; signed (negative = phase runs backward).
    pub f_dot: Vec<f64>,
    /// Sample spacing, ns.
    pub dt: f64,
    /// Number of equal-rate conjugate branches this entry stands for.
    pub pair_weight: f64,
}

impl ErrorChannel {
    pub fn n(&self) -> usize {
        self.g.len()
    }
}

/// Gate-family inputs for [`channels_for`]. All waveforms share one uniform
/// grid and are the post-filter signals actually applied.
pub enum GateFamily<'a> {
    /// Resonant one-qubit drive in the rotating frame.
    OneQubit {
        /// In-phase Rabi envelope B^x(t), GHz.
        bx: &'a [f64],
        /// Quadrature envelope B^y(t), GHz.
        by: &'a [f64],
        /// Phase-tracking rate θ̇(t), rad/ns.
        theta_dot: &'a [f64],
        /// Carrier detuning from the driven qubit, GHz.
        delta_f: f64,
        /// Spectator offset f_spec − f_driven, GHz (−ΔEz when qubit 1 is
        /// driven, +ΔEz when qubit 2 is driven).
        spec_offset: f64,
        /// Spectator drive pickup relative to the driven qubit.
        crosstalk: f64,
        /// Driven qubit slot (1 or 2).
        driven: u8,
    },
    /// Adiabatic exchange pulse.
    Cz {
        /// Exchange profile J(t), GHz.
        j: &'a [f64],
        /// Instantaneous splitting difference ΔEz(v_B(t)), GHz.
        dez: &'a [f64],
    },
    /// Resonant exchange modulation at the dressed splitting.
    SwapAc {
        /// Dressed-z coefficient A(t) = (J₀·J(t) + ΔEz·ΔEz(t))/ν, GHz.
        a: &'a [f64],
        /// Transverse in-phase part X̃(t)·cos Φ(t), GHz.
        x_cos: &'a [f64],
        /// Transverse quadrature part X̃(t)·sin Φ(t), GHz.
        x_sin: &'a [f64],
        /// Phase-tracking rate θ̇_j(t), rad/ns.
        theta_dot: &'a [f64],
        /// Dressed splitting ν_ST, GHz.
        nu: f64,
        /// Static mixing angle arctan(J₀/ΔEz), rad.
        chi0: f64,
    },
}

fn check_lens(name: &str, lens: &[usize]) -> Result<usize, ErrframeError> {
    let n = lens[0];
    if n < 2 {
        return Err(ErrframeError::BadInput(format!(
            "{name}: need at least 2 samples, got {n}"
        )));
    }
    if lens.iter().any(|&l| l != n) {
        return Err(ErrframeError::BadInput(format!(
            "{name}: waveform lengths differ: {lens:?}"
        )));
    }
    Ok(n)
}

/// Build the dominant error channels for a gate family.
///
/// OneQubit yields two channels: the driven qubit's phase/quadrature
/// channel (O = S^z + iS^y on the driven slot; g = 2π(Δf − θ̇/2π + iB^y),
/// ḟ = 2πB^x) and the spectator crosstalk flip (O = S^x + iS^y on the
/// spectator; g = 2π·crosstalk·(B^x + iB^y), ḟ = ±2π·dressed rate, the
/// sign following the mean spectator detuning). CZ yields the odd-block
/// dressed flip with g = −(ΔEz·J̇ − ΔĖz·J)/(2ν_j²) and ḟ = 2πν_j. SwapAc
/// yields the dressed-z channel g = 2π(A − ν − θ̇/2π + iX̃sinΦ),
/// ḟ = 2πX̃cosΦ (sign-changing: its rate comes from [`raw_channel_rate`],
/// not the dilated form).
pub fn channels_for(family: &GateFamily, dt: f64) -> Result<Vec<ErrorChannel>, ErrframeError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(ErrframeError::BadInput(format!("dt must be positive, got {dt}")));
    }
    match family {
        GateFamily::OneQubit { bx, by, theta_dot, delta_f, spec_offset, crosstalk, driven } => {
            let n = check_lens("OneQubit", &[bx.len(), by.len(), theta_dot.len()])?;
            let (dq, sp) = match driven {
                1 => (1usize, 2usize),
                2 => (2usize, 1usize),
                q => {
                    return Err(ErrframeError::BadInput(format!("driven qubit must be 1 or 2, got {q}")))
                }
            };
            // driven-qubit channel
            let g1: Vec<Complex64> = (0..n)
                .map(|k| {
                    Complex64::new(TAU * (delta_f - theta_dot[k] / TAU), TAU * by[k])
                })
                .collect();
            let f1: Vec<f64> = bx.iter().map(|&b| TAU * b).collect();
            let o1 = spin_op(Axis::Z, dq)?.add(&spin_op(Axis::Y, dq)?.scale(CI));
            // spectator crosstalk channel, dressed precession rate
            let delta2: Vec<f64> =
                (0..n).map(|k| delta_f + spec_offset - theta_dot[k] / TAU).collect();
            let sgn = if trapz(dt, &delta2) >= 0.0 { 1.0 } else { -1.0 };
            let g2: Vec<Complex64> = (0..n)
                .map(|k| Complex64::new(TAU * crosstalk * bx[k], TAU * crosstalk * by[k]))
                .collect();
            let f2: Vec<f64> = (0..n)
                .map(|k| {
                    let bx2 = crosstalk * bx[k];
                    let by2 = crosstalk * by[k];
                    sgn * TAU * (delta2[k] * delta2[k] + bx2 * bx2 + by2 * by2).sqrt()
                })
                .collect();
            let o2 = spin_op(Axis::X, sp)?.add(&spin_op(Axis::Y, sp)?.scale(CI));
            Ok(vec![
                ErrorChannel {
                    label: format!("1q-driven-z-q{dq}"),
                    o: o1,
                    g: g1,
                    f_dot: f1,
                    dt,
                    pair_weight: 2.0,
                },
                ErrorChannel {
                    label: format!("1q-spectator-flip-q{sp}"),
                    o: o2,
                    g: g2,
                    f_dot: f2,
                    dt,
                    pair_weight: 2.0,
                },
            ])
        }
        GateFamily::Cz { j, dez } => {
            let n = check_lens("Cz", &[j.len(), dez.len()])?;
            let jd = deriv(dt, j);
            let dd = deriv(dt, dez);
            let mut g = Vec::with_capacity(n);
            let mut f = Vec::with_capacity(n);
            for k in 0..n {
                let nu2 = j[k] * j[k] + dez[k] * dez[k];
                if nu2 <= 0.0 {
                    return Err(ErrframeError::BadInput(format!(
                        "Cz: J and ΔEz both vanish at sample {k}"
                    )));
                }
                g.push(Complex64::new(-(dez[k] * jd[k] - dd[k] * j[k]) / (2.0 * nu2), 0.0));
                f.push(TAU * nu2.sqrt());
            }
            // dressed odd-block flip operator at the entry mixing angle
            let w0 = rot_y(f64::atan2(j[0], dez[0]));
            let mut e01 = CMatrix::zeros(2)?;
            e01.set(0, 1, C1);
            let o = embed_odd(&w0.mul(&e01).mul(&w0.adjoint()), C0);
            Ok(vec![ErrorChannel {
                label: "cz-dressed-flip".into(),
                o,
                g,
                f_dot: f,
                dt,
                pair_weight: 1.0,
            }])
        }
        GateFamily::SwapAc { a, x_cos, x_sin, theta_dot, nu, chi0 } => {
            let n = check_lens(
                "SwapAc",
                &[a.len(), x_cos.len(), x_sin.len(), theta_dot.len()],
            )?;
            let mut g = Vec::with_capacity(n);
            let mut f = Vec::with_capacity(n);
            for k in 0..n {
                g.push(Complex64::new(
                    TAU * (a[k] - nu - theta_dot[k] / TAU),
                    TAU * x_sin[k],
                ));
                f.push(TAU * x_cos[k]);
            }
            let w0 = rot_y(*chi0);
            let sub = qcore::pauli(Axis::Z).add(&qcore::pauli(Axis::Y).scale(CI));
            let o = embed_odd(&w0.mul(&sub).mul(&w0.adjoint()), C0);
            Ok(vec![ErrorChannel {
                label: "swap-dressed-z".into(),
                o,
                g,
                f_dot: f,
                dt,
                pair_weight: 2.0,
            }])
        }
    }
}

fn sample_linear(y: &[Complex64], dt: f64, t: f64) -> Complex64 {
    let x = (t / dt).clamp(0.0, (y.len() - 1) as f64);
    let i = (x.floor() as usize).min(y.len() - 2);
    let frac = x - i as f64;
    y[i] * Complex64::new(1.0 - frac, 0.0) + y[i + 1] * Complex64::new(frac, 0.0)
}

/// Spectral error rate through the phase dilation: g̃(s) = g(t(s))·dt/ds on
/// the unit interval, evaluated at x = f(t_g) − f(0) (rad).
///
/// Requires a single-signed ḟ. A uniformly negative branch is handled by
/// conjugation (g → g*, ḟ → −ḟ leaves |∫g e^{if}| unchanged); a
/// sign-changing ḟ is rejected, mirroring the breakdown of the underlying
/// substitution ([`raw_channel_rate`] stays valid there). Returns the
/// single-branch rate; multiply by `pair_weight` for the reported total.
pub fn esd_error_rate(ch: &ErrorChannel, t_g: f64) -> Result<f64, ErrframeError> {
    let n = ch.n();
    if ch.f_dot.len() != n {
        return Err(ErrframeError::BadInput(format!(
            "channel arrays differ: {} vs {}",
            n,
            ch.f_dot.len()
        )));
    }
    let span = (n - 1) as f64 * ch.dt;
    if (span - t_g).abs() > 1e-9 * t_g.max(span) {
        return Err(ErrframeError::BadInput(format!(
            "channel spans {span} ns but t_g = {t_g} ns"
        )));
    }
    if ch.g.iter().all(|z| z.norm_sqr() == 0.0) {
        return Ok(0.0);
    }
    let negative = ch.f_dot.iter().all(|&v| v < 0.0);
    let (gv, fv): (Vec<Complex64>, Vec<f64>) = if negative {
        (ch.g.iter().map(|z| z.conj()).collect(), ch.f_dot.iter().map(|&v| -v).collect())
    } else {
        (ch.g.clone(), ch.f_dot.to_vec())
    };
    let map = windows::dilation_map(&fv, t_g)?;
    let ds = 1.0 / (n - 1) as f64;
    let mut g_tilde = Vec::with_capacity(n);
    for k in 0..n {
        let s = k as f64 * ds;
        let t = map.t_of_s(s);
        let dt_ds = map.dt_ds_at(s, ds);
        g_tilde.push(sample_linear(&gv, ch.dt, t) * Complex64::new(dt_ds, 0.0));
    }
    Ok(windows::esd_complex(&g_tilde, map.total_phase))
}

/// Direct quadrature of the channel integral |∫ g e^{if} dt|², valid for
/// any ḟ (including sign-changing SWAP channels). Single-branch value, like
/// [`esd_error_rate`].
pub fn raw_channel_rate(ch: &ErrorChannel) -> f64 {
    let n = ch.n();
    let f = cumtrapz(ch.dt, &ch.f_dot);
    let mut acc = C0;
    for k in 0..n {
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += ch.g[k] * Complex64::from_polar(w, f[k]);
    }
    (acc * Complex64::new(ch.dt, 0.0)).norm_sqr()
}

// ---------------------------------------------------------------------------
// generalized RWA

/// Effective Hamiltonian of one drive period beyond the plain RWA:
/// H̄ = ν∫H dt − iπν ∫₀^T∫₀^{t′} [H(t′), H(t″)] dt″ dt′ (frequency units).
///
/// The period-average term reproduces the static part; the double-integral
/// term carries the lowest-order micromotion correction (e.g. a circular
/// drive c(cos σx + sin σy) shifts z by −c²/ν). An envelope-derivative
/// term would add the anchor kick H(T) − H̄ for strictly periodic input —
/// an artifact of where the period is cut — and is deliberately omitted, so
/// zero-mean single-axis drives average to zero. The result is symmetrized;
/// a gross anti-hermitian residual is an error.
pub fn grwa_hamiltonian(
    h_rf: &HamiltonianTrajectory,
    nu_d: f64,
) -> Result<CMatrix, ErrframeError> {
    if !(nu_d > 0.0) || !nu_d.is_finite() {
        return Err(ErrframeError::BadInput(format!("drive frequency must be positive, got {nu_d}")));
    }
    let span = h_rf.t_g();
    let period = 1.0 / nu_d;
    if ((span - period) / period).abs() > 1e-6 {
        return Err(ErrframeError::BadPeriod(format!(
            "grid spans {span} ns but 1/ν_D = {period} ns"
        )));
    }
    let t1 = mat_trapz(h_rf.dt, &h_rf.h).scale(Complex64::new(nu_d, 0.0));
    let cum = mat_cumtrapz(h_rf.dt, &h_rf.h);
    let comms: Vec<CMatrix> =
        (0..h_rf.n()).map(|k| commutator(&h_rf.h[k], &cum[k])).collect();
    let t3 = mat_trapz(h_rf.dt, &comms).scale(Complex64::new(0.0, -PI * nu_d));
    let m = t1.add(&t3);
    let anti = m.sub(&m.adjoint()).scale(Complex64::new(0.5, 0.0));
    let scale = m.max_abs().max(1.0);
    if anti.max_abs() > 1e-8 * scale {
        return Err(ErrframeError::NotHermitian { index: 0, residual: anti.max_abs() });
    }
    Ok(m.add(&m.adjoint()).scale(Complex64::new(0.5, 0.0)))
}

// ---------------------------------------------------------------------------
// ideal-trajectory builders

/// Resonant one-qubit ideal: a pure x rotation on the driven qubit tracking
/// the applied flip, together with the spectator's known z precession
/// (detuning + phase tracking). The quadrature envelope is deliberately not
/// part of the ideal — its effect is what the driven-z channel measures.
///
/// `delta_spec[k]` is the spectator z rate Δf + (f_spec − f_driven) − θ̇/2π
/// in GHz.
pub fn ideal_one_qubit(
    bx: &[f64],
    delta_spec: &[f64],
    dt: f64,
    driven: u8,
) -> Result<IdealTrajectory, ErrframeError> {
    let n = check_lens("ideal_one_qubit", &[bx.len(), delta_spec.len()])?;
    let (dq, sp) = match driven {
        1 => (1usize, 2usize),
        2 => (2usize, 1usize),
        q => return Err(ErrframeError::BadInput(format!("driven qubit must be 1 or 2, got {q}"))),
    };
    let phi_x = cumtrapz(dt, bx);
    let phi_z = cumtrapz(dt, delta_spec);
    let sx = spin_op(Axis::X, dq)?;
    let sz = spin_op(Axis::Z, sp)?;
    let mut u = Vec::with_capacity(n);
    let mut h_gen = Vec::with_capacity(n);
    for k in 0..n {
        let rx = rot_x(TAU * phi_x[k]);
        let rz = rot_z(TAU * phi_z[k]);
        let uk = if dq == 1 { rx.kron(&rz)? } else { rz.kron(&rx)? };
        u.push(uk);
        let mut g = sx.scale(Complex64::new(bx[k], 0.0));
        g.add_assign(&sz.scale(Complex64::new(delta_spec[k], 0.0)));
        h_gen.push(g);
    }
    Ok(IdealTrajectory { dt, u, h_gen })
}

/// Adiabatic exchange ideal in the symmetric rotating frame (ν_D at the
/// mean splitting, so the even states carry no phase). The odd block
/// follows the instantaneous dressed basis:
/// U = e^{iπ∫J}·W(t)·R_z(2π∫ν_j)·W(0)†, W = R_y(arctan(J/ΔEz)),
/// whose generator is H_sub + (χ̇/4π)σ_y — the σ_y piece is exactly the
/// nonadiabatic coupling the error frame isolates.
pub fn ideal_cz(j: &[f64], dez: &[f64], dt: f64) -> Result<IdealTrajectory, ErrframeError> {
    let n = check_lens("ideal_cz", &[j.len(), dez.len()])?;
    let chi: Vec<f64> = (0..n).map(|k| f64::atan2(j[k], dez[k])).collect();
    let chi_dot = deriv(dt, &chi);
    let nu_j: Vec<f64> =
        (0..n).map(|k| (j[k] * j[k] + dez[k] * dez[k]).sqrt()).collect();
    let theta = cumtrapz(dt, &nu_j);
    let jphase = cumtrapz(dt, j);
    let w0_adj = rot_y(chi[0]).adjoint();
    let sy = qcore::pauli(Axis::Y);
    let sx = qcore::pauli(Axis::X);
    let szp = qcore::pauli(Axis::Z);
    let mut u = Vec::with_capacity(n);
    let mut h_gen = Vec::with_capacity(n);
    for k in 0..n {
        let w = rot_y(chi[k]);
        let phase = Complex64::from_polar(1.0, PI * jphase[k]);
        let sub = w.mul(&rot_z(TAU * theta[k])).mul(&w0_adj).scale(phase);
        u.push(embed_odd(&sub, C1));
        // generator: (ΔEz/2)σz + (J/2)σx − (J/2)𝟙 + (χ̇/4π)σy on the odd block
        let mut gsub = szp.scale(Complex64::new(0.5 * dez[k], 0.0));
        gsub.add_assign(&sx.scale(Complex64::new(0.5 * j[k], 0.0)));
        gsub.add_assign(&sy.scale(Complex64::new(chi_dot[k] / (2.0 * TAU), 0.0)));
        let mut g4 = embed_odd(&gsub, C0);
        let half_j = Complex64::new(-0.5 * j[k], 0.0);
        g4.set(1, 1, g4.get(1, 1) + half_j);
        g4.set(2, 2, g4.get(2, 2) + half_j);
        h_gen.push(g4);
    }
    Ok(IdealTrajectory { dt, u, h_gen })
}

/// Resonant-exchange (SWAP-class) ideal in the static dressed basis at the
/// bias point: frame rotation at ν + θ̇_j/2π about the dressed z axis, flip
/// generated by the in-phase transverse drive about the dressed x axis, and
/// the exact exchange phase e^{iπ∫J} on the odd block.
///
/// `x_cos` is X̃(t)cosΦ(t) (GHz), `j_full` the full carrier-resolved J(t),
/// `theta_j` the tracking phase (rad), `nu` the dressed splitting ν_ST and
/// `chi0` = arctan(J₀/ΔEz).
pub fn ideal_swap(
    x_cos: &[f64],
    j_full: &[f64],
    theta_j: &[f64],
    nu: f64,
    chi0: f64,
    dt: f64,
) -> Result<IdealTrajectory, ErrframeError> {
    let n = check_lens("ideal_swap", &[x_cos.len(), j_full.len(), theta_j.len()])?;
    let phi_x = cumtrapz(dt, x_cos);
    let jphase = cumtrapz(dt, j_full);
    let theta_dot = deriv(dt, theta_j);
    let w0 = rot_y(chi0);
    let w0_adj = w0.adjoint();
    let sz_d = w0.mul(&qcore::pauli(Axis::Z)).mul(&w0_adj);
    let sx = qcore::pauli(Axis::X);
    let mut u = Vec::with_capacity(n);
    let mut h_gen = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let zangle = TAU * nu * t + theta_j[k];
        let rz = rot_z(zangle);
        let phase = Complex64::from_polar(1.0, PI * jphase[k]);
        let sub = w0.mul(&rz).mul(&rot_x(TAU * phi_x[k])).mul(&w0_adj).scale(phase);
        u.push(embed_odd(&sub, C1));
        // generator: −J/2·𝟙 + (ν + θ̇/2π)·σ̃z/2 + X̃cosΦ·(F σ̃x F†)/2
        let fx = w0.mul(&rz).mul(&sx).mul(&rz.adjoint()).mul(&w0_adj);
        let mut gsub = sz_d.scale(Complex64::new(0.5 * (nu + theta_dot[k] / TAU), 0.0));
        gsub.add_assign(&fx.scale(Complex64::new(0.5 * x_cos[k], 0.0)));
        let mut g4 = embed_odd(&gsub, C0);
        let half_j = Complex64::new(-0.5 * j_full[k], 0.0);
        g4.set(1, 1, g4.get(1, 1) + half_j);
        g4.set(2, 2, g4.get(2, 2) + half_j);
        h_gen.push(g4);
    }
    Ok(IdealTrajectory { dt, u, h_gen })
}

// ---------------------------------------------------------------------------
