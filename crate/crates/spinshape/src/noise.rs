//! Stochastic inputs: 1/f charge-noise traces by the Fourier-filter method,
//! the analytic static (sub-resolution) compensation, and quasi-static
//! Zeeman noise.
//!
//! The spectral density convention is S(ω) = A²/ω (angular frequency), i.e.
//! S(f) = A²/(2πf): one function serves both the trace filter and the
//! static-variance integral. A trace of N segments resolves frequencies from
//! 1/(N·dt) up to Nyquist; everything between the retuning cutoff f_min and
//! 1/(N·dt) is carried by a single Gaussian offset per realization with the
//! closed-form variance (A²/π)·ln(1/(t_sim·f_min)).

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("static variance undefined: t_sim·f_min = {0} must be < 1")]
    BandCollapsed(f64),
    #[error("trace needs at least 2 segments, got {0}")]
    TooShort(usize),
}

/// Noise settings for an ensemble run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Charge-noise PSD amplitude A (mV units on the barrier voltage).
    pub charge_amp: f64,
    /// Low-frequency cutoff of the static band, Hz (retuning cycle).
    pub f_min_hz: f64,
    /// Quasi-static Zeeman spread per qubit, GHz.
    pub quasi_static_sigma: (f64, f64),
    /// Master seed; realizations use counter-based substreams.
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            charge_amp: 0.0,
            f_min_hz: 0.1,
            quasi_static_sigma: (0.0, 0.0),
            seed: 0,
        }
    }
}

/// One realization of a piecewise-constant noise waveform.
#[derive(Clone, Debug)]
pub struct NoiseTrace {
    pub dt: f64,
    /// Value on segment [k·dt, (k+1)·dt).
    pub samples: Vec<f64>,
    /// Static (sub-resolution) offset, constant over the realization.
    pub static_offset: f64,
}

impl NoiseTrace {
    pub fn zero(dt: f64, n: usize) -> Self {
        NoiseTrace { dt, samples: vec![0.0; n], static_offset: 0.0 }
    }

    /// Total value on segment k including the static offset.
    pub fn value(&self, k: usize) -> f64 {
        self.samples[k] + self.static_offset
    }
}

/// Deterministic per-realization random stream: `index` selects a ChaCha
/// stream so serial and parallel ensembles draw identical numbers.
pub fn substream_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn colored_trace_impl(
    a: f64,
    n: usize,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<(NoiseTrace, f64), NoiseError> {
    if n < 2 {
        return Err(NoiseError::TooShort(n));
    }
    if a == 0.0 {
        return Ok((NoiseTrace::zero(dt, n), 0.0));
    }
    // White Gaussian seed sequence → DFT → shape by √(S(ω_k)/dt) → inverse.
    // The 1/dt makes the periodogram estimator (dt/N)|X_k|² land on S(f):
    // E|X_k|² = N·S(ω_k)/dt.
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0); // DC carried by the static term
    for (k, v) in buf.iter_mut().enumerate().skip(1) {
        // fold to the physical frequency so the multiplier is symmetric
        // (keeps the inverse transform real)
        let k_phys = k.min(n - k) as f64;
        let omega = std::f64::consts::TAU * k_phys / (n as f64 * dt);
        *v *= (a * a / (omega * dt)).sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let mut max_im: f64 = 0.0;
    let mut max_re: f64 = 0.0;
    let samples: Vec<f64> = buf
        .iter()
        .map(|z| {
            max_im = max_im.max(z.im.abs());
            max_re = max_re.max(z.re.abs());
            z.re * scale
        })
        .collect();
    let residue = if max_re > 0.0 { max_im / max_re } else { 0.0 };
    Ok((NoiseTrace { dt, samples, static_offset: 0.0 }, residue))
}

/// 1/f-filtered Gaussian trace of `n` segments with PSD S(f) = A²/(2πf)
/// down to the trace resolution 1/(n·dt); the zero-frequency bin is zeroed
/// (see [`static_variance`] for the sub-resolution band).
pub fn colored_trace(
    a: f64,
    n: usize,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<NoiseTrace, NoiseError> {
    colored_trace_impl(a, n, dt, rng).map(|(t, _)| t)
}

/// Variance of the unresolved low-frequency band:
/// (1/π)·∫ S(ω) dω from 2π·f_min to 2π/t_sim = (A²/π)·ln(1/(t_sim·f_min)).
///
/// `t_sim` in ns, `f_min` in Hz.
pub fn static_variance(a: f64, t_sim_ns: f64, f_min_hz: f64) -> Result<f64, NoiseError> {
    let product = t_sim_ns * 1e-9 * f_min_hz;
    if product >= 1.0 {
        return Err(NoiseError::BandCollapsed(product));
    }
    Ok(a * a / std::f64::consts::PI * (1.0 / product).ln())
}

/// One quasi-static Gaussian draw (zero mean, given σ), constant over a gate.
pub fn quasi_static_draw(sigma: f64, rng: &mut impl Rng) -> f64 {
    if sigma == 0.0 {
        // keep the stream advancing identically whether or not σ is zero
        let _: f64 = rng.sample(StandardNormal);
        return 0.0;
    }
    sigma * rng.sample::<f64, _>(StandardNormal)
}

/// Full charge-noise realization: static offset (drawn first) plus the
/// colored trace, using one rng stream.
pub fn charge_noise_realization(
    a: f64,
    f_min_hz: f64,
    n: usize,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<NoiseTrace, NoiseError> {
    let var = static_variance(a, n as f64 * dt, f_min_hz)?;
    let offset = var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let mut trace = colored_trace(a, n, dt, rng)?;
    trace.static_offset = offset;
    Ok(trace)
}
