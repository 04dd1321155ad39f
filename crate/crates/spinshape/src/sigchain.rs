//! Signal conditioning between the pulse shaper and the physics: causal
//! low-pass Butterworth filtering of every control channel, plus grid
//! resampling.
//!
//! The filter models a physical transmission line, so it runs forward in
//! time only (causal phase lag included, no zero-phase tricks). Analog
//! Butterworth poles are discretized by the bilinear transform with the
//! cutoff pre-warped, which keeps the −3 dB point exact and the DC gain
//! exactly 1.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SigchainError {
    #[error("Nyquist violation: dt·cutoff = {0} must be < 0.5")]
    Nyquist(f64),
    #[error("invalid filter parameter: {0}")]
    BadParameter(String),
    #[error("invalid waveform: {0}")]
    BadWaveform(String),
}

/// A uniformly sampled real waveform, t_k = k·dt.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledWaveform {
    /// Sample spacing, ns.
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl SampledWaveform {
    pub fn new(dt: f64, samples: Vec<f64>) -> Self {
        SampledWaveform { dt, samples }
    }

    /// Total spanned time (n−1)·dt.
    pub fn duration(&self) -> f64 {
        (self.samples.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Linear interpolation at arbitrary t, clamped to the ends.
    pub fn value_at(&self, t: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let x = (t / self.dt).clamp(0.0, (self.samples.len() - 1) as f64);
        let k = (x.floor() as usize).min(self.samples.len() - 2);
        let f = x - k as f64;
        self.samples[k] * (1.0 - f) + self.samples[k + 1] * f
    }
}

/// Low-pass filter settings for a control line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterSpec {
    pub order: usize,
    /// Cutoff (−3 dB) frequency, GHz.
    pub cutoff: f64,
    pub enabled: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { order: 3, cutoff: 0.150, enabled: true }
    }
}

impl FilterSpec {
    /// Single-pole time constant 1/(2π·cutoff), ns. Pulse windows are padded
    /// by a few of these so the filtered tail completes.
    pub fn tau(&self) -> f64 {
        1.0 / (std::f64::consts::TAU * self.cutoff)
    }

    fn validate(&self, dt: f64) -> Result<(), SigchainError> {
        if self.order < 1 {
            return Err(SigchainError::BadParameter("order must be ≥ 1".into()));
        }
        if !(self.cutoff > 0.0) {
            return Err(SigchainError::BadParameter("cutoff must be > 0".into()));
        }
        let prod = dt * self.cutoff;
        if !(prod < 0.5) {
            return Err(SigchainError::Nyquist(prod));
        }
        Ok(())
    }
}

/// One biquad (transposed direct-form II); first-order sections keep b2 = a2 = 0.
#[derive(Clone, Copy, Debug)]
struct Sos {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Sos {
    /// Forces the digital DC gain of this section to exactly 1.
    fn normalize_dc(&mut self) {
        let g = (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        self.b0 /= g;
        self.b1 /= g;
        self.b2 /= g;
    }
}

/// Analog Butterworth poles → bilinear-transformed biquad cascade.
fn design_sos(order: usize, cutoff: f64, dt: f64) -> Vec<Sos> {
    // pre-warp so the digital −3 dB point lands exactly on `cutoff`
    let k = 2.0 / dt;
    let omega = k * (std::f64::consts::PI * cutoff * dt).tan();
    let mut sections = Vec::new();
    let pairs = order / 2;
    for m in 1..=pairs {
        // conjugate pole pair at angle π(2m+order−1)/(2·order) from +Re axis
        let phi = std::f64::consts::PI * (2 * m + order - 1) as f64 / (2 * order) as f64;
        let two_zeta_omega = -2.0 * phi.cos() * omega;
        let a0 = k * k + two_zeta_omega * k + omega * omega;
        let mut s = Sos {
            b0: omega * omega / a0,
            b1: 2.0 * omega * omega / a0,
            b2: omega * omega / a0,
            a1: (2.0 * omega * omega - 2.0 * k * k) / a0,
            a2: (k * k - two_zeta_omega * k + omega * omega) / a0,
        };
        s.normalize_dc();
        sections.push(s);
    }
    if order % 2 == 1 {
        let a0 = k + omega;
        let mut s = Sos {
            b0: omega / a0,
            b1: omega / a0,
            b2: 0.0,
            a1: (omega - k) / a0,
            a2: 0.0,
        };
        s.normalize_dc();
        sections.push(s);
    }
    sections
}

fn run_cascade(sections: &[Sos], x: &[f64], init: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    for s in sections {
        // Transposed direct-form II. The state is pre-charged to the fixed
        // point for input = output = init, so a line resting at `init`
        // carries it through without transient (each section has DC gain 1).
        let mut st2 = (s.b2 - s.a2) * init;
        let mut st1 = (s.b1 - s.a1) * init + st2;
        for v in y.iter_mut() {
            let x_n = *v;
            let y_n = s.b0 * x_n + st1;
            st1 = s.b1 * x_n - s.a1 * y_n + st2;
            st2 = s.b2 * x_n - s.a2 * y_n;
            *v = y_n;
        }
    }
    y
}

/// Causal Butterworth low-pass with zero initial state (the line starts
/// fully discharged). Returns the input unchanged when the spec is disabled.
pub fn butterworth_lowpass(
    signal: &SampledWaveform,
    spec: &FilterSpec,
) -> Result<SampledWaveform, SigchainError> {
    butterworth_lowpass_from(signal, spec, 0.0)
}

/// Causal Butterworth low-pass with the internal state pre-charged to a
/// resting level: the line is assumed to have carried `baseline` forever
/// before t = 0. With `baseline` equal to the first sample this removes the
/// startup transient entirely.
pub fn butterworth_lowpass_from(
    signal: &SampledWaveform,
    spec: &FilterSpec,
    baseline: f64,
) -> Result<SampledWaveform, SigchainError> {
    if !spec.enabled {
        return Ok(signal.clone());
    }
    spec.validate(signal.dt)?;
    if signal.samples.is_empty() {
        return Ok(signal.clone());
    }
    let sections = design_sos(spec.order, spec.cutoff, signal.dt);
    let samples = run_cascade(&sections, &signal.samples, baseline);
    Ok(SampledWaveform { dt: signal.dt, samples })
}

/// Exact steady-state complex gain of the digital cascade at frequency
/// `freq` (GHz) for a given sample spacing. Useful for predicting how much a
/// carrier survives the line without running the filter. Returns 1 when the
/// filter is disabled.
pub fn frequency_response(
    spec: &FilterSpec,
    dt: f64,
    freq: f64,
) -> Result<num_complex::Complex64, SigchainError> {
    use num_complex::Complex64;
    if !spec.enabled {
        return Ok(Complex64::new(1.0, 0.0));
    }
    spec.validate(dt)?;
    // z⁻¹ evaluated on the unit circle at the requested frequency
    let zinv = Complex64::from_polar(1.0, -std::f64::consts::TAU * freq * dt);
    let mut h = Complex64::new(1.0, 0.0);
    for s in design_sos(spec.order, spec.cutoff, dt) {
        let num = Complex64::new(s.b0, 0.0) + s.b1 * zinv + s.b2 * zinv * zinv;
        let den = Complex64::new(1.0, 0.0) + s.a1 * zinv + s.a2 * zinv * zinv;
        h *= num / den;
    }
    Ok(h)
}

/// Linear-interpolation resampling onto a grid spanning exactly the same
/// time interval. The requested spacing is snapped to the nearest value that
/// divides the span evenly, so both endpoints are preserved.
pub fn resample(signal: &SampledWaveform, new_dt: f64) -> Result<SampledWaveform, SigchainError> {
    if !(new_dt > 0.0) {
        return Err(SigchainError::BadParameter(format!(
            "resample spacing must be positive, got {new_dt}"
        )));
    }
    if signal.samples.len() < 2 {
        return Ok(SampledWaveform { dt: new_dt, samples: signal.samples.clone() });
    }
    let span = signal.duration();
    let n_out = ((span / new_dt).round() as usize).max(1) + 1;
    let dt_out = span / (n_out - 1) as f64;
    let samples = (0..n_out)
        .map(|k| {
            if k == n_out - 1 {
                *signal.samples.last().unwrap()
            } else {
                signal.value_at(k as f64 * dt_out)
            }
        })
        .collect();
    Ok(SampledWaveform { dt: dt_out, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_spec() -> FilterSpec {
        FilterSpec::default()
    }

    /// Steady-state amplitude of y at frequency f, by quadrature projection
    /// over the trailing whole periods of the record.
    fn steady_amplitude(y: &SampledWaveform, f: f64, t_from: f64) -> f64 {
        let period = 1.0 / f;
        let t_end = y.duration();
        let n_per = ((t_end - t_from) / period).floor();
        let t0 = t_end - n_per * period;
        let mut c = 0.0;
        let mut s = 0.0;
        let mut count = 0usize;
        for (k, &v) in y.samples.iter().enumerate() {
            let t = k as f64 * y.dt;
            if t >= t0 {
                let ph = std::f64::consts::TAU * f * t;
                c += v * ph.cos();
                s += v * ph.sin();
                count += 1;
            }
        }
        2.0 * (c * c + s * s).sqrt() / count as f64
    }

    #[test]
    fn constant_input_settles_to_unity() {
        let spec = default_spec();
        let dt = 0.01;
        let n = 10_000;
        let x = SampledWaveform::new(dt, vec![1.0; n]);
        let y = butterworth_lowpass(&x, &spec).unwrap();
        let tau5 = 5.0 * spec.tau();
        let idx5 = (tau5 / dt) as usize;
        for (k, &v) in y.samples.iter().enumerate().skip(idx5) {
            assert!(
                (v - 1.0).abs() < 0.1,
                "step response must be within 10% of DC after 5τ, at k={k}: {v}"
            );
        }
        let last = *y.samples.last().unwrap();
        assert!(
            (last - 1.0).abs() < 1e-10,
            "unity DC gain must be exact once settled, got {last}"
        );
    }

    #[test]
    fn steady_baseline_has_no_transient() {
        let spec = default_spec();
        let x = SampledWaveform::new(0.01, vec![0.7; 500]);
        let y = butterworth_lowpass_from(&x, &spec, 0.7).unwrap();
        for (k, &v) in y.samples.iter().enumerate() {
            assert!(
                (v - 0.7).abs() < 1e-12,
                "pre-charged filter must pass its resting level exactly, at k={k}: {v}"
            );
        }
    }

    #[test]
    fn cutoff_attenuation_is_3db() {
        let spec = default_spec();
        let dt = 0.005;
        let n = 60_000; // 300 ns
        let f = spec.cutoff;
        let x = SampledWaveform::new(
            dt,
            (0..n).map(|k| (std::f64::consts::TAU * f * k as f64 * dt).sin()).collect(),
        );
        let y = butterworth_lowpass(&x, &spec).unwrap();
        let amp = steady_amplitude(&y, f, 150.0);
        let expect = std::f64::consts::FRAC_1_SQRT_2;
        assert!(
            ((amp - expect) / expect).abs() < 0.01,
            "amplitude at the cutoff must be 1/√2 within 1%, got {amp}"
        );
    }

    #[test]
    fn decade_above_cutoff_attenuates_60db() {
        let spec = default_spec();
        let dt = 0.002;
        let n = 100_000; // 200 ns
        let f = 10.0 * spec.cutoff;
        let x = SampledWaveform::new(
            dt,
            (0..n).map(|k| (std::f64::consts::TAU * f * k as f64 * dt).sin()).collect(),
        );
        let y = butterworth_lowpass(&x, &spec).unwrap();
        let amp = steady_amplitude(&y, f, 100.0);
        assert!(
            amp < 1.5e-3 && amp > 1e-3 / 1.5,
            "order-3 rolloff is 60 dB/decade, expected amplitude ≈ 1e−3, got {amp:.3e}"
        );
    }

    #[test]
    fn nyquist_violation_rejected() {
        let spec = default_spec();
        let x = SampledWaveform::new(4.0, vec![0.0; 16]);
        match butterworth_lowpass(&x, &spec) {
            Err(SigchainError::Nyquist(p)) => assert!((p - 0.6).abs() < 1e-12),
            other => panic!("expected Nyquist error, got {other:?}"),
        }
    }

    #[test]
    fn filter_is_linear() {
        let spec = default_spec();
        let dt = 0.01;
        let n = 2_000;
        let x1 = SampledWaveform::new(
            dt,
            (0..n).map(|k| (0.11 * k as f64 * dt).sin()).collect(),
        );
        let x2 = SampledWaveform::new(
            dt,
            (0..n).map(|k| (0.07 * k as f64 * dt + 0.5).cos()).collect(),
        );
        let (a, b) = (1.3, -0.4);
        let combo = SampledWaveform::new(
            dt,
            x1.samples
                .iter()
                .zip(&x2.samples)
                .map(|(&u, &v)| a * u + b * v)
                .collect(),
        );
        let y1 = butterworth_lowpass(&x1, &spec).unwrap();
        let y2 = butterworth_lowpass(&x2, &spec).unwrap();
        let yc = butterworth_lowpass(&combo, &spec).unwrap();
        for k in 0..n {
            let lin = a * y1.samples[k] + b * y2.samples[k];
            assert!(
                (yc.samples[k] - lin).abs() < 1e-12,
                "filter must be linear to 1e−12 at sample {k}"
            );
        }
    }

    #[test]
    fn disabled_filter_is_identity() {
        let mut spec = default_spec();
        spec.enabled = false;
        let x = SampledWaveform::new(0.5, vec![1.0, -2.0, 3.0]);
        let y = butterworth_lowpass(&x, &spec).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn resample_identity_and_affine() {
        let x = SampledWaveform::new(0.25, (0..9).map(|k| 0.3 * k as f64 - 1.0).collect());
        let same = resample(&x, 0.25).unwrap();
        assert_eq!(same, x, "resampling onto the same grid must be the identity");
        let finer = resample(&x, 0.05).unwrap();
        assert_eq!(finer.samples.len(), 41);
        for (k, &v) in finer.samples.iter().enumerate() {
            let t = k as f64 * finer.dt;
            let expect = 0.3 * (t / 0.25) - 1.0;
            assert!(
                (v - expect).abs() < 1e-12,
                "linear interpolation must be exact on a ramp, sample {k}"
            );
        }
        let ends = resample(&x, 0.3).unwrap();
        assert_eq!(*ends.samples.last().unwrap(), *x.samples.last().unwrap());
    }

    #[test]
    fn resample_hann_error_bound() {
        let t_g = 20.0;
        let dt = 1.0;
        let n = 21;
        let hann =
            |t: f64| 1.0 - (std::f64::consts::TAU * t / t_g).cos();
        let x = SampledWaveform::new(dt, (0..n).map(|k| hann(k as f64 * dt)).collect());
        let fine = resample(&x, dt / 10.0).unwrap();
        let mut worst: f64 = 0.0;
        for (k, &v) in fine.samples.iter().enumerate() {
            let t = k as f64 * fine.dt;
            worst = worst.max((v - hann(t)).abs());
        }
        let bound = (std::f64::consts::PI * dt / t_g).powi(2);
        assert!(
            worst < bound,
            "interpolation error {worst} must sit below the curvature bound {bound}"
        );
    }

    #[test]
    fn resample_rejects_bad_spacing() {
        let x = SampledWaveform::new(0.25, vec![0.0; 5]);
        assert!(matches!(resample(&x, 0.0), Err(SigchainError::BadParameter(_))));
        assert!(matches!(resample(&x, -1.0), Err(SigchainError::BadParameter(_))));
    }

    #[test]
    fn frequency_response_hits_named_points() {
        let spec = default_spec();
        let dt = 0.01;
        let dc = frequency_response(&spec, dt, 0.0).unwrap();
        assert!((dc.norm() - 1.0).abs() < 1e-12, "DC gain must be exactly 1");
        // bilinear design with pre-warping puts the −3 dB point exactly on the
        // requested cutoff
        let edge = frequency_response(&spec, dt, spec.cutoff).unwrap();
        assert!(
            (edge.norm() - 0.5f64.sqrt()).abs() < 1e-9,
            "gain at the cutoff should be 1/√2, got {}",
            edge.norm()
        );
        let mut off = spec;
        off.enabled = false;
        let one = frequency_response(&off, dt, 3.0).unwrap();
        assert_eq!(one, num_complex::Complex64::new(1.0, 0.0));
    }

    #[test]
    fn frequency_response_matches_running_the_filter() {
        let spec = default_spec();
        let dt = 0.02;
        let freq = 0.35;
        let n = 60_000;
        let x = SampledWaveform::new(
            dt,
            (0..n).map(|k| (std::f64::consts::TAU * freq * k as f64 * dt).cos()).collect(),
        );
        let y = butterworth_lowpass(&x, &spec).unwrap();
        // project the settled tail onto the carrier quadratures over whole periods
        let period = 1.0 / freq;
        let n_per = (period / dt).round() as usize;
        let whole = (n / 2) / n_per * n_per;
        let start = n - whole;
        let (mut c, mut s) = (0.0, 0.0);
        for k in start..n {
            let ph = std::f64::consts::TAU * freq * k as f64 * dt;
            c += y.samples[k] * ph.cos();
            s += y.samples[k] * ph.sin();
        }
        let amp = 2.0 * (c * c + s * s).sqrt() / whole as f64;
        let h = frequency_response(&spec, dt, freq).unwrap().norm();
        assert!(
            (amp - h).abs() < 2e-3 * h,
            "measured carrier gain {amp} should match the predicted response {h}"
        );
    }
}
