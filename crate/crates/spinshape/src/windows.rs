//! Window functions, time-dilation maps and energy spectral densities.
//!
//! Windows are normalized to unit mean, `∫₀^{t_g} w dt = t_g`, where the
//! integral is fixed by the composite trapezoid rule on a 4097-point
//! reference grid. All shapes depend on time only through `s = t/t_g`, so
//! the normalization constant is a property of the window kind alone.
//!
//! The energy spectral density of a dimensionless shape `g̃(s)` on `s∈[0,1]`
//! is `S[x] = |∫₀¹ g̃(s) e^{ixs} ds|²`; pulse-shape optimisation amounts to
//! pushing this quantity down at the relevant phase argument `x`.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WindowsError {
    #[error("dilation map needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("dilation map undefined: ḟ ≤ 0 at sample index {0}")]
    NonPositiveRate(usize),
    #[error("window parameter out of range: {0}")]
    BadParameter(String),
}

/// Supported pulse-shape windows.
#[derive(Clone, Debug, PartialEq)]
pub enum WindowKind {
    Rect,
    Hann,
    /// Kaiser window with shape parameter λ; raw shape I₀(2λ√(s(1−s))).
    Kaiser { lambda: f64 },
    /// Tukey (cosine-tapered rectangle); λ ∈ [0,1] is the tapered fraction,
    /// λ = 0 recovers Rect and λ = 1 recovers Hann.
    Tukey { lambda: f64 },
    /// Truncated Fourier series
    /// w(t) = Σ_n even[n]·(1 − cos(2π(n+1)t/t_g)) + Σ_n odd[n]·sin(2π(n+1)t/t_g).
    FourierSeries { even: Vec<f64>, odd: Vec<f64> },
}

impl WindowKind {
    /// The four-term even series used by the optimized static shapes.
    pub fn fourier_default() -> Self {
        WindowKind::FourierSeries {
            even: vec![1.0715, -0.0795, 0.0043, 0.0037],
            odd: vec![],
        }
    }
}

fn raw_value(kind: &WindowKind, s: f64) -> f64 {
    debug_assert!((-1e-12..=1.0 + 1e-12).contains(&s));
    let s = s.clamp(0.0, 1.0);
    match kind {
        WindowKind::Rect => 1.0,
        WindowKind::Hann => 1.0 - (std::f64::consts::TAU * s).cos(),
        WindowKind::Kaiser { lambda } => bessel_i0(2.0 * lambda * (s * (1.0 - s)).sqrt()),
        WindowKind::Tukey { lambda } => {
            let l = *lambda;
            if l < 1e-12 {
                return 1.0;
            }
            let plateau = 2.0 / (2.0 - l);
            let edge = l / 2.0;
            if s < edge {
                (1.0 - (std::f64::consts::TAU * s / l).cos()) / (2.0 - l)
            } else if s > 1.0 - edge {
                (1.0 - (std::f64::consts::TAU * (1.0 - s) / l).cos()) / (2.0 - l)
            } else {
                plateau
            }
        }
        WindowKind::FourierSeries { even, odd } => {
            let mut w = 0.0;
            for (n, &a) in even.iter().enumerate() {
                w += a * (1.0 - (std::f64::consts::TAU * (n as f64 + 1.0) * s).cos());
            }
            for (n, &a) in odd.iter().enumerate() {
                w += a * (std::f64::consts::TAU * (n as f64 + 1.0) * s).sin();
            }
            w
        }
    }
}

/// Number of points of the reference normalization grid.
pub const NORM_GRID: usize = 4097;

/// Unit-mean normalization constant: the trapezoid mean of the raw shape on
/// the 4097-point reference grid.
pub fn normalization(kind: &WindowKind) -> f64 {
    let n = NORM_GRID;
    let h = 1.0 / (n - 1) as f64;
    let mut acc = 0.5 * (raw_value(kind, 0.0) + raw_value(kind, 1.0));
    for k in 1..n - 1 {
        acc += raw_value(kind, k as f64 * h);
    }
    acc * h
}

/// Normalized window value w(t) with `∫w dt = t_g` on the reference grid.
pub fn window_value(kind: &WindowKind, t: f64, t_g: f64) -> f64 {
    raw_value(kind, t / t_g) / normalization(kind)
}

/// `n` normalized samples on the inclusive uniform grid t = 0..t_g.
pub fn sample_window(kind: &WindowKind, _t_g: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "sample_window needs at least 2 samples");
    let norm = normalization(kind);
    (0..n)
        .map(|k| raw_value(kind, k as f64 / (n - 1) as f64) / norm)
        .collect()
}

/// Modified Bessel function of the first kind, order zero, by its power
/// series Σ (x/2)^{2m} / (m!)².
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..200 {
        term *= q / ((m * m) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

// ---------------------------------------------------------------------------
// Dilation map
// ---------------------------------------------------------------------------

/// Monotone map between wall-clock time t ∈ [0, t_g] and the dimensionless
/// phase-uniform coordinate s ∈ [0, 1] defined by ḟ(t)·dt = Φ_tot·ds with
/// Φ_tot = ∫₀^{t_g} ḟ dt.
#[derive(Clone, Debug)]
pub struct DilationMap {
    /// Uniform time grid (inclusive ends).
    pub t: Vec<f64>,
    /// s(t_k), strictly increasing from 0 to 1.
    pub s: Vec<f64>,
    /// Total accumulated phase ∫ḟ dt (the esd argument x, in radians when
    /// ḟ is in rad/ns).
    pub total_phase: f64,
}

impl DilationMap {
    /// Piecewise-linear inverse t(s).
    pub fn t_of_s(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        // binary search over the monotone s grid
        let mut lo = 0usize;
        let mut hi = self.s.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.s[mid] <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ds = self.s[hi] - self.s[lo];
        if ds <= 0.0 {
            return self.t[lo];
        }
        let f = (s - self.s[lo]) / ds;
        self.t[lo] + f * (self.t[hi] - self.t[lo])
    }

    /// dt/ds at the uniform-s point, by differencing the inverse map.
    pub fn dt_ds_at(&self, s: f64, ds: f64) -> f64 {
        let a = self.t_of_s((s - 0.5 * ds).max(0.0));
        let b = self.t_of_s((s + 0.5 * ds).min(1.0));
        let span = ((s + 0.5 * ds).min(1.0) - (s - 0.5 * ds).max(0.0)).max(f64::MIN_POSITIVE);
        (b - a) / span
    }
}

/// Builds the dilation map from samples of ḟ on the inclusive uniform grid
/// over [0, t_g]. Every sample must be strictly positive; a non-positive
/// rate makes the substitution singular and is reported with its index.
pub fn dilation_map(f_dot: &[f64], t_g: f64) -> Result<DilationMap, WindowsError> {
    let n = f_dot.len();
    if n < 2 {
        return Err(WindowsError::TooFewSamples(n));
    }
    for (i, &v) in f_dot.iter().enumerate() {
        if !(v > 0.0) {
            return Err(WindowsError::NonPositiveRate(i));
        }
    }
    let h = t_g / (n - 1) as f64;
    let mut cum = Vec::with_capacity(n);
    cum.push(0.0);
    let mut acc = 0.0;
    for k in 1..n {
        acc += 0.5 * (f_dot[k - 1] + f_dot[k]) * h;
        cum.push(acc);
    }
    let total = acc;
    let t: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    let s: Vec<f64> = cum.iter().map(|&v| v / total).collect();
    Ok(DilationMap { t, s, total_phase: total })
}

// ---------------------------------------------------------------------------
// Energy spectral density
// ---------------------------------------------------------------------------

/// `|∫₀¹ g̃(s) e^{ixs} ds|²` by the trapezoid rule on the inclusive uniform
/// s grid carrying the samples.
pub fn esd(g_tilde: &[f64], x: f64) -> f64 {
    let n = g_tilde.len();
    assert!(n >= 2, "esd needs at least 2 samples");
    let h = 1.0 / (n - 1) as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &g) in g_tilde.iter().enumerate() {
        let wgt = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += Complex64::from_polar(g * wgt, x * k as f64 * h);
    }
    (acc * h).norm_sqr()
}

/// Complex-envelope variant of [`esd`].
pub fn esd_complex(g_tilde: &[Complex64], x: f64) -> f64 {
    let n = g_tilde.len();
    assert!(n >= 2, "esd needs at least 2 samples");
    let h = 1.0 / (n - 1) as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &g) in g_tilde.iter().enumerate() {
        let wgt = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        acc += g * Complex64::from_polar(wgt, x * k as f64 * h);
    }
    (acc * h).norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: fn() -> Vec<WindowKind> = || {
        vec![
            WindowKind::Rect,
            WindowKind::Hann,
            WindowKind::Kaiser { lambda: 8.0 },
            WindowKind::Tukey { lambda: 0.5 },
            WindowKind::fourier_default(),
        ]
    };

    #[test]
    fn normalized_trapezoid_integral_is_tg() {
        let t_g = 13.7;
        for kind in KINDS() {
            let w = sample_window(&kind, t_g, NORM_GRID);
            let h = t_g / (NORM_GRID - 1) as f64;
            let mut acc = 0.5 * (w[0] + w[NORM_GRID - 1]);
            for v in &w[1..NORM_GRID - 1] {
                acc += v;
            }
            let integral = acc * h;
            assert!(
                (integral - t_g).abs() < 1e-8 * t_g,
                "{kind:?}: normalized integral {integral} should equal t_g = {t_g}"
            );
        }
    }

    #[test]
    fn pinned_window_values() {
        // Hann midpoint is exactly 2 under the unit-mean convention.
        let v = window_value(&WindowKind::Hann, 5.0, 10.0);
        assert!((v - 2.0).abs() < 1e-12, "Hann midpoint should be 2, got {v}");

        // Kaiser degenerates to Rect as λ → 0.
        let v = window_value(&WindowKind::Kaiser { lambda: 1e-9 }, 3.3, 10.0);
        assert!((v - 1.0).abs() < 1e-9, "Kaiser λ→0 should be flat 1, got {v}");

        // Tukey(0.5) plateau sits at 2/(2−λ) = 4/3.
        let v = window_value(&WindowKind::Tukey { lambda: 0.5 }, 5.0, 10.0);
        assert!((v - 4.0 / 3.0).abs() < 1e-12, "Tukey(0.5) plateau should be 4/3, got {v}");
    }

    #[test]
    fn tukey_limits_recover_hann_and_rect() {
        let t_g = 7.0;
        for k in 0..=32 {
            let t = k as f64 / 32.0 * t_g;
            let hann = window_value(&WindowKind::Hann, t, t_g);
            let tukey1 = window_value(&WindowKind::Tukey { lambda: 1.0 }, t, t_g);
            assert!(
                (hann - tukey1).abs() < 1e-12,
                "Tukey(1) must equal Hann at t = {t}"
            );
            let rect = window_value(&WindowKind::Tukey { lambda: 0.0 }, t, t_g);
            assert!((rect - 1.0).abs() < 1e-12, "Tukey(0) must equal Rect");
        }
    }

    #[test]
    fn sample_window_endpoints_and_rect() {
        let s = sample_window(&WindowKind::Rect, 10.0, 3);
        assert_eq!(s.len(), 3);
        for v in &s {
            assert!((v - 1.0).abs() < 1e-12, "Rect samples must all be 1, got {s:?}");
        }
        let s = sample_window(&WindowKind::Hann, 25.0, 101);
        assert!(s[0].abs() < 1e-12 && s[100].abs() < 1e-12, "Hann endpoints must vanish");
    }

    #[test]
    fn windows_are_even_symmetric() {
        let t_g = 11.0;
        for kind in KINDS() {
            for k in 0..=40 {
                let t = k as f64 / 40.0 * t_g;
                let a = window_value(&kind, t, t_g);
                let b = window_value(&kind, t_g - t, t_g);
                assert!(
                    (a - b).abs() < 1e-12,
                    "{kind:?} must satisfy w(t) = w(t_g − t)"
                );
            }
        }
    }

    #[test]
    fn fourier_series_vanishes_at_ends() {
        let kind = WindowKind::fourier_default();
        let a = window_value(&kind, 0.0, 5.0);
        let b = window_value(&kind, 5.0, 5.0);
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12, "even series must vanish at the ends");
    }

    #[test]
    fn bessel_i0_series_matches_quadrature() {
        // I₀(x) = (1/π)∫₀^π exp(x cosθ) dθ, Simpson with 20001 points.
        for &x in &[0.5, 3.0, 8.0] {
            let n = 20001usize;
            let h = std::f64::consts::PI / (n - 1) as f64;
            let f = |theta: f64| (x * theta.cos()).exp();
            let mut acc = f(0.0) + f(std::f64::consts::PI);
            for k in 1..n - 1 {
                acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            let quad = acc * h / 3.0 / std::f64::consts::PI;
            let series = bessel_i0(x);
            assert!(
                ((series - quad) / quad).abs() < 1e-12,
                "I0({x}): series {series} vs quadrature {quad}"
            );
        }
    }

    #[test]
    fn dilation_constant_rate_is_linear() {
        let n = 257;
        let f_dot = vec![2.0; n];
        let m = dilation_map(&f_dot, 10.0).unwrap();
        for k in 0..=20 {
            let s = k as f64 / 20.0;
            let t = m.t_of_s(s);
            assert!(
                (t - 10.0 * s).abs() < 1e-12,
                "constant rate must give t = t_g·s, got t({s}) = {t}"
            );
        }
        assert!((m.total_phase - 20.0).abs() < 1e-12);
    }

    #[test]
    fn dilation_is_scale_invariant() {
        let n = 513;
        let t_g = 4.0;
        let f1: Vec<f64> = (0..n)
            .map(|k| 1.0 + 0.8 * (std::f64::consts::PI * k as f64 / (n - 1) as f64).sin())
            .collect();
        let f5: Vec<f64> = f1.iter().map(|v| 5.0 * v).collect();
        let m1 = dilation_map(&f1, t_g).unwrap();
        let m5 = dilation_map(&f5, t_g).unwrap();
        for k in 0..=16 {
            let s = k as f64 / 16.0;
            assert!(
                (m1.t_of_s(s) - m5.t_of_s(s)).abs() < 1e-12,
                "map must only depend on the shape of ḟ"
            );
        }
        assert!((m5.total_phase - 5.0 * m1.total_phase).abs() < 1e-10);
    }

    #[test]
    fn dilation_log_oracle() {
        // ḟ(t) = 1/(1 + t/t_g) gives s(t) = ln(1 + t/t_g)/ln 2,
        // i.e. t(s) = t_g·(2^s − 1).
        let n = 4097;
        let t_g = 3.0;
        let f_dot: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64 * t_g;
                1.0 / (1.0 + t / t_g)
            })
            .collect();
        let m = dilation_map(&f_dot, t_g).unwrap();
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            let expect = t_g * (2f64.powf(s) - 1.0);
            let got = m.t_of_s(s);
            assert!(
                (got - expect).abs() < 1e-6 * t_g,
                "log-rate oracle: t({s}) = {got}, expected {expect}"
            );
        }
    }

    #[test]
    fn dilation_rejects_non_positive_rate() {
        let f_dot = vec![1.0, 0.5, 0.0, 0.5, 1.0];
        match dilation_map(&f_dot, 1.0) {
            Err(WindowsError::NonPositiveRate(i)) => {
                assert_eq!(i, 2, "the singular sample index must be reported");
            }
            other => panic!("expected NonPositiveRate error, got {other:?}"),
        }
    }

    #[test]
    fn esd_pinned_values() {
        let n = 4097;
        let rect = vec![1.0; n];
        assert!((esd(&rect, 0.0) - 1.0).abs() < 1e-12, "S[0] of a unit-mean shape is 1");
        for k in 1..=4 {
            let v = esd(&rect, std::f64::consts::TAU * k as f64);
            assert!(v < 1e-10, "Rect esd must vanish at x = 2πk, got {v} at k = {k}");
        }
        let v = esd(&rect, std::f64::consts::PI);
        let expect = (2.0 / std::f64::consts::PI).powi(2);
        assert!(
            (v - expect).abs() < 1e-6,
            "Rect esd at x = π should be (2/π)² ≈ 0.4053, got {v}"
        );
    }

    #[test]
    fn kaiser_suppresses_sidelobes_below_hann() {
        // Compare sidelobe envelopes (band maxima); pointwise comparison is
        // meaningless next to the other window's spectral nulls.
        let n = 8193;
        let hann = sample_window(&WindowKind::Hann, 1.0, n);
        let kaiser = sample_window(&WindowKind::Kaiser { lambda: 8.0 }, 1.0, n);
        let band_max = |w: &[f64], lo: f64, hi: f64| -> f64 {
            (0..400)
                .map(|k| esd(w, lo + (hi - lo) * k as f64 / 399.0))
                .fold(0.0, f64::max)
        };
        for &(lo, hi) in &[(18.0, 24.0), (24.0, 32.0), (32.0, 40.0)] {
            let sh = band_max(&hann, lo, hi);
            let sk = band_max(&kaiser, lo, hi);
            assert!(
                sk < 0.1 * sh,
                "Kaiser(8) sidelobe envelope must sit well below Hann on [{lo},{hi}]: {sk:.3e} vs {sh:.3e}"
            );
        }
    }

    #[test]
    fn esd_complex_matches_real_for_real_input() {
        let n = 257;
        let g: Vec<f64> = (0..n).map(|k| (k as f64 / 256.0 * 3.0).sin()).collect();
        let gc: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for &x in &[0.0, 1.0, 7.3] {
            assert!((esd(&g, x) - esd_complex(&gc, x)).abs() < 1e-14);
        }
    }
}
