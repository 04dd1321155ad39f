//! Voltage-to-exchange physics: J(v_B) models and their inverses, the linear
//! Zeeman shift with barrier voltage, Fourier decomposition of the exchange
//! under sinusoidal drive, and valley corrections.
//!
//! Units follow the crate convention: J in GHz, voltages in mV, α in 1/mV.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error("exchange must be positive, got J = {0}")]
    NonPositiveJ(f64),
    #[error("exchange J = {j} is at or above saturation J_sat = {j_sat}; inverse undefined")]
    AboveSaturation { j: f64, j_sat: f64 },
}

/// Barrier-voltage to exchange-coupling map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExchangeModel {
    /// J(v) = J0·e^{2αv}. Valid deep in the weak-coupling regime.
    Exponential { j0: f64, alpha: f64 },
    /// J(v) = J_sat·(√(1 + e^{−2α(v−v_off)}) − e^{−α(v−v_off)})², which
    /// saturates at J_sat for large v and decays exponentially for low v.
    Saturating { j_sat: f64, alpha: f64, v_off: f64 },
}

/// Linear voltage dependence of the Zeeman splitting difference:
/// ΔEz(v_B) = ΔEz0 + β(v_B − v_B0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeemanShiftModel {
    /// Splitting difference at the bias point, GHz.
    pub delta_ez0: f64,
    /// Lever arm, GHz/mV.
    pub beta: f64,
}

/// Parameters of the two-valley perturbative correction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValleyParams {
    /// Interdot tunneling, μeV.
    pub t_uev: f64,
    /// Charging energy, meV.
    pub u_mev: f64,
    /// Valley splittings, μeV.
    pub e_v1_uev: f64,
    pub e_v2_uev: f64,
    /// Valley phases, rad.
    pub phi_v1: f64,
    pub phi_v2: f64,
}

/// Exchange coupling at barrier voltage `v_b`.
pub fn j_of_v(model: &ExchangeModel, v_b: f64) -> f64 {
    match *model {
        ExchangeModel::Exponential { j0, alpha } => j0 * (2.0 * alpha * v_b).exp(),
        ExchangeModel::Saturating { j_sat, alpha, v_off } => {
            let x = (-alpha * (v_b - v_off)).exp();
            let root = (1.0 + x * x).sqrt() - x;
            j_sat * root * root
        }
    }
}

/// Barrier voltage producing exchange `j`; exact inverse of [`j_of_v`].
///
/// For the saturating model, with r = √(J/J_sat) the inversion of
/// (√(1+x²) − x)² = r² gives x = (1−r²)/(2r), hence
/// v = v_off + (1/α)·ln(2r/(1 − r²)). Only J < J_sat is invertible.
pub fn v_of_j(model: &ExchangeModel, j: f64) -> Result<f64, ExchangeError> {
    if !(j > 0.0) {
        return Err(ExchangeError::NonPositiveJ(j));
    }
    match *model {
        ExchangeModel::Exponential { j0, alpha } => Ok((j / j0).ln() / (2.0 * alpha)),
        ExchangeModel::Saturating { j_sat, alpha, v_off } => {
            if j >= j_sat {
                return Err(ExchangeError::AboveSaturation { j, j_sat });
            }
            let r = (j / j_sat).sqrt();
            Ok(v_off + (2.0 * r / (1.0 - r * r)).ln() / alpha)
        }
    }
}

/// ΔEz at barrier voltage `v_b` relative to the bias point `v_b0`.
pub fn delta_ez_of_v(shift: &ZeemanShiftModel, v_b: f64, v_b0: f64) -> f64 {
    shift.delta_ez0 + shift.beta * (v_b - v_b0)
}

/// Modified Bessel function of the first kind, integer order `k ≥ 0`, by its
/// power series Σ_m (x/2)^{2m+k} / (m!·(m+k)!).
pub fn bessel_i(k: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    // term for m = 0: half^k / k!
    let mut term = 1.0;
    for m in 1..=k {
        term *= half / m as f64;
    }
    let q = half * half;
    let mut sum = term;
    for m in 1..300 {
        term *= q / (m as f64 * (m + k) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// Two-sided Fourier coefficients 𝒥_k of the driven exchange
/// J(v_B0 + v_amp·cos φ) = 𝒥_0 + Σ_{k≥1} 2𝒥_k cos(kφ).
///
/// The exponential model factorizes exactly through the Jacobi–Anger series,
/// 𝒥_k = J(v_B0)·𝓘_k(2α·v_amp); the saturating model is integrated
/// numerically on a 4096-point periodic grid (trapezoid rule, spectrally
/// accurate for smooth periodic integrands).
pub fn fourier_coeffs_driven(
    model: &ExchangeModel,
    v_b0: f64,
    v_amp: f64,
    k_max: usize,
) -> Vec<f64> {
    assert!(k_max >= 1, "k_max must be at least 1");
    match *model {
        ExchangeModel::Exponential { alpha, .. } => {
            let base = j_of_v(model, v_b0);
            let z = 2.0 * alpha * v_amp;
            (0..=k_max).map(|k| base * bessel_i(k, z)).collect()
        }
        ExchangeModel::Saturating { .. } => {
            const N: usize = 4096;
            let samples: Vec<f64> = (0..N)
                .map(|i| {
                    let phi = std::f64::consts::TAU * i as f64 / N as f64;
                    j_of_v(model, v_b0 + v_amp * phi.cos())
                })
                .collect();
            (0..=k_max)
                .map(|k| {
                    let mut acc = 0.0;
                    for (i, &j) in samples.iter().enumerate() {
                        acc += j * (k as f64 * std::f64::consts::TAU * i as f64 / N as f64).cos();
                    }
                    acc / N as f64
                })
                .collect()
        }
    }
}

/// Lowest-order valley corrections to the Zeeman difference and the exchange.
///
/// ΔẼz = ΔEz·[1 − t²/U² − 4t²/(E_V1 + E_V2 + 2U)²] with all energies in μeV,
/// and J̃ = J·(1 + cos(φ_V1 − φ_V2))/2: antiparallel valley phases suppress
/// the exchange completely.
pub fn valley_corrections(p: &ValleyParams, delta_ez: f64, j: f64) -> (f64, f64) {
    let t = p.t_uev;
    let u = p.u_mev * 1000.0; // meV → μeV
    let denom = p.e_v1_uev + p.e_v2_uev + 2.0 * u;
    let factor = 1.0 - (t * t / (u * u) + 4.0 * t * t / (denom * denom));
    let d_tilde = delta_ez * factor;
    let j_tilde = j * 0.5 * (1.0 + (p.phi_v1 - p.phi_v2).cos());
    (d_tilde, j_tilde)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sat_model() -> ExchangeModel {
        ExchangeModel::Saturating { j_sat: 1.0, alpha: 0.3, v_off: 2.0 }
    }

    #[test]
    fn exponential_at_origin_is_j0() {
        let m = ExchangeModel::Exponential { j0: 0.02, alpha: 0.3 };
        assert_eq!(j_of_v(&m, 0.0), 0.02);
    }

    #[test]
    fn saturating_pinned_values() {
        let m = sat_model();
        let expect = (3.0 - 2.0 * 2f64.sqrt()) * 1.0;
        let got = j_of_v(&m, 2.0);
        assert!(
            ((got - expect) / expect).abs() < 1e-12,
            "J(v_off) must be (3 − 2√2)·J_sat, got {got}"
        );
        // Deep sub-saturation limit: J → J_sat·e^{2α(v−v_off)}/4.
        let v = 2.0 - 10.0 / 0.3;
        let got = j_of_v(&m, v);
        let asymptote = 0.25 * (2.0 * 0.3 * (v - 2.0)).exp();
        assert!(
            ((got - asymptote) / asymptote).abs() < 0.01,
            "low-voltage tail must follow J_sat·e^{{2α(v−v_off)}}/4 within 1%"
        );
        // Saturation limit: J − J_sat ≈ −2·J_sat·e^{−α(v−v_off)}.
        let got = j_of_v(&m, 2.0 + 100.0);
        assert!((got - 1.0).abs() < 1e-10, "J must saturate at J_sat for large v");
    }

    #[test]
    fn v_of_j_pinned_values() {
        let e = ExchangeModel::Exponential { j0: 0.02, alpha: 0.3 };
        assert!(v_of_j(&e, 0.02).unwrap().abs() < 1e-14, "J = J0 must invert to v = 0");
        let s = sat_model();
        let v = v_of_j(&s, (3.0 - 2.0 * 2f64.sqrt()) * 1.0).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "J = (3−2√2)J_sat must invert to v_off, got {v}");
    }

    #[test]
    fn v_of_j_domain_errors() {
        let s = sat_model();
        assert!(matches!(v_of_j(&s, 0.0), Err(ExchangeError::NonPositiveJ(_))));
        assert!(matches!(v_of_j(&s, -1.0), Err(ExchangeError::NonPositiveJ(_))));
        assert!(matches!(
            v_of_j(&s, 1.0),
            Err(ExchangeError::AboveSaturation { .. })
        ));
        let e = ExchangeModel::Exponential { j0: 0.02, alpha: 0.3 };
        assert!(matches!(v_of_j(&e, 0.0), Err(ExchangeError::NonPositiveJ(_))));
    }

    #[test]
    fn roundtrip_over_log_spaced_j() {
        let models = [
            ExchangeModel::Exponential { j0: 0.015, alpha: 0.25 },
            sat_model(),
        ];
        for m in &models {
            for k in 0..=60 {
                // J from 1e−6 up to 0.9 (·J_sat for the saturating model)
                let j = 1e-6 * (0.9e6f64).powf(k as f64 / 60.0);
                let v = v_of_j(m, j).unwrap();
                let back = j_of_v(m, v);
                assert!(
                    ((back - j) / j).abs() < 1e-10,
                    "{m:?}: roundtrip failed at J = {j}: got {back}"
                );
            }
        }
    }

    #[test]
    fn bessel_i_series_matches_quadrature() {
        // 𝓘_k(x) = (1/π)∫₀^π e^{x cosθ}cos(kθ) dθ
        for &x in &[0.3, 1.0, 2.0, 5.0] {
            for k in 0..=10usize {
                let n = 40001usize;
                let h = std::f64::consts::PI / (n - 1) as f64;
                let f = |theta: f64| (x * theta.cos()).exp() * (k as f64 * theta).cos();
                let mut acc = f(0.0) + f(std::f64::consts::PI);
                for i in 1..n - 1 {
                    acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                let quad = acc * h / 3.0 / std::f64::consts::PI;
                let series = bessel_i(k, x);
                // tolerance scaled to I₀: the quadrature's own roundoff floor
                // sits at eps·∫|f|, not at eps·I_k
                let tol = 1e-12 * bessel_i(0, x);
                assert!(
                    (series - quad).abs() < tol,
                    "I_{k}({x}): series {series} vs quadrature {quad}"
                );
            }
        }
    }

    #[test]
    fn fourier_zero_amplitude_is_static() {
        let m = ExchangeModel::Exponential { j0: 0.02, alpha: 0.3 };
        let c = fourier_coeffs_driven(&m, 1.0, 0.0, 5);
        let base = j_of_v(&m, 1.0);
        assert!((c[0] - base).abs() < 1e-15);
        for k in 1..=5 {
            assert!(c[k].abs() < 1e-15, "harmonics must vanish at zero drive");
        }
        let s = sat_model();
        let c = fourier_coeffs_driven(&s, 1.0, 0.0, 5);
        assert!(((c[0] - j_of_v(&s, 1.0)) / c[0]).abs() < 1e-12);
        for k in 1..=5 {
            assert!(c[k].abs() < 1e-12 * c[0]);
        }
    }

    #[test]
    fn fourier_bessel_ratio_pinned() {
        // 2α·v_amp = 1 → 𝒥_1/𝒥_0 = 𝓘₁(1)/𝓘₀(1) ≈ 0.5652/1.2661
        let m = ExchangeModel::Exponential { j0: 0.02, alpha: 0.25 };
        let c = fourier_coeffs_driven(&m, 0.0, 2.0, 3);
        let ratio = c[1] / c[0];
        assert!(
            (ratio - 0.5652 / 1.2661).abs() < 1e-4,
            "𝒥₁/𝒥₀ at unit Bessel argument should be ≈ 0.4464, got {ratio}"
        );
        assert!((bessel_i(0, 1.0) - 1.2661).abs() < 1e-4);
        assert!((bessel_i(1, 1.0) - 0.5652).abs() < 1e-4);
    }

    #[test]
    fn saturating_coeffs_match_exponential_far_from_saturation() {
        // Far below saturation the model is J ≈ (J_sat/4)·e^{2α(v−v_off)};
        // the k-th coefficient deviates by ≈ 2^{k+1}·J/J_sat, so a deep
        // sub-saturation bias keeps every harmonic within 1%.
        let alpha = 0.3;
        let s = ExchangeModel::Saturating { j_sat: 1.0, alpha, v_off: 0.0 };
        let e = ExchangeModel::Exponential { j0: 0.25, alpha };
        let v_b0 = v_of_j(&s, 1e-5).unwrap();
        assert!(j_of_v(&s, v_b0) < 0.01 * 1.0);
        let cs = fourier_coeffs_driven(&s, v_b0, 1.0, 8);
        let ce = fourier_coeffs_driven(&e, v_b0, 1.0, 8);
        for k in 0..=8 {
            if ce[k] > 1e-12 * ce[0] {
                assert!(
                    ((cs[k] - ce[k]) / ce[k]).abs() < 0.01,
                    "𝒥_{k}: saturating {} vs exponential {} differ by more than 1%",
                    cs[k],
                    ce[k]
                );
            }
        }
    }

    #[test]
    fn fourier_reconstruction_converges() {
        let models = [
            ExchangeModel::Exponential { j0: 0.01, alpha: 0.25 },
            ExchangeModel::Saturating { j_sat: 1.0, alpha: 0.25, v_off: 10.0 },
        ];
        for m in &models {
            let v_b0 = 0.0;
            let v_amp = 4.0; // 2α·v_amp = 2, upper edge of the contract
            let c = fourier_coeffs_driven(m, v_b0, v_amp, 10);
            let mut worst: f64 = 0.0;
            for i in 0..=256 {
                let phi = std::f64::consts::TAU * i as f64 / 256.0;
                let direct = j_of_v(m, v_b0 + v_amp * phi.cos());
                let mut rec = c[0];
                for k in 1..=10 {
                    rec += 2.0 * c[k] * (k as f64 * phi).cos();
                }
                worst = worst.max((rec - direct).abs());
            }
            assert!(
                worst < 1e-6 * c[0],
                "{m:?}: k_max = 10 reconstruction error {worst} exceeds 1e−6·𝒥₀ = {}",
                1e-6 * c[0]
            );
        }
    }

    #[test]
    fn exponential_coeffs_positive_and_decreasing() {
        let m = ExchangeModel::Exponential { j0: 0.01, alpha: 0.25 };
        let c = fourier_coeffs_driven(&m, 1.0, 3.0, 10);
        for k in 0..10 {
            assert!(c[k] > 0.0, "𝒥_{k} must be positive");
            assert!(c[k] > c[k + 1], "𝒥_k must decrease with k");
        }
    }

    #[test]
    fn zeeman_shift_examples() {
        let s = ZeemanShiftModel { delta_ez0: 0.1, beta: 0.001 };
        assert_eq!(delta_ez_of_v(&s, 5.0, 5.0), 0.1);
        let got = delta_ez_of_v(&s, 15.0, 5.0);
        assert!((got - 0.11).abs() < 1e-15, "0.1 + 0.001·10 must be 0.11, got {got}");
        let flat = ZeemanShiftModel { delta_ez0: 0.1, beta: 0.0 };
        assert_eq!(delta_ez_of_v(&flat, -100.0, 5.0), 0.1);
    }

    #[test]
    fn valley_zeeman_correction_pinned() {
        // t = 20 μeV, U = 3 meV, E_V = 200 μeV each, ΔEz = 100 MHz → ≈ 8 kHz
        let p = ValleyParams {
            t_uev: 20.0,
            u_mev: 3.0,
            e_v1_uev: 200.0,
            e_v2_uev: 200.0,
            phi_v1: 0.0,
            phi_v2: 0.0,
        };
        let delta_ez = 0.1; // GHz
        let (d_tilde, _) = valley_corrections(&p, delta_ez, 0.01);
        let drop = delta_ez - d_tilde; // GHz
        let expect = 8e-6; // 8 kHz in GHz
        assert!(
            ((drop - expect) / expect).abs() < 0.05,
            "valley Zeeman correction should be ≈ 8 kHz within 5%, got {} kHz",
            drop * 1e6
        );
    }

    #[test]
    fn valley_phase_modulates_exchange() {
        let mut p = ValleyParams {
            t_uev: 20.0,
            u_mev: 3.0,
            e_v1_uev: 200.0,
            e_v2_uev: 200.0,
            phi_v1: 0.7,
            phi_v2: 0.7,
        };
        let (_, j_tilde) = valley_corrections(&p, 0.1, 0.04);
        assert!((j_tilde - 0.04).abs() < 1e-15, "equal valley phases leave J unchanged");
        p.phi_v2 = 0.7 + std::f64::consts::PI;
        let (_, j_tilde) = valley_corrections(&p, 0.1, 0.04);
        assert!(j_tilde.abs() < 1e-17, "antiparallel valley phases must kill J");
    }
}
