//! spinshape: control-pulse synthesis and coherent-error analysis for
//! two-spin qubit systems.
//!
//! The crate models a pair of exchange-coupled spin qubits driven by a shared
//! microwave line and a barrier-voltage channel. It provides
//!
//! * complex 2×2/4×4 matrix utilities, gate targets and fidelity measures
//!   ([`qcore`]),
//! * window functions, dilation maps and energy spectral densities
//!   ([`windows`]),
//! * voltage→exchange transfer curves and driven Fourier coefficients
//!   ([`exchange`]),
//! * causal signal-chain filtering ([`sigchain`]),
//! * 1/f charge noise and quasi-static Zeeman noise ([`noise`]),
//! * pulse constructors for resonant 1Q gates, adiabatic CZ and resonant
//!   SWAP gates ([`shaper`]),
//! * first-order error operators and per-channel coherent error rates
//!   ([`errframe`]),
//! * full time-domain Schrödinger propagation and fidelity benchmarks
//!   ([`simulator`]),
//! * shared experiment presets ([`presets`]).
//!
//! Unit conventions used throughout: frequencies in GHz, times in ns,
//! voltages in mV. Hamiltonians are stored in frequency units (energy/h);
//! the propagator for one step is `U ← exp(−i·2π·H·Δt)·U` with `H`
//! evaluated at the end of the step interval.

pub mod errframe;
pub mod exchange;
pub mod noise;
pub mod presets;
pub mod qcore;
pub mod shaper;
pub mod sigchain;
pub mod simulator;
pub mod windows;

pub use num_complex::Complex64;
