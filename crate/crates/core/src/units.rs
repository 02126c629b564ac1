//! Physical constants and unit conversions.
//!
//! Internal conventions: frequencies and detunings are measured in units of
//! the natural linewidth `gamma`, times in nanoseconds. A detuning of one
//! `gamma` is an angular frequency of `1 / lifetime` rad/ns, so the amplitude
//! of an isolated line decays as `exp(-t / (2 lifetime))`.

use crate::real::Real;

/// Speed of light (m/s).
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Nuclear magneton (neV/T).
pub const NUCLEAR_MAGNETON_NEV_PER_T: f64 = 31.524_512_6;

/// Natural lifetime of the 14.4 keV level of 57Fe (ns).
pub const FE57_LIFETIME_NS: f64 = 141.0;

/// Natural linewidth of the 14.4 keV level of 57Fe (neV).
pub const FE57_GAMMA_NEV: f64 = 4.7;

/// Photon energy of the Moessbauer transition (keV).
pub const FE57_ENERGY_KEV: f64 = 14.4;

/// X-ray wavelength at the 57Fe resonance (pm).
pub const FE57_WAVELENGTH_PM: f64 = 86.025;

/// Detuning in units of gamma to angular frequency in rad/ns.
#[inline]
pub fn gamma_to_rad_per_ns<T: Real>(detuning: T, lifetime_ns: T) -> T {
    detuning / lifetime_ns
}

/// Angular frequency in rad/ns to detuning in units of gamma.
#[inline]
pub fn rad_per_ns_to_gamma<T: Real>(omega: T, lifetime_ns: T) -> T {
    omega * lifetime_ns
}

/// Time in ns to dimensionless time `t * gamma`.
#[inline]
pub fn ns_to_gamma_time<T: Real>(t_ns: T, lifetime_ns: T) -> T {
    t_ns / lifetime_ns
}

/// Doppler velocity (mm/s) that shifts the resonance by `detuning_gamma`
/// linewidths: `v = c * detuning * gamma / E`.
pub fn doppler_velocity_mm_s<T: Real>(detuning_gamma: T, gamma_nev: T, energy_kev: T) -> T {
    let energy_nev = energy_kev * T::lit(1e12);
    T::lit(SPEED_OF_LIGHT_M_S) * detuning_gamma * gamma_nev / energy_nev * T::lit(1e3)
}

/// Phase imprinted by a displacement `dz_pm` along the beam, `2 pi dz / lambda`.
#[inline]
pub fn displacement_phase<T: Real>(dz_pm: T, wavelength_pm: T) -> T {
    (T::PI() + T::PI()) * dz_pm / wavelength_pm
}
