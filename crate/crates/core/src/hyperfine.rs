//! Single-target nuclear response of a magnetically split 57Fe foil.
//!
//! The six Zeeman lines are grouped into the two transitions with linear
//! dipole moment (lines 2 and 5) and the four with circular dipole moment
//! (lines 1, 3, 4, 6). Each group defines a forward-scattering response
//!
//! ```text
//! R_L(w) = exp(L2 + L5)
//! R_C(w) = exp(3/4 L1 + 1/4 L3 + 1/4 L4 + 3/4 L6)
//! L_i(w) = i Gc / (w - w_i - i/2)
//! ```
//!
//! with all frequencies in units of the natural linewidth.

use num_complex::Complex;

use crate::error::{domain, Result};
use crate::real::{cone, normalize_angle, Real};
use crate::units;

/// Exponent weights of the six lines in `R_L` (index 0 = line 1).
pub const LINEAR_WEIGHTS: [f64; 6] = [0.0, 1.0, 0.0, 0.0, 1.0, 0.0];

/// Exponent weights of the six lines in `R_C`.
pub const CIRCULAR_WEIGHTS: [f64; 6] = [0.75, 0.0, 0.25, 0.25, 0.0, 0.75];

/// Configuration block of material and nuclear constants.
///
/// Defaults are literature values for alpha-iron at room temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuclearConstants<T> {
    /// Natural linewidth (neV).
    pub gamma_nev: T,
    /// Natural lifetime (ns); fixes the time unit conversion.
    pub lifetime_ns: T,
    /// Photon energy (keV).
    pub energy_kev: T,
    /// Nuclear resonant cross-section including internal conversion (cm^2).
    pub resonant_cross_section_cm2: T,
    /// Number density of iron atoms in alpha-iron (cm^-3).
    pub iron_density_cm3: T,
    /// Magnetic moment of the I = 1/2 ground state (nuclear magnetons).
    pub ground_moment: T,
    /// Magnetic moment of the I = 3/2 excited state (nuclear magnetons).
    pub excited_moment: T,
    /// Nuclear magneton (neV/T).
    pub nuclear_magneton_nev_per_t: T,
}

impl<T: Real> Default for NuclearConstants<T> {
    fn default() -> Self {
        Self {
            gamma_nev: T::lit(units::FE57_GAMMA_NEV),
            lifetime_ns: T::lit(units::FE57_LIFETIME_NS),
            energy_kev: T::lit(units::FE57_ENERGY_KEV),
            resonant_cross_section_cm2: T::lit(2.56e-18),
            iron_density_cm3: T::lit(8.49e22),
            ground_moment: T::lit(0.090_44),
            excited_moment: T::lit(-0.154_9),
            nuclear_magneton_nev_per_t: T::lit(units::NUCLEAR_MAGNETON_NEV_PER_T),
        }
    }
}

/// One resonant foil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSpec<T> {
    pub thickness_um: T,
    /// Hyperfine field magnitude (T).
    pub b_field_t: T,
    /// Magnetization angle from the pi axis in the transverse plane (rad).
    pub alpha: T,
    /// Electronic absorption exponent `mu_e * d`.
    pub mu_e_d: T,
    pub enrichment: T,
    pub lamb_moessbauer: T,
    /// Explicit line positions (units of gamma) overriding the Zeeman formula.
    pub line_positions: Option<[T; 6]>,
}

/// Electronic (photo-absorption) attenuation of iron at 14.4 keV (1/um).
pub const IRON_ELECTRONIC_ATTENUATION_PER_UM: f64 = 0.0454;

impl<T: Real> TargetSpec<T> {
    pub fn new(thickness_um: T, b_field_t: T, alpha: T, mu_e_d: T, enrichment: T, lamb_moessbauer: T) -> Result<Self> {
        let spec = Self {
            thickness_um,
            b_field_t,
            alpha: normalize_angle(alpha),
            mu_e_d,
            enrichment,
            lamb_moessbauer,
            line_positions: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Alpha-iron foil enriched to 95% in 57Fe with a recoilless fraction of 0.8.
    pub fn alpha_iron(thickness_um: T, b_field_t: T, alpha: T) -> Result<Self> {
        Self::new(
            thickness_um,
            b_field_t,
            alpha,
            thickness_um * T::lit(IRON_ELECTRONIC_ATTENUATION_PER_UM),
            T::lit(0.95),
            T::lit(0.8),
        )
    }

    pub fn with_line_positions(mut self, positions: [T; 6]) -> Result<Self> {
        check_sorted(&positions)?;
        self.line_positions = Some(positions);
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: T) -> Self {
        self.alpha = normalize_angle(alpha);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.thickness_um > T::zero()) {
            return Err(domain(format!("thickness must be positive, got {}", self.thickness_um)));
        }
        if self.b_field_t < T::zero() || !self.b_field_t.is_finite() {
            return Err(domain(format!("hyperfine field must be >= 0, got {}", self.b_field_t)));
        }
        for (name, v) in [("enrichment", self.enrichment), ("lamb_moessbauer", self.lamb_moessbauer)] {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.mu_e_d >= T::zero()) {
            return Err(domain(format!("mu_e_d must be >= 0, got {}", self.mu_e_d)));
        }
        if !self.alpha.is_finite() {
            return Err(domain("alpha must be finite"));
        }
        Ok(())
    }

    /// Scalar attenuation `exp(-mu_e d / 2)` of the field amplitude.
    pub fn attenuation(&self) -> T {
        (-self.mu_e_d / (T::one() + T::one())).exp()
    }
}

/// Resonant parameters of one target: widths, line positions and weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuclearModel<T> {
    /// Natural linewidth (neV). Frequencies are expressed in this unit.
    pub gamma_nev: T,
    /// Collective width in units of gamma.
    pub gamma_c: T,
    /// Line detunings in units of gamma, sorted ascending.
    pub line_positions: [T; 6],
    pub energy_kev: T,
    pub lifetime_ns: T,
}

impl<T: Real> NuclearModel<T> {
    pub fn new(gamma_c: T, line_positions: [T; 6]) -> Result<Self> {
        let c = NuclearConstants::<T>::default();
        let model = Self {
            gamma_nev: c.gamma_nev,
            gamma_c,
            line_positions,
            energy_kev: c.energy_kev,
            lifetime_ns: c.lifetime_ns,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model of a given foil: collective width from its thickness, lines from
    /// its field (or its explicit line override).
    pub fn for_target(target: &TargetSpec<T>, constants: &NuclearConstants<T>) -> Result<Self> {
        target.validate()?;
        let line_positions = match target.line_positions {
            Some(p) => p,
            None => line_positions_from_field(target.b_field_t, constants)?,
        };
        let model = Self {
            gamma_nev: constants.gamma_nev,
            gamma_c: collective_width(target, constants),
            line_positions,
            energy_kev: constants.energy_kev,
            lifetime_ns: constants.lifetime_ns,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_nev > T::zero()) {
            return Err(domain("gamma must be positive"));
        }
        if !(self.gamma_c >= T::zero()) {
            return Err(domain(format!("collective width must be >= 0, got {}", self.gamma_c)));
        }
        if !(self.lifetime_ns > T::zero()) {
            return Err(domain("lifetime must be positive"));
        }
        check_sorted(&self.line_positions)
    }

    /// Position of line `index` (1..=6).
    pub fn line(&self, index: usize) -> Result<T> {
        check_line_index(index)?;
        Ok(self.line_positions[index - 1])
    }

    /// Both group responses at one detuning.
    pub fn responses(&self, omega: T) -> ResponsePair<T> {
        ResponsePair::from_exponents(self.exponents(omega, lorentzian_unchecked))
    }

    /// Both group responses using the lineshape that is exact for a time
    /// grid of step `dt_gamma` (see [`lorentzian_sampled`]).
    pub fn responses_sampled(&self, omega: T, dt_gamma: T) -> ResponsePair<T> {
        ResponsePair::from_exponents(self.exponents(omega, |w, pos, gc| sampled_unchecked(w, pos, gc, dt_gamma)))
    }

    fn exponents(&self, omega: T, shape: impl Fn(T, T, T) -> Complex<T>) -> (Complex<T>, Complex<T>) {
        let mut lin = Complex::new(T::zero(), T::zero());
        let mut circ = lin;
        for i in 0..6 {
            let l = shape(omega, self.line_positions[i], self.gamma_c);
            if LINEAR_WEIGHTS[i] != 0.0 {
                lin += l * T::lit(LINEAR_WEIGHTS[i]);
            }
            if CIRCULAR_WEIGHTS[i] != 0.0 {
                circ += l * T::lit(CIRCULAR_WEIGHTS[i]);
            }
        }
        (lin, circ)
    }
}

/// The pair `(R_L, R_C)` at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePair<T> {
    pub linear: Complex<T>,
    pub circular: Complex<T>,
}

impl<T: Real> ResponsePair<T> {
    fn from_exponents((lin, circ): (Complex<T>, Complex<T>)) -> Self {
        Self { linear: lin.exp(), circular: circ.exp() }
    }

    /// Fully transparent target (`R = 1`).
    pub fn transparent() -> Self {
        Self { linear: cone(), circular: cone() }
    }

    /// `(T_L, T_C) = (R_L - 1, R_C - 1)`.
    pub fn scattered(&self) -> (Complex<T>, Complex<T>) {
        (scattered_part(self.linear), scattered_part(self.circular))
    }
}

/// Collective width `Gc / gamma = sigma0 * n57 * f_LM * d / 4`.
pub fn collective_width<T: Real>(target: &TargetSpec<T>, constants: &NuclearConstants<T>) -> T {
    let n57 = constants.iron_density_cm3 * target.enrichment;
    let d_cm = target.thickness_um * T::lit(1e-4);
    let optical_thickness = constants.resonant_cross_section_cm2 * n57 * target.lamb_moessbauer * d_cm;
    optical_thickness / T::lit(4.0)
}

/// Zeeman line positions (units of gamma) for a hyperfine field `b_field_t`.
///
/// Level energies are `E(m) = -(mu / I) mu_N B m`; the six allowed M1 lines
/// are returned in ascending order for the 57Fe sign pattern
/// (`mu_g > 0`, `mu_e < 0`).
pub fn line_positions_from_field<T: Real>(b_field_t: T, constants: &NuclearConstants<T>) -> Result<[T; 6]> {
    if !(b_field_t >= T::zero()) {
        return Err(domain(format!("hyperfine field must be >= 0, got {b_field_t}")));
    }
    let half = T::lit(0.5);
    let g_ground = constants.ground_moment / half;
    let g_excited = constants.excited_moment / T::lit(1.5);
    let scale = constants.nuclear_magneton_nev_per_t * b_field_t / constants.gamma_nev;
    let shift = |m_excited: f64, m_ground: f64| (-g_excited * T::lit(m_excited) + g_ground * T::lit(m_ground)) * scale;
    let mut lines =
        [shift(-1.5, -0.5), shift(-0.5, -0.5), shift(0.5, -0.5), shift(-0.5, 0.5), shift(0.5, 0.5), shift(1.5, 0.5)];
    lines.sort_by(|a, b| a.partial_cmp(b).expect("finite line positions"));
    Ok(lines)
}

/// `L_i(w) = i Gc / (w - w_i - i/2)` for line `line_index` in 1..=6.
pub fn lorentzian<T: Real>(omega: T, line_index: usize, model: &NuclearModel<T>) -> Result<Complex<T>> {
    let pos = model.line(line_index)?;
    Ok(lorentzian_unchecked(omega, pos, model.gamma_c))
}

/// Lineshape whose inverse transform on a time grid of step `dt_gamma`
/// (dimensionless, `dt / lifetime`) is the sampled causal exponential with
/// a half-weight first sample:
///
/// `-Gc (dt/2) coth(p dt / 2)`, `p = 1/2 + i (w - w_i)`.
///
/// Converges to [`lorentzian`] with relative error `(p dt)^2 / 12`.
pub fn lorentzian_sampled<T: Real>(
    omega: T,
    line_index: usize,
    model: &NuclearModel<T>,
    dt_gamma: T,
) -> Result<Complex<T>> {
    let pos = model.line(line_index)?;
    if !(dt_gamma > T::zero()) {
        return Err(domain("time step must be positive"));
    }
    Ok(sampled_unchecked(omega, pos, model.gamma_c, dt_gamma))
}

/// `R_L(w) = exp(L2 + L5)`.
pub fn response_linear<T: Real>(omega: T, model: &NuclearModel<T>) -> Complex<T> {
    model.responses(omega).linear
}

/// `R_C(w) = exp(3/4 L1 + 1/4 L3 + 1/4 L4 + 3/4 L6)`.
pub fn response_circular<T: Real>(omega: T, model: &NuclearModel<T>) -> Complex<T> {
    model.responses(omega).circular
}

/// Scattered part `T = R - 1` of a response.
#[inline]
pub fn scattered_part<T: Real>(r: Complex<T>) -> Complex<T> {
    r - cone::<T>()
}

#[inline]
fn lorentzian_unchecked<T: Real>(omega: T, pos: T, gamma_c: T) -> Complex<T> {
    let half = T::lit(0.5);
    Complex::new(T::zero(), gamma_c) / Complex::new(omega - pos, -half)
}

#[inline]
fn sampled_unchecked<T: Real>(omega: T, pos: T, gamma_c: T, dt: T) -> Complex<T> {
    let half = T::lit(0.5);
    let x = Complex::new(half, omega - pos) * (dt * half);
    // coth(x) = (1 + e^{-2x}) / (1 - e^{-2x}); |e^{-2x}| < 1 since Re x > 0.
    let q = (-(x + x)).exp();
    let coth = (cone::<T>() + q) / (cone::<T>() - q);
    coth * (-gamma_c * dt * half)
}

fn check_line_index(index: usize) -> Result<()> {
    if (1..=6).contains(&index) {
        Ok(())
    } else {
        Err(domain(format!("line index must be in 1..=6, got {index}")))
    }
}

fn check_sorted<T: Real>(positions: &[T; 6]) -> Result<()> {
    if positions.iter().any(|p| !p.is_finite()) {
        return Err(domain("line positions must be finite"));
    }
    if positions.windows(2).any(|w| w[1] < w[0]) {
        return Err(domain("line positions must be sorted ascending"));
    }
    Ok(())
}
