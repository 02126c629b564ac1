//! Jones calculus of the polarizer / target / target / analyzer chain.
//!
//! Field vectors are ordered `(E_sigma, E_pi)`. A target with magnetization
//! at angle `alpha` from the pi axis acts as
//! `E g_alpha diag(R_L, R_C) g_alpha^-1`, where `E = exp(-mu_e d / 2)` is its
//! electronic attenuation (the common propagation phase is dropped).
//!
//! Splitting every response as `R = 1 + T`, the two-target product with a
//! sigma-polarized input decomposes into the pathways
//!
//! * `S0`: unscattered, always `4` in units of `E1 E2 / 4`;
//! * `S1`, `P1`: scattered by exactly one target;
//! * `S2`, `P2`: scattered by both targets within the same transition family
//!   (linear-linear or circular-circular);
//! * `cross_sigma`, `cross_pi`: scattered by both targets through different
//!   families. These vanish wherever the hyperfine lines are well separated.
//!
//! For `alpha_1 = pi/4`, `alpha_2 = -pi/4` the eigenpolarizations of the
//! same family in the two targets are orthogonal, so `S2 = P2 = 0` for any
//! pair of targets and any phase jump.

use num_complex::Complex;

use crate::error::{domain, Result};
use crate::grid::FrequencyGrid;
use crate::hyperfine::{NuclearModel, ResponsePair, TargetSpec};
use crate::real::{cis, cone, czero, normalize_angle, Real};

/// 2x2 complex matrix acting on `(sigma, pi)` amplitudes; `m_xy` maps input
/// `y` to output `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix<T> {
    pub m_ss: Complex<T>,
    pub m_sp: Complex<T>,
    pub m_ps: Complex<T>,
    pub m_pp: Complex<T>,
}

impl<T: Real> JonesMatrix<T> {
    pub fn new(m_ss: Complex<T>, m_sp: Complex<T>, m_ps: Complex<T>, m_pp: Complex<T>) -> Self {
        Self { m_ss, m_sp, m_ps, m_pp }
    }

    pub fn identity() -> Self {
        Self::diagonal(cone(), cone())
    }

    pub fn zero() -> Self {
        Self::diagonal(czero(), czero())
    }

    pub fn diagonal(d_s: Complex<T>, d_p: Complex<T>) -> Self {
        Self::new(d_s, czero(), czero(), d_p)
    }

    pub fn from_real(m: [[T; 2]; 2]) -> Self {
        let c = |x: T| Complex::new(x, T::zero());
        Self::new(c(m[0][0]), c(m[0][1]), c(m[1][0]), c(m[1][1]))
    }

    /// `self * rhs`: apply `rhs` first.
    pub fn mul(&self, rhs: &Self) -> Self {
        Self::new(
            self.m_ss * rhs.m_ss + self.m_sp * rhs.m_ps,
            self.m_ss * rhs.m_sp + self.m_sp * rhs.m_pp,
            self.m_ps * rhs.m_ss + self.m_pp * rhs.m_ps,
            self.m_ps * rhs.m_sp + self.m_pp * rhs.m_pp,
        )
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Self::new(self.m_ss + rhs.m_ss, self.m_sp + rhs.m_sp, self.m_ps + rhs.m_ps, self.m_pp + rhs.m_pp)
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self::new(self.m_ss * s, self.m_sp * s, self.m_ps * s, self.m_pp * s)
    }

    pub fn apply(&self, v: [Complex<T>; 2]) -> [Complex<T>; 2] {
        [self.m_ss * v[0] + self.m_sp * v[1], self.m_ps * v[0] + self.m_pp * v[1]]
    }

    pub fn determinant(&self) -> Complex<T> {
        self.m_ss * self.m_pp - self.m_sp * self.m_ps
    }

    /// Entry-wise maximum modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        [self.m_ss - other.m_ss, self.m_sp - other.m_sp, self.m_ps - other.m_ps, self.m_pp - other.m_pp]
            .iter()
            .map(|z| z.norm())
            .fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        [self.m_ss, self.m_sp, self.m_ps, self.m_pp].iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Two-dimensional rotation `g_alpha = [[cos, sin], [-sin, cos]]`.
pub fn rotation<T: Real>(alpha: T) -> JonesMatrix<T> {
    let (s, c) = alpha.sin_cos();
    JonesMatrix::from_real([[c, s], [-s, c]])
}

/// `g_alpha diag(d_l, d_c) g_alpha^-1`.
fn rotated_diagonal<T: Real>(alpha: T, d_l: Complex<T>, d_c: Complex<T>) -> JonesMatrix<T> {
    rotation(alpha).mul(&JonesMatrix::diagonal(d_l, d_c)).mul(&rotation(-alpha))
}

/// Jones matrix of one target from its responses, with the scattered part
/// multiplied by `exp(i phi)` (instantaneous displacement after excitation).
pub fn target_matrix_from<T: Real>(responses: ResponsePair<T>, alpha: T, attenuation: T, phi: T) -> JonesMatrix<T> {
    let jump = cis(phi);
    let (t_l, t_c) = responses.scattered();
    let scattered = rotated_diagonal(alpha, t_l * jump, t_c * jump);
    JonesMatrix::identity().add(&scattered).scale(Complex::new(attenuation, T::zero()))
}

/// Jones matrix `E R(w, alpha)` of a target at detuning `omega` with phase
/// jump `phi`.
pub fn target_matrix<T: Real>(target: &TargetSpec<T>, model: &NuclearModel<T>, omega: T, phi: T) -> JonesMatrix<T> {
    target_matrix_from(model.responses(omega), target.alpha, target.attenuation(), phi)
}

/// One target as seen by the composition routines.
#[derive(Debug, Clone, Copy)]
pub struct TargetResponse<T> {
    pub responses: ResponsePair<T>,
    pub alpha: T,
    pub attenuation: T,
}

impl<T: Real> TargetResponse<T> {
    pub fn at(target: &TargetSpec<T>, model: &NuclearModel<T>, omega: T) -> Self {
        Self { responses: model.responses(omega), alpha: target.alpha, attenuation: target.attenuation() }
    }

    pub fn matrix(&self, phi: T) -> JonesMatrix<T> {
        target_matrix_from(self.responses, self.alpha, self.attenuation, phi)
    }
}

/// Pathway decomposition of the two-target output for a unit sigma input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathwayLedger<T> {
    /// `E1 E2 / 4`.
    pub prefactor: T,
    pub s0: Complex<T>,
    pub s1: Complex<T>,
    pub s2: Complex<T>,
    pub p1: Complex<T>,
    pub p2: Complex<T>,
    pub cross_sigma: Complex<T>,
    pub cross_pi: Complex<T>,
}

impl<T: Real> PathwayLedger<T> {
    pub fn sigma(&self) -> Complex<T> {
        (self.s0 + self.s1 + self.s2 + self.cross_sigma) * self.prefactor
    }

    pub fn pi(&self) -> Complex<T> {
        (self.p1 + self.p2 + self.cross_pi) * self.prefactor
    }
}

/// Output `(E_sigma, E_pi)` at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizedSample<T> {
    pub sigma: Complex<T>,
    pub pi: Complex<T>,
}

/// Compose target 1 (moved, phase jump `phi`) followed by target 2 for a
/// unit sigma input; returns the full product and its pathway ledger.
pub fn compose_responses<T: Real>(
    first: &TargetResponse<T>,
    second: &TargetResponse<T>,
    phi: T,
) -> (PolarizedSample<T>, PathwayLedger<T>) {
    let product = second.matrix(T::zero()).mul(&first.matrix(phi));
    let out = PolarizedSample { sigma: product.m_ss, pi: product.m_ps };

    let jump = cis(phi);
    let (t1l, t1c) = first.responses.scattered();
    let (t2l, t2c) = second.responses.scattered();
    let z = czero::<T>();
    let a1l = rotated_diagonal(first.alpha, t1l * jump, z);
    let a1c = rotated_diagonal(first.alpha, z, t1c * jump);
    let a2l = rotated_diagonal(second.alpha, t2l, z);
    let a2c = rotated_diagonal(second.alpha, z, t2c);

    let single = a1l.add(&a1c).add(&a2l).add(&a2c);
    let same = a2l.mul(&a1l).add(&a2c.mul(&a1c));
    let cross = a2l.mul(&a1c).add(&a2c.mul(&a1l));
    let four = T::lit(4.0);
    let ledger = PathwayLedger {
        prefactor: first.attenuation * second.attenuation / four,
        s0: Complex::new(four, T::zero()),
        s1: single.m_ss * four,
        s2: same.m_ss * four,
        p1: single.m_ps * four,
        p2: same.m_ps * four,
        cross_sigma: cross.m_ss * four,
        cross_pi: cross.m_ps * four,
    };
    (out, ledger)
}

/// Two targets at detuning `omega`; target 1 carries the phase jump.
pub fn compose_two_targets<T: Real>(
    t1: &TargetSpec<T>,
    m1: &NuclearModel<T>,
    t2: &TargetSpec<T>,
    m2: &NuclearModel<T>,
    omega: T,
    phi: T,
) -> (PolarizedSample<T>, PathwayLedger<T>) {
    compose_responses(&TargetResponse::at(t1, m1, omega), &TargetResponse::at(t2, m2, omega), phi)
}

fn is_equivalent_angle<T: Real>(alpha: T, target: T) -> bool {
    // Jones matrices of a target are pi-periodic in alpha.
    let d = normalize_angle(T::lit(2.0) * (alpha - target));
    d.abs() < T::lit(1e-9)
}

/// Dark-fringe pi output for a unit sigma input,
/// `(E1 E2 / 2) [R_L2 R_C1 - R_L1 R_C2]`.
///
/// Target 1 must sit at `+pi/4` and target 2 at `-pi/4` (modulo pi). The
/// sign follows the rotation convention of [`rotation`], so the value equals
/// the pi component of [`compose_two_targets`] at `phi = 0`.
pub fn dark_fringe_output<T: Real>(
    t1: &TargetSpec<T>,
    m1: &NuclearModel<T>,
    t2: &TargetSpec<T>,
    m2: &NuclearModel<T>,
    omega: T,
) -> Result<Complex<T>> {
    let quarter = T::FRAC_PI_4();
    if !is_equivalent_angle(t1.alpha, quarter) || !is_equivalent_angle(t2.alpha, -quarter) {
        return Err(domain(format!(
            "dark-fringe geometry needs alpha1 = pi/4, alpha2 = -pi/4 (got {}, {})",
            t1.alpha, t2.alpha
        )));
    }
    let r1 = m1.responses(omega);
    let r2 = m2.responses(omega);
    let e = t1.attenuation() * t2.attenuation() / (T::one() + T::one());
    Ok((r2.linear * r1.circular - r1.linear * r2.circular) * e)
}

/// Gated intensity `I_pi / I_sigma_in = |E|^2 sin^2(phi/2) |T_C - T_L|^2`
/// for two identical targets in the dark-fringe geometry.
pub fn gated_intensity<T: Real>(target: &TargetSpec<T>, model: &NuclearModel<T>, omega: T, phi: T) -> T {
    gated_intensity_from(model.responses(omega), target.attenuation(), phi)
}

/// [`gated_intensity`] from precomputed responses and single-target attenuation.
pub fn gated_intensity_from<T: Real>(responses: ResponsePair<T>, attenuation: T, phi: T) -> T {
    let (t_l, t_c) = responses.scattered();
    let e2 = (attenuation * attenuation).powi(2);
    let s = (phi / (T::one() + T::one())).sin();
    e2 * s * s * (t_c - t_l).norm_sqr()
}

/// Two-component field sampled on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizedSpectrum<T> {
    pub grid: FrequencyGrid<T>,
    pub sigma: Vec<Complex<T>>,
    pub pi: Vec<Complex<T>>,
}

impl<T: Real> PolarizedSpectrum<T> {
    pub fn new(grid: FrequencyGrid<T>, sigma: Vec<Complex<T>>, pi: Vec<Complex<T>>) -> Result<Self> {
        if sigma.len() != grid.len() || pi.len() != grid.len() {
            return Err(domain(format!(
                "spectrum arrays ({}, {}) do not match grid length {}",
                sigma.len(),
                pi.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, sigma, pi })
    }

    /// `|E_sigma|^2 + |E_pi|^2` per sample.
    pub fn intensity(&self) -> Vec<T> {
        self.sigma.iter().zip(&self.pi).map(|(s, p)| s.norm_sqr() + p.norm_sqr()).collect()
    }
}

/// Crossed analyzer: pi passes, sigma amplitude is scaled by `sqrt(leakage)`.
pub fn analyzer_project<T: Real>(field: &PolarizedSpectrum<T>, leakage: T) -> Result<PolarizedSpectrum<T>> {
    check_leakage(leakage)?;
    let a = leakage.sqrt();
    Ok(PolarizedSpectrum {
        grid: field.grid,
        sigma: field.sigma.iter().map(|&s| s * a).collect(),
        pi: field.pi.clone(),
    })
}

pub(crate) fn check_leakage<T: Real>(leakage: T) -> Result<()> {
    if leakage >= T::zero() && leakage <= T::one() {
        Ok(())
    } else {
        Err(domain(format!("analyzer leakage must lie in [0, 1], got {leakage}")))
    }
}

/// Two-target output spectrum on a grid for a static phase jump `phi`.
pub fn two_target_spectrum<T: Real>(
    t1: &TargetSpec<T>,
    m1: &NuclearModel<T>,
    t2: &TargetSpec<T>,
    m2: &NuclearModel<T>,
    grid: &FrequencyGrid<T>,
    phi: T,
) -> PolarizedSpectrum<T> {
    let (sigma, pi) = (0..grid.len())
        .map(|k| {
            let (out, _) = compose_two_targets(t1, m1, t2, m2, grid.omega(k), phi);
            (out.sigma, out.pi)
        })
        .unzip();
    PolarizedSpectrum { grid: *grid, sigma, pi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperfine::NuclearConstants;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn target(d: f64, b: f64, alpha: f64) -> (TargetSpec<f64>, NuclearModel<f64>) {
        let t = TargetSpec::alpha_iron(d, b, alpha).unwrap();
        let m = NuclearModel::for_target(&t, &NuclearConstants::default()).unwrap();
        (t, m)
    }

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    /// Plain 2x2 complex product written out independently of `JonesMatrix::mul`.
    fn brute_product(a: [[Complex<f64>; 2]; 2], b: [[Complex<f64>; 2]; 2]) -> [[Complex<f64>; 2]; 2] {
        let mut out = [[c(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    fn arr(m: &JonesMatrix<f64>) -> [[Complex<f64>; 2]; 2] {
        [[m.m_ss, m.m_sp], [m.m_ps, m.m_pp]]
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation(0.0), JonesMatrix::identity());
        let r = rotation(FRAC_PI_2);
        assert!(r.max_abs_diff(&JonesMatrix::from_real([[0.0, 1.0], [-1.0, 0.0]])) < 1e-16);
        let back = rotation(FRAC_PI_4).mul(&rotation(-FRAC_PI_4));
        assert!(back.max_abs_diff(&JonesMatrix::identity()) < 1e-15);
    }

    proptest! {
        #[test]
        fn rotation_is_orthogonal(a in -10.0f64..10.0) {
            let r = rotation(a);
            prop_assert!((r.determinant() - 1.0).norm() < 1e-14);
            let rt = JonesMatrix::new(r.m_ss, r.m_ps, r.m_sp, r.m_pp);
            prop_assert!(r.mul(&rt).max_abs_diff(&JonesMatrix::identity()) < 1e-14);
            prop_assert!(r.mul(&rotation(-a)).max_abs_diff(&JonesMatrix::identity()) < 1e-14);
        }

        #[test]
        fn same_family_double_scattering_cancels(
            d1 in 0.3f64..3.0, d2 in 0.3f64..3.0,
            b1 in 25.0f64..40.0, b2 in 25.0f64..40.0,
            phi in -7.0f64..7.0, w in -70.0f64..70.0,
        ) {
            let (t1, m1) = target(d1, b1, FRAC_PI_4);
            let (t2, m2) = target(d2, b2, -FRAC_PI_4);
            let (_, l) = compose_two_targets(&t1, &m1, &t2, &m2, w, phi);
            prop_assert!(l.s2.norm() < 1e-12 * l.s0.norm());
            prop_assert!(l.p2.norm() < 1e-12 * l.s0.norm());
        }

        #[test]
        fn ledger_reconstructs_product(
            d1 in 0.3f64..3.0, d2 in 0.3f64..3.0,
            a1 in -PI..PI, a2 in -PI..PI,
            phi in -7.0f64..7.0, w in -70.0f64..70.0,
        ) {
            let (t1, m1) = target(d1, 33.0, a1);
            let (t2, m2) = target(d2, 32.5, a2);
            let (out, l) = compose_two_targets(&t1, &m1, &t2, &m2, w, phi);
            let scale = out.sigma.norm().max(out.pi.norm()).max(1e-300);
            prop_assert!((l.sigma() - out.sigma).norm() <= 1e-12 * scale.max(l.prefactor));
            prop_assert!((l.pi() - out.pi).norm() <= 1e-12 * scale.max(l.prefactor));
        }

        #[test]
        fn gated_intensity_is_even_and_periodic(phi in -10.0f64..10.0, w in -60.0f64..60.0) {
            let (t, m) = target(1.0, 33.0, FRAC_PI_4);
            let i0 = gated_intensity(&t, &m, w, phi);
            prop_assert!((gated_intensity(&t, &m, w, -phi) - i0).abs() <= 1e-12 * i0.max(1e-300));
            prop_assert!((gated_intensity(&t, &m, w, phi + 2.0 * PI) - i0).abs() <= 1e-9 * i0.max(1e-30));
        }
    }

    #[test]
    fn static_matrix_is_recovered_at_zero_phase() {
        let (t, m) = target(1.92, 32.69, 0.255 * PI);
        for w in [-50.0, -31.2, 0.3, 17.0] {
            let r = m.responses(w);
            let manual = rotation(t.alpha)
                .mul(&JonesMatrix::diagonal(r.linear, r.circular))
                .mul(&rotation(-t.alpha))
                .scale(c(t.attenuation(), 0.0));
            assert!(target_matrix(&t, &m, w, 0.0).max_abs_diff(&manual) < 1e-15);
        }
    }

    #[test]
    fn empty_target_ignores_phase() {
        let (t, mut m) = target(1.0, 33.0, 0.3);
        m.gamma_c = 0.0;
        let e = t.attenuation();
        for phi in [0.0, 1.0, PI, 5.0] {
            let mat = target_matrix(&t, &m, -20.0, phi);
            assert!(mat.max_abs_diff(&JonesMatrix::identity().scale(c(e, 0.0))) < 1e-15);
        }
    }

    #[test]
    fn quarter_angle_off_diagonals_match_product_oracle() {
        let (mut t, m) = target(1.5, 33.0, FRAC_PI_4);
        t.mu_e_d = 0.0;
        for w in [-54.0, -31.0, -3.3, 25.0] {
            let r = m.responses(w);
            let g = [
                [c(FRAC_PI_4.cos(), 0.0), c(FRAC_PI_4.sin(), 0.0)],
                [c(-FRAC_PI_4.sin(), 0.0), c(FRAC_PI_4.cos(), 0.0)],
            ];
            let gi = [[g[0][0], g[1][0]], [g[0][1], g[1][1]]];
            let d = [[r.linear, c(0.0, 0.0)], [c(0.0, 0.0), r.circular]];
            let oracle = brute_product(brute_product(g, d), gi);
            let mat = target_matrix(&t, &m, w, 0.0);
            let got = arr(&mat);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((got[i][j] - oracle[i][j]).norm() < 1e-15);
                }
            }
            let half = (r.circular - r.linear) / 2.0;
            assert!((mat.m_sp - half).norm() < 1e-15);
            assert!((mat.m_ps - half).norm() < 1e-15);
        }
    }

    #[test]
    fn identical_targets_are_dark() {
        let (t1, m1) = target(1.92, 32.69, FRAC_PI_4);
        let (t2, m2) = target(1.92, 32.69, -FRAC_PI_4);
        for k in -800..800 {
            let w = k as f64 * 0.1;
            let (out, l) = compose_two_targets(&t1, &m1, &t2, &m2, w, 0.0);
            assert!(out.pi.norm() < 1e-15, "{w}: {}", out.pi.norm());
            assert!(l.p1.norm() < 1e-14);
            assert_eq!(dark_fringe_output(&t1, &m1, &t2, &m2, w).unwrap(), c(0.0, 0.0));
        }
    }

    #[test]
    fn general_angles_do_not_cancel_and_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut nonzero = 0;
        for _ in 0..100 {
            let a1 = rng.random_range(-PI..PI);
            let a2 = rng.random_range(-PI..PI);
            let (t1, m1) = target(rng.random_range(0.5..2.5), rng.random_range(30.0..35.0), a1);
            let (t2, m2) = target(rng.random_range(0.5..2.5), rng.random_range(30.0..35.0), a2);
            let phi = rng.random_range(-PI..PI);
            let w = m1.line_positions[rng.random_range(0..6)] + rng.random_range(-1.0..1.0);
            let (out, l) = compose_two_targets(&t1, &m1, &t2, &m2, w, phi);
            let oracle = brute_product(arr(&target_matrix(&t2, &m2, w, 0.0)), arr(&target_matrix(&t1, &m1, w, phi)));
            assert!((out.sigma - oracle[0][0]).norm() < 1e-14);
            assert!((out.pi - oracle[1][0]).norm() < 1e-14);
            if l.p2.norm() > 1e-6 {
                nonzero += 1;
            }
        }
        assert!(nonzero > 90, "{nonzero}");
    }

    #[test]
    fn dark_fringe_antisymmetry_and_consistency() {
        let (t1, m1) = target(1.92, 32.69, FRAC_PI_4);
        let (t2, m2) = target(1.89, 32.69, -FRAC_PI_4);
        let t1s = t1.with_alpha(-FRAC_PI_4);
        let t2s = t2.with_alpha(FRAC_PI_4);
        for w in [-54.4, -31.2, -8.7, 0.0, 31.3, 54.0] {
            let a = dark_fringe_output(&t1, &m1, &t2, &m2, w).unwrap();
            let b = dark_fringe_output(&t2s, &m2, &t1s, &m1, w).unwrap();
            assert!((a + b).norm() <= 1e-15 * a.norm().max(1e-300));
            let (out, _) = compose_two_targets(&t1, &m1, &t2, &m2, w, 0.0);
            // both sides cancel O(1) products, so compare on the scale of the responses
            assert!((out.pi - a).norm() <= 1e-14, "{w} {} {}", out.pi, a);
            assert!(a.norm() > 0.0);
        }
    }

    #[test]
    fn dark_fringe_requires_canonical_angles() {
        let (t1, m1) = target(1.0, 33.0, 0.3);
        let (t2, m2) = target(1.0, 33.0, -FRAC_PI_4);
        assert!(dark_fringe_output(&t1, &m1, &t2, &m2, 0.0).is_err());
        // 3 pi / 4 is equivalent to -pi / 4
        let (t3, m3) = target(1.0, 33.0, 0.75 * PI);
        let (t4, m4) = target(1.0, 33.0, FRAC_PI_4);
        assert!(dark_fringe_output(&t4, &m4, &t3, &m3, 0.0).is_ok());
    }

    #[test]
    fn gated_intensity_examples() {
        let (t, m) = target(1.0, 33.0, FRAC_PI_4);
        let w = m.line_positions[1];
        assert_eq!(gated_intensity(&t, &m, w, 0.0), 0.0);
        let ratio = gated_intensity(&t, &m, w, PI) / gated_intensity(&t, &m, w, FRAC_PI_2);
        assert!((ratio - 2.0).abs() < 1e-12);
        assert!(gated_intensity(&t, &m, w, 2.0 * PI) < 1e-30);
    }

    #[test]
    fn gated_intensity_matches_composition() {
        let (t1, m) = target(1.0, 33.0, FRAC_PI_4);
        let t2 = t1.with_alpha(-FRAC_PI_4);
        for w in [-54.0, -31.3, -5.0, 8.6, 40.0] {
            for phi in [0.3, 1.0, PI, 4.0] {
                let (out, _) = compose_two_targets(&t1, &m, &t2, &m, w, phi);
                let i = gated_intensity(&t1, &m, w, phi);
                assert!((out.pi.norm_sqr() - i).abs() <= 1e-12 * i.max(1e-300));
            }
        }
    }

    #[test]
    fn analyzer_projection() {
        let grid = FrequencyGrid::<f64>::new(40.0, 1024, 141.0).unwrap();
        let s = PolarizedSpectrum::new(grid, vec![c(1.0, 0.5); 1024], vec![c(0.0, 0.0); 1024]).unwrap();
        let dark = analyzer_project(&s, 0.0).unwrap();
        assert!(dark.intensity().iter().all(|&x| x == 0.0));
        assert_eq!(analyzer_project(&s, 1.0).unwrap(), s);
        let leak = analyzer_project(&s, 1e-8).unwrap();
        assert!((leak.intensity()[3] - 1.25e-8).abs() < 1e-20);
        assert!(analyzer_project(&s, 1.5).is_err());
        assert!(analyzer_project(&s, -0.1).is_err());
        assert!(PolarizedSpectrum::new(grid, vec![], vec![]).is_err());
    }

    #[test]
    fn single_precision_dark_fringe() {
        let t = TargetSpec::<f32>::alpha_iron(1.0, 33.0, std::f32::consts::FRAC_PI_4).unwrap();
        let m = NuclearModel::for_target(&t, &NuclearConstants::default()).unwrap();
        let t2 = t.with_alpha(-std::f32::consts::FRAC_PI_4);
        let (out, l) = compose_two_targets(&t, &m, &t2, &m, -31.0f32, 0.0);
        assert!(out.pi.norm() < 1e-6);
        assert!(l.p2.norm() < 1e-5);
    }
}
