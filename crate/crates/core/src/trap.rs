//! Trapping potential of a low-field-seeking atom, minimum search and the
//! harmonic characterization of the trap (frequencies, chemical potential,
//! Thomas-Fermi radii, adiabaticity).

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ChipLayout, CurrentVector};
use crate::magnetics::{total_jet, FieldJet, Order};
use crate::nelder_mead::{Bounds, NelderMead};

/// Atomic and physical constants for 87Rb in |F=2, m_F=2>.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    pub g_f: f64,
    /// Bohr magneton, J/T.
    pub mu_b: f64,
    /// Atomic mass, kg.
    pub mass: f64,
    pub m_f: f64,
    /// m/s^2
    pub g_grav: f64,
    /// J s
    pub hbar: f64,
    /// s-wave scattering length, m.
    pub a_s: f64,
    /// J/K
    pub k_b: f64,
    pub atom_number: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            g_f: 0.5,
            mu_b: 9.27e-24,
            mass: 1.44e-25,
            m_f: 2.0,
            g_grav: 9.81,
            hbar: 1.0546e-34,
            a_s: 5.2e-9,
            k_b: 1.380649e-23,
            atom_number: 1e5,
        }
    }
}

impl PhysicalConstants {
    /// `m_F g_F mu_B`, J/T.
    pub fn zeeman(&self) -> f64 {
        self.m_f * self.g_f * self.mu_b
    }

    /// Energy expressed as a temperature, K.
    pub fn to_kelvin(&self, energy: f64) -> f64 {
        energy / self.k_b
    }
}

/// Full harmonic characterization of a trap minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrapMetrics {
    pub r_min: Vector3<f64>,
    /// J
    pub u_min: f64,
    /// J/m^2
    pub hessian: Matrix3<f64>,
    /// Ascending, J/m^2.
    pub eigenvalues: Vector3<f64>,
    /// Orthonormal columns matching `eigenvalues`; each column's largest
    /// component is positive.
    pub eigenvectors: Matrix3<f64>,
    /// rad/s
    pub omega: Vector3<f64>,
    pub freq_hz: Vector3<f64>,
    pub omega_bar: f64,
    /// m
    pub a_ho: f64,
    /// J
    pub mu_chem: f64,
    /// m
    pub r_tf: Vector3<f64>,
}

impl TrapMetrics {
    /// Builds the metrics chain from a Hessian at a stationary point.
    pub fn from_hessian(
        r_min: Vector3<f64>,
        u_min: f64,
        hessian: Matrix3<f64>,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        let (eigenvalues, eigenvectors) = sorted_eigen(&hessian);
        Self::from_eigensystem(r_min, u_min, hessian, eigenvalues, eigenvectors, constants)
    }

    pub fn from_eigensystem(
        r_min: Vector3<f64>,
        u_min: f64,
        hessian: Matrix3<f64>,
        eigenvalues: Vector3<f64>,
        eigenvectors: Matrix3<f64>,
        constants: &PhysicalConstants,
    ) -> Result<Self> {
        if eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::SaddlePoint([eigenvalues.x, eigenvalues.y, eigenvalues.z]));
        }
        let omega = eigenvalues.map(|l| (l / constants.mass).sqrt());
        let freq_hz = omega / (2.0 * PI);
        let omega_bar = geometric_mean(&omega);
        let a_ho = (constants.hbar / (constants.mass * omega_bar)).sqrt();
        let mu_chem = chemical_potential(&omega, constants)?;
        let r_tf = omega.map(|w| thomas_fermi_radius(mu_chem, w, constants.mass));
        Ok(TrapMetrics {
            r_min,
            u_min,
            hessian,
            eigenvalues,
            eigenvectors,
            omega,
            freq_hz,
            omega_bar,
            a_ho,
            mu_chem,
            r_tf,
        })
    }

    /// Index of the principal axis closest to the transport (x) direction.
    pub fn axial_index(&self) -> usize {
        principal_axis_along(&self.eigenvectors, &Vector3::x())
    }
}

fn geometric_mean(omega: &Vector3<f64>) -> f64 {
    (omega.x * omega.y * omega.z).cbrt()
}

/// `R_TF = sqrt(2 mu / (m omega^2))`
pub fn thomas_fermi_radius(mu_chem: f64, omega: f64, mass: f64) -> f64 {
    (2.0 * mu_chem / (mass * omega * omega)).sqrt()
}

/// Eigen-decomposition of a symmetric 3x3 matrix with ascending eigenvalues
/// and eigenvectors signed so their largest-magnitude component is positive.
pub fn sorted_eigen(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let eig = SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vector3::zeros();
    let mut vectors = Matrix3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut v = eig.eigenvectors.column(src).into_owned();
        let lead = v.iamax();
        if v[lead] < 0.0 {
            v = -v;
        }
        vectors.set_column(dst, &v);
    }
    (values, vectors)
}

/// Thomas-Fermi chemical potential `(hbar w̄ / 2) (15 N a_s / a_ho)^(2/5)`.
pub fn chemical_potential(omega: &Vector3<f64>, constants: &PhysicalConstants) -> Result<f64> {
    if omega.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::domain(format!(
            "trap frequencies must be positive, got {:?}",
            omega.as_slice()
        )));
    }
    let omega_bar = geometric_mean(omega);
    let a_ho = (constants.hbar / (constants.mass * omega_bar)).sqrt();
    let ratio = 15.0 * constants.atom_number * constants.a_s / a_ho;
    Ok(0.5 * constants.hbar * omega_bar * ratio.powf(0.4))
}

/// `|v| / (omega sigma)` with the RMS width `sigma = R_TF / sqrt 5`.
pub fn adiabaticity(velocity: f64, omega: f64, r_tf: f64) -> Result<f64> {
    if !(omega > 0.0) || !(r_tf > 0.0) {
        return Err(Error::domain(format!(
            "adiabaticity needs positive omega and R_TF, got {omega} and {r_tf}"
        )));
    }
    let sigma = r_tf / 5f64.sqrt();
    Ok(velocity.abs() / (omega * sigma))
}

/// Column of `eigenvectors` most parallel to `axis`; ties go to the lower index.
pub fn principal_axis_along(eigenvectors: &Matrix3<f64>, axis: &Vector3<f64>) -> usize {
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for i in 0..3 {
        let d = eigenvectors.column(i).dot(axis).abs();
        if d > best_dot {
            best = i;
            best_dot = d;
        }
    }
    best
}

/// Region searched for trap minima, metres.
pub fn default_search_box() -> Bounds<3> {
    Bounds {
        lower: Vector3::new(-3e-3, -2e-3, 0.05e-3),
        upper: Vector3::new(3e-3, 2e-3, 2e-3),
    }
}

/// Search boxes closer than this to the minimizer are treated as trap loss.
const BOX_MARGIN: f64 = 1e-7;
const NEWTON_STEPS: usize = 4;
/// Largest distance the Newton refinement may move a simplex result, m.
const NEWTON_RADIUS: f64 = 1e-6;

/// Potential value and its first two spatial derivatives.
#[derive(Debug, Clone, Copy)]
pub struct PotentialJet {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
    pub field: FieldJet,
}

/// Potential model for one layout: constants plus minimizer settings.
#[derive(Debug, Clone)]
pub struct TrapModel {
    pub constants: PhysicalConstants,
    pub search_box: Bounds<3>,
    pub simplex: NelderMead,
}

impl Default for TrapModel {
    fn default() -> Self {
        TrapModel {
            constants: PhysicalConstants::default(),
            search_box: default_search_box(),
            simplex: NelderMead::default(),
        }
    }
}

impl TrapModel {
    /// `m_F g_F mu_B |B| - m g z`, with `z` increasing away from the chip.
    pub fn potential(
        &self,
        layout: &ChipLayout,
        currents: &CurrentVector,
        point: &Vector3<f64>,
    ) -> Result<f64> {
        let b = total_jet(layout, currents, point, Order::Field)?.b;
        Ok(self.constants.zeeman() * b.norm() - self.gravity() * point.z)
    }

    fn gravity(&self) -> f64 {
        self.constants.mass * self.constants.g_grav
    }

    /// Potential with analytic gradient and Hessian.
    pub fn potential_jet(
        &self,
        layout: &ChipLayout,
        currents: &CurrentVector,
        point: &Vector3<f64>,
    ) -> Result<PotentialJet> {
        let field = total_jet(layout, currents, point, Order::Hessian)?;
        let c = self.constants.zeeman();
        let b = field.b;
        let mag = b.norm();
        // d|B|/dx_j = B . dB/dx_j / |B|
        let d_mag = field.grad.transpose() * b / mag;
        let mut second = field.grad.transpose() * field.grad;
        for i in 0..3 {
            second += field.hess[i] * b[i];
        }
        let hess_mag = (second - d_mag * d_mag.transpose()) / mag;
        let hessian = hess_mag * c;
        Ok(PotentialJet {
            value: c * mag - self.gravity() * point.z,
            gradient: d_mag * c - Vector3::z() * self.gravity(),
            hessian: (hessian + hessian.transpose()) * 0.5,
            field,
        })
    }

    pub fn hessian(
        &self,
        layout: &ChipLayout,
        currents: &CurrentVector,
        r_min: &Vector3<f64>,
    ) -> Result<Matrix3<f64>> {
        Ok(self.potential_jet(layout, currents, r_min)?.hessian)
    }

    /// Local minimum of the potential near `guess`, by Nelder-Mead.
    pub fn find_minimum(
        &self,
        layout: &ChipLayout,
        currents: &CurrentVector,
        guess: &Vector3<f64>,
    ) -> Result<Vector3<f64>> {
        currents.check(layout)?;
        if !self.search_box.contains(guess) {
            return Err(Error::Escaped(*guess));
        }
        let min = self.simplex.minimize(
            |x| self.potential(layout, currents, x),
            *guess,
            Some(&self.search_box),
        )?;
        if self.search_box.margin(&min.x) < BOX_MARGIN {
            return Err(Error::Escaped(min.x));
        }
        Ok(self.polish(layout, currents, min.x))
    }

    /// Newton refinement of a simplex result. The simplex stops on its own
    /// tolerances, which leave the weak axis uncertain at the 1e-10 m level;
    /// a couple of Newton steps with the analytic Hessian remove that.
    /// Steps are only taken while the Hessian is positive definite and the
    /// point stays close to where the simplex ended.
    fn polish(&self, layout: &ChipLayout, currents: &CurrentVector, start: Vector3<f64>) -> Vector3<f64> {
        let mut x = start;
        for _ in 0..NEWTON_STEPS {
            let Ok(jet) = self.potential_jet(layout, currents, &x) else {
                break;
            };
            let Some(chol) = jet.hessian.cholesky() else {
                break;
            };
            let step = chol.solve(&-jet.gradient);
            let next = x + step;
            if !step.iter().all(|s| s.is_finite())
                || (next - start).norm() > NEWTON_RADIUS
                || !self.search_box.contains(&next)
            {
                break;
            }
            x = next;
            if step.norm() < 1e-14 {
                break;
            }
        }
        x
    }

    /// Minimum search followed by the full harmonic characterization.
    pub fn characterize(
        &self,
        layout: &ChipLayout,
        currents: &CurrentVector,
        guess: &Vector3<f64>,
    ) -> Result<TrapMetrics> {
        let r_min = self.find_minimum(layout, currents, guess)?;
        self.characterize_at(layout, currents, &r_min)
    }

    /// Characterization at a known minimum.
    pub fn characterize_at(
        &self,
        layout: &ChipLayout,
        currents: &CurrentVector,
        r_min: &Vector3<f64>,
    ) -> Result<TrapMetrics> {
        let jet = self.potential_jet(layout, currents, r_min)?;
        TrapMetrics::from_hessian(*r_min, jet.value, jet.hessian, &self.constants)
    }

    /// Scale `s` such that the bias `s * direction` puts the minimum at
    /// height `target_z`, found by bisection on `[lo, hi]`.
    ///
    /// The trap height must be monotone in `s` over the bracket.
    pub fn calibrate_bias_scale(
        &self,
        layout: &ChipLayout,
        currents: &CurrentVector,
        direction: &Vector3<f64>,
        target_z: f64,
        (mut lo, mut hi): (f64, f64),
    ) -> Result<f64> {
        let guess = Vector3::new(0.0, 0.0, target_z);
        let height = |s: f64| -> Result<f64> {
            let l = layout.with_bias(direction * s);
            Ok(self.find_minimum(&l, currents, &guess)?.z - target_z)
        };
        let mut f_lo = height(lo)?;
        let f_hi = height(hi)?;
        if f_lo.signum() == f_hi.signum() {
            return Err(Error::domain(format!(
                "bias bracket [{lo}, {hi}] does not straddle z = {target_z}"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f_mid = height(mid)?;
            if f_mid == 0.0 {
                return Ok(mid);
            }
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() < 1e-12 * hi.abs().max(lo.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BiasField;

    fn paper_eigenvalues() -> Vector3<f64> {
        // Printed as [7.1, 67.3, 74.9] x 1e-26, consistent only in J/mm^2.
        Vector3::new(7.1e-20, 67.3e-20, 74.9e-20)
    }

    #[test]
    fn frequencies_from_eigenvalues() {
        let c = PhysicalConstants::default();
        let m = TrapMetrics::from_eigensystem(
            Vector3::zeros(),
            0.0,
            Matrix3::from_diagonal(&paper_eigenvalues()),
            paper_eigenvalues(),
            Matrix3::identity(),
            &c,
        )
        .unwrap();
        let expected = [111.4, 343.8, 362.5];
        for i in 0..3 {
            assert!((m.freq_hz[i] - expected[i]).abs() / expected[i] < 5e-3, "{}", m.freq_hz);
            assert!((m.omega[i] - (paper_eigenvalues()[i] / c.mass).sqrt()).abs() < 1e-12);
        }
        // m w^2 R^2 = 2 mu
        for i in 0..3 {
            let lhs = c.mass * m.omega[i].powi(2) * m.r_tf[i].powi(2);
            assert!((lhs - 2.0 * m.mu_chem).abs() <= 1e-14 * lhs);
        }
    }

    #[test]
    fn chemical_potential_matches_published_value() {
        let c = PhysicalConstants::default();
        let omega = Vector3::new(111.4, 343.8, 362.5) * (2.0 * PI);
        let mu = chemical_potential(&omega, &c).unwrap();
        assert!((mu - 3.32e-30).abs() / 3.32e-30 < 0.01, "{mu}");
        let r: Vec<f64> = omega.iter().map(|w| thomas_fermi_radius(mu, *w, c.mass)).collect();
        for (got, want) in r.iter().zip([9.69e-6, 3.1e-6, 2.98e-6]) {
            assert!((got - want).abs() / want < 0.015, "{r:?}");
        }
    }

    #[test]
    fn chemical_potential_scaling() {
        let c = PhysicalConstants::default();
        let omega = Vector3::new(700.0, 2100.0, 2300.0);
        let mu1 = chemical_potential(&omega, &c).unwrap();
        let mu8 = chemical_potential(&(omega * 8.0), &c).unwrap();
        assert!((mu8 / mu1 - 8f64.powf(1.2)).abs() < 1e-12);
    }

    #[test]
    fn chemical_potential_isotropic_by_hand() {
        let c = PhysicalConstants::default();
        let w = 2.0 * PI * 100.0;
        let mu = chemical_potential(&Vector3::new(w, w, w), &c).unwrap();
        let a_ho = (1.0546e-34 / (1.44e-25 * w)).sqrt();
        let by_hand = 1.0546e-34 * w / 2.0 * (15.0 * 1e5 * 5.2e-9 / a_ho).powf(0.4);
        assert!((mu - by_hand).abs() <= 1e-14 * by_hand);
    }

    #[test]
    fn chemical_potential_rejects_non_positive_frequency() {
        let c = PhysicalConstants::default();
        assert!(chemical_potential(&Vector3::new(1.0, 0.0, 1.0), &c).is_err());
        assert!(chemical_potential(&Vector3::new(1.0, -2.0, 1.0), &c).is_err());
    }

    #[test]
    fn temperature_conversion() {
        let c = PhysicalConstants::default();
        let t = c.to_kelvin(7.49e-28);
        assert!((t - 54.2e-6).abs() / 54.2e-6 < 2e-3);
    }

    #[test]
    fn adiabaticity_examples() {
        assert_eq!(adiabaticity(0.0, 700.0, 1e-5).unwrap(), 0.0);
        let v = 15.0 / 8.0 * 2.4e-3 / 2.0;
        let eps = adiabaticity(v, 2.0 * PI * 111.4, 9.69e-6).unwrap();
        assert!((eps - 0.74).abs() < 0.01, "{eps}");
        let eps2 = adiabaticity(v / 2.0, 2.0 * PI * 111.4, 9.69e-6).unwrap();
        assert_eq!(eps2 * 2.0, eps);
        assert!(adiabaticity(1.0, 0.0, 1.0).is_err());
        assert!(adiabaticity(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn principal_axes() {
        assert_eq!(principal_axis_along(&Matrix3::identity(), &Vector3::x()), 0);
        #[rustfmt::skip]
        let e = Matrix3::new(
            0.9011, -0.0007, -0.4337,
            0.4337,  0.0008,  0.9011,
           -0.0002, -1.0000,  0.0011,
        );
        assert_eq!(principal_axis_along(&e, &Vector3::x()), 0);
        assert_eq!(principal_axis_along(&e, &Vector3::z()), 1);
        assert_eq!(principal_axis_along(&e, &Vector3::y()), 2);
        // Ties: lowest index.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let tie = Matrix3::new(s, -s, 0.0, s, s, 0.0, 0.0, 0.0, 1.0);
        assert_eq!(principal_axis_along(&tie, &Vector3::x()), 0);
    }

    #[test]
    fn eigen_contract() {
        let h = Matrix3::new(5.0, 1.0, -0.3, 1.0, 2.0, 0.7, -0.3, 0.7, 9.0);
        let (l, e) = sorted_eigen(&h);
        assert!(l[0] <= l[1] && l[1] <= l[2]);
        assert!((e.transpose() * e - Matrix3::identity()).norm() < 1e-12);
        for i in 0..3 {
            let v = e.column(i);
            assert!((h * v - v * l[i]).norm() < 1e-12 * l[2]);
            assert!(v[v.iamax()] > 0.0);
        }
        let rebuilt = e * Matrix3::from_diagonal(&l) * e.transpose();
        assert!((rebuilt - h).norm() < 1e-12 * h.norm());
    }

    #[test]
    fn saddle_is_rejected() {
        let h = Matrix3::from_diagonal(&Vector3::new(-1.0, 2.0, 3.0));
        let r = TrapMetrics::from_hessian(Vector3::zeros(), 0.0, h, &PhysicalConstants::default());
        assert!(matches!(r, Err(Error::SaddlePoint(_))));
    }

    #[test]
    fn potential_of_bias_only() {
        let mut layout = crate::geometry::reference_layout();
        layout.bias = BiasField(Vector3::new(0.0, 1e-4, 0.0));
        let zero = CurrentVector::zeros(15);
        let model = TrapModel::default();
        let u0 = model.potential(&layout, &zero, &Vector3::new(0.0, 0.0, 0.0));
        // z = 0 lies on the shifting wire surface; use a point beside the chip.
        assert!(u0.is_err());
        let p0 = Vector3::new(0.0, 20e-3, 0.0);
        let u = model.potential(&layout, &zero, &p0).unwrap();
        assert!((u - 9.27e-28).abs() < 1e-42);
        let p1 = Vector3::new(0.0, 20e-3, 1e-3);
        let u = model.potential(&layout, &zero, &p1).unwrap();
        assert!((u - (9.27e-28 - 1.44e-25 * 9.81 * 1e-3)).abs() < 1e-42);
    }

    fn reference() -> (TrapModel, crate::geometry::ChipLayout, CurrentVector) {
        (
            TrapModel::default(),
            crate::geometry::reference_layout(),
            crate::geometry::initial_currents(),
        )
    }

    #[test]
    fn reference_trap_sits_at_the_calibrated_height() {
        let (model, layout, currents) = reference();
        let m = model
            .characterize(&layout, &currents, &Vector3::new(0.0, 0.0, 0.3e-3))
            .unwrap();
        assert!((m.r_min.z - 0.33e-3).abs() < 1e-5, "{}", m.r_min);
        assert!(m.r_min.x.abs() < 1e-9 && m.r_min.y.abs() < 1e-9);
        let micro_k = model.constants.to_kelvin(m.u_min) * 1e6;
        assert!((40.0..=70.0).contains(&micro_k), "{micro_k}");
        assert!(m.eigenvalues.iter().all(|&l| l > 0.0));
        assert_eq!(m.axial_index(), 0);
    }

    #[test]
    fn minimum_search_is_idempotent() {
        let (model, layout, currents) = reference();
        let r = model
            .find_minimum(&layout, &currents, &Vector3::new(2e-5, -1e-5, 0.3e-3))
            .unwrap();
        let again = model.find_minimum(&layout, &currents, &r).unwrap();
        assert!((again - r).norm() < 1e-10);
        let grad = model.potential_jet(&layout, &currents, &r).unwrap().gradient;
        // Gradient small compared with curvature times a nanometre.
        assert!(grad.norm() < 1e-19 * 1e-9, "{grad}");
    }

    #[test]
    fn hessian_matches_potential_differences() {
        let (model, layout, currents) = reference();
        let r = model
            .find_minimum(&layout, &currents, &Vector3::new(0.0, 0.0, 0.33e-3))
            .unwrap();
        for point in [r, r + Vector3::new(3e-5, -2e-5, 1e-5)] {
            let h = model.hessian(&layout, &currents, &point).unwrap();
            let u = |d: Vector3<f64>| model.potential(&layout, &currents, &(point + d)).unwrap();
            let central = |step: f64| {
                let mut fd = Matrix3::zeros();
                for i in 0..3 {
                    for j in 0..3 {
                        let ei = Vector3::ith(i, step);
                        let ej = Vector3::ith(j, step);
                        fd[(i, j)] = (u(ei + ej) - u(ei - ej) - u(ej - ei) + u(-ei - ej)) / (4.0 * step * step);
                    }
                }
                fd
            };
            // |B| varies on the B0/G ~ 40 um scale, so the plain stencil at
            // 1 um is only good to ~2e-4; extrapolate out the h^2 term.
            let fd = (central(1e-6) * 4.0 - central(2e-6)) / 3.0;
            assert!((fd - h).norm() <= 1e-5 * h.norm(), "{h} vs {fd}");
            assert!((h - h.transpose()).norm() <= 1e-8 * h.norm());
        }
    }

    #[test]
    fn guess_outside_the_box_is_trap_loss() {
        let (model, layout, currents) = reference();
        let err = model
            .find_minimum(&layout, &currents, &Vector3::new(0.0, 0.0, 5e-3))
            .unwrap_err();
        assert!(matches!(err, Error::Escaped(_)));
    }
}
