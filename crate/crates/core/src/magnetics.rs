//! Closed-form magnetostatics of rectangular conductors.
//!
//! A prism of length `L`, width `W` and height `H` carrying current `I`
//! uniformly along its axis produces
//!
//! ```text
//! B(r) = (mu0 I / 4 pi W H) ∫_V l x (r - r') / |r - r'|^3 dV'
//! ```
//!
//! In the prism frame (l along the current, w across, h along the chip
//! normal) with relative coordinates `u, v, w` the two non-zero components
//! are `B_w = -C ∫ w/R^3` and `B_h = C ∫ v/R^3`, with antiderivatives
//!
//! ```text
//! F_w = -u ln(v + R) - v ln(u + R) + w atan(u v / (w R))
//! F_v = -u ln(w + R) - w ln(u + R) + v atan(u w / (v R))
//! ```
//!
//! summed over the eight corners with alternating signs. The logarithms are
//! always taken as differences between the two corners that differ only in
//! the log's own variable, which keeps the sum stable for points coplanar
//! with a face. First and second spatial derivatives are differentiated
//! analytically from the same corner terms.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{ChipLayout, CurrentVector, WirePrism};

pub const MU0_OVER_4PI: f64 = 1e-7;

/// Points closer than this to a conductor surface are rejected.
pub const SURFACE_CLEARANCE: f64 = 1e-9;

/// How many spatial derivatives to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Field,
    Gradient,
    Hessian,
}

/// Field value and spatial derivatives at one point.
///
/// `grad[(i, j)] = dB_i/dx_j`, `hess[i][(j, k)] = d2B_i/dx_j dx_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJet {
    pub b: Vector3<f64>,
    pub grad: Matrix3<f64>,
    pub hess: [Matrix3<f64>; 3],
}

impl FieldJet {
    pub fn zero() -> Self {
        FieldJet {
            b: Vector3::zeros(),
            grad: Matrix3::zeros(),
            hess: [Matrix3::zeros(); 3],
        }
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, other: &FieldJet, factor: f64) {
        self.b += other.b * factor;
        self.grad += other.grad * factor;
        for i in 0..3 {
            self.hess[i] += other.hess[i] * factor;
        }
    }
}

/// Per-ampere field of every channel at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFieldSet {
    pub point: Vector3<f64>,
    /// `per_channel_b[k]` is the field of one ampere on channel `k`, T/A.
    pub per_channel_b: Vec<Vector3<f64>>,
}

impl BasisFieldSet {
    /// `bias + sum_k I_k b_k`
    pub fn combine(&self, bias: &Vector3<f64>, currents: &CurrentVector) -> Vector3<f64> {
        self.per_channel_b
            .iter()
            .zip(currents.as_slice())
            .fold(*bias, |acc, (b, i)| acc + b * *i)
    }
}

/// Orthonormal prism frame: columns are the current axis, the width axis and
/// the height axis, in that order (right-handed).
fn prism_frame(direction: &Vector3<f64>) -> Matrix3<f64> {
    let l = *direction;
    let z = Vector3::z();
    let mut h = z - l * l.dot(&z);
    if h.norm() < 1e-8 {
        // Vertical conductor: measure height along x instead.
        let x = Vector3::x();
        h = x - l * l.dot(&x);
    }
    let h = h.normalize();
    let w = h.cross(&l);
    Matrix3::from_columns(&[l, w, h])
}

/// Distance from a point (in the prism frame) to the prism box.
fn box_distance(q: &Vector3<f64>, half: &Vector3<f64>) -> f64 {
    let d = Vector3::new(
        (q.x.abs() - half.x).max(0.0),
        (q.y.abs() - half.y).max(0.0),
        (q.z.abs() - half.z).max(0.0),
    );
    d.norm()
}

/// `ln(a2 + R2) - ln(a1 + R1)` where `R_i = sqrt(a_i^2 + rest2)`, `a1 < a2`.
#[inline]
fn log_pair(a1: f64, a2: f64, r1: f64, r2: f64, rest2: f64) -> f64 {
    if a1 >= 0.0 {
        ((a2 + r2) / (a1 + r1)).ln()
    } else if a2 <= 0.0 {
        ((r1 - a1) / (r2 - a2)).ln()
    } else {
        (a2 + r2).ln() + (r1 - a1).ln() - rest2.ln()
    }
}

/// `coef * atan(p / (coef * r))`, continuous at `coef = 0`.
#[inline]
fn x_atan(coef: f64, p: f64, r: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * (p / (coef * r)).atan()
    }
}

#[inline]
fn atan_ratio(coef: f64, p: f64, r: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        (p / (coef * r)).atan()
    }
}

/// `1 / (R (a + R))` with `b2c2 = R^2 - a^2`, stable for negative `a`.
#[inline]
fn inv_r_apr(a: f64, r: f64, b2c2: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (r * (a + r))
    } else if b2c2 > 0.0 {
        (r - a) / (r * b2c2)
    } else {
        0.0
    }
}

#[inline]
fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

const SIGN: [f64; 2] = [-1.0, 1.0];

/// Corner sums for a unit current density, in the prism frame.
///
/// Returns `(I_w, I_v)` (and derivatives) where `B_w = -C I_w` and `B_h = C I_v`.
struct CornerSums {
    iw: f64,
    iv: f64,
    d_iw: Vector3<f64>,
    d_iv: Vector3<f64>,
    dd_iw: Matrix3<f64>,
    dd_iv: Matrix3<f64>,
}

fn corner_sums(q: &Vector3<f64>, half: &Vector3<f64>, order: Order) -> CornerSums {
    let us = [q.x - half.x, q.x + half.x];
    let vs = [q.y - half.y, q.y + half.y];
    let ws = [q.z - half.z, q.z + half.z];
    let mut r = [[[0.0f64; 2]; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                r[a][b][c] = (us[a] * us[a] + vs[b] * vs[b] + ws[c] * ws[c]).sqrt();
            }
        }
    }

    // Log differences along each axis, indexed by the other two corners.
    let mut dv = [[0.0; 2]; 2]; // [iu][iw]
    let mut du = [[0.0; 2]; 2]; // [iv][iw]
    let mut dw = [[0.0; 2]; 2]; // [iu][iv]
    for a in 0..2 {
        for c in 0..2 {
            let rest = us[a] * us[a] + ws[c] * ws[c];
            dv[a][c] = log_pair(vs[0], vs[1], r[a][0][c], r[a][1][c], rest);
        }
    }
    for b in 0..2 {
        for c in 0..2 {
            let rest = vs[b] * vs[b] + ws[c] * ws[c];
            du[b][c] = log_pair(us[0], us[1], r[0][b][c], r[1][b][c], rest);
        }
    }
    for a in 0..2 {
        for b in 0..2 {
            let rest = us[a] * us[a] + vs[b] * vs[b];
            dw[a][b] = log_pair(ws[0], ws[1], r[a][b][0], r[a][b][1], rest);
        }
    }

    let mut iw = 0.0;
    let mut iv = 0.0;
    for a in 0..2 {
        for c in 0..2 {
            iw -= SIGN[a] * SIGN[c] * us[a] * dv[a][c];
        }
    }
    for b in 0..2 {
        for c in 0..2 {
            let s = SIGN[b] * SIGN[c];
            iw -= s * vs[b] * du[b][c];
            iv -= s * ws[c] * du[b][c];
        }
    }
    for a in 0..2 {
        for b in 0..2 {
            iv -= SIGN[a] * SIGN[b] * us[a] * dw[a][b];
        }
    }
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let s = SIGN[a] * SIGN[b] * SIGN[c];
                let rr = r[a][b][c];
                iw += s * x_atan(ws[c], us[a] * vs[b], rr);
                iv += s * x_atan(vs[b], us[a] * ws[c], rr);
            }
        }
    }

    let mut out = CornerSums {
        iw,
        iv,
        d_iw: Vector3::zeros(),
        d_iv: Vector3::zeros(),
        dd_iw: Matrix3::zeros(),
        dd_iv: Matrix3::zeros(),
    };
    if order == Order::Field {
        return out;
    }

    // dI_w = (-Σ Lv, -Σ Lu, Σ Aw); dI_v = (-Σ Lw, Σ Av, -Σ Lu).
    let mut sum_dv = 0.0;
    let mut sum_du = 0.0;
    let mut sum_dw = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let s = SIGN[i] * SIGN[j];
            sum_dv += s * dv[i][j];
            sum_du += s * du[i][j];
            sum_dw += s * dw[i][j];
        }
    }
    let mut sum_aw = 0.0;
    let mut sum_av = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let s = SIGN[a] * SIGN[b] * SIGN[c];
                let rr = r[a][b][c];
                sum_aw += s * atan_ratio(ws[c], us[a] * vs[b], rr);
                sum_av += s * atan_ratio(vs[b], us[a] * ws[c], rr);
            }
        }
    }
    out.d_iw = Vector3::new(-sum_dv, -sum_du, sum_aw);
    out.d_iv = Vector3::new(-sum_dw, sum_av, -sum_du);
    if order == Order::Gradient {
        return out;
    }

    // Second derivatives, corner by corner.
    let mut t_w = Matrix3::zeros();
    let mut t_v = Matrix3::zeros();
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let s = SIGN[a] * SIGN[b] * SIGN[c];
                let (u, v, w) = (us[a], vs[b], ws[c]);
                let rr = r[a][b][c];
                let (u2, v2, w2) = (u * u, v * v, w * w);
                let inv_r = 1.0 / rr;
                // d ln(v+R) = (u g_v, 1/R, w g_v) etc.
                let g_v = inv_r_apr(v, rr, u2 + w2);
                let g_u = inv_r_apr(u, rr, v2 + w2);
                let g_w = inv_r_apr(w, rr, u2 + v2);
                let r2 = rr * rr;

                // I_w Hessian.
                let dwaw = ratio_or_zero(-u * v * (r2 + w2), rr * (u2 + w2) * (v2 + w2));
                t_w[(0, 0)] -= s * u * g_v;
                t_w[(0, 1)] -= s * inv_r;
                t_w[(0, 2)] -= s * w * g_v;
                t_w[(1, 1)] -= s * v * g_u;
                t_w[(1, 2)] -= s * w * g_u;
                t_w[(2, 2)] += s * dwaw;

                // I_v Hessian.
                let dvav = ratio_or_zero(-u * w * (r2 + v2), rr * (u2 + v2) * (v2 + w2));
                t_v[(0, 0)] -= s * u * g_w;
                t_v[(0, 1)] -= s * v * g_w;
                t_v[(0, 2)] -= s * inv_r;
                t_v[(1, 1)] += s * dvav;
                t_v[(1, 2)] -= s * v * g_u;
                t_v[(2, 2)] -= s * w * g_u;
            }
        }
    }
    for (i, j) in [(1, 0), (2, 0), (2, 1)] {
        t_w[(i, j)] = t_w[(j, i)];
        t_v[(i, j)] = t_v[(j, i)];
    }
    out.dd_iw = t_w;
    out.dd_iv = t_v;
    out
}

/// Field of `prism` per ampere of channel current, with spatial derivatives
/// up to `order`.
pub fn prism_jet_per_ampere(
    prism: &WirePrism,
    point: &Vector3<f64>,
    order: Order,
) -> std::result::Result<FieldJet, f64> {
    let frame = prism_frame(&prism.direction);
    let q = frame.transpose() * (point - prism.center);
    let half = Vector3::new(prism.length, prism.width, prism.height) * 0.5;
    let distance = box_distance(&q, &half);
    if distance <= SURFACE_CLEARANCE {
        return Err(distance);
    }
    let c = MU0_OVER_4PI / (prism.width * prism.height);
    let sums = corner_sums(&q, &half, order);

    let mut jet = FieldJet::zero();
    jet.b = frame * Vector3::new(0.0, -c * sums.iw, c * sums.iv);
    if order >= Order::Gradient {
        let mut g = Matrix3::zeros();
        g.set_row(1, &(sums.d_iw * -c).transpose());
        g.set_row(2, &(sums.d_iv * c).transpose());
        jet.grad = frame * g * frame.transpose();
    }
    if order >= Order::Hessian {
        let local = [Matrix3::zeros(), sums.dd_iw * -c, sums.dd_iv * c];
        let rotated: Vec<Matrix3<f64>> = local
            .iter()
            .map(|m| frame * m * frame.transpose())
            .collect();
        for i in 0..3 {
            jet.hess[i] = rotated[1] * frame[(i, 1)] + rotated[2] * frame[(i, 2)];
        }
    }
    Ok(jet)
}

fn singular(prism: usize, point: &Vector3<f64>, distance: f64) -> Error {
    Error::Singular {
        prism,
        point: *point,
        distance,
    }
}

/// Field per ampere of a single prism, T/A. Reversing `direction` negates it.
pub fn prism_field_per_ampere(prism: &WirePrism, point: &Vector3<f64>) -> Result<Vector3<f64>> {
    prism_jet_per_ampere(prism, point, Order::Field)
        .map(|j| j.b)
        .map_err(|d| singular(0, point, d))
}

/// Per-channel unit-current jets at `point` (no bias).
pub fn basis_jets(layout: &ChipLayout, point: &Vector3<f64>, order: Order) -> Result<Vec<FieldJet>> {
    let mut jets = vec![FieldJet::zero(); layout.channel_count()];
    for (i, prism) in layout.prisms.iter().enumerate() {
        let jet = prism_jet_per_ampere(prism, point, order).map_err(|d| singular(i, point, d))?;
        jets[prism.channel].add_scaled(&jet, 1.0);
    }
    Ok(jets)
}

pub fn basis_fields(layout: &ChipLayout, point: &Vector3<f64>) -> Result<BasisFieldSet> {
    let jets = basis_jets(layout, point, Order::Field)?;
    Ok(BasisFieldSet {
        point: *point,
        per_channel_b: jets.into_iter().map(|j| j.b).collect(),
    })
}

/// Total field (bias included) and its derivatives up to `order`.
pub fn total_jet(
    layout: &ChipLayout,
    currents: &CurrentVector,
    point: &Vector3<f64>,
    order: Order,
) -> Result<FieldJet> {
    currents.check(layout)?;
    let mut total = FieldJet::zero();
    total.b = layout.bias.0;
    for (i, prism) in layout.prisms.iter().enumerate() {
        let current = currents[prism.channel];
        if current == 0.0 {
            // Still refuse points inside idle conductors.
            let frame = prism_frame(&prism.direction);
            let q = frame.transpose() * (point - prism.center);
            let half = Vector3::new(prism.length, prism.width, prism.height) * 0.5;
            let d = box_distance(&q, &half);
            if d <= SURFACE_CLEARANCE {
                return Err(singular(i, point, d));
            }
            continue;
        }
        let jet = prism_jet_per_ampere(prism, point, order).map_err(|d| singular(i, point, d))?;
        total.add_scaled(&jet, current);
    }
    Ok(total)
}

/// `bias + sum over prisms of I_channel * b_prism(point)`, tesla.
pub fn total_field(
    layout: &ChipLayout,
    currents: &CurrentVector,
    point: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    total_jet(layout, currents, point, Order::Field).map(|j| j.b)
}

/// `dB_i/dx_j` of the total field, T/m.
pub fn field_spatial_gradient(
    layout: &ChipLayout,
    currents: &CurrentVector,
    point: &Vector3<f64>,
) -> Result<Matrix3<f64>> {
    total_jet(layout, currents, point, Order::Gradient).map(|j| j.grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{reference_layout, initial_currents, BiasField};

    fn prism(center: [f64; 3], dims: [f64; 3], dir: [f64; 3]) -> WirePrism {
        WirePrism {
            center: Vector3::from(center),
            length: dims[0],
            width: dims[1],
            height: dims[2],
            direction: Vector3::from(dir).normalize(),
            channel: 0,
        }
    }

    #[test]
    fn thin_wire_limit() {
        // 10 mm x 1 um x 1 um, point 1 mm from the midpoint.
        let p = prism([0.0; 3], [10e-3, 1e-6, 1e-6], [1.0, 0.0, 0.0]);
        let b = prism_field_per_ampere(&p, &Vector3::new(0.0, 0.0, 1e-3)).unwrap();
        // mu0 I (sin t1 + sin t2) / (4 pi d), sin t = 5 / sqrt(26)
        let expected = MU0_OVER_4PI * 2.0 * (5.0 / 26f64.sqrt()) / 1e-3;
        assert!((b.norm() - expected).abs() / expected < 5e-4);
        // Field circulates: above a wire along +x, B points along -y.
        assert!(b.y < 0.0 && b.x.abs() < 1e-20);

        // 100 mm long: within 0.05 % of the infinite-wire value mu0 / (2 pi d).
        let long = prism([0.0; 3], [100e-3, 1e-6, 1e-6], [1.0, 0.0, 0.0]);
        let b = prism_field_per_ampere(&long, &Vector3::new(0.0, 0.0, 1e-3)).unwrap();
        assert!((b.norm() - 1.9996e-4).abs() < 1e-8, "{}", b.norm());
        assert!((b.norm() - 2e-4).abs() / 2e-4 < 5e-4);
    }

    #[test]
    fn no_field_along_current_axis_extension() {
        let p = prism([0.0; 3], [2e-3, 1e-4, 2e-4], [0.0, 1.0, 0.0]);
        let b = prism_field_per_ampere(&p, &Vector3::new(0.0, 5e-3, 0.0)).unwrap();
        assert!(b.norm() < 1e-18, "{b:?}");
        let off = prism_field_per_ampere(&p, &Vector3::new(0.0, 5e-3, 3e-4)).unwrap();
        assert_eq!(off.y, 0.0);
    }

    #[test]
    fn reversing_direction_negates_field() {
        let a = prism([1e-4, 2e-4, -3e-4], [3e-3, 2e-4, 5e-5], [0.3, 0.9, 0.1]);
        let mut b = a.clone();
        b.direction = -a.direction;
        let pt = Vector3::new(4e-4, -1e-4, 6e-4);
        let fa = prism_field_per_ampere(&a, &pt).unwrap();
        let fb = prism_field_per_ampere(&b, &pt).unwrap();
        assert!((fa + fb).norm() <= 1e-13 * fa.norm(), "{fa:?} {fb:?}");
    }

    #[test]
    fn point_inside_or_on_conductor_is_rejected() {
        let p = prism([0.0; 3], [1e-3, 1e-4, 1e-4], [1.0, 0.0, 0.0]);
        assert!(matches!(
            prism_field_per_ampere(&p, &Vector3::zeros()),
            Err(Error::Singular { .. })
        ));
        assert!(prism_field_per_ampere(&p, &Vector3::new(0.0, 0.0, 5e-5)).is_err());
        assert!(prism_field_per_ampere(&p, &Vector3::new(0.0, 0.0, 5e-5 + 1e-10)).is_err());
        assert!(prism_field_per_ampere(&p, &Vector3::new(0.0, 0.0, 5e-5 + 1e-8)).is_ok());
    }

    #[test]
    fn coplanar_points_are_finite() {
        // Point level with the top face and beyond the end face.
        let p = prism([0.0; 3], [1e-3, 1e-4, 1e-4], [1.0, 0.0, 0.0]);
        for pt in [
            Vector3::new(1e-3, 0.0, 5e-5),
            Vector3::new(5e-4, 5e-5, 5e-5 + 1e-4),
            Vector3::new(2e-3, 5e-5, 5e-5),
            Vector3::new(0.0, 5e-5, 3e-4),
        ] {
            let j = prism_jet_per_ampere(&p, &pt, Order::Gradient).unwrap();
            assert!(j.b.iter().all(|v| v.is_finite()), "{pt:?} {j:?}");
            assert!(j.grad.iter().all(|v| v.is_finite()), "{pt:?} {j:?}");
        }
    }

    #[test]
    fn zero_currents_leave_only_bias() {
        let mut layout = reference_layout();
        layout.bias = BiasField(Vector3::new(0.0, 1e-4, 0.0));
        let zero = CurrentVector::zeros(15);
        let b = total_field(&layout, &zero, &Vector3::new(1e-4, 2e-4, 3e-4)).unwrap();
        assert_eq!(b, Vector3::new(0.0, 1e-4, 0.0));
        let g = field_spatial_gradient(&layout, &zero, &Vector3::new(1e-4, 2e-4, 3e-4)).unwrap();
        assert_eq!(g, Matrix3::zeros());
    }

    #[test]
    fn doubling_currents_doubles_field() {
        let layout = reference_layout().with_bias(Vector3::zeros());
        let i = initial_currents();
        let pt = Vector3::new(1e-4, -2e-4, 3.3e-4);
        let b1 = total_field(&layout, &i, &pt).unwrap();
        let b2 = total_field(&layout, &i.scaled(2.0), &pt).unwrap();
        assert_eq!(b2, b1 * 2.0);
    }

    #[test]
    fn basis_reconstructs_total_field() {
        let layout = reference_layout().with_bias(Vector3::new(1e-5, -2e-4, 3e-6));
        let i = initial_currents();
        let pt = Vector3::new(2e-4, 1e-4, 3e-4);
        let basis = basis_fields(&layout, &pt).unwrap();
        let b = total_field(&layout, &i, &pt).unwrap();
        let r = basis.combine(&layout.bias.0, &i);
        assert!((r - b).norm() <= 1e-12 * b.norm());
    }

    #[test]
    fn far_field_decays_like_a_current_element() {
        // A 10 mm guiding wire seen from 1 m away is a current element:
        // |B| = (mu0 / 4 pi) L / r^2.
        let layout = reference_layout();
        let far = Vector3::new(0.0, 0.0, 1.0);
        let basis = basis_fields(&layout, &far).unwrap();
        let element = MU0_OVER_4PI * 10e-3 / 1.0;
        let guide = basis.per_channel_b[10].norm();
        assert!((guide - element).abs() / element < 1e-3, "{guide}");
        for b in &basis.per_channel_b {
            assert!(b.norm() < 1.01 * element);
        }
        let farther = basis_fields(&layout, &(far * 4.0)).unwrap();
        for b in &farther.per_channel_b {
            assert!(b.norm() < 1e-10);
        }
    }

    #[test]
    fn flipping_one_prism_flips_its_contribution() {
        let layout = reference_layout();
        let pt = Vector3::new(1e-4, 1e-4, 3e-4);
        let before = basis_fields(&layout, &pt).unwrap();
        let mut flipped = layout.clone();
        flipped.prisms[12].direction = -flipped.prisms[12].direction;
        let after = basis_fields(&flipped, &pt).unwrap();
        let single = prism_field_per_ampere(&layout.prisms[12], &pt).unwrap();
        let ch = layout.prisms[12].channel;
        let diff = before.per_channel_b[ch] - after.per_channel_b[ch];
        assert!((diff - single * 2.0).norm() <= 1e-12 * single.norm());
    }

    /// Fourth-order central differences of a vector function.
    fn fd4<F: Fn(&Vector3<f64>) -> Vector3<f64>>(f: F, p: &Vector3<f64>, h: f64) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for j in 0..3 {
            let mut e = Vector3::zeros();
            e[j] = h;
            let d = (f(&(p - e * 2.0)) - f(&(p + e * 2.0)) + (f(&(p + e)) - f(&(p - e))) * 8.0)
                / (12.0 * h);
            m.set_column(j, &d);
        }
        m
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let p = prism([0.0; 3], [3e-3, 2e-4, 1e-4], [0.6, 0.8, 0.0]);
        for pt in [
            Vector3::new(1e-4, 2e-4, 3e-4),
            Vector3::new(-1.4e-3, 0.4e-3, 0.1e-3),
            Vector3::new(2e-3, 1.5e-3, -0.2e-3),
        ] {
            let g = prism_jet_per_ampere(&p, &pt, Order::Gradient).unwrap().grad;
            let f = |x: &Vector3<f64>| prism_field_per_ampere(&p, x).unwrap();
            let fd = fd4(f, &pt, 1e-7);
            assert!((g - fd).norm() <= 1e-6 * g.norm(), "{g} {fd}");
        }
    }

    #[test]
    fn analytic_second_derivatives_match_finite_differences() {
        let p = prism([1e-4, 0.0, -5e-5], [4e-3, 5e-4, 1e-4], [0.0, 1.0, 0.0]);
        let pt = Vector3::new(3e-4, 1e-4, 3.3e-4);
        let jet = prism_jet_per_ampere(&p, &pt, Order::Hessian).unwrap();
        for i in 0..3 {
            let f = |x: &Vector3<f64>| {
                prism_jet_per_ampere(&p, x, Order::Gradient)
                    .unwrap()
                    .grad
                    .row(i)
                    .transpose()
            };
            let fd = fd4(f, &pt, 1e-7);
            assert!(
                (jet.hess[i] - fd).norm() <= 1e-6 * jet.hess[i].norm().max(1e-30),
                "component {i}: {} vs {fd}",
                jet.hess[i]
            );
        }
    }
}
