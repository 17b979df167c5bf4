//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use atomchip::geometry::WirePrism;
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// Gauss-Kronrod 7/15 on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> Vector3<f64>>(f: &F, a: f64, b: f64) -> (Vector3<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive Gauss-Kronrod integration of a vector function with an
/// absolute tolerance.
pub fn integrate<F: Fn(f64) -> Vector3<f64>>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Vector3<f64> {
    let (k, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return k;
    }
    let m = 0.5 * (a + b);
    integrate(f, a, m, 0.5 * tol, depth - 1) + integrate(f, m, b, 0.5 * tol, depth - 1)
}

/// Integrates with a tolerance relative to a coarse first estimate.
pub fn integrate_rel<F: Fn(f64) -> Vector3<f64>>(f: &F, a: f64, b: f64, rel: f64) -> Vector3<f64> {
    let (coarse, _) = gk15(f, a, b);
    let tol = (rel * coarse.norm()).max(1e-300);
    integrate(f, a, b, tol, 40)
}

/// Biot-Savart field per ampere of a prism by nested adaptive quadrature of
/// the volume integral (mu0 J / 4 pi) ∫ l x (r - r') / |r - r'|^3 dV'.
pub fn prism_field_quadrature(prism: &WirePrism, point: &Vector3<f64>, rel: f64) -> Vector3<f64> {
    // Orthonormal cross-section axes (any choice works for the integral).
    let l = prism.direction;
    let mut h = Vector3::z() - l * l.z;
    if h.norm() < 1e-8 {
        h = Vector3::x() - l * l.x;
    }
    let h = h.normalize();
    let w = h.cross(&l);
    let density = 1e-7 / (prism.width * prism.height);
    let integrand = |s: f64, t: f64, q: f64| {
        let src = prism.center + l * s + w * t + h * q;
        let d = point - src;
        let r = d.norm();
        l.cross(&d) / (r * r * r)
    };
    let inner_rel = rel * 1e-2;
    let over_h = |s: f64, t: f64| {
        integrate_rel(
            &|q| integrand(s, t, q),
            -0.5 * prism.height,
            0.5 * prism.height,
            inner_rel,
        )
    };
    let over_w = |s: f64| {
        integrate_rel(&|t| over_h(s, t), -0.5 * prism.width, 0.5 * prism.width, inner_rel)
    };
    integrate_rel(&over_w, -0.5 * prism.length, 0.5 * prism.length, rel * 1e-1) * density
}

/// Field per ampere of a thin straight segment of length `length`, seen at
/// perpendicular distance `d` from its midpoint: mu0 (sin t1 + sin t2) / (4 pi d).
pub fn finite_wire_field(length: f64, d: f64) -> f64 {
    let s = 0.5 * length / (0.25 * length * length + d * d).sqrt();
    1e-7 * 2.0 * s / d
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Random prism and a point at least half a cross-section outside it.
pub fn random_exterior_case(rng: &mut ChaCha8Rng) -> (WirePrism, Vector3<f64>) {
    let dir = loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n < 1.0 {
            break v / n;
        }
    };
    let prism = WirePrism {
        center: Vector3::new(rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3)),
        length: log_uniform(rng, 0.5e-3, 10e-3),
        width: log_uniform(rng, 5e-6, 0.5e-3),
        height: log_uniform(rng, 5e-6, 0.2e-3),
        direction: dir,
        channel: 0,
    };
    let size = prism.width.max(prism.height);
    let reach = prism.length;
    let point = loop {
        let p = prism.center
            + Vector3::new(rng.gen_range(-reach..reach), rng.gen_range(-reach..reach), rng.gen_range(-reach..reach));
        // Keep a clearance of half a cross-section from the conductor.
        let q = p - prism.center;
        let ql = q.dot(&dir).abs() - 0.5 * prism.length;
        let qt = (q - dir * q.dot(&dir)).norm() - 0.71 * size;
        if ql.max(qt) > 0.5 * size {
            break p;
        }
    };
    (prism, point)
}

/// Curl per ampere of an open prism's Biot-Savart field at an exterior point.
///
/// A segment that starts and stops carries `div J != 0` on its end faces, so
/// outside the conductor `curl B = grad(div A)` with
/// `div A = (mu0 / 4 pi) ∫ (div' J) / |r - r'| dV'`. Current enters through
/// the start face and leaves through the end face, each spread uniformly.
pub fn open_prism_curl(prism: &WirePrism, point: &Vector3<f64>, rel: f64) -> Vector3<f64> {
    let l = prism.direction;
    let mut h = Vector3::z() - l * l.z;
    if h.norm() < 1e-8 {
        h = Vector3::x() - l * l.x;
    }
    let h = h.normalize();
    let w = h.cross(&l);
    let face = |centre: Vector3<f64>| {
        let pull = |t: f64, q: f64| {
            let d = point - (centre + w * t + h * q);
            let r = d.norm();
            d / (r * r * r)
        };
        let over_h = |t: f64| integrate_rel(&|q| pull(t, q), -0.5 * prism.height, 0.5 * prism.height, rel * 1e-2);
        integrate_rel(&over_h, -0.5 * prism.width, 0.5 * prism.width, rel) / (prism.width * prism.height)
    };
    let start = face(prism.center - l * (0.5 * prism.length));
    let end = face(prism.center + l * (0.5 * prism.length));
    // grad(1/|r - r'|) = -(r - r') / |r - r'|^3; the start face is a source
    // of current, the end face a sink.
    (end - start) * 1e-7
}

/// Curl of a field from its gradient `g[(i, j)] = dB_i/dx_j`.
pub fn curl_of(g: &nalgebra::Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(g[(2, 1)] - g[(1, 2)], g[(0, 2)] - g[(2, 0)], g[(1, 0)] - g[(0, 1)])
}
