//! Closed-form field of a uniformly magnetized rectangular prism.
//!
//! The magnetization is replaced by surface charges `σ = M·n` on the six
//! faces; each face is a uniformly charged rectangle whose field has an
//! elementary antiderivative. Used as an independent check on dipole
//! summation.

use super::StrayError;
use crate::nv::FieldVector;
use crate::MU0_OVER_4PI;

/// `ln(v + sqrt(v² + q))` without cancellation for negative `v`.
fn log_v_plus_r(v: f64, q: f64, r: f64) -> f64 {
    if v >= 0.0 {
        (v + r).ln()
    } else {
        (q / (r - v)).ln()
    }
}

/// ∫∫ (u, v, w)/R³ over the rectangle `[u1,u2] × [v1,v2]` at height `w`.
fn rect_integrals(u: [f64; 2], v: [f64; 2], w: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (iu, &uu) in u.iter().enumerate() {
        for (iv, &vv) in v.iter().enumerate() {
            let sign = if iu == iv { 1.0 } else { -1.0 };
            let r = (uu * uu + vv * vv + w * w).sqrt();
            out[0] -= sign * log_v_plus_r(vv, uu * uu + w * w, r);
            out[1] -= sign * log_v_plus_r(uu, vv * vv + w * w, r);
            out[2] += sign * (uu * vv / (w * r)).atan();
        }
    }
    out
}

/// Field (T) of a prism with the given center, half sizes (m) and
/// magnetization (A/m), evaluated outside the body.
pub fn prism_field_oracle(
    center: [f64; 3],
    half_sizes: [f64; 3],
    magnetization: [f64; 3],
    position: [f64; 3],
) -> Result<FieldVector, StrayError> {
    let rel: [f64; 3] = std::array::from_fn(|k| position[k] - center[k]);
    if (0..3).all(|k| rel[k].abs() <= half_sizes[k]) {
        return Err(StrayError::InsidePrism);
    }
    let mut b = [0.0; 3];
    for k in 0..3 {
        if magnetization[k] == 0.0 {
            continue;
        }
        let (a, c) = ((k + 1) % 3, (k + 2) % 3);
        let u = [rel[a] - half_sizes[a], rel[a] + half_sizes[a]];
        let v = [rel[c] - half_sizes[c], rel[c] + half_sizes[c]];
        for face_sign in [1.0, -1.0] {
            let sigma = face_sign * magnetization[k];
            let w = rel[k] - face_sign * half_sizes[k];
            let i = rect_integrals(u, v, w);
            b[a] += MU0_OVER_4PI * sigma * i[0];
            b[c] += MU0_OVER_4PI * sigma * i[1];
            b[k] += MU0_OVER_4PI * sigma * i[2];
        }
    }
    Ok(FieldVector::from_array(b))
}
