//! NV-axis geometry, Zeeman conversion and lab-frame vector reconstruction.
//!
//! Frequencies are in hertz and fields in tesla throughout. Only the lower
//! (m_s = -1) branch is tracked; the upper branch is its mirror about `D`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const INV_SQRT3: f64 = 0.577_350_269_189_625_8;
const SQRT3_OVER_4: f64 = 0.433_012_701_892_219_3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NvError {
    #[error("projection {projection} T pushes the lower resonance to or below zero")]
    OutOfBand { projection: f64 },
    #[error("negative Zeeman split {0} Hz")]
    NegativeSplit(f64),
    #[error(
        "ambiguous bias signs: best {best:?} (residual {best_residual} T) vs {second:?} (residual {second_residual} T)"
    )]
    AmbiguousSigns {
        best: [i8; 4],
        best_residual: f64,
        second: [i8; 4],
        second_residual: f64,
    },
    #[error("invalid physical constants: {0}")]
    InvalidConstants(&'static str),
}

/// Zero-field splitting, gyromagnetic ratio and ħ/(g_e μ_B).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Zero-field splitting, Hz.
    pub d: f64,
    /// NV gyromagnetic ratio, Hz/T.
    pub gamma: f64,
    /// Inverse electron gyromagnetic ratio, T·s.
    pub hbar_over_ge_mub: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            d: 2.87e9,
            gamma: 28e9,
            hbar_over_ge_mub: 1.0 / 1.760_859_6e11,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<(), NvError> {
        if !(self.d > 0.0 && self.gamma > 0.0 && self.hbar_over_ge_mub > 0.0) {
            return Err(NvError::InvalidConstants("constants must be strictly positive"));
        }
        if !(2.8e9..=2.95e9).contains(&self.d) {
            return Err(NvError::InvalidConstants("D outside [2.8, 2.95] GHz"));
        }
        if (self.gamma / 28e9 - 1.0).abs() > 0.05 {
            return Err(NvError::InvalidConstants("gamma more than 5% away from 28 GHz/T"));
        }
        Ok(())
    }

    /// Field range (T) over which the lower branch stays positive.
    pub fn max_projection(&self) -> f64 {
        self.d / self.gamma
    }
}

/// The four ⟨111⟩ NV axes in the lab frame of a (100)-cut diamond.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientationSet {
    pub axes: [[f64; 3]; 4],
}

impl Default for OrientationSet {
    fn default() -> Self {
        Self::standard()
    }
}

impl OrientationSet {
    /// Order: [111], [1-1-1], [-11-1], [-1-11].
    pub const LABELS: [&'static str; 4] = ["111", "1-1-1", "-11-1", "-1-11"];

    pub fn standard() -> Self {
        let s = INV_SQRT3;
        Self {
            axes: [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]],
        }
    }

    /// Relabel the axes: output axis `i` is input axis `perm[i]`.
    pub fn permuted(&self, perm: [usize; 4]) -> Self {
        Self {
            axes: perm.map(|j| self.axes[j]),
        }
    }
}

/// Lab-frame magnetic field, tesla.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldVector {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl FieldVector {
    pub const ZERO: FieldVector = FieldVector { bx: 0.0, by: 0.0, bz: 0.0 };

    pub const fn new(bx: f64, by: f64, bz: f64) -> Self {
        Self { bx, by, bz }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.bx, self.by, self.bz]
    }

    pub fn dot(self, v: [f64; 3]) -> f64 {
        self.bx * v[0] + self.by * v[1] + self.bz * v[2]
    }

    pub fn norm(self) -> f64 {
        (self.bx * self.bx + self.by * self.by + self.bz * self.bz).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.bx.is_finite() && self.by.is_finite() && self.bz.is_finite()
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.bx * k, self.by * k, self.bz * k)
    }
}

impl std::ops::Add for FieldVector {
    type Output = FieldVector;
    fn add(self, o: FieldVector) -> FieldVector {
        FieldVector::new(self.bx + o.bx, self.by + o.by, self.bz + o.bz)
    }
}

impl std::ops::Sub for FieldVector {
    type Output = FieldVector;
    fn sub(self, o: FieldVector) -> FieldVector {
        FieldVector::new(self.bx - o.bx, self.by - o.by, self.bz - o.bz)
    }
}

impl std::ops::Neg for FieldVector {
    type Output = FieldVector;
    fn neg(self) -> FieldVector {
        FieldVector::new(-self.bx, -self.by, -self.bz)
    }
}

/// Signed field projections on the four axes, tesla.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionQuad {
    pub p: [f64; 4],
    /// Sign convention applied to each projection, ±1.
    pub sign_pattern: [i8; 4],
}

impl ProjectionQuad {
    /// Quad with signs taken from the values themselves (zero counts as +).
    pub fn from_values(p: [f64; 4]) -> Self {
        Self {
            p,
            sign_pattern: p.map(sign_of),
        }
    }

    pub fn sum(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn permuted(&self, perm: [usize; 4]) -> Self {
        Self {
            p: perm.map(|j| self.p[j]),
            sign_pattern: perm.map(|j| self.sign_pattern[j]),
        }
    }
}

/// Lower-branch resonance per orientation, hertz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceQuad {
    pub nu_lower: [f64; 4],
}

impl ResonanceQuad {
    /// Lower-branch resonances of a field, `D - γ|p_i|`.
    pub fn from_field(b: FieldVector, axes: &OrientationSet, c: &PhysicalConstants) -> Result<Self, NvError> {
        let q = project_field(b, axes);
        let mut nu_lower = [0.0; 4];
        for (nu, &p) in nu_lower.iter_mut().zip(&q.p) {
            *nu = resonance_pair(p, c)?.0;
        }
        Ok(Self { nu_lower })
    }

    /// Unsigned projection magnitudes `(D - ν_i)/γ`, tesla.
    pub fn magnitudes(&self, c: &PhysicalConstants) -> [f64; 4] {
        self.nu_lower.map(|nu| (c.d - nu) / c.gamma)
    }

    /// Zeeman split `2(D - ν_i)` implied by mirror symmetry.
    pub fn splits(&self, c: &PhysicalConstants) -> [f64; 4] {
        self.nu_lower.map(|nu| 2.0 * (c.d - nu))
    }
}

fn sign_of(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

/// Project a lab-frame field onto the four NV axes.
pub fn project_field(b: FieldVector, axes: &OrientationSet) -> ProjectionQuad {
    ProjectionQuad::from_values(axes.axes.map(|u| b.dot(u)))
}

/// Lower and upper resonance for a signed projection (linear Zeeman model).
pub fn resonance_pair(p_signed: f64, c: &PhysicalConstants) -> Result<(f64, f64), NvError> {
    let shift = c.gamma * p_signed.abs();
    if !(shift < c.d) {
        return Err(NvError::OutOfBand { projection: p_signed });
    }
    Ok((c.d - shift, c.d + shift))
}

/// Field projection from the m_s = ±1 splitting, `Δν / 2γ`.
pub fn field_from_split(delta_nu: f64, c: &PhysicalConstants) -> Result<f64, NvError> {
    if delta_nu < 0.0 || delta_nu.is_nan() {
        return Err(NvError::NegativeSplit(delta_nu));
    }
    Ok(delta_nu / (2.0 * c.gamma))
}

/// Per-pixel signed projections inheriting the bias signs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedProjections {
    pub quad: ProjectionQuad,
    /// Set where the magnitude exceeds twice the bias projection, i.e. the
    /// local field may have flipped the sign of this projection.
    pub sign_flip: [bool; 4],
}

impl SignedProjections {
    pub fn valid(&self) -> bool {
        !self.sign_flip.iter().any(|&f| f)
    }
}

/// Attach the bias signs to the magnitudes implied by `res`.
pub fn signed_projections(
    res: &ResonanceQuad,
    bias_proj: &ProjectionQuad,
    c: &PhysicalConstants,
) -> SignedProjections {
    let mags = res.magnitudes(c);
    let mut p = [0.0; 4];
    let mut sign_pattern = [1i8; 4];
    let mut sign_flip = [false; 4];
    for i in 0..4 {
        let s = sign_of(bias_proj.p[i]);
        sign_pattern[i] = s;
        p[i] = f64::from(s) * mags[i];
        sign_flip[i] = mags[i] > 2.0 * bias_proj.p[i].abs();
    }
    SignedProjections {
        quad: ProjectionQuad { p, sign_pattern },
        sign_flip,
    }
}

/// Result of inverting the four projections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reconstruction {
    pub b: FieldVector,
    /// `√3/4 · |Σ p_i|`, the part of the quad no field can produce.
    pub residual: f64,
}

/// Lab-frame field from the standard-order projections.
pub fn reconstruct_vector(q: &ProjectionQuad) -> Reconstruction {
    let [p1, p2, p3, p4] = q.p;
    Reconstruction {
        b: FieldVector::new(
            SQRT3_OVER_4 * (p1 + p2 - p3 - p4),
            SQRT3_OVER_4 * (p1 - p2 + p3 - p4),
            SQRT3_OVER_4 * (p1 - p2 - p3 + p4),
        ),
        residual: SQRT3_OVER_4 * (p1 + p2 + p3 + p4).abs(),
    }
}

/// Least-squares inverse for an arbitrary labelling of the tetrahedral axes.
///
/// Uses `Σ u_i u_iᵀ = (4/3) I`, so `b = (3/4) Σ p_i u_i`. For the standard
/// order this is algebraically [`reconstruct_vector`].
pub fn reconstruct_vector_with(q: &ProjectionQuad, axes: &OrientationSet) -> Reconstruction {
    let mut b = [0.0; 3];
    for (p, u) in q.p.iter().zip(&axes.axes) {
        for k in 0..3 {
            b[k] += 0.75 * p * u[k];
        }
    }
    Reconstruction {
        b: FieldVector::from_array(b),
        residual: SQRT3_OVER_4 * q.sum().abs(),
    }
}

/// One candidate sign assignment and its consistency residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignCandidate {
    pub signs: [i8; 4],
    /// `|Σ s_i m_i|`, tesla.
    pub residual: f64,
}

fn pattern(k: usize) -> [i8; 4] {
    // bit 3 is axis 0, so increasing k is lexicographic with + before -
    std::array::from_fn(|i| if (k >> (3 - i)) & 1 == 1 { -1 } else { 1 })
}

/// Score all 16 sign patterns on the magnitudes, best first.
///
/// Ordering: residual, then patterns with `s_1 = +1`, then lexicographic.
pub fn rank_sign_patterns(mags: &[f64; 4]) -> Vec<SignCandidate> {
    let mut all: Vec<(usize, SignCandidate)> = (0..16)
        .map(|k| {
            let signs = pattern(k);
            let residual = signs
                .iter()
                .zip(mags)
                .map(|(&s, &m)| f64::from(s) * m)
                .sum::<f64>()
                .abs();
            (k, SignCandidate { signs, residual })
        })
        .collect();
    all.sort_by(|(ka, a), (kb, b)| a.residual.total_cmp(&b.residual).then(ka.cmp(kb)));
    all.into_iter().map(|(_, c)| c).collect()
}

/// Recover the bias sign pattern from lower-branch resonances alone.
///
/// The global flip `s → -s` leaves the residual unchanged, so only patterns
/// with `s_1 = +1` compete. Fails with [`NvError::AmbiguousSigns`] when the
/// runner-up residual is within 10% of the winner's.
pub fn resolve_bias_signs(
    res: &ResonanceQuad,
    c: &PhysicalConstants,
) -> Result<(ProjectionQuad, FieldVector), NvError> {
    let mags = res.magnitudes(c);
    let ranked: Vec<SignCandidate> = rank_sign_patterns(&mags)
        .into_iter()
        .filter(|cand| cand.signs[0] == 1)
        .collect();
    let (best, second) = (ranked[0], ranked[1]);
    if second.residual - best.residual <= 0.1 * second.residual {
        return Err(NvError::AmbiguousSigns {
            best: best.signs,
            best_residual: best.residual,
            second: second.signs,
            second_residual: second.residual,
        });
    }
    let q = ProjectionQuad {
        p: std::array::from_fn(|i| f64::from(best.signs[i]) * mags[i]),
        sign_pattern: best.signs,
    };
    Ok((q, reconstruct_vector(&q).b))
}
