//! Single-scale Frangi vesselness for bright tubular structures.

use crate::error::{Result, VesselError};
use crate::field::ScalarField;
use crate::scalespace::{eigen_sym2, hessian_field, HessianField};

/// Below this structuredness threshold the Hessian is treated as identically zero.
const FLAT_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrangiParams {
    /// Blobness sensitivity.
    pub beta: f64,
    /// `c` is this fraction of the largest Hessian spectral norm at the scale.
    pub c_factor: f64,
    /// Surround size ratio used to map widths to scales.
    pub alpha: f64,
}

impl Default for FrangiParams {
    fn default() -> Self {
        Self {
            beta: 0.5,
            c_factor: 0.5,
            alpha: 0.9,
        }
    }
}

impl FrangiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(VesselError::param("beta", "must be positive"));
        }
        if !(self.c_factor > 0.0) {
            return Err(VesselError::param("c_factor", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(VesselError::param("alpha", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// `c_factor * max_x ||H(x)||_2`, the spectral norm being `max(|l1|, |l2|)`.
pub fn structuredness_threshold(h: &HessianField, c_factor: f64) -> f64 {
    c_factor * h.eigenvalues().fold(0.0f64, |m, (_, l2)| m.max(l2.abs()))
}

/// Vesselness of one eigenvalue pair (`|l1| <= |l2|`) given `c`.
#[inline]
pub fn vesselness(l1: f64, l2: f64, beta: f64, c: f64) -> f64 {
    if l2 >= 0.0 {
        // l2 > 0 is a dark structure; l2 = 0 forces l1 = 0 and S = 0
        return 0.0;
    }
    let rb = l1 / l2;
    let s2 = l1 * l1 + l2 * l2;
    (-(rb * rb) / (2.0 * beta * beta)).exp() * (1.0 - (-s2 / (2.0 * c * c)).exp())
}

/// Applies the vesselness measure to a precomputed Hessian.
///
/// `c` is recomputed from this Hessian. A flat Hessian (all entries zero)
/// yields an all-zero response.
pub fn frangi_from_hessian(h: &HessianField, params: &FrangiParams) -> ScalarField {
    let c = structuredness_threshold(h, params.c_factor);
    let mut out = ScalarField::new(h.width, h.height);
    if c <= FLAT_EPS {
        return out;
    }
    for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
        let (l1, l2) = eigen_sym2(h.h11[i], h.h12[i], h.h22[i]);
        *o = vesselness(l1, l2, params.beta, c).clamp(0.0, 1.0);
    }
    out
}

/// Frangi response of `f` at scale `sigma`, in `[0, 1]`.
pub fn frangi_response(f: &ScalarField, sigma: f64, params: &FrangiParams) -> Result<ScalarField> {
    params.validate()?;
    let h = hessian_field(f, sigma)?;
    Ok(frangi_from_hessian(&h, params))
}
