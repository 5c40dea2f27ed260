//! Redness, structural and combined vessel maps, and fusion over widths.

use crate::error::{Result, VesselError};
use crate::field::{ensure_same_dims, ScalarField};
use crate::frangi::{frangi_response, FrangiParams};
use crate::scalespace::ScaleParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaParams {
    pub gamma_r: f64,
    pub gamma_s: f64,
    pub gamma_c: f64,
}

impl GammaParams {
    pub fn new(gamma_r: f64, gamma_s: f64, gamma_c: f64) -> Result<Self> {
        for (name, g) in [("gamma_r", gamma_r), ("gamma_s", gamma_s), ("gamma_c", gamma_c)] {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(VesselError::param(name, format!("{g} must be finite and >= 0")));
            }
        }
        Ok(Self {
            gamma_r,
            gamma_s,
            gamma_c,
        })
    }
}

/// `v^gamma` with `0^gamma = 0` for every gamma, including zero.
#[inline]
pub fn gamma_correct(v: f64, gamma: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v.powf(gamma).min(1.0)
    }
}

fn gamma_map(f: &ScalarField, gamma: f64) -> ScalarField {
    f.map(|v| gamma_correct(v, gamma))
}

fn enhanced(f: &ScalarField, width: u32, frangi: &FrangiParams, gamma: f64) -> Result<ScalarField> {
    if width == 0 {
        return Err(VesselError::param("width", "must be at least 1"));
    }
    let sigma = ScaleParams::new(frangi.alpha)?.scale_for(width as f64);
    Ok(gamma_map(&frangi_response(f, sigma, frangi)?, gamma))
}

/// `V_r(w)`: Frangi response of the inverted, equalized green channel at
/// the scale matched to `width`, gamma corrected.
pub fn redness_map(
    i_g: &ScalarField,
    width: u32,
    frangi: &FrangiParams,
    gamma_r: f64,
) -> Result<ScalarField> {
    enhanced(i_g, width, frangi, gamma_r)
}

/// `V_s(w)`: the same operator applied to the vessel probability map.
pub fn structural_map(
    p_n: &ScalarField,
    width: u32,
    frangi: &FrangiParams,
    gamma_s: f64,
) -> Result<ScalarField> {
    enhanced(p_n, width, frangi, gamma_s)
}

/// `V_c = (V_r * V_s)^gamma_c`.
pub fn combined_map(v_r: &ScalarField, v_s: &ScalarField, gamma_c: f64) -> Result<ScalarField> {
    v_r.zip_map(v_s, |r, s| gamma_correct(r * s, gamma_c))
}

/// Pointwise maximum over the per-width maps.
pub fn fuse_over_widths<'a, I>(maps: I) -> Result<ScalarField>
where
    I: IntoIterator<Item = &'a ScalarField>,
{
    let mut iter = maps.into_iter();
    let mut acc = iter
        .next()
        .ok_or_else(|| VesselError::param("widths", "cannot fuse an empty set of maps"))?
        .clone();
    for m in iter {
        ensure_same_dims(acc.dims(), m.dims())?;
        for (a, &b) in acc.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *a = a.max(b);
        }
    }
    Ok(acc)
}
