use super::EnvError;
use crate::evolve::DynamicParams;

pub const ACTION_DIM: usize = 7;

/// `[min, max]` of each controlled parameter, in `DynamicParams` order.
pub const ACTION_BOUNDS: [(f64, f64); ACTION_DIM] = [
    (0.5, 0.9),
    (0.1, 0.5),
    (0.05, 0.5),
    (0.01, 0.2),
    (0.01, 0.11),
    (0.008, 0.2),
    (0.15, 0.25),
];

/// Raw agent action, one component per parameter in `DynamicParams` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionVector(pub [f64; ACTION_DIM]);

impl ActionVector {
    pub fn splat(v: f64) -> Self {
        Self([v; ACTION_DIM])
    }

    /// Clamps each component to `[-1, 1]`; NaN is rejected.
    pub fn clipped(&self) -> Result<Self, EnvError> {
        let mut out = self.0;
        for (index, a) in out.iter_mut().enumerate() {
            if a.is_nan() {
                return Err(EnvError::NonFiniteAction { index });
            }
            *a = a.clamp(-1.0, 1.0);
        }
        Ok(Self(out))
    }
}

/// Affine map of each component from `[-1, 1]` onto its parameter range.
///
/// Written as a convex combination of the endpoints so that -1 and +1 land
/// exactly on the minimum and maximum.
pub fn rescale_action(action: &ActionVector) -> Result<DynamicParams, EnvError> {
    let mut out = [0.0; ACTION_DIM];
    for (index, ((&a, &(lo, hi)), o)) in action.0.iter().zip(&ACTION_BOUNDS).zip(&mut out).enumerate() {
        if !(-1.0..=1.0).contains(&a) {
            return Err(EnvError::OutOfBounds { index, value: a });
        }
        let u = 0.5 * (a + 1.0);
        *o = (1.0 - u) * lo + u * hi;
    }
    Ok(DynamicParams::from_array(out))
}

/// Inverse of [`rescale_action`] for parameters inside the ranges.
pub fn unscale_params(params: &DynamicParams) -> Result<ActionVector, EnvError> {
    let mut out = [0.0; ACTION_DIM];
    for (index, ((&p, &(lo, hi)), o)) in params
        .to_array()
        .iter()
        .zip(&ACTION_BOUNDS)
        .zip(&mut out)
        .enumerate()
    {
        if !(lo..=hi).contains(&p) {
            return Err(EnvError::OutOfBounds { index, value: p });
        }
        *o = 2.0 * (p - lo) / (hi - lo) - 1.0;
    }
    Ok(ActionVector(out))
}
