//! f32 ↔ IEEE-754 binary16 conversion with saturation at the largest finite
//! half value.

use half::f16;

/// Largest finite binary16 value.
pub const F16_MAX: f32 = 65504.0;

/// Rounds to nearest (ties to even). Magnitudes above [`F16_MAX`] saturate
/// instead of overflowing to infinity; the flag reports whether that happened.
pub fn f32_to_f16_clamped(x: f32) -> (f16, bool) {
    if x.abs() > F16_MAX {
        (f16::from_f32(F16_MAX.copysign(x)), true)
    } else {
        (f16::from_f32(x), false)
    }
}

/// Converts a slice, returning the half values and the clamp count.
pub fn f32_slice_to_f16(values: &[f32]) -> (Vec<f16>, usize) {
    let mut clamped = 0;
    let out = values
        .iter()
        .map(|&x| {
            let (h, c) = f32_to_f16_clamped(x);
            clamped += c as usize;
            h
        })
        .collect();
    (out, clamped)
}

pub fn f16_slice_to_f32(values: &[f16]) -> Vec<f32> {
    values.iter().map(|h| h.to_f32()).collect()
}
