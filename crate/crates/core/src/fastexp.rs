//! Branch-free `exp` for the pairwise kernel sums.
//!
//! Written with plain `f64` arithmetic, `mul_add` and bit casts only, so that LLVM can
//! vectorize the lane loops in [`crate::pairwise`]. Results are bit-identical
//! on every target: `mul_add` is exactly rounded everywhere and nothing is reassociated.

#![allow(clippy::excessive_precision)]

const LOG2_E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
// 1.5 * 2^52: adding it rounds to the nearest integer and leaves that
// integer in the low mantissa bits.
const SHIFTER: f64 = 6_755_399_441_055_744.0;
const MIN_ARG: f64 = -700.0;

// Taylor coefficients 1/k!, k = 0..=12.
const C: [f64; 13] = [
    1.0,
    1.0,
    0.5,
    1.666_666_666_666_666_6e-1,
    4.166_666_666_666_666_4e-2,
    8.333_333_333_333_333e-3,
    1.388_888_888_888_889e-3,
    1.984_126_984_126_984e-4,
    2.480_158_730_158_730_2e-5,
    2.755_731_922_398_589e-6,
    2.755_731_922_398_589_3e-7,
    2.505_210_838_544_172e-8,
    2.087_675_698_786_81e-9,
];

/// `exp(y)` for `y <= 0`. Arguments below -700 are clamped (the result is
/// then ~1e-304 rather than an exact underflow). Relative error < 2e-16.
#[inline(always)]
pub fn exp_nonpositive(y: f64) -> f64 {
    let y = if y < MIN_ARG { MIN_ARG } else { y };
    let shifted = y * LOG2_E + SHIFTER;
    let k = shifted - SHIFTER;
    let r = (-k).mul_add(LN2_HI, y);
    let r = (-k).mul_add(LN2_LO, r);
    let mut p = C[12];
    p = p.mul_add(r, C[11]);
    p = p.mul_add(r, C[10]);
    p = p.mul_add(r, C[9]);
    p = p.mul_add(r, C[8]);
    p = p.mul_add(r, C[7]);
    p = p.mul_add(r, C[6]);
    p = p.mul_add(r, C[5]);
    p = p.mul_add(r, C[4]);
    p = p.mul_add(r, C[3]);
    p = p.mul_add(r, C[2]);
    p = p.mul_add(r, C[1]);
    p = p.mul_add(r, C[0]);
    // The low bits of `shifted` hold k in two's complement; adding the bias
    // and shifting into the exponent field discards the shifter's high bits.
    let scale = f64::from_bits(shifted.to_bits().wrapping_add(1023) << 52);
    p * scale
}
