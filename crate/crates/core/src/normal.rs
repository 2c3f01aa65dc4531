//! Standard normal distribution: CDF, log-CDF and the quantile function.
//!
//! The quantile uses Wichura's AS241 (`PPND16`) rational approximation,
//! followed by one Newton step against an `erfc`-based CDF.

#![allow(clippy::excessive_precision)] // published coefficients, kept digit for digit

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("normal quantile requires p in (0, 1), got {0}")]
pub struct QuantileDomainError(pub f64);

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, `0.5 * erfc(-x / sqrt(2))`.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Phi(x)`, finite far into the lower tail where `cdf` underflows.
pub fn log_cdf(x: f64) -> f64 {
    if x > -37.0 {
        return cdf(x).ln();
    }
    // Mills-ratio series Σ (-1)^k (2k-1)!! / x^{2k}; eight terms reach
    // below 1e-16 relative for |x| >= 37.
    let z2 = x * x;
    let (mut term, mut series) = (1.0, 1.0);
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) / z2;
        series += term;
    }
    -0.5 * z2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
}

const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_45,
    1_971.590_950_306_551_442_7,
    13_731.693_765_509_461_125,
    45_921.953_931_549_871_457,
    67_265.770_927_008_700_853,
    33_430.575_583_588_128_105,
    2_509.080_928_730_122_672_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_252,
    687.187_007_492_057_908_3,
    5_394.196_021_424_751_107_7,
    21_213.794_301_586_595_867,
    39_307.895_800_092_710_61,
    28_729.085_735_721_942_674,
    5_226.495_278_852_545_925,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    0.241_780_725_177_450_611_77,
    0.022_723_844_989_269_184_583_3,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    0.689_767_334_985_100_004_55,
    0.148_103_976_427_480_074_59,
    0.015_198_666_563_616_457_196_6,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    0.296_560_571_828_504_891_23,
    0.026_532_189_526_576_123_093,
    0.001_242_660_947_388_078_438_6,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_69,
    0.136_929_880_922_735_805_31,
    0.014_875_361_290_850_614_852_5,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

#[inline]
fn horner(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc.mul_add(x, c))
}

fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        horner(&C, r) / horner(&D, r)
    } else {
        r -= 5.0;
        horner(&E, r) / horner(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Inverse of the standard normal CDF.
pub fn quantile(p: f64) -> Result<f64, QuantileDomainError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(QuantileDomainError(p));
    }
    let x = ppnd16(p);
    let density = pdf(x);
    if density > 0.0 {
        // Work on the smaller tail so the residual keeps its relative precision.
        let residual = if x < 0.0 {
            cdf(x) - p
        } else {
            (1.0 - p) - cdf(-x)
        };
        Ok(x - residual / density)
    } else {
        Ok(x)
    }
}
