//! Branch-free `sin`/`cos` for moderate arguments, written so that loops
//! over it auto-vectorize.

// pi/2 split so that k * PIO2_HI and k * PIO2_MID are exact for k < 2^20
const PIO2_HI: f64 = 1.570_796_326_734_125_614_17e0;
const PIO2_MID: f64 = 6.077_100_506_303_965_976_60e-11;
const PIO2_LO: f64 = 2.022_266_248_795_950_631_54e-21;
const TWO_OVER_PI: f64 = std::f64::consts::FRAC_2_PI;

const S1: f64 = -1.666_666_666_666_663_243_48e-1;
const S2: f64 = 8.333_333_333_322_489_461_24e-3;
const S3: f64 = -1.984_126_982_985_794_931_34e-4;
const S4: f64 = 2.755_731_370_707_006_767_89e-6;
const S5: f64 = -2.505_076_025_340_686_341_95e-8;
const S6: f64 = 1.589_690_995_211_550_102_21e-10;

const C1: f64 = 4.166_666_666_666_660_190_37e-2;
const C2: f64 = -1.388_888_888_887_410_957_49e-3;
const C3: f64 = 2.480_158_728_947_672_941_78e-5;
const C4: f64 = -2.755_731_435_139_066_330_35e-7;
const C5: f64 = 2.087_572_321_298_174_827_90e-9;
const C6: f64 = -1.135_964_755_778_819_482_65e-11;

/// Largest argument handled by the fast path.
pub const FAST_LIMIT: f64 = 5.0e5;

/// `(sin x, cos x)` for `|x| <= FAST_LIMIT`, absolute error about
/// `eps * (1 + |x|)`.
#[inline(always)]
pub fn sincos_reduced(x: f64) -> (f64, f64) {
    let k = (x * TWO_OVER_PI).round();
    let r = ((x - k * PIO2_HI) - k * PIO2_MID) - k * PIO2_LO;
    let z = r * r;
    let s = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    let c = 1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let q = (k as i64) & 3;
    let (s, c) = if q & 1 == 1 { (c, s) } else { (s, c) };
    let sin = if q & 2 == 2 { -s } else { s };
    let cos = if (q + 1) & 2 == 2 { -c } else { c };
    (sin, cos)
}

/// Fills `sin`/`cos` of every element of `x`.
#[inline]
pub fn sincos_slice(x: &[f64], sin: &mut [f64], cos: &mut [f64]) {
    if x.iter().all(|v| v.abs() <= FAST_LIMIT) {
        for ((&v, s), c) in x.iter().zip(sin.iter_mut()).zip(cos.iter_mut()) {
            (*s, *c) = sincos_reduced(v);
        }
    } else {
        for ((&v, s), c) in x.iter().zip(sin.iter_mut()).zip(cos.iter_mut()) {
            (*s, *c) = v.sin_cos();
        }
    }
}
