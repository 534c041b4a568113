//! Counter-based pseudo-random numbers with a fully specified algorithm.
//!
//! Every random draw in this crate comes from the SplitMix64 output function
//! evaluated in counter mode, so a `(seed, counter)` pair identifies a draw
//! exactly and streams can be re-created on any platform, in any language:
//!
//! ```text
//! out(seed, k) = mix64(seed + (k + 1) * 0x9E3779B97F4A7C15)   (wrapping u64)
//! mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!           z ^= z >> 27; z *= 0x94D049BB133111EB;
//!           z ^= z >> 31
//! ```
//!
//! This is exactly the SplitMix64 sequence of Steele, Lea & Flood (2014)
//! started at state `seed`. Derived conversions:
//!
//! * uniform in `[0, 1)`: take the top 53 bits, `(out >> 11) * 2⁻⁵³`;
//! * uniform in `(0, 1)`: bin midpoints, `((out >> 11) + 0.5) * 2⁻⁵³`;
//! * standard normal: the inverse normal CDF (Wichura's AS 241, PPND16
//!   rational approximation, |relative error| < 1e-15) applied to an open
//!   uniform draw; no rejection, one draw per variate;
//! * bounded integer in `[0, n)`: rejection against the largest multiple of
//!   `n` below 2⁶⁴, then one modulo (unbiased).
//!
//! Substreams are derived as `seed' = mix64(seed ^ mix64(tag + GAMMA))`,
//! which decorrelates parallel streams deterministically.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic substream derivation (see module docs).
#[inline]
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(GAMMA)))
}

/// SplitMix64 evaluated in counter mode.
#[derive(Clone, Debug)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Independent stream for a labelled sub-task of this stream's seed.
    pub fn substream(&self, tag: u64) -> Self {
        Self::new(derive_seed(self.seed, tag))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let k = self.counter;
        self.counter += 1;
        mix64(self.seed.wrapping_add(k.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    /// Uniform on `[0, 1)` with 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)` (bin midpoints).
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the inverse-CDF transform.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_open01())
    }

    /// Unbiased uniform integer in `[0, n)`.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below requires n > 0");
        if n.is_power_of_two() {
            return self.next_u64() & (n - 1);
        }
        // Accept draws below the largest multiple of n representable in u64.
        let rem = (u64::MAX % n + 1) % n; // 2^64 mod n
        let limit = u64::MAX - rem; // accept x <= limit
        loop {
            let x = self.next_u64();
            if x <= limit {
                return x % n;
            }
        }
    }

    /// `k` distinct indices from `0..n`, sorted ascending.
    ///
    /// Partial Fisher–Yates over the full index pool: positions `0..k` are
    /// filled left to right, each swapping with a uniform pick from the
    /// remaining suffix.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.next_below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        let mut out = pool[..k].to_vec();
        out.sort_unstable();
        out
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        for i in 0..n.saturating_sub(1) {
            let j = i + self.next_below((n - i) as u64) as usize;
            items.swap(i, j);
        }
    }
}

/// Inverse of the standard normal CDF.
///
/// Wichura's algorithm AS 241 (PPND16): three rational approximations, split
/// at |p − ½| ≤ 0.425 and at tail parameter r = √(−ln min(p, 1−p)) ≤ 5.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inverse_normal_cdf requires p in (0,1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

#[inline]
fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    // Horner, highest degree first.
    coeffs
        .iter()
        .rev()
        .fold(0.0, |acc, &c| acc * x + c)
}

// AS 241 PPND16 coefficient tables (central, middle-tail, far-tail), each a
// degree-7 numerator/denominator pair, constant term first. The digits are
// the published ones.
#[allow(clippy::excessive_precision)]
const A: [f64; 8] = [
    3.387_132_872_796_366_608e0,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
#[allow(clippy::excessive_precision)]
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
#[allow(clippy::excessive_precision)]
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34e0,
    4.630_337_846_156_545_295_9e0,
    5.769_497_221_460_691_405_5e0,
    3.647_848_324_763_204_605_04e0,
    1.270_458_252_452_368_382_58e0,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
#[allow(clippy::excessive_precision)]
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87e0,
    1.676_384_830_183_803_849_4e0,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
#[allow(clippy::excessive_precision)]
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2e0,
    5.463_784_911_164_114_369_9e0,
    1.784_826_539_917_291_335_8e0,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
#[allow(clippy::excessive_precision)]
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];
