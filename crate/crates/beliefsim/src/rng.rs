//! Counter-based random numbers.
//!
//! Every draw is a pure function of (seed, path, step, channel), so path
//! ensembles are reproducible bit-for-bit under any scheduling, parameter
//! sweeps can reuse identical noise, and no generator state is shared
//! between workers.
//!
//! The block function is Philox4x64-10. One block is consumed per
//! (step, channel); a Gaussian draw uses the first two words of the block
//! through Box-Muller.

const PHILOX_M0: u64 = 0xD2E7_470E_E14C_6C93;
const PHILOX_M1: u64 = 0xCA5A_8263_9512_1157;
const PHILOX_W0: u64 = 0x9E37_79B9_7F4A_7C15;
const PHILOX_W1: u64 = 0xBB67_AE85_84CA_A73B;

#[inline(always)]
fn mul_hi_lo(a: u64, b: u64) -> (u64, u64) {
    let wide = (a as u128) * (b as u128);
    ((wide >> 64) as u64, wide as u64)
}

/// Ten-round Philox 4x64 block function.
#[inline]
pub fn philox4x64(counter: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let mut c = counter;
    let mut k = key;
    for _ in 0..10 {
        let (hi0, lo0) = mul_hi_lo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mul_hi_lo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
        k[0] = k[0].wrapping_add(PHILOX_W0);
        k[1] = k[1].wrapping_add(PHILOX_W1);
    }
    c
}

/// Noise channels used by the simulators. Channels 0..=2 are per-step
/// Brownian/uniform draws; 3..=5 are consumed once at path start for
/// stationary initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    DividendShock = 0,
    SignalShock = 1,
    DriftShock = 2,
    InitTruth = 3,
    InitEstimate = 4,
    InitSpread = 5,
}

/// Stateless stream of draws for one path.
#[derive(Debug, Clone, Copy)]
pub struct PathStream {
    key: [u64; 2],
}

impl PathStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        PathStream {
            key: [seed, path_index],
        }
    }

    #[inline(always)]
    fn block(&self, step: u64, channel: Channel) -> [u64; 4] {
        philox4x64([step, channel as u64, 0, 0], self.key)
    }

    /// Uniform in (0, 1] from the first word (never zero, safe under log).
    #[inline(always)]
    pub fn uniform(&self, step: u64, channel: Channel) -> f64 {
        let b = self.block(step, channel);
        (((b[0] >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller on the block's first two words.
    #[inline(always)]
    pub fn normal(&self, step: u64, channel: Channel) -> f64 {
        let b = self.block(step, channel);
        let u1 = (((b[0] >> 11) + 1) as f64) * (1.0 / 9007199254740992.0);
        let u2 = ((b[1] >> 11) as f64) * (1.0 / 9007199254740992.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
