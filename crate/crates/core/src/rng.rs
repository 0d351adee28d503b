//! Counter-based random number generation.
//!
//! Every random quantity in the toolkit is drawn from a [`Stream`], which is a
//! Philox4x32-10 keystream addressed by `(seed, domain, substream)`. Streams do
//! not share state, so the value of draw `i` on substream `s` does not depend
//! on how many other substreams were consumed, in which order, or on which
//! thread. That is what makes per-cell and per-replicate work reproducible
//! under any schedule.
//!
//! Floating-point conversions are done here rather than through a generic
//! distribution library so that the bit pattern of every draw is pinned to
//! [`GENERATOR_ID`].

/// Name and version of the generator; recorded in every provenance block.
pub const GENERATOR_ID: &str = "philox4x32-10/v1";

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// One application of the Philox4x32 bijection with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// Independent purposes that draw randomness. Each gets its own key so that
/// e.g. size factors and counts never reuse a keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    SizeFactors,
    Counts,
    Bootstrap,
    TsneInit,
    PcaStart,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::SizeFactors => 1,
            Domain::Counts => 2,
            Domain::Bootstrap => 3,
            Domain::TsneInit => 4,
            Domain::PcaStart => 5,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A sequential reader over one Philox substream.
#[derive(Debug, Clone)]
pub struct Stream {
    key: [u32; 2],
    substream: u64,
    block: u64,
    buf: [u32; 4],
    pos: usize,
}

impl Stream {
    pub fn new(seed: u64, domain: Domain, substream: u64) -> Self {
        let k = splitmix64(seed ^ splitmix64(domain.tag()));
        Stream {
            key: [k as u32, (k >> 32) as u32],
            substream,
            block: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    fn refill(&mut self) {
        let ctr = [
            self.block as u32,
            (self.block >> 32) as u32,
            self.substream as u32,
            (self.substream >> 32) as u32,
        ];
        self.buf = philox4x32_10(ctr, self.key);
        self.block += 1;
        self.pos = 0;
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.pos == 4 {
            self.refill();
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    pub fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`; safe to take logarithms of.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by Lemire's multiply-and-reject.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            let m = u128::from(x) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }
}
