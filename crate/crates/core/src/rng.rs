//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a Philox4x32-10 block keyed by
//! the run seed and addressed by `(purpose, lane, counter)`. A particle's
//! noise at step `k` is therefore a pure function of `(seed, particle, k)`,
//! which is what makes the parallel loops schedule-independent.

use rand_core::RngCore;

const MUL0: u32 = 0xD251_1F53;
const MUL1: u32 = 0xCD9E_8D57;
const WEYL0: u32 = 0x9E37_79B9;
const WEYL1: u32 = 0xBB67_AE85;

/// The Philox4x32 bijection with 10 rounds.
#[inline]
pub fn philox4x32_10(mut ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(WEYL0);
            k[1] = k[1].wrapping_add(WEYL1);
        }
        let p0 = u64::from(MUL0) * u64::from(ctr[0]);
        let p1 = u64::from(MUL1) * u64::from(ctr[2]);
        ctr = [
            ((p1 >> 32) as u32) ^ ctr[1] ^ k[0],
            p1 as u32,
            ((p0 >> 32) as u32) ^ ctr[3] ^ k[1],
            p0 as u32,
        ];
    }
    ctr
}

/// What a stream is used for. Distinct purposes never share counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Motion = 1,
    Resolution = 2,
    Initial = 3,
    Oracle = 4,
    Coupling = 5,
    Transform = 6,
}

/// A short random stream addressed by `(seed, purpose, lane, counter)`.
///
/// Each stream can hand out up to 2^24 blocks of 128 bits before wrapping
/// into itself, far more than any single step consumes.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: [u32; 2],
    base: [u32; 3],
    tag: u32,
    block: u32,
    buf: [u32; 4],
    pos: usize,
}

impl CounterRng {
    pub fn new(seed: u64, purpose: Purpose, lane: u32, counter: u64) -> Self {
        CounterRng {
            key: [seed as u32, (seed >> 32) as u32],
            base: [counter as u32, (counter >> 32) as u32, lane],
            tag: (purpose as u32) << 24,
            block: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    /// Writes the first block of the streams of lanes
    /// `first_lane, first_lane + 1, …` into `out`, for [`Self::resume`].
    /// One tight loop over independent lanes is several times faster than
    /// refilling each stream on first use.
    #[inline]
    pub fn first_blocks(seed: u64, purpose: Purpose, first_lane: u32, counter: u64, out: &mut [[u32; 4]]) {
        let key = [seed as u32, (seed >> 32) as u32];
        let tag = (purpose as u32) << 24;
        for (l, o) in out.iter_mut().enumerate() {
            *o = philox4x32_10(
                [counter as u32, (counter >> 32) as u32, first_lane.wrapping_add(l as u32), tag],
                key,
            );
        }
    }

    /// The stream [`Self::new`] returns, with its first block supplied.
    #[inline]
    pub fn resume(seed: u64, purpose: Purpose, lane: u32, counter: u64, first_block: [u32; 4]) -> Self {
        CounterRng {
            key: [seed as u32, (seed >> 32) as u32],
            base: [counter as u32, (counter >> 32) as u32, lane],
            tag: (purpose as u32) << 24,
            block: 1,
            buf: first_block,
            pos: 0,
        }
    }

    /// Kept out of line so the buffered fast path of a resumed stream
    /// stays small enough to inline into particle loops.
    #[cold]
    #[inline(never)]
    fn refill(&mut self) {
        let ctr = [
            self.base[0],
            self.base[1],
            self.base[2],
            self.tag | (self.block & 0x00FF_FFFF),
        ];
        self.buf = philox4x32_10(ctr, self.key);
        self.block = self.block.wrapping_add(1);
        self.pos = 0;
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        if self.pos >= 4 {
            self.refill();
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        rand_core::impls::fill_bytes_via_next(self, dst)
    }
}
