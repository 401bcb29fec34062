//! Counter-based random numbers.
//!
//! Every random quantity in the crate is drawn from Philox4x32-10
//! (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").  The
//! generator is a keyed bijection on 128-bit counters, so a stream is fully
//! described by `(seed, stream id, block index)` and two implementations of
//! the same constants produce the same bits.
//!
//! Layout of one block:
//! - key   = `(seed & 0xffff_ffff, seed >> 32)`
//! - counter = `(block & 0xffff_ffff, block >> 32, stream, 0)`
//!
//! Each block yields four 32-bit words, read as two 64-bit words
//! `(w0 << 32) | w1` and `(w2 << 32) | w3`.  Uniforms on the open interval
//! (0, 1) take the top 53 bits: `((x >> 11) + 0.5) * 2^-53`.  Standard normals
//! use Box–Muller on consecutive uniform pairs, emitting the cosine branch
//! first and the sine branch second.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;
const PHILOX_ROUNDS: usize = 10;

/// Stream ids used by the library; distinct purposes never share a stream.
pub mod streams {
    pub const FEATURES: u32 = 0;
    pub const LABELS: u32 = 1;
    pub const LABEL_NOISE: u32 = 2;
    pub const MIXTURE_CENTERS: u32 = 3;
    pub const NORMS: u32 = 4;
    pub const INIT: u32 = 16;
    pub const PROBES: u32 = 32;
    pub const PERTURBATIONS: u32 = 33;
    pub const FALLBACK: u32 = 48;
    /// Held-out draws use `HELD_OUT + original stream`.
    pub const HELD_OUT: u32 = 1 << 16;
}

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// One application of the Philox4x32-10 bijection.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..PHILOX_ROUNDS {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Sequential reader over one Philox stream.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: [u32; 2],
    stream: u32,
    block: u64,
    buf: [u64; 2],
    buf_pos: usize,
    spare_normal: Option<f64>,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u32) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            stream,
            block: 0,
            buf: [0; 2],
            buf_pos: 2,
            spare_normal: None,
        }
    }

    fn refill(&mut self) {
        let ctr = [self.block as u32, (self.block >> 32) as u32, self.stream, 0];
        let w = philox4x32_10(ctr, self.key);
        self.buf = [
            (u64::from(w[0]) << 32) | u64::from(w[1]),
            (u64::from(w[2]) << 32) | u64::from(w[3]),
        ];
        self.buf_pos = 0;
        self.block += 1;
    }

    pub fn next_u64(&mut self) -> u64 {
        if self.buf_pos == 2 {
            self.refill();
        }
        let x = self.buf[self.buf_pos];
        self.buf_pos += 1;
        x
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// `+1.0` or `-1.0` with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn fill_normal(&mut self, out: &mut [f64], scale: f64) {
        for x in out {
            *x = scale * self.normal();
        }
    }
}
