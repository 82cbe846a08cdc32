//! Keyed, counter-based random streams.
//!
//! Every random quantity in the simulator is addressed by a key path
//! (seed, post, user, purpose, ...) instead of by draw order. Two runs that
//! touch the same keys get the same numbers no matter how events interleave,
//! which is what makes the with/without-intervention arms of a post share
//! draws exactly and keeps parallel scheduling out of the output.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash64(x: u64) -> u64 {
    mix(x.wrapping_add(GAMMA))
}

/// Purpose tags keep unrelated draws on disjoint streams even when the rest
/// of the key path collides.
pub mod purpose {
    pub const DEGREE: u64 = 1;
    pub const ATTRACT: u64 = 2;
    pub const TARGET: u64 = 3;
    pub const AUTHOR: u64 = 4;
    pub const POPULARITY: u64 = 5;
    pub const TREAT_TIME: u64 = 6;
    pub const REPOST_CLOCK: u64 = 7;
    pub const VIEW_COUNT: u64 = 8;
    pub const VIEW_DELAY: u64 = 9;
    pub const VIEW_KEEP: u64 = 10;
    pub const LIKE: u64 = 11;
    pub const REPLY: u64 = 12;
    pub const LABELS: u64 = 13;
}

/// A deterministic stream of draws addressed by a key path.
#[derive(Debug, Clone, Copy)]
pub struct Stream {
    base: u64,
    counter: u64,
}

impl Stream {
    pub fn keyed(parts: &[u64]) -> Stream {
        let mut h: u64 = 0x243F_6A88_85A3_08D3;
        for &p in parts {
            h = hash64(h ^ hash64(p));
        }
        Stream { base: h, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = hash64(self.base.wrapping_add(self.counter.wrapping_mul(GAMMA)));
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1]; safe to pass to ln().
    fn next_open01(&mut self) -> f64 {
        1.0 - self.next_f64()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Exponential with the given rate (mean 1/rate).
    pub fn exp(&mut self, rate: f64) -> f64 {
        -self.next_open01().ln() / rate
    }

    /// Pareto with shape `alpha` and scale `x_min` (support [x_min, inf)).
    pub fn pareto(&mut self, alpha: f64, x_min: f64) -> f64 {
        x_min * self.next_open01().powf(-1.0 / alpha)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_open01();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn lognormal(&mut self, mu: f64, sigma: f64) -> f64 {
        (mu + sigma * self.normal()).exp()
    }
}
