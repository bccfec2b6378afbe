//! Counter-based random streams.
//!
//! Every consumer of randomness addresses a *lane* `(purpose, path, exercise,
//! sub)`. The lane is hashed into a ChaCha stream id under a key derived from
//! the master seed, so draws depend only on `(seed, lane)` and never on the
//! order in which workers run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Truncation,
    Training,
    Evaluation,
    DualOuter,
    DualSub,
    ImproveOuter,
    ImproveSub,
    Test(u16),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Truncation => 1,
            Purpose::Training => 2,
            Purpose::Evaluation => 3,
            Purpose::DualOuter => 4,
            Purpose::DualSub => 5,
            Purpose::ImproveOuter => 6,
            Purpose::ImproveSub => 7,
            Purpose::Test(t) => 0x1000 + t as u64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Lane {
    pub purpose: Purpose,
    pub path: u64,
    pub exercise: u64,
    pub sub: u64,
}

/// Seed plus lane; cheap to copy and derive from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStream {
    pub master_seed: u64,
    pub lane: Lane,
}

impl RngStream {
    pub fn new(master_seed: u64, purpose: Purpose) -> Self {
        Self {
            master_seed,
            lane: Lane {
                purpose,
                path: 0,
                exercise: 0,
                sub: 0,
            },
        }
    }

    pub fn path(mut self, path: u64) -> Self {
        self.lane.path = path;
        self
    }

    pub fn exercise(mut self, exercise: u64) -> Self {
        self.lane.exercise = exercise;
        self
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(mut self, sub: u64) -> Self {
        self.lane.sub = sub;
        self
    }

    pub fn purpose(mut self, purpose: Purpose) -> Self {
        self.lane.purpose = purpose;
        self
    }

    fn key(&self) -> [u8; 32] {
        let mut state = self.master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        key
    }

    fn stream_id(&self, component: u64) -> u64 {
        let mut h = 0x243f_6a88_85a3_08d3u64;
        for word in [
            self.lane.purpose.tag(),
            self.lane.path,
            self.lane.exercise,
            self.lane.sub,
            component,
        ] {
            h ^= word;
            h = mix64(h.wrapping_add(0x9e37_79b9_7f4a_7c15));
        }
        h
    }

    /// Generator for one component of the lane.
    pub fn rng(&self, component: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(self.stream_id(component));
        rng
    }

    /// Draw source for simulating one grid; `antithetic` flips every Gaussian.
    pub fn draws(&self, antithetic: bool) -> Draws {
        Draws {
            timing: self.rng(0),
            gauss: self.rng(1),
            sign: if antithetic { -1.0 } else { 1.0 },
        }
    }
}

/// Independent master seed for the `index`-th unit of work under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut state = seed ^ mix64(index.wrapping_add(0x5851_f42d_4c95_7f2d));
    splitmix64(&mut state)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    mix64(*state)
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random inputs for one simulated grid.
///
/// Arrival and jump randomness comes from the timing generator, Gaussian
/// increments from a separate generator. Two grids built from the same lane
/// with opposite signs therefore consume identical timing draws and mirrored
/// Gaussians, which is the antithetic pairing.
pub struct Draws {
    timing: ChaCha8Rng,
    gauss: ChaCha8Rng,
    sign: f64,
}

impl Draws {
    #[inline]
    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.timing)
    }

    /// Uniform on `[0, 1)` from the timing generator.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.timing.random::<f64>()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.gauss);
        self.sign * z
    }

    #[inline]
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let dist = Poisson::new(mean).expect("finite positive mean");
        dist.sample(&mut self.timing) as u64
    }

    pub fn is_antithetic(&self) -> bool {
        self.sign < 0.0
    }
}
