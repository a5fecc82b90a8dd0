//! Path-keyed random streams.
//!
//! Every node of the recursion tree is addressed by an [`IndexPath`]. The
//! noise a node consumes is produced by a ChaCha8 generator whose 256-bit key
//! is the SHA-256 digest of
//!
//! ```text
//! "mlp-stream-v1" ‖ master seed (32 bytes) ‖ channel byte ‖ len (u64 LE) ‖ path[0] (i64 LE) ‖ …
//! ```
//!
//! so a stream depends only on `(master seed, channel, path)` and never on the
//! order in which nodes are visited or on the thread that visits them.

use std::fmt;
use std::ops::{Add, AddAssign};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

const STREAM_DOMAIN: &[u8] = b"mlp-stream-v1";
const DERIVE_DOMAIN: &[u8] = b"mlp-derive-v1";

/// 2^-53, the spacing of the uniform grid on [0, 1).
const UNIT_53: f64 = 1.0 / (1u64 << 53) as f64;

/// A 256-bit master seed.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MasterSeed(pub [u8; 32]);

impl MasterSeed {
    /// Widens a 64-bit seed to 256 bits with four consecutive SplitMix64
    /// outputs, written little-endian.
    pub fn from_u64(seed: u64) -> Self {
        let mut state = seed;
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        MasterSeed(bytes)
    }

    /// An independent seed for sub-experiment `index` under `label`
    /// (e.g. one seed per Monte Carlo repetition).
    pub fn derive(&self, label: &str, index: u64) -> Self {
        let mut h = Sha256::new();
        h.update(DERIVE_DOMAIN);
        h.update(self.0);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(index.to_le_bytes());
        MasterSeed(h.finalize().into())
    }
}

impl fmt::Debug for MasterSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MasterSeed(")?;
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "…)")
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Separates families of streams that share a path.
///
/// The scheme's own `(U, W)` realizations live on [`Channel::Noise`]; the
/// randomized evaluation functionals used by the statistical checks draw from
/// [`Channel::Functional`], and helper Monte Carlo estimators (moments,
/// reference solutions) from [`Channel::Auxiliary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Channel {
    Noise = 0,
    Functional = 1,
    Auxiliary = 2,
}

/// A multi-index θ addressing one independent realization.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexPath(Vec<i64>);

impl IndexPath {
    /// The root path `[0]`.
    pub fn root() -> Self {
        IndexPath(vec![0])
    }

    pub fn from_slice(elements: &[i64]) -> Self {
        IndexPath(elements.to_vec())
    }

    pub fn elements(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Returns `θ ‖ (level, index)`.
    pub fn child(&self, level: i64, index: i64) -> Self {
        let mut p = self.clone();
        p.push_pair(level, index);
        p
    }

    pub fn push(&mut self, value: i64) {
        self.0.push(value);
    }

    pub fn push_pair(&mut self, level: i64, index: i64) {
        self.0.push(level);
        self.0.push(index);
    }

    pub fn truncate(&mut self, len: usize) {
        self.0.truncate(len);
    }
}

impl From<Vec<i64>> for IndexPath {
    fn from(v: Vec<i64>) -> Self {
        IndexPath(v)
    }
}

/// Digest identifying one stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub digest: [u8; 32],
}

impl StreamKey {
    pub fn new(seed: &MasterSeed, path: &IndexPath, channel: Channel) -> Self {
        let mut h = Sha256::new();
        h.update(STREAM_DOMAIN);
        h.update(seed.0);
        h.update([channel as u8]);
        h.update((path.len() as u64).to_le_bytes());
        for e in path.elements() {
            h.update(e.to_le_bytes());
        }
        StreamKey {
            digest: h.finalize().into(),
        }
    }
}

/// Number of scalar uniform and standard-normal realizations consumed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawCounter {
    pub normals: u64,
    pub uniforms: u64,
}

impl DrawCounter {
    pub fn total(&self) -> u64 {
        self.normals + self.uniforms
    }

    pub fn merge(&mut self, other: &DrawCounter) {
        *self += *other;
    }
}

impl Add for DrawCounter {
    type Output = DrawCounter;

    fn add(self, rhs: DrawCounter) -> DrawCounter {
        DrawCounter {
            normals: self.normals + rhs.normals,
            uniforms: self.uniforms + rhs.uniforms,
        }
    }
}

impl AddAssign for DrawCounter {
    fn add_assign(&mut self, rhs: DrawCounter) {
        self.normals += rhs.normals;
        self.uniforms += rhs.uniforms;
    }
}

/// Sequential generator state for one stream. Not shared between threads.
#[derive(Clone, Debug)]
pub struct StreamState {
    rng: ChaCha8Rng,
}

impl StreamState {
    pub fn from_key(key: StreamKey) -> Self {
        StreamState {
            rng: ChaCha8Rng::from_seed(key.digest),
        }
    }

    #[inline]
    fn next_53(&mut self) -> u64 {
        self.rng.next_u64() >> 11
    }

    /// One uniform on [0, 1) built from the top 53 bits of a generator word.
    #[inline]
    pub fn uniform(&mut self, ledger: &mut DrawCounter) -> f64 {
        ledger.uniforms += 1;
        self.next_53() as f64 * UNIT_53
    }

    /// One standard normal by inversion of a uniform on the open interval.
    #[inline]
    pub fn normal(&mut self, ledger: &mut DrawCounter) -> f64 {
        ledger.normals += 1;
        let u = (self.next_53() as f64 + 0.5) * UNIT_53;
        standard_normal_quantile(u)
    }

    /// Overwrites `out` with i.i.d. standard normals.
    pub fn fill_normals(&mut self, out: &mut [f64], ledger: &mut DrawCounter) {
        for o in out.iter_mut() {
            *o = self.normal(ledger);
        }
    }

    pub fn normal_vec(&mut self, d: usize, ledger: &mut DrawCounter) -> Vec<f64> {
        let mut v = vec![0.0; d];
        self.fill_normals(&mut v, ledger);
        v
    }
}

#[inline]
fn standard_normal_quantile(p: f64) -> f64 {
    // Normal::standard() cannot fail.
    thread_local!(static STD: Normal = Normal::standard());
    STD.with(|n| n.inverse_cdf(p))
}

/// Stream on the noise channel for `path`.
pub fn derive_stream(seed: &MasterSeed, path: &IndexPath) -> StreamState {
    derive_stream_on(seed, path, Channel::Noise)
}

pub fn derive_stream_on(seed: &MasterSeed, path: &IndexPath, channel: Channel) -> StreamState {
    debug_assert!(!path.is_empty(), "stream paths are non-empty");
    StreamState::from_key(StreamKey::new(seed, path, channel))
}

pub fn draw_uniform(stream: &mut StreamState, ledger: &mut DrawCounter) -> f64 {
    stream.uniform(ledger)
}

pub fn draw_normal_vec(stream: &mut StreamState, d: usize, ledger: &mut DrawCounter) -> Vec<f64> {
    stream.normal_vec(d, ledger)
}
