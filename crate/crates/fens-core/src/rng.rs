//! Seed derivation and deterministic random streams.
//!
//! Every random choice in this crate is drawn from an explicitly seeded
//! [`Stream`]. A training episode owns its streams exclusively, so two
//! episodes whose seeds agree produce bit-identical results within one
//! build of this crate. Cross-language or cross-version bit compatibility
//! is not promised.
//!
//! Sub-seeds are derived with [`mix`], a fixed 64-bit avalanche function,
//! rather than by sequential seeding. This makes every stream a pure
//! function of `(experiment_seed, tag, index)` and keeps pinned streams
//! identical no matter how many other streams vary.

use serde::{Deserialize, Serialize};

/// Increment of the SplitMix64 counter (2^64 / golden ratio, odd).
const PHI: u64 = 0x9e37_79b9_7f4a_7c15;
/// Second odd constant used to decorrelate the index argument of `mix`.
const INDEX_MUL: u64 = 0xd1b5_4a32_d192_ed03;

/// SplitMix64 finalizer (Stafford mix 13). Bijective on u64.
#[inline]
pub fn avalanche(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a sub-seed from an experiment seed, a stream tag, and an index.
///
/// This is the repo's one seed-derivation function; it is frozen. Changing
/// it invalidates every cached artifact.
#[inline]
pub fn mix(seed: u64, tag: u64, index: u64) -> u64 {
    avalanche(seed ^ avalanche(tag.wrapping_mul(PHI) ^ index.wrapping_mul(INDEX_MUL)))
}

/// Stream tags used by this workspace. Tags namespace the sub-seeds derived
/// from a single experiment seed; every tag must be distinct.
pub mod tags {
    pub const INIT: u64 = 0x01;
    pub const BATCH_ORDER: u64 = 0x02;
    pub const AUGMENTATION: u64 = 0x03;
    /// Synthetic dataset: per-class cluster centers.
    pub const SYNTH_CENTER: u64 = 0x12;
    /// Synthetic dataset: per-example noise, one stream per class.
    pub const SYNTH_NOISE: u64 = 0x13;
    /// Orchestrator: dataset generation seed derived from the experiment seed.
    pub const DATASET: u64 = 0x14;
    /// Orchestrator: train/test split seed derived from the experiment seed.
    pub const SPLIT: u64 = 0x15;
    /// Corruption kinds; the index encodes `(kind, severity)`.
    pub const CORRUPTION: u64 = 0x20;
    /// Orchestrator: bootstrap-curve seed derived from the experiment seed.
    pub const BOOTSTRAP: u64 = 0x21;
    /// Orchestrator: churn pair-sampling seed derived from the experiment seed.
    pub const PAIRS: u64 = 0x22;
}

/// Which sources of training stochasticity vary across ensemble members.
///
/// Streams not listed by a mode are pinned: their sub-seed is the same for
/// every member. `None` pins everything and exists as a diagnostic mode in
/// which all members are identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Init,
    BatchOrder,
    DataAug,
    InitBatchOrder,
    AllSources,
    None,
}

impl AblationMode {
    pub fn varies_init(self) -> bool {
        matches!(
            self,
            AblationMode::Init | AblationMode::InitBatchOrder | AblationMode::AllSources
        )
    }

    pub fn varies_batch_order(self) -> bool {
        matches!(
            self,
            AblationMode::BatchOrder | AblationMode::InitBatchOrder | AblationMode::AllSources
        )
    }

    pub fn varies_augmentation(self) -> bool {
        matches!(self, AblationMode::DataAug | AblationMode::AllSources)
    }

    /// The wire name used in config files and report columns.
    pub fn name(self) -> &'static str {
        match self {
            AblationMode::Init => "init",
            AblationMode::BatchOrder => "batch_order",
            AblationMode::DataAug => "data_aug",
            AblationMode::InitBatchOrder => "init_batch_order",
            AblationMode::AllSources => "all_sources",
            AblationMode::None => "none",
        }
    }

    pub fn all() -> [AblationMode; 6] {
        [
            AblationMode::Init,
            AblationMode::BatchOrder,
            AblationMode::DataAug,
            AblationMode::InitBatchOrder,
            AblationMode::AllSources,
            AblationMode::None,
        ]
    }
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AblationMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationMode::all()
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| crate::Error::InvalidArgument(format!("unknown ablation mode `{s}`")))
    }
}

/// The three isolated seeds driving one training episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedBundle {
    pub init_seed: u64,
    pub batch_order_seed: u64,
    pub augmentation_seed: u64,
    pub member_index: usize,
    pub mode: AblationMode,
}

impl SeedBundle {
    pub fn init_stream(&self) -> Stream {
        Stream::new(self.init_seed)
    }

    pub fn batch_order_stream(&self) -> Stream {
        Stream::new(self.batch_order_seed)
    }

    pub fn augmentation_stream(&self) -> Stream {
        Stream::new(self.augmentation_seed)
    }
}

/// Derive the seed bundle for one ensemble member.
///
/// A stream that varies under `mode` is seeded with `mix(seed, tag, member_index)`;
/// a pinned stream uses index 0. Member 0 therefore receives the same bundle
/// under every mode, which is what lets one base model be shared across all
/// ablations of an experiment.
pub fn derive_bundle(experiment_seed: u64, member_index: usize, mode: AblationMode) -> SeedBundle {
    let idx = |varies: bool| if varies { member_index as u64 } else { 0 };
    SeedBundle {
        init_seed: mix(experiment_seed, tags::INIT, idx(mode.varies_init())),
        batch_order_seed: mix(
            experiment_seed,
            tags::BATCH_ORDER,
            idx(mode.varies_batch_order()),
        ),
        augmentation_seed: mix(
            experiment_seed,
            tags::AUGMENTATION,
            idx(mode.varies_augmentation()),
        ),
        member_index,
        mode,
    }
}

/// Counter-based deterministic random stream (SplitMix64).
///
/// Draw `i` is `avalanche(seed + (i + 1) * PHI)`; the stream is a pure
/// function of its seed and the number of draws taken. `draws()` exposes
/// raw 64-bit consumption so tests can assert that a disabled randomness
/// source takes zero draws.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
    draws: u64,
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            state: seed,
            draws: 0,
            spare_normal: None,
        }
    }

    /// Number of raw 64-bit draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(PHI);
        self.draws += 1;
        avalanche(self.state)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `(0, 1]`; safe to pass to `ln`.
    #[inline]
    fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal draw via Box-Muller; the second value of each pair is
    /// cached, so normals consume one u64 per value on average.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let r = (-2.0 * self.next_open01().ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * self.next_f64();
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform index in `[0, bound)` via the multiply-shift of a full 64-bit
    /// draw. Bias is below `bound / 2^64` and consumes exactly one draw.
    pub fn next_index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.next_index(i + 1);
            slice.swap(i, j);
        }
    }

    /// A fresh permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        self.shuffle(&mut perm);
        perm
    }
}
