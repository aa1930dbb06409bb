//! Keyed pseudorandom vocabulary partition and per-position polarity.
//!
//! Generator and detector must rebuild the same partition from nothing but
//! the key and the preceding tokens, so every step here is defined at the
//! bit level:
//!
//! 1. **Key digest.** `d = u64::from_le_bytes(SHA-256(key_bytes)[0..8])`.
//! 2. **Context absorption.** Starting from `s = d`, for each of the last
//!    `h` token ids `t` (oldest first):
//!    `s ^= t as u64; s = s * 0x9E37_79B9_7F4A_7C15 (wrapping); s ^= s >> 29`.
//! 3. **Finalize.** `seed = mix64(s)` where `mix64` is the splitmix64
//!    avalanche: `z = (z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9;
//!    z = (z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB; z ^ (z >> 31)`.
//! 4. **Stream.** A [`SplitMix64`] generator is seeded with `seed`. Each
//!    draw adds `0x9E37_79B9_7F4A_7C15` to the state and returns
//!    `mix64(state)`. Uniform reals are `(x >> 11) * 2^-53`; bounded
//!    integers use Lemire's multiply-shift with rejection.
//! 5. **Partition.** With `k = floor(gamma * |V| + 0.5)`, start from the
//!    identity permutation `[0, |V|)` and run the first `k` steps of a
//!    forward Fisher–Yates shuffle: for `i in 0..k`, draw
//!    `j = i + below(|V| - i)` and swap `i, j`. `list1` is `perm[..k]` and
//!    `list2` is `perm[k..]`, both in array order.
//! 6. **Polarity.** Under `PseudoRandom(rho)` exactly one more uniform `u`
//!    is drawn after the partition; the position is positive iff `u < rho`.
//!    The other policies are functions of the position index alone.
//!
//! Positive positions name `list1` green; negative positions name `list2`
//! green. `list1` is the δ-boosted set at every position.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, WatermarkError};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// splitmix64 stream generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, n)`. `n` must be nonzero.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        let mut low = m as u64;
        if low < n {
            let threshold = n.wrapping_neg() % n;
            while low < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }
}

/// Secret key material. Compared and hashed as raw bytes.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct WatermarkKey(Vec<u8>);

impl WatermarkKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(WatermarkError::params("key", "key must not be empty"));
        }
        Ok(Self(bytes))
    }

    pub fn from_hex(hex_str: &str) -> Result<Self> {
        let bytes =
            hex::decode(hex_str.trim()).map_err(|e| WatermarkError::params("key", format!("invalid hex: {e}")))?;
        Self::new(bytes)
    }

    /// Deterministic 32-byte key for simulations.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let bytes: Vec<u8> = (0..4).flat_map(|_| rng.next_u64().to_le_bytes()).collect();
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    fn digest(&self) -> u64 {
        let hash = Sha256::digest(&self.0);
        let mut head = [0u8; 8];
        head.copy_from_slice(&hash[..8]);
        u64::from_le_bytes(head)
    }
}

impl fmt::Debug for WatermarkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WatermarkKey({} bytes)", self.0.len())
    }
}

impl TryFrom<String> for WatermarkKey {
    type Error = WatermarkError;
    fn try_from(s: String) -> Result<Self> {
        Self::from_hex(&s)
    }
}

impl From<WatermarkKey> for String {
    fn from(k: WatermarkKey) -> String {
        k.to_hex()
    }
}

/// `floor(x + 0.5)` for nonnegative `x`.
#[inline]
pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionParams {
    pub gamma: f64,
    pub vocab_size: usize,
    pub context_width: usize,
}

impl PartitionParams {
    pub fn new(gamma: f64, vocab_size: usize, context_width: usize) -> Result<Self> {
        let p = Self {
            gamma,
            vocab_size,
            context_width,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(WatermarkError::params("gamma", "must lie in (0, 1)"));
        }
        if self.vocab_size < 2 {
            return Err(WatermarkError::params("vocab_size", "must be at least 2"));
        }
        if self.vocab_size > u32::MAX as usize {
            return Err(WatermarkError::params("vocab_size", "exceeds u32 token ids"));
        }
        if self.context_width == 0 {
            return Err(WatermarkError::params("context_width", "must be positive"));
        }
        let k = self.list1_len();
        if k < 1 || k > self.vocab_size - 1 {
            return Err(WatermarkError::params(
                "gamma",
                format!("round(gamma * |V|) = {k} must lie in [1, {}]", self.vocab_size - 1),
            ));
        }
        Ok(())
    }

    /// `round(gamma * |V|)`, rounding halves up.
    pub fn list1_len(&self) -> usize {
        round_half_up(self.gamma * self.vocab_size as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// How each scored position is assigned a polarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolarityPolicy {
    /// Every position is positive; this is plain green-list watermarking.
    Unipolar,
    /// One keyed uniform draw per position; positive with probability `rho`.
    PseudoRandom { rho: f64 },
    /// Repeating blocks of `k_pos` positive then `k_neg` negative positions.
    PositionCycle { k_pos: usize, k_neg: usize },
    /// The first `round(rho * total)` positions are positive.
    HardSplit { rho: f64, total: usize },
}

impl PolarityPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PolarityPolicy::Unipolar => Ok(()),
            PolarityPolicy::PseudoRandom { rho } | PolarityPolicy::HardSplit { rho, .. }
                if !(0.0..=1.0).contains(&rho) =>
            {
                Err(WatermarkError::params("rho", "must lie in [0, 1]"))
            }
            PolarityPolicy::PositionCycle { k_pos, k_neg } if k_pos == 0 || k_neg == 0 => {
                Err(WatermarkError::params("policy", "cycle lengths must be positive"))
            }
            PolarityPolicy::HardSplit { total: 0, .. } => {
                Err(WatermarkError::params("policy", "hard split total must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Parses the CLI shorthand: `unipolar`, `pseudo:RHO`, `cycle:KPOS:KNEG`,
    /// `hard:RHO:TOTAL`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || WatermarkError::params("policy", format!("cannot parse `{s}`"));
        let f = |x: &str| x.parse::<f64>().map_err(|_| bad());
        let u = |x: &str| x.parse::<usize>().map_err(|_| bad());
        let policy = match parts.as_slice() {
            ["unipolar"] => PolarityPolicy::Unipolar,
            ["pseudo", rho] => PolarityPolicy::PseudoRandom { rho: f(rho)? },
            ["cycle", kp, kn] => PolarityPolicy::PositionCycle {
                k_pos: u(kp)?,
                k_neg: u(kn)?,
            },
            ["hard", rho, total] => PolarityPolicy::HardSplit {
                rho: f(rho)?,
                total: u(total)?,
            },
            _ => return Err(bad()),
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl fmt::Display for PolarityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolarityPolicy::Unipolar => write!(f, "unipolar"),
            PolarityPolicy::PseudoRandom { rho } => write!(f, "pseudo:{rho}"),
            PolarityPolicy::PositionCycle { k_pos, k_neg } => write!(f, "cycle:{k_pos}:{k_neg}"),
            PolarityPolicy::HardSplit { rho, total } => write!(f, "hard:{rho}:{total}"),
        }
    }
}

/// The partition and roles at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOutcome {
    pub list1: Vec<u32>,
    pub list2: Vec<u32>,
    pub polarity: Polarity,
    pub green_is_list1: bool,
    in_list1: Vec<bool>,
}

impl PartitionOutcome {
    pub fn new(list1: Vec<u32>, list2: Vec<u32>, polarity: Polarity) -> Self {
        let vocab = list1.len() + list2.len();
        let mut in_list1 = vec![false; vocab];
        for &t in &list1 {
            in_list1[t as usize] = true;
        }
        Self {
            list1,
            list2,
            polarity,
            green_is_list1: polarity == Polarity::Positive,
            in_list1,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.in_list1.len()
    }

    /// Whether `token` is in the δ-boosted list. Panics on out-of-range ids.
    #[inline]
    pub fn in_list1(&self, token: u32) -> bool {
        self.in_list1[token as usize]
    }

    /// Boolean mask over the vocabulary marking `list1`.
    pub fn list1_mask(&self) -> &[bool] {
        &self.in_list1
    }
}

/// Hashes the key with the last `h` tokens of `context` into a 64-bit seed.
pub fn derive_seed(key: &WatermarkKey, context: &[u32], h: usize) -> Result<u64> {
    if h == 0 {
        return Err(WatermarkError::params("context_width", "must be positive"));
    }
    if context.len() < h {
        return Err(WatermarkError::InsufficientContext {
            needed: h,
            got: context.len(),
        });
    }
    let mut state = key.digest();
    for &t in &context[context.len() - h..] {
        state ^= u64::from(t);
        state = state.wrapping_mul(GOLDEN_GAMMA);
        state ^= state >> 29;
    }
    Ok(mix64(state))
}

/// Draws the partition from an already seeded stream, consuming exactly
/// `round(gamma * |V|)` bounded draws (plus rejections).
pub fn partition_with_rng(rng: &mut SplitMix64, params: &PartitionParams) -> (Vec<u32>, Vec<u32>) {
    let n = params.vocab_size;
    let k = params.list1_len();
    let mut perm: Vec<u32> = (0..n as u32).collect();
    for i in 0..k {
        let j = i + rng.below((n - i) as u64) as usize;
        perm.swap(i, j);
    }
    let list2 = perm.split_off(k);
    (perm, list2)
}

/// Splits the vocabulary into `(list1, list2)` from a seed.
pub fn partition_vocab(seed: u64, params: &PartitionParams) -> Result<(Vec<u32>, Vec<u32>)> {
    params.validate()?;
    let mut rng = SplitMix64::new(seed);
    Ok(partition_with_rng(&mut rng, params))
}

/// Polarity at `position`. Only `PseudoRandom` consumes a draw from `rng`.
pub fn decide_polarity(rng: &mut SplitMix64, policy: &PolarityPolicy, position: usize) -> Polarity {
    let positive = match *policy {
        PolarityPolicy::Unipolar => true,
        PolarityPolicy::PseudoRandom { rho } => rng.next_f64() < rho,
        PolarityPolicy::PositionCycle { k_pos, k_neg } => position % (k_pos + k_neg) < k_pos,
        PolarityPolicy::HardSplit { rho, total } => position < round_half_up(rho * total as f64),
    };
    if positive {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

/// `(is_green, polarity)` for `token` under `outcome`.
pub fn classify_token(token: u32, outcome: &PartitionOutcome) -> Result<(bool, Polarity)> {
    if token as usize >= outcome.vocab_size() {
        return Err(WatermarkError::InvalidToken {
            token,
            vocab_size: outcome.vocab_size(),
        });
    }
    let green = outcome.in_list1(token) ^ (outcome.polarity == Polarity::Negative);
    Ok((green, outcome.polarity))
}

/// Everything both sides need to rebuild partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatermarkParams {
    pub gamma: f64,
    pub delta: f64,
    pub key: WatermarkKey,
    pub vocab_size: usize,
    #[serde(default = "default_context_width")]
    pub context_width: usize,
    pub policy: PolarityPolicy,
}

fn default_context_width() -> usize {
    1
}

impl WatermarkParams {
    pub fn new(gamma: f64, delta: f64, key: WatermarkKey, vocab_size: usize, policy: PolarityPolicy) -> Result<Self> {
        let p = Self {
            gamma,
            delta,
            key,
            vocab_size,
            context_width: 1,
            policy,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_context_width(mut self, h: usize) -> Result<Self> {
        self.context_width = h;
        self.validate()?;
        Ok(self)
    }

    pub fn with_policy(mut self, policy: PolarityPolicy) -> Result<Self> {
        self.policy = policy;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.partition_params().validate()?;
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(WatermarkError::params("delta", "must be finite and >= 0"));
        }
        self.policy.validate()
    }

    pub fn partition_params(&self) -> PartitionParams {
        PartitionParams {
            gamma: self.gamma,
            vocab_size: self.vocab_size,
            context_width: self.context_width,
        }
    }

    /// Seed, partition and polarity for the token following `context`,
    /// which is the `position`-th scored token.
    pub fn outcome_at(&self, context: &[u32], position: usize) -> Result<PartitionOutcome> {
        let seed = derive_seed(&self.key, context, self.context_width)?;
        let mut rng = SplitMix64::new(seed);
        let (list1, list2) = partition_with_rng(&mut rng, &self.partition_params());
        let polarity = decide_polarity(&mut rng, &self.policy, position);
        Ok(PartitionOutcome::new(list1, list2, polarity))
    }
}
