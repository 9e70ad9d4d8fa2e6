//! Words over a finite alphabet, target points and target-length schedules.
//!
//! Positions are 0-based internally. Documentation uses the 1-based
//! convention of the shift-space literature: "letters `k+1, …, k+ℓ_k` of 𝐢"
//! are the slice `letters[k..k + ℓ_k]`. The schedule index `k` starts at 1.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// RNG stream reserved for generating random target points, kept apart from
/// the per-sample streams used by the simulations.
pub(crate) const TARGET_STREAM: u64 = u64::MAX;

/// A finite word over `{0, …, m−1}`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Word {
    letters: Vec<usize>,
    alphabet: usize,
}

impl Word {
    pub fn new(letters: Vec<usize>, alphabet: usize) -> Result<Self> {
        if alphabet == 0 {
            return Err(Error::InvalidInput("alphabet must be non-empty".into()));
        }
        if let Some(&letter) = letters.iter().find(|&&l| l >= alphabet) {
            return Err(Error::LetterOutOfRange { letter, alphabet });
        }
        Ok(Self { letters, alphabet })
    }

    pub fn empty(alphabet: usize) -> Self {
        Self { letters: Vec::new(), alphabet }
    }

    /// `letter` repeated `n` times.
    pub fn repeated(letter: usize, n: usize, alphabet: usize) -> Result<Self> {
        Self::new(vec![letter; n], alphabet)
    }

    /// The word whose letters are the base-`m` digits of `index`, most
    /// significant first, padded to `len`.
    pub fn from_index(mut index: u64, len: usize, alphabet: usize) -> Self {
        let mut letters = vec![0; len];
        for slot in letters.iter_mut().rev() {
            *slot = (index % alphabet as u64) as usize;
            index /= alphabet as u64;
        }
        Self { letters, alphabet }
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Concatenation `self · other`.
    pub fn concat(&self, other: &Word) -> Result<Word> {
        if self.alphabet != other.alphabet {
            return Err(Error::DimensionMismatch { expected: self.alphabet, found: other.alphabet });
        }
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Ok(Word { letters, alphabet: self.alphabet })
    }

    /// The first `n` letters (the whole word if shorter).
    pub fn prefix(&self, n: usize) -> Word {
        Word { letters: self.letters[..n.min(self.len())].to_vec(), alphabet: self.alphabet }
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        other.letters.starts_with(&self.letters)
    }

    /// Length of the longest common prefix, `|𝐢 ∧ 𝐢′|`.
    pub fn common_prefix_len(&self, other: &Word) -> usize {
        self.letters.iter().zip(&other.letters).take_while(|(a, b)| a == b).count()
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word{:?}", self.letters)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.letters.iter().map(|l| l.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    /// `preperiod · period^∞`.
    EventuallyPeriodic { preperiod: Vec<usize>, period: Vec<usize> },
    /// Letters drawn uniformly from a seeded ChaCha stream.
    Random { seed: u64 },
}

/// The centre `𝐣` of the shrinking targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPoint {
    alphabet: usize,
    kind: TargetKind,
}

impl TargetPoint {
    pub fn periodic(preperiod: Vec<usize>, period: Vec<usize>, alphabet: usize) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::InvalidInput("target period must be non-empty".into()));
        }
        Word::new(preperiod.clone(), alphabet)?;
        Word::new(period.clone(), alphabet)?;
        Ok(Self { alphabet, kind: TargetKind::EventuallyPeriodic { preperiod, period } })
    }

    /// The constant sequence `letter^∞`.
    pub fn constant(letter: usize, alphabet: usize) -> Result<Self> {
        Self::periodic(Vec::new(), vec![letter], alphabet)
    }

    pub fn random(seed: u64, alphabet: usize) -> Result<Self> {
        if alphabet == 0 {
            return Err(Error::InvalidInput("alphabet must be non-empty".into()));
        }
        Ok(Self { alphabet, kind: TargetKind::Random { seed } })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    /// `𝐣|_n`, the first `n` letters.
    pub fn truncate(&self, n: usize) -> Word {
        let letters = match &self.kind {
            TargetKind::EventuallyPeriodic { preperiod, period } => (0..n)
                .map(|i| if i < preperiod.len() { preperiod[i] } else { period[(i - preperiod.len()) % period.len()] })
                .collect(),
            TargetKind::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(TARGET_STREAM);
                (0..n).map(|_| rng.random_range(0..self.alphabet)).collect()
            }
        };
        Word { letters, alphabet: self.alphabet }
    }
}

/// A non-decreasing positive integer sequence `ℓ_k`, `k ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum LengthSchedule {
    /// `ℓ_k = ⌈L·k⌉`.
    Linear { rate: f64 },
    /// `ℓ_k = ⌈k^α⌉`, `α ≠ 1`.
    Power { alpha: f64 },
    /// `ℓ_k = max(1, ⌊c·log₂ k⌋)`.
    Log { c: f64 },
    /// `ℓ_k = max(1, ⌈c·log₂ k⌉)`.
    LogCeil { c: f64 },
    /// Listed values; the last one is repeated past the end of the list.
    Explicit { values: Vec<usize> },
}

/// `ℓ_k` together with whether it was extrapolated past an explicit list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleValue {
    pub length: usize,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitKind {
    Zero,
    Finite(f64),
    Infinite,
}

/// Classification of `lim ℓ_k / k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleLimit {
    pub kind: LimitKind,
    /// False when the classification is read off the tail of an explicit list.
    pub verified: bool,
}

// Floating evaluation of L·k or k^α can land a hair above an integer.
fn ceil_guarded(x: f64) -> usize {
    (x - x.abs() * 1e-12).ceil().max(0.0) as usize
}

fn floor_guarded(x: f64) -> usize {
    (x + x.abs() * 1e-12).floor().max(0.0) as usize
}

impl LengthSchedule {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("schedule parameter {name} must be finite and > 0")))
            }
        };
        match self {
            LengthSchedule::Linear { rate } => positive("L", *rate),
            LengthSchedule::Power { alpha } => {
                positive("alpha", *alpha)?;
                if *alpha == 1.0 {
                    return Err(Error::InvalidInput("power schedule with alpha = 1 is linear".into()));
                }
                Ok(())
            }
            LengthSchedule::Log { c } | LengthSchedule::LogCeil { c } => positive("c", *c),
            LengthSchedule::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidInput("explicit schedule must be non-empty".into()));
                }
                if values.contains(&0) {
                    return Err(Error::InvalidInput("explicit schedule values must be positive".into()));
                }
                if values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::InvalidInput("explicit schedule must be non-decreasing".into()));
                }
                Ok(())
            }
        }
    }

    /// `ℓ_k` for `k ≥ 1`; `k = 0` is read as `k = 1`.
    pub fn at(&self, k: usize) -> ScheduleValue {
        let k = k.max(1);
        let kf = k as f64;
        let length = match self {
            LengthSchedule::Linear { rate } => ceil_guarded(rate * kf),
            LengthSchedule::Power { alpha } => ceil_guarded(kf.powf(*alpha)),
            LengthSchedule::Log { c } => floor_guarded(c * kf.log2()).max(1),
            LengthSchedule::LogCeil { c } => ceil_guarded(c * kf.log2()).max(1),
            LengthSchedule::Explicit { values } => {
                return match values.get(k - 1) {
                    Some(&v) => ScheduleValue { length: v, extrapolated: false },
                    None => ScheduleValue { length: *values.last().expect("validated"), extrapolated: true },
                };
            }
        };
        ScheduleValue { length, extrapolated: false }
    }

    /// Shorthand for `self.at(k).length`.
    pub fn length(&self, k: usize) -> usize {
        self.at(k).length
    }

    pub fn limit(&self) -> ScheduleLimit {
        let exact = |kind| ScheduleLimit { kind, verified: true };
        match self {
            LengthSchedule::Linear { rate } => exact(LimitKind::Finite(*rate)),
            LengthSchedule::Power { alpha } if *alpha < 1.0 => exact(LimitKind::Zero),
            LengthSchedule::Power { .. } => exact(LimitKind::Infinite),
            LengthSchedule::Log { .. } | LengthSchedule::LogCeil { .. } => exact(LimitKind::Zero),
            LengthSchedule::Explicit { values } => ScheduleLimit { kind: classify_tail(values), verified: false },
        }
    }
}

/// Reads the growth of an explicit list from its log-log slope between the
/// middle and the end of the list.
fn classify_tail(values: &[usize]) -> LimitKind {
    let n = values.len();
    let last = values[n - 1] as f64;
    if n < 4 {
        return LimitKind::Finite(last / n as f64);
    }
    let half = n / 2;
    let mid = values[half - 1] as f64;
    let slope = (last / mid).ln() / (n as f64 / half as f64).ln();
    if slope < 0.75 {
        LimitKind::Zero
    } else if slope > 1.25 {
        LimitKind::Infinite
    } else {
        LimitKind::Finite(last / n as f64)
    }
}

/// `ℓ_k` of `schedule`.
pub fn schedule_at(schedule: &LengthSchedule, k: usize) -> ScheduleValue {
    schedule.at(k)
}

/// Classification of `lim ℓ_k / k`.
pub fn schedule_limit(schedule: &LengthSchedule) -> ScheduleLimit {
    schedule.limit()
}

/// `𝐣|_n`.
pub fn truncate(target: &TargetPoint, n: usize) -> Word {
    target.truncate(n)
}

/// Whether `σᵏ(𝐢)|_{ℓ_k} = 𝐣|_{ℓ_k}`, i.e. letters `k+1, …, k+ℓ_k` of the
/// prefix spell out the target. `k = 0` uses `ℓ_1`.
pub fn recurrence_hit(prefix: &Word, k: usize, target: &TargetPoint, schedule: &LengthSchedule) -> Result<bool> {
    let ell = schedule.length(k);
    if prefix.len() < k + ell {
        return Err(Error::PrefixTooShort { len: prefix.len(), needed: k + ell });
    }
    let goal = target.truncate(ell);
    Ok(prefix.letters()[k..k + ell] == *goal.letters())
}
