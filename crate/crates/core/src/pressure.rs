//! Finite-depth brackets for the pressure `𝒫(s)`, the target exponent
//! `χ(s, 𝐣) = lim (1/k) log φˢ(T_{𝐣|ℓ_k})`, and the modified pressure
//! `P(s, 𝐣) = lim (1/k) log Σ_{|𝐢|=k} φˢ(T_{𝐢 𝐣|ℓ_k})`.
//!
//! The upper bound for `𝒫` is Fekete's bound for the subadditive sequence
//! `log Σ_{|𝐢|=k} φˢ(T_𝐢)`; the lower bound is Fekete's bound for the
//! superadditive sequence `log(D · Σ_{|𝐢|=k} φˢ(T_𝐢))`, which needs the
//! quasimultiplicativity constant `D`. `χ` only has a Kingman limit, so it
//! is reported as a finite sequence together with its tail oscillation.

use crate::error::{Error, Result};
use crate::ifs::AffineSystem;
use crate::scalar::Scalar;
use crate::svf::SvfExponent;
use crate::symbolic::{LengthSchedule, TargetPoint, Word};
use crate::tree::{level_log_sums, ConstrainedSum, ScaledMatrix, TreeConfig};

/// Longest target prefix `𝐣|ℓ_k` the χ sequence will multiply out.
pub const MAX_TARGET_LEN: usize = 1 << 22;

/// Depth and sample budget used when `D` has to be estimated.
const D_ESTIMATE_DEPTH: usize = 4;
const D_ESTIMATE_BUDGET: usize = 1 << 14;

/// A two-sided enclosure of a pressure value at fixed `s` and depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureBracket<T> {
    pub s: T,
    pub depth: usize,
    pub lower: T,
    pub upper: T,
    /// The lower bound used an estimated, unproven `D`.
    pub heuristic_d: bool,
    /// `log D` used for the lower bound.
    pub log_d: T,
}

impl<T: Scalar> PressureBracket<T> {
    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> T {
        (self.upper + self.lower) * T::of(0.5)
    }

    pub fn contains(&self, x: T) -> bool {
        self.lower <= x && x <= self.upper
    }
}

fn exponent_for<T: Scalar>(sys: &AffineSystem<T>, t: T) -> Result<SvfExponent<T>> {
    SvfExponent::new(t, sys.dim())
}

fn word_for<T: Scalar>(sys: &AffineSystem<T>, w: &Word) -> Result<()> {
    if let Some(&letter) = w.letters().iter().find(|&&l| l >= sys.len()) {
        return Err(Error::LetterOutOfRange { letter, alphabet: sys.len() });
    }
    Ok(())
}

/// `log Σ_{|𝐢|=k} φᵗ(T_𝐢 · T_suffix)`.
pub fn log_sum_phi<T: Scalar>(sys: &AffineSystem<T>, t: T, k: usize, suffix: &Word) -> Result<T> {
    log_sum_phi_with(sys, t, k, suffix, &TreeConfig::default())
}

pub fn log_sum_phi_with<T: Scalar>(
    sys: &AffineSystem<T>,
    t: T,
    k: usize,
    suffix: &Word,
    cfg: &TreeConfig,
) -> Result<T> {
    if k == 0 {
        return Err(Error::InvalidInput("word length k must be at least 1".into()));
    }
    let exponent = exponent_for(sys, t)?;
    word_for(sys, suffix)?;
    let head = ScaledMatrix::identity(sys.dim());
    let tail = ScaledMatrix::from_letters(sys, suffix.letters());
    let slots = vec![None; k];
    ConstrainedSum { sys, exponent, head: &head, slots: &slots, tail: &tail }.log_sum(cfg)
}

/// An upper bound on [`log_sum_phi`] that skips subtrees contributing less
/// than `rel_tol` of the running total, charging their submultiplicative
/// bound instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrunedUpperBound<T>(pub T);

pub fn log_sum_phi_upper<T: Scalar>(
    sys: &AffineSystem<T>,
    t: T,
    k: usize,
    suffix: &Word,
    rel_tol: T,
    cfg: &TreeConfig,
) -> Result<PrunedUpperBound<T>> {
    if k == 0 {
        return Err(Error::InvalidInput("word length k must be at least 1".into()));
    }
    if !(rel_tol > T::zero()) {
        return Err(Error::InvalidInput("pruning tolerance must be positive".into()));
    }
    let exponent = exponent_for(sys, t)?;
    word_for(sys, suffix)?;
    let head = ScaledMatrix::identity(sys.dim());
    let tail = ScaledMatrix::from_letters(sys, suffix.letters());
    let slots = vec![None; k];
    let sum = ConstrainedSum { sys, exponent, head: &head, slots: &slots, tail: &tail };
    Ok(PrunedUpperBound(sum.log_sum_upper(cfg, rel_tol.ln())?))
}

/// `log Σ_{|𝐢|=ℓ} φᵗ(T_𝐢)` for `ℓ = 1, …, depth`.
pub fn partition_log_sums<T: Scalar>(sys: &AffineSystem<T>, t: T, depth: usize, cfg: &TreeConfig) -> Result<Vec<T>> {
    if depth == 0 {
        return Err(Error::InvalidInput("depth must be at least 1".into()));
    }
    level_log_sums(sys, exponent_for(sys, t)?, depth, cfg)
}

/// `log D` for the lower bound and whether it is heuristic.
///
/// A user-supplied `D` is taken as proven. Otherwise `D = 1` is exact for
/// conformal or aligned-diagonal systems; failing that `D` is estimated over
/// words of length ≤ 4 and squared, as a margin for the sampled minimum
/// over-estimating the infimum.
pub fn resolve_log_d<T: Scalar>(sys: &AffineSystem<T>, t: T, d: Option<T>) -> Result<(T, bool)> {
    match d {
        Some(d) if d > T::zero() && d <= T::one() => Ok((d.ln(), false)),
        Some(d) => Err(Error::InvalidInput(format!("quasimultiplicativity constant D = {d} not in (0, 1]"))),
        None if sys.has_unit_quasi_constant() => Ok((T::zero(), false)),
        None => {
            let report = sys.estimate_d(t, D_ESTIMATE_DEPTH, D_ESTIMATE_BUDGET)?;
            Ok((T::of(2.0) * report.d_estimate.ln(), true))
        }
    }
}

/// Fekete bracket for `𝒫(t)` from partition sums up to `depth`.
pub fn ordinary_pressure<T: Scalar>(
    sys: &AffineSystem<T>,
    t: T,
    depth: usize,
    d: Option<T>,
) -> Result<PressureBracket<T>> {
    ordinary_pressure_with(sys, t, depth, d, &TreeConfig::default())
}

pub fn ordinary_pressure_with<T: Scalar>(
    sys: &AffineSystem<T>,
    t: T,
    depth: usize,
    d: Option<T>,
    cfg: &TreeConfig,
) -> Result<PressureBracket<T>> {
    exponent_for(sys, t)?;
    if depth == 0 {
        return Err(Error::InvalidInput("depth must be at least 1".into()));
    }
    if t == T::zero() {
        // φ⁰ ≡ 1, so every partition sum is exactly mᵏ.
        let log_m = T::of_usize(sys.len()).ln();
        return Ok(PressureBracket { s: t, depth, lower: log_m, upper: log_m, heuristic_d: false, log_d: T::zero() });
    }
    let (log_d, heuristic_d) = resolve_log_d(sys, t, d)?;
    let sums = partition_log_sums(sys, t, depth, cfg)?;
    let mut upper = T::infinity();
    let mut lower = T::neg_infinity();
    for (i, &s) in sums.iter().enumerate() {
        let n = T::of_usize(i + 1);
        upper = upper.min(s / n);
        lower = lower.max((log_d + s) / n);
    }
    let pad = T::rounding_pad(upper.abs().max(lower.abs()));
    let upper = upper + pad;
    let lower = (lower - pad).min(upper);
    Ok(PressureBracket { s: t, depth, lower, upper, heuristic_d, log_d })
}

/// `(k, (1/k) log φˢ(T_{𝐣|ℓ_k}))` for `k = 1, …, depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiEstimate<T> {
    pub s: T,
    pub samples: Vec<(usize, T)>,
    /// `max − min` of the samples over the last quarter of depths.
    pub oscillation: T,
}

impl<T: Scalar> ChiEstimate<T> {
    /// The value at the largest depth.
    pub fn last(&self) -> T {
        self.samples.last().map(|&(_, v)| v).unwrap_or_else(T::zero)
    }
}

pub fn chi_estimate<T: Scalar>(
    sys: &AffineSystem<T>,
    s: T,
    target: &TargetPoint,
    schedule: &LengthSchedule,
    depth: usize,
) -> Result<ChiEstimate<T>> {
    let exponent = exponent_for(sys, s)?;
    if depth == 0 {
        return Err(Error::InvalidInput("depth must be at least 1".into()));
    }
    if target.alphabet() != sys.len() {
        return Err(Error::DimensionMismatch { expected: sys.len(), found: target.alphabet() });
    }
    let longest = schedule.length(depth);
    if longest > MAX_TARGET_LEN {
        return Err(Error::Capacity {
            what: "target prefix letters",
            requested: longest as u128,
            cap: MAX_TARGET_LEN as u128,
        });
    }
    let letters = target.truncate(longest);
    let mut product = ScaledMatrix::identity(sys.dim());
    let mut scratch = crate::svf::Matrix::identity(sys.dim());
    let mut used = 0;
    let mut samples = Vec::with_capacity(depth);
    for k in 1..=depth {
        let ell = schedule.length(k);
        while used < ell {
            product.push(sys.linear(letters.letters()[used]), &mut scratch);
            used += 1;
        }
        samples.push((k, product.log_phi(&exponent) / T::of_usize(k)));
    }
    let tail = depth / 4;
    let window = &samples[depth - tail.max(1)..];
    let (lo, hi) = window.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)));
    Ok(ChiEstimate { s, samples, oscillation: hi - lo })
}

/// Both routes to the modified pressure at one depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedPressureEstimate<T> {
    pub s: T,
    pub depth: usize,
    /// `(1/k) log Σ_{|𝐢|=k} φˢ(T_{𝐢 𝐣|ℓ_k})` at `k = depth`.
    pub direct_value: T,
    pub ordinary: PressureBracket<T>,
    pub chi: ChiEstimate<T>,
    /// `|direct − (𝒫 midpoint + χ_k)|`.
    pub deviation: T,
    /// `bracket width + |log D| / k`.
    pub corridor: T,
}

impl<T: Scalar> ModifiedPressureEstimate<T> {
    pub fn decomposed_value(&self) -> T {
        self.ordinary.midpoint() + self.chi.last()
    }

    pub fn is_consistent(&self) -> bool {
        self.deviation <= self.corridor
    }
}

pub fn modified_pressure<T: Scalar>(
    sys: &AffineSystem<T>,
    s: T,
    target: &TargetPoint,
    schedule: &LengthSchedule,
    depth: usize,
    d: Option<T>,
) -> Result<ModifiedPressureEstimate<T>> {
    modified_pressure_with(sys, s, target, schedule, depth, d, &TreeConfig::default())
}

pub fn modified_pressure_with<T: Scalar>(
    sys: &AffineSystem<T>,
    s: T,
    target: &TargetPoint,
    schedule: &LengthSchedule,
    depth: usize,
    d: Option<T>,
    cfg: &TreeConfig,
) -> Result<ModifiedPressureEstimate<T>> {
    let chi = chi_estimate(sys, s, target, schedule, depth)?;
    let ordinary = ordinary_pressure_with(sys, s, depth, d, cfg)?;
    let direct_value = if s == T::zero() {
        T::of_usize(sys.len()).ln()
    } else {
        let suffix = target.truncate(schedule.length(depth));
        log_sum_phi_with(sys, s, depth, &suffix, cfg)? / T::of_usize(depth)
    };
    let deviation = (direct_value - (ordinary.midpoint() + chi.last())).abs();
    let corridor = ordinary.width() + ordinary.log_d.abs() / T::of_usize(depth) + T::rounding_pad(direct_value);
    Ok(ModifiedPressureEstimate { s, depth, direct_value, ordinary, chi, deviation, corridor })
}
