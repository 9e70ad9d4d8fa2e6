//! Zeros of the ordinary and modified pressures.
//!
//! Both pressures are strictly decreasing in `s` with slopes confined to
//! `[(1+L)·log σ₋, (1+L)·log σ₊]`, where `L = lim ℓ_k/k` (zero for the
//! ordinary pressure). Every evaluation therefore gives an interval for the
//! zero, not just a sign: if `P(s) ∈ [lo, hi]` then
//! `s₀ − s ∈ [min(lo/A, lo/B), max(hi/A, hi/B)]` with `A = (1+L)|log σ₊|` and
//! `B = (1+L)|log σ₋|`. The solver intersects these intervals while bisecting.
//! When a midpoint is inconclusive the tree depth is escalated along a fixed
//! sequence, so running with twice the depth replays the shorter run first
//! and the enclosure can only shrink.

use crate::error::{Error, Result};
use crate::ifs::AffineSystem;
use crate::pressure::{chi_estimate, ordinary_pressure_with, PressureBracket};
use crate::scalar::Scalar;
use crate::symbolic::{LengthSchedule, LimitKind, TargetPoint};
use crate::tree::TreeConfig;

/// Smallest depth of the escalation sequence.
const MIN_START_DEPTH: usize = 4;
const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimensionKind {
    AffinityDim,
    ShrinkingTargetDim,
}

/// Growth regime of `ℓ_k / k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Sublinear,
    Linear(f64),
    Superlinear,
    /// Read off an explicit list; the limit is a guess.
    Unclassified,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionResult<T> {
    pub kind: DimensionKind,
    pub lower: T,
    pub upper: T,
    /// `None` for the affinity dimension, which has no target.
    pub regime: Option<Regime>,
    pub depth_used: usize,
    pub heuristic_d: bool,
    /// The pressure at `s = d` was not certified negative, so `d` is the
    /// upper end of the enclosure. When it was certified positive the
    /// enclosure is `[d, d]`.
    pub clamped_at_d: bool,
    /// Stopped on an inconclusive sign at the deepest allowed tree.
    pub depth_limited: bool,
    /// The target exponent `χ` entered the bracket from a finite sequence,
    /// with its tail oscillation as the only error estimate.
    pub heuristic_chi: bool,
}

impl<T: Scalar> DimensionResult<T> {
    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    pub fn contains(&self, s: T) -> bool {
        self.lower <= s && s <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<T> {
    /// Deepest word tree the solver may enumerate.
    pub max_depth: usize,
    pub tol: T,
    /// A proven quasimultiplicativity constant.
    pub d: Option<T>,
    /// Depth of the `χ_k` sequence for linear-regime targets.
    pub chi_depth: usize,
    pub tree: TreeConfig,
}

impl<T: Scalar> SolveOptions<T> {
    pub fn new(max_depth: usize, tol: T) -> Self {
        Self { max_depth, tol, d: None, chi_depth: 4096, tree: TreeConfig::default() }
    }
}

/// Depths `⌊max/2ⁱ⌋ ≥ MIN_START_DEPTH` in increasing order. Depths over the
/// tree capacity are dropped and the capacity depth itself is appended.
fn depth_sequence(max_depth: usize, m: usize, cfg: &TreeConfig) -> Vec<usize> {
    let mut cap_depth = 0;
    let mut leaves: u128 = 1;
    while leaves * m as u128 <= cfg.leaf_cap as u128 && cap_depth < max_depth {
        leaves *= m as u128;
        cap_depth += 1;
    }
    let mut seq = Vec::new();
    let mut d = max_depth;
    while d >= 1 {
        if d <= cap_depth {
            seq.push(d);
        }
        if d / 2 < MIN_START_DEPTH {
            break;
        }
        d /= 2;
    }
    seq.reverse();
    if max_depth > cap_depth && cap_depth >= 1 && seq.last() != Some(&cap_depth) {
        seq.push(cap_depth);
    }
    seq
}

/// Interval for the zero implied by `P(s) ∈ [lo, hi]`.
fn zero_corridor<T: Scalar>(s: T, lo: T, hi: T, slope_small: T, slope_large: T) -> (T, T) {
    let left = (lo / slope_small).min(lo / slope_large);
    let right = (hi / slope_small).max(hi / slope_large);
    let pad = T::rounding_pad(s.abs() + left.abs().max(right.abs()));
    (s + left - pad, s + right + pad)
}

struct Outcome<T> {
    lower: T,
    upper: T,
    depth_used: usize,
    heuristic: bool,
    clamped_at_d: bool,
    depth_limited: bool,
}

/// Bisection with certified signs, corridor intersection and depth
/// escalation. `eval(s, depth)` brackets the pressure.
fn solve_decreasing<T: Scalar>(
    d: T,
    slope: (T, T),
    depths: &[usize],
    tol: T,
    mut eval: impl FnMut(T, usize) -> Result<PressureBracket<T>>,
) -> Result<Outcome<T>> {
    if depths.is_empty() {
        return Err(Error::Capacity { what: "solver depth", requested: 1, cap: 0 });
    }
    let mut level = 0;
    let mut heuristic = false;
    let mut lo = T::zero();
    let mut hi = d;

    // Returns the bracket at `s`, escalating until its sign is certified or
    // the sequence runs out.
    let mut probe = |s: T, level: &mut usize, heuristic: &mut bool| -> Result<PressureBracket<T>> {
        loop {
            let b = eval(s, depths[*level])?;
            *heuristic |= b.heuristic_d;
            if b.lower > T::zero() || b.upper < T::zero() || *level + 1 == depths.len() {
                return Ok(b);
            }
            *level += 1;
        }
    };
    let narrow = |b: &PressureBracket<T>, lo: &mut T, hi: &mut T| {
        let (a, z) = zero_corridor(b.s, b.lower, b.upper, slope.0, slope.1);
        let (new_lo, new_hi) = (lo.max(a), hi.min(z));
        if new_lo <= new_hi {
            *lo = new_lo;
            *hi = new_hi;
        }
    };

    let at_d = probe(d, &mut level, &mut heuristic)?;
    if at_d.lower > T::zero() {
        return Ok(Outcome {
            lower: d,
            upper: d,
            depth_used: depths[level],
            heuristic,
            clamped_at_d: true,
            depth_limited: false,
        });
    }
    let clamped_at_d = at_d.upper >= T::zero();
    narrow(&at_d, &mut lo, &mut hi);

    let at_zero = probe(T::zero(), &mut level, &mut heuristic)?;
    narrow(&at_zero, &mut lo, &mut hi);

    // The bisection interval only moves on certified signs, so a deeper run
    // visits the same midpoints as a shallower one for as long as the
    // shallower one keeps going. Corridors only ever cut the reported range.
    let (mut b_lo, mut b_hi) = (T::zero(), d);
    let mut depth_limited = false;
    for _ in 0..MAX_ITERATIONS {
        if b_hi - b_lo <= tol || hi - lo <= T::zero() {
            break;
        }
        let mid = (b_lo + b_hi) * T::of(0.5);
        if mid <= b_lo || mid >= b_hi {
            break;
        }
        let b = probe(mid, &mut level, &mut heuristic)?;
        narrow(&b, &mut lo, &mut hi);
        if b.lower > T::zero() {
            b_lo = mid;
        } else if b.upper < T::zero() {
            b_hi = mid;
        } else {
            depth_limited = true;
            break;
        }
    }
    let lower = lo.max(b_lo).max(T::zero());
    let upper = hi.min(b_hi).min(d).max(lower);
    Ok(Outcome { lower, upper, depth_used: depths[level], heuristic, clamped_at_d, depth_limited })
}

fn check_options<T: Scalar>(sys: &AffineSystem<T>, opts: &SolveOptions<T>) -> Result<()> {
    let report = sys.validate();
    if report.violations.iter().any(|v| v.is_fatal()) {
        return Err(Error::Hypothesis(report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")));
    }
    if opts.max_depth == 0 {
        return Err(Error::InvalidInput("depth must be at least 1".into()));
    }
    if !(opts.tol > T::zero()) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    Ok(())
}

fn log_sigmas<T: Scalar>(sys: &AffineSystem<T>) -> (T, T) {
    (sys.sigma_plus().ln().abs(), sys.sigma_minus().ln().abs())
}

/// Enclosure of the zero of `𝒫`.
pub fn solve_affinity_dimension<T: Scalar>(
    sys: &AffineSystem<T>,
    depth: usize,
    d: Option<T>,
    tol: T,
) -> Result<DimensionResult<T>> {
    let mut opts = SolveOptions::new(depth, tol);
    opts.d = d;
    solve_affinity_dimension_with(sys, &opts)
}

pub fn solve_affinity_dimension_with<T: Scalar>(
    sys: &AffineSystem<T>,
    opts: &SolveOptions<T>,
) -> Result<DimensionResult<T>> {
    check_options(sys, opts)?;
    let depths = depth_sequence(opts.max_depth, sys.len(), &opts.tree);
    let dim = T::of_usize(sys.dim());
    let out = solve_decreasing(dim, log_sigmas(sys), &depths, opts.tol, |s, depth| {
        ordinary_pressure_with(sys, s, depth, opts.d, &opts.tree)
    })?;
    Ok(DimensionResult {
        kind: DimensionKind::AffinityDim,
        lower: out.lower,
        upper: out.upper,
        regime: None,
        depth_used: out.depth_used,
        heuristic_d: out.heuristic,
        clamped_at_d: out.clamped_at_d,
        depth_limited: out.depth_limited,
        heuristic_chi: false,
    })
}

/// Growth regime of a schedule and the slope `L` to use for it.
pub fn classify_schedule(schedule: &LengthSchedule) -> (Regime, Option<f64>) {
    let limit = schedule.limit();
    match (limit.kind, limit.verified) {
        (LimitKind::Zero, true) => (Regime::Sublinear, None),
        (LimitKind::Infinite, true) => (Regime::Superlinear, None),
        (LimitKind::Finite(l), true) => (Regime::Linear(l), Some(l)),
        (LimitKind::Finite(l), false) => (Regime::Unclassified, Some(l)),
        (LimitKind::Zero, false) => (Regime::Unclassified, Some(0.0)),
        (LimitKind::Infinite, false) => {
            let LengthSchedule::Explicit { values } = schedule else {
                unreachable!("only explicit lists are unverified")
            };
            (Regime::Unclassified, Some(*values.last().expect("validated") as f64 / values.len() as f64))
        }
    }
}

/// `𝒫(s) + χ_K ± oscillation`, heuristic in `χ`.
fn modified_bracket<T: Scalar>(
    sys: &AffineSystem<T>,
    s: T,
    depth: usize,
    target: &TargetPoint,
    schedule: &LengthSchedule,
    chi_depth: usize,
    opts: &SolveOptions<T>,
) -> Result<PressureBracket<T>> {
    let ord = ordinary_pressure_with(sys, s, depth, opts.d, &opts.tree)?;
    let chi = chi_estimate(sys, s, target, schedule, chi_depth)?;
    let c = chi.last();
    let pad = T::rounding_pad(c);
    Ok(PressureBracket {
        lower: ord.lower + c - chi.oscillation - pad,
        upper: ord.upper + c + chi.oscillation + pad,
        ..ord
    })
}

/// Enclosure of the zero of the modified pressure `P(·, 𝐣)`.
pub fn solve_shrinking_target_dimension<T: Scalar>(
    sys: &AffineSystem<T>,
    target: &TargetPoint,
    schedule: &LengthSchedule,
    depth: usize,
    d: Option<T>,
    tol: T,
) -> Result<DimensionResult<T>> {
    let mut opts = SolveOptions::new(depth, tol);
    opts.d = d;
    solve_shrinking_target_dimension_with(sys, target, schedule, &opts)
}

pub fn solve_shrinking_target_dimension_with<T: Scalar>(
    sys: &AffineSystem<T>,
    target: &TargetPoint,
    schedule: &LengthSchedule,
    opts: &SolveOptions<T>,
) -> Result<DimensionResult<T>> {
    check_options(sys, opts)?;
    schedule.validate()?;
    if target.alphabet() != sys.len() {
        return Err(Error::DimensionMismatch { expected: sys.len(), found: target.alphabet() });
    }
    let (regime, slope_l) = classify_schedule(schedule);
    match regime {
        Regime::Sublinear => {
            let r = solve_affinity_dimension_with(sys, opts)?;
            return Ok(DimensionResult { kind: DimensionKind::ShrinkingTargetDim, regime: Some(regime), ..r });
        }
        Regime::Superlinear => {
            return Ok(DimensionResult {
                kind: DimensionKind::ShrinkingTargetDim,
                lower: T::zero(),
                upper: T::zero(),
                regime: Some(regime),
                depth_used: 0,
                heuristic_d: false,
                clamped_at_d: false,
                depth_limited: false,
                heuristic_chi: false,
            });
        }
        Regime::Linear(_) | Regime::Unclassified => {}
    }
    let l = T::of(slope_l.expect("linear regimes carry a slope"));
    let chi_depth = match schedule {
        LengthSchedule::Explicit { values } => opts.chi_depth.min(values.len()),
        _ => opts.chi_depth,
    }
    .max(1);
    let (small, large) = log_sigmas(sys);
    let factor = T::one() + l;
    let depths = depth_sequence(opts.max_depth, sys.len(), &opts.tree);
    let dim = T::of_usize(sys.dim());
    let out = solve_decreasing(dim, (factor * small, factor * large), &depths, opts.tol, |s, depth| {
        modified_bracket(sys, s, depth, target, schedule, chi_depth, opts)
    })?;
    Ok(DimensionResult {
        kind: DimensionKind::ShrinkingTargetDim,
        lower: out.lower,
        upper: out.upper,
        regime: Some(regime),
        depth_used: out.depth_used,
        heuristic_d: out.heuristic,
        clamped_at_d: out.clamped_at_d,
        depth_limited: out.depth_limited,
        heuristic_chi: true,
    })
}

/// One row of [`pressure_profile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow<T> {
    pub s: T,
    pub lower: T,
    pub upper: T,
    pub heuristic: bool,
}

/// Brackets of `𝒫(s)`, or of `P(s, 𝐣)` when a target and schedule are
/// given, over an ascending grid in `[0, d]`. Each bracket is tightened by
/// monotonicity against its neighbours, so the staircase is non-increasing.
pub fn pressure_profile<T: Scalar>(
    sys: &AffineSystem<T>,
    target: Option<(&TargetPoint, &LengthSchedule)>,
    s_grid: &[T],
    depth: usize,
    opts: &SolveOptions<T>,
) -> Result<Vec<ProfileRow<T>>> {
    let dim = T::of_usize(sys.dim());
    if s_grid.iter().any(|&s| !(s >= T::zero() && s <= dim)) {
        return Err(Error::InvalidInput(format!("grid points must lie in [0, {dim}]")));
    }
    if s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let (b, chi_heuristic) = match target {
            None => (ordinary_pressure_with(sys, s, depth, opts.d, &opts.tree)?, false),
            Some((j, sched)) => {
                sched.validate()?;
                match classify_schedule(sched) {
                    (Regime::Sublinear, _) => (ordinary_pressure_with(sys, s, depth, opts.d, &opts.tree)?, false),
                    (Regime::Superlinear, _) => {
                        return Err(Error::InvalidInput(
                            "superlinear schedules have P(s, j) = -inf for s > 0; no profile".into(),
                        ))
                    }
                    _ => {
                        let chi_depth = match sched {
                            LengthSchedule::Explicit { values } => opts.chi_depth.min(values.len()),
                            _ => opts.chi_depth,
                        };
                        (modified_bracket(sys, s, depth, j, sched, chi_depth.max(1), opts)?, true)
                    }
                }
            }
        };
        rows.push(ProfileRow { s, lower: b.lower, upper: b.upper, heuristic: b.heuristic_d || chi_heuristic });
    }
    for i in 1..rows.len() {
        rows[i].upper = rows[i].upper.min(rows[i - 1].upper);
    }
    for i in (0..rows.len().saturating_sub(1)).rev() {
        rows[i].lower = rows[i].lower.max(rows[i + 1].lower);
    }
    Ok(rows)
}
