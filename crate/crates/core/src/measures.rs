//! Measures on cylinders, Gibbs comparisons, Borel–Cantelli simulation and
//! the `s`-energy diagnostic.
//!
//! Three kinds of measure are supported. Bernoulli measures are products of
//! letter weights and resolve cylinders of any length. The normalized `φᵗ`
//! measure at level `n` puts mass `φᵗ(T_w) / Σ_{|v|=n} φᵗ(T_v)` on each word
//! of length `n`. The recurrence-constrained measure `μₖ` does the same over
//! the words `A(k)` that agree with the target on the blocks
//! `n_i+1, …, n_i+ℓ_{n_i}` for the given times `n_i`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ifs::AffineSystem;
use crate::logsum::LogSumExp;
use crate::pressure::PressureBracket;
use crate::scalar::Scalar;
use crate::svf::SvfExponent;
use crate::symbolic::{LengthSchedule, TargetKind, TargetPoint, Word};
use crate::tree::{ConstrainedSum, ScaledMatrix, TreeConfig};

/// Largest number of cylinders a single mass table level may hold.
pub const TABLE_CAP: usize = 1 << 20;

const GIBBS_SEED: u64 = 0x6769_6262_7300;

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind<T> {
    Bernoulli { weights: Vec<T> },
    NormalizedPhi { t: T, level: usize },
    RecurrenceConstrained { t: T, times: Vec<usize>, target: TargetPoint, schedule: LengthSchedule, level: usize },
}

/// A probability measure on the cylinders of the full shift on the
/// alphabet of `sys`.
#[derive(Debug, Clone)]
pub struct CylinderMeasure<T> {
    sys: AffineSystem<T>,
    kind: MeasureKind<T>,
    /// Forced letters of the level words; empty for Bernoulli.
    slots: Vec<Option<usize>>,
    /// `log Σ φᵗ` over the level words; unused for Bernoulli.
    log_total: T,
    cfg: TreeConfig,
}

/// Log-masses of every cylinder of length `0, …, depth`, each level in
/// lexicographic order (first letter most significant).
#[derive(Debug, Clone, PartialEq)]
pub struct MassTable<T> {
    alphabet: usize,
    levels: Vec<Vec<T>>,
}

impl<T: Scalar> MassTable<T> {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, n: usize) -> &[T] {
        &self.levels[n]
    }

    pub fn log_mass(&self, q: &Word) -> Result<T> {
        if q.len() > self.depth() {
            return Err(Error::LevelExceeded { len: q.len(), level: self.depth() });
        }
        Ok(self.levels[q.len()][word_index(q.letters(), self.alphabet)])
    }
}

fn word_index(letters: &[usize], m: usize) -> usize {
    letters.iter().fold(0, |acc, &l| acc * m + l)
}

fn table_size(m: usize, n: usize) -> Result<usize> {
    match m.checked_pow(n as u32) {
        Some(size) if size <= TABLE_CAP => Ok(size),
        _ => Err(Error::Capacity {
            what: "cylinder table entries",
            requested: (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX),
            cap: TABLE_CAP as u128,
        }),
    }
}

/// Greedy constraint times `n₁ = first`, `n_i = n_{i-1} + ℓ_{n_{i-1}} + gap`,
/// keeping those with `n_i < horizon`.
pub fn spaced_times(schedule: &LengthSchedule, first: usize, gap: usize, horizon: usize) -> Result<Vec<usize>> {
    schedule.validate()?;
    if first == 0 {
        return Err(Error::InvalidInput("constraint times start at 1".into()));
    }
    let mut times = Vec::new();
    let mut n = first;
    while n < horizon {
        times.push(n);
        n += schedule.length(n) + gap;
    }
    Ok(times)
}

fn constraint_slots(
    times: &[usize],
    target: &TargetPoint,
    schedule: &LengthSchedule,
    level: usize,
) -> Result<Vec<Option<usize>>> {
    let mut slots = vec![None; level];
    let mut prev_end = 0;
    for (i, &n) in times.iter().enumerate() {
        if n == 0 {
            return Err(Error::InvalidInput("constraint times start at 1".into()));
        }
        if i > 0 && n < prev_end {
            return Err(Error::InvalidInput(format!(
                "constraint time {n} violates the spacing n_i >= n_(i-1) + l(n_(i-1)) = {prev_end}"
            )));
        }
        let ell = schedule.length(n);
        let block = target.truncate(ell);
        for (offset, &letter) in block.letters().iter().enumerate() {
            if let Some(slot) = slots.get_mut(n + offset) {
                *slot = Some(letter);
            }
        }
        prev_end = n + ell;
    }
    Ok(slots)
}

impl<T: Scalar> CylinderMeasure<T> {
    pub fn bernoulli(sys: &AffineSystem<T>, weights: Vec<T>) -> Result<Self> {
        if weights.len() != sys.len() {
            return Err(Error::DimensionMismatch { expected: sys.len(), found: weights.len() });
        }
        if weights.iter().any(|&w| !(w >= T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidInput("Bernoulli weights must be finite and non-negative".into()));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::of(1e3) * T::epsilon() * T::of_usize(weights.len()) {
            return Err(Error::InvalidInput(format!("Bernoulli weights sum to {total}, not 1")));
        }
        Ok(Self {
            sys: sys.clone(),
            kind: MeasureKind::Bernoulli { weights },
            slots: Vec::new(),
            log_total: T::zero(),
            cfg: TreeConfig::default(),
        })
    }

    /// Bernoulli with weights `1/m`.
    pub fn uniform(sys: &AffineSystem<T>) -> Self {
        let w = T::one() / T::of_usize(sys.len());
        Self::bernoulli(sys, vec![w; sys.len()]).expect("uniform weights are valid")
    }

    pub fn normalized_phi(sys: &AffineSystem<T>, t: T, level: usize) -> Result<Self> {
        Self::with_slots(sys, MeasureKind::NormalizedPhi { t, level }, vec![None; level], TreeConfig::default())
    }

    pub fn recurrence_constrained(
        sys: &AffineSystem<T>,
        t: T,
        times: Vec<usize>,
        target: TargetPoint,
        schedule: LengthSchedule,
        level: usize,
    ) -> Result<Self> {
        schedule.validate()?;
        if target.alphabet() != sys.len() {
            return Err(Error::DimensionMismatch { expected: sys.len(), found: target.alphabet() });
        }
        let slots = constraint_slots(&times, &target, &schedule, level)?;
        let kind = MeasureKind::RecurrenceConstrained { t, times, target, schedule, level };
        Self::with_slots(sys, kind, slots, TreeConfig::default())
    }

    /// Replaces the enumeration limits used for mass computations.
    pub fn with_tree_config(mut self, cfg: TreeConfig) -> Self {
        self.cfg = cfg;
        self
    }

    fn with_slots(
        sys: &AffineSystem<T>,
        kind: MeasureKind<T>,
        slots: Vec<Option<usize>>,
        cfg: TreeConfig,
    ) -> Result<Self> {
        let level = slots.len();
        if level == 0 {
            return Err(Error::InvalidInput("measure level must be at least 1".into()));
        }
        let mut out = Self { sys: sys.clone(), kind, slots, log_total: T::zero(), cfg };
        let exponent = SvfExponent::new(out.t(), sys.dim())?;
        let identity = ScaledMatrix::identity(sys.dim());
        out.log_total =
            ConstrainedSum { sys, exponent, head: &identity, slots: &out.slots, tail: &identity }.log_sum(&cfg)?;
        if !out.log_total.is_finite() {
            return Err(Error::InvalidInput("measure has no mass: every level word has φᵗ = 0".into()));
        }
        Ok(out)
    }

    pub fn kind(&self) -> &MeasureKind<T> {
        &self.kind
    }

    pub fn system(&self) -> &AffineSystem<T> {
        &self.sys
    }

    /// Longest resolvable cylinder; `None` when every length is.
    pub fn level(&self) -> Option<usize> {
        match self.kind {
            MeasureKind::Bernoulli { .. } => None,
            _ => Some(self.slots.len()),
        }
    }

    fn t(&self) -> T {
        match &self.kind {
            MeasureKind::Bernoulli { .. } => T::zero(),
            MeasureKind::NormalizedPhi { t, .. } | MeasureKind::RecurrenceConstrained { t, .. } => *t,
        }
    }

    fn check_word(&self, q: &Word) -> Result<()> {
        if let Some(&letter) = q.letters().iter().find(|&&l| l >= self.sys.len()) {
            return Err(Error::LetterOutOfRange { letter, alphabet: self.sys.len() });
        }
        if let Some(level) = self.level() {
            if q.len() > level {
                return Err(Error::LevelExceeded { len: q.len(), level });
            }
        }
        Ok(())
    }

    /// `log μ[q]`; `-∞` for cylinders of mass zero.
    pub fn log_mass(&self, q: &Word) -> Result<T> {
        self.check_word(q)?;
        match &self.kind {
            MeasureKind::Bernoulli { weights } => Ok(q.letters().iter().map(|&l| weights[l].ln()).sum()),
            _ => {
                let n = q.len();
                if self.slots[..n].iter().zip(q.letters()).any(|(s, &l)| matches!(s, Some(b) if *b != l)) {
                    return Ok(T::neg_infinity());
                }
                let exponent = SvfExponent::new(self.t(), self.sys.dim())?;
                let head = ScaledMatrix::from_letters(&self.sys, q.letters());
                let identity = ScaledMatrix::identity(self.sys.dim());
                let sum =
                    ConstrainedSum { sys: &self.sys, exponent, head: &head, slots: &self.slots[n..], tail: &identity }
                        .log_sum(&self.cfg)?;
                Ok(sum - self.log_total)
            }
        }
    }

    pub fn mass(&self, q: &Word) -> Result<T> {
        if let MeasureKind::Bernoulli { weights } = &self.kind {
            self.check_word(q)?;
            return Ok(q.letters().iter().map(|&l| weights[l]).fold(T::one(), |acc, w| acc * w));
        }
        Ok(self.log_mass(q)?.exp())
    }

    /// Log-masses of all cylinders of length at most `depth`.
    pub fn mass_table(&self, depth: usize) -> Result<MassTable<T>> {
        let m = self.sys.len();
        if let Some(level) = self.level() {
            if depth > level {
                return Err(Error::LevelExceeded { len: depth, level });
            }
        }
        let size = table_size(m, depth)?;
        let levels = match &self.kind {
            MeasureKind::Bernoulli { weights } => {
                let logs: Vec<T> = weights.iter().map(|w| w.ln()).collect();
                let mut levels = vec![vec![T::zero()]];
                for n in 0..depth {
                    let next = levels[n].iter().flat_map(|&x| logs.iter().map(move |&l| x + l)).collect();
                    levels.push(next);
                }
                levels
            }
            _ => {
                let mut levels = vec![self.phi_prefix_sums(depth, size)?];
                for _ in 0..depth {
                    let below = levels.last().expect("non-empty");
                    let above = below
                        .chunks(m)
                        .map(|c| {
                            let mut acc = LogSumExp::new();
                            for &x in c {
                                acc.add(x);
                            }
                            acc.value()
                        })
                        .collect();
                    levels.push(above);
                }
                levels.reverse();
                levels
            }
        };
        Ok(MassTable { alphabet: m, levels })
    }

    /// Normalized log-mass of each cylinder of length `n`, lexicographic.
    fn phi_prefix_sums(&self, n: usize, size: usize) -> Result<Vec<T>> {
        let m = self.sys.len();
        let exponent = SvfExponent::new(self.t(), self.sys.dim())?;
        let mut split = 0;
        while split < n && m.pow(split as u32) < 64 {
            split += 1;
        }
        let chunk = size / m.pow(split as u32);
        let mut out = vec![T::neg_infinity(); size];
        out.par_chunks_mut(chunk).enumerate().try_for_each(|(index, slice)| -> Result<()> {
            let prefix = Word::from_index(index as u64, split, m);
            if self.slots.iter().zip(prefix.letters()).any(|(s, &l)| matches!(s, Some(b) if *b != l)) {
                return Ok(());
            }
            let head = ScaledMatrix::from_letters(&self.sys, prefix.letters());
            self.fill_prefix_sums(&exponent, n, split, &head, slice)
        })?;
        for v in &mut out {
            *v = *v - self.log_total;
        }
        Ok(out)
    }

    fn fill_prefix_sums(
        &self,
        exponent: &SvfExponent<T>,
        n: usize,
        pos: usize,
        product: &ScaledMatrix<T>,
        out: &mut [T],
    ) -> Result<()> {
        if pos == n {
            let identity = ScaledMatrix::identity(self.sys.dim());
            out[0] = if n == self.slots.len() {
                product.log_phi(exponent)
            } else {
                ConstrainedSum {
                    sys: &self.sys,
                    exponent: *exponent,
                    head: product,
                    slots: &self.slots[n..],
                    tail: &identity,
                }
                .log_sum(&self.cfg)?
            };
            return Ok(());
        }
        let m = self.sys.len();
        let chunk = out.len() / m;
        let mut scratch = product.mat.clone();
        for (letter, sub) in out.chunks_mut(chunk).enumerate() {
            if matches!(self.slots[pos], Some(b) if b != letter) {
                continue;
            }
            let mut child = product.clone();
            child.push(self.sys.linear(letter), &mut scratch);
            self.fill_prefix_sums(exponent, n, pos + 1, &child, sub)?;
        }
        Ok(())
    }
}

/// `μ[q]`.
pub fn cylinder_mass<T: Scalar>(mu: &CylinderMeasure<T>, q: &Word) -> Result<T> {
    mu.mass(q)
}

/// `μₖ[q]` for the words of length `k` that follow the target on the blocks
/// after each of `times`.
#[allow(clippy::too_many_arguments)]
pub fn mu_k_mass<T: Scalar>(
    sys: &AffineSystem<T>,
    t: T,
    times: &[usize],
    target: &TargetPoint,
    schedule: &LengthSchedule,
    q: &Word,
    k: usize,
) -> Result<T> {
    if q.len() > k {
        return Err(Error::LevelExceeded { len: q.len(), level: k });
    }
    CylinderMeasure::recurrence_constrained(sys, t, times.to_vec(), target.clone(), schedule.clone(), k)?.mass(q)
}

/// `log φᵗ(T_w)` for every word of length `0, …, depth`, lexicographic.
fn log_phi_levels<T: Scalar>(sys: &AffineSystem<T>, exponent: &SvfExponent<T>, depth: usize) -> Result<Vec<Vec<T>>> {
    let m = sys.len();
    table_size(m, depth)?;
    let mut levels: Vec<Vec<T>> = (0..=depth).map(|n| Vec::with_capacity(m.pow(n as u32))).collect();
    fn walk<T: Scalar>(
        sys: &AffineSystem<T>,
        exponent: &SvfExponent<T>,
        pos: usize,
        depth: usize,
        product: &ScaledMatrix<T>,
        levels: &mut [Vec<T>],
    ) {
        levels[pos].push(product.log_phi(exponent));
        if pos == depth {
            return;
        }
        let mut scratch = product.mat.clone();
        for letter in 0..sys.len() {
            let mut child = product.clone();
            child.push(sys.linear(letter), &mut scratch);
            walk(sys, exponent, pos + 1, depth, &child, levels);
        }
    }
    walk(sys, exponent, 0, depth, &ScaledMatrix::identity(sys.dim()), &mut levels);
    // Depth-first order appends each level in lexicographic order.
    Ok(levels)
}

/// Extremal Gibbs ratios at one cylinder length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsLevel<T> {
    pub level: usize,
    pub cylinders: usize,
    pub exhaustive: bool,
    pub ratio_low: T,
    pub ratio_high: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsReport<T> {
    pub t: T,
    pub pressure_at_t: PressureBracket<T>,
    pub sampled_cylinders: usize,
    pub worst_ratio_low: T,
    pub worst_ratio_high: T,
    /// `max(1 / worst_ratio_low, worst_ratio_high)`.
    pub constant_c: T,
    pub levels: Vec<GibbsLevel<T>>,
}

/// Ratios `μ[q] / (φᵗ(T_q) · exp(−|q|·𝒫(t)))` over cylinders of the given
/// lengths. The low ratio uses the lower end of the pressure bracket and the
/// high ratio the upper end, so the reported extremes hold for the true
/// pressure. Levels with at most `budget` cylinders are enumerated; larger
/// ones are sampled `budget` times with a fixed seed.
pub fn gibbs_check<T: Scalar>(
    mu: &CylinderMeasure<T>,
    t: T,
    pressure: &PressureBracket<T>,
    sample_levels: &[usize],
    budget: usize,
) -> Result<GibbsReport<T>> {
    let sys = mu.system();
    let m = sys.len();
    let exponent = SvfExponent::new(t, sys.dim())?;
    if budget == 0 {
        return Err(Error::InvalidInput("Gibbs check budget must be positive".into()));
    }
    let limit = budget.min(TABLE_CAP);
    let exhaustive = |n: usize| m.checked_pow(n as u32).is_some_and(|size| size <= limit);
    let table_depth = sample_levels.iter().copied().filter(|&n| exhaustive(n)).max().unwrap_or(0);
    let masses = mu.mass_table(table_depth)?;
    let phis = log_phi_levels(sys, &exponent, table_depth)?;

    let mut rng = ChaCha8Rng::seed_from_u64(GIBBS_SEED);
    let mut levels = Vec::with_capacity(sample_levels.len());
    let (mut low, mut high, mut total) = (T::infinity(), T::neg_infinity(), 0);
    for &n in sample_levels {
        let nf = T::of_usize(n);
        let (mut lvl_low, mut lvl_high) = (T::infinity(), T::neg_infinity());
        let mut record = |log_mu: T, log_phi: T| {
            lvl_low = lvl_low.min(log_mu - log_phi + nf * pressure.lower);
            lvl_high = lvl_high.max(log_mu - log_phi + nf * pressure.upper);
        };
        let (count, full) = if exhaustive(n) {
            for (&lm, &lp) in masses.level(n).iter().zip(&phis[n]) {
                record(lm, lp);
            }
            (masses.level(n).len(), true)
        } else {
            for _ in 0..budget {
                let letters: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
                let q = Word::new(letters, m)?;
                let lp = ScaledMatrix::from_letters(sys, q.letters()).log_phi(&exponent);
                record(mu.log_mass(&q)?, lp);
            }
            (budget, false)
        };
        let entry = GibbsLevel {
            level: n,
            cylinders: count,
            exhaustive: full,
            ratio_low: lvl_low.exp(),
            ratio_high: lvl_high.exp(),
        };
        low = low.min(entry.ratio_low);
        high = high.max(entry.ratio_high);
        total += count;
        levels.push(entry);
    }
    Ok(GibbsReport {
        t,
        pressure_at_t: *pressure,
        sampled_cylinders: total,
        worst_ratio_low: low,
        worst_ratio_high: high,
        constant_c: (T::one() / low).max(high),
        levels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesBehaviour {
    Converges,
    Diverges,
    Unknown,
}

/// Whether `Σ_k μ[𝐣|ℓ_k]` converges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesVerdict {
    pub behaviour: SeriesBehaviour,
    /// Decided in closed form rather than read off partial sums.
    pub exact: bool,
    /// For logarithmic schedules: `μ[𝐣|ℓ_k] ≍ k^(−exponent)`.
    pub exponent: Option<f64>,
    /// `(S_K − S_⌊K/2⌋) / S_K`; small values suggest convergence.
    pub tail_ratio: f64,
}

/// Per-letter geometric rate `ρ` with `μ[𝐣|n] ≍ ρⁿ`, when it is known.
fn geometric_rate<T: Scalar>(mu: &CylinderMeasure<T>, target: &TargetPoint) -> Option<f64> {
    let MeasureKind::Bernoulli { weights } = mu.kind() else { return None };
    let w: Vec<f64> = weights.iter().map(|w| w.to_f64_lossy()).collect();
    if w.windows(2).all(|p| p[0] == p[1]) {
        return Some(w[0]);
    }
    match target.kind() {
        TargetKind::EventuallyPeriodic { period, .. } => {
            let log_sum: f64 = period.iter().map(|&l| w[l].ln()).sum();
            Some((log_sum / period.len() as f64).exp())
        }
        TargetKind::Random { .. } => None,
    }
}

fn classify_series<T: Scalar>(
    mu: &CylinderMeasure<T>,
    target: &TargetPoint,
    schedule: &LengthSchedule,
    tail_ratio: f64,
) -> SeriesVerdict {
    let unknown = SeriesVerdict { behaviour: SeriesBehaviour::Unknown, exact: false, exponent: None, tail_ratio };
    let Some(rho) = geometric_rate(mu, target) else { return unknown };
    let exact = |behaviour, exponent| SeriesVerdict { behaviour, exact: true, exponent, tail_ratio };
    if rho >= 1.0 {
        return exact(SeriesBehaviour::Diverges, None);
    }
    if rho == 0.0 {
        return exact(SeriesBehaviour::Converges, None);
    }
    match schedule {
        LengthSchedule::Linear { .. } | LengthSchedule::Power { .. } => exact(SeriesBehaviour::Converges, None),
        LengthSchedule::Log { c } | LengthSchedule::LogCeil { c } => {
            let e = c * (1.0 / rho).log2();
            let behaviour = if e > 1.0 { SeriesBehaviour::Converges } else { SeriesBehaviour::Diverges };
            exact(behaviour, Some(e))
        }
        LengthSchedule::Explicit { .. } => unknown,
    }
}

/// One row of the per-`k` simulation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceRow {
    pub k: usize,
    pub length: usize,
    pub hits: u64,
    /// `hits / samples`.
    pub rate: f64,
    /// `μ(σ⁻ᵏ[𝐣|ℓ_k])`, the exact hit probability.
    pub expected: f64,
    /// `sqrt(p(1 − p) / N)` at `p = expected`.
    pub std_error: f64,
    /// `μ[𝐣|ℓ_k]`.
    pub cylinder_mass: f64,
    /// `Σ_{i ≤ k} μ[𝐣|ℓ_i]`.
    pub partial_sum: f64,
    /// Fraction of samples with a hit at some time in `(k, K]`.
    pub tail_fraction: f64,
}

impl RecurrenceRow {
    /// `|rate − expected|` in standard errors.
    pub fn deviation(&self) -> f64 {
        if self.std_error == 0.0 {
            if self.rate == self.expected {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.rate - self.expected).abs() / self.std_error
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    pub rows: Vec<RecurrenceRow>,
    /// Fraction of samples with at least one hit in `[1, K]`.
    pub any_hit: f64,
    pub series: SeriesVerdict,
}

impl SimulationReport {
    /// Fraction of samples with a hit at some time in `(k0, K]`.
    pub fn tail_fraction(&self, k0: usize) -> f64 {
        match k0 {
            0 => self.any_hit,
            k if k >= self.horizon => 0.0,
            k => self.rows[k - 1].tail_fraction,
        }
    }
}

struct Counters {
    hits: Vec<u64>,
    /// `last[k]`: samples whose latest hit is at time `k` (0 = never).
    last: Vec<u64>,
}

impl Counters {
    fn new(horizon: usize) -> Self {
        Self { hits: vec![0; horizon + 1], last: vec![0; horizon + 1] }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.hits.iter_mut().zip(other.hits) {
            *a += b;
        }
        for (a, b) in self.last.iter_mut().zip(other.last) {
            *a += b;
        }
        self
    }
}

enum Sampler {
    Bernoulli(WeightedIndex<f64>),
    /// Conditional probabilities read off a mass table.
    Table(Vec<Vec<f64>>),
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng, m: usize, len: usize, out: &mut Vec<usize>) {
        out.clear();
        match self {
            Sampler::Bernoulli(dist) => out.extend((0..len).map(|_| dist.sample(rng))),
            Sampler::Table(levels) => {
                let mut index = 0;
                for pos in 0..len {
                    let parent = levels[pos][index];
                    let u: f64 = rng.random::<f64>() * parent;
                    let mut acc = 0.0;
                    let mut chosen = None;
                    let mut last_positive = 0;
                    for a in 0..m {
                        let p = levels[pos + 1][index * m + a];
                        if p > 0.0 {
                            last_positive = a;
                        }
                        acc += p;
                        if u < acc && p > 0.0 {
                            chosen = Some(a);
                            break;
                        }
                    }
                    let a = chosen.unwrap_or(last_positive);
                    out.push(a);
                    index = index * m + a;
                }
            }
        }
    }
}

/// Draws `samples` words from `mu` and records, for each `k ≤ horizon`,
/// whether letters `k+1, …, k+ℓ_k` spell `𝐣|ℓ_k`.
///
/// Sample `i` uses the ChaCha8 stream `i` of `seed`, and counters are
/// integers, so the report is identical for any number of workers.
pub fn simulate_recurrence<T: Scalar>(
    mu: &CylinderMeasure<T>,
    target: &TargetPoint,
    schedule: &LengthSchedule,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<SimulationReport> {
    schedule.validate()?;
    let m = mu.system().len();
    if target.alphabet() != m {
        return Err(Error::DimensionMismatch { expected: m, found: target.alphabet() });
    }
    if horizon == 0 || samples == 0 {
        return Err(Error::InvalidInput("horizon and samples must be positive".into()));
    }
    let lengths: Vec<usize> = (0..=horizon).map(|k| schedule.length(k)).collect();
    let word_len = (1..=horizon).map(|k| k + lengths[k]).max().expect("horizon ≥ 1");
    let goal = target.truncate(lengths.iter().copied().max().unwrap_or(1));
    let goal = goal.letters();

    let (sampler, expected): (Sampler, Vec<f64>) = match mu.kind() {
        MeasureKind::Bernoulli { weights } => {
            let w: Vec<f64> = weights.iter().map(|w| w.to_f64_lossy()).collect();
            let dist = WeightedIndex::new(&w).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let expected = (0..=horizon).map(|k| goal[..lengths[k]].iter().map(|&l| w[l]).product()).collect();
            (Sampler::Bernoulli(dist), expected)
        }
        _ => {
            let table = mu.mass_table(word_len)?;
            let levels: Vec<Vec<f64>> =
                (0..=word_len).map(|n| table.level(n).iter().map(|x| x.exp().to_f64_lossy()).collect()).collect();
            let mut expected = vec![0.0; horizon + 1];
            for (k, e) in expected.iter_mut().enumerate().skip(1) {
                let ell = lengths[k];
                let stride = m.pow(ell as u32);
                let offset = word_index(&goal[..ell], m);
                *e = levels[k + ell].iter().skip(offset).step_by(stride).sum();
            }
            (Sampler::Table(levels), expected)
        }
    };
    let masses: Vec<f64> = (0..=horizon)
        .map(|k| mu.mass(&Word::new(goal[..lengths[k]].to_vec(), m).expect("target letters")))
        .map(|r| r.map(|x| x.to_f64_lossy()))
        .collect::<Result<_>>()?;

    let counters = (0..samples)
        .into_par_iter()
        .fold(
            || (Counters::new(horizon), Vec::with_capacity(word_len)),
            |(mut c, mut word), i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                sampler.draw(&mut rng, m, word_len, &mut word);
                let mut last = 0;
                for k in 1..=horizon {
                    let ell = lengths[k];
                    if word[k..k + ell] == goal[..ell] {
                        c.hits[k] += 1;
                        last = k;
                    }
                }
                c.last[last] += 1;
                (c, word)
            },
        )
        .map(|(c, _)| c)
        .reduce(|| Counters::new(horizon), Counters::merge);

    let n = samples as f64;
    let mut rows = Vec::with_capacity(horizon);
    let mut partial = 0.0;
    let mut later: u64 = 0;
    let mut tails = vec![0.0; horizon + 1];
    for k in (1..=horizon).rev() {
        tails[k] = later as f64 / n;
        later += counters.last[k];
    }
    for k in 1..=horizon {
        partial += masses[k];
        let p = expected[k];
        rows.push(RecurrenceRow {
            k,
            length: lengths[k],
            hits: counters.hits[k],
            rate: counters.hits[k] as f64 / n,
            expected: p,
            std_error: (p * (1.0 - p) / n).max(0.0).sqrt(),
            cylinder_mass: masses[k],
            partial_sum: partial,
            tail_fraction: tails[k],
        });
    }
    let total = rows.last().map(|r| r.partial_sum).unwrap_or(0.0);
    let half = if horizon >= 2 { rows[horizon / 2 - 1].partial_sum } else { 0.0 };
    let tail_ratio = if total > 0.0 { (total - half) / total } else { 0.0 };
    Ok(SimulationReport {
        horizon,
        samples,
        seed,
        rows,
        any_hit: later as f64 / n,
        series: classify_series(mu, target, schedule, tail_ratio),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport<T> {
    pub s: T,
    pub t: T,
    pub level_cap: usize,
    /// `Σ_{1≤|q|≤cap} φˢ(T_q)⁻¹ Σ_{i≠k} μ[qi] μ[qk]`.
    pub truncated: T,
    /// Partial sums of `truncated` after each length `1, …, cap`.
    pub partial: Vec<T>,
    /// `max μ[w] / φᵗ(T_w)` over `1 ≤ |w| ≤ cap + 1`.
    pub h: T,
    /// `H · m · Σ_{q=1}^{cap} σ₊^{q(t−s)}`.
    pub bound_truncated: T,
    /// `H · m · σ₊^{t−s} / (1 − σ₊^{t−s})`.
    pub bound_infinite: T,
    pub within_bound: bool,
}

/// The truncated double sum majorizing the `s`-energy of `μ` and its
/// geometric bound through `H`.
pub fn energy_diagnostic<T: Scalar>(mu: &CylinderMeasure<T>, s: T, t: T, level_cap: usize) -> Result<EnergyReport<T>> {
    let sys = mu.system();
    if !(s < t) {
        return Err(Error::InvalidInput(format!("energy diagnostic needs s < t, got s = {s}, t = {t}")));
    }
    if s < T::zero() {
        return Err(Error::ExponentOutOfRange { t: s.to_f64_lossy(), dim: sys.dim() });
    }
    if level_cap == 0 {
        return Err(Error::InvalidInput("level cap must be at least 1".into()));
    }
    let m = sys.len();
    let exp_s = SvfExponent::new(s, sys.dim())?;
    let exp_t = SvfExponent::new(t, sys.dim())?;
    let masses = mu.mass_table(level_cap + 1)?;
    let phi_s = log_phi_levels(sys, &exp_s, level_cap)?;
    let phi_t = log_phi_levels(sys, &exp_t, level_cap + 1)?;

    let mut log_h = T::neg_infinity();
    for n in 1..=level_cap + 1 {
        for (&lm, &lp) in masses.level(n).iter().zip(&phi_t[n]) {
            log_h = log_h.max(lm - lp);
        }
    }
    let h = log_h.exp();

    let mut truncated = T::zero();
    let mut partial = Vec::with_capacity(level_cap);
    for n in 1..=level_cap {
        let children = masses.level(n + 1);
        for (qi, &lp) in phi_s[n].iter().enumerate() {
            let kids: Vec<T> = children[qi * m..(qi + 1) * m].iter().map(|x| x.exp()).collect();
            let sum: T = kids.iter().copied().sum();
            let squares: T = kids.iter().map(|&x| x * x).sum();
            let cross = (sum * sum - squares).max(T::zero());
            if cross > T::zero() {
                truncated = truncated + cross * (-lp).exp();
            }
        }
        partial.push(truncated);
    }

    let ratio = sys.sigma_plus().powf(t - s);
    let geometric: T = (1..=level_cap).map(|q| ratio.powi(q as i32)).sum();
    let hm = h * T::of_usize(m);
    let bound_truncated = hm * geometric;
    let bound_infinite = hm * ratio / (T::one() - ratio);
    let within_bound = truncated <= bound_truncated * (T::one() + T::rounding_pad(T::one()));
    Ok(EnergyReport { s, t, level_cap, truncated, partial, h, bound_truncated, bound_infinite, within_bound })
}
