//! Affine iterated function systems `fᵢ(x) = Tᵢx + aᵢ`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::svf::{log_phi_with, singular_values, Matrix, SvfExponent};
use crate::symbolic::Word;

/// One map `x ↦ Tx + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineContraction<T> {
    linear: Matrix<T>,
    translation: Vec<T>,
}

impl<T: Scalar> AffineContraction<T> {
    pub fn new(linear: Matrix<T>, translation: Vec<T>) -> Result<Self> {
        if translation.len() != linear.dim() {
            return Err(Error::DimensionMismatch { expected: linear.dim(), found: translation.len() });
        }
        if translation.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("translation entries must be finite".into()));
        }
        Ok(Self { linear, translation })
    }

    pub fn linear(&self) -> &Matrix<T> {
        &self.linear
    }

    pub fn translation(&self) -> &[T] {
        &self.translation
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.linear.apply(x).into_iter().zip(&self.translation).map(|(y, &a)| y + a).collect()
    }
}

/// A system of `m ≥ 2` affine maps on `ℝᵈ`.
///
/// Construction only checks shapes; whether the maps satisfy the contraction
/// hypotheses is reported by [`AffineSystem::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSystem<T> {
    maps: Vec<AffineContraction<T>>,
    strict: bool,
}

impl<T: Scalar> AffineSystem<T> {
    /// A new system in strict mode.
    pub fn new(maps: Vec<AffineContraction<T>>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 maps, got {}", maps.len())));
        }
        let dim = maps[0].linear.dim();
        if let Some(bad) = maps.iter().find(|f| f.linear.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.linear.dim() });
        }
        Ok(Self { maps, strict: true })
    }

    /// Builds a system from linear parts and translations.
    pub fn from_parts(linears: Vec<Matrix<T>>, translations: Vec<Vec<T>>) -> Result<Self> {
        if linears.len() != translations.len() {
            return Err(Error::DimensionMismatch { expected: linears.len(), found: translations.len() });
        }
        let maps = linears
            .into_iter()
            .zip(translations)
            .map(|(l, a)| AffineContraction::new(l, a))
            .collect::<Result<Vec<_>>>()?;
        Self::new(maps)
    }

    /// Linear parts only; translations are zero.
    pub fn from_linear(linears: Vec<Matrix<T>>) -> Result<Self> {
        let translations = linears.iter().map(|l| vec![T::zero(); l.dim()]).collect();
        Self::from_parts(linears, translations)
    }

    pub fn with_strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn strict(&self) -> bool {
        self.strict
    }

    pub fn maps(&self) -> &[AffineContraction<T>] {
        &self.maps
    }

    pub fn linear(&self, i: usize) -> &Matrix<T> {
        &self.maps[i].linear
    }

    /// Number of maps `m`.
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.maps[0].linear.dim()
    }

    /// `σ₊ = maxᵢ σ₁(Tᵢ)`.
    pub fn sigma_plus(&self) -> T {
        self.maps.iter().map(|f| singular_values(&f.linear).largest()).fold(T::zero(), T::max)
    }

    /// `σ₋ = minᵢ σ_d(Tᵢ)`.
    pub fn sigma_minus(&self) -> T {
        self.maps.iter().map(|f| singular_values(&f.linear).smallest()).fold(T::infinity(), T::min)
    }

    pub fn validate(&self) -> ValidationReport<T> {
        let half = T::of(0.5);
        let mut maps = Vec::with_capacity(self.len());
        let mut violations = Vec::new();
        for (index, f) in self.maps.iter().enumerate() {
            let spectrum = singular_values(&f.linear);
            let (sigma_max, sigma_min) = (spectrum.largest(), spectrum.smallest());
            let det = f.linear.determinant();
            let singular_tol = T::of(16.0) * T::epsilon() * sigma_max;
            if det == T::zero() || sigma_min <= singular_tol {
                violations.push(Violation::NonBijective { map: index });
            }
            if sigma_max >= T::one() {
                violations.push(Violation::NotContraction { map: index, sigma: sigma_max.to_f64_lossy() });
            } else if self.strict && sigma_max >= half {
                violations.push(Violation::StrictBound { map: index, sigma: sigma_max.to_f64_lossy() });
            }
            maps.push(MapDiagnostics { sigma_max, sigma_min, det });
        }
        let strict_bound_ok = maps.iter().all(|d| d.sigma_max < half);
        ValidationReport { strict: self.strict, maps, violations, strict_bound_ok }
    }

    /// Fails unless `validate` is clean under the system's own strictness.
    pub fn require_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_clean() {
            Ok(())
        } else {
            let msg: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::Hypothesis(msg.join("; ")))
        }
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        if let Some(&letter) = w.letters().iter().find(|&&l| l >= self.len()) {
            return Err(Error::LetterOutOfRange { letter, alphabet: self.len() });
        }
        Ok(())
    }

    /// `T_w = T_{w₁} ⋯ T_{w_k}`; the empty word gives the identity.
    pub fn word_cocycle(&self, w: &Word) -> Result<Matrix<T>> {
        self.check_word(w)?;
        let mut acc = Matrix::identity(self.dim());
        let mut next = Matrix::identity(self.dim());
        for &letter in w.letters() {
            acc.mul_into(&self.maps[letter].linear, &mut next);
            std::mem::swap(&mut acc, &mut next);
        }
        Ok(acc)
    }

    /// Whether every `Tᵢ` is a scalar multiple of an orthogonal matrix, to
    /// relative tolerance `tol`.
    pub fn is_conformal(&self, tol: T) -> bool {
        let d = self.dim();
        self.maps.iter().all(|f| {
            let mut gram = Matrix::identity(d);
            f.linear.transpose().mul_into(&f.linear, &mut gram);
            let scale = (0..d).map(|i| gram.get(i, i)).sum::<T>() / T::of_usize(d);
            if scale == T::zero() {
                return false;
            }
            (0..d).all(|i| {
                (0..d).all(|j| {
                    let target = if i == j { scale } else { T::zero() };
                    (gram.get(i, j) - target).abs() <= tol * scale
                })
            })
        })
    }

    /// Whether every `Tᵢ` is diagonal and one ordering of the coordinates
    /// sorts all of their diagonals by non-increasing modulus. Products then
    /// stay diagonal with the same ordering and `φᵗ` is multiplicative.
    pub fn is_aligned_diagonal(&self) -> bool {
        let d = self.dim();
        let diagonal =
            self.maps.iter().all(|f| (0..d).all(|i| (0..d).all(|j| i == j || f.linear.get(i, j) == T::zero())));
        if !diagonal {
            return false;
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            for f in &self.maps {
                let (x, y) = (f.linear.get(a, a).abs(), f.linear.get(b, b).abs());
                if x != y {
                    return y.partial_cmp(&x).expect("finite");
                }
            }
            std::cmp::Ordering::Equal
        });
        self.maps
            .iter()
            .all(|f| order.windows(2).all(|w| f.linear.get(w[0], w[0]).abs() >= f.linear.get(w[1], w[1]).abs()))
    }

    /// Whether `D = 1` is known exactly: conformal to `1e-12` (or a few ulps
    /// in single precision) or aligned diagonal.
    pub fn has_unit_quasi_constant(&self) -> bool {
        let tol = T::of(1e-12).max(T::of(64.0) * T::epsilon());
        self.is_conformal(tol) || self.is_aligned_diagonal()
    }

    /// Estimates the quasimultiplicativity constant `D` at exponent `t` as the
    /// minimum of `φᵗ(T_{ww′}) / (φᵗ(T_w) φᵗ(T_{w′}))` over pairs of non-empty
    /// words of length at most `depth`.
    ///
    /// All pairs are checked when there are at most `sample_budget` of them,
    /// otherwise `sample_budget` pairs are drawn uniformly with a fixed seed.
    /// A sampled minimum can only over-estimate the infimum.
    pub fn estimate_d(&self, t: T, depth: usize, sample_budget: usize) -> Result<QuasiMultReport<T>> {
        if depth == 0 {
            return Err(Error::InvalidInput("depth must be at least 1".into()));
        }
        let exponent = SvfExponent::new(t, self.dim())?;
        let m = self.len() as u128;
        let word_count: u128 = (1..=depth as u32).map(|l| m.pow(l)).sum();
        const WORD_CAP: u128 = 1 << 40;
        if word_count > WORD_CAP {
            return Err(Error::Capacity { what: "quasimultiplicativity words", requested: word_count, cap: WORD_CAP });
        }
        let pairs = word_count * word_count;
        let exhaustive = pairs <= sample_budget as u128;

        let mut best = Worst { log_ratio: T::infinity(), pair: None };
        let mut prod = Matrix::identity(self.dim());
        let mut check = |a: &(Word, Matrix<T>, T), b: &(Word, Matrix<T>, T), best: &mut Worst<T>| {
            a.1.mul_into(&b.1, &mut prod);
            let log_ratio = log_phi_with(&exponent, &prod) - a.2 - b.2;
            if log_ratio < best.log_ratio {
                best.log_ratio = log_ratio;
                best.pair = Some((a.0.clone(), b.0.clone()));
            }
        };
        let entry = |w: Word| -> Result<(Word, Matrix<T>, T)> {
            let mat = self.word_cocycle(&w)?;
            let lp = log_phi_with(&exponent, &mat);
            Ok((w, mat, lp))
        };

        let checked = if exhaustive {
            let words = (1..=depth)
                .flat_map(|len| {
                    let count = (m as u64).pow(len as u32);
                    (0..count).map(move |idx| Word::from_index(idx, len, m as usize))
                })
                .map(entry)
                .collect::<Result<Vec<_>>>()?;
            for a in &words {
                for b in &words {
                    check(a, b, &mut best);
                }
            }
            pairs as u64
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d0d0);
            let draw = |rng: &mut ChaCha8Rng| -> Result<(Word, Matrix<T>, T)> {
                let mut idx = rng.random_range(0..word_count as u64);
                let mut len = 1usize;
                loop {
                    let count = (m as u64).pow(len as u32);
                    if idx < count {
                        break;
                    }
                    idx -= count;
                    len += 1;
                }
                entry(Word::from_index(idx, len, m as usize))
            };
            for _ in 0..sample_budget {
                let a = draw(&mut rng)?;
                let b = draw(&mut rng)?;
                check(&a, &b, &mut best);
            }
            sample_budget as u64
        };

        let (w, w2) = best.pair.expect("at least one pair checked");
        let d_estimate = best.log_ratio.exp().min(T::one());
        Ok(QuasiMultReport { t, depth, d_estimate, exhaustive, pairs_checked: checked, worst_pair: (w, w2) })
    }

    /// Radius `M` of a ball centred at the origin with `fᵢ(B(0,M)) ⊆ B(0,M)`
    /// for every map: `maxᵢ ‖aᵢ‖ / (1 − σ₁(Tᵢ))`. Requires contractions.
    pub fn invariant_radius(&self) -> T {
        self.maps
            .iter()
            .map(|f| {
                let norm = f.translation.iter().map(|&x| x * x).sum::<T>().sqrt();
                norm / (T::one() - singular_values(&f.linear).largest())
            })
            .fold(T::zero(), T::max)
    }

    /// `f_{w₁} ∘ ⋯ ∘ f_{w_k}(0)` together with `σ₊^{|w|} · M`, which bounds the
    /// distance from that point to the projection of any infinite extension
    /// of `w`.
    pub fn project_word(&self, w: &Word) -> Result<ProjectedPoint<T>> {
        self.check_word(w)?;
        let mut x = vec![T::zero(); self.dim()];
        for &letter in w.letters().iter().rev() {
            x = self.maps[letter].apply(&x);
        }
        let radius = self.sigma_plus().powi(w.len() as i32) * self.invariant_radius();
        Ok(ProjectedPoint { point: x, radius })
    }

    /// Searches the projective line, discretized into `resolution`
    /// directions, for a closed arc (a cone in the plane) that every `Tᵢ`
    /// maps into itself with at least one grid step of clearance on both
    /// sides. Shorter arcs are tried first.
    ///
    /// `None` means no such arc exists on this grid; it is not a proof that no
    /// invariant cone exists.
    pub fn cone_check_2d(&self, resolution: usize) -> Result<Option<Cone<T>>> {
        if self.dim() != 2 {
            return Err(Error::UnsupportedDimension { required: 2, found: self.dim() });
        }
        if resolution < 3 {
            return Err(Error::InvalidInput("angular resolution must be at least 3".into()));
        }
        let pi = T::PI();
        let step = pi / T::of_usize(resolution);
        let grid: Vec<T> = (0..resolution).map(|k| T::of_usize(k) * step).collect();
        let images: Vec<Vec<T>> =
            self.maps.iter().map(|f| grid.iter().map(|&theta| projective_image(&f.linear, theta)).collect()).collect();
        let orientation: Vec<bool> = self.maps.iter().map(|f| f.linear.determinant() > T::zero()).collect();

        for len in 2..resolution {
            let width = T::of_usize(len) * step;
            for start in 0..resolution {
                let end = (start + len) % resolution;
                let mut margin = T::infinity();
                let ok = images.iter().zip(&orientation).all(|(img, &positive)| {
                    let (a, b) = if positive { (img[start], img[end]) } else { (img[end], img[start]) };
                    match arc_clearance(grid[start], width, a, b) {
                        Some(c) if c >= step => {
                            margin = margin.min(c);
                            true
                        }
                        _ => false,
                    }
                });
                if ok {
                    return Ok(Some(Cone { start: grid[start], width, margin }));
                }
            }
        }
        Ok(None)
    }

    /// Re-checks a cone against each map with the clearance required at
    /// `resolution`.
    pub fn verify_cone(&self, cone: &Cone<T>, resolution: usize) -> Result<bool> {
        if self.dim() != 2 {
            return Err(Error::UnsupportedDimension { required: 2, found: self.dim() });
        }
        let step = T::PI() / T::of_usize(resolution);
        let end = cone.start + cone.width;
        Ok(self.maps.iter().all(|f| {
            let (a, b) = (projective_image(&f.linear, cone.start), projective_image(&f.linear, end));
            let (a, b) = if f.linear.determinant() > T::zero() { (a, b) } else { (b, a) };
            matches!(arc_clearance(cone.start, cone.width, a, b), Some(c) if c >= step)
        }))
    }
}

struct Worst<T> {
    log_ratio: T,
    pair: Option<(Word, Word)>,
}

fn wrap_pi<T: Scalar>(x: T) -> T {
    let pi = T::PI();
    let r = x % pi;
    let r = if r < T::zero() { r + pi } else { r };
    if r >= pi {
        T::zero()
    } else {
        r
    }
}

/// Direction angle in `[0, π)` of `T (cos θ, sin θ)`.
fn projective_image<T: Scalar>(m: &Matrix<T>, theta: T) -> T {
    let (s, c) = theta.sin_cos();
    let v = m.apply(&[c, s]);
    wrap_pi(v[1].atan2(v[0]))
}

/// The image arc runs counter-clockwise from `img_start` to `img_end`.
/// Returns the smaller of its clearances to the two ends of the arc
/// `[start, start + width]`, or `None` if it is not contained in it.
fn arc_clearance<T: Scalar>(start: T, width: T, img_start: T, img_end: T) -> Option<T> {
    let offset = wrap_pi(img_start - start);
    let img_width = wrap_pi(img_end - img_start);
    let after = width - offset - img_width;
    if offset > width || after < T::zero() {
        None
    } else {
        Some(offset.min(after))
    }
}

/// A closed arc `[start, start + width]` of the projective line (angles mod π).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cone<T> {
    pub start: T,
    pub width: T,
    /// Smallest clearance between an image arc and the cone boundary.
    pub margin: T,
}

impl<T: Scalar> Cone<T> {
    /// Whether the direction `theta` lies strictly inside the arc.
    pub fn contains(&self, theta: T) -> bool {
        let offset = wrap_pi(theta - self.start);
        offset > T::zero() && offset < self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoint<T> {
    pub point: Vec<T>,
    pub radius: T,
}

/// Outcome of [`AffineSystem::estimate_d`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiMultReport<T> {
    pub t: T,
    pub depth: usize,
    pub d_estimate: T,
    pub exhaustive: bool,
    pub pairs_checked: u64,
    pub worst_pair: (Word, Word),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapDiagnostics<T> {
    pub sigma_max: T,
    pub sigma_min: T,
    pub det: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonBijective {
        map: usize,
    },
    NotContraction {
        map: usize,
        sigma: f64,
    },
    /// `σ₁ ≥ 1/2`, outside the strict hypothesis.
    StrictBound {
        map: usize,
        sigma: f64,
    },
}

impl Violation {
    /// Violations that remain even in non-strict mode.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, Violation::StrictBound { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonBijective { map } => write!(f, "map {map}: non-bijective linear part"),
            Violation::NotContraction { map, sigma } => {
                write!(f, "map {map}: not a contraction (σ₁ = {sigma} ≥ 1)")
            }
            Violation::StrictBound { map, sigma } => write!(f, "map {map}: σ₁ ≥ 1/2 (σ₁ = {sigma})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport<T> {
    pub strict: bool,
    pub maps: Vec<MapDiagnostics<T>>,
    pub violations: Vec<Violation>,
    /// `maxᵢ σ₁(Tᵢ) < 1/2`, regardless of mode.
    pub strict_bound_ok: bool,
}

impl<T> ValidationReport<T> {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Free-function form of [`AffineSystem::validate`].
pub fn validate<T: Scalar>(sys: &AffineSystem<T>) -> ValidationReport<T> {
    sys.validate()
}

/// Free-function form of [`AffineSystem::word_cocycle`].
pub fn word_cocycle<T: Scalar>(sys: &AffineSystem<T>, w: &Word) -> Result<Matrix<T>> {
    sys.word_cocycle(w)
}

/// Free-function form of [`AffineSystem::estimate_d`].
pub fn estimate_d<T: Scalar>(
    sys: &AffineSystem<T>,
    t: T,
    depth: usize,
    sample_budget: usize,
) -> Result<QuasiMultReport<T>> {
    sys.estimate_d(t, depth, sample_budget)
}

/// Free-function form of [`AffineSystem::cone_check_2d`].
pub fn cone_check_2d<T: Scalar>(sys: &AffineSystem<T>, resolution: usize) -> Result<Option<Cone<T>>> {
    sys.cone_check_2d(resolution)
}

/// Free-function form of [`AffineSystem::project_word`].
pub fn project_word<T: Scalar>(sys: &AffineSystem<T>, w: &Word) -> Result<ProjectedPoint<T>> {
    sys.project_word(w)
}
