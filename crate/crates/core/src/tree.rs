//! Depth-first enumeration of the `m`-ary word tree.
//!
//! Every partition sum in the crate is a sum of `φᵗ` over the leaves of a
//! word tree, possibly with some positions forced to a fixed letter and with
//! fixed matrices multiplied on the left and right of each leaf product. The
//! tree is cut at a fixed number of free positions into independent jobs.
//! Jobs run on the rayon pool and their partial log-sums are merged in
//! lexicographic job order, so results do not depend on the worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ifs::AffineSystem;
use crate::logsum::LogSumExp;
use crate::scalar::Scalar;
use crate::svf::{log_phi_with, Matrix, SvfExponent};

/// Limits on tree enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeConfig {
    /// Maximum number of leaf products a single sum may visit.
    pub leaf_cap: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { leaf_cap: 1 << 26 }
    }
}

/// Minimum number of subtrees the enumeration is split into. Fixed, so the
/// reduction order is the same for any number of workers.
const PARTITION_JOBS: u64 = 64;

/// A matrix stored as `exp(log_scale) · mat` with `mat` kept near unit size.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ScaledMatrix<T> {
    pub mat: Matrix<T>,
    pub log_scale: T,
}

impl<T: Scalar> ScaledMatrix<T> {
    pub fn identity(dim: usize) -> Self {
        Self { mat: Matrix::identity(dim), log_scale: T::zero() }
    }

    /// `T_{letters}` built by successive right multiplication.
    pub fn from_letters(sys: &AffineSystem<T>, letters: &[usize]) -> Self {
        let mut out = Self::identity(sys.dim());
        let mut buf = Matrix::identity(sys.dim());
        for &l in letters {
            out.push(sys.linear(l), &mut buf);
        }
        out
    }

    /// Right-multiplies by `rhs`, using `buf` as scratch.
    pub fn push(&mut self, rhs: &Matrix<T>, buf: &mut Matrix<T>) {
        self.mat.mul_into(rhs, buf);
        std::mem::swap(&mut self.mat, buf);
        self.log_scale = self.log_scale + self.mat.renormalize();
    }

    pub fn log_phi(&self, exponent: &SvfExponent<T>) -> T {
        log_phi_with(exponent, &self.mat) + exponent.value() * self.log_scale
    }

    pub fn is_identity(&self) -> bool {
        self.log_scale == T::zero() && self.mat == Matrix::identity(self.mat.dim())
    }
}

fn checked_leaves(m: usize, free: usize, cfg: &TreeConfig) -> Result<u64> {
    let leaves = (m as u128).checked_pow(free as u32).unwrap_or(u128::MAX);
    if leaves > cfg.leaf_cap as u128 {
        return Err(Error::Capacity { what: "word-tree leaves", requested: leaves, cap: cfg.leaf_cap as u128 });
    }
    Ok(leaves as u64)
}

/// Number of leading free positions used to split the tree into jobs.
fn partition_free_slots(m: usize, free: usize) -> usize {
    let mut p = 0;
    let mut jobs = 1u64;
    while p < free && jobs < PARTITION_JOBS {
        jobs *= m as u64;
        p += 1;
    }
    p
}

/// A sum `Σ φᵗ(T_head · T_w · T_tail)` over words `w` of length `slots.len()`
/// whose forced positions (`Some(letter)`) match.
pub(crate) struct ConstrainedSum<'a, T> {
    pub sys: &'a AffineSystem<T>,
    pub exponent: SvfExponent<T>,
    pub head: &'a ScaledMatrix<T>,
    pub slots: &'a [Option<usize>],
    pub tail: &'a ScaledMatrix<T>,
}

struct Job<T> {
    pos: usize,
    product: ScaledMatrix<T>,
}

struct Walker<'a, T> {
    sum: &'a ConstrainedSum<'a, T>,
    products: Vec<ScaledMatrix<T>>,
    leaf: Matrix<T>,
    tail_is_identity: bool,
    /// `(log tolerance, log bound on the remaining factors from each position)`
    prune: Option<(T, Vec<T>)>,
    log_phi_tail: T,
}

impl<'a, T: Scalar> Walker<'a, T> {
    fn new(sum: &'a ConstrainedSum<'a, T>, prune: Option<(T, Vec<T>)>) -> Self {
        let d = sum.sys.dim();
        Self {
            sum,
            products: vec![ScaledMatrix::identity(d); sum.slots.len() + 1],
            leaf: Matrix::identity(d),
            tail_is_identity: sum.tail.is_identity(),
            log_phi_tail: sum.tail.log_phi(&sum.exponent),
            prune,
        }
    }

    fn leaf_value(&mut self, pos: usize) -> T {
        let node = &self.products[pos];
        let e = &self.sum.exponent;
        if self.tail_is_identity {
            node.log_phi(e)
        } else {
            node.mat.mul_into(&self.sum.tail.mat, &mut self.leaf);
            log_phi_with(e, &self.leaf) + e.value() * (node.log_scale + self.sum.tail.log_scale)
        }
    }

    fn child(&mut self, pos: usize, letter: usize) {
        let (left, right) = self.products.split_at_mut(pos + 1);
        let parent = &left[pos];
        let out = &mut right[0];
        parent.mat.mul_into(self.sum.sys.linear(letter), &mut out.mat);
        out.log_scale = parent.log_scale + out.mat.renormalize();
    }

    fn walk(&mut self, pos: usize, acc: &mut LogSumExp<T>) {
        let n = self.sum.slots.len();
        if pos == n {
            let v = self.leaf_value(pos);
            acc.add(v);
            return;
        }
        if let Some((log_tol, bounds)) = &self.prune {
            let node = &self.products[pos];
            let bound = node.log_phi(&self.sum.exponent) + bounds[pos] + self.log_phi_tail;
            if bound < acc.value() + *log_tol {
                acc.add(bound);
                return;
            }
        }
        match self.sum.slots[pos] {
            Some(letter) => {
                self.child(pos, letter);
                self.walk(pos + 1, acc);
            }
            None => {
                for letter in 0..self.sum.sys.len() {
                    self.child(pos, letter);
                    self.walk(pos + 1, acc);
                }
            }
        }
    }
}

impl<'a, T: Scalar> ConstrainedSum<'a, T> {
    fn jobs(&self, split: usize) -> Vec<Job<T>> {
        let mut jobs = vec![Job { pos: 0, product: self.head.clone() }];
        let mut assigned = 0;
        let mut scratch = Matrix::identity(self.sys.dim());
        while assigned < split {
            let mut next = Vec::with_capacity(jobs.len() * self.sys.len());
            for job in jobs {
                // Apply forced positions up to the next free one.
                let mut pos = job.pos;
                let mut product = job.product;
                while let Some(Some(letter)) = self.slots.get(pos) {
                    product.push(self.sys.linear(*letter), &mut scratch);
                    pos += 1;
                }
                for letter in 0..self.sys.len() {
                    let mut p = product.clone();
                    p.push(self.sys.linear(letter), &mut scratch);
                    next.push(Job { pos: pos + 1, product: p });
                }
            }
            jobs = next;
            assigned += 1;
        }
        jobs
    }

    fn log_sum_inner(&self, cfg: &TreeConfig, prune_log_tol: Option<T>) -> Result<T> {
        let m = self.sys.len();
        let free = self.slots.iter().filter(|s| s.is_none()).count();
        checked_leaves(m, free, cfg)?;
        let prune = prune_log_tol.map(|log_tol| {
            let one_step: Vec<T> = (0..m).map(|i| log_phi_with(&self.exponent, self.sys.linear(i))).collect();
            let free_bound = {
                let mut acc = LogSumExp::new();
                for &v in &one_step {
                    acc.add(v);
                }
                acc.value()
            };
            let mut bounds = vec![T::zero(); self.slots.len() + 1];
            for pos in (0..self.slots.len()).rev() {
                let step = match self.slots[pos] {
                    Some(letter) => one_step[letter],
                    None => free_bound,
                };
                bounds[pos] = bounds[pos + 1] + step;
            }
            (log_tol, bounds)
        });
        let jobs = self.jobs(partition_free_slots(m, free));
        let partials: Vec<LogSumExp<T>> = jobs
            .into_par_iter()
            .map(|job| {
                let mut walker = Walker::new(self, prune.clone());
                walker.products[job.pos] = job.product;
                let mut acc = LogSumExp::new();
                walker.walk(job.pos, &mut acc);
                acc
            })
            .collect();
        let mut total = LogSumExp::new();
        for p in &partials {
            total.merge(p);
        }
        Ok(total.value())
    }

    pub fn log_sum(&self, cfg: &TreeConfig) -> Result<T> {
        self.log_sum_inner(cfg, None)
    }

    /// An upper bound on the sum: subtrees whose submultiplicative bound is
    /// below `exp(log_tol)` times the running total are replaced by that bound.
    pub fn log_sum_upper(&self, cfg: &TreeConfig, log_tol: T) -> Result<T> {
        self.log_sum_inner(cfg, Some(log_tol))
    }
}

/// `log Σ_{|w|=ℓ} φᵗ(T_w)` for every `ℓ = 1, …, depth`, from one traversal.
pub(crate) fn level_log_sums<T: Scalar>(
    sys: &AffineSystem<T>,
    exponent: SvfExponent<T>,
    depth: usize,
    cfg: &TreeConfig,
) -> Result<Vec<T>> {
    let m = sys.len();
    checked_leaves(m, depth, cfg)?;
    let split = partition_free_slots(m, depth);
    let slots = vec![None; depth];
    let identity = ScaledMatrix::identity(sys.dim());
    let sum = ConstrainedSum { sys, exponent, head: &identity, slots: &slots, tail: &identity };

    let mut totals = vec![LogSumExp::new(); depth];
    {
        let mut walker = Walker::new(&sum, None);
        walk_levels(&mut walker, 0, split.saturating_sub(1), &mut totals);
    }
    if split > 0 {
        let jobs = sum.jobs(split);
        let partials: Vec<Vec<LogSumExp<T>>> = jobs
            .into_par_iter()
            .map(|job| {
                let mut walker = Walker::new(&sum, None);
                walker.products[job.pos] = job.product;
                let mut accs = vec![LogSumExp::new(); depth];
                walk_levels(&mut walker, job.pos, depth, &mut accs);
                accs
            })
            .collect();
        for part in &partials {
            for (total, p) in totals.iter_mut().zip(part) {
                total.merge(p);
            }
        }
    }
    Ok(totals.iter().map(|a| a.value()).collect())
}

fn walk_levels<T: Scalar>(walker: &mut Walker<'_, T>, pos: usize, max_depth: usize, accs: &mut [LogSumExp<T>]) {
    if pos >= 1 {
        let v = walker.products[pos].log_phi(&walker.sum.exponent);
        accs[pos - 1].add(v);
    }
    if pos < max_depth {
        for letter in 0..walker.sum.sys.len() {
            walker.child(pos, letter);
            walk_levels(walker, pos + 1, max_depth, accs);
        }
    }
}
