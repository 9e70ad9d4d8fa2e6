//! Subcommand implementations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use affine_recur::{
    pressure_profile, simulate_recurrence, solver, AffineSystem, CylinderMeasure, Error, SolveOptions, Word,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{JobConfig, MeasureSpec, RenderMode, DEFAULT_CHI_DEPTH, DEFAULT_HORIZON, DEFAULT_SAMPLES};
use crate::report::{
    self, CheckSummary, ConeReport, DimSummary, MapReport, QuasiReport, RenderSummary, SimulationSummary,
};

/// Most points the `words` render mode will project.
const RENDER_WORD_CAP: u64 = 1 << 22;
const CONE_RESOLUTION: usize = 512;
const CONE_VERIFY_RESOLUTION: usize = 4096;
const CHAOS_BURN_IN: usize = 64;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Hypothesis(String),
    Capacity(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Hypothesis(_) => 1,
            Failure::Capacity(_) => 2,
            Failure::Config(_) | Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Hypothesis(m) => write!(f, "hypothesis violated: {m}"),
            Failure::Capacity(m) => write!(f, "capacity exceeded: {m} (lower --depth or the horizon)"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<crate::config::ConfigError> for Failure {
    fn from(e: crate::config::ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Hypothesis(m) => Failure::Hypothesis(m),
            e @ Error::Capacity { .. } => Failure::Capacity(e.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Exit code of a subcommand that ran to completion.
pub type Outcome = Result<u8, Failure>;

fn out_path(dir: &Path, name: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir.join(name))
}

fn strict_system(cfg: &JobConfig) -> Result<AffineSystem<f64>, Failure> {
    let sys = cfg.system()?;
    sys.require_valid()?;
    Ok(sys)
}

fn solve_options(cfg: &JobConfig) -> Result<SolveOptions<f64>, Failure> {
    let mut opts = SolveOptions::new(cfg.depth(), cfg.tol());
    opts.d = cfg.d_override()?;
    opts.chi_depth = cfg.task.chi_depth.unwrap_or(DEFAULT_CHI_DEPTH);
    Ok(opts)
}

pub fn check(cfg: &JobConfig, out: &Path) -> Outcome {
    let sys = cfg.system()?;
    let validation = sys.validate();
    let strict_ok = !validation.violations.iter().any(|v| v.is_fatal()) && validation.strict_bound_ok;
    let mut violations: Vec<String> = validation.violations.iter().map(|v| v.to_string()).collect();
    if !validation.strict_bound_ok && !violations.iter().any(|v| v.contains("1/2")) {
        violations.push("max σ₁ ≥ 1/2 (allowed in non-strict mode)".into());
    }
    let cone_searched = sys.dim() == 2;
    let cone = if cone_searched {
        match sys.cone_check_2d(CONE_RESOLUTION)? {
            Some(c) => Some(ConeReport {
                start: c.start,
                width: c.width,
                margin: c.margin,
                verified_fine_grid: sys.verify_cone(&c, CONE_VERIFY_RESOLUTION)?,
            }),
            None => None,
        }
    } else {
        None
    };
    let dim = sys.dim() as f64;
    let exponents = cfg.task.s_grid.clone().unwrap_or_else(|| vec![dim / 2.0]);
    let exact = sys.has_unit_quasi_constant();
    let mut quasi = Vec::with_capacity(exponents.len());
    for &t in &exponents {
        if exact {
            quasi.push(QuasiReport { t, d: 1.0, exact: true, exhaustive: true, pairs_checked: 0 });
        } else {
            let r = sys.estimate_d(t, 4, 1 << 14)?;
            quasi.push(QuasiReport {
                t,
                d: r.d_estimate,
                exact: false,
                exhaustive: r.exhaustive,
                pairs_checked: r.pairs_checked,
            });
        }
    }
    let maps = validation
        .maps
        .iter()
        .map(|m| MapReport { sigma_max: m.sigma_max, sigma_min: m.sigma_min, det: m.det })
        .collect();
    let summary = CheckSummary { maps, violations, strict_ok, cone, cone_searched, quasi_multiplicativity: quasi };

    for v in &summary.violations {
        println!("violation: {v}");
    }
    println!("strict hypotheses: {}", if strict_ok { "pass" } else { "fail" });
    match &summary.cone {
        Some(c) => println!("invariant cone: start {:.6} width {:.6} margin {:.6}", c.start, c.width, c.margin),
        None if cone_searched => println!("invariant cone: none found on the grid"),
        None => println!("invariant cone: not applicable in dimension {}", sys.dim()),
    }
    for q in &summary.quasi_multiplicativity {
        let how = if q.exact {
            "exact"
        } else if q.exhaustive {
            "exhaustive estimate"
        } else {
            "sampled estimate"
        };
        println!("D(t = {}) = {} ({how})", q.t, q.d);
    }
    report::write_json(&out_path(out, "check.json")?, &summary)?;
    Ok(if strict_ok { 0 } else { 1 })
}

fn print_dim(s: &DimSummary) {
    println!("enclosure: [{}, {}]", s.lower, s.upper);
    if let Some(regime) = &s.regime {
        match s.linear_rate {
            Some(l) => println!("regime: {regime} (L = {l})"),
            None => println!("regime: {regime}"),
        }
    }
    let mut flags = Vec::new();
    for (on, name) in [
        (s.heuristic_d, "heuristic_d"),
        (s.heuristic_chi, "heuristic_chi"),
        (s.clamped_at_d, "clamped_at_d"),
        (s.depth_limited, "depth_limited"),
    ] {
        if on {
            flags.push(name);
        }
    }
    println!(
        "depth used: {}{}",
        s.depth_used,
        if flags.is_empty() { String::new() } else { format!(" [{}]", flags.join(", ")) }
    );
}

pub fn dim(cfg: &JobConfig, out: &Path) -> Outcome {
    let sys = strict_system(cfg)?;
    let r = solver::solve_affinity_dimension_with(&sys, &solve_options(cfg)?)?;
    let summary = DimSummary::from(&r);
    print_dim(&summary);
    report::write_json(&out_path(out, "dim.json")?, &summary)?;
    Ok(0)
}

pub fn starget(cfg: &JobConfig, out: &Path) -> Outcome {
    let sys = strict_system(cfg)?;
    let target = cfg.target(sys.len())?;
    let schedule = cfg.schedule()?;
    let r = solver::solve_shrinking_target_dimension_with(&sys, &target, &schedule, &solve_options(cfg)?)?;
    let summary = DimSummary::from(&r);
    print_dim(&summary);
    report::write_json(&out_path(out, "starget.json")?, &summary)?;
    Ok(0)
}

pub fn pressure(cfg: &JobConfig, out: &Path) -> Outcome {
    let sys = strict_system(cfg)?;
    let d = sys.dim() as f64;
    let grid = cfg.task.s_grid.clone().unwrap_or_else(|| (0..=16).map(|i| d * i as f64 / 16.0).collect());
    let opts = solve_options(cfg)?;
    let rows = if cfg.task.modified {
        let target = cfg.target(sys.len())?;
        let schedule = cfg.schedule()?;
        pressure_profile(&sys, Some((&target, &schedule)), &grid, cfg.depth(), &opts)?
    } else {
        pressure_profile(&sys, None, &grid, cfg.depth(), &opts)?
    };
    let path = out_path(out, "pressure.csv")?;
    report::write_pressure_csv(&path, &rows)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(0)
}

fn measure(cfg: &JobConfig, sys: &AffineSystem<f64>) -> Result<CylinderMeasure<f64>, Failure> {
    Ok(match &cfg.task.measure {
        None | Some(MeasureSpec::Uniform) => CylinderMeasure::uniform(sys),
        Some(MeasureSpec::Bernoulli { weights }) => CylinderMeasure::bernoulli(sys, weights.clone())
            .map_err(|e| Failure::Config(format!("task.measure.weights: {e}")))?,
        Some(MeasureSpec::NormalizedPhi { t, level }) => CylinderMeasure::normalized_phi(sys, *t, *level)?,
    })
}

pub fn simulate(cfg: &JobConfig, out: &Path) -> Outcome {
    let sys = strict_system(cfg)?;
    let target = cfg.target(sys.len())?;
    let schedule = cfg.schedule()?;
    let mu = measure(cfg, &sys)?;
    let horizon = cfg.task.horizon.unwrap_or(DEFAULT_HORIZON);
    let samples = cfg.task.samples.unwrap_or(DEFAULT_SAMPLES);
    let report = simulate_recurrence(&mu, &target, &schedule, horizon, samples, cfg.seed())?;
    let summary = SimulationSummary::from(&report);
    report::write_simulation_csv(&out_path(out, "simulate.csv")?, &report)?;
    report::write_json(&out_path(out, "simulate.json")?, &summary)?;
    println!("partial sum to K = {}: {}", horizon, summary.partial_sum);
    println!("fraction with a hit: {}", summary.any_hit);
    println!("series: {}{}", summary.series, if summary.series_exact { " (exact)" } else { " (diagnostic only)" });
    Ok(0)
}

fn project_words(sys: &AffineSystem<f64>, depth: usize) -> Result<Vec<Vec<f64>>, Failure> {
    if depth == 0 {
        return Err(Failure::Config("task.render.depth: the word budget is empty".into()));
    }
    let m = sys.len() as u64;
    let count = m.checked_pow(depth as u32).filter(|&c| c <= RENDER_WORD_CAP).ok_or_else(|| {
        Failure::Capacity(format!("{}^{depth} words exceeds the render cap of {RENDER_WORD_CAP}", sys.len()))
    })?;
    (0..count).map(|i| Ok(sys.project_word(&Word::from_index(i, depth, sys.len()))?.point)).collect()
}

fn chaos_game(sys: &AffineSystem<f64>, points: usize, seed: u64) -> Result<Vec<Vec<f64>>, Failure> {
    if points == 0 {
        return Err(Failure::Config("task.render.points: the point budget is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; sys.dim()];
    let mut out = Vec::with_capacity(points);
    for step in 0..CHAOS_BURN_IN + points {
        x = sys.maps()[rng.random_range(0..sys.len())].apply(&x);
        if step >= CHAOS_BURN_IN {
            out.push(x.clone());
        }
    }
    Ok(out)
}

pub fn render(cfg: &JobConfig, out: &Path) -> Outcome {
    let sys = cfg.system()?;
    let Some(spec) = &cfg.task.render else { return Err(Failure::Config("task.render: missing".into())) };
    if spec.width == 0 || spec.height == 0 {
        return Err(Failure::Config("task.render: width and height must be positive".into()));
    }
    let (mode, points) = match spec.mode {
        RenderMode::Words => ("words", project_words(&sys, spec.depth.unwrap_or(cfg.depth()))?),
        RenderMode::Chaos => ("chaos", chaos_game(&sys, spec.points.unwrap_or(DEFAULT_SAMPLES), cfg.seed())?),
    };
    let d = sys.dim();
    let mut lower = vec![f64::INFINITY; d];
    let mut upper = vec![f64::NEG_INFINITY; d];
    for p in &points {
        for i in 0..d {
            lower[i] = lower[i].min(p[i]);
            upper[i] = upper[i].max(p[i]);
        }
    }
    report::write_points_csv(&out_path(out, "points.csv")?, d, &points)?;
    report::write_ppm(&out_path(out, "render.ppm")?, &points, &lower, &upper, spec.width, spec.height)?;
    let summary = RenderSummary {
        mode: mode.into(),
        points: points.len(),
        lower_corner: lower,
        upper_corner: upper,
        width: spec.width,
        height: spec.height,
    };
    report::write_json(&out_path(out, "render.json")?, &summary)?;
    println!("rendered {} points ({mode})", summary.points);
    Ok(0)
}
