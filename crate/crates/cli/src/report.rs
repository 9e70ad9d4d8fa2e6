//! Machine-readable summaries and file writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use affine_recur::{DimensionKind, DimensionResult, ProfileRow, Regime, SeriesBehaviour, SimulationReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapReport {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeReport {
    pub start: f64,
    pub width: f64,
    pub margin: f64,
    pub verified_fine_grid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiReport {
    pub t: f64,
    pub d: f64,
    /// `D = 1` holds exactly (conformal or aligned diagonal maps).
    pub exact: bool,
    pub exhaustive: bool,
    pub pairs_checked: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSummary {
    pub maps: Vec<MapReport>,
    pub violations: Vec<String>,
    pub strict_ok: bool,
    /// `None` when the cone search does not apply (dimension other than 2).
    pub cone: Option<ConeReport>,
    pub cone_searched: bool,
    pub quasi_multiplicativity: Vec<QuasiReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimSummary {
    pub kind: String,
    pub lower: f64,
    pub upper: f64,
    pub regime: Option<String>,
    pub linear_rate: Option<f64>,
    pub depth_used: usize,
    pub heuristic_d: bool,
    pub clamped_at_d: bool,
    pub depth_limited: bool,
    pub heuristic_chi: bool,
}

impl From<&DimensionResult<f64>> for DimSummary {
    fn from(r: &DimensionResult<f64>) -> Self {
        let (regime, linear_rate) = match r.regime {
            None => (None, None),
            Some(Regime::Sublinear) => (Some("sublinear"), None),
            Some(Regime::Linear(l)) => (Some("linear"), Some(l)),
            Some(Regime::Superlinear) => (Some("superlinear"), None),
            Some(Regime::Unclassified) => (Some("unclassified"), None),
        };
        DimSummary {
            kind: match r.kind {
                DimensionKind::AffinityDim => "affinity",
                DimensionKind::ShrinkingTargetDim => "shrinking_target",
            }
            .into(),
            lower: r.lower,
            upper: r.upper,
            regime: regime.map(String::from),
            linear_rate,
            depth_used: r.depth_used,
            heuristic_d: r.heuristic_d,
            clamped_at_d: r.clamped_at_d,
            depth_limited: r.depth_limited,
            heuristic_chi: r.heuristic_chi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSummary {
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    pub any_hit: f64,
    pub partial_sum: f64,
    /// Largest `|rate − expected|` over `k`, in standard errors.
    pub max_deviation: f64,
    pub series: String,
    pub series_exact: bool,
    pub series_exponent: Option<f64>,
    pub tail_ratio: f64,
}

impl From<&SimulationReport> for SimulationSummary {
    fn from(r: &SimulationReport) -> Self {
        SimulationSummary {
            horizon: r.horizon,
            samples: r.samples,
            seed: r.seed,
            any_hit: r.any_hit,
            partial_sum: r.rows.last().map(|row| row.partial_sum).unwrap_or(0.0),
            max_deviation: r.rows.iter().map(|row| row.deviation()).fold(0.0, f64::max),
            series: match r.series.behaviour {
                SeriesBehaviour::Converges => "converges",
                SeriesBehaviour::Diverges => "diverges",
                SeriesBehaviour::Unknown => "unknown",
            }
            .into(),
            series_exact: r.series.exact,
            series_exponent: r.series.exponent,
            tail_ratio: r.series.tail_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSummary {
    pub mode: String,
    pub points: usize,
    pub lower_corner: Vec<f64>,
    pub upper_corner: Vec<f64>,
    pub width: usize,
    pub height: usize,
}

#[derive(Serialize)]
struct PressureRecord {
    s: f64,
    lower: f64,
    upper: f64,
    heuristic: bool,
}

#[derive(Serialize)]
struct SimulationRecord {
    k: usize,
    length: usize,
    hits: u64,
    rate: f64,
    expected: f64,
    std_error: f64,
    cylinder_mass: f64,
    partial_sum: f64,
    tail_fraction: f64,
}

fn csv_writer(path: &Path) -> std::io::Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(fs::File::create(path)?))
}

fn csv_error(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn write_pressure_csv(path: &Path, rows: &[ProfileRow<f64>]) -> std::io::Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(PressureRecord { s: r.s, lower: r.lower, upper: r.upper, heuristic: r.heuristic })
            .map_err(csv_error)?;
    }
    w.flush()
}

pub fn write_simulation_csv(path: &Path, report: &SimulationReport) -> std::io::Result<()> {
    let mut w = csv_writer(path)?;
    for r in &report.rows {
        w.serialize(SimulationRecord {
            k: r.k,
            length: r.length,
            hits: r.hits,
            rate: r.rate,
            expected: r.expected,
            std_error: r.std_error,
            cylinder_mass: r.cylinder_mass,
            partial_sum: r.partial_sum,
            tail_fraction: r.tail_fraction,
        })
        .map_err(csv_error)?;
    }
    w.flush()
}

pub fn write_points_csv(path: &Path, dim: usize, points: &[Vec<f64>]) -> std::io::Result<()> {
    let mut w = csv_writer(path)?;
    let header: Vec<String> = match dim {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (1..=dim).map(|i| format!("x{i}")).collect(),
    };
    w.write_record(&header).map_err(csv_error)?;
    for p in points {
        w.write_record(p.iter().map(|x| x.to_string())).map_err(csv_error)?;
    }
    w.flush()
}

/// Binary PPM of the first two coordinates, black points on white. One
/// dimensional point sets are drawn as vertical strokes across the middle
/// third of the image.
pub fn write_ppm(
    path: &Path,
    points: &[Vec<f64>],
    lower: &[f64],
    upper: &[f64],
    width: usize,
    height: usize,
) -> std::io::Result<()> {
    let mut pixels = vec![255u8; width * height * 3];
    let span = |i: usize| {
        let s = upper[i] - lower[i];
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    let to_pixel = |x: f64, lo: f64, s: f64, n: usize| {
        (((x - lo) / s) * (n - 1) as f64).round().clamp(0.0, (n - 1) as f64) as usize
    };
    for p in points {
        let col = to_pixel(p[0], lower[0], span(0), width);
        let rows = if p.len() == 1 {
            height / 3..(2 * height / 3).max(height / 3 + 1)
        } else {
            // Image rows grow downwards.
            let row = height - 1 - to_pixel(p[1], lower[1], span(1), height);
            row..row + 1
        };
        for row in rows {
            let at = (row * width + col) * 3;
            pixels[at..at + 3].copy_from_slice(&[0, 0, 0]);
        }
    }
    let mut f = fs::File::create(path)?;
    write!(f, "P6\n{width} {height}\n255\n")?;
    f.write_all(&pixels)
}
