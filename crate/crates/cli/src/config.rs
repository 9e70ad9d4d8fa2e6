//! JSON job configuration.

use std::fmt;
use std::path::Path;

use affine_recur::{AffineSystem, LengthSchedule, Matrix, TargetPoint};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<V>(field: &str, msg: impl fmt::Display) -> Result<V, ConfigError> {
    Err(ConfigError(format!("{field}: {msg}")))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub task: TaskSpec,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default = "yes")]
    pub strict: bool,
    pub maps: Vec<MapSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    /// Row-major.
    pub linear: Vec<Vec<f64>>,
    #[serde(default)]
    pub translation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default)]
    pub preperiod: Option<Vec<usize>>,
    #[serde(default)]
    pub period: Option<Vec<usize>>,
    #[serde(default)]
    pub random: Option<RandomSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Linear {
        #[serde(rename = "L")]
        rate: f64,
    },
    Power {
        alpha: f64,
    },
    Log {
        c: f64,
    },
    LogCeil {
        c: f64,
    },
    Explicit {
        values: Vec<usize>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Uniform,
    Bernoulli { weights: Vec<f64> },
    NormalizedPhi { t: f64, level: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    /// Projections of every word of a fixed length.
    Words,
    /// A seeded chaos-game orbit.
    Chaos,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSpec {
    pub mode: RenderMode,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_side")]
    pub height: usize,
}

fn default_side() -> usize {
    512
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub depth: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub horizon: Option<usize>,
    /// A proven quasimultiplicativity constant.
    pub d_override: Option<f64>,
    pub s_grid: Option<Vec<f64>>,
    pub chi_depth: Option<usize>,
    /// Profile the modified pressure of the target instead of the ordinary one.
    #[serde(default)]
    pub modified: bool,
    pub measure: Option<MeasureSpec>,
    pub render: Option<RenderSpec>,
}

pub const DEFAULT_DEPTH: usize = 12;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_HORIZON: usize = 64;
pub const DEFAULT_CHI_DEPTH: usize = 4096;

impl JobConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn system(&self) -> Result<AffineSystem<f64>, ConfigError> {
        let maps = &self.system.maps;
        if maps.len() < 2 {
            return err("system.maps", "at least two maps are required");
        }
        let dim = maps[0].linear.len();
        let mut linears = Vec::with_capacity(maps.len());
        let mut translations = Vec::with_capacity(maps.len());
        for (i, map) in maps.iter().enumerate() {
            let field = format!("system.maps[{i}]");
            if map.linear.len() != dim || map.linear.iter().any(|row| row.len() != dim) {
                return err(&format!("{field}.linear"), format!("expected a {dim}x{dim} matrix"));
            }
            let m = Matrix::from_rows(&map.linear).or_else(|e| err(&format!("{field}.linear"), e))?;
            let a = map.translation.clone().unwrap_or_else(|| vec![0.0; dim]);
            if a.len() != dim {
                return err(&format!("{field}.translation"), format!("expected {dim} entries, found {}", a.len()));
            }
            if a.iter().any(|x| !x.is_finite()) {
                return err(&format!("{field}.translation"), "entries must be finite");
            }
            linears.push(m);
            translations.push(a);
        }
        let sys = AffineSystem::from_parts(linears, translations).or_else(|e| err("system.maps", e))?;
        Ok(sys.with_strict(self.system.strict))
    }

    pub fn target(&self, alphabet: usize) -> Result<TargetPoint, ConfigError> {
        let Some(spec) = &self.target else { return err("target", "missing") };
        match (&spec.period, &spec.random) {
            (Some(period), None) => {
                TargetPoint::periodic(spec.preperiod.clone().unwrap_or_default(), period.clone(), alphabet)
                    .or_else(|e| err("target", e))
            }
            (None, Some(r)) => {
                if spec.preperiod.is_some() {
                    return err("target.preperiod", "not allowed with a random target");
                }
                TargetPoint::random(r.seed, alphabet).or_else(|e| err("target.random", e))
            }
            _ => err("target", "give exactly one of `period` or `random`"),
        }
    }

    pub fn schedule(&self) -> Result<LengthSchedule, ConfigError> {
        let Some(spec) = &self.schedule else { return err("schedule", "missing") };
        let sched = match spec {
            ScheduleSpec::Linear { rate } => LengthSchedule::Linear { rate: *rate },
            ScheduleSpec::Power { alpha } => LengthSchedule::Power { alpha: *alpha },
            ScheduleSpec::Log { c } => LengthSchedule::Log { c: *c },
            ScheduleSpec::LogCeil { c } => LengthSchedule::LogCeil { c: *c },
            ScheduleSpec::Explicit { values } => LengthSchedule::Explicit { values: values.clone() },
        };
        sched.validate().or_else(|e| err("schedule", e))?;
        Ok(sched)
    }

    pub fn depth(&self) -> usize {
        self.task.depth.unwrap_or(DEFAULT_DEPTH)
    }

    pub fn tol(&self) -> f64 {
        self.task.tol.unwrap_or(DEFAULT_TOL)
    }

    pub fn seed(&self) -> u64 {
        self.task.seed.unwrap_or(0)
    }

    pub fn d_override(&self) -> Result<Option<f64>, ConfigError> {
        match self.task.d_override {
            Some(d) if !(d > 0.0 && d <= 1.0) => err("task.d_override", "must lie in (0, 1]"),
            d => Ok(d),
        }
    }

    /// Applies command line overrides.
    pub fn override_with(&mut self, depth: Option<usize>, tol: Option<f64>, seed: Option<u64>) {
        if depth.is_some() {
            self.task.depth = depth;
        }
        if tol.is_some() {
            self.task.tol = tol;
        }
        if seed.is_some() {
            self.task.seed = seed;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANTOR: &str = r#"{
        "system": {"maps": [
            {"linear": [[0.3333333333333333]], "translation": [0.0]},
            {"linear": [[0.3333333333333333]], "translation": [0.6666666666666666]}
        ]},
        "target": {"period": [0]},
        "schedule": {"kind": "linear", "L": 1.0}
    }"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = JobConfig::parse(CANTOR).unwrap();
        let sys = cfg.system().unwrap();
        assert_eq!((sys.len(), sys.dim()), (2, 1));
        assert_eq!(cfg.schedule().unwrap(), LengthSchedule::Linear { rate: 1.0 });
        assert_eq!(cfg.target(2).unwrap().truncate(3).letters(), &[0, 0, 0]);
        assert_eq!(cfg.depth(), DEFAULT_DEPTH);
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let text = CANTOR.replace("\"L\": 1.0", "\"L\": 1.0, \"rate\": 2");
        let e = JobConfig::parse(&text).unwrap_err();
        assert!(e.0.contains("unknown field `rate`"), "{e}");
        // Tagged unions are buffered, so the position is where the object ends.
        assert!(e.0.contains("line 8"), "{e}");
        let text = CANTOR.replace("\"system\"", "\"extra\": 1, \"system\"");
        assert!(JobConfig::parse(&text).unwrap_err().0.contains("unknown field `extra`"));
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let text = CANTOR.replace("[[0.3333333333333333]], \"translation\": [0.6666666666666666]", "[[0.5, 0.1]]");
        let e = JobConfig::parse(&text).unwrap().system().unwrap_err();
        assert!(e.0.starts_with("system.maps[1].linear"), "{e}");
        let text = CANTOR.replace("\"period\": [0]", "\"period\": [0], \"random\": {\"seed\": 1}");
        assert!(JobConfig::parse(&text).unwrap().target(2).is_err());
        let text = CANTOR.replace("\"period\": [0]", "\"period\": [3]");
        assert!(JobConfig::parse(&text).unwrap().target(2).unwrap_err().0.starts_with("target"));
        let text = CANTOR.replace("\"kind\": \"linear\", \"L\": 1.0", "\"kind\": \"power\", \"alpha\": 1.0");
        assert!(JobConfig::parse(&text).unwrap().schedule().unwrap_err().0.starts_with("schedule"));
    }
}
