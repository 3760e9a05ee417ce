//! Run configuration: an optional TOML file with `[run]` and `[integrator]`
//! sections, overridden field by field by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use resflow::flow::IntegratorConfig;
use resflow::{InverseOperator, Problem};
use serde::{Deserialize, Serialize, Serializer};

use crate::CliError;

pub const DEFAULT_SAMPLES: usize = 200;
pub const DEFAULT_OUTPUT_DIR: &str = "resflow-out";

/// Which approximate inverse to build for a problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorSpec {
    ExactNewton,
    /// `−F′(x₀)⁻¹`, or its pseudo-inverse for rectangular problems.
    Frozen,
    /// `M ≡ c·I`.
    FrozenScalar(f64),
    Diagonal,
    Damped(f64),
}

impl OperatorSpec {
    pub fn build(&self, problem: &Problem) -> resflow::Result<InverseOperator> {
        match *self {
            OperatorSpec::ExactNewton => InverseOperator::exact_newton(problem),
            OperatorSpec::Frozen => InverseOperator::frozen_jacobian(problem),
            OperatorSpec::FrozenScalar(c) => InverseOperator::frozen_scalar(problem, c),
            OperatorSpec::Diagonal => InverseOperator::diagonal(problem),
            OperatorSpec::Damped(lambda) => InverseOperator::damped(problem, lambda),
        }
    }
}

fn parse_value(spec: &str, raw: &str) -> Result<f64, String> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{spec}`: `{raw}` is not a finite number"))
}

impl FromStr for OperatorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("exact-newton", None) => Ok(OperatorSpec::ExactNewton),
            ("frozen", None) => Ok(OperatorSpec::Frozen),
            ("frozen", Some(a)) => parse_value(s, a).map(OperatorSpec::FrozenScalar),
            ("diagonal", None) => Ok(OperatorSpec::Diagonal),
            ("damped", Some(a)) => parse_value(s, a).map(OperatorSpec::Damped),
            _ => Err(format!(
                "unknown operator `{s}` (expected exact-newton, frozen, frozen:<c>, diagonal, damped:<lambda>)"
            )),
        }
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorSpec::ExactNewton => f.write_str("exact-newton"),
            OperatorSpec::Frozen => f.write_str("frozen"),
            OperatorSpec::FrozenScalar(c) => write!(f, "frozen:{c}"),
            OperatorSpec::Diagonal => f.write_str("diagonal"),
            OperatorSpec::Damped(l) => write!(f, "damped:{l}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaSpec {
    SampledBall,
    ClosedForm(f64),
}

impl FromStr for KappaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "sampled" => Ok(KappaSpec::SampledBall),
            Some(("closed-form", v)) => {
                let v = parse_value(s, v)?;
                if v < 0.0 {
                    return Err(format!("`{s}`: kappa must be >= 0"));
                }
                Ok(KappaSpec::ClosedForm(v))
            }
            _ => Err(format!(
                "unknown kappa method `{s}` (expected sampled or closed-form:<value>)"
            )),
        }
    }
}

impl fmt::Display for KappaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaSpec::SampledBall => f.write_str("sampled"),
            KappaSpec::ClosedForm(v) => write!(f, "closed-form:{v}"),
        }
    }
}

fn as_text<T: fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem_name: String,
    #[serde(serialize_with = "as_text")]
    pub operator: OperatorSpec,
    #[serde(serialize_with = "as_text")]
    pub kappa_method: KappaSpec,
    pub samples: usize,
    pub seed: u64,
    pub integrator: IntegratorConfig,
    /// Not echoed into summaries, so artifacts do not depend on where they are written.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub strict_ball: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    run: FileRun,
    integrator: Option<IntegratorConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRun {
    problem: Option<String>,
    operator: Option<String>,
    kappa: Option<String>,
    samples: Option<usize>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    strict_ball: Option<bool>,
}

/// Flags shared by every run subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with `[run]` and `[integrator]` sections; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus problem name (see `list-problems`).
    #[arg(long)]
    pub problem: Option<String>,
    /// exact-newton | frozen | frozen:<c> | diagonal | damped:<lambda>
    #[arg(long)]
    pub operator: Option<String>,
    /// sampled | closed-form:<value>
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    /// Abort when the path leaves the trust ball.
    #[arg(long)]
    pub strict_ball: bool,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub initial_step: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub checkpoints: Option<usize>,
    /// Fall back to damped least squares with this lambda at singular Jacobians.
    #[arg(long)]
    pub damping: Option<f64>,
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl RunArgs {
    /// Merges file and flags. `require_problem` is false for commands that name
    /// their problem another way.
    pub fn resolve(&self, require_problem: bool) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        let run = file.run;

        let problem_name = match self.problem.clone().or(run.problem) {
            Some(p) => p,
            None if require_problem => return Err(CliError::Config("no problem given (use --problem)".into())),
            None => String::new(),
        };
        if require_problem {
            resflow::corpus::find_problem(&problem_name).map_err(|e| CliError::Config(e.to_string()))?;
        }

        let operator = match self.operator.as_deref().or(run.operator.as_deref()) {
            Some(s) => s.parse().map_err(CliError::Config)?,
            None => OperatorSpec::ExactNewton,
        };
        let kappa_method = match self.kappa.as_deref().or(run.kappa.as_deref()) {
            Some(s) => s.parse().map_err(CliError::Config)?,
            None => KappaSpec::SampledBall,
        };
        let samples = self.samples.or(run.samples).unwrap_or(DEFAULT_SAMPLES);
        if samples == 0 {
            return Err(CliError::Config("samples must be >= 1".into()));
        }

        let mut integrator = file.integrator.unwrap_or_default();
        if let Some(v) = self.abs_tol {
            integrator.abs_tol = v;
        }
        if let Some(v) = self.rel_tol {
            integrator.rel_tol = v;
        }
        if let Some(v) = self.initial_step {
            integrator.initial_step = v;
        }
        if let Some(v) = self.max_steps {
            integrator.max_steps = v;
        }
        if let Some(v) = self.checkpoints {
            integrator.checkpoint_count = v;
        }
        if self.damping.is_some() {
            integrator.damping_fallback = self.damping;
        }
        let strict_ball = self.strict_ball || run.strict_ball.unwrap_or(false) || integrator.strict_ball;
        integrator.strict_ball = strict_ball;
        integrator.validate().map_err(|e| CliError::Config(e.to_string()))?;

        Ok(RunConfig {
            problem_name,
            operator,
            kappa_method,
            samples,
            seed: self.seed.or(run.seed).unwrap_or(0),
            integrator,
            output_dir: self
                .output_dir
                .clone()
                .or(run.output_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            strict_ball,
        })
    }
}

impl RunConfig {
    pub fn problem(&self) -> Result<Problem, CliError> {
        resflow::corpus::find_problem(&self.problem_name).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn operator_specs_parse_and_print() {
        for s in ["exact-newton", "frozen", "frozen:-0.5", "diagonal", "damped:0.001"] {
            let spec: OperatorSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("frozen:abc".parse::<OperatorSpec>().is_err());
        assert!("newton".parse::<OperatorSpec>().is_err());
        assert!("damped".parse::<OperatorSpec>().is_err());
    }

    #[test]
    fn kappa_specs() {
        assert_eq!("sampled".parse::<KappaSpec>().unwrap(), KappaSpec::SampledBall);
        assert_eq!(
            "closed-form:0.5".parse::<KappaSpec>().unwrap(),
            KappaSpec::ClosedForm(0.5)
        );
        assert!("closed-form:-1".parse::<KappaSpec>().is_err());
        assert!("closed-form".parse::<KappaSpec>().is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "[run]\nproblem = \"linear\"\noperator = \"frozen:-0.5\"\nseed = 4\n\n[integrator]\nabs_tol = 1e-9\nmax_steps = 500"
        )
        .unwrap();
        let args = RunArgs {
            config: Some(f.path().to_path_buf()),
            problem: Some("quadratic".into()),
            abs_tol: Some(1e-11),
            ..Default::default()
        };
        let cfg = args.resolve(true).unwrap();
        assert_eq!(cfg.problem_name, "quadratic");
        assert_eq!(cfg.operator, OperatorSpec::FrozenScalar(-0.5));
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.integrator.abs_tol, 1e-11);
        assert_eq!(cfg.integrator.max_steps, 500);
        assert_eq!(cfg.integrator.rel_tol, IntegratorConfig::default().rel_tol);
    }

    #[test]
    fn config_errors() {
        let missing = RunArgs::default();
        assert!(matches!(missing.resolve(true), Err(CliError::Config(_))));
        let unknown = RunArgs {
            problem: Some("nonexistent".into()),
            ..Default::default()
        };
        assert!(matches!(unknown.resolve(true), Err(CliError::Config(_))));
        let bad_tol = RunArgs {
            problem: Some("quadratic".into()),
            abs_tol: Some(-1.0),
            ..Default::default()
        };
        assert!(matches!(bad_tol.resolve(true), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[run]\nproblme = \"linear\"").unwrap();
        let args = RunArgs {
            config: Some(f.path().to_path_buf()),
            ..Default::default()
        };
        assert!(matches!(args.resolve(false), Err(CliError::Config(_))));
    }
}
