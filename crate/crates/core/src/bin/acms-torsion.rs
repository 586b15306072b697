use std::collections::BTreeMap;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use acms_torsion::acms::AcmStructure;
use acms_torsion::builtins::{builtin, ParamValue, Params};
use acms_torsion::classify::{enumerate_forbidden, DEFAULT_TOL};
use acms_torsion::identities::{SuiteOptions, Tier};
use acms_torsion::model::expr::Func;
use acms_torsion::model::file::ModelFile;
use acms_torsion::model::{Expr, FrameModel, Scope};
use acms_torsion::report::{build_report, to_json, ModelInfo, ReportOptions};
use acms_torsion::selftest::run_selftest;
use acms_torsion::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_IDENTITY: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "acms-torsion", version, about = "Intrinsic torsion of almost contact metric structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the structure at one or more points.
    Classify {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated chart coordinates; repeatable. Builtins default to one sample point.
        #[arg(long = "point", allow_hyphen_values = true)]
        points: Vec<String>,
        /// Relative threshold for active components.
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Exponent `a` of a conformal change of metric `e^{2a} g`.
        #[arg(long, conflicts_with = "conformal_factor", allow_hyphen_values = true)]
        conformal: Option<String>,
        /// The factor `e^a` of a conformal change `e^{2a} g`.
        #[arg(long, allow_hyphen_values = true)]
        conformal_factor: Option<String>,
    },
    /// Run the identity suite.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        /// A point count (builtins) or `;`-separated points.
        #[arg(long, default_value = "10", allow_hyphen_values = true)]
        points: String,
        #[arg(long, value_enum, default_value_t = TierArg::Default)]
        tier: TierArg,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Relative outer finite-difference step.
        #[arg(long)]
        step: Option<f64>,
        /// Absolute residual tolerance replacing the automatic one (scaled by the term size).
        #[arg(long)]
        identity_tol: Option<f64>,
    },
    /// List the strict types excluded by the non-existence theorem.
    EnumerateTypes {
        #[arg(long, default_value_t = 3)]
        n: usize,
    },
    /// Projector algebra and builtin sanity checks.
    Selftest {
        #[arg(long, default_value_t = 500)]
        samples: usize,
    },
}

#[derive(clap::Args)]
struct ModelArgs {
    /// A model file path or `builtin:<name>`.
    #[arg(long)]
    model: String,
    /// `name=value`; vectors as comma-separated lists. Repeatable.
    #[arg(long = "param", allow_hyphen_values = true)]
    params: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TierArg {
    Default,
    Full,
}

struct Loaded {
    info: ModelInfo,
    model: FrameModel,
    structure: AcmStructure,
    samples: Option<Box<dyn Fn(usize) -> Vec<Vec<f64>>>>,
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Io(_) => (EXIT_IO, "io"),
            Error::Json(_) => (EXIT_IO, "parse"),
            Error::Syntax { .. } | Error::UnknownIdentifier { .. } | Error::Arity { .. } => (EXIT_IO, "parse"),
            _ => (EXIT_VALIDATION, "validation"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn parse_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_IO,
        kind: "parse",
        message: message.into(),
    }
}

fn split_params(raw: &[String]) -> Result<Vec<(String, String)>, Failure> {
    raw.iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| parse_failure(format!("parameter `{p}` is not name=value")))
        })
        .collect()
}

fn load(args: &ModelArgs) -> Result<Loaded, Failure> {
    let pairs = split_params(&args.params)?;
    if let Some(name) = args.model.strip_prefix("builtin:") {
        let mut params = Params::new();
        for (k, v) in pairs {
            params.insert(k, ParamValue::parse(&v)?);
        }
        let b = builtin(name, &params)?;
        let info = ModelInfo {
            id: args.model.clone(),
            builtin: Some(name.to_string()),
            params: b.params.clone(),
            dim: b.model.dim(),
            n: b.structure.n(),
        };
        let sampler = b.clone();
        return Ok(Loaded {
            info,
            model: b.model,
            structure: b.structure,
            samples: Some(Box::new(move |count| sampler.default_points(count))),
        });
    }
    let text = std::fs::read_to_string(&args.model).map_err(|e| Failure {
        code: EXIT_IO,
        kind: "io",
        message: format!("{}: {e}", args.model),
    })?;
    let file = ModelFile::from_json(&text)?;
    let mut overrides = BTreeMap::new();
    let mut params = Params::new();
    for (k, v) in pairs {
        let value: f64 = v
            .parse()
            .map_err(|_| parse_failure(format!("file parameter `{k}` must be a number, got `{v}`")))?;
        overrides.insert(k.clone(), value);
        params.insert(k, ParamValue::Scalar(value));
    }
    let (model, structure) = file.build(&overrides)?;
    for (k, v) in &file.params {
        params.entry(k.clone()).or_insert(ParamValue::Scalar(*v));
    }
    let failures = structure.validate().failures();
    if !failures.is_empty() {
        return Err(Error::InvalidStructure(failures.join("; ")).into());
    }
    Ok(Loaded {
        info: ModelInfo {
            id: args.model.clone(),
            builtin: None,
            params,
            dim: model.dim(),
            n: structure.n(),
        },
        model,
        structure,
        samples: None,
    })
}

fn parse_point(text: &str, dim: usize) -> Result<Vec<f64>, Failure> {
    let x: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| parse_failure(format!("point `{text}` is not a comma-separated list of numbers")))?;
    if x.len() != dim {
        return Err(parse_failure(format!("point `{text}` has {} coordinates, expected {dim}", x.len())));
    }
    Ok(x)
}

fn points_for(loaded: &Loaded, given: &[String], default_count: usize) -> Result<Vec<Vec<f64>>, Failure> {
    if !given.is_empty() {
        return given.iter().map(|p| parse_point(p, loaded.info.dim)).collect();
    }
    match &loaded.samples {
        Some(f) => Ok(f(default_count)),
        None => Err(parse_failure("model files need explicit points")),
    }
}

fn conformal_exponent(
    loaded: &Loaded,
    exponent: Option<&str>,
    factor: Option<&str>,
) -> Result<Option<(Expr, String)>, Failure> {
    let scope = Scope::new(loaded.info.dim);
    Ok(match (exponent, factor) {
        (Some(a), _) => Some((Expr::parse(a, &scope)?, a.to_string())),
        (None, Some(f)) => Some((Expr::Call(Func::Ln, vec![Expr::parse(f, &scope)?]), format!("ln({f})"))),
        (None, None) => None,
    })
}

fn emit(json: String) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{json}");
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Classify {
            model,
            points,
            tol,
            conformal,
            conformal_factor,
        } => {
            let loaded = load(&model)?;
            let pts = points_for(&loaded, &points, 1)?;
            let opts = ReportOptions {
                tol,
                identities: None,
                conformal: conformal_exponent(&loaded, conformal.as_deref(), conformal_factor.as_deref())?,
            };
            let report = build_report("classify", loaded.info.clone(), &loaded.structure, &loaded.model, &pts, &opts)?;
            emit(report.to_json()?);
            Ok(if report.summary.theorem_inconsistencies > 0 { EXIT_VALIDATION } else { 0 })
        }
        Command::Verify {
            model,
            points,
            tier,
            tol,
            step,
            identity_tol,
        } => {
            let loaded = load(&model)?;
            let pts = match points.trim().parse::<usize>() {
                Ok(count) => points_for(&loaded, &[], count)?,
                Err(_) => {
                    let list: Vec<String> = points.split(';').map(str::to_string).collect();
                    points_for(&loaded, &list, 0)?
                }
            };
            let suite = SuiteOptions {
                tier: match tier {
                    TierArg::Default => Tier::Default,
                    TierArg::Full => Tier::Full,
                },
                step,
                tolerance: identity_tol,
                type_tol: tol,
                ..SuiteOptions::default()
            };
            let opts = ReportOptions {
                tol,
                identities: Some(suite),
                conformal: None,
            };
            let report = build_report("verify", loaded.info.clone(), &loaded.structure, &loaded.model, &pts, &opts)?;
            emit(report.to_json()?);
            Ok(if report.summary.identities_failed > 0 { EXIT_IDENTITY } else { 0 })
        }
        Command::EnumerateTypes { n } => {
            let catalog = enumerate_forbidden(n)?;
            emit(to_json(catalog)?);
            Ok(0)
        }
        Command::Selftest { samples } => {
            let report = run_selftest(samples)?;
            emit(to_json(&report)?);
            Ok(if report.passed { 0 } else { EXIT_VALIDATION })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_failure(&parse_failure(e.to_string()));
            return ExitCode::from(EXIT_IO);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            report_failure(&f);
            ExitCode::from(f.code)
        }
    }
}

fn report_failure(f: &Failure) {
    let body = serde_json::json!({
        "error": { "kind": f.kind, "message": f.message.trim_end() },
        "exitCode": f.code,
    });
    eprintln!("{body}");
}
