//! Command-line driver: reads a JSON experiment description, evaluates the
//! requested quantities on a grid of `t` values and writes CSV and JSON reports.
//!
//! Exit status: 0 on success, 1 if a verification failed, 2 for an invalid
//! experiment description, 3 if a computation failed.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::mop::{build_polynomial, find_zeros, AngelescoSystem, Partition, ZeroSet};
use crate::sensitivity::{
    assemble, check_diagonal_dominance, check_m_matrix, check_z_matrix, solve_derivatives, DominanceReport, MReport,
    SensitivitySystem, ZReport,
};
use crate::verify::{predict_signs, verify_at, Direction, MonotonicityVerdict, SignPrediction, VerificationReport};
use crate::weights::WeightSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_INVALID_SPEC: i32 = 2;
pub const EXIT_COMPUTE_FAILED: i32 = 3;

pub const CSV_FILE: &str = "results.csv";
pub const JSON_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(
    name = "angelesco",
    version,
    about = "Zeros of multiple orthogonal polynomials and their parameter derivatives"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Zeros of P_n at every t
    Zeros(CommonArgs),
    /// Zeros, derivatives and the assembled derivative system
    Sensitivity(CommonArgs),
    /// Derivatives checked against finite differences and the predicted sign
    Verify(CommonArgs),
    /// Monotonicity verdicts of the weights and the predicted sign
    Conditions(CommonArgs),
    /// Every output listed in the experiment description
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment description (JSON)
    #[arg(long)]
    pub spec: PathBuf,
    /// Directory for results.csv and report.json
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    /// Worker threads for the t grid (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Output {
    Zeros,
    Derivatives,
    Matrix,
    Verify,
    Conditions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TValues {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl TValues {
    /// Grid points; a range includes both ends.
    pub fn points(&self) -> Vec<f64> {
        match *self {
            TValues::List(ref v) => v.clone(),
            TValues::Range { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![start],
                _ => (0..count)
                    .map(|s| start + (stop - start) * s as f64 / (count - 1) as f64)
                    .collect(),
            },
        }
    }
}

/// JSON experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub system: Vec<WeightSpec>,
    pub partition: Vec<usize>,
    /// Label for the varied parameter; each weight's own `vary` decides what moves.
    pub t_param: String,
    pub t_values: TValues,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub outputs: Vec<Output>,
    #[serde(default)]
    pub tolerances: Config,
}

/// A validated experiment ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub system: AngelescoSystem,
    pub partition: Partition,
    pub t_param: String,
    pub t_values: Vec<f64>,
    pub h: Option<f64>,
    pub outputs: Vec<Output>,
    pub config: Config,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("cannot parse experiment: {e}")))
    }

    pub fn validate(&self) -> Result<Experiment> {
        self.tolerances.validate()?;
        if self.t_param.trim().is_empty() {
            return Err(Error::Config("t_param must be a non-empty name".into()));
        }
        let weights = self.system.iter().map(WeightSpec::build).collect::<Result<Vec<_>>>()?;
        let system = AngelescoSystem::from_catalog(weights)?;
        let partition = Partition::new(self.partition.clone())?;
        partition.check_against(&system)?;
        let t_values = self.t_values.points();
        if t_values.is_empty() {
            return Err(Error::Config("t_values must not be empty".into()));
        }
        if t_values.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("t_values must be finite".into()));
        }
        if t_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("t_values must be strictly increasing".into()));
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("h must be positive, got {h}")));
            }
        }
        for &t in &t_values {
            system.supports(t)?;
        }
        let mut outputs = self.outputs.clone();
        outputs.sort();
        outputs.dedup();
        if outputs.is_empty() {
            outputs = vec![Output::Zeros, Output::Derivatives];
        }
        Ok(Experiment {
            system,
            partition,
            t_param: self.t_param.clone(),
            t_values,
            h: self.h,
            outputs,
            config: self.tolerances,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixReport {
    pub system: SensitivitySystem,
    pub z_matrix: ZReport,
    pub dominance: DominanceReport,
    pub m_matrix: MReport,
}

/// Results at one `t`; `error` is set instead when a stage failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TRecord {
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeros: Option<ZeroSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivatives: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<SignPrediction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TRecord {
    fn failed(t: f64, e: &Error) -> Self {
        TRecord {
            t,
            zeros: None,
            derivatives: None,
            matrix: None,
            verify: None,
            conditions: None,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub t_param: String,
    pub partition: Partition,
    pub index_map: Vec<(usize, usize)>,
    pub outputs: Vec<Output>,
    pub records: Vec<TRecord>,
}

impl Report {
    pub fn has_errors(&self) -> bool {
        self.records.iter().any(|r| r.error.is_some())
    }

    pub fn verification_failed(&self) -> bool {
        self.records.iter().any(|r| r.verify.as_ref().is_some_and(|v| !v.pass))
    }

    pub fn exit_code(&self) -> i32 {
        if self.has_errors() {
            EXIT_COMPUTE_FAILED
        } else if self.verification_failed() {
            EXIT_VERIFY_FAILED
        } else {
            EXIT_OK
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// `t`, zeros `x_k_i`, derivatives `dxdt_k_i`; rows that failed are left out.
    pub fn to_csv(&self) -> Result<String> {
        let with_zeros = self.outputs.contains(&Output::Zeros);
        let with_derivs = self.outputs.contains(&Output::Derivatives);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        if with_zeros {
            header.extend(self.index_map.iter().map(|(k, i)| format!("x_{k}_{i}")));
        }
        if with_derivs {
            header.extend(self.index_map.iter().map(|(k, i)| format!("dxdt_{k}_{i}")));
        }
        w.write_record(&header).map_err(csv_error)?;
        for r in self.records.iter().filter(|r| r.error.is_none()) {
            let mut row = vec![fmt_num(r.t)];
            if with_zeros {
                let z = r.zeros.as_ref().expect("zeros computed when requested");
                row.extend(z.flat().into_iter().map(fmt_num));
            }
            if with_derivs {
                let d = r.derivatives.as_ref().expect("derivatives computed when requested");
                row.extend(d.iter().copied().map(fmt_num));
            }
            w.write_record(&row).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv output: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is ascii"))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv output: {e}"))
}

/// 15 significant digits in scientific notation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.14e}")
}

fn evaluate(exp: &Experiment, t: f64) -> Result<TRecord> {
    let cfg = &exp.config;
    let sys = &exp.system;
    let part = &exp.partition;
    let wants = |o: Output| exp.outputs.contains(&o);
    let mut rec = TRecord {
        t,
        zeros: None,
        derivatives: None,
        matrix: None,
        verify: None,
        conditions: None,
        error: None,
    };
    let needs_system = wants(Output::Derivatives) || wants(Output::Matrix);
    if wants(Output::Zeros) || needs_system {
        let p = build_polynomial(sys, part, t, cfg)?;
        let z = find_zeros(&p, sys, part, cfg)?;
        if needs_system {
            let ss = assemble(sys, part, t, &z, cfg)?;
            if !ss.sign_law_violations.is_empty() {
                warn!("t = {t}: d has the wrong sign at {:?}", ss.sign_law_violations);
            }
            if wants(Output::Derivatives) {
                rec.derivatives = Some(solve_derivatives(&ss)?);
            }
            if wants(Output::Matrix) {
                rec.matrix = Some(MatrixReport {
                    z_matrix: check_z_matrix(&ss, cfg.z_tol),
                    dominance: check_diagonal_dominance(&ss),
                    m_matrix: check_m_matrix(&ss, cfg.z_tol, cfg.m_tol),
                    system: ss,
                });
            }
        }
        if wants(Output::Zeros) {
            rec.zeros = Some(z);
        }
    }
    if wants(Output::Verify) {
        let (_, report) = verify_at(sys, part, t, exp.h, cfg)?;
        if !report.pass {
            warn!("t = {t}: verification failed");
        }
        rec.verify = Some(report);
    }
    if wants(Output::Conditions) {
        rec.conditions = Some(predict_signs(sys, part, t)?);
    }
    Ok(rec)
}

/// Evaluates every grid point; records keep the order of `t_values`.
pub fn run_experiment(exp: &Experiment) -> Report {
    let records = exp
        .t_values
        .par_iter()
        .map(|&t| {
            debug!("evaluating t = {t}");
            evaluate(exp, t).unwrap_or_else(|e| {
                warn!("t = {t}: {e}");
                TRecord::failed(t, &e)
            })
        })
        .collect();
    Report {
        t_param: exp.t_param.clone(),
        partition: exp.partition.clone(),
        index_map: exp.partition.index_map(),
        outputs: exp.outputs.clone(),
        records,
    }
}

fn verdict_text(v: &MonotonicityVerdict) -> String {
    let dir = match v.direction {
        Direction::Increasing => "increasing",
        Direction::Decreasing => "decreasing",
        Direction::NonStrictConstant => "constant",
        Direction::Mixed => "mixed",
    };
    match (v.direction, v.strict, v.witness) {
        (Direction::Mixed, _, Some((a, b))) => format!("{dir} (rises near {a}, falls near {b})"),
        (Direction::Increasing | Direction::Decreasing, true, _) => format!("{dir} (strict)"),
        _ => dir.to_string(),
    }
}

/// Human-readable summary of the condition verdicts.
pub fn conditions_text(report: &Report) -> String {
    let mut out = String::new();
    for r in &report.records {
        if let Some(e) = &r.error {
            let _ = writeln!(out, "{} = {}: error: {e}", report.t_param, r.t);
            continue;
        }
        let Some(c) = &r.conditions else { continue };
        let prediction = match c.prediction {
            Some(1) => "+1 (zeros increase)",
            Some(_) => "-1 (zeros decrease)",
            None => "none",
        };
        let _ = writeln!(out, "{} = {}: prediction {prediction}", report.t_param, r.t);
        for (k, v) in c.verdicts.iter().enumerate() {
            let _ = write!(
                out,
                "  weight {k}: d/dt log w {}, d/dx log w {}",
                verdict_text(&v.log_dt),
                verdict_text(&v.log_dx)
            );
            if let Some(rates) = v.endpoint_rates {
                let _ = write!(out, ", endpoint rates ({}, {})", rates.lower, rates.upper);
            }
            out.push('\n');
        }
    }
    out
}

fn write_outputs(report: &Report, out: &Path, format: Format) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    if matches!(format, Format::Csv | Format::Both) {
        let csv = report.to_csv().map_err(|e| std::io::Error::other(e.to_string()))?;
        fs::write(out.join(CSV_FILE), csv)?;
    }
    if matches!(format, Format::Json | Format::Both) {
        fs::write(out.join(JSON_FILE), report.to_json())?;
    }
    Ok(())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("ANGELESCO_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses arguments, runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID_SPEC } else { EXIT_OK };
        }
    };
    init_logging();
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    let (args, forced) = match cli.command {
        Command::Zeros(a) => (a, Some(vec![Output::Zeros])),
        Command::Sensitivity(a) => (a, Some(vec![Output::Zeros, Output::Derivatives, Output::Matrix])),
        Command::Verify(a) => (a, Some(vec![Output::Zeros, Output::Derivatives, Output::Verify])),
        Command::Conditions(a) => (a, Some(vec![Output::Conditions])),
        Command::Sweep(a) => (a, None),
    };
    let text = match fs::read_to_string(&args.spec) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.spec.display());
            return EXIT_INVALID_SPEC;
        }
    };
    let mut exp = match ExperimentSpec::from_json(&text).and_then(|s| s.validate()) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID_SPEC;
        }
    };
    if let Some(outputs) = forced {
        exp.outputs = outputs;
    }
    info!(
        "{} with partition {} over {} values of {}",
        exp.system.label(),
        exp.partition,
        exp.t_values.len(),
        exp.t_param
    );

    let report = match args.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run_experiment(&exp)),
            Err(e) => {
                eprintln!("error: cannot start {n} worker threads: {e}");
                return EXIT_INVALID_SPEC;
            }
        },
        None => run_experiment(&exp),
    };

    if exp.outputs.contains(&Output::Conditions) {
        print!("{}", conditions_text(&report));
    }
    for r in &report.records {
        if let Some(e) = &r.error {
            eprintln!("error at {} = {}: {e}", exp.t_param, r.t);
        }
    }
    if let Err(e) = write_outputs(&report, &args.out, args.format) {
        eprintln!("error: cannot write reports to {}: {e}", args.out.display());
        return EXIT_COMPUTE_FAILED;
    }
    let code = report.exit_code();
    if code == EXIT_VERIFY_FAILED {
        eprintln!("verification failed");
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAIR: &str = r#"{
        "system": [
            {"family": "uniform", "params": {"lower": -1, "upper": 0}},
            {"family": "uniform", "params": {"lower": 0, "upper": 1}}
        ],
        "partition": [1, 1],
        "t_param": "s",
        "t_values": {"start": 0, "stop": 1, "count": 3},
        "outputs": ["zeros"]
    }"#;

    #[test]
    fn grid_points() {
        let r = TValues::Range {
            start: 0.0,
            stop: 1.0,
            count: 5,
        };
        assert_eq!(r.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(
            TValues::Range {
                start: 2.0,
                stop: 3.0,
                count: 1
            }
            .points(),
            vec![2.0]
        );
    }

    #[test]
    fn spec_validation() {
        let exp = ExperimentSpec::from_json(PAIR).unwrap().validate().unwrap();
        assert_eq!(exp.t_values.len(), 3);

        let mut spec = ExperimentSpec::from_json(PAIR).unwrap();
        spec.partition = vec![1];
        assert!(matches!(spec.validate(), Err(Error::InvalidPartition(_))));

        let mut spec = ExperimentSpec::from_json(PAIR).unwrap();
        spec.t_values = TValues::List(vec![1.0, 0.5]);
        assert!(spec.validate().is_err());

        let mut spec = ExperimentSpec::from_json(PAIR).unwrap();
        spec.t_values = TValues::List(vec![]);
        assert!(spec.validate().is_err());

        assert!(ExperimentSpec::from_json("{\"system\": [").is_err());
        assert!(
            ExperimentSpec::from_json(&PAIR.replace("\"h\"", "\"h2\"").replace("\"outputs\"", "\"extra\"")).is_err()
        );
    }

    #[test]
    fn csv_layout() {
        let exp = ExperimentSpec::from_json(PAIR).unwrap().validate().unwrap();
        let report = run_experiment(&exp);
        assert_eq!(report.exit_code(), EXIT_OK);
        let csv = report.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x_0_0,x_1_0"));
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert!((first[1] + 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn failed_rows_are_recorded() {
        let spec = r#"{
            "system": [{"family": "laguerre", "params": {}, "vary": "alpha"}],
            "partition": [1],
            "t_param": "alpha",
            "t_values": [0.5, 1.0],
            "outputs": ["zeros", "derivatives"],
            "tolerances": {"max_condition": 0.5}
        }"#;
        let exp = ExperimentSpec::from_json(spec).unwrap().validate().unwrap();
        let report = run_experiment(&exp);
        assert!(report.has_errors());
        assert_eq!(report.exit_code(), EXIT_COMPUTE_FAILED);
        assert_eq!(report.to_csv().unwrap().lines().count(), 1);
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert!(json["records"][0]["error"].is_string());
        assert_eq!(json["records"][1]["t"], 1.0);
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.5), "5.00000000000000e-1");
        assert_eq!(fmt_num(-1.0 / 3.0), "-3.33333333333333e-1");
    }
}
