use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use num_rational::BigRational;
use num_traits::Zero;
use serde::Deserialize;
use serde_json::{json, Value};

use maxwalk::embedding::{
    build_plan, stopped_law_exact, stopped_law_exact_with, stopped_law_mc, verify_embedding, EmbeddingError,
    ExactMethod, McOptions, StoppedLaw,
};
use maxwalk::inequalities::{doob_lp, doob_maximal, Exponent, Moment};
use maxwalk::martingales::{
    check_sufficient_condition, kennedy_build_with_range, kennedy_pgf, truncated_pgf, verify_martingale_h,
    verify_martingale_table, AzemaYorSpec, MartingaleVerdict,
};
use maxwalk::rational::{format_rational, parse_rational, parse_rational_or_decimal, serde_rational};
use maxwalk::walk::{joint_dist, simulate};
use maxwalk::{CenteredMeasure, WalkParams};

use crate::cli::{Format, ParamArgs};
use crate::report::Report;

/// Residuals of the Kennedy grid relative to its largest value.
pub const RESIDUAL_TOLERANCE: f64 = 1e-12;
/// Slack for rounding in the float generating-function recursion.
pub const PGF_ROUNDING: f64 = 1e-12;

/// A verification that ran and failed; maps to exit status 1.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn rational(flag: &str, text: &str) -> Result<BigRational> {
    parse_rational(text).with_context(|| format!("--{flag}"))
}

pub fn walk_params(args: &ParamArgs) -> Result<WalkParams> {
    let p = rational("p", &args.p)?;
    let q = rational("q", &args.q)?;
    let params = match &args.r {
        Some(r) => WalkParams::new(p, q, rational("r", r)?),
        None => WalkParams::from_pq(p, q),
    };
    params.context("step probabilities")
}

fn with_params(report: Report, params: &WalkParams) -> Report {
    report
        .config("p", format_rational(params.p()))
        .config("q", format_rational(params.q()))
        .config("r", format_rational(params.r()))
}

pub fn simulate_cmd(args: &ParamArgs, t: usize, seed: u64) -> Result<Report> {
    let params = walk_params(args)?;
    let path = simulate(&params, t, seed);
    let mut report = with_params(Report::new("simulate", Format::Json), &params)
        .config("t", t)
        .config("seed", seed);
    report.modes = vec![("steps", "exact"), ("z", "exact"), ("m", "exact")];
    report.body = json!({ "steps": path.steps, "z": path.z, "m": path.m });
    report.csv_header = "t,step,z,m".into();
    report.csv_rows = (0..=t)
        .map(|i| {
            let step = if i == 0 { String::new() } else { path.steps[i - 1].to_string() };
            format!("{i},{step},{},{}", path.z[i], path.m[i])
        })
        .collect();
    Ok(report)
}

pub fn joint_cmd(args: &ParamArgs, t: u32) -> Result<Report> {
    let params = walk_params(args)?;
    let dist = joint_dist(&params, t);
    let mut report = with_params(Report::new("joint", Format::Json), &params).config("t", t);
    report.modes = vec![("p", "exact")];
    report.body = json!({
        "t": t,
        "atoms": dist.iter().map(|((z, m), p)| json!({"z": z, "m": m, "p": format_rational(p)})).collect::<Vec<_>>(),
        "total": format_rational(&dist.total()),
    });
    report.csv_header = "z,m,p".into();
    report.csv_rows = dist.iter().map(|((z, m), p)| format!("{z},{m},{}", format_rational(p))).collect();
    Ok(report)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    #[serde(with = "serde_rational")]
    p: BigRational,
    #[serde(with = "serde_rational")]
    q: BigRational,
    #[serde(with = "serde_rational")]
    r: BigRational,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HEntry {
    x: i64,
    y: i64,
    #[serde(with = "serde_rational")]
    value: BigRational,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HTableFile {
    params: ParamsFile,
    #[serde(rename = "H")]
    values: Vec<HEntry>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn verify_martingale_cmd(spec: Option<&Path>, h_table: Option<&Path>, t_max: u32) -> Result<Report> {
    let (params, verdict, source) = match (spec, h_table) {
        (Some(path), _) => {
            let spec = AzemaYorSpec::from_json_str(&read(path)?).with_context(|| format!("in {}", path.display()))?;
            let verdict = verify_martingale_h(&spec, t_max)?;
            (spec.params().clone(), verdict, path)
        }
        (None, Some(path)) => {
            let file: HTableFile =
                serde_json::from_str(&read(path)?).with_context(|| format!("in {}", path.display()))?;
            let params = WalkParams::new(file.params.p, file.params.q, file.params.r)?;
            let mut table = BTreeMap::new();
            for entry in file.values {
                if table.insert((entry.x, entry.y), entry.value).is_some() {
                    bail!("duplicate H entry at x={}, y={} in {}", entry.x, entry.y, path.display());
                }
            }
            let verdict = verify_martingale_table(&params, &table, t_max)?;
            (params, verdict, path)
        }
        (None, None) => bail!("one of --spec or --h-table is required"),
    };
    let mut report = with_params(Report::new("verify-martingale", Format::Json), &params)
        .config("input", source.display().to_string())
        .config("t_max", t_max);
    report.modes = vec![("value", "exact"), ("conditional_mean", "exact")];
    report.passed = verdict.passed();
    report.body = verdict_json(&verdict);
    report.csv_header = "t_max,states_checked,passed,x,y,value,conditional_mean".into();
    let tail = match &verdict.counterexample {
        Some(c) => format!(
            "{},{},{},{}",
            c.x,
            c.y,
            format_rational(&c.value),
            format_rational(&c.conditional_mean)
        ),
        None => ",,,".into(),
    };
    report.csv_rows = vec![format!("{},{},{},{tail}", verdict.t_max, verdict.states_checked, verdict.passed())];
    Ok(report)
}

fn verdict_json(verdict: &MartingaleVerdict) -> Value {
    json!({
        "t_max": verdict.t_max,
        "states_checked": verdict.states_checked,
        "passed": verdict.passed(),
        "counterexample": verdict.counterexample.as_ref().map(|c| json!({
            "x": c.x,
            "y": c.y,
            "value": format_rational(&c.value),
            "conditional_mean": format_rational(&c.conditional_mean),
        })),
    })
}

pub struct KennedyArgs<'a> {
    pub params: &'a ParamArgs,
    pub a: &'a str,
    pub b: &'a str,
    pub n: u32,
    pub horizon: u32,
    pub grid: usize,
}

pub fn kennedy_cmd(args: KennedyArgs<'_>) -> Result<Report> {
    let params = walk_params(args.params)?;
    let (a, b) = (rational("a", args.a)?, rational("b", args.b)?);
    if args.grid < 3 {
        bail!("--grid must be at least 3");
    }
    let side = args.grid - 1;
    let kp = kennedy_build_with_range(a.clone(), b.clone(), args.n, &params, side.max(args.n as usize))?;
    let closed = kennedy_pgf(&kp)?;
    let dp = truncated_pgf(&kp, args.horizon);

    let grid = kp.to_grid(side, side, side);
    let scale = (0..=side)
        .flat_map(|t| (0..=side).flat_map(move |x| (0..=side).map(move |y| (t, x, y))))
        .map(|(t, x, y)| kp.value(t, x, y).abs())
        .fold(1.0f64, f64::max);
    let residuals = check_sufficient_condition(&grid, &params)?;
    let residual_ok = residuals.within(RESIDUAL_TOLERANCE * scale);
    let gap = (dp.value - closed).abs();
    let pgf_ok = !dp.tail_bound.is_finite() || gap <= dp.tail_bound + PGF_ROUNDING * closed.abs().max(1.0);

    let mut report = with_params(Report::new("kennedy", Format::Json), &params)
        .config("a", format_rational(&a))
        .config("b", format_rational(&b))
        .config("n", args.n)
        .config("horizon", args.horizon)
        .config("grid", args.grid);
    report.modes = vec![
        ("alpha", "float"),
        ("h", "float"),
        ("residuals", "float"),
        ("pgf_closed_form", "float"),
        ("pgf_truncated", "float"),
    ];
    report.passed = residual_ok && pgf_ok;
    report.body = json!({
        "alpha_plus": kp.alpha_plus(),
        "alpha_minus": kp.alpha_minus(),
        "h": kp.h_table(),
        "residuals": {
            "interior": {"max_abs": residuals.interior.max_abs, "at": residuals.interior.argmax, "points": residuals.interior.points},
            "boundary": {"max_abs": residuals.boundary.max_abs, "at": residuals.boundary.argmax, "points": residuals.boundary.points},
            "tolerance": RESIDUAL_TOLERANCE * scale,
        },
        "pgf_closed_form": closed,
        "pgf_truncated": dp.value,
        "tail_bound": if dp.tail_bound.is_finite() { json!(dp.tail_bound) } else { json!("unbounded") },
        "abs_difference": gap,
    });
    report.csv_header = "alpha_plus,alpha_minus,interior_residual,boundary_residual,pgf_closed_form,pgf_truncated,tail_bound".into();
    report.csv_rows = vec![format!(
        "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
        kp.alpha_plus(),
        kp.alpha_minus(),
        residuals.interior.max_abs,
        residuals.boundary.max_abs,
        closed,
        dp.value,
        dp.tail_bound
    )];
    Ok(report)
}

pub fn doob_cmd(args: &ParamArgs, t: u32, lambda: Option<&str>, pi: Option<&str>) -> Result<Report> {
    let params = walk_params(args)?;
    let base = with_params(Report::new("doob", Format::Csv), &params).config("t", t);
    match (lambda, pi) {
        (Some(lambda), _) => {
            let lambda = parse_rational_or_decimal(lambda).context("--lambda")?;
            let row = doob_maximal(&params, t, &lambda)?;
            let mut report = base.config("lambda", format_rational(&lambda));
            report.modes = vec![("prob", "exact"), ("lhs", "exact"), ("rhs", "exact")];
            report.passed = row.holds();
            report.body = json!({
                "t": row.t,
                "lambda": format_rational(&row.lambda),
                "ceil_lambda": row.ceil_lambda,
                "prob": format_rational(&row.prob),
                "lhs": format_rational(&row.lhs),
                "rhs": format_rational(&row.rhs),
                "relation": row.relation.symbol(),
                "regime": row.regime.label(),
                "holds": row.holds(),
            });
            report.csv_header = maxwalk::DoobReport::CSV_HEADER.into();
            report.csv_rows = vec![row.csv_row()];
            Ok(report)
        }
        (None, Some(pi)) => {
            let pi = parse_rational_or_decimal(pi).context("--pi")?;
            let exponent = Exponent::from_rational(&pi)?;
            let lp = doob_lp(&params, t, exponent)?;
            let mut report = base.config("pi", format_rational(&pi));
            let mode = lp.lhs.mode();
            report.modes = vec![("lhs", mode), ("rhs", mode), ("intermediate", "exact")];
            report.passed = lp.holds();
            let intermediate = lp.intermediate.as_ref().map(format_rational);
            report.body = json!({
                "t": lp.t,
                "pi": format_rational(&pi),
                "lhs": moment_json(&lp.lhs),
                "rhs": moment_json(&lp.rhs),
                "intermediate": intermediate,
                "regime": params.drift().label(),
                "holds": lp.holds(),
            });
            report.csv_header = "t,pi,lhs,rhs,intermediate,mode,regime".into();
            report.csv_rows = vec![format!(
                "{},{},{},{},{},{mode},{}",
                lp.t,
                format_rational(&pi),
                lp.lhs,
                lp.rhs,
                intermediate.unwrap_or_default(),
                params.drift().label()
            )];
            Ok(report)
        }
        (None, None) => bail!("one of --lambda or --pi is required"),
    }
}

fn moment_json(m: &Moment) -> Value {
    match m {
        Moment::Exact(v) => json!(format_rational(v)),
        Moment::Float(v) => json!(v),
    }
}

pub struct EmbedArgs<'a> {
    pub params: &'a ParamArgs,
    pub measure: &'a Path,
    pub runs: Option<u64>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub step_cap: u64,
}

pub fn embed_cmd(args: EmbedArgs<'_>) -> Result<Report> {
    let params = walk_params(args.params)?;
    let measure = CenteredMeasure::load(args.measure).with_context(|| format!("in {}", args.measure.display()))?;
    let plan = build_plan(&measure)?;
    let mut report = with_params(Report::new("embed", Format::Json), &params)
        .config("measure", args.measure.display().to_string());

    let mut extra = serde_json::Map::new();
    let law = match args.runs {
        Some(runs) => {
            report = report
                .config("runs", runs)
                .config("seed", args.seed)
                .config("threads", args.threads.map_or(Value::from("default"), Value::from))
                .config("step_cap", args.step_cap);
            report.modes = vec![("p", "estimate"), ("stderr", "float"), ("expected_T", "estimate")];
            let mut options = McOptions::new(runs, args.seed);
            options.threads = args.threads;
            options.step_cap = args.step_cap;
            StoppedLaw::MonteCarlo(stopped_law_mc(&plan, &params, &options)?)
        }
        None => {
            if !measure.is_finite() {
                bail!("exact mode needs a finite measure; pass --runs for Monte Carlo");
            }
            report.modes = vec![("p", "exact"), ("expected_T", "exact")];
            let law = stopped_law_exact(&plan, &params).map_err(consistency_is_failure)?;
            let other = match law.method {
                ExactMethod::LinearSolve => ExactMethod::Levels,
                ExactMethod::Levels => ExactMethod::LinearSolve,
            };
            match stopped_law_exact_with(&plan, &params, other) {
                Ok(check) => {
                    let agrees = check.atoms == law.atoms && check.expected_t == law.expected_t;
                    extra.insert(
                        "cross_check".into(),
                        json!({"method": other.label(), "expected_T": format_rational(&check.expected_t), "agrees": agrees}),
                    );
                    if !agrees {
                        report.passed = false;
                    }
                }
                Err(EmbeddingError::TooLarge { .. }) => {}
                Err(e) => return Err(consistency_is_failure(e)),
            }
            StoppedLaw::Exact(law)
        }
    };

    let verdict = verify_embedding(&plan, &law);
    report.passed &= verdict.passed() && law.warnings().is_empty();

    let mut body = law.to_json();
    let object = body.as_object_mut().expect("law report is an object");
    object.insert("C".into(), json!(plan.c()));
    object.insert(
        "psi".into(),
        plan.psi_table().iter().map(|(x, psi)| json!({"x": x, "psi": psi})).collect(),
    );
    object.extend(extra);
    object.insert(
        "verification".into(),
        json!({
            "passed": verdict.passed(),
            "skipped_light_atoms": verdict.skipped,
            "outside_support": verdict.outside_support,
            "failures": verdict.failures().map(|c| json!({
                "x": c.x,
                "check": format!("{:?}", c.kind).to_lowercase(),
                "observed": c.observed,
                "expected": c.expected,
                "band": c.band,
            })).collect::<Vec<_>>(),
        }),
    );
    report.body = body;

    match &law {
        StoppedLaw::Exact(exact) => {
            report.csv_header = "x,psi,p,mu".into();
            report.csv_rows = plan
                .psi_table()
                .iter()
                .map(|(x, psi)| {
                    let p = exact.atoms.get(x).cloned().unwrap_or_else(BigRational::zero);
                    format!("{x},{psi},{},{}", format_rational(&p), format_rational(&measure.mass_at(*x)))
                })
                .collect();
        }
        StoppedLaw::MonteCarlo(mc) => {
            report.csv_header = "x,count,p,stderr,mu".into();
            report.csv_rows = mc
                .counts
                .iter()
                .map(|(x, c)| {
                    format!(
                        "{x},{c},{:e},{:e},{}",
                        mc.frequency(*x),
                        mc.stderr(*x),
                        format_rational(&measure.mass_at(*x))
                    )
                })
                .collect();
        }
    }
    Ok(report)
}

fn consistency_is_failure(err: EmbeddingError) -> anyhow::Error {
    match err {
        EmbeddingError::Consistency(msg) => CheckFailed(msg).into(),
        other => other.into(),
    }
}
