//! Command implementations shared by the binary and the integration tests.
//!
//! Every command produces a serializable report stamped with the config
//! hash and crate version, so any result file can be traced back to the
//! configuration that generated it. Exact-mode runs touch no RNG and are
//! bit-reproducible; shot-mode runs are reproducible given the master seed,
//! with measurement i drawn on stream i and bootstrap replica r of input i
//! on stream 10000 + 64 r + i.
//!
//! Exit codes: 0 success, 2 configuration or output errors, 3 estimator
//! failures, 4 regime violations.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use multipass_core::closed_form::{amplification_passes, classical_populations, ClosedFormError};
use multipass_core::estimators::{
    estimate_phase_gamma_peak, estimate_phase_gate_sum, estimate_ratio_general,
    estimate_sum_large_p, invert_real_a, ErrorEstimate, EstimatorError, Hint, Method,
    RATIO_RESIDUAL_TOL,
};
use multipass_core::sequences::{
    evaluate, evaluate_fast, pair_sequence, phase_gate_block, repeat_same, GateSequence,
    MultiPassResult, PairKind, SequenceError,
};
use multipass_core::shot_sim::{estimate_probability, sample, split_seed, MeasurementRecord};
use multipass_core::su2::{from_probability_and_phases, Su2Error};
use serde::Serialize;
use thiserror::Error;

use crate::config::{
    build_gate, ExperimentConfig, GateSpec, HintSpec, SequenceSpec, ShotSpec, SweepVariable,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Bootstrap replica count for shot-mode standard errors.
pub const BOOTSTRAP_REPLICAS: u64 = 200;

const BOOTSTRAP_STREAM_BASE: u64 = 10_000;
const BOOTSTRAP_STREAM_STRIDE: u64 = 64;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Output(String),
    #[error("gate error: {0}")]
    Gate(#[from] Su2Error),
    #[error("domain error: {0}")]
    Domain(#[from] ClosedFormError),
    #[error("evaluation error: {0}")]
    Sequence(#[from] SequenceError),
    #[error("estimator error: {0}")]
    Estimator(#[from] EstimatorError),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::Io(_) | AppError::Output(_) => 2,
            AppError::Gate(_) | AppError::Domain(_) => 2,
            AppError::Estimator(EstimatorError::RegimeViolation { .. }) => 4,
            AppError::Estimator(_) | AppError::Sequence(_) => 3,
        }
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Output(e.to_string())
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Output(e.to_string())
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, AppError> {
    Err(AppError::Config(msg.into()))
}

/// Joins a relative output path onto MULTIPASS_OUT_DIR when that is set.
pub fn resolve_out_path(path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_relative() {
        if let Ok(dir) = std::env::var("MULTIPASS_OUT_DIR") {
            if !dir.is_empty() {
                return PathBuf::from(dir).join(p);
            }
        }
    }
    p.to_path_buf()
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Both propagation routes over the configured sequence.
#[derive(Clone, Debug, Serialize)]
pub struct PropagateReport {
    pub config_hash: String,
    pub version: String,
    pub n_passes: u64,
    pub evaluate: MultiPassResult,
    pub fast: MultiPassResult,
    pub max_discrepancy: f64,
}

pub fn cmd_propagate(config: &ExperimentConfig) -> Result<PropagateReport, AppError> {
    if config.sweep.is_some() {
        return config_err(
            "propagate runs a single point; remove the [sweep] section or use the sweep command",
        );
    }
    let (_, seq) = config.realize(None)?;
    let slow = evaluate(&seq)?;
    let fast = evaluate_fast(&seq)?;
    let (sp, fp) = (
        slow.propagator.expect("evaluate always carries a propagator"),
        fast.propagator.expect("evaluate_fast always carries a propagator"),
    );
    let max_discrepancy = (sp.a() - fp.a())
        .norm()
        .max((sp.b() - fp.b()).norm())
        .max((slow.q_return - fast.q_return).abs());
    Ok(PropagateReport {
        config_hash: config.hash(),
        version: VERSION.into(),
        n_passes: seq.total_passes(),
        evaluate: slow,
        fast,
        max_discrepancy,
    })
}

pub fn render_propagate(report: &PropagateReport) -> String {
    let sp = report.evaluate.propagator.expect("propagator present");
    let fp = report.fast.propagator.expect("propagator present");
    let mut out = String::new();
    out.push_str(&format!("config_hash = {}\n", report.config_hash));
    out.push_str(&format!("version = {}\n", report.version));
    out.push_str(&format!("passes = {}\n", report.n_passes));
    out.push_str(&format!(
        "q_return_evaluate = {}\n",
        fmt17(report.evaluate.q_return)
    ));
    out.push_str(&format!(
        "p_transfer_evaluate = {}\n",
        fmt17(report.evaluate.p_transfer)
    ));
    out.push_str(&format!("q_return_fast = {}\n", fmt17(report.fast.q_return)));
    out.push_str(&format!(
        "p_transfer_fast = {}\n",
        fmt17(report.fast.p_transfer)
    ));
    out.push_str(&format!(
        "propagator_evaluate_a = {} {}\n",
        fmt17(sp.a().re),
        fmt17(sp.a().im)
    ));
    out.push_str(&format!(
        "propagator_evaluate_b = {} {}\n",
        fmt17(sp.b().re),
        fmt17(sp.b().im)
    ));
    out.push_str(&format!(
        "propagator_fast_a = {} {}\n",
        fmt17(fp.a().re),
        fmt17(fp.a().im)
    ));
    out.push_str(&format!(
        "propagator_fast_b = {} {}\n",
        fmt17(fp.b().re),
        fmt17(fp.b().im)
    ));
    out.push_str(&format!(
        "max_discrepancy = {}\n",
        fmt17(report.max_discrepancy)
    ));
    out
}

/// One grid point of a sweep.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepRow {
    pub sweep_var: f64,
    pub q_quantum: f64,
    pub p_quantum: f64,
    pub q_classical: f64,
    pub p_classical: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub version: String,
    pub rows: Vec<SweepRow>,
}

pub fn cmd_sweep(config: &ExperimentConfig) -> Result<SweepReport, AppError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| AppError::Config("sweep requires a [sweep] section".into()))?;
    let mut rows = Vec::with_capacity(sweep.steps as usize);
    for i in 0..sweep.steps {
        let value = sweep.value_at(i);
        let (gate, seq) = config.realize(Some(value))?;
        let result = evaluate_fast(&seq)?;
        // the configured p, not gate.p(): reconstructing |b|^2 from the
        // entries costs an ulp through sqrt(p)^2 and the classical column
        // is contractually exact
        let p_single = match (sweep.variable, &config.gate) {
            (SweepVariable::P, GateSpec::ProbPhase { .. }) => value,
            (_, GateSpec::ProbPhase { p, .. }) => *p,
            _ => gate.p(),
        };
        let classical = classical_populations(p_single, seq.total_passes())?;
        let (p_hat, stderr) = match config.shots {
            ShotSpec::Exact => (None, None),
            ShotSpec::Count(shots) => {
                let record = sample(&result, shots, split_seed(config.seed, i));
                let (p, se) = estimate_probability(&record);
                (Some(p), Some(se))
            }
        };
        rows.push(SweepRow {
            sweep_var: value,
            q_quantum: result.q_return,
            p_quantum: result.p_transfer,
            q_classical: classical.q_return,
            p_classical: classical.p_transfer,
            p_hat,
            stderr,
        });
    }
    Ok(SweepReport {
        config_hash: config.hash(),
        version: VERSION.into(),
        rows,
    })
}

/// CSV form: a `# config_hash=...` comment line, a header, then one row per
/// grid point, every float at 17 significant digits.
pub fn sweep_csv_string(report: &SweepReport) -> Result<String, AppError> {
    let with_shots = report.rows.first().is_some_and(|r| r.p_hat.is_some());
    let mut buf: Vec<u8> = Vec::new();
    writeln!(
        buf,
        "# config_hash={} version={}",
        report.config_hash, report.version
    )?;
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        let mut header = vec![
            "sweep_var",
            "Q_quantum",
            "P_quantum",
            "Q_classical",
            "P_classical",
        ];
        if with_shots {
            header.extend(["p_hat", "stderr"]);
        }
        wtr.write_record(&header)?;
        for row in &report.rows {
            let mut record = vec![
                fmt17(row.sweep_var),
                fmt17(row.q_quantum),
                fmt17(row.p_quantum),
                fmt17(row.q_classical),
                fmt17(row.p_classical),
            ];
            if with_shots {
                record.push(fmt17(row.p_hat.unwrap_or(f64::NAN)));
                record.push(fmt17(row.stderr.unwrap_or(f64::NAN)));
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
    }
    String::from_utf8(buf).map_err(|e| AppError::Output(e.to_string()))
}

/// One measured (or exactly computed) input probability of a protocol.
#[derive(Clone, Debug, Serialize)]
pub struct MeasuredInput {
    pub label: String,
    pub n_passes: u64,
    /// Transfer probability fed to the estimator.
    pub probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<MeasurementRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub config_hash: String,
    pub version: String,
    pub estimate: ErrorEstimate,
    pub inputs: Vec<MeasuredInput>,
    /// Bootstrap standard errors per recovered field, shot mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<BTreeMap<String, f64>>,
    pub warnings: Vec<String>,
}

/// Protocol shape with the integers the inversion needs.
enum Plan {
    RealA { n: u64, hint: HintSpec },
    Sum { m: u64 },
    Ratio { m: u64 },
    PhaseSum { m: u64 },
    Peak { n: u64, m: u64, k: u64 },
}

fn measurement_plan(
    config: &ExperimentConfig,
) -> Result<(Plan, Vec<(&'static str, GateSequence)>), AppError> {
    let est = config
        .estimate
        .as_ref()
        .ok_or_else(|| AppError::Config("estimate requires an [estimate] section".into()))?;
    let gate = build_gate(&config.gate)?;
    let plan = match est.protocol {
        Method::RealA => {
            let n = match config.sequence {
                SequenceSpec::Repeat { n } => n,
                _ => return config_err("protocol real_a requires a repeat sequence"),
            };
            let hint = est.hint.unwrap_or(HintSpec::NearOne);
            let mut seqs = vec![("transfer_n", repeat_same(gate, n))];
            if hint == HintSpec::TwoPoint {
                seqs.push(("transfer_2n", repeat_same(gate, 2 * n)));
            }
            (Plan::RealA { n, hint }, seqs)
        }
        Method::SumLargeP | Method::RatioGeneral | Method::PhaseGateSum => {
            let m = match config.sequence {
                SequenceSpec::Pair { m, .. } => m,
                _ => {
                    return config_err(format!(
                        "protocol {:?} requires a pair sequence",
                        est.protocol
                    ))
                }
            };
            match est.protocol {
                Method::SumLargeP => (
                    Plan::Sum { m },
                    vec![
                        ("pair_pp", pair_sequence(gate, PairKind::PlusPlus, m)),
                        ("pair_mp", pair_sequence(gate, PairKind::MinusPlus, m)),
                    ],
                ),
                Method::RatioGeneral => (
                    Plan::Ratio { m },
                    vec![
                        ("pair_pp_m", pair_sequence(gate, PairKind::PlusPlus, m)),
                        ("pair_pp_2m", pair_sequence(gate, PairKind::PlusPlus, 2 * m)),
                        ("pair_mp_m", pair_sequence(gate, PairKind::MinusPlus, m)),
                        ("pair_mp_2m", pair_sequence(gate, PairKind::MinusPlus, 2 * m)),
                    ],
                ),
                _ => (
                    Plan::PhaseSum { m },
                    vec![
                        ("pair_pm", pair_sequence(gate, PairKind::PlusMinus, m)),
                        ("pair_mm", pair_sequence(gate, PairKind::MinusMinus, m)),
                    ],
                ),
            }
        }
        Method::PhaseGatePeak => {
            let (n, m) = match config.sequence {
                SequenceSpec::PhaseBlock { n, m } => (n, m),
                _ => return config_err("protocol phase_gate_peak requires a phase_block sequence"),
            };
            (
                Plan::Peak { n, m, k: est.k },
                vec![
                    ("pair_pm", pair_sequence(gate, PairKind::PlusMinus, m)),
                    ("pair_mm", pair_sequence(gate, PairKind::MinusMinus, m)),
                    ("phase_block", phase_gate_block(gate, n, m)),
                ],
            )
        }
    };
    Ok(plan)
}

fn solve_protocol(
    plan: &Plan,
    ps: &[f64],
    residual_tol: f64,
) -> Result<ErrorEstimate, EstimatorError> {
    match *plan {
        Plan::RealA { n, hint } => {
            let hint = match hint {
                HintSpec::NearOne => Hint::NearOne,
                HintSpec::NearZero => Hint::NearZero,
                HintSpec::TwoPoint => Hint::TwoPoint(1.0 - ps[1]),
            };
            invert_real_a(1.0 - ps[0], n, hint)
        }
        Plan::Sum { m } => estimate_sum_large_p(ps[0], ps[1], m),
        Plan::Ratio { m } => estimate_ratio_general(ps[0], ps[1], ps[2], ps[3], m, residual_tol),
        Plan::PhaseSum { m } => estimate_phase_gate_sum(ps[0], ps[1], m),
        Plan::Peak { n, m, k } => {
            let sum = estimate_phase_gate_sum(ps[0], ps[1], m)?;
            let gamma = estimate_phase_gamma_peak(ps[2], sum.p_hat, n, m, k)?;
            // forward consistency at the recovered detuning; the block has
            // no eta dependence, so eta = 0 is exact here
            let alpha_k = (2 * k + 1) as f64 * std::f64::consts::FRAC_PI_2 / n as f64;
            let residual = from_probability_and_phases(sum.p_hat, alpha_k + gamma, 0.0)
                .ok()
                .and_then(|g| evaluate_fast(&phase_gate_block(g, n, m)).ok())
                .map(|r| (r.p_transfer - ps[2]).abs())
                .unwrap_or(f64::NAN);
            Ok(ErrorEstimate {
                method: Method::PhaseGatePeak,
                p_hat: sum.p_hat,
                epsilon_hat: sum.epsilon_hat,
                xi_hat: None,
                eta_hat: sum.eta_hat,
                gamma_hat: Some(gamma),
                residual,
            })
        }
    }
}

fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt()
}

pub fn cmd_estimate(config: &ExperimentConfig) -> Result<EstimateReport, AppError> {
    let (plan, seqs) = measurement_plan(config)?;

    let mut inputs = Vec::with_capacity(seqs.len());
    let mut p_hats = Vec::with_capacity(seqs.len());
    let mut worst_se: f64 = 0.0;
    for (i, (label, seq)) in seqs.iter().enumerate() {
        let result = evaluate_fast(seq)?;
        match config.shots {
            ShotSpec::Exact => {
                p_hats.push(result.p_transfer);
                inputs.push(MeasuredInput {
                    label: (*label).into(),
                    n_passes: result.n_passes,
                    probability: result.p_transfer,
                    stderr: None,
                    record: None,
                });
            }
            ShotSpec::Count(shots) => {
                let record = sample(&result, shots, split_seed(config.seed, i as u64));
                let (p_hat, se) = estimate_probability(&record);
                worst_se = worst_se.max(se);
                p_hats.push(p_hat);
                inputs.push(MeasuredInput {
                    label: (*label).into(),
                    n_passes: result.n_passes,
                    probability: p_hat,
                    stderr: Some(se),
                    record: Some(record),
                });
            }
        }
    }

    // the ratio protocol's forward residual cannot beat the noise floor of
    // its inputs, so the ceiling scales with the worst standard error
    // unless the config pins it
    let residual_tol = config
        .estimate
        .as_ref()
        .and_then(|e| e.residual_tol)
        .unwrap_or(match config.shots {
            ShotSpec::Exact => RATIO_RESIDUAL_TOL,
            ShotSpec::Count(_) => RATIO_RESIDUAL_TOL.max(10.0 * worst_se),
        });

    let estimate = solve_protocol(&plan, &p_hats, residual_tol)?;

    let mut warnings = Vec::new();
    let stderr = match config.shots {
        ShotSpec::Exact => None,
        ShotSpec::Count(shots) => {
            let mut fields: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
            let mut successes: usize = 0;
            let mut last_err: Option<EstimatorError> = None;
            for rep in 0..BOOTSTRAP_REPLICAS {
                let resampled: Vec<f64> = p_hats
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| {
                        let base = MultiPassResult::new(0, p, None);
                        let stream =
                            BOOTSTRAP_STREAM_BASE + rep * BOOTSTRAP_STREAM_STRIDE + i as u64;
                        let record = sample(&base, shots, split_seed(config.seed, stream));
                        estimate_probability(&record).0
                    })
                    .collect();
                match solve_protocol(&plan, &resampled, residual_tol) {
                    Ok(e) => {
                        successes += 1;
                        fields.entry("p_hat").or_default().push(e.p_hat);
                        fields.entry("epsilon_hat").or_default().push(e.epsilon_hat);
                        if let Some(x) = e.xi_hat {
                            fields.entry("xi_hat").or_default().push(x);
                        }
                        if let Some(x) = e.eta_hat {
                            fields.entry("eta_hat").or_default().push(x);
                        }
                        if let Some(x) = e.gamma_hat {
                            fields.entry("gamma_hat").or_default().push(x);
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            if successes < (BOOTSTRAP_REPLICAS / 2) as usize {
                return Err(AppError::Estimator(
                    last_err.expect("at least one replica failed"),
                ));
            }
            if successes < BOOTSTRAP_REPLICAS as usize {
                warnings.push(format!(
                    "bootstrap: {} of {BOOTSTRAP_REPLICAS} replicas failed and were skipped",
                    BOOTSTRAP_REPLICAS as usize - successes
                ));
            }
            let map: BTreeMap<String, f64> = fields
                .into_iter()
                .filter(|(_, v)| v.len() == successes)
                .map(|(k, v)| (k.to_string(), std_dev(&v)))
                .collect();
            if let Some(se) = map.get("epsilon_hat") {
                if *se > estimate.epsilon_hat.abs() {
                    warnings.push(format!(
                        "shot budget too small: standard error {:.3e} exceeds the estimate magnitude {:.3e}",
                        se,
                        estimate.epsilon_hat.abs()
                    ));
                }
            }
            Some(map)
        }
    };

    Ok(EstimateReport {
        config_hash: config.hash(),
        version: VERSION.into(),
        estimate,
        inputs,
        stderr,
        warnings,
    })
}

/// Pass counts worth trying for a suspected single-pass error.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SuggestReport {
    pub epsilon: f64,
    /// floor(1 / sqrt(2 eps)): transfer amplified to order one half.
    pub amplification_passes: u64,
    /// round(1 / (4 eps)): where the return probability first crosses 1/2.
    pub half_probability_passes: u64,
}

pub fn cmd_suggest_n(epsilon: f64) -> Result<SuggestReport, AppError> {
    let amplification = amplification_passes(epsilon)?;
    let half = (1.0 / (4.0 * epsilon)).round().max(1.0) as u64;
    Ok(SuggestReport {
        epsilon,
        amplification_passes: amplification,
        half_probability_passes: half,
    })
}

pub fn render_suggest(report: &SuggestReport) -> String {
    format!(
        "epsilon = {}\namplification_passes = {}\nhalf_probability_passes = {}\n",
        fmt17(report.epsilon),
        report.amplification_passes,
        report.half_probability_passes
    )
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String, AppError> {
    Ok(serde_json::to_string_pretty(value)?)
}
