//! Experiment configuration: a TOML document describing one gate, one
//! sequence layout, and optionally a parameter sweep, a shot budget, and an
//! estimation protocol.
//!
//! Round-trip identity is a contract: serialize(parse(serialize(c))) equals
//! serialize(c) bit for bit, and the 64-bit FNV-1a hash of the canonical
//! JSON form is stamped into every output so results can be traced back to
//! the exact configuration that produced them.

use multipass_core::estimators::Method;
use multipass_core::sequences::{
    pair_sequence, phase_gate_block, repeat_same, GateSequence, PairKind,
};
use multipass_core::su2::{
    from_probability_and_phases, make_gate, rabi_gate, resonant_gate, Su2Gate,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::run::AppError;

/// Single-pass gate, by any of the supported parameterizations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateSpec {
    /// Explicit Cayley-Klein entries; must satisfy |a|^2 + |b|^2 = 1.
    CayleyKlein {
        re_a: f64,
        im_a: f64,
        re_b: f64,
        im_b: f64,
    },
    /// Transition probability p and the two gate phases.
    ProbPhase {
        p: f64,
        #[serde(default)]
        xi: f64,
        #[serde(default)]
        eta: f64,
    },
    /// Resonant pulse of the given temporal area.
    Resonant { area: f64 },
    /// Constant Rabi frequency and detuning over a duration.
    Rabi { omega: f64, delta: f64, duration: f64 },
}

/// Multi-pass layout applied to the gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceSpec {
    /// The same gate n times.
    Repeat { n: u64 },
    /// m pairs, the second member sign-flipped per pair_kind.
    Pair { pair_kind: PairKind, m: u64 },
    /// m repetitions of (n passes, then n omega-flipped passes).
    PhaseBlock { n: u64, m: u64 },
}

/// Which scalar a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Single-pass transition probability (prob_phase gates only).
    P,
    /// Pass count of a repeat sequence.
    N,
    /// Pair or block repetition count.
    M,
    /// Gate phase xi (prob_phase gates only).
    Xi,
}

/// Inclusive linear grid over one free parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub steps: u64,
}

impl SweepSpec {
    /// Grid point i of steps, endpoints inclusive.
    pub fn value_at(&self, i: u64) -> f64 {
        if self.steps <= 1 {
            return self.start;
        }
        self.start + (self.stop - self.start) * i as f64 / (self.steps - 1) as f64
    }
}

/// Shot budget: exact probabilities or a finite binomial sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShotSpec {
    Exact,
    Count(u64),
}

impl Default for ShotSpec {
    fn default() -> Self {
        ShotSpec::Exact
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ShotSpecRepr {
    Count(u64),
    Tag(String),
}

impl Serialize for ShotSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ShotSpec::Exact => ShotSpecRepr::Tag("exact".into()).serialize(s),
            ShotSpec::Count(n) => ShotSpecRepr::Count(*n).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ShotSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match ShotSpecRepr::deserialize(d)? {
            ShotSpecRepr::Count(n) if n > 0 => Ok(ShotSpec::Count(n)),
            ShotSpecRepr::Count(_) => Err(serde::de::Error::custom("shots must be >= 1")),
            ShotSpecRepr::Tag(t) if t == "exact" => Ok(ShotSpec::Exact),
            ShotSpecRepr::Tag(t) => Err(serde::de::Error::custom(format!(
                "shots must be \"exact\" or a positive integer, got \"{t}\""
            ))),
        }
    }
}

/// Where results go; stdout when no path is given. A missing format falls
/// back to the command's native one: csv for sweep, json elsewhere.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Branch hint for the real-a inversion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintSpec {
    NearOne,
    NearZero,
    /// Measure the sequence again at doubled length to filter branches.
    TwoPoint,
}

/// Estimation protocol selection and its knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSpec {
    pub protocol: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<HintSpec>,
    /// Peak index for the phase_gate_peak protocol.
    #[serde(default)]
    pub k: u64,
    /// Overrides the ratio protocol's forward-residual ceiling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
}

/// One complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub gate: GateSpec,
    pub sequence: SequenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub shots: ShotSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, AppError> {
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| AppError::Config(format!("config parse failed: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, AppError> {
        toml::to_string_pretty(self).map_err(|e| AppError::Config(e.to_string()))
    }

    /// FNV-1a over the canonical JSON form, as 16 hex digits.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config is always serializable");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }

    /// Structural checks that the type system cannot express.
    pub fn validate(&self) -> Result<(), AppError> {
        build_gate(&self.gate)?;
        if let SequenceSpec::PhaseBlock { n, .. } = self.sequence {
            if n == 0 {
                return Err(AppError::Config("phase_block requires n >= 1".into()));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.steps == 0 {
                return Err(AppError::Config("sweep.steps must be >= 1".into()));
            }
            if !sweep.start.is_finite() || !sweep.stop.is_finite() {
                return Err(AppError::Config("sweep endpoints must be finite".into()));
            }
            let var_is_free = match sweep.variable {
                SweepVariable::P | SweepVariable::Xi => {
                    matches!(self.gate, GateSpec::ProbPhase { .. })
                }
                SweepVariable::N => matches!(self.sequence, SequenceSpec::Repeat { .. }),
                SweepVariable::M => matches!(
                    self.sequence,
                    SequenceSpec::Pair { .. } | SequenceSpec::PhaseBlock { .. }
                ),
            };
            if !var_is_free {
                return Err(AppError::Config(format!(
                    "sweep variable {:?} is not a free parameter of the configured gate/sequence",
                    sweep.variable
                )));
            }
            if sweep.variable == SweepVariable::P
                && !(0.0..=1.0).contains(&sweep.start.min(sweep.stop))
            {
                return Err(AppError::Config("sweep over p must stay in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Gate/sequence pair with the sweep variable substituted.
    pub fn realize(&self, substitute: Option<f64>) -> Result<(Su2Gate, GateSequence), AppError> {
        let mut gate_spec = self.gate.clone();
        let mut seq_spec = self.sequence.clone();
        if let (Some(value), Some(sweep)) = (substitute, &self.sweep) {
            match sweep.variable {
                SweepVariable::P => {
                    if let GateSpec::ProbPhase { p, .. } = &mut gate_spec {
                        *p = value;
                    }
                }
                SweepVariable::Xi => {
                    if let GateSpec::ProbPhase { xi, .. } = &mut gate_spec {
                        *xi = value;
                    }
                }
                SweepVariable::N => {
                    if let SequenceSpec::Repeat { n } = &mut seq_spec {
                        *n = value.round() as u64;
                    }
                }
                SweepVariable::M => match &mut seq_spec {
                    SequenceSpec::Pair { m, .. } | SequenceSpec::PhaseBlock { m, .. } => {
                        *m = value.round() as u64;
                    }
                    SequenceSpec::Repeat { .. } => unreachable!("rejected by validate"),
                },
            }
        }
        let gate = build_gate(&gate_spec)?;
        Ok((gate, build_sequence(gate, &seq_spec)))
    }
}

pub fn build_gate(spec: &GateSpec) -> Result<Su2Gate, AppError> {
    match *spec {
        GateSpec::CayleyKlein {
            re_a,
            im_a,
            re_b,
            im_b,
        } => Ok(make_gate(
            Complex64::new(re_a, im_a),
            Complex64::new(re_b, im_b),
        )?),
        GateSpec::ProbPhase { p, xi, eta } => Ok(from_probability_and_phases(p, xi, eta)?),
        GateSpec::Resonant { area } => Ok(resonant_gate(area)),
        GateSpec::Rabi {
            omega,
            delta,
            duration,
        } => Ok(rabi_gate(omega, delta, duration)),
    }
}

pub fn build_sequence(gate: Su2Gate, spec: &SequenceSpec) -> GateSequence {
    match *spec {
        SequenceSpec::Repeat { n } => repeat_same(gate, n),
        SequenceSpec::Pair { pair_kind, m } => pair_sequence(gate, pair_kind, m),
        SequenceSpec::PhaseBlock { n, m } => phase_gate_block(gate, n, m),
    }
}

/// Command-line overrides layered on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub shots: Option<ShotSpec>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub format: Option<OutputFormat>,
    pub protocol: Option<Method>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(shots) = self.shots {
            config.shots = shots;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if self.out.is_some() || self.format.is_some() {
            let output = config.output.get_or_insert_with(OutputSpec::default);
            if let Some(path) = &self.out {
                output.path = Some(path.clone());
            }
            if let Some(format) = self.format {
                output.format = Some(format);
            }
        }
        if let Some(protocol) = self.protocol {
            if let Some(estimate) = &mut config.estimate {
                estimate.protocol = protocol;
            } else {
                config.estimate = Some(EstimateSpec {
                    protocol,
                    hint: None,
                    k: 0,
                    residual_tol: None,
                });
            }
        }
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_config() -> ExperimentConfig {
        ExperimentConfig {
            gate: GateSpec::ProbPhase {
                p: 1e-3,
                xi: 0.25,
                eta: -0.5,
            },
            sequence: SequenceSpec::Pair {
                pair_kind: PairKind::PlusPlus,
                m: 10,
            },
            sweep: Some(SweepSpec {
                variable: SweepVariable::M,
                start: 1.0,
                stop: 20.0,
                steps: 20,
            }),
            shots: ShotSpec::Count(100_000),
            seed: 42,
            output: Some(OutputSpec {
                path: Some("out.csv".into()),
                format: Some(OutputFormat::Csv),
            }),
            estimate: None,
        }
    }

    #[test]
    fn toml_round_trip_is_identity() {
        let config = sample_config();
        let first = config.to_toml().unwrap();
        let reparsed = ExperimentConfig::from_toml(&first).unwrap();
        assert_eq!(reparsed, config);
        assert_eq!(reparsed.to_toml().unwrap(), first);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let config = sample_config();
        assert_eq!(config.hash(), config.hash());
        assert_eq!(config.hash().len(), 16);
        let mut other = config.clone();
        other.seed = 43;
        assert_ne!(config.hash(), other.hash());
    }

    #[test]
    fn shots_field_accepts_exact_and_integer() {
        let exact: ExperimentConfig = ExperimentConfig::from_toml(
            "shots = \"exact\"\n[gate]\nkind = \"resonant\"\narea = 3.14\n[sequence]\nkind = \"repeat\"\nn = 2\n",
        )
        .unwrap();
        assert_eq!(exact.shots, ShotSpec::Exact);
        let counted: ExperimentConfig = ExperimentConfig::from_toml(
            "shots = 500\n[gate]\nkind = \"resonant\"\narea = 3.14\n[sequence]\nkind = \"repeat\"\nn = 2\n",
        )
        .unwrap();
        assert_eq!(counted.shots, ShotSpec::Count(500));
        assert!(ExperimentConfig::from_toml(
            "shots = \"later\"\n[gate]\nkind = \"resonant\"\narea = 3.14\n[sequence]\nkind = \"repeat\"\nn = 2\n",
        )
        .is_err());
    }

    #[test]
    fn sweep_variable_must_be_free() {
        let mut config = sample_config();
        config.sweep = Some(SweepSpec {
            variable: SweepVariable::N,
            start: 1.0,
            stop: 10.0,
            steps: 10,
        });
        // N sweeps need a repeat sequence, but the sample uses pairs
        assert!(config.validate().is_err());
        config.sequence = SequenceSpec::Repeat { n: 5 };
        config.validate().unwrap();
    }

    #[test]
    fn non_unitary_gate_is_rejected_at_validation() {
        let text = "\n[gate]\nkind = \"cayley_klein\"\nre_a = 1.0\nim_a = 0.0\nre_b = 0.5\nim_b = 0.0\n[sequence]\nkind = \"repeat\"\nn = 2\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_top_level_keys_are_rejected() {
        let text = "shotz = 5\n[gate]\nkind = \"resonant\"\narea = 1.0\n[sequence]\nkind = \"repeat\"\nn = 1\n";
        assert!(ExperimentConfig::from_toml(text).is_err());
    }

    #[test]
    fn overrides_layer_without_clobbering() {
        let mut config = sample_config();
        let overrides = Overrides {
            shots: Some(ShotSpec::Exact),
            seed: None,
            out: None,
            format: Some(OutputFormat::Json),
            protocol: None,
        };
        overrides.apply(&mut config);
        assert_eq!(config.shots, ShotSpec::Exact);
        assert_eq!(config.seed, 42);
        let output = config.output.unwrap();
        assert_eq!(output.path.as_deref(), Some("out.csv"));
        assert_eq!(output.format, Some(OutputFormat::Json));
    }

    #[test]
    fn sweep_grid_hits_both_endpoints() {
        let sweep = SweepSpec {
            variable: SweepVariable::P,
            start: 0.0,
            stop: 1.0,
            steps: 200,
        };
        assert_eq!(sweep.value_at(0), 0.0);
        assert_eq!(sweep.value_at(199), 1.0);
        assert!((sweep.value_at(100) - 100.0 / 199.0).abs() < 1e-15);
    }
}
