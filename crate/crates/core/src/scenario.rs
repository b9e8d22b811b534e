//! Scenario files: a `[run]` table plus exactly one model section.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::icn::{IcnError, IcnScenario};
use crate::mobility::{MobilityError, MobilityScenario};
use crate::sim::{MetricsError, MetricsSink, Record};
use crate::tcp::{TcpError, TcpScenario};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse: {0}")]
    Parse(String),
    #[error("override `{key}`: {why}")]
    Override { key: String, why: String },
    #[error("scenario needs exactly one of [icn], [mobility], [tcp]; found {0}")]
    Shape(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Icn(#[from] IcnError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Tcp(#[from] TcpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl ScenarioError {
    /// Slot and assertion of a failed runtime invariant, if that is what this is.
    pub fn invariant(&self) -> Option<(u64, &str)> {
        match self {
            ScenarioError::Icn(IcnError::Invariant { slot, what })
            | ScenarioError::Tcp(TcpError::Invariant { slot, what }) => Some((*slot, what)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub id: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub horizon: u64,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Icn(Box<IcnScenario>),
    Mobility(Box<MobilityScenario>),
    Tcp(Box<TcpScenario>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub run: RunSection,
    pub model: Model,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    run: RunSection,
    icn: Option<IcnScenario>,
    mobility: Option<MobilityScenario>,
    tcp: Option<TcpScenario>,
}

/// Parsed but not yet typed scenario, so dotted overrides can be applied first.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDoc(toml::Table);

impl ScenarioDoc {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        text.parse::<toml::Table>().map(Self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            ScenarioError::Parse(m) => ScenarioError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Set `a.b.c` (array elements by index) to `value`, read as TOML when it
    /// parses and as a string otherwise. Every table on the path must exist;
    /// the leaf may be new only if the table accepts it on typing.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        let fail = |why: &str| ScenarioError::Override { key: key.into(), why: why.into() };
        let parts: Vec<&str> = key.split('.').collect();
        if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
            return Err(fail("expected a dotted key such as tcp.paths"));
        }
        let parsed = parse_value(value);
        let (leaf, path) = parts.split_last().expect("at least two parts");
        let missing = |part: &str| fail(&format!("no `{part}` in the scenario"));
        let mut parent = self.0.get_mut(path[0]).ok_or_else(|| missing(path[0]))?;
        for part in &path[1..] {
            parent = match parent {
                toml::Value::Table(t) => t.get_mut(*part),
                toml::Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| missing(part))?;
        }
        match parent {
            toml::Value::Table(t) => {
                t.insert(leaf.to_string(), parsed);
            }
            toml::Value::Array(a) => {
                let i: usize = leaf.parse().map_err(|_| fail("array index expected"))?;
                *a.get_mut(i).ok_or_else(|| fail("array index out of range"))? = parsed;
            }
            _ => return Err(fail("parent is not a table")),
        }
        Ok(())
    }

    pub fn typed(&self) -> Result<ScenarioConfig, ScenarioError> {
        let raw: RawScenario = toml::Value::Table(self.0.clone())
            .try_into()
            .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        let present = [raw.icn.is_some(), raw.mobility.is_some(), raw.tcp.is_some()];
        let count = present.iter().filter(|p| **p).count();
        let model = match (raw.icn, raw.mobility, raw.tcp) {
            (Some(s), None, None) => Model::Icn(Box::new(s)),
            (None, Some(s), None) => Model::Mobility(Box::new(s)),
            (None, None, Some(s)) => Model::Tcp(Box::new(s)),
            _ => return Err(ScenarioError::Shape(count)),
        };
        Ok(ScenarioConfig { run: raw.run, model })
    }
}

fn parse_value(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

/// Metrics of one run plus its end-of-run summary.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub sink: MetricsSink,
    pub summary: Vec<Record>,
}

impl ScenarioConfig {
    pub fn from_str_with(text: &str, overrides: &[(String, String)]) -> Result<Self, ScenarioError> {
        let mut doc = ScenarioDoc::parse(text)?;
        for (k, v) in overrides {
            doc.set(k, v)?;
        }
        doc.typed()
    }

    /// Check what can be checked without simulating.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        match &self.model {
            Model::Icn(s) => {
                s.engine(self.run.seed)?;
            }
            Model::Mobility(s) => {
                s.controller(self.run.seed)?;
            }
            Model::Tcp(s) => s.validate()?,
        }
        Ok(())
    }

    /// Simulate `run.horizon` slots with `run.seed`.
    pub fn run(&self) -> Result<RunOutput, ScenarioError> {
        let (seed, horizon) = (self.run.seed, self.run.horizon);
        let mut sink = MetricsSink::new(self.run.id.clone());
        match &self.model {
            Model::Icn(s) => {
                let mut engine = s.engine(seed)?;
                if horizon > 0 {
                    engine.run(horizon, Some(&mut sink))?;
                }
            }
            Model::Mobility(s) => {
                let mut controller = s.controller(seed)?;
                if horizon > 0 {
                    let run = controller.run(horizon, Some(&mut sink));
                    let cost = run.average_cost(&controller.net, &controller.costs, &controller.flows);
                    sink.record(horizon, "average_cost", "all", cost)?;
                    sink.record(horizon, "max_backlog_first_half", "all", run.max_backlog_first_half)?;
                    sink.record(horizon, "max_backlog_second_half", "all", run.max_backlog_second_half)?;
                }
            }
            Model::Tcp(s) => {
                let engine = s.engine(seed)?;
                if horizon > 0 {
                    engine.run(horizon, Some(&mut sink))?;
                }
            }
        }
        let summary = sink.records().iter().filter(|r| horizon > 0 && r.t == horizon).cloned().collect();
        Ok(RunOutput { sink, summary })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TCP: &str = include_str!("../../../scenarios/tcp_multipath.toml");

    #[test]
    fn overrides_retype() {
        let sc = ScenarioConfig::from_str_with(
            TCP,
            &[("tcp.paths".into(), "2".into()), ("run.horizon".into(), "50".into())],
        )
        .unwrap();
        let Model::Tcp(t) = &sc.model else { panic!() };
        assert_eq!((t.paths, sc.run.horizon), (2, 50));
        let sc = ScenarioConfig::from_str_with(TCP, &[("tcp.channel.levels.0.p".into(), "0.2".into())]).unwrap();
        let Model::Tcp(t) = &sc.model else { panic!() };
        assert_eq!(t.channel.levels[0].p, 0.2);
    }

    #[test]
    fn bad_overrides_are_rejected() {
        for key in ["tcp", "nope.paths", "tcp.nope.x", "tcp.channel.levels.7.p"] {
            let e = ScenarioConfig::from_str_with(TCP, &[(key.into(), "1".into())]).unwrap_err();
            assert!(matches!(e, ScenarioError::Override { .. }), "{key}: {e}");
        }
        // a new leaf is caught when the section is typed
        let e = ScenarioConfig::from_str_with(TCP, &[("tcp.pathz".into(), "1".into())]).unwrap_err();
        assert!(matches!(e, ScenarioError::Parse(_)), "{e}");
    }

    #[test]
    fn string_fallback() {
        assert_eq!(parse_value("aimd"), toml::Value::String("aimd".into()));
        assert_eq!(parse_value("\"aimd\""), toml::Value::String("aimd".into()));
        assert_eq!(parse_value("1.5"), toml::Value::Float(1.5));
        let sc = ScenarioConfig::from_str_with(TCP, &[("tcp.transport".into(), "aimd".into())]).unwrap();
        let Model::Tcp(t) = &sc.model else { panic!() };
        assert_eq!(t.transport, crate::tcp::Transport::Aimd);
    }

    #[test]
    fn needs_one_model() {
        let e = ScenarioConfig::from_str_with("[run]\nid='x'\nhorizon=1\n", &[]).unwrap_err();
        assert!(matches!(e, ScenarioError::Shape(0)));
        let e = ScenarioConfig::from_str_with("[run]\nid='x'\nhorizon=1\n[tcp]\n", &[]).unwrap_err();
        assert!(matches!(e, ScenarioError::Parse(_)));
    }

    #[test]
    fn zero_horizon_gives_header_only() {
        let sc = ScenarioConfig::from_str_with(TCP, &[("run.horizon".into(), "0".into())]).unwrap();
        let out = sc.run().unwrap();
        assert!(out.summary.is_empty());
        assert_eq!(out.sink.to_csv(), "run_id,t,metric,subject,value\n");
    }

    #[test]
    fn same_seed_same_csv() {
        let o = [("run.horizon".into(), "400".into())];
        let a = ScenarioConfig::from_str_with(TCP, &o).unwrap().run().unwrap();
        let b = ScenarioConfig::from_str_with(TCP, &o).unwrap().run().unwrap();
        assert_eq!(a.sink.to_csv(), b.sink.to_csv());
        assert!(!a.summary.is_empty());
    }
}
