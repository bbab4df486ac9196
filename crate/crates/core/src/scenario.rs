//! Versioned JSON scenario files and a seeded generator of radial scenarios.
//!
//! Buses are numbered from 1 in files and from 0 in memory. A line whose
//! `limit` is `null` is unlimited.
//!
//! ```json
//! {
//!   "version": "esm-scenario/1",
//!   "units": "energy kWh, price $/kWh",
//!   "network": {
//!     "bus_count": 2,
//!     "slack": 2,
//!     "lines": [{ "from": 1, "to": 2, "weight": 1.0, "limit": 5.0 }]
//!   },
//!   "prosumers": [
//!     { "c": 0.003, "d": 0.42, "D": 100.0 },
//!     { "c": 0.006, "d": 0.72, "D": 200.0 }
//!   ],
//!   "a": 10.0
//! }
//! ```

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bidding;
use crate::equilibrium;
use crate::market::{Baseline, Prosumer, Scenario};
use crate::network::{LineSpec, NetworkModel};
use crate::{Error, Result};

pub const FORMAT_VERSION: &str = "esm-scenario/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub network: NetworkSection,
    pub prosumers: Vec<ProsumerEntry>,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub bus_count: usize,
    /// 1-based slack bus; the highest-numbered bus when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<usize>,
    pub lines: Vec<LineEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineEntry {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProsumerEntry {
    pub c: f64,
    pub d: f64,
    #[serde(rename = "D")]
    pub demand: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(rename = "E0", default, skip_serializing_if = "Option::is_none")]
    pub e0: Option<f64>,
    #[serde(rename = "D0", default, skip_serializing_if = "Option::is_none")]
    pub d0: Option<f64>,
}

fn bus_index(bus: usize, bus_count: usize, what: &str) -> Result<usize> {
    if bus == 0 || bus > bus_count {
        return Err(Error::InvalidScenario(format!("{what} bus {bus} outside 1..={bus_count}")));
    }
    Ok(bus - 1)
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        if file.version != FORMAT_VERSION {
            return Err(Error::InvalidScenario(format!(
                "unsupported version {:?}, expected {FORMAT_VERSION:?}",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scenario files always serialize");
        text.push('\n');
        text
    }

    /// Builds and validates the in-memory scenario.
    pub fn to_scenario(&self) -> Result<Scenario> {
        let n = self.network.bus_count;
        let lines = self
            .network
            .lines
            .iter()
            .map(|l| {
                Ok(LineSpec::new(
                    bus_index(l.from, n, "line")?,
                    bus_index(l.to, n, "line")?,
                    l.weight,
                    l.limit.unwrap_or(f64::INFINITY),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let network = match self.network.slack {
            Some(s) => NetworkModel::build(n, lines, bus_index(s, n, "slack")?)?,
            None => NetworkModel::with_default_slack(n, lines)?,
        };
        if let Some(labels) = &self.labels {
            if labels.len() != self.prosumers.len() {
                return Err(Error::InvalidScenario(format!(
                    "{} labels for {} prosumers",
                    labels.len(),
                    self.prosumers.len()
                )));
            }
        }
        let prosumers = self
            .prosumers
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let baseline = match (e.p0, e.e0, e.d0) {
                    (None, None, None) => None,
                    (Some(p0), Some(e0), Some(d0)) => Some(Baseline { p0, e0, d0 }),
                    _ => {
                        return Err(Error::InvalidScenario(format!(
                            "prosumer {}: p0, E0 and D0 must be given together",
                            i + 1
                        )))
                    }
                };
                Ok(Prosumer { c: e.c, d: e.d, demand: e.demand, baseline })
            })
            .collect::<Result<Vec<_>>>()?;
        if prosumers.len() != n {
            return Err(Error::InvalidScenario(format!(
                "one prosumer per bus required: {} prosumers for {n} buses",
                prosumers.len()
            )));
        }
        Scenario::new(network, prosumers, self.a)
    }

    pub fn from_scenario(scenario: &Scenario) -> Self {
        let net = scenario.network();
        ScenarioFile {
            version: FORMAT_VERSION.to_string(),
            units: None,
            labels: None,
            network: NetworkSection {
                bus_count: net.bus_count(),
                slack: Some(net.slack() + 1),
                lines: net
                    .lines()
                    .iter()
                    .map(|l| LineEntry {
                        from: l.from + 1,
                        to: l.to + 1,
                        weight: l.weight,
                        limit: l.limit.is_finite().then_some(l.limit),
                    })
                    .collect(),
            },
            prosumers: scenario
                .prosumers()
                .iter()
                .map(|p| ProsumerEntry {
                    c: p.c,
                    d: p.d,
                    demand: p.demand,
                    p0: p.baseline.map(|b| b.p0),
                    e0: p.baseline.map(|b| b.e0),
                    d0: p.baseline.map(|b| b.d0),
                })
                .collect(),
            a: scenario.a(),
        }
    }
}

/// Sampling ranges for [`gen_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenStyle {
    pub c: (f64, f64),
    pub d: (f64, f64),
    pub demand: (f64, f64),
    pub weight: (f64, f64),
    /// Each limit is the uncongested social-optimum flow times a factor from this range.
    pub limit_factor: (f64, f64),
    /// Fixed sensitivity; `max(10, 1.05 a_min)` when absent.
    pub a: Option<f64>,
}

impl Default for GenStyle {
    fn default() -> Self {
        GenStyle {
            c: (0.001, 0.01),
            d: (0.1, 1.0),
            demand: (100.0, 300.0),
            weight: (0.5, 2.0),
            limit_factor: (0.5, 1.5),
            a: None,
        }
    }
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Generates a random radial scenario, deterministic in `seed`.
///
/// Bus `k` attaches to a uniformly chosen earlier bus. Limits are positive,
/// so self-sufficiency is always flow-feasible.
pub fn gen_scenario(seed: u64, size: usize, style: &GenStyle) -> Result<ScenarioFile> {
    if size < 2 {
        return Err(Error::TooFewProsumers(size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prosumers: Vec<Prosumer> = (0..size)
        .map(|_| {
            let c = sample(&mut rng, style.c);
            let d = sample(&mut rng, style.d);
            Prosumer::new(c, d, sample(&mut rng, style.demand))
        })
        .collect();
    let mut lines: Vec<LineSpec> = (1..size)
        .map(|k| {
            let parent = rng.random_range(0..k);
            LineSpec::new(parent, k, sample(&mut rng, style.weight), f64::INFINITY)
        })
        .collect();

    let open = Scenario::new(NetworkModel::with_default_slack(size, lines.clone())?, prosumers.clone(), 1.0)?;
    let social = equilibrium::social_optimum(&open)?;
    let withdrawals: Vec<f64> = prosumers.iter().zip(social.p_tilde()).map(|(p, pt)| p.demand - pt).collect();
    let flows = open.network().line_flows(&withdrawals)?;
    let floor = 1e-3 * (1.0 + style.demand.0.abs().max(style.demand.1.abs()));
    for (line, flow) in lines.iter_mut().zip(flows) {
        line.limit = (flow.abs() * sample(&mut rng, style.limit_factor)).max(floor);
    }

    let network = NetworkModel::with_default_slack(size, lines)?;
    let probe = Scenario::new(network, prosumers, 1.0)?;
    let a = style.a.unwrap_or_else(|| (1.05 * bidding::a_min(&probe)).max(10.0));
    Ok(ScenarioFile::from_scenario(&probe.with_sensitivity(a)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER: &str = r#"{
      "version": "esm-scenario/1",
      "units": "energy kWh, price $/kWh",
      "labels": ["home", "office"],
      "network": { "bus_count": 2, "slack": 2,
                   "lines": [{ "from": 1, "to": 2, "weight": 1.0, "limit": 5.0 }] },
      "prosumers": [ { "c": 0.003, "d": 0.42, "D": 100.0 },
                     { "c": 0.006, "d": 0.72, "D": 200.0, "p0": 50.0, "E0": 150.0, "D0": 200.0 } ],
      "a": 10.0
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let file = ScenarioFile::parse(PAPER).unwrap();
        let s = file.to_scenario().unwrap();
        assert_eq!(s.size(), 2);
        assert_eq!(s.network().limit(0), 5.0);
        let mut back = ScenarioFile::from_scenario(&s);
        back.units = file.units.clone();
        back.labels = file.labels.clone();
        assert_eq!(back, file);
        assert_eq!(ScenarioFile::parse(&back.to_json()).unwrap(), file);
    }

    #[test]
    fn null_limit_is_unlimited() {
        let text = PAPER.replace("\"limit\": 5.0", "\"limit\": null");
        let s = ScenarioFile::parse(&text).unwrap().to_scenario().unwrap();
        assert!(s.network().limit(0).is_infinite());
        assert!(ScenarioFile::from_scenario(&s).to_json().contains("\"limit\": null"));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ScenarioFile::parse(&PAPER.replace("esm-scenario/1", "esm-scenario/9")).is_err());
        assert!(ScenarioFile::parse(&PAPER.replace("\"a\": 10.0", "\"a\": 10.0, \"b\": 1")).is_err());
        let mismatch = PAPER.replace("\"bus_count\": 2", "\"bus_count\": 3");
        assert!(ScenarioFile::parse(&mismatch).unwrap().to_scenario().is_err());
        let partial = PAPER.replace(", \"E0\": 150.0", "");
        assert!(ScenarioFile::parse(&partial).unwrap().to_scenario().is_err());
        let broken = PAPER.replace("\"D0\": 200.0", "\"D0\": 201.0");
        assert!(ScenarioFile::parse(&broken).unwrap().to_scenario().is_err());
        let outside = PAPER.replace("\"to\": 2", "\"to\": 7");
        assert!(ScenarioFile::parse(&outside).unwrap().to_scenario().is_err());
    }

    #[test]
    fn generator_is_deterministic_and_radial() {
        let style = GenStyle::default();
        let one = gen_scenario(7, 38, &style).unwrap().to_json();
        let two = gen_scenario(7, 38, &style).unwrap().to_json();
        assert_eq!(one, two);
        assert_ne!(one, gen_scenario(8, 38, &style).unwrap().to_json());
        let s = ScenarioFile::parse(&one).unwrap().to_scenario().unwrap();
        assert!(s.network().is_radial());
        assert!(s.a() >= bidding::a_min(&s));
        for p in s.prosumers() {
            assert!((0.001..0.01).contains(&p.c));
            assert!((0.1..1.0).contains(&p.d));
        }
    }

    #[test]
    fn generator_needs_two_prosumers() {
        assert!(matches!(gen_scenario(1, 1, &GenStyle::default()), Err(Error::TooFewProsumers(1))));
    }
}
