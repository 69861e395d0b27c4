//! Flat `key = value` configuration files.
//!
//! ```text
//! # ten agents on the ring used in the figures
//! n_agents = 10
//! ring_length = 501
//! gamma = 0.1
//! ```
//!
//! `n_agents` and `ring_length` are required; every other key has a default
//! (see [`KEYS`]). Unknown and repeated keys are rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::integrator::{InitialCondition, SimConfig};
use crate::model::{distances_from_positions, Parameters, State};

/// Recognised keys with their defaults (`None` = required or derived).
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("n_agents", None),
    ("ring_length", None),
    ("alpha", Some("1")),
    ("beta", Some("1")),
    ("gamma", Some("0")),
    ("sigma", Some("1")),
    ("u", Some("0")),
    ("dt", Some("0.001")),
    ("t_end", Some("500")),
    ("seed", Some("0")),
    ("record_every", Some("100")),
    ("initial_condition", Some("uniform_rest")),
    ("initial_distances", None),
    ("initial_positions", None),
    ("initial_velocities", None),
    ("replicas", Some("1")),
    // default: min(10 / gamma, t_end / 2), or 0 when gamma = 0
    ("burn_in", None),
    ("sample_stride", Some("1")),
    // default: seed
    ("base_seed", None),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: Parameters,
    pub sim: SimConfig,
    pub ensemble: EnsembleConfig,
}

/// Raw key-value pairs with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Syntax {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Syntax {
                    line: line_no,
                    message: "empty key or value".into(),
                });
            }
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(Error::Syntax {
                    line: line_no,
                    message: format!("unknown key `{key}`"),
                });
            }
            if let Some((first, _)) = entries.get(key) {
                return Err(Error::Syntax {
                    line: line_no,
                    message: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            entries.insert(key.to_string(), (line_no, value.to_string()));
        }
        Ok(Self { entries })
    }

    /// Overrides (or adds) one key, as done by parameter sweeps.
    pub fn set(&mut self, key: &str, value: String) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Syntax {
                line: 0,
                message: format!("unknown key `{key}`"),
            });
        }
        self.entries.insert(key.to_string(), (0, value));
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str())).or_else(|| {
            KEYS.iter()
                .find(|(k, _)| *k == key)
                .and_then(|(_, d)| d.map(|d| (0, d)))
        })
    }

    fn get<T: std::str::FromStr>(&self, key: &'static str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| Error::Syntax {
                line,
                message: format!("cannot parse `{v}` as a value for `{key}`"),
            }),
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &'static str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::config(key, "required key is missing"))
    }

    fn list(&self, key: &'static str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|x| {
                    x.trim().parse::<f64>().map_err(|_| Error::Syntax {
                        line,
                        message: format!("cannot parse `{}` in list `{key}`", x.trim()),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let params = Parameters {
            n_agents: self.require("n_agents")?,
            ring_length: self.require("ring_length")?,
            alpha: self.require("alpha")?,
            beta: self.require("beta")?,
            gamma: self.require("gamma")?,
            sigma: self.require("sigma")?,
            u: self.require("u")?,
        }
        .validate()?;

        let initial_condition = match self.require::<String>("initial_condition")?.as_str() {
            "uniform_rest" => InitialCondition::UniformRest,
            "uniform_speed" => InitialCondition::UniformSpeed,
            "explicit" => {
                let distances = match (self.list("initial_distances")?, self.list("initial_positions")?) {
                    (Some(d), None) => d,
                    (None, Some(q)) => distances_from_positions(&q, params.ring_length)?,
                    (Some(_), Some(_)) => {
                        return Err(Error::config(
                            "initial_positions",
                            "give either initial_distances or initial_positions, not both",
                        ))
                    }
                    (None, None) => {
                        return Err(Error::config(
                            "initial_distances",
                            "explicit initial condition needs initial_distances or initial_positions",
                        ))
                    }
                };
                let velocities = self
                    .list("initial_velocities")?
                    .ok_or_else(|| Error::config("initial_velocities", "required for explicit initial condition"))?;
                InitialCondition::Explicit(State::new(distances, velocities)?)
            }
            other => {
                return Err(Error::config(
                    "initial_condition",
                    format!("expected uniform_rest, uniform_speed or explicit, got `{other}`"),
                ))
            }
        };
        if !matches!(initial_condition, InitialCondition::Explicit(_)) {
            for key in ["initial_distances", "initial_positions", "initial_velocities"] {
                if self.entries.contains_key(key) {
                    return Err(Error::config(
                        "initial_condition",
                        format!("`{key}` is only used with initial_condition = explicit"),
                    ));
                }
            }
        }
        let sim = SimConfig {
            dt: self.require("dt")?,
            t_end: self.require("t_end")?,
            seed: self.require("seed")?,
            record_every: self.require("record_every")?,
            initial_condition,
        };
        sim.validate()?;
        sim.initial_condition.state(&params)?;

        let burn_in = match self.get::<f64>("burn_in")? {
            Some(b) => b,
            None => EnsembleConfig::default_burn_in(params.gamma).min(0.5 * sim.t_end),
        };
        let ensemble = EnsembleConfig {
            replicas: self.require("replicas")?,
            burn_in,
            sample_stride: self.require("sample_stride")?,
            base_seed: self.get("base_seed")?.unwrap_or(sim.seed),
        };
        ensemble.validate(&sim)?;
        Ok(RunConfig {
            params,
            sim,
            ensemble,
        })
    }
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    RawConfig::parse(text)?.resolve()
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Canonical text form; `parse_config(&to_config_text(c)) == c`.
pub fn to_config_text(config: &RunConfig) -> String {
    let p = &config.params;
    let s = &config.sim;
    let e = &config.ensemble;
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    line("n_agents", p.n_agents.to_string());
    line("ring_length", p.ring_length.to_string());
    line("alpha", p.alpha.to_string());
    line("beta", p.beta.to_string());
    line("gamma", p.gamma.to_string());
    line("sigma", p.sigma.to_string());
    line("u", p.u.to_string());
    line("dt", s.dt.to_string());
    line("t_end", s.t_end.to_string());
    line("seed", s.seed.to_string());
    line("record_every", s.record_every.to_string());
    match &s.initial_condition {
        InitialCondition::UniformRest => line("initial_condition", "uniform_rest".into()),
        InitialCondition::UniformSpeed => line("initial_condition", "uniform_speed".into()),
        InitialCondition::Explicit(state) => {
            line("initial_condition", "explicit".into());
            line("initial_distances", join(&state.distances));
            line("initial_velocities", join(&state.velocities));
        }
    }
    line("replicas", e.replicas.to_string());
    line("burn_in", e.burn_in.to_string());
    line("sample_stride", e.sample_stride.to_string());
    line("base_seed", e.base_seed.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_configuration() {
        let c = parse_config("n_agents = 10\nring_length = 501\ngamma = 0.1").unwrap();
        assert_eq!(c.params.n_agents, 10);
        assert_eq!(c.params.ring_length, 501.0);
        assert_eq!(c.params.gamma, 0.1);
        assert_eq!((c.params.alpha, c.params.beta, c.params.sigma, c.params.u), (1.0, 1.0, 1.0, 0.0));
        assert_eq!(c.sim.dt, 0.001);
        assert_eq!(c.sim.record_every, 100);
        assert_eq!(c.ensemble.replicas, 1);
        assert_eq!(c.ensemble.burn_in, 100.0);
        assert_eq!(c.sim.initial_condition, InitialCondition::UniformRest);
    }

    #[test]
    fn missing_agent_count() {
        let err = parse_config("").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { name: "n_agents", .. }), "{err}");
    }

    #[test]
    fn negative_gamma() {
        let err = parse_config("n_agents = 3\nring_length = 3\ngamma = -1").unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "gamma", .. }));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_config("n_agents = 3\n# fine\nring_length 3").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 3, .. }), "{err}");
        let err = parse_config("n_agents = 3\nbogus = 1").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 2, .. }));
        let err = parse_config("n_agents = three").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 1, .. }));
        let err = parse_config("n_agents = 3\nn_agents = 4").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 2, .. }));
    }

    #[test]
    fn comments_and_whitespace() {
        let c = parse_config("  n_agents=4 # four\n\n ring_length =\t8\n").unwrap();
        assert_eq!(c.params.n_agents, 4);
        assert_eq!(c.params.ring_length, 8.0);
    }

    #[test]
    fn explicit_initial_state() {
        let c = parse_config(
            "n_agents = 3\nring_length = 6\ninitial_condition = explicit\n\
             initial_positions = 0, 1, 3\ninitial_velocities = 1, 0, 0",
        )
        .unwrap();
        match c.sim.initial_condition {
            InitialCondition::Explicit(s) => {
                assert_eq!(s.distances, vec![1.0, 2.0, 3.0]);
                assert_eq!(s.velocities, vec![1.0, 0.0, 0.0]);
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_config("n_agents = 3\nring_length = 6\ninitial_condition = explicit").is_err());
        assert!(parse_config(
            "n_agents = 3\nring_length = 6\ninitial_condition = explicit\n\
             initial_distances = 1, 2\ninitial_velocities = 0, 0"
        )
        .is_err());
        assert!(parse_config("n_agents = 3\nring_length = 6\ninitial_velocities = 0, 0, 0").is_err());
    }

    #[test]
    fn burn_in_defaults() {
        let c = parse_config("n_agents = 3\nring_length = 3\ngamma = 0.01\nt_end = 100").unwrap();
        assert_eq!(c.ensemble.burn_in, 50.0);
        let c = parse_config("n_agents = 3\nring_length = 3").unwrap();
        assert_eq!(c.ensemble.burn_in, 0.0);
        assert!(parse_config("n_agents = 3\nring_length = 3\nburn_in = 600").is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let text = "n_agents = 4\nring_length = 7.3\ngamma = 0.3\nsigma = 0.1\nseed = 99\n\
                    initial_condition = explicit\ninitial_distances = 1, 2, 3, 1.3\n\
                    initial_velocities = 0.1, 0, 0, -0.2\nreplicas = 3";
        let c = parse_config(text).unwrap();
        assert_eq!(parse_config(&to_config_text(&c)).unwrap(), c);
    }

    #[test]
    fn overrides() {
        let mut raw = RawConfig::parse("n_agents = 4\nring_length = 4").unwrap();
        raw.set("gamma", "0.7".into()).unwrap();
        assert_eq!(raw.resolve().unwrap().params.gamma, 0.7);
        assert!(raw.set("nonsense", "1".into()).is_err());
    }
}
