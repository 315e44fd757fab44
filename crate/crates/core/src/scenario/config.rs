//! Flat key-value run configuration.
//!
//! Every field is optional except `total_capacity`; defaults are applied by
//! [`Config::resolve`], which also lists the keys that fell back to one so
//! the run manifest can record them.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{StorageParams, Weights, DEFAULT_ALPHA, DEFAULT_SOC_INI, DEFAULT_SOC_LOWER, DEFAULT_SOC_UPPER};
use crate::mpec::BigMPolicy;
use crate::solver::{Branching, SolveOptions};

use super::Mode;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub total_capacity: Option<f64>,
    /// Slot length in hours; defaults to `24 / T`.
    pub slot_hours: Option<f64>,
    pub eta_ch: Option<f64>,
    pub eta_dis: Option<f64>,
    pub power_ratio: Option<f64>,
    pub soc_lower: Option<f64>,
    pub soc_upper: Option<f64>,
    /// Initial SoC shared by every customer unless `soc_ini_customer` is set.
    pub soc_ini: Option<f64>,
    pub soc_ini_customer: Option<Vec<f64>>,
    pub soc_ini_disco: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub alpha: Option<f64>,
    pub extra_base_load: Option<Vec<f64>>,

    pub mode: Option<Mode>,
    pub feasibility_tol: Option<f64>,
    pub optimality_tol: Option<f64>,
    pub gap: Option<f64>,
    pub node_limit: Option<usize>,
    pub time_limit_secs: Option<f64>,
    pub branching: Option<Branching>,
    pub anti_cycling: Option<bool>,
    pub value_cuts: Option<bool>,
    pub grid_step: Option<f64>,

    pub bigm_dual: Option<f64>,
    pub bigm_dual_factor: Option<f64>,
    pub bigm_escalation: Option<f64>,
    pub bigm_max_rounds: Option<usize>,
}

/// Configuration with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub storage: StorageParams,
    pub weights: Weights,
    pub slot_hours: f64,
    pub extra_base_load: Option<Vec<f64>>,
    pub mode: Mode,
    pub solve: SolveOptions,
    pub policy: BigMPolicy,
    pub grid_step: Option<f64>,
    /// Keys that were absent and took their default.
    pub defaults_applied: Vec<String>,
}

impl Config {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Config> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() as u64 + 1)
                .unwrap_or(0);
            Error::parse(origin, line, e.message())
        })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serialises")
    }

    /// Applies defaults for `customers` participants over `slots` slots.
    pub fn resolve(&self, customers: usize, slots: usize) -> Result<Resolved> {
        let mut defaults = Vec::new();
        let mut pick = |key: &str, value: Option<f64>, default: f64| {
            value.unwrap_or_else(|| {
                defaults.push(key.to_string());
                default
            })
        };
        let total = self
            .total_capacity
            .ok_or_else(|| Error::InvalidArgument("config must set total_capacity".into()))?;
        let slot_hours = pick("slot_hours", self.slot_hours, 24.0 / slots.max(1) as f64);
        let eta_ch = pick("eta_ch", self.eta_ch, 0.92);
        let eta_dis = pick("eta_dis", self.eta_dis, 0.92);
        let power_ratio = pick("power_ratio", self.power_ratio, 0.25);
        let soc_lower = pick("soc_lower", self.soc_lower, DEFAULT_SOC_LOWER);
        let soc_upper = pick("soc_upper", self.soc_upper, DEFAULT_SOC_UPPER);
        let soc_ini = pick("soc_ini", self.soc_ini, DEFAULT_SOC_INI);
        let soc_ini_disco = pick("soc_ini_disco", self.soc_ini_disco, soc_ini);
        let weights = Weights {
            lambda1: pick("lambda1", self.lambda1, Weights::default().lambda1),
            lambda2: pick("lambda2", self.lambda2, Weights::default().lambda2),
            lambda3: pick("lambda3", self.lambda3, Weights::default().lambda3),
            alpha: pick("alpha", self.alpha, DEFAULT_ALPHA),
        };
        let feasibility_tol = pick("feasibility_tol", self.feasibility_tol, SolveOptions::default().feasibility_tol);
        let optimality_tol = pick("optimality_tol", self.optimality_tol, SolveOptions::default().optimality_tol);
        let gap = pick("gap", self.gap, 0.0);
        let policy_default = BigMPolicy::default();
        let dual_factor = pick("bigm_dual_factor", self.bigm_dual_factor, policy_default.dual_factor);
        let escalation = pick("bigm_escalation", self.bigm_escalation, policy_default.escalation);

        let soc_ini_customer = match &self.soc_ini_customer {
            Some(v) => {
                if v.len() != customers {
                    return Err(Error::Dimension(format!(
                        "soc_ini_customer has {} entries for {customers} customers",
                        v.len()
                    )));
                }
                v.clone()
            }
            None => vec![soc_ini; customers],
        };
        if self.mode.is_none() {
            defaults.push("mode".into());
        }
        if self.node_limit.is_none() {
            defaults.push("node_limit".into());
        }
        if self.bigm_max_rounds.is_none() {
            defaults.push("bigm_max_rounds".into());
        }

        let solve = SolveOptions {
            feasibility_tol,
            optimality_tol,
            gap,
            node_limit: self.node_limit.unwrap_or(SolveOptions::default().node_limit),
            time_limit: self.time_limit_secs.map(Duration::from_secs_f64),
            branching: self.branching.unwrap_or(Branching::MostViolatedComplementarity),
            anti_cycling: self.anti_cycling.unwrap_or(true),
            max_lp_iterations: None,
            value_cuts: self.value_cuts.unwrap_or(true),
        };
        solve.check()?;
        let policy = BigMPolicy {
            exact_primal: true,
            dual_m: self.bigm_dual,
            dual_factor,
            escalation,
            max_rounds: self.bigm_max_rounds.unwrap_or(policy_default.max_rounds),
        };
        policy.check()?;
        if let Some(step) = self.grid_step {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::InvalidArgument(format!("grid_step must be positive, got {step}")));
            }
        }
        Ok(Resolved {
            storage: StorageParams {
                total_capacity: total,
                eta_ch,
                eta_dis,
                power_ratio,
                soc_lower,
                soc_upper,
                soc_ini_customer,
                soc_ini_disco,
            },
            weights,
            slot_hours,
            extra_base_load: self.extra_base_load.clone(),
            mode: self.mode.unwrap_or(Mode::Lpcc),
            solve,
            policy,
            grid_step: self.grid_step,
            defaults_applied: defaults,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_alpha_defaults_and_is_logged() {
        let cfg = Config::from_toml_str("total_capacity = 8.0\n", Path::new("c.toml")).unwrap();
        let r = cfg.resolve(2, 24).unwrap();
        assert_eq!(r.weights.alpha, 0.01);
        assert!(r.defaults_applied.iter().any(|k| k == "alpha"));
        assert_eq!(r.slot_hours, 1.0);
        assert_eq!(r.storage.soc_ini_customer, vec![0.5, 0.5]);
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let err = Config::from_toml_str("total_capacity = 1.0\nbogus = 3\n", Path::new("c.toml")).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let cfg = Config {
            total_capacity: Some(800.0),
            eta_ch: Some(0.92),
            mode: Some(Mode::BigM),
            ..Config::default()
        };
        let text = cfg.to_toml_string();
        assert_eq!(Config::from_toml_str(&text, Path::new("x")).unwrap(), cfg);
    }
}
