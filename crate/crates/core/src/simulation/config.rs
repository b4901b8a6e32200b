//! Plain-text `key = value` study configuration.
//!
//! ```text
//! # location-shift model, three copula correlations
//! gamma = 0
//! marginal = normal
//! rho = 0.1, 0.5, 0.9
//! n = 50
//! design = unbalanced:3-8
//! replications = 100
//! seed = 2021
//! ```
//!
//! `gamma`, `marginal`, `rho`, `n` and `design` accept comma-separated lists;
//! the study runs their full cross product. `#` starts a comment.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::correlation::CorrelationKind;
use crate::error::{GeeeError, Result};
use crate::expectile::Asymmetry;
use crate::marginal::MarginalLaw;
use crate::simulation::{PanelDesign, SimulationScenario};

pub const KNOWN_KEYS: [&str; 12] = [
    "gamma",
    "model",
    "marginal",
    "rho",
    "n",
    "design",
    "replications",
    "taus",
    "structures",
    "seed",
    "covariate_dof",
    "extended",
];

/// Replications per scenario of the standard grid.
pub const FULL_SCALE_REPLICATIONS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub scenarios: Vec<SimulationScenario>,
    /// Settings as read, for the run manifest.
    pub settings: BTreeMap<String, String>,
}

impl StudyConfig {
    /// Every scenario of the standard grid with `replications` each.
    pub fn full_grid(replications: usize, seed: u64) -> Result<Self> {
        let text = format!(
            "gamma = 0, 0.1\nmarginal = normal, t3, chisq3\nrho = 0.1, 0.5, 0.9\nn = 50, 100\n\
             design = balanced:4, unbalanced:3-8\nreplications = {replications}\nseed = {seed}\n"
        );
        parse_config(&text)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        for s in &mut self.scenarios {
            s.seed = seed;
        }
        self.settings.insert("seed".into(), seed.to_string());
        self
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|v| !v.is_empty())
}

fn parse_number<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| GeeeError::Config(format!("line {line}: `{key}` has invalid value `{value}`")))
}

fn parse_gamma(value: &str, line: usize) -> Result<f64> {
    match value.to_ascii_lowercase().as_str() {
        "m0" => Ok(0.0),
        "m1/10" | "m0.1" => Ok(0.1),
        _ => parse_number("gamma", value, line),
    }
}

/// Parses a configuration into validated scenarios.
pub fn parse_config(text: &str) -> Result<StudyConfig> {
    let mut settings: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut unknown = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| GeeeError::Config(format!("line {line}: expected `key = value`, got `{content}`")))?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            unknown.push(format!("`{key}` (line {line})"));
            continue;
        }
        if settings.insert(key.clone(), (line, value)).is_some() {
            return Err(GeeeError::Config(format!("line {line}: `{key}` given twice")));
        }
    }
    if !unknown.is_empty() {
        return Err(GeeeError::Config(format!(
            "unknown keys {}; valid keys are {}",
            unknown.join(", "),
            KNOWN_KEYS.join(", ")
        )));
    }
    if settings.contains_key("gamma") && settings.contains_key("model") {
        return Err(GeeeError::Config("give either `gamma` or `model`, not both".into()));
    }

    let get = |key: &str| settings.get(key).map(|(l, v)| (*l, v.as_str()));

    let gammas = match get("gamma").or_else(|| get("model")) {
        Some((l, v)) => list(v).map(|g| parse_gamma(g, l)).collect::<Result<Vec<_>>>()?,
        None => vec![0.0],
    };
    let marginals = match get("marginal") {
        Some((l, v)) => list(v)
            .map(|m| {
                m.parse::<MarginalLaw>()
                    .map_err(|e| GeeeError::Config(format!("line {l}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![MarginalLaw::standard_normal()],
    };
    let rhos = match get("rho") {
        Some((l, v)) => list(v).map(|r| parse_number("rho", r, l)).collect::<Result<Vec<f64>>>()?,
        None => vec![0.5],
    };
    let ns = match get("n") {
        Some((l, v)) => list(v).map(|n| parse_number("n", n, l)).collect::<Result<Vec<usize>>>()?,
        None => vec![100],
    };
    let designs = match get("design") {
        Some((l, v)) => list(v)
            .map(|d| {
                d.parse::<PanelDesign>()
                    .map_err(|e| GeeeError::Config(format!("line {l}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![PanelDesign::STANDARD_BALANCED],
    };
    let replications = match get("replications") {
        Some((l, v)) => parse_number("replications", v, l)?,
        None => 100,
    };
    let taus = match get("taus") {
        Some((l, v)) => list(v)
            .map(|t| {
                parse_number::<f64>("taus", t, l).and_then(|t| {
                    Asymmetry::new(t).map_err(|e| GeeeError::Config(format!("line {l}: {e}")))
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => [0.25, 0.5, 0.75].iter().map(|&t| Asymmetry::new(t).unwrap()).collect(),
    };
    let structures = match get("structures") {
        Some((l, v)) => list(v)
            .map(|s| {
                s.parse::<CorrelationKind>()
                    .map_err(|e| GeeeError::Config(format!("line {l}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?,
        None => CorrelationKind::ALL.to_vec(),
    };
    let seed = match get("seed") {
        Some((l, v)) => parse_number("seed", v, l)?,
        None => 2021,
    };
    let covariate_dof = match get("covariate_dof") {
        Some((l, v)) => parse_number("covariate_dof", v, l)?,
        None => 3.0,
    };
    let extended = match get("extended") {
        Some((l, v)) => parse_number("extended", v, l)?,
        None => false,
    };

    for (key, empty) in [
        ("gamma", gammas.is_empty()),
        ("marginal", marginals.is_empty()),
        ("rho", rhos.is_empty()),
        ("n", ns.is_empty()),
        ("design", designs.is_empty()),
    ] {
        if empty {
            return Err(GeeeError::Config(format!("`{key}` has no values")));
        }
    }

    let mut scenarios = Vec::new();
    for &gamma in &gammas {
        for &marginal in &marginals {
            for &design in &designs {
                for &n_subjects in &ns {
                    for &rho in &rhos {
                        let scenario = SimulationScenario {
                            gamma,
                            marginal,
                            rho,
                            n_subjects,
                            design,
                            replications,
                            taus: taus.clone(),
                            structures: structures.clone(),
                            covariate_dof,
                            seed,
                            extended,
                        };
                        scenario.validate()?;
                        scenarios.push(scenario);
                    }
                }
            }
        }
    }

    Ok(StudyConfig {
        scenarios,
        settings: settings.into_iter().map(|(k, (_, v))| (k, v)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_one_scenario() {
        let c = parse_config("# nothing set\n").unwrap();
        assert_eq!(c.scenarios.len(), 1);
        assert_eq!(c.scenarios[0], SimulationScenario::baseline(0.5, 100, 100, 2021));
    }

    #[test]
    fn lists_expand_to_a_grid() {
        let c = parse_config("rho = 0.1, 0.5, 0.9\nmodel = m0, m1/10\n").unwrap();
        assert_eq!(c.scenarios.len(), 6);
        assert_eq!(c.scenarios[3].gamma, 0.1);
        assert_eq!(c.scenarios[3].rho, 0.1);
    }

    #[test]
    fn unknown_keys_are_listed() {
        let err = parse_config("rhoo = 0.5\nreps = 3\n").unwrap_err().to_string();
        assert!(err.contains("`rhoo` (line 1)") && err.contains("`reps` (line 2)"), "{err}");
        assert!(err.contains("replications"));
    }

    #[test]
    fn zero_replications_rejected() {
        assert!(matches!(parse_config("replications = 0"), Err(GeeeError::Config(_))));
    }

    #[test]
    fn extended_values_need_the_flag() {
        assert!(parse_config("rho = 0.3").is_err());
        assert!(parse_config("rho = 0.3\nextended = true").is_ok());
    }

    #[test]
    fn full_grid_size() {
        assert_eq!(StudyConfig::full_grid(400, 1).unwrap().scenarios.len(), 72);
    }
}
