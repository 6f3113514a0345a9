//! Seeded survey generator with planted structure.
//!
//! Each respondent selects organizations with a probability that depends
//! on whether the organization shares the tier of the respondent's agency
//! group, scaled by a per-respondent activity level. Coordination answers
//! are then drawn from latent scores that load on the standardized
//! selection count with a configurable coupling; at coupling 0 they are
//! independent of every connectedness measure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::graph::NodeId;
use crate::subgroup::Tier;
use crate::survey::{AgencyGroup, Codebook, GroupOrg, RelationalVar, SurveyRecord};

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("`{key}` = {value} must lie in {range}")]
    OutOfRange {
        key: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("invalid generator config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub sle: usize,
    pub ses: usize,
    pub lle: usize,
    /// Planted tier of each agency-group organization.
    pub group_tiers: BTreeMap<AgencyGroup, Tier>,
    /// Alter pools by tier.
    pub pools: BTreeMap<Tier, Vec<String>>,
    /// Selection probability for an organization in the respondent's own
    /// tier, by tier.
    pub p_same: BTreeMap<Tier, f64>,
    /// Selection probability for an organization in any other tier.
    pub p_cross: f64,
    /// Log-scale spread of the per-respondent activity multiplier.
    pub activity_spread: f64,
    /// Loading of readiness, usefulness and source use on selection count.
    pub coupling: f64,
    /// Loading of contact frequency on selection count.
    pub tie_coupling: f64,
    pub missing_rate: f64,
    /// Share of pool organizations whose tier is withheld from the emitted
    /// codebook.
    pub holdout: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let pool = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        SyntheticConfig {
            sle: 39,
            ses: 37,
            lle: 148,
            group_tiers: AgencyGroup::ALL
                .into_iter()
                .map(|g| (g, Tier::Second))
                .collect(),
            pools: BTreeMap::from([
                (
                    Tier::First,
                    pool(&[
                        "FBI",
                        "Department of Energy",
                        "FAA",
                        "Department of State",
                        "United States Secret Service",
                        "Department of Transportation",
                        "United States Customs Service",
                        "DEA",
                        "Border Patrol",
                    ]),
                ),
                (
                    Tier::Second,
                    pool(&[
                        "Other State Agencies",
                        "State or Local Transportation Agencies",
                        "State Agencies (in state)",
                        "State Agencies (out of state)",
                    ]),
                ),
                (
                    Tier::Third,
                    pool(&[
                        "Professional Associations",
                        "Private Businesses",
                        "International Agencies",
                    ]),
                ),
            ]),
            p_same: Tier::ALL.into_iter().map(|t| (t, 0.3)).collect(),
            p_cross: 0.15,
            activity_spread: 0.8,
            coupling: 0.0,
            tie_coupling: 0.6,
            missing_rate: 0.02,
            holdout: 0.0,
        }
    }
}

impl SyntheticConfig {
    /// Parses `key=value` lines over the defaults. Pools are `;`-separated.
    pub fn parse(text: &str) -> Result<Self, SyntheticError> {
        let mut cfg = SyntheticConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| SyntheticError::Parse { line, message };
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{trimmed}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<f64, SyntheticError> {
                v.parse::<f64>()
                    .map_err(|_| err(format!("`{key}` needs a number, got `{v}`")))
            };
            let count = |v: &str| -> Result<usize, SyntheticError> {
                v.parse::<usize>()
                    .map_err(|_| err(format!("`{key}` needs a count, got `{v}`")))
            };
            let tier = |v: &str| -> Result<Tier, SyntheticError> {
                v.parse::<u8>()
                    .ok()
                    .and_then(|t| Tier::try_from(t).ok())
                    .ok_or_else(|| err(format!("`{key}` needs a tier 1..3, got `{v}`")))
            };
            match key {
                "sle" => cfg.sle = count(value)?,
                "ses" => cfg.ses = count(value)?,
                "lle" => cfg.lle = count(value)?,
                "group_tier_sle" => {
                    cfg.group_tiers.insert(AgencyGroup::Sle, tier(value)?);
                }
                "group_tier_ses" => {
                    cfg.group_tiers.insert(AgencyGroup::Ses, tier(value)?);
                }
                "group_tier_lle" => {
                    cfg.group_tiers.insert(AgencyGroup::Lle, tier(value)?);
                }
                "tier1" | "tier2" | "tier3" => {
                    let t = tier(&key[4..])?;
                    let names = value
                        .split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect();
                    cfg.pools.insert(t, names);
                }
                "p_tier1" => {
                    cfg.p_same.insert(Tier::First, num(value)?);
                }
                "p_tier2" => {
                    cfg.p_same.insert(Tier::Second, num(value)?);
                }
                "p_tier3" => {
                    cfg.p_same.insert(Tier::Third, num(value)?);
                }
                "p_cross" => cfg.p_cross = num(value)?,
                "activity_spread" => cfg.activity_spread = num(value)?,
                "coupling" => cfg.coupling = num(value)?,
                "tie_coupling" => cfg.tie_coupling = num(value)?,
                "missing_rate" => cfg.missing_rate = num(value)?,
                "holdout" => cfg.holdout = num(value)?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let unit = |key: &'static str, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(SyntheticError::OutOfRange {
                    key,
                    value,
                    range: "[0, 1]",
                })
            }
        };
        unit("p_tier1", self.p_same[&Tier::First])?;
        unit("p_tier2", self.p_same[&Tier::Second])?;
        unit("p_tier3", self.p_same[&Tier::Third])?;
        unit("p_cross", self.p_cross)?;
        unit("missing_rate", self.missing_rate)?;
        unit("holdout", self.holdout)?;
        for (key, value) in [
            ("coupling", self.coupling),
            ("tie_coupling", self.tie_coupling),
        ] {
            if !(-1.0..=1.0).contains(&value) {
                return Err(SyntheticError::OutOfRange {
                    key,
                    value,
                    range: "[-1, 1]",
                });
            }
        }
        if !(self.activity_spread >= 0.0 && self.activity_spread.is_finite()) {
            return Err(SyntheticError::OutOfRange {
                key: "activity_spread",
                value: self.activity_spread,
                range: "[0, inf)",
            });
        }
        if self.sle + self.ses + self.lle == 0 {
            return Err(SyntheticError::Invalid("no respondents requested".into()));
        }
        let mut seen = BTreeSet::new();
        for name in self.pools.values().flatten() {
            if !seen.insert(name.as_str()) {
                return Err(SyntheticError::Invalid(format!(
                    "`{name}` appears in two pools"
                )));
            }
            if GROUP_LABELS.iter().any(|(_, l)| *l == name) {
                return Err(SyntheticError::Invalid(format!(
                    "`{name}` is an agency-group organization and cannot be pooled"
                )));
            }
        }
        Ok(())
    }

    pub fn group_size(&self, g: AgencyGroup) -> usize {
        match g {
            AgencyGroup::Sle => self.sle,
            AgencyGroup::Ses => self.ses,
            AgencyGroup::Lle => self.lle,
        }
    }
}

impl FromStr for SyntheticConfig {
    type Err = SyntheticError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SyntheticConfig::parse(s)
    }
}

impl fmt::Display for SyntheticConfig {
    /// Canonical `key=value` rendering; parses back to the same config.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sle={}", self.sle)?;
        writeln!(f, "ses={}", self.ses)?;
        writeln!(f, "lle={}", self.lle)?;
        for g in AgencyGroup::ALL {
            writeln!(
                f,
                "group_tier_{}={}",
                g.code().to_lowercase(),
                self.group_tiers[&g]
            )?;
        }
        for t in Tier::ALL {
            let names = self.pools.get(&t).map(|p| p.join(";")).unwrap_or_default();
            writeln!(f, "tier{t}={names}")?;
        }
        for t in Tier::ALL {
            writeln!(f, "p_tier{t}={}", self.p_same[&t])?;
        }
        writeln!(f, "p_cross={}", self.p_cross)?;
        writeln!(f, "activity_spread={}", self.activity_spread)?;
        writeln!(f, "coupling={}", self.coupling)?;
        writeln!(f, "tie_coupling={}", self.tie_coupling)?;
        writeln!(f, "missing_rate={}", self.missing_rate)?;
        writeln!(f, "holdout={}", self.holdout)
    }
}

const GROUP_LABELS: [(AgencyGroup, &str); 3] = [
    (AgencyGroup::Sle, "State Law Enforcement"),
    (AgencyGroup::Ses, "State Emergency Services"),
    (AgencyGroup::Lle, "Local Law Enforcement"),
];

const FREQUENCY_VARS: [&str; 2] = ["MEETMUN", "MEETSSTA"];
const USEFULNESS_VARS: [&str; 12] = [
    "IFFBI", "IFFBICS", "IFFED", "IFSTAT", "IFLOC", "IFMED", "IFPROF", "IFRISK", "IFBOOK", "IFRAD",
    "IFINFORM", "IFOTH",
];

/// Generated records with the codebook that describes them and the
/// planted tier of every organization.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub records: Vec<SurveyRecord>,
    pub codebook: Codebook,
    pub truth: BTreeMap<NodeId, Tier>,
    /// Pool organizations whose tier the codebook withholds.
    pub holdout: BTreeSet<NodeId>,
}

struct Alter {
    label: NodeId,
    tier: Tier,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Position of `v` against descending cut points: 1 when above the first.
fn band(v: f64, cuts: &[f64]) -> u8 {
    cuts.iter().take_while(|&&c| v <= c).count() as u8 + 1
}

pub fn generate_synthetic(
    config: &SyntheticConfig,
    seed: u64,
) -> Result<SyntheticData, SyntheticError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut alters: Vec<Alter> = Vec::new();
    for (g, label) in GROUP_LABELS {
        alters.push(Alter {
            label: NodeId::new(label).expect("static label"),
            tier: config.group_tiers[&g],
        });
    }
    for (tier, names) in &config.pools {
        for name in names {
            let label = NodeId::new(name.as_str())
                .map_err(|_| SyntheticError::Invalid("empty organization name".into()))?;
            alters.push(Alter { label, tier: *tier });
        }
    }
    let truth: BTreeMap<NodeId, Tier> = alters.iter().map(|a| (a.label.clone(), a.tier)).collect();

    let pooled: Vec<&NodeId> = alters[GROUP_LABELS.len()..]
        .iter()
        .map(|a| &a.label)
        .collect();
    let holdout_n = (config.holdout * pooled.len() as f64).round() as usize;
    let holdout: BTreeSet<NodeId> = rand::seq::index::sample(&mut rng, pooled.len(), holdout_n)
        .into_iter()
        .map(|i| pooled[i].clone())
        .collect();

    let mut drafts = Vec::new();
    for (group, own_label) in GROUP_LABELS {
        let own_tier = config.group_tiers[&group];
        for i in 0..config.group_size(group) {
            let spread = config.activity_spread;
            let activity = (spread * normal(&mut rng) - spread * spread / 2.0).exp();
            let mut selections = BTreeSet::new();
            for alter in &alters {
                let u: f64 = rng.random();
                if alter.label.as_str() == own_label {
                    continue;
                }
                let base = if alter.tier == own_tier {
                    config.p_same[&alter.tier]
                } else {
                    config.p_cross
                };
                if u < (base * activity).min(1.0) {
                    selections.insert(alter.label.clone());
                }
            }
            drafts.push((format!("{}{:03}", group.code(), i + 1), group, selections));
        }
    }

    let counts: Vec<f64> = drafts.iter().map(|d| d.2.len() as f64).collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let sd = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();

    let coupling = config.coupling;
    let residual = (1.0 - coupling * coupling).sqrt();
    let tie_residual = (1.0 - config.tie_coupling * config.tie_coupling).sqrt();
    let mut records = Vec::with_capacity(drafts.len());
    for ((resp_id, agency_group, relational_selections), count) in drafts.into_iter().zip(counts) {
        let z = if sd > 0.0 { (count - mean) / sd } else { 0.0 };
        let ready_latent = coupling * z + residual * normal(&mut rng);
        let access_latent = coupling * z + residual * normal(&mut rng);
        let quality_latent = coupling * z + residual * normal(&mut rng);
        let tie_latent = config.tie_coupling * z + tie_residual * normal(&mut rng);

        let mut frequency_codes = BTreeMap::new();
        for var in FREQUENCY_VARS {
            let v = tie_latent + 0.5 * normal(&mut rng);
            let missing = rng.random::<f64>() < config.missing_rate;
            let code = band(v, &[1.2, 0.6, 0.0, -0.6, -1.2]);
            frequency_codes.insert(var.to_string(), (!missing).then_some(code));
        }
        let mut usefulness_codes = BTreeMap::new();
        for (k, var) in USEFULNESS_VARS.iter().enumerate() {
            let threshold = -1.0 + 0.2 * k as f64;
            let used = access_latent + normal(&mut rng) > threshold;
            let q = quality_latent + 0.5 * normal(&mut rng);
            // 4 very useful .. 2 not useful; 1 never used
            let code = if used { 5 - band(q, &[0.5, -0.5]) } else { 1 };
            usefulness_codes.insert(var.to_string(), Some(code));
        }
        let prep_missing = rng.random::<f64>() < config.missing_rate;
        let preparedness_code = (!prep_missing).then(|| band(ready_latent, &[0.9, 0.0, -0.9]));

        records.push(SurveyRecord {
            resp_id,
            agency_group,
            relational_selections,
            frequency_codes,
            usefulness_codes,
            preparedness_code,
        });
    }

    let codebook = synthetic_codebook(config, &alters, &holdout);
    Ok(SyntheticData {
        records,
        codebook,
        truth,
        holdout,
    })
}

fn synthetic_codebook(
    config: &SyntheticConfig,
    alters: &[Alter],
    holdout: &BTreeSet<NodeId>,
) -> Codebook {
    let groups = GROUP_LABELS
        .iter()
        .map(|(g, label)| {
            (
                *g,
                GroupOrg {
                    label: label.to_string(),
                    tier: Some(config.group_tiers[g]),
                },
            )
        })
        .collect();
    let relational = alters
        .iter()
        .enumerate()
        .map(|(i, a)| RelationalVar {
            column: format!("SEL{:02}", i + 1),
            label: a.label.to_string(),
            tier: (!holdout.contains(&a.label)).then_some(a.tier),
        })
        .collect();
    let cb = Codebook {
        id_var: "RESPID".into(),
        group_var: "GROUP".into(),
        preparedness_var: "PREPARED".into(),
        frequency_vars: FREQUENCY_VARS.iter().map(|s| s.to_string()).collect(),
        usefulness_vars: USEFULNESS_VARS.iter().map(|s| s.to_string()).collect(),
        free_text_vars: Vec::new(),
        groups,
        relational,
    };
    cb.validate().expect("generated codebook is valid");
    cb
}
