//! Codebook-driven survey ingestion and the networks derived from it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EgoNetwork, Graph, NodeId};
use crate::subgroup::Tier;

pub const FREQUENCY_MAX: u8 = 6;
pub const USEFULNESS_MAX: u8 = 4;
pub const PREPAREDNESS_MAX: u8 = 4;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid codebook: {0}")]
    Codebook(String),
    #[error("codebook references column `{0}` which is not in the CSV header")]
    UnknownColumn(String),
    #[error("line {line}, column `{column}`: value `{value}` outside domain {expected}")]
    Domain {
        line: u64,
        column: String,
        value: String,
        expected: String,
    },
    #[error("line {line}: duplicate respondent id `{id}`")]
    DuplicateId { line: u64, id: String },
    #[error("line {line}: missing respondent id")]
    MissingId { line: u64 },
    #[error("survey file has no data rows")]
    NoRecords,
}

/// The three surveyed agency populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgencyGroup {
    #[serde(rename = "SLE")]
    Sle,
    #[serde(rename = "SES")]
    Ses,
    #[serde(rename = "LLE")]
    Lle,
}

impl AgencyGroup {
    pub const ALL: [AgencyGroup; 3] = [AgencyGroup::Sle, AgencyGroup::Ses, AgencyGroup::Lle];

    pub fn code(self) -> &'static str {
        match self {
            AgencyGroup::Sle => "SLE",
            AgencyGroup::Ses => "SES",
            AgencyGroup::Lle => "LLE",
        }
    }
}

impl fmt::Display for AgencyGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AgencyGroup {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "SLE" => Ok(AgencyGroup::Sle),
            "SES" => Ok(AgencyGroup::Ses),
            "LLE" => Ok(AgencyGroup::Lle),
            other => Err(format!("unknown agency group `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOrg {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<Tier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationalVar {
    pub column: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<Tier>,
}

/// Column roles and code domains for one survey layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub id_var: String,
    pub group_var: String,
    pub preparedness_var: String,
    pub frequency_vars: Vec<String>,
    pub usefulness_vars: Vec<String>,
    #[serde(default)]
    pub free_text_vars: Vec<String>,
    pub groups: BTreeMap<AgencyGroup, GroupOrg>,
    pub relational: Vec<RelationalVar>,
}

impl Codebook {
    /// The bundled layout for the agency terrorism-preparedness survey.
    pub fn standard() -> Codebook {
        Codebook::from_toml_str(include_str!("../data/codebook.toml"))
            .expect("bundled codebook is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Codebook, IngestError> {
        let cb: Codebook =
            toml::from_str(text).map_err(|e| IngestError::Codebook(e.to_string()))?;
        cb.validate()?;
        Ok(cb)
    }

    pub fn load(path: &Path) -> Result<Codebook, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Codebook::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("codebook serializes")
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::Codebook(m));
        let mut columns = BTreeSet::new();
        let all_columns = [&self.id_var, &self.group_var, &self.preparedness_var]
            .into_iter()
            .chain(&self.frequency_vars)
            .chain(&self.usefulness_vars)
            .chain(&self.free_text_vars)
            .chain(self.relational.iter().map(|r| &r.column));
        for c in all_columns {
            if c.trim().is_empty() {
                return bad("empty column name".into());
            }
            if !columns.insert(c.as_str()) {
                return bad(format!("column `{c}` has more than one role"));
            }
        }
        for g in AgencyGroup::ALL {
            if !self.groups.contains_key(&g) {
                return bad(format!("no organization label for group {g}"));
            }
        }
        let mut tiers: BTreeMap<&str, Option<Tier>> = BTreeMap::new();
        let entries = self
            .groups
            .values()
            .map(|g| (g.label.as_str(), g.tier))
            .chain(self.relational.iter().map(|r| (r.label.as_str(), r.tier)));
        for (label, tier) in entries {
            if label.trim().is_empty() {
                return bad("empty organization label".into());
            }
            match tiers.get(label) {
                Some(prev) if *prev != tier => {
                    return bad(format!(
                        "organization `{label}` listed with conflicting tiers"
                    ))
                }
                _ => {
                    tiers.insert(label, tier);
                }
            }
        }
        let group_labels: BTreeSet<&str> = self.groups.values().map(|g| g.label.as_str()).collect();
        if group_labels.len() != self.groups.len() {
            return bad("agency groups must have distinct labels".into());
        }
        Ok(())
    }

    /// Every canonical organization label, groups included.
    pub fn canonical_labels(&self) -> BTreeSet<NodeId> {
        self.groups
            .values()
            .map(|g| g.label.as_str())
            .chain(self.relational.iter().map(|r| r.label.as_str()))
            .map(|l| NodeId::new(l).expect("validated label"))
            .collect()
    }

    pub fn group_label(&self, group: AgencyGroup) -> NodeId {
        NodeId::new(self.groups[&group].label.as_str()).expect("validated label")
    }

    /// Organizations whose tier the codebook states.
    pub fn known_tiers(&self) -> BTreeMap<NodeId, Tier> {
        self.groups
            .values()
            .map(|g| (g.label.as_str(), g.tier))
            .chain(self.relational.iter().map(|r| (r.label.as_str(), r.tier)))
            .filter_map(|(l, t)| t.map(|t| (NodeId::new(l).expect("validated label"), t)))
            .collect()
    }

    /// Organizations listed without a tier.
    pub fn unlabeled(&self) -> BTreeSet<NodeId> {
        let known = self.known_tiers();
        self.canonical_labels()
            .into_iter()
            .filter(|l| !known.contains_key(l))
            .collect()
    }
}

/// One respondent's coded answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub resp_id: String,
    pub agency_group: AgencyGroup,
    pub relational_selections: BTreeSet<NodeId>,
    pub frequency_codes: BTreeMap<String, Option<u8>>,
    pub usefulness_codes: BTreeMap<String, Option<u8>>,
    pub preparedness_code: Option<u8>,
}

impl SurveyRecord {
    /// Respondent node, kept apart from organization labels.
    pub fn node_id(&self) -> NodeId {
        respondent_node(&self.resp_id)
    }
}

pub const RESPONDENT_PREFIX: &str = "resp:";

pub fn respondent_node(resp_id: &str) -> NodeId {
    NodeId::new(format!("{RESPONDENT_PREFIX}{resp_id}")).expect("nonempty respondent id")
}

/// Inverse of [`respondent_node`].
pub fn respondent_id(node: &NodeId) -> Option<&str> {
    node.as_str().strip_prefix(RESPONDENT_PREFIX)
}

fn parse_code(raw: &str, max: u8) -> Result<Option<u8>, ()> {
    let t = raw.trim();
    if t.is_empty() {
        return Ok(None);
    }
    match t.parse::<u8>() {
        Ok(v) if (1..=max).contains(&v) => Ok(Some(v)),
        _ => Err(()),
    }
}

pub fn parse_survey_csv(
    path: &Path,
    codebook: &Codebook,
) -> Result<Vec<SurveyRecord>, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_survey(file, codebook)
}

/// Reads survey rows. Columns absent from the codebook are ignored.
pub fn parse_survey<R: Read>(
    reader: R,
    codebook: &Codebook,
) -> Result<Vec<SurveyRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize, IngestError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::UnknownColumn(name.to_string()))
    };
    let id_col = col(&codebook.id_var)?;
    let group_col = col(&codebook.group_var)?;
    let prep_col = col(&codebook.preparedness_var)?;
    let freq_cols: Vec<(usize, &str)> = codebook
        .frequency_vars
        .iter()
        .map(|c| col(c).map(|i| (i, c.as_str())))
        .collect::<Result<_, _>>()?;
    let use_cols: Vec<(usize, &str)> = codebook
        .usefulness_vars
        .iter()
        .map(|c| col(c).map(|i| (i, c.as_str())))
        .collect::<Result<_, _>>()?;
    let rel_cols: Vec<(usize, &RelationalVar)> = codebook
        .relational
        .iter()
        .map(|r| col(&r.column).map(|i| (i, r)))
        .collect::<Result<_, _>>()?;
    // free-text columns are optional in the file
    let text_cols: Vec<(usize, &str)> = codebook
        .free_text_vars
        .iter()
        .filter_map(|c| header.iter().position(|h| h == c).map(|i| (i, c.as_str())))
        .collect();

    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize| row.get(i).unwrap_or("");
        let domain = |column: &str, value: &str, expected: &str| IngestError::Domain {
            line,
            column: column.to_string(),
            value: value.to_string(),
            expected: expected.to_string(),
        };

        let resp_id = cell(id_col).to_string();
        if resp_id.is_empty() {
            return Err(IngestError::MissingId { line });
        }
        if !seen.insert(resp_id.clone()) {
            return Err(IngestError::DuplicateId { line, id: resp_id });
        }
        let agency_group: AgencyGroup = cell(group_col)
            .parse()
            .map_err(|_| domain(&codebook.group_var, cell(group_col), "{SLE, SES, LLE}"))?;

        let mut relational_selections = BTreeSet::new();
        for (i, var) in &rel_cols {
            match cell(*i) {
                "" | "0" => {}
                "1" => {
                    relational_selections
                        .insert(NodeId::new(var.label.as_str()).expect("validated label"));
                }
                other => return Err(domain(&var.column, other, "{0, 1, empty}")),
            }
        }
        let mut frequency_codes = BTreeMap::new();
        for (i, name) in &freq_cols {
            let code =
                parse_code(cell(*i), FREQUENCY_MAX).map_err(|_| domain(name, cell(*i), "1..6"))?;
            frequency_codes.insert(name.to_string(), code);
        }
        let mut usefulness_codes = BTreeMap::new();
        for (i, name) in &use_cols {
            let code =
                parse_code(cell(*i), USEFULNESS_MAX).map_err(|_| domain(name, cell(*i), "1..4"))?;
            usefulness_codes.insert(name.to_string(), code);
        }
        let preparedness_code = parse_code(cell(prep_col), PREPAREDNESS_MAX)
            .map_err(|_| domain(&codebook.preparedness_var, cell(prep_col), "1..4"))?;
        for (i, name) in &text_cols {
            if !cell(*i).is_empty() {
                log::warn!("line {line}: dropping free-text answer in `{name}`");
            }
        }

        records.push(SurveyRecord {
            resp_id,
            agency_group,
            relational_selections,
            frequency_codes,
            usefulness_codes,
            preparedness_code,
        });
    }
    Ok(records)
}

/// Writes records in the codebook's column layout. Every relational column
/// whose label was selected gets a 1.
pub fn write_survey<W: Write>(
    records: &[SurveyRecord],
    codebook: &Codebook,
    out: W,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = vec![&codebook.id_var, &codebook.group_var];
    header.extend(codebook.relational.iter().map(|r| r.column.as_str()));
    header.extend(codebook.frequency_vars.iter().map(String::as_str));
    header.extend(codebook.usefulness_vars.iter().map(String::as_str));
    header.push(&codebook.preparedness_var);
    w.write_record(&header)?;
    let code = |c: Option<u8>| c.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        let mut row: Vec<String> = vec![r.resp_id.clone(), r.agency_group.code().to_string()];
        for var in &codebook.relational {
            let selected = r
                .relational_selections
                .iter()
                .any(|s| s.as_str() == var.label);
            row.push(if selected { "1" } else { "0" }.to_string());
        }
        for c in &codebook.frequency_vars {
            row.push(code(r.frequency_codes.get(c).copied().flatten()));
        }
        for c in &codebook.usefulness_vars {
            row.push(code(r.usefulness_codes.get(c).copied().flatten()));
        }
        row.push(code(r.preparedness_code));
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: "<survey output>".into(),
        source,
    })?;
    Ok(())
}

/// How alter–alter ties are filled in for fixed-list ego data.
#[derive(Debug, Clone, Copy)]
pub enum AlterTies<'a> {
    /// Ego–alter edges only.
    Star,
    /// Alter pairs tied in the given organization network are tied.
    Aggregate(&'a Graph),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    Star,
    #[default]
    Aggregate,
}

impl FromStr for TieMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "star" => Ok(TieMode::Star),
            "aggregate" => Ok(TieMode::Aggregate),
            other => Err(format!(
                "unknown alter-ties mode `{other}` (star|aggregate)"
            )),
        }
    }
}

impl fmt::Display for TieMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieMode::Star => "star",
            TieMode::Aggregate => "aggregate",
        })
    }
}

pub fn build_ego_network(record: &SurveyRecord, ties: AlterTies<'_>) -> EgoNetwork {
    let ego = record.node_id();
    let mut g = Graph::new();
    g.add_node(&ego);
    for alter in &record.relational_selections {
        g.add_edge(&ego, alter, None)
            .expect("respondent and organization nodes differ");
    }
    if let AlterTies::Aggregate(org) = ties {
        let alters: Vec<&NodeId> = record.relational_selections.iter().collect();
        for (i, a) in alters.iter().enumerate() {
            for b in &alters[i + 1..] {
                if org.has_edge(a, b) {
                    g.add_edge(a, b, None).expect("distinct alters");
                }
            }
        }
    }
    EgoNetwork::new(ego, g).expect("every alter is tied to the ego")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Group(AgencyGroup),
    Combined,
}

/// Collapses respondents into their agency-group organization. An edge
/// `(group org, alter)` carries the number of that group's respondents who
/// selected the alter.
pub fn build_organization_network(
    records: &[SurveyRecord],
    codebook: &Codebook,
    scope: Scope,
) -> Graph {
    let mut g = Graph::new();
    let mut counts: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
    for r in records {
        if let Scope::Group(only) = scope {
            if r.agency_group != only {
                continue;
            }
        }
        let group = codebook.group_label(r.agency_group);
        g.add_node(&group);
        for alter in &r.relational_selections {
            g.add_node(alter);
            if *alter != group {
                let key = if group < *alter {
                    (group.clone(), alter.clone())
                } else {
                    (alter.clone(), group.clone())
                };
                *counts.entry(key).or_default() += 1;
            }
        }
    }
    for ((u, v), n) in counts {
        g.add_edge(&u, &v, Some(n as f64))
            .expect("distinct endpoints");
    }
    g
}

/// Union of every respondent's ego network: respondent nodes tied to the
/// organizations they selected, plus alter ties under `ties`.
pub fn build_respondent_network(records: &[SurveyRecord], ties: AlterTies<'_>) -> Graph {
    let mut g = Graph::new();
    for r in records {
        let ego = build_ego_network(r, ties);
        for n in ego.graph().nodes() {
            g.add_node(n);
        }
        for (u, v, _) in ego.graph().edges() {
            g.add_edge(u, v, None)
                .expect("ego network edges are simple");
        }
    }
    g
}
