//! File-based analysis stages. Every stage reads and writes plain files in
//! one output directory, so stages can be rerun independently.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{Graph, NodeId};
use crate::measures::{read_profiles_csv, write_profiles_csv, Measure, RespondentProfile};
use crate::report::{
    csv_string, is_tested_pair, markdown_table, KwColumn, KwTable, MatrixCell, SpearmanMatrix,
    KW_TEST_HEADER, MATRIX_CELL_HEADER,
};
use crate::stats::{kruskal_wallis, spearman_with, PValueMethod, StatsError, EXACT_MAX_N};
use crate::subgroup::{
    co_membership_over, maximal_cliques, n_cliques, predict_tier, select_clusters, CliqueSet,
    CoMembership, SubgroupError, Tier,
};
use crate::survey::{
    build_ego_network, build_organization_network, build_respondent_network, parse_survey,
    respondent_id, write_survey, AgencyGroup, AlterTies, Codebook, IngestError, Scope,
    SurveyRecord, TieMode,
};
use crate::synthetic::{generate_synthetic, SyntheticConfig, SyntheticData, SyntheticError};

pub const RECORDS_FILE: &str = "records.csv";
pub const CODEBOOK_FILE: &str = "codebook.toml";
pub const PROFILES_FILE: &str = "profiles.csv";
pub const ORG_NETWORK_FILE: &str = "organization_network.tsv";
pub const INGEST_FILE: &str = "ingest.json";
pub const H1_FILE: &str = "h1.json";
pub const H2_FILE: &str = "h2.json";
pub const H3_FILE: &str = "h3.json";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

pub const SURVEY_FILE: &str = "survey.csv";
pub const TIERS_FILE: &str = "tiers.csv";
pub const GENERATOR_FILE: &str = "generator.cfg";

/// Distance bound for micro-level subgroups.
pub const CLUSTER_N: usize = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing stage output: {}", .0.join(", "))]
    MissingStages(Vec<String>),
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("statistical precondition not met: {0}")]
    Precondition(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 2 for input problems, 3 for unmet statistical preconditions.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Precondition(_) => 3,
            PipelineError::Write { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format `{other}` (csv|json|markdown)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Markdown => "markdown",
        })
    }
}

/// Parses a comma-separated format list.
pub fn parse_formats(s: &str) -> Result<BTreeSet<Format>, String> {
    let set = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(Format::from_str)
        .collect::<Result<BTreeSet<_>, _>>()?;
    if set.is_empty() {
        return Err("at least one output format is required".into());
    }
    Ok(set)
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    /// Bundled codebook when `None`.
    pub codebook: Option<PathBuf>,
    /// At ingest `None` means the default; later stages reuse the ingest mode.
    pub mode: Option<TieMode>,
    pub clusters: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub formats: BTreeSet<Format>,
    /// Exact permutation p-values for Spearman cells with n ≤ [`EXACT_MAX_N`].
    pub exact_small: bool,
}

impl RunConfig {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        RunConfig {
            inputs: Vec::new(),
            codebook: None,
            mode: None,
            clusters: 3,
            seed: 0,
            out: out.into(),
            formats: [Format::Csv, Format::Json, Format::Markdown].into(),
            exact_small: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(PipelineError::Config(
                "cluster count must be at least 1".into(),
            ));
        }
        if self.formats.is_empty() {
            return Err(PipelineError::Config(
                "at least one output format is required".into(),
            ));
        }
        Ok(())
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Name and SHA-256 of one input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

impl InputDigest {
    fn of(name: &str, bytes: &[u8]) -> Self {
        InputDigest {
            name: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }

    fn of_file(path: &Path, bytes: &[u8]) -> Self {
        let name = path.file_name().map_or_else(
            || path.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        );
        Self::of(&name, bytes)
    }
}

pub const BUNDLED_CODEBOOK: &str = "(bundled)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub mode: TieMode,
    pub inputs: Vec<InputDigest>,
    pub codebook: InputDigest,
    pub respondents: usize,
    pub group_counts: BTreeMap<AgencyGroup, usize>,
    pub organizations: usize,
    pub organization_ties: usize,
}

impl IngestManifest {
    /// Respondents per agency group with a total row.
    pub fn summary_rows(&self, codebook: &Codebook) -> Vec<Vec<String>> {
        let mut rows: Vec<Vec<String>> = AgencyGroup::ALL
            .iter()
            .map(|g| {
                vec![
                    g.code().to_string(),
                    codebook.groups[g].label.clone(),
                    self.group_counts.get(g).copied().unwrap_or(0).to_string(),
                ]
            })
            .collect();
        rows.push(vec![
            "Total".into(),
            String::new(),
            self.respondents.to_string(),
        ]);
        rows
    }

    pub fn summary_markdown(&self, codebook: &Codebook) -> String {
        let header = ["Group", "Agency group", "Respondents"].map(String::from);
        format!(
            "### Respondents\n\n{}",
            markdown_table(&header, &self.summary_rows(codebook))
        )
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| {
        IngestError::Io {
            path: path.display().to_string(),
            source,
        }
        .into()
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| PipelineError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

fn read_json<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|_| {
        PipelineError::MissingStages(vec![format!("{} (run `drn {stage}`)", path.display())])
    })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn org_network(records: &[SurveyRecord], codebook: &Codebook) -> Graph {
    build_organization_network(records, codebook, Scope::Combined)
}

fn ties<'a>(mode: TieMode, org: &'a Graph) -> AlterTies<'a> {
    match mode {
        TieMode::Star => AlterTies::Star,
        TieMode::Aggregate => AlterTies::Aggregate(org),
    }
}

/// Scores every respondent's ego network under `mode`.
pub fn compute_profiles(
    records: &[SurveyRecord],
    codebook: &Codebook,
    mode: TieMode,
) -> Vec<RespondentProfile> {
    let org = org_network(records, codebook);
    records
        .iter()
        .map(|r| RespondentProfile::compute(r, &build_ego_network(r, ties(mode, &org))))
        .collect()
}

/// Parses one or more survey files against `codebook`. Respondent ids must
/// be unique across files.
pub fn load_survey(
    inputs: &[PathBuf],
    codebook: &Codebook,
) -> Result<(Vec<SurveyRecord>, Vec<InputDigest>)> {
    if inputs.is_empty() {
        return Err(PipelineError::Config("no --input given".into()));
    }
    let mut records = Vec::new();
    let mut digests = Vec::new();
    let mut seen = BTreeSet::new();
    for path in inputs {
        let bytes = read_bytes(path)?;
        digests.push(InputDigest::of_file(path, &bytes));
        let parsed =
            parse_survey(bytes.as_slice(), codebook).map_err(|e| PipelineError::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })?;
        for r in parsed {
            if !seen.insert(r.resp_id.clone()) {
                return Err(PipelineError::Corrupt {
                    path: path.clone(),
                    message: format!(
                        "respondent id `{}` already appears in an earlier input",
                        r.resp_id
                    ),
                });
            }
            records.push(r);
        }
    }
    Ok((records, digests))
}

/// Parses the inputs, computes profiles and the organization network, and
/// persists them. Returns the manifest.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestManifest> {
    cfg.validate()?;
    let (codebook, codebook_digest) = match &cfg.codebook {
        Some(p) => {
            let bytes = read_bytes(p)?;
            let text = String::from_utf8(bytes.clone()).map_err(|_| PipelineError::Corrupt {
                path: p.clone(),
                message: "codebook is not UTF-8".into(),
            })?;
            (
                Codebook::from_toml_str(&text)?,
                InputDigest::of_file(p, &bytes),
            )
        }
        None => {
            let cb = Codebook::standard();
            let digest = InputDigest::of(BUNDLED_CODEBOOK, cb.to_toml_string().as_bytes());
            (cb, digest)
        }
    };
    let (records, inputs) = load_survey(&cfg.inputs, &codebook)?;
    let mode = cfg.mode.unwrap_or_default();
    let org = org_network(&records, &codebook);
    let profiles = compute_profiles(&records, &codebook, mode);

    let mut group_counts: BTreeMap<AgencyGroup, usize> =
        AgencyGroup::ALL.iter().map(|g| (*g, 0)).collect();
    for r in &records {
        *group_counts.entry(r.agency_group).or_default() += 1;
    }
    let manifest = IngestManifest {
        mode,
        inputs,
        codebook: codebook_digest,
        respondents: records.len(),
        group_counts,
        organizations: org.node_count(),
        organization_ties: org.edge_count(),
    };

    ensure_dir(&cfg.out)?;
    let mut buf = Vec::new();
    write_survey(&records, &codebook, &mut buf)?;
    write_file(&cfg.path(RECORDS_FILE), buf)?;
    write_file(&cfg.path(CODEBOOK_FILE), codebook.to_toml_string())?;
    let mut buf = Vec::new();
    write_profiles_csv(&profiles, &mut buf).expect("in-memory csv");
    write_file(&cfg.path(PROFILES_FILE), buf)?;
    let mut buf = Vec::new();
    org.write_edge_list(&mut buf).expect("in-memory write");
    write_file(&cfg.path(ORG_NETWORK_FILE), buf)?;
    write_file(&cfg.path(INGEST_FILE), to_json(&manifest))?;
    log::info!("ingested {} respondents ({} mode)", records.len(), mode);
    Ok(manifest)
}

/// Persisted ingest state, as read back by the analysis stages.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub manifest: IngestManifest,
    pub codebook: Codebook,
    pub records: Vec<SurveyRecord>,
    pub profiles: Vec<RespondentProfile>,
}

impl Ingested {
    pub fn load(out: &Path) -> Result<Ingested> {
        let manifest: IngestManifest = read_json(&out.join(INGEST_FILE), "ingest")?;
        let missing: Vec<String> = [RECORDS_FILE, CODEBOOK_FILE, PROFILES_FILE]
            .iter()
            .map(|f| out.join(f))
            .filter(|p| !p.is_file())
            .map(|p| format!("{} (run `drn ingest`)", p.display()))
            .collect();
        if !missing.is_empty() {
            return Err(PipelineError::MissingStages(missing));
        }
        let codebook = Codebook::load(&out.join(CODEBOOK_FILE))?;
        let records = parse_survey(read_bytes(&out.join(RECORDS_FILE))?.as_slice(), &codebook)?;
        let profiles_path = out.join(PROFILES_FILE);
        let profiles =
            read_profiles_csv(read_bytes(&profiles_path)?.as_slice()).map_err(|message| {
                PipelineError::Corrupt {
                    path: profiles_path.clone(),
                    message,
                }
            })?;
        if profiles.len() != records.len() {
            return Err(PipelineError::Corrupt {
                path: profiles_path,
                message: format!("{} profiles for {} records", profiles.len(), records.len()),
            });
        }
        Ok(Ingested {
            manifest,
            codebook,
            records,
            profiles,
        })
    }

    /// The ingest mode, rejecting a conflicting request.
    pub fn mode(&self, requested: Option<TieMode>) -> Result<TieMode> {
        match requested {
            Some(m) if m != self.manifest.mode => Err(PipelineError::Config(format!(
                "profiles were computed in {} mode; rerun `drn ingest --mode {m}`",
                self.manifest.mode
            ))),
            _ => Ok(self.manifest.mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierOutcome {
    pub org: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_tier: Option<Tier>,
    /// Co-membership votes for tiers 1, 2, 3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<[u64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Micro-level subgroup census: 2-cliques of the respondent network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub mode: TieMode,
    pub n: usize,
    pub subgroups: usize,
    /// Subgroups holding respondents of every agency group.
    pub eligible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H1Report {
    pub cliques: CliqueSet,
    /// No clique has two or more members.
    pub trivial: bool,
    pub co_membership: CoMembership,
    pub tiers: Vec<TierOutcome>,
    pub census: Census,
}

fn group_lookup(records: &[SurveyRecord]) -> BTreeMap<&str, AgencyGroup> {
    records
        .iter()
        .map(|r| (r.resp_id.as_str(), r.agency_group))
        .collect()
}

fn micro_subgroups(records: &[SurveyRecord], codebook: &Codebook, mode: TieMode) -> CliqueSet {
    let org = org_network(records, codebook);
    let micro = build_respondent_network(records, ties(mode, &org));
    n_cliques(&micro, CLUSTER_N).expect("n is positive")
}

fn eligible_count(cs: &CliqueSet, groups: &BTreeMap<&str, AgencyGroup>) -> usize {
    cs.cliques
        .iter()
        .filter(|c| {
            let present: BTreeSet<AgencyGroup> = c
                .iter()
                .filter_map(|n| respondent_id(n).and_then(|id| groups.get(id).copied()))
                .collect();
            present.len() == AgencyGroup::ALL.len()
        })
        .count()
}

pub fn run_h1(records: &[SurveyRecord], codebook: &Codebook, mode: TieMode) -> H1Report {
    let org = org_network(records, codebook);
    let cliques = maximal_cliques(&org);
    let trivial = cliques.cliques.iter().all(|c| c.len() < 2);
    if trivial {
        log::warn!("organization network has no clique of two or more members");
    }
    let co_membership = co_membership_over(&cliques, org.nodes());
    let known = codebook.known_tiers();
    let tiers = codebook
        .unlabeled()
        .into_iter()
        .map(|org| match predict_tier(&org, &co_membership, &known) {
            Ok(a) => TierOutcome {
                org,
                predicted_tier: Some(a.predicted_tier),
                evidence: Some(a.evidence),
                error: None,
            },
            Err(e) => {
                log::warn!("no tier prediction for {org}: {e}");
                TierOutcome {
                    org,
                    predicted_tier: None,
                    evidence: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    let micro = micro_subgroups(records, codebook, mode);
    let census = Census {
        mode,
        n: CLUSTER_N,
        subgroups: micro.len(),
        eligible: eligible_count(&micro, &group_lookup(records)),
    };
    H1Report {
        cliques,
        trivial,
        co_membership,
        tiers,
        census,
    }
}

impl H1Report {
    pub fn clique_rows(&self) -> Vec<Vec<String>> {
        self.cliques
            .cliques
            .iter()
            .enumerate()
            .map(|(i, c)| {
                vec![
                    (i + 1).to_string(),
                    c.len().to_string(),
                    c.iter().map(NodeId::as_str).collect::<Vec<_>>().join(", "),
                ]
            })
            .collect()
    }

    pub fn tier_rows(&self) -> Vec<Vec<String>> {
        self.tiers
            .iter()
            .map(|t| {
                let ev = |i: usize| t.evidence.map(|e| e[i].to_string()).unwrap_or_default();
                vec![
                    t.org.to_string(),
                    t.predicted_tier.map(|x| x.to_string()).unwrap_or_default(),
                    ev(0),
                    ev(1),
                    ev(2),
                    t.error.clone().unwrap_or_default(),
                ]
            })
            .collect()
    }

    pub fn co_membership_grid(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let cm = &self.co_membership;
        let mut header = vec![String::new()];
        header.extend(cm.labels.iter().map(|l| l.to_string()));
        let rows = cm
            .labels
            .iter()
            .zip(&cm.counts)
            .map(|(l, row)| {
                let mut line = vec![l.to_string()];
                line.extend(row.iter().map(u32::to_string));
                line
            })
            .collect();
        (header, rows)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "### Cliques of the organization network\n");
        if self.trivial {
            s.push_str("No clique has two or more members.\n\n");
        }
        s.push_str(&markdown_table(
            &CLIQUE_HEADER.map(String::from),
            &self.clique_rows(),
        ));
        let _ = writeln!(s, "\n### Clique co-membership\n");
        let (h, rows) = self.co_membership_grid();
        s.push_str(&markdown_table(&h, &rows));
        let _ = writeln!(s, "\n### Tier predictions\n");
        if self.tiers.is_empty() {
            s.push_str("Every organization has a stated tier.\n");
        } else {
            s.push_str(&markdown_table(
                &TIER_HEADER.map(String::from),
                &self.tier_rows(),
            ));
        }
        let _ = writeln!(
            s,
            "\n{} {}-cliques in the respondent network ({} mode); {} contain respondents of every agency group.",
            self.census.subgroups, self.census.n, self.census.mode, self.census.eligible
        );
        s
    }
}

const CLIQUE_HEADER: [&str; 3] = ["Clique", "Size", "Members"];
const TIER_HEADER: [&str; 6] = [
    "Organization",
    "Predicted tier",
    "Tier 1 votes",
    "Tier 2 votes",
    "Tier 3 votes",
    "Error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSettings {
    pub mode: TieMode,
    pub clusters: usize,
    pub seed: u64,
}

/// The sampled micro-level clusters. A respondent in several sampled
/// subgroups stays only in the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSample {
    pub census: Census,
    /// Respondent ids per cluster, before deduplication.
    pub drawn: Vec<Vec<String>>,
    /// Respondent ids per cluster, first cluster wins.
    pub members: Vec<Vec<String>>,
}

impl ClusterSample {
    pub fn merged(&self) -> impl Iterator<Item = &String> {
        self.members.iter().flatten()
    }

    pub fn rows(&self, groups: &BTreeMap<&str, AgencyGroup>) -> Vec<Vec<String>> {
        self.members
            .iter()
            .enumerate()
            .flat_map(|(i, c)| {
                c.iter().map(move |id| {
                    vec![
                        (i + 1).to_string(),
                        id.clone(),
                        groups
                            .get(id.as_str())
                            .map(|g| g.code().to_string())
                            .unwrap_or_default(),
                    ]
                })
            })
            .collect()
    }
}

pub fn sample_clusters(
    records: &[SurveyRecord],
    codebook: &Codebook,
    mode: TieMode,
    k: usize,
    seed: u64,
) -> Result<ClusterSample> {
    let cs = micro_subgroups(records, codebook, mode);
    let groups = group_lookup(records);
    let census = Census {
        mode,
        n: CLUSTER_N,
        subgroups: cs.len(),
        eligible: eligible_count(&cs, &groups),
    };
    let required: BTreeSet<AgencyGroup> = AgencyGroup::ALL.into();
    let picked = select_clusters(
        &cs,
        |n| respondent_id(n).and_then(|id| groups.get(id).copied()),
        &required,
        k,
        seed,
    )
    .map_err(|e| match e {
        SubgroupError::TooFewClusters { requested, eligible } => PipelineError::Precondition(format!(
            "{requested} clusters requested but only {eligible} of {} subgroups contain every agency group",
            census.subgroups
        )),
        other => PipelineError::Precondition(other.to_string()),
    })?;
    let drawn: Vec<Vec<String>> = picked
        .iter()
        .map(|c| {
            c.iter()
                .filter_map(|n| respondent_id(n).map(str::to_string))
                .collect()
        })
        .collect();
    let mut seen = BTreeSet::new();
    let members = drawn
        .iter()
        .map(|c| {
            c.iter()
                .filter(|id| seen.insert(id.as_str()))
                .cloned()
                .collect()
        })
        .collect();
    Ok(ClusterSample {
        census,
        drawn,
        members,
    })
}

/// Kruskal-Wallis per measure over row groups of profiles. Empty groups
/// are left out of the test; a measure with fewer than two nonempty groups
/// is skipped.
pub fn kw_table(
    title: &str,
    rows: Vec<String>,
    groups: &[Vec<&RespondentProfile>],
    measures: &[Measure],
) -> KwTable {
    let columns = measures
        .iter()
        .map(|&m| {
            let samples: Vec<Vec<f64>> = groups
                .iter()
                .map(|g| g.iter().filter_map(|p| p.value(m)).collect())
                .collect();
            let group_n: Vec<usize> = samples.iter().map(Vec::len).collect();
            let present: Vec<usize> = (0..samples.len()).filter(|&i| group_n[i] > 0).collect();
            let mut mean_ranks = vec![None; samples.len()];
            let outcome = if present.len() < 2 {
                Err("fewer than two groups with observations".to_string())
            } else {
                let used: Vec<&[f64]> = present.iter().map(|&i| samples[i].as_slice()).collect();
                kruskal_wallis(&used).map_err(|e| e.to_string())
            };
            match outcome {
                Ok(r) => {
                    for (slot, &i) in present.iter().enumerate() {
                        mean_ranks[i] = Some(r.mean_ranks[slot]);
                    }
                    KwColumn {
                        measure: m,
                        group_n,
                        mean_ranks,
                        result: Some(r),
                        skipped: None,
                    }
                }
                Err(reason) => {
                    log::warn!("{title}: {} skipped: {reason}", m.title());
                    KwColumn {
                        measure: m,
                        group_n,
                        mean_ranks,
                        result: None,
                        skipped: Some(reason),
                    }
                }
            }
        })
        .collect();
    KwTable {
        title: title.to_string(),
        rows,
        columns,
    }
}

pub const AGENCY_TABLE: &str = "Interconnectedness by agency group";
pub const CLUSTER_TABLE: &str = "Interconnectedness by cluster";
pub const READINESS_TABLE: &str = "Readiness by cluster";
pub const COMBINED_MATRIX: &str = "Connectedness and coordination, all respondents";
pub const CLUSTER_MATRIX: &str = "Connectedness and coordination, merged clusters";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2Report {
    pub settings: StageSettings,
    pub agency: KwTable,
    pub clusters: KwTable,
    pub readiness: KwTable,
    pub sample: ClusterSample,
}

fn profile_index(profiles: &[RespondentProfile]) -> BTreeMap<&str, &RespondentProfile> {
    profiles.iter().map(|p| (p.resp_id.as_str(), p)).collect()
}

fn cluster_groups<'a>(
    sample: &ClusterSample,
    index: &BTreeMap<&str, &'a RespondentProfile>,
) -> Vec<Vec<&'a RespondentProfile>> {
    sample
        .members
        .iter()
        .map(|c| {
            c.iter()
                .filter_map(|id| index.get(id.as_str()).copied())
                .collect()
        })
        .collect()
}

pub fn run_h2(data: &Ingested, mode: TieMode, k: usize, seed: u64) -> Result<H2Report> {
    let sample = sample_clusters(&data.records, &data.codebook, mode, k, seed)?;
    let rows: Vec<String> = AgencyGroup::ALL
        .iter()
        .map(|g| data.codebook.groups[g].label.clone())
        .collect();
    let by_group: Vec<Vec<&RespondentProfile>> = AgencyGroup::ALL
        .iter()
        .map(|g| {
            data.profiles
                .iter()
                .filter(|p| p.agency_group == *g)
                .collect()
        })
        .collect();
    let agency = kw_table(AGENCY_TABLE, rows, &by_group, &Measure::CONNECTEDNESS);
    let index = profile_index(&data.profiles);
    let groups = cluster_groups(&sample, &index);
    let cluster_rows: Vec<String> = (1..=groups.len()).map(|i| format!("Cluster {i}")).collect();
    let clusters = kw_table(
        CLUSTER_TABLE,
        cluster_rows.clone(),
        &groups,
        &Measure::CONNECTEDNESS,
    );
    let readiness = kw_table(
        READINESS_TABLE,
        cluster_rows,
        &groups,
        &[Measure::Readiness],
    );
    Ok(H2Report {
        settings: StageSettings {
            mode,
            clusters: k,
            seed,
        },
        agency,
        clusters,
        readiness,
        sample,
    })
}

impl H2Report {
    pub fn tables(&self) -> [&KwTable; 3] {
        [&self.agency, &self.clusters, &self.readiness]
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        for t in self.tables() {
            s.push_str(&t.to_markdown());
            s.push('\n');
        }
        let sizes: Vec<String> = self
            .sample
            .members
            .iter()
            .map(|c| c.len().to_string())
            .collect();
        let _ = writeln!(
            s,
            "{} clusters drawn with seed {} from {} eligible {}-cliques; respondents per cluster after deduplication: {}.",
            self.sample.members.len(),
            self.settings.seed,
            self.sample.census.eligible,
            self.sample.census.n,
            sizes.join(", ")
        );
        s
    }
}

/// Spearman matrix over [`Measure::ALL`] with pairwise deletion.
pub fn spearman_matrix(
    title: &str,
    profiles: &[&RespondentProfile],
    exact_small: bool,
) -> SpearmanMatrix {
    let measures = Measure::ALL.to_vec();
    let pairs = |a: Measure, b: Measure| -> (Vec<f64>, Vec<f64>) {
        profiles
            .iter()
            .filter_map(|p| Some((p.value(a)?, p.value(b)?)))
            .unzip()
    };
    let cells = measures
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            measures[..=i]
                .iter()
                .map(|&b| {
                    let (x, y) = pairs(a, b);
                    let n = x.len();
                    if a == b {
                        return MatrixCell::Diagonal { n };
                    }
                    if !is_tested_pair(a, b) {
                        return MatrixCell::NotTested { n };
                    }
                    let method = if exact_small && n <= EXACT_MAX_N {
                        PValueMethod::Permutation
                    } else {
                        PValueMethod::TApprox
                    };
                    match spearman_with(&x, &y, method) {
                        Ok(result) => MatrixCell::Tested { result },
                        Err(e) => {
                            let reason = match e {
                                StatsError::TooFewObservations { .. } => {
                                    format!("n = {n} is below 3")
                                }
                                other => other.to_string(),
                            };
                            log::warn!("{title}: {} x {} skipped: {reason}", a.title(), b.title());
                            MatrixCell::Skipped { n, reason }
                        }
                    }
                })
                .collect()
        })
        .collect();
    SpearmanMatrix {
        title: title.to_string(),
        measures,
        cells,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H3Report {
    pub settings: StageSettings,
    pub exact_small: bool,
    pub combined: SpearmanMatrix,
    pub clusters: SpearmanMatrix,
    pub merged_respondents: usize,
}

pub fn run_h3(
    data: &Ingested,
    mode: TieMode,
    k: usize,
    seed: u64,
    exact_small: bool,
) -> Result<H3Report> {
    let all: Vec<&RespondentProfile> = data.profiles.iter().collect();
    let combined = spearman_matrix(COMBINED_MATRIX, &all, exact_small);
    let sample = sample_clusters(&data.records, &data.codebook, mode, k, seed)?;
    let index = profile_index(&data.profiles);
    let merged: Vec<&RespondentProfile> = sample
        .merged()
        .filter_map(|id| index.get(id.as_str()).copied())
        .collect();
    let clusters = spearman_matrix(CLUSTER_MATRIX, &merged, exact_small);
    Ok(H3Report {
        settings: StageSettings {
            mode,
            clusters: k,
            seed,
        },
        exact_small,
        combined,
        clusters,
        merged_respondents: merged.len(),
    })
}

impl H3Report {
    pub fn to_markdown(&self) -> String {
        format!(
            "{}\n{}\nMerged cluster sample: {} respondents.\n",
            self.combined.to_markdown(),
            self.clusters.to_markdown(),
            self.merged_respondents
        )
    }
}

fn write_markdown(cfg: &RunConfig, name: &str, body: &str) -> Result<()> {
    if cfg.wants(Format::Markdown) {
        write_file(&cfg.path(name), body)?;
    }
    Ok(())
}

pub fn cmd_h1(cfg: &RunConfig) -> Result<H1Report> {
    cfg.validate()?;
    let data = Ingested::load(&cfg.out)?;
    let mode = data.mode(cfg.mode)?;
    let report = run_h1(&data.records, &data.codebook, mode);
    write_file(&cfg.path(H1_FILE), to_json(&report))?;
    if cfg.wants(Format::Csv) {
        write_file(
            &cfg.path("h1_cliques.csv"),
            csv_string(&CLIQUE_HEADER, &report.clique_rows()),
        )?;
        let (h, rows) = report.co_membership_grid();
        write_file(&cfg.path("h1_comembership.csv"), csv_string(&h, &rows))?;
        write_file(
            &cfg.path("h1_tiers.csv"),
            csv_string(&TIER_HEADER, &report.tier_rows()),
        )?;
    }
    write_markdown(cfg, "h1.md", &report.to_markdown())?;
    Ok(report)
}

pub fn cmd_h2(cfg: &RunConfig) -> Result<H2Report> {
    cfg.validate()?;
    let data = Ingested::load(&cfg.out)?;
    let mode = data.mode(cfg.mode)?;
    let report = run_h2(&data, mode, cfg.clusters, cfg.seed)?;
    write_file(&cfg.path(H2_FILE), to_json(&report))?;
    let groups = group_lookup(&data.records);
    write_file(
        &cfg.path(CLUSTERS_FILE),
        csv_string(
            &["cluster", "resp_id", "agency_group"],
            &report.sample.rows(&groups),
        ),
    )?;
    if cfg.wants(Format::Csv) {
        write_file(&cfg.path("h2_agency.csv"), report.agency.to_csv())?;
        write_file(&cfg.path("h2_clusters.csv"), report.clusters.to_csv())?;
        write_file(&cfg.path("h2_readiness.csv"), report.readiness.to_csv())?;
        let rows: Vec<Vec<String>> = report.tables().iter().flat_map(|t| t.test_rows()).collect();
        write_file(
            &cfg.path("h2_tests.csv"),
            csv_string(&KW_TEST_HEADER, &rows),
        )?;
    }
    write_markdown(cfg, "h2.md", &report.to_markdown())?;
    Ok(report)
}

pub fn cmd_h3(cfg: &RunConfig) -> Result<H3Report> {
    cfg.validate()?;
    let data = Ingested::load(&cfg.out)?;
    let mode = data.mode(cfg.mode)?;
    let report = run_h3(&data, mode, cfg.clusters, cfg.seed, cfg.exact_small)?;
    write_file(&cfg.path(H3_FILE), to_json(&report))?;
    if cfg.wants(Format::Csv) {
        write_file(&cfg.path("h3_combined.csv"), report.combined.to_csv())?;
        write_file(&cfg.path("h3_clusters.csv"), report.clusters.to_csv())?;
        let mut rows = Vec::new();
        for (tag, m) in [
            ("combined", &report.combined),
            ("clusters", &report.clusters),
        ] {
            for mut r in m.cell_rows() {
                r.insert(0, tag.to_string());
                rows.push(r);
            }
        }
        let mut header = vec!["matrix"];
        header.extend(MATRIX_CELL_HEADER);
        write_file(&cfg.path("h3_cells.csv"), csv_string(&header, &rows))?;
    }
    write_markdown(cfg, "h3.md", &report.to_markdown())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub mode: TieMode,
    pub h2: StageSettings,
    pub h3: StageSettings,
    pub inputs: Vec<InputDigest>,
    pub codebook: InputDigest,
    /// Digests of the stage files the report was assembled from.
    pub stages: Vec<InputDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub provenance: Provenance,
    pub ingest: IngestManifest,
    pub h1: H1Report,
    pub h2: H2Report,
    pub h3: H3Report,
}

impl TestReport {
    pub fn to_markdown(&self, codebook: &Codebook) -> String {
        let p = &self.provenance;
        let mut s = String::from("# Disaster response network assessment\n\n## Provenance\n\n");
        let mut rows = vec![
            vec!["tool".to_string(), format!("{} {}", p.tool, p.version)],
            vec!["alter ties".into(), p.mode.to_string()],
            vec![
                "clusters (h2)".into(),
                format!("{} (seed {})", p.h2.clusters, p.h2.seed),
            ],
            vec![
                "clusters (h3)".into(),
                format!("{} (seed {})", p.h3.clusters, p.h3.seed),
            ],
            vec![
                format!("codebook {}", p.codebook.name),
                p.codebook.sha256.clone(),
            ],
        ];
        rows.extend(
            p.inputs
                .iter()
                .map(|d| vec![format!("input {}", d.name), d.sha256.clone()]),
        );
        rows.extend(
            p.stages
                .iter()
                .map(|d| vec![format!("stage {}", d.name), d.sha256.clone()]),
        );
        s.push_str(&markdown_table(
            &["Item".to_string(), "Value".to_string()],
            &rows,
        ));
        s.push_str("\n## Sample\n\n");
        s.push_str(&self.ingest.summary_markdown(codebook));
        s.push_str("\n## Subgroups and tiers\n\n");
        s.push_str(&self.h1.to_markdown());
        s.push_str("\n## Interconnectedness comparisons\n\n");
        s.push_str(&self.h2.to_markdown());
        s.push_str("\n## Connectedness and coordination\n\n");
        s.push_str(&self.h3.to_markdown());
        s
    }
}

/// Assembles the stage outputs into one report per requested format.
pub fn cmd_report(cfg: &RunConfig) -> Result<TestReport> {
    cfg.validate()?;
    if !cfg.wants(Format::Json) && !cfg.wants(Format::Markdown) {
        return Err(PipelineError::Config(
            "the report is written as json and/or markdown".into(),
        ));
    }
    let stage_files = [
        (INGEST_FILE, "ingest"),
        (H1_FILE, "h1"),
        (H2_FILE, "h2"),
        (H3_FILE, "h3"),
    ];
    let missing: Vec<String> = stage_files
        .iter()
        .filter(|(f, _)| !cfg.path(f).is_file())
        .map(|(f, stage)| format!("{} (run `drn {stage}`)", cfg.path(f).display()))
        .collect();
    if !missing.is_empty() {
        return Err(PipelineError::MissingStages(missing));
    }
    let data = Ingested::load(&cfg.out)?;
    let h1: H1Report = read_json(&cfg.path(H1_FILE), "h1")?;
    let h2: H2Report = read_json(&cfg.path(H2_FILE), "h2")?;
    let h3: H3Report = read_json(&cfg.path(H3_FILE), "h3")?;
    let mut stages = Vec::new();
    for (f, _) in stage_files {
        stages.push(InputDigest::of(f, &read_bytes(&cfg.path(f))?));
    }
    let provenance = Provenance {
        tool: "drn".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        mode: data.manifest.mode,
        h2: h2.settings.clone(),
        h3: h3.settings.clone(),
        inputs: data.manifest.inputs.clone(),
        codebook: data.manifest.codebook.clone(),
        stages,
    };
    let report = TestReport {
        provenance,
        ingest: data.manifest.clone(),
        h1,
        h2,
        h3,
    };
    if cfg.wants(Format::Json) {
        write_file(&cfg.path(REPORT_JSON), to_json(&report))?;
    }
    write_markdown(cfg, REPORT_MD, &report.to_markdown(&data.codebook))?;
    Ok(report)
}

/// Writes a synthetic survey, its codebook, the planted tiers and the
/// canonical generator settings into `out`.
pub fn cmd_generate(config: &SyntheticConfig, seed: u64, out: &Path) -> Result<SyntheticData> {
    let data = generate_synthetic(config, seed)?;
    ensure_dir(out)?;
    let mut buf = Vec::new();
    write_survey(&data.records, &data.codebook, &mut buf)?;
    write_file(&out.join(SURVEY_FILE), buf)?;
    write_file(&out.join(CODEBOOK_FILE), data.codebook.to_toml_string())?;
    let rows: Vec<Vec<String>> = data
        .truth
        .iter()
        .map(|(org, tier)| {
            vec![
                org.to_string(),
                tier.to_string(),
                data.holdout.contains(org).to_string(),
            ]
        })
        .collect();
    write_file(
        &out.join(TIERS_FILE),
        csv_string(&["organization", "tier", "holdout"], &rows),
    )?;
    write_file(
        &out.join(GENERATOR_FILE),
        format!("# seed = {seed}\n{config}"),
    )?;
    Ok(data)
}

/// Reads a planted-tier file written by [`cmd_generate`]: tier per
/// organization and the held-out set.
pub fn read_tiers(path: &Path) -> Result<(BTreeMap<NodeId, Tier>, BTreeSet<NodeId>)> {
    let bytes = read_bytes(path)?;
    let corrupt = |message: String| PipelineError::Corrupt {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let mut truth = BTreeMap::new();
    let mut holdout = BTreeSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| corrupt(e.to_string()))?;
        let org = NodeId::new(&row[0]).map_err(|e| corrupt(e.to_string()))?;
        let tier = row[1]
            .parse::<u8>()
            .ok()
            .and_then(|t| Tier::try_from(t).ok())
            .ok_or_else(|| corrupt(format!("bad tier `{}`", &row[1])))?;
        if &row[2] == "true" {
            holdout.insert(org.clone());
        }
        truth.insert(org, tier);
    }
    Ok((truth, holdout))
}
