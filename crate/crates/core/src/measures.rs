//! Per-respondent connectedness and coordination scores.
//!
//! Survey scales are reoriented so that larger always means more
//! connected or more ready: tie strength is `6 - frequency code` and
//! readiness is `5 - preparedness code`.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::graph::{EgoNetwork, NodeId};
use crate::survey::{AgencyGroup, SurveyRecord, FREQUENCY_MAX, PREPAREDNESS_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectednessProfile {
    pub degree: usize,
    pub ego_betweenness: f64,
    pub tie_strength: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationProfile {
    pub readiness: Option<u8>,
    pub quality: Option<f64>,
    pub accessibility: u32,
}

pub fn degree_centrality(e: &EgoNetwork) -> usize {
    e.alters().count()
}

/// Freeman betweenness of the ego inside its own network.
///
/// Every alter is adjacent to the ego, so two alters are either adjacent
/// (distance 1, no path through the ego) or at distance 2 with one
/// shortest path per common neighbour. The ego is always one of those
/// common neighbours.
pub fn ego_betweenness(e: &EgoNetwork) -> f64 {
    let g = e.graph();
    let alters: Vec<&NodeId> = e.alters().collect();
    let neighbour_sets: Vec<BTreeSet<&NodeId>> = alters
        .iter()
        .map(|a| g.neighbors(a).expect("alter in graph").collect())
        .collect();
    let mut total = 0.0;
    for i in 0..alters.len() {
        for j in i + 1..alters.len() {
            if neighbour_sets[i].contains(alters[j]) {
                continue;
            }
            let common = neighbour_sets[i].intersection(&neighbour_sets[j]).count();
            total += 1.0 / common as f64;
        }
    }
    total
}

/// Mean of `6 - code` over answered frequency items.
pub fn tie_strength(record: &SurveyRecord) -> Option<f64> {
    let answered: Vec<f64> = record
        .frequency_codes
        .values()
        .flatten()
        .map(|&c| f64::from(FREQUENCY_MAX - c))
        .collect();
    if answered.is_empty() {
        None
    } else {
        Some(answered.iter().sum::<f64>() / answered.len() as f64)
    }
}

/// `5 - preparedness code`: 4 is "very well prepared".
pub fn readiness(record: &SurveyRecord) -> Option<u8> {
    record.preparedness_code.map(|c| PREPAREDNESS_MAX + 1 - c)
}

/// Number of information sources used at all (code >= 2).
pub fn accessibility(record: &SurveyRecord) -> u32 {
    record
        .usefulness_codes
        .values()
        .flatten()
        .filter(|&&c| c >= 2)
        .count() as u32
}

/// Mean usefulness code over the sources used.
pub fn quality(record: &SurveyRecord) -> Option<f64> {
    let used: Vec<f64> = record
        .usefulness_codes
        .values()
        .flatten()
        .filter(|&&c| c >= 2)
        .map(|&c| f64::from(c))
        .collect();
    if used.is_empty() {
        None
    } else {
        Some(used.iter().sum::<f64>() / used.len() as f64)
    }
}

/// All six scores for one respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondentProfile {
    pub resp_id: String,
    pub agency_group: AgencyGroup,
    pub connectedness: ConnectednessProfile,
    pub coordination: CoordinationProfile,
}

impl RespondentProfile {
    pub fn compute(record: &SurveyRecord, ego: &EgoNetwork) -> Self {
        RespondentProfile {
            resp_id: record.resp_id.clone(),
            agency_group: record.agency_group,
            connectedness: ConnectednessProfile {
                degree: degree_centrality(ego),
                ego_betweenness: ego_betweenness(ego),
                tie_strength: tie_strength(record),
            },
            coordination: CoordinationProfile {
                readiness: readiness(record),
                quality: quality(record),
                accessibility: accessibility(record),
            },
        }
    }

    pub fn value(&self, m: Measure) -> Option<f64> {
        match m {
            Measure::Degree => Some(self.connectedness.degree as f64),
            Measure::EgoBetweenness => Some(self.connectedness.ego_betweenness),
            Measure::TieStrength => self.connectedness.tie_strength,
            Measure::Readiness => self.coordination.readiness.map(f64::from),
            Measure::Quality => self.coordination.quality,
            Measure::Accessibility => Some(f64::from(self.coordination.accessibility)),
        }
    }
}

/// The six model variables, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Degree,
    EgoBetweenness,
    TieStrength,
    Readiness,
    Quality,
    Accessibility,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::Degree,
        Measure::EgoBetweenness,
        Measure::TieStrength,
        Measure::Readiness,
        Measure::Quality,
        Measure::Accessibility,
    ];
    pub const CONNECTEDNESS: [Measure; 3] = [
        Measure::Degree,
        Measure::EgoBetweenness,
        Measure::TieStrength,
    ];
    pub const COORDINATION: [Measure; 3] =
        [Measure::Readiness, Measure::Quality, Measure::Accessibility];

    pub fn title(self) -> &'static str {
        match self {
            Measure::Degree => "Degree",
            Measure::EgoBetweenness => "EgoBetweenness",
            Measure::TieStrength => "Tie Strength",
            Measure::Readiness => "Readiness",
            Measure::Quality => "Quality",
            Measure::Accessibility => "Accessibility",
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            Measure::Degree => "degree",
            Measure::EgoBetweenness => "ego_betweenness",
            Measure::TieStrength => "tie_strength",
            Measure::Readiness => "readiness",
            Measure::Quality => "quality",
            Measure::Accessibility => "accessibility",
        }
    }

    pub fn is_connectedness(self) -> bool {
        Measure::CONNECTEDNESS.contains(&self)
    }
}

pub const PROFILE_HEADER: [&str; 8] = [
    "resp_id",
    "agency_group",
    "degree",
    "ego_betweenness",
    "tie_strength",
    "readiness",
    "quality",
    "accessibility",
];

/// Profiles as CSV; missing values are empty cells, reals at full precision.
pub fn write_profiles_csv<W: Write>(
    profiles: &[RespondentProfile],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PROFILE_HEADER)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for p in profiles {
        w.write_record([
            p.resp_id.clone(),
            p.agency_group.code().to_string(),
            p.connectedness.degree.to_string(),
            p.connectedness.ego_betweenness.to_string(),
            opt(p.connectedness.tie_strength.map(|v| v.to_string())),
            opt(p.coordination.readiness.map(|v| v.to_string())),
            opt(p.coordination.quality.map(|v| v.to_string())),
            p.coordination.accessibility.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profiles_csv<R: std::io::Read>(input: R) -> Result<Vec<RespondentProfile>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(PROFILE_HEADER) {
        return Err(format!(
            "unexpected profile header {:?}",
            header.iter().collect::<Vec<_>>()
        ));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |c: &str| format!("profiles line {line}: bad `{c}`");
        let opt_f = |i: usize| -> Result<Option<f64>, String> {
            match &row[i] {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| err(PROFILE_HEADER[i])),
            }
        };
        out.push(RespondentProfile {
            resp_id: row[0].to_string(),
            agency_group: row[1].parse().map_err(|_| err("agency_group"))?,
            connectedness: ConnectednessProfile {
                degree: row[2].parse().map_err(|_| err("degree"))?,
                ego_betweenness: row[3].parse().map_err(|_| err("ego_betweenness"))?,
                tie_strength: opt_f(4)?,
            },
            coordination: CoordinationProfile {
                readiness: match &row[5] {
                    "" => None,
                    s => Some(s.parse().map_err(|_| err("readiness"))?),
                },
                quality: opt_f(6)?,
                accessibility: row[7].parse().map_err(|_| err("accessibility"))?,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn ego_of(edges: &[(&str, &str)], ego: &str) -> EgoNetwork {
        Graph::from_edges(edges.iter().copied())
            .unwrap()
            .ego_network(&NodeId::new(ego).unwrap())
            .unwrap()
    }

    fn record_with(freq: &[(&str, u8)], useful: &[(&str, u8)], prep: Option<u8>) -> SurveyRecord {
        SurveyRecord {
            resp_id: "r".into(),
            agency_group: AgencyGroup::Sle,
            relational_selections: Default::default(),
            frequency_codes: freq
                .iter()
                .map(|(k, v)| (k.to_string(), Some(*v)))
                .collect(),
            usefulness_codes: useful
                .iter()
                .map(|(k, v)| (k.to_string(), Some(*v)))
                .collect(),
            preparedness_code: prep,
        }
    }

    #[test]
    fn degree_examples() {
        let mut g = Graph::new();
        g.add_node(&NodeId::new("e").unwrap());
        assert_eq!(
            degree_centrality(&g.ego_network(&NodeId::new("e").unwrap()).unwrap()),
            0
        );
        let star = ego_of(&[("e", "a"), ("e", "b"), ("e", "c"), ("e", "d")], "e");
        assert_eq!(degree_centrality(&star), 4);
        let tri = ego_of(&[("e", "a"), ("e", "b"), ("a", "b")], "e");
        assert_eq!(degree_centrality(&tri), 2);
    }

    #[test]
    fn ego_betweenness_examples() {
        let star = ego_of(&[("e", "a"), ("e", "b"), ("e", "c"), ("e", "d")], "e");
        assert_eq!(ego_betweenness(&star), 6.0);
        let one_tie = ego_of(&[("e", "a"), ("e", "b"), ("e", "c"), ("a", "b")], "e");
        assert_eq!(ego_betweenness(&one_tie), 2.0);
        let complete = ego_of(
            &[
                ("e", "a"),
                ("e", "b"),
                ("e", "c"),
                ("a", "b"),
                ("a", "c"),
                ("b", "c"),
            ],
            "e",
        );
        assert_eq!(ego_betweenness(&complete), 0.0);
        // a and c share ego and b: half of their shortest paths pass the ego
        let shared = ego_of(
            &[("e", "a"), ("e", "b"), ("e", "c"), ("a", "b"), ("b", "c")],
            "e",
        );
        assert_eq!(ego_betweenness(&shared), 0.5);
    }

    #[test]
    fn tie_strength_examples() {
        assert_eq!(
            tie_strength(&record_with(&[("MEETMUN", 1), ("MEETSSTA", 1)], &[], None)),
            Some(5.0)
        );
        assert_eq!(
            tie_strength(&record_with(&[("MEETMUN", 6), ("MEETSSTA", 6)], &[], None)),
            Some(0.0)
        );
        assert_eq!(
            tie_strength(&record_with(&[("MEETMUN", 2), ("MEETSSTA", 4)], &[], None)),
            Some(3.0)
        );
        assert_eq!(tie_strength(&record_with(&[], &[], None)), None);
    }

    #[test]
    fn readiness_inverts() {
        assert_eq!(readiness(&record_with(&[], &[], Some(1))), Some(4));
        assert_eq!(readiness(&record_with(&[], &[], Some(4))), Some(1));
        assert_eq!(readiness(&record_with(&[], &[], None)), None);
    }

    #[test]
    fn accessibility_and_quality() {
        let names: Vec<String> = (0..12).map(|i| format!("IF{i}")).collect();
        let all4: Vec<(&str, u8)> = names.iter().map(|n| (n.as_str(), 4)).collect();
        let all1: Vec<(&str, u8)> = names.iter().map(|n| (n.as_str(), 1)).collect();
        assert_eq!(accessibility(&record_with(&[], &all4, None)), 12);
        assert_eq!(accessibility(&record_with(&[], &all1, None)), 0);
        assert_eq!(quality(&record_with(&[], &all1, None)), None);
        let mixed = record_with(&[], &[("IFFBI", 3), ("IFMED", 1), ("IFSTAT", 2)], None);
        assert_eq!(accessibility(&mixed), 2);
        assert_eq!(
            quality(&record_with(&[], &[("A", 4), ("B", 4)], None)),
            Some(4.0)
        );
        assert_eq!(
            quality(&record_with(&[], &[("A", 2), ("B", 4)], None)),
            Some(3.0)
        );
    }

    #[test]
    fn missing_usefulness_counts_as_unused() {
        let mut r = record_with(&[], &[("A", 3)], None);
        r.usefulness_codes.insert("B".into(), None);
        assert_eq!(accessibility(&r), 1);
        assert_eq!(quality(&r), Some(3.0));
    }

    #[test]
    fn profiles_csv_round_trip() {
        let p = RespondentProfile {
            resp_id: "x1".into(),
            agency_group: AgencyGroup::Lle,
            connectedness: ConnectednessProfile {
                degree: 3,
                ego_betweenness: 2.5,
                tie_strength: None,
            },
            coordination: CoordinationProfile {
                readiness: Some(3),
                quality: Some(10.0 / 3.0),
                accessibility: 4,
            },
        };
        let mut buf = Vec::new();
        write_profiles_csv(std::slice::from_ref(&p), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("resp_id,agency_group,degree,ego_betweenness,tie_strength,readiness,quality,accessibility\n"));
        assert!(text.contains("x1,LLE,3,2.5,,3,"));
        assert_eq!(read_profiles_csv(buf.as_slice()).unwrap(), vec![p]);
    }

    #[test]
    fn measure_values_follow_profile() {
        let r = record_with(&[("M", 2)], &[("A", 4)], Some(2));
        let ego = ego_of(&[("e", "a")], "e");
        let p = RespondentProfile::compute(&r, &ego);
        assert_eq!(p.value(Measure::Degree), Some(1.0));
        assert_eq!(p.value(Measure::TieStrength), Some(4.0));
        assert_eq!(p.value(Measure::Readiness), Some(3.0));
        assert_eq!(p.value(Measure::Quality), Some(4.0));
        assert_eq!(p.value(Measure::Accessibility), Some(1.0));
    }
}
