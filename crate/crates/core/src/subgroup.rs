//! Cohesive subgroups: maximal cliques, distance-bounded n-cliques,
//! clique co-membership counts and tier prediction by co-membership vote.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, IndexedGraph, NodeId};

#[derive(Debug, Error, PartialEq)]
pub enum SubgroupError {
    #[error("n-clique distance bound must be >= 1")]
    ZeroDistance,
    #[error("organization `{0}` does not appear in the co-membership matrix")]
    UnknownOrganization(String),
    #[error("insufficient subgroup evidence for `{0}`: no labeled co-members")]
    InsufficientEvidence(String),
    #[error("requested {requested} clusters but only {eligible} are eligible")]
    TooFewClusters { requested: usize, eligible: usize },
    #[error("tier must be 1, 2 or 3, got {0}")]
    InvalidTier(u8),
}

/// Leadership stratum: 1 federal, 2 state and local, 3 everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Tier {
    First = 1,
    Second = 2,
    Third = 3,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::First, Tier::Second, Tier::Third];

    pub fn number(self) -> u8 {
        self as u8
    }

    fn slot(self) -> usize {
        self as usize - 1
    }
}

impl TryFrom<u8> for Tier {
    type Error = SubgroupError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Tier::First),
            2 => Ok(Tier::Second),
            3 => Ok(Tier::Third),
            other => Err(SubgroupError::InvalidTier(other)),
        }
    }
}

impl From<Tier> for u8 {
    fn from(t: Tier) -> u8 {
        t.number()
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "n")]
pub enum CliqueKind {
    MaximalClique,
    NClique(usize),
}

/// Canonically ordered subgroups: members sorted, list sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliqueSet {
    pub kind: CliqueKind,
    pub cliques: Vec<Vec<NodeId>>,
}

impl CliqueSet {
    pub fn new(kind: CliqueKind, mut cliques: Vec<Vec<NodeId>>) -> Self {
        for c in &mut cliques {
            c.sort();
            c.dedup();
        }
        cliques.sort();
        cliques.dedup();
        CliqueSet { kind, cliques }
    }

    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    /// Only the subgroups with at least `size` members.
    pub fn with_min_size(&self, size: usize) -> CliqueSet {
        CliqueSet {
            kind: self.kind,
            cliques: self
                .cliques
                .iter()
                .filter(|c| c.len() >= size)
                .cloned()
                .collect(),
        }
    }

    /// One subgroup per line, members comma-separated.
    pub fn write_report<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for c in &self.cliques {
            let line: Vec<&str> = c.iter().map(NodeId::as_str).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Fixed-width bitset over node indices.
#[derive(Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn empty(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn full(n: usize) -> Self {
        let mut b = Bits::empty(n);
        for i in 0..n {
            b.insert(i);
        }
        b
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn remove(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }

    fn is_empty(&self) -> bool {
        self.0.iter().all(|w| *w == 0)
    }

    fn and(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn and_not(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a & !b).collect())
    }

    fn or(&self, other: &Bits) -> Bits {
        Bits(self.0.iter().zip(&other.0).map(|(a, b)| a | b).collect())
    }

    fn count_and(&self, other: &Bits) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + tz)
            })
        })
    }
}

/// Bron–Kerbosch with Tomita pivoting over an index graph. Returns member
/// index lists; isolated nodes come back as singletons.
fn enumerate_maximal(g: &IndexedGraph) -> Vec<Vec<usize>> {
    let n = g.len();
    let adj: Vec<Bits> = g
        .neighbors
        .iter()
        .map(|nbrs| {
            let mut b = Bits::empty(n);
            for &v in nbrs {
                b.insert(v);
            }
            b
        })
        .collect();
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut current = Vec::new();
    expand(&adj, &mut current, Bits::full(n), Bits::empty(n), &mut out);
    out
}

fn expand(
    adj: &[Bits],
    current: &mut Vec<usize>,
    mut p: Bits,
    mut x: Bits,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() {
        if x.is_empty() {
            out.push(current.clone());
        }
        return;
    }
    let pivot = p
        .or(&x)
        .iter()
        .max_by_key(|&u| (p.count_and(&adj[u]), std::cmp::Reverse(u)))
        .expect("P is nonempty");
    let candidates: Vec<usize> = p.and_not(&adj[pivot]).iter().collect();
    for v in candidates {
        current.push(v);
        expand(adj, current, p.and(&adj[v]), x.and(&adj[v]), out);
        current.pop();
        p.remove(v);
        x.insert(v);
    }
}

fn to_clique_set(g: &IndexedGraph, kind: CliqueKind, found: Vec<Vec<usize>>) -> CliqueSet {
    let cliques = found
        .into_iter()
        .map(|c| c.into_iter().map(|i| g.labels[i].clone()).collect())
        .collect();
    CliqueSet::new(kind, cliques)
}

/// Every maximal clique of `g`.
pub fn maximal_cliques(g: &Graph) -> CliqueSet {
    let indexed = g.indexed();
    let found = enumerate_maximal(&indexed);
    to_clique_set(&indexed, CliqueKind::MaximalClique, found)
}

/// Maximal vertex sets whose pairwise distance in the full graph is at
/// most `n`; these are the maximal cliques of the `n`-th graph power.
pub fn n_cliques(g: &Graph, n: usize) -> Result<CliqueSet, SubgroupError> {
    if n == 0 {
        return Err(SubgroupError::ZeroDistance);
    }
    let indexed = g.indexed();
    let power = if n == 1 { indexed } else { indexed.power(n) };
    let found = enumerate_maximal(&power);
    let kind = if n == 1 {
        CliqueKind::MaximalClique
    } else {
        CliqueKind::NClique(n)
    };
    Ok(to_clique_set(&power, kind, found))
}

/// Organization-by-organization counts of shared subgroups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoMembership {
    pub labels: Vec<NodeId>,
    pub counts: Vec<Vec<u32>>,
}

impl CoMembership {
    pub fn index_of(&self, node: &NodeId) -> Option<usize> {
        self.labels.binary_search(node).ok()
    }

    /// Count for `(u, v)`; zero when either label is absent.
    pub fn get(&self, u: &NodeId, v: &NodeId) -> u32 {
        match (self.index_of(u), self.index_of(v)) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    pub fn diagonal(&self, u: &NodeId) -> u32 {
        self.get(u, u)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.labels.len())
            .all(|i| (0..self.labels.len()).all(|j| self.counts[i][j] == self.counts[j][i]))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().map(|l| l.to_string()));
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let mut rec = vec![label.to_string()];
            rec.extend(row.iter().map(u32::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Co-membership over the members of `cs`.
pub fn co_membership(cs: &CliqueSet) -> CoMembership {
    co_membership_over(cs, std::iter::empty())
}

/// Co-membership indexed by the members of `cs` plus `extra` labels (which
/// get zero rows unless they appear in a subgroup).
pub fn co_membership_over<'a>(
    cs: &CliqueSet,
    extra: impl IntoIterator<Item = &'a NodeId>,
) -> CoMembership {
    let mut universe: BTreeSet<NodeId> = extra.into_iter().cloned().collect();
    for c in &cs.cliques {
        universe.extend(c.iter().cloned());
    }
    let labels: Vec<NodeId> = universe.into_iter().collect();
    let mut counts = vec![vec![0u32; labels.len()]; labels.len()];
    for c in &cs.cliques {
        let idx: Vec<usize> = c
            .iter()
            .map(|m| labels.binary_search(m).expect("member indexed"))
            .collect();
        for &i in &idx {
            for &j in &idx {
                counts[i][j] += 1;
            }
        }
    }
    CoMembership { labels, counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Equal votes resolve to the smaller tier number.
    #[default]
    TowardFirst,
    TowardThird,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierAssignment {
    pub org: NodeId,
    pub predicted_tier: Tier,
    /// Co-membership votes for tiers 1, 2, 3.
    pub evidence: [u64; 3],
}

pub fn predict_tier(
    org: &NodeId,
    cm: &CoMembership,
    known: &BTreeMap<NodeId, Tier>,
) -> Result<TierAssignment, SubgroupError> {
    predict_tier_with(org, cm, known, TieBreak::TowardFirst)
}

/// Co-membership-weighted majority vote over labeled organizations.
pub fn predict_tier_with(
    org: &NodeId,
    cm: &CoMembership,
    known: &BTreeMap<NodeId, Tier>,
    tie_break: TieBreak,
) -> Result<TierAssignment, SubgroupError> {
    let row = cm
        .index_of(org)
        .ok_or_else(|| SubgroupError::UnknownOrganization(org.to_string()))?;
    let mut evidence = [0u64; 3];
    for (other, tier) in known {
        if other == org {
            continue;
        }
        if let Some(col) = cm.index_of(other) {
            evidence[tier.slot()] += u64::from(cm.counts[row][col]);
        }
    }
    let best = *evidence.iter().max().expect("three tiers");
    if best == 0 {
        return Err(SubgroupError::InsufficientEvidence(org.to_string()));
    }
    let winners = Tier::ALL.into_iter().filter(|t| evidence[t.slot()] == best);
    let predicted_tier = match tie_break {
        TieBreak::TowardFirst => winners.min(),
        TieBreak::TowardThird => winners.max(),
    }
    .expect("at least one tier attains the maximum");
    Ok(TierAssignment {
        org: org.clone(),
        predicted_tier,
        evidence,
    })
}

/// Uniform sample without replacement of `k` subgroups that each contain
/// a member of every required group. The sample order is the cluster
/// numbering.
pub fn select_clusters<G, F>(
    cs: &CliqueSet,
    group_of: F,
    required: &BTreeSet<G>,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<NodeId>>, SubgroupError>
where
    G: Ord,
    F: Fn(&NodeId) -> Option<G>,
{
    let eligible: Vec<&Vec<NodeId>> = cs
        .cliques
        .iter()
        .filter(|c| {
            let present: BTreeSet<G> = c.iter().filter_map(&group_of).collect();
            required.iter().all(|g| present.contains(g))
        })
        .collect();
    if eligible.len() < k {
        return Err(SubgroupError::TooFewClusters {
            requested: k,
            eligible: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, eligible.len(), k);
    Ok(picked.into_iter().map(|i| eligible[i].clone()).collect())
}
