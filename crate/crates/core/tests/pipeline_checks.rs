use std::collections::BTreeMap;
use std::fs;

use drn_core::measures::{
    read_profiles_csv, ConnectednessProfile, CoordinationProfile, Measure, RespondentProfile,
};
use drn_core::pipeline::{self, kw_table, H2Report, H3Report, RunConfig, CLUSTERS_FILE};
use drn_core::report::MatrixCell;
use drn_core::stats::{kruskal_wallis, spearman, Stars};
use drn_core::survey::AgencyGroup;
use drn_core::synthetic::SyntheticConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn run(dir: &std::path::Path) -> RunConfig {
    let cfg = SyntheticConfig {
        sle: 15,
        ses: 15,
        lle: 40,
        coupling: 0.5,
        ..SyntheticConfig::default()
    };
    pipeline::cmd_generate(&cfg, 12, dir).unwrap();
    let mut run = RunConfig::new(dir);
    run.inputs = vec![dir.join(pipeline::SURVEY_FILE)];
    run.codebook = Some(dir.join(pipeline::CODEBOOK_FILE));
    run.seed = 12;
    pipeline::cmd_ingest(&run).unwrap();
    pipeline::cmd_h2(&run).unwrap();
    pipeline::cmd_h3(&run).unwrap();
    run
}

#[test]
fn reported_statistics_recompute_from_exported_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run(dir);
    let profiles = read_profiles_csv(
        fs::read(dir.join(pipeline::PROFILES_FILE))
            .unwrap()
            .as_slice(),
    )
    .unwrap();
    let h2: H2Report =
        serde_json::from_str(&fs::read_to_string(dir.join(pipeline::H2_FILE)).unwrap()).unwrap();
    let h3: H3Report =
        serde_json::from_str(&fs::read_to_string(dir.join(pipeline::H3_FILE)).unwrap()).unwrap();

    for col in &h2.agency.columns {
        let groups: Vec<Vec<f64>> = AgencyGroup::ALL
            .iter()
            .map(|g| {
                profiles
                    .iter()
                    .filter(|p| p.agency_group == *g)
                    .filter_map(|p| p.value(col.measure))
                    .collect()
            })
            .collect();
        assert_eq!(col.result.as_ref(), Some(&kruskal_wallis(&groups).unwrap()));
    }

    let mut rdr = csv::Reader::from_path(dir.join(CLUSTERS_FILE)).unwrap();
    let mut members: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row.unwrap();
        members
            .entry(row[0].parse().unwrap())
            .or_default()
            .push(row[1].to_string());
    }
    let by_id: BTreeMap<&str, &RespondentProfile> =
        profiles.iter().map(|p| (p.resp_id.as_str(), p)).collect();
    let readiness: Vec<Vec<f64>> = members
        .values()
        .map(|ids| {
            ids.iter()
                .filter_map(|id| by_id[id.as_str()].value(Measure::Readiness))
                .collect()
        })
        .collect();
    assert_eq!(
        h2.readiness.columns[0].result.as_ref(),
        Some(&kruskal_wallis(&readiness).unwrap())
    );

    let merged: Vec<&RespondentProfile> = members
        .values()
        .flatten()
        .map(|id| by_id[id.as_str()])
        .collect();
    for (matrix, pool) in [
        (&h3.combined, profiles.iter().collect::<Vec<_>>()),
        (&h3.clusters, merged),
    ] {
        for (a, b, cell) in matrix.tested() {
            let (x, y): (Vec<f64>, Vec<f64>) = pool
                .iter()
                .filter_map(|p| Some((p.value(a)?, p.value(b)?)))
                .unzip();
            match cell {
                MatrixCell::Tested { result } => assert_eq!(result, &spearman(&x, &y).unwrap()),
                MatrixCell::Skipped { n, .. } => assert_eq!(*n, x.len()),
                other => panic!("unexpected {other:?}"),
            }
        }
    }
}

#[test]
fn stage_reruns_are_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = run(tmp.path());
    let before = fs::read(tmp.path().join(pipeline::H3_FILE)).unwrap();
    let clusters = fs::read(tmp.path().join(CLUSTERS_FILE)).unwrap();
    pipeline::cmd_ingest(&cfg).unwrap();
    pipeline::cmd_h2(&cfg).unwrap();
    pipeline::cmd_h3(&cfg).unwrap();
    assert_eq!(
        fs::read(tmp.path().join(pipeline::H3_FILE)).unwrap(),
        before
    );
    assert_eq!(fs::read(tmp.path().join(CLUSTERS_FILE)).unwrap(), clusters);
}

fn profile(
    i: usize,
    group: AgencyGroup,
    degree: usize,
    betweenness: f64,
    tie: f64,
) -> RespondentProfile {
    RespondentProfile {
        resp_id: format!("R{i:03}"),
        agency_group: group,
        connectedness: ConnectednessProfile {
            degree,
            ego_betweenness: betweenness,
            tie_strength: Some(tie),
        },
        coordination: CoordinationProfile {
            readiness: Some(2),
            quality: None,
            accessibility: 0,
        },
    }
}

fn planted_groups(shift: f64, seed: u64) -> Vec<Vec<RespondentProfile>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(8.0, 2.0).unwrap();
    let mut i = 0;
    AgencyGroup::ALL
        .iter()
        .enumerate()
        .map(|(g, &group)| {
            (0..40)
                .map(|_| {
                    i += 1;
                    let bump = if g == 0 { shift } else { 0.0 };
                    let degree = (noise.sample(&mut rng) + bump).round().max(0.0) as usize;
                    profile(
                        i,
                        group,
                        degree,
                        noise.sample(&mut rng) * 3.0,
                        noise.sample(&mut rng) / 2.0,
                    )
                })
                .collect()
        })
        .collect()
}

fn agency_table(groups: &[Vec<RespondentProfile>]) -> drn_core::report::KwTable {
    let refs: Vec<Vec<&RespondentProfile>> = groups.iter().map(|g| g.iter().collect()).collect();
    let rows = vec!["SLE".into(), "SES".into(), "LLE".into()];
    kw_table("agency", rows, &refs, &Measure::CONNECTEDNESS)
}

#[test]
fn identical_groups_reject_at_nominal_rate() {
    let mut rejected = 0;
    let mut tests = 0;
    for seed in 0..200 {
        let t = agency_table(&planted_groups(0.0, seed));
        assert_eq!(t.grid().len(), 4);
        assert_eq!(t.grid()[3][0], "Asymp. Sig.");
        for c in &t.columns {
            tests += 1;
            if c.result.as_ref().unwrap().p <= 0.05 {
                rejected += 1;
            }
        }
    }
    let rate = f64::from(rejected) / f64::from(tests);
    assert!((0.02..=0.09).contains(&rate), "rejection rate {rate}");
}

#[test]
fn shifted_group_is_flagged() {
    let t = agency_table(&planted_groups(4.0, 31));
    let degree = t.columns[0].result.as_ref().unwrap();
    assert_eq!(degree.stars, Stars::Two);
    assert!(t.grid()[3][1].ends_with("**"));
}

#[test]
fn group_without_observations_is_left_out() {
    let mut groups = planted_groups(0.0, 5);
    for p in &mut groups[1] {
        p.connectedness.tie_strength = None;
    }
    groups[2].clear();
    let t = agency_table(&groups);
    let tie = &t.columns[2];
    assert!(tie.result.is_none() && tie.skipped.is_some());
    assert_eq!(tie.mean_ranks, vec![None, None, None]);
    assert_eq!(t.columns[0].mean_ranks[2], None);
    assert!(t.columns[0].result.is_some());
}
