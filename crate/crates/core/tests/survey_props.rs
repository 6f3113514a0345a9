use std::collections::BTreeSet;

use drn_core::graph::NodeId;
use drn_core::survey::{
    build_ego_network, build_organization_network, parse_survey, write_survey, AgencyGroup,
    AlterTies, Codebook, Scope,
};
use drn_core::synthetic::{generate_synthetic, SyntheticConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(seed: u64) -> drn_core::synthetic::SyntheticData {
    let cfg = SyntheticConfig {
        sle: 6,
        ses: 5,
        lle: 9,
        missing_rate: 0.2,
        ..SyntheticConfig::default()
    };
    generate_synthetic(&cfg, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn write_then_parse_is_identity(seed in any::<u64>()) {
        let data = small(seed);
        let mut buf = Vec::new();
        write_survey(&data.records, &data.codebook, &mut buf).unwrap();
        let back = parse_survey(buf.as_slice(), &data.codebook).unwrap();
        prop_assert_eq!(back, data.records);
    }

    #[test]
    fn organization_network_ignores_record_order(seed in any::<u64>()) {
        let data = small(seed);
        let mut shuffled = data.records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        for scope in [Scope::Combined, Scope::Group(AgencyGroup::Lle)] {
            prop_assert_eq!(
                build_organization_network(&data.records, &data.codebook, scope),
                build_organization_network(&shuffled, &data.codebook, scope)
            );
        }
    }

    #[test]
    fn alters_are_canonical_labels(seed in any::<u64>()) {
        let data = small(seed);
        let labels = data.codebook.canonical_labels();
        let org = build_organization_network(&data.records, &data.codebook, Scope::Combined);
        for r in &data.records {
            for ties in [AlterTies::Star, AlterTies::Aggregate(&org)] {
                let e = build_ego_network(r, ties);
                let alters: BTreeSet<NodeId> = e.alters().cloned().collect();
                prop_assert!(alters.is_subset(&labels));
                prop_assert_eq!(&alters, &r.relational_selections);
            }
        }
    }
}

#[test]
fn bundled_codebook_parses_a_survey_row() {
    let cb = Codebook::standard();
    let mut header: Vec<String> = vec![cb.id_var.clone(), cb.group_var.clone()];
    header.extend(cb.relational.iter().map(|r| r.column.clone()));
    header.extend(cb.frequency_vars.iter().cloned());
    header.extend(cb.usefulness_vars.iter().cloned());
    header.push(cb.preparedness_var.clone());
    let mut row = vec!["17".to_string(), "SES".to_string()];
    row.extend(cb.relational.iter().map(|r| {
        if r.column == "FBI" || r.column == "JTFBI" {
            "1"
        } else {
            "0"
        }
        .to_string()
    }));
    row.extend(cb.frequency_vars.iter().map(|_| "3".to_string()));
    row.extend(cb.usefulness_vars.iter().map(|_| String::new()));
    row.push("2".into());
    let text = format!("{}\n{}\n", header.join(","), row.join(","));
    let recs = parse_survey(text.as_bytes(), &cb).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].agency_group, AgencyGroup::Ses);
    assert_eq!(
        recs[0].relational_selections,
        [NodeId::new("FBI").unwrap()].into()
    );
    assert_eq!(recs[0].preparedness_code, Some(2));
}
