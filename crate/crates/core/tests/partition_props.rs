use std::collections::HashSet;

use fedmod::ingest::{Corpus, ExampleRecord, Label};
use fedmod::partition::{build_clients, manifest, max_clients, partition, split_test, PartitionSpec, Pool};
use proptest::prelude::*;

fn corpus(harmful: usize, normal: usize) -> Corpus {
    let examples = (0..harmful + normal)
        .map(|i| ExampleRecord {
            id: format!("x{i}"),
            tokens: vec!["t".into()],
            label: if i < harmful { Label::Harmful } else { Label::Normal },
        })
        .collect();
    Corpus::new(examples).unwrap()
}

fn pool(harmful: usize, normal: usize) -> Pool {
    Pool {
        harmful: (0..harmful).collect(),
        normal: (harmful..harmful + normal).collect(),
    }
}

#[test]
fn two_clients_consume_an_exact_pool() {
    let spec = PartitionSpec {
        client_size: 10,
        client_harmful_ratio: 0.3,
        seed: 11,
        ..Default::default()
    };
    let p = pool(6, 14);
    let shards = build_clients(&p, &spec, 2).unwrap();
    let mut seen: Vec<usize> = shards.iter().flat_map(|s| s.indices.iter().copied()).collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..20).collect::<Vec<_>>());
    for s in &shards {
        assert_eq!(s.harmful_count, 3);
        assert_eq!(s.indices.iter().filter(|&&i| i < 6).count(), 3);
    }
    assert!(build_clients(&p, &spec, 3).is_err());
    assert!(build_clients(&p, &spec, 0).unwrap().is_empty());
}

#[test]
fn fifty_clients_of_one_thousand() {
    let c = corpus(40_000, 60_000);
    let spec = PartitionSpec {
        client_size: 1000,
        seed: 5,
        ..Default::default()
    };
    let fd = partition(c, &spec, Some(50)).unwrap();
    assert_eq!(fd.clients.len(), 50);
    for s in &fd.clients {
        let h = s
            .indices
            .iter()
            .filter(|&&i| fd.corpus.examples()[i].label.is_harmful())
            .count();
        assert_eq!((s.len(), h), (1000, 500));
    }
}

#[test]
fn insufficient_test_harmful_reports_shortfall() {
    let c = corpus(5, 995);
    let err = split_test(&c, &PartitionSpec::default()).unwrap_err();
    assert!(err.to_string().contains("need 8, have 5"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partitions_are_exact_and_disjoint(
        harmful in 50usize..400,
        normal in 50usize..600,
        client_size in 2usize..40,
        ratio in 0.05f64..=1.0,
        seed in any::<u64>(),
    ) {
        let spec = PartitionSpec { client_size, client_harmful_ratio: ratio, seed, ..Default::default() };
        prop_assume!(spec.harmful_per_client() > 0);
        let c = corpus(harmful, normal);
        let Ok(fd) = partition(c.clone(), &spec, None) else { return Ok(()) };
        let n_test = (0.1 * c.len() as f64).round() as usize;
        prop_assert_eq!(fd.test_set.len(), n_test);
        let test_h = fd.test_set.iter().filter(|&&i| i < harmful).count();
        prop_assert_eq!(test_h, (0.08 * n_test as f64).round() as usize);

        let mut seen: HashSet<usize> = fd.test_set.iter().copied().collect();
        for s in &fd.clients {
            prop_assert_eq!(s.len(), client_size);
            prop_assert_eq!(s.harmful_count, spec.harmful_per_client());
            prop_assert_eq!(s.indices.iter().filter(|&&i| i < harmful).count(), s.harmful_count);
            for &i in &s.indices {
                prop_assert!(seen.insert(i), "index {} used twice", i);
            }
        }
        let again = partition(c, &spec, None).unwrap();
        prop_assert_eq!(manifest(&fd), manifest(&again));
    }

    #[test]
    fn max_clients_non_increasing_in_client_size(
        harmful in 0usize..5000,
        normal in 0usize..5000,
        ratio in 0.1f64..=1.0,
    ) {
        let p = pool(harmful, normal);
        let mut prev = usize::MAX;
        for client_size in 10..200 {
            let spec = PartitionSpec { client_size, client_harmful_ratio: ratio, ..Default::default() };
            let m = max_clients(&p, &spec).unwrap();
            prop_assert!(m <= prev, "size {}: {} > {}", client_size, m, prev);
            prev = m;
        }
    }
}
