mod common;

use proptest::prelude::*;
use xspn_core::leaves::ExchangeableLeaf;
use xspn_core::{BinaryDataset, Network, PartialEvidence, Scope, VariableId};

use common::*;

fn evidence_strategy(n: usize) -> impl Strategy<Value = Vec<Option<u8>>> {
    proptest::collection::vec(prop_oneof![Just(None), Just(Some(0u8)), Just(Some(1u8))], n)
}

fn network_and_evidence() -> impl Strategy<Value = (u64, usize, Vec<Option<u8>>)> {
    (any::<u64>(), 1usize..=9).prop_flat_map(|(seed, n)| (Just(seed), Just(n), evidence_strategy(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exchangeable_leaf_is_permutation_invariant(
        raw in proptest::collection::vec(0.01f64..1.0, 2..14),
        bits in any::<u64>(),
        perm_seed in any::<u64>(),
    ) {
        let n = raw.len() - 1;
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().enumerate().map(|(t, q)| q / total / choose(n, t)).collect();
        let leaf = ExchangeableLeaf::new(Scope::full(n).unwrap(), weights).unwrap();
        let x = assignment(bits as usize, n);
        let mut y = x.clone();
        use rand::seq::SliceRandom;
        y.shuffle(&mut rng(perm_seed));
        prop_assert_eq!(leaf.log_prob(&x).to_bits(), leaf.log_prob(&y).to_bits());
    }

    #[test]
    fn marginal_is_consistent((seed, n, values) in network_and_evidence(), var in any::<prop::sample::Index>()) {
        let net = random_network(seed, n);
        let mut e = PartialEvidence::from_options(values).unwrap();
        let v = VariableId(var.index(n));
        e.set(v, None);
        let whole = net.log_marginal(&e).unwrap().exp();
        e.set(v, Some(0));
        let zero = net.log_marginal(&e).unwrap().exp();
        e.set(v, Some(1));
        let one = net.log_marginal(&e).unwrap().exp();
        prop_assert!(relative_error(zero + one, whole) < 1e-10, "{} vs {}", zero + one, whole);
    }

    #[test]
    fn more_evidence_never_increases_probability((seed, n, values) in network_and_evidence()) {
        let net = random_network(seed, n);
        let full = PartialEvidence::from_options(values.clone()).unwrap();
        let mut partial = PartialEvidence::unobserved(n);
        let mut previous = net.log_marginal(&partial).unwrap();
        prop_assert!(previous.abs() < 1e-10);
        for (i, v) in full.values().iter().enumerate() {
            if v.is_some() {
                partial.set(VariableId(i), *v);
                let next = net.log_marginal(&partial).unwrap();
                prop_assert!(next <= previous + 1e-12);
                previous = next;
            }
        }
    }

    #[test]
    fn evaluate_matches_enumeration(seed in any::<u64>(), n in 1usize..=8, bits in any::<u64>()) {
        let net = random_network(seed, n);
        prop_assert!(net.validate().is_empty());
        let x = assignment(bits as usize, n);
        let got = net.log_evaluate(&x).unwrap();
        prop_assert!((got - brute_probability(&net, &x).ln()).abs() < 1e-10);
    }

    #[test]
    fn model_json_round_trip_is_exact(seed in any::<u64>(), n in 1usize..=8, bits in any::<u64>()) {
        let net = random_network(seed, n);
        let back = Network::from_json(&net.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &net);
        let x = assignment(bits as usize, n);
        prop_assert_eq!(back.log_evaluate(&x).unwrap().to_bits(), net.log_evaluate(&x).unwrap().to_bits());
    }

    #[test]
    fn dataset_text_round_trip(rows in proptest::collection::vec(proptest::collection::vec(0u8..=1, 5), 1..40)) {
        let data = BinaryDataset::from_rows(&rows).unwrap();
        let mut buf = Vec::new();
        data.write_to(&mut buf).unwrap();
        prop_assert_eq!(BinaryDataset::parse(&buf[..]).unwrap(), data);
    }
}
