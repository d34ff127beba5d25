mod common;

use std::collections::HashSet;

use common::{all_strings, forward_decode};
use proptest::prelude::*;
use prufer_core::{decode, encode, h_map, Edge, LabeledTree, PruferString};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn exhaustive_round_trip_and_cayley_count() {
    for n in 3..=7u32 {
        let mut seen = HashSet::new();
        for p in all_strings(n) {
            let t = decode(&p);
            assert_eq!(t, forward_decode(&p), "decoders disagree on {p}");
            assert_eq!(encode(&t).unwrap(), p);
            let mut edges: Vec<Edge> = t.edge_set().iter().collect();
            edges.sort();
            seen.insert(edges);
        }
        assert_eq!(seen.len() as u64, (n as u64).pow(n - 2), "n = {n}");
    }
}

#[test]
fn h_map_edges_are_the_tree() {
    for p in all_strings(6) {
        let t = decode(&p);
        let from_h = LabeledTree::new(6, h_map(&p).iter()).unwrap();
        assert_eq!(t, from_h);
    }
}

#[test]
fn random_trees_round_trip_at_large_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [100u32, 1000, 10_000] {
        for _ in 0..50 {
            let t = LabeledTree::random_attachment(n, &mut rng);
            assert_eq!(decode(&encode(&t).unwrap()), t);
        }
    }
}

fn string_strategy() -> impl Strategy<Value = PruferString> {
    (3u32..60).prop_flat_map(|n| {
        proptest::collection::vec(1..=n, n as usize - 2)
            .prop_map(move |e| PruferString::new(n, e).unwrap())
    })
}

proptest! {
    #[test]
    fn decode_matches_forward_decoder(p in string_strategy()) {
        prop_assert_eq!(decode(&p), forward_decode(&p));
    }

    #[test]
    fn encode_inverts_decode(p in string_strategy()) {
        prop_assert_eq!(encode(&decode(&p)).unwrap(), p);
    }

    #[test]
    fn degree_is_one_plus_occurrences(p in string_strategy()) {
        let deg = decode(&p).degrees();
        for v in 1..=p.n() {
            let occ = p.entries().iter().filter(|&&x| x == v).count() as u32;
            prop_assert_eq!(deg[v as usize], occ + 1);
        }
    }

    #[test]
    fn text_formats_round_trip(p in string_strategy()) {
        prop_assert_eq!(PruferString::parse_line(&p.to_string()).unwrap(), p.clone());
        let t = decode(&p);
        prop_assert_eq!(LabeledTree::parse_line(&t.to_string()).unwrap(), t);
    }
}
