use std::collections::{BTreeMap, HashSet};

use netchoice_core::ids::{AuthorId, SiteId, UpdateId};
use netchoice_core::ingest::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_log(seed: u64, n_events: usize) -> (Vec<InteractionEvent>, Vec<UpdateEvent>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_authors, n_sites) = (40, 12);
    let updates: Vec<UpdateEvent> = (0..200)
        .map(|i| UpdateEvent {
            author: AuthorId(rng.random_range(0..n_authors)),
            site: SiteId(rng.random_range(0..n_sites)),
            update: UpdateId(i),
            timestamp: rng.random_range(0..1000),
            role: [RoleLabel::P, RoleLabel::CG, RoleLabel::Unlabeled][rng.random_range(0..3)],
        })
        .collect();
    let events = (0..n_events)
        .map(|_| InteractionEvent {
            actor: AuthorId(rng.random_range(0..n_authors)),
            site: SiteId(rng.random_range(0..n_sites)),
            kind: InteractionKind::Guestbook,
            timestamp: Some(rng.random_range(0..1000)),
            update: None,
        })
        .collect();
    (events, updates)
}

/// Quadratic-time restatement of the projection rule.
fn brute_projection(events: &[InteractionEvent], updates: &[UpdateEvent]) -> BTreeMap<(u32, u32, i64, u32), usize> {
    let mut out = BTreeMap::new();
    for ev in events {
        let t = ev.timestamp.unwrap();
        let mut targets = HashSet::new();
        for u in updates.iter().filter(|u| u.site == ev.site) {
            let prior = u.timestamp < t;
            let future_p = u.role == RoleLabel::P;
            if (prior || future_p) && u.author != ev.actor {
                targets.insert(u.author);
            }
        }
        for b in targets {
            *out.entry((ev.actor.0, b.0, t, ev.site.0)).or_insert(0) += 1;
        }
    }
    out
}

fn multiset(edges: &[DirectedInteraction]) -> BTreeMap<(u32, u32, i64, u32), usize> {
    let mut out = BTreeMap::new();
    for d in edges {
        *out.entry((d.source.0, d.target.0, d.timestamp, d.via_site.0)).or_insert(0) += 1;
    }
    out
}

#[test]
fn projection_matches_quadratic_oracle_on_10k_events() {
    let (events, updates) = random_log(5, 10_000);
    let (kept, _) = filter_self_interactions(events, &updates);
    let got = project_to_author_edges(&kept, &updates).unwrap();
    assert_eq!(multiset(&got), brute_projection(&kept, &updates));
    assert!(got.iter().all(|d| d.source != d.target));
}

#[test]
fn self_filter_matches_membership_scan() {
    let (events, updates) = random_log(8, 20);
    let expected = events
        .iter()
        .filter(|e| updates.iter().any(|u| u.author == e.actor && u.site == e.site))
        .count();
    let (kept, removed) = filter_self_interactions(events.clone(), &updates);
    assert_eq!(removed, expected);
    assert_eq!(kept.len() + removed, events.len());
}

#[test]
fn unique_pairs_vs_set() {
    let (events, updates) = random_log(9, 2000);
    let edges = project_to_author_edges(&events, &updates).unwrap();
    let set: HashSet<(u32, u32)> = edges.iter().map(|d| (d.source.0, d.target.0)).collect();
    assert_eq!(unique_pair_count(&edges), set.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_order_invariant_and_well_formed(seed in 0u64..100_000) {
        let (events, updates) = random_log(seed, 300);
        let (kept, _) = filter_self_interactions(events, &updates);
        let a = project_to_author_edges(&kept, &updates).unwrap();
        let mut shuffled = kept.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let mut shuffled_updates = updates.clone();
        shuffled_updates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 2));
        let b = project_to_author_edges(&shuffled, &shuffled_updates).unwrap();
        prop_assert_eq!(multiset(&a), multiset(&b));
        for d in &a {
            prop_assert!(d.source != d.target);
            let supported = updates.iter().any(|u| u.site == d.via_site && u.author == d.target
                && (u.timestamp < d.timestamp || u.role == RoleLabel::P));
            prop_assert!(supported);
        }
    }

    #[test]
    fn self_filter_idempotent(seed in 0u64..100_000) {
        let (events, updates) = random_log(seed, 200);
        let (once, _) = filter_self_interactions(events, &updates);
        let (twice, removed) = filter_self_interactions(once.clone(), &updates);
        prop_assert_eq!(removed, 0);
        prop_assert_eq!(once, twice);
    }
}

#[test]
fn twenty_event_fixture_drops_six_self_interactions() {
    // author k owns site k for k in 0..4
    let updates: Vec<UpdateEvent> = (0..4)
        .map(|k| UpdateEvent {
            author: AuthorId(k),
            site: SiteId(k),
            update: UpdateId(k),
            timestamp: 500,
            role: RoleLabel::Unlabeled,
        })
        .collect();
    let pairs = [
        (0, 0), (1, 1), (2, 2), (3, 3), (0, 0), (1, 1),
        (0, 1), (0, 2), (0, 3), (1, 0), (1, 2), (1, 3), (2, 0), (2, 1), (2, 3), (3, 0), (3, 1), (3, 2),
        (4, 0), (5, 1),
    ];
    let events: Vec<InteractionEvent> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, s))| InteractionEvent {
            actor: AuthorId(a),
            site: SiteId(s),
            kind: InteractionKind::Guestbook,
            timestamp: Some(i as i64),
            update: None,
        })
        .collect();
    let scan = events
        .iter()
        .filter(|e| updates.iter().any(|u| u.author == e.actor && u.site == e.site))
        .count();
    let (kept, removed) = filter_self_interactions(events, &updates);
    assert_eq!((removed, scan, kept.len()), (6, 6, 14));
}
