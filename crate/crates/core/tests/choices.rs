use std::collections::{BTreeSet, HashMap};

use netchoice_core::authors::{aggregate_role, AuthorTable, GeoPost, LabelCounts, Role, SiteMeta};
use netchoice_core::choices::*;
use netchoice_core::graph::{Edge, TemporalGraph};
use netchoice_core::ids::{AuthorId, SiteId, Timestamp, UpdateId, SECONDS_PER_DAY};
use netchoice_core::ingest::{DirectedInteraction, InteractionKind, RoleLabel, UpdateEvent};
use netchoice_core::initiations::classify_initiations;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: u32 = 50;

struct World {
    updates: Vec<UpdateEvent>,
    interactions: Vec<DirectedInteraction>,
    authors: AuthorTable,
}

fn world(seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let day = SECONDS_PER_DAY as i64;
    let labels = [RoleLabel::P, RoleLabel::CG, RoleLabel::Unlabeled];
    let updates: Vec<UpdateEvent> = (0..300)
        .map(|i| UpdateEvent {
            author: AuthorId(rng.random_range(0..N)),
            site: SiteId(rng.random_range(0..20)),
            update: UpdateId(i),
            timestamp: rng.random_range(0..200) * day,
            role: labels[rng.random_range(0..3)],
        })
        .collect();
    let interactions: Vec<DirectedInteraction> = (0..400)
        .map(|_| DirectedInteraction {
            source: AuthorId(rng.random_range(0..N)),
            target: AuthorId(rng.random_range(0..N)),
            timestamp: rng.random_range(0..200) * day + rng.random_range(0..3),
            kind: InteractionKind::Comment,
            via_site: SiteId(0),
        })
        .filter(|d| d.source != d.target)
        .collect();
    let conditions = [None, Some("Cancer"), Some("Stroke"), Some("None")];
    let sites: Vec<SiteMeta> = (0..20)
        .map(|s| SiteMeta {
            site: SiteId(s),
            created_at: Some(0),
            health_condition: conditions[rng.random_range(0..4)].map(str::to_string),
        })
        .collect();
    let geo: Vec<GeoPost> = (0..N)
        .flat_map(|a| {
            let state = ["MN", "WI"][rng.random_range(0..2)].to_string();
            let k = rng.random_range(0..14);
            (0..k).map(move |i| GeoPost {
                author: AuthorId(a),
                timestamp: i,
                state: Some(state.clone()),
            })
        })
        .collect();
    let authors = AuthorTable::build(N as usize, &updates, &sites, &geo);
    World {
        updates,
        interactions,
        authors,
    }
}

/// Every feature recomputed from raw logs, with no graph structure.
fn oracle_features(w: &World, edges: &[Edge], chooser: AuthorId, cand: AuthorId, t: Timestamp) -> Vec<f64> {
    let prior: Vec<&Edge> = edges.iter().filter(|e| e.first_time < t).collect();
    let out = prior.iter().filter(|e| e.source == cand).count() as f64;
    let inn = prior.iter().filter(|e| e.target == cand).count() as f64;
    let has = |a: AuthorId, b: AuthorId| prior.iter().any(|e| e.source == a && e.target == b);
    let linked = |a: AuthorId, b: AuthorId| has(a, b) || has(b, a);
    // undirected reachability by repeated relaxation
    let mut reach: BTreeSet<AuthorId> = BTreeSet::from([chooser]);
    loop {
        let before = reach.len();
        for e in &prior {
            if reach.contains(&e.source) || reach.contains(&e.target) {
                reach.insert(e.source);
                reach.insert(e.target);
            }
        }
        if reach.len() == before {
            break;
        }
    }
    let fof = chooser != cand && (0..N).map(AuthorId).any(|c| c != chooser && c != cand && linked(chooser, c) && linked(cand, c));
    let role_of = |a: AuthorId| {
        let mut counts = LabelCounts::default();
        for u in w.updates.iter().filter(|u| u.author == a) {
            counts.add(u.role);
        }
        aggregate_role(counts).ok()
    };
    let (rc, rt) = (role_of(chooser), role_of(cand));
    let mine: Vec<&UpdateEvent> = w.updates.iter().filter(|u| u.author == cand && u.timestamp < t).collect();
    let count = mine.len() as f64;
    let (mut freq, mut recent, mut first_days, mut multi, mut mixed) = (0.0, 0.0, 0.0, false, false);
    if let (Some(first), Some(last)) = (mine.iter().map(|u| u.timestamp).min(), mine.iter().map(|u| u.timestamp).max()) {
        let months = ((t - first) as f64).max(SECONDS_PER_DAY) / (30.44 * SECONDS_PER_DAY);
        freq = count / months;
        recent = (t - last) as f64 / SECONDS_PER_DAY;
        first_days = (t - first) as f64 / SECONDS_PER_DAY;
        let sites: BTreeSet<SiteId> = mine.iter().map(|u| u.site).collect();
        multi = sites.len() >= 2;
        mixed = sites.iter().any(|&s| {
            w.updates
                .iter()
                .filter(|u| u.site == s && u.timestamp < t)
                .map(|u| u.author)
                .collect::<BTreeSet<_>>()
                .len()
                >= 2
        });
    }
    let hc = |a: AuthorId| w.authors.health_condition(a).filter(|c| *c != "None");
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    vec![
        out.max(1.0).ln(),
        b(inn > 0.0),
        inn.max(1.0).ln(),
        b(has(cand, chooser)),
        b(chooser == cand || reach.contains(&cand) && prior.iter().any(|e| e.source == chooser || e.target == chooser)),
        b(fof),
        b(rt == Some(Role::Mixed)),
        b(rt == Some(Role::P)),
        b(rt.is_some() && rt == rc),
        b(hc(chooser).is_some() && hc(chooser) == hc(cand)),
        b(multi),
        b(mixed),
        count,
        freq,
        recent,
        first_days,
        b(w.authors.state(chooser).is_some() && w.authors.state(chooser) == w.authors.state(cand)),
    ]
}

#[test]
fn features_match_brute_force_on_random_triples() {
    let w = world(11);
    let mut g = TemporalGraph::build_with_activity(&w.interactions, &w.updates);
    let edges = g.edges().to_vec();
    let features = FeatureFlags {
        include_state: true,
        include_health: true,
    }
    .features();
    assert_eq!(features.len(), 17);
    assert_eq!(FeatureFlags::default().features().len(), 16);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut triples: Vec<(u32, u32, i64)> = (0..100)
        .map(|_| (rng.random_range(0..N), rng.random_range(0..N), rng.random_range(0..210 * 86_400)))
        .collect();
    triples.sort_by_key(|t| t.2);
    for (a, c, t) in triples {
        g.advance_to(t).unwrap();
        let got = build_features(&features, AuthorId(a), AuthorId(c), t, g.state(), &w.authors).unwrap();
        let want = oracle_features(&w, &edges, AuthorId(a), AuthorId(c), t);
        for (k, (x, y)) in got.iter().zip(&want).enumerate() {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{} at ({a},{c},{t}): {x} vs {y}", features[k].name());
        }
    }
    assert!(build_features(&features, AuthorId(0), AuthorId(10_000), 0, g.state(), &w.authors).is_err());
}

fn choice_build(seed: u64) -> (World, TemporalGraph, Vec<netchoice_core::Initiation>, ChoiceBuild) {
    let w = world(seed);
    let mut g = TemporalGraph::build_with_activity(&w.interactions, &w.updates);
    let inits = classify_initiations(&g);
    let sampler = SamplerConfig::new(8, seed).unwrap();
    let build = build_choice_sets(&mut g, &inits, &w.authors, sampler, &FeatureFlags::default().features()).unwrap();
    (w, g, inits, build)
}

#[test]
fn replay_has_no_leakage_and_chosen_is_eligible() {
    let (w, mut g, _, build) = choice_build(21);
    assert!(!build.set.instances.is_empty());
    let features = FeatureFlags::default().features();
    g.reset();
    for inst in &build.set.instances {
        inst.validate().unwrap();
        g.advance_to(inst.time).unwrap();
        let eligible = eligible_candidates(g.state(), inst.chooser);
        assert!(eligible.contains(&inst.alternatives[inst.chosen]));
        assert!(inst.alternatives.iter().all(|a| eligible.contains(a)));
        let distinct: BTreeSet<_> = inst.alternatives.iter().collect();
        assert_eq!(distinct.len(), inst.alternatives.len());
        for (k, &c) in inst.alternatives.iter().enumerate() {
            let row = build_features(&features, inst.chooser, c, inst.time, g.state(), &w.authors).unwrap();
            assert_eq!(row.as_slice(), inst.row(k));
        }
    }
}

#[test]
fn instance_count_matches_counting_oracle() {
    let (w, g, inits, build) = choice_build(31);
    let edges = g.edges();
    let mut activation: HashMap<AuthorId, Timestamp> = HashMap::new();
    for (a, t) in w.updates.iter().map(|u| (u.author, u.timestamp)).chain(edges.iter().flat_map(|e| [(e.source, e.first_time), (e.target, e.first_time)])) {
        let cur = activation.entry(a).or_insert(t);
        *cur = (*cur).min(t);
    }
    let expected = inits
        .iter()
        .filter(|i| {
            let active = |a: &AuthorId| activation.get(a).is_some_and(|&t| t < i.time);
            let linked = |b: AuthorId| edges.iter().any(|e| e.source == i.initiator && e.target == b && e.first_time < i.time);
            let negatives = activation
                .keys()
                .filter(|&&c| active(&c) && c != i.initiator && c != i.receiver && !linked(c))
                .count();
            active(&i.receiver) && negatives >= 1
        })
        .count();
    assert_eq!(build.set.instances.len(), expected);
    assert_eq!(build.set.instances.len() + build.skipped.len(), inits.len());
    let (_, _, _, again) = choice_build(31);
    assert_eq!(again.set, build.set);
}

#[test]
fn sampling_is_uniform_over_1e5_draws() {
    let pool: Vec<AuthorId> = (0..10).map(AuthorId).collect();
    let draws = 100_000;
    let mut hits = [0u32; 10];
    let mut firsts = [0u32; 10];
    for seed in 0..draws {
        let s = sample_negatives(&pool, 3, seed);
        for a in &s {
            hits[a.index()] += 1;
        }
        firsts[s[0].index()] += 1;
    }
    let n = draws as f64;
    for (p, counts) in [(0.3, &hits), (0.1, &firsts)] {
        let sigma = (n * p * (1.0 - p)).sqrt();
        for &c in counts.iter() {
            assert!((c as f64 - n * p).abs() < 3.0 * sigma, "count {c} vs {}", n * p);
        }
    }
    assert_eq!(sample_negatives(&pool[..3], 5, 1).len(), 3);
    assert_eq!(sample_negatives(&pool, 4, 9), sample_negatives(&pool, 4, 9));
}

fn synth(beta: f64, feature: Feature, pool: usize, n: usize, seed: u64) -> ChoiceSet {
    let cfg = SynthConfig {
        beta_true: vec![beta],
        features: vec![feature],
        n_authors: 400,
        n_choices: n,
        candidate_pool_size: pool,
        initial_authors: 50,
        seed,
    };
    synth_generate(&cfg).unwrap().0
}

#[test]
fn synth_zero_beta_is_uniform_over_alternatives() {
    let set = synth(0.0, Feature::LogIndegree, 5, 5000, 3);
    let full: Vec<_> = set.instances.iter().filter(|i| i.n_alternatives() == 5).collect();
    let n = full.len() as f64;
    assert!(n > 4000.0);
    let sigma = (n * 0.2 * 0.8).sqrt();
    for k in 0..5 {
        let c = full.iter().filter(|i| i.chosen == k).count() as f64;
        assert!((c - n * 0.2).abs() < 3.0 * sigma, "slot {k}: {c}");
    }
    assert_eq!(synth(0.0, Feature::LogIndegree, 5, 200, 3), synth(0.0, Feature::LogIndegree, 5, 200, 3));
}

#[test]
fn strong_reciprocal_weight_raises_reciprocated_share() {
    let share = |set: &ChoiceSet| {
        let r = set.instances.iter().filter(|i| i.row(i.chosen)[0] == 1.0).count();
        r as f64 / set.instances.len() as f64
    };
    for seed in 0..3 {
        let base = share(&synth(0.0, Feature::IsReciprocal, 10, 2000, seed));
        let strong = share(&synth(4.0, Feature::IsReciprocal, 10, 2000, seed));
        assert!(strong > base, "seed {seed}: {strong} vs {base}");
    }
}

#[test]
fn temporal_split_matches_filter_oracle() {
    let (_, _, _, build) = choice_build(41);
    let times: Vec<Timestamp> = build.set.instances.iter().map(|i| i.time).collect();
    let (lo, hi) = (*times.iter().min().unwrap(), *times.iter().max().unwrap());
    let window = TimeWindow::new(lo + 86_400, hi).unwrap();
    let boundary = window.start + ((window.end - window.start) as f64 * 0.8).round() as i64;
    let (train, test) = temporal_split(&build.set.instances, window, 0.8).unwrap();
    let want_train: Vec<_> = build.set.instances.iter().filter(|i| i.time >= window.start && i.time < boundary).cloned().collect();
    let want_test: Vec<_> = build.set.instances.iter().filter(|i| i.time >= boundary && i.time < window.end).cloned().collect();
    assert_eq!(train, want_train);
    assert_eq!(test, want_test);
    assert!(temporal_split(&build.set.instances, window, 1.0).is_err());
    assert!(TimeWindow::new(5, 5).is_err());
}

proptest! {
    #[test]
    fn sample_is_permutation_prefix(len in 0u32..200, n in 0usize..60, seed in any::<u64>()) {
        let pool: Vec<AuthorId> = (0..len).map(AuthorId).collect();
        let a = sample_negatives(&pool, n, seed);
        let b = sample_negatives(&pool, n + 1, seed);
        prop_assert_eq!(a.len(), n.min(pool.len()));
        prop_assert_eq!(&b[..a.len()], &a[..]);
        let distinct: BTreeSet<_> = b.iter().collect();
        prop_assert_eq!(distinct.len(), b.len());
    }

    #[test]
    fn choice_set_json_round_trips(seed in 0u64..50) {
        let (_, _, _, build) = choice_build(seed);
        let mut ids = netchoice_core::IdTables::default();
        for a in 0..N {
            ids.authors.intern(&format!("a{a:03}"));
        }
        let mut buf = Vec::new();
        write_choice_set(&mut buf, &build.set, &ids).unwrap();
        let back = read_choice_set(buf.as_slice(), &mut ids).unwrap();
        prop_assert_eq!(back, build.set);
    }
}
