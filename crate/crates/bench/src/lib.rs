//! In-memory fixtures for the benchmarks.

use netchoice_core::choices::{synth_generate, Feature, SynthConfig};
use netchoice_core::{AuthorId, ChoiceSet, InteractionEvent, InteractionKind, SiteId, UpdateEvent, UpdateId};
use netchoice_core::ingest::RoleLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Interaction and update logs over `n_authors` authors, one site each.
pub fn event_logs(n_events: usize, n_authors: u32, seed: u64) -> (Vec<InteractionEvent>, Vec<UpdateEvent>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_updates = (n_events / 4).max(n_authors as usize);
    let updates: Vec<UpdateEvent> = (0..n_updates)
        .map(|j| {
            let site = if j < n_authors as usize { j as u32 } else { rng.random_range(0..n_authors) };
            UpdateEvent {
                author: AuthorId(site),
                site: SiteId(site),
                update: UpdateId(j as u32),
                timestamp: 10 * j as i64,
                role: RoleLabel::Unlabeled,
            }
        })
        .collect();
    let span = 10 * n_updates as i64;
    let events = (0..n_events)
        .map(|i| {
            let t = (i as i64 * span) / n_events as i64 + 1;
            let upto = ((t / 10) as usize).clamp(1, n_updates);
            let u = &updates[rng.random_range(0..upto)];
            InteractionEvent {
                actor: AuthorId(rng.random_range(0..n_authors)),
                site: u.site,
                kind: InteractionKind::Comment,
                timestamp: Some(t.max(u.timestamp)),
                update: Some(u.update),
            }
        })
        .collect();
    (events, updates)
}

/// Synthetic choice sets with two network features.
pub fn choice_sets(n_choices: usize, seed: u64) -> ChoiceSet {
    let cfg = SynthConfig {
        beta_true: vec![1.5, -0.75],
        features: vec![Feature::IsFriendOfFriend, Feature::LogIndegree],
        n_authors: 800,
        n_choices,
        candidate_pool_size: 25,
        initial_authors: 50,
        seed,
    };
    synth_generate(&cfg).expect("valid synthetic config").0
}
