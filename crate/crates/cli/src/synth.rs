//! Synthetic event logs and choice sets.

use std::io::Write;

use netchoice_core::choices::{synth_generate, write_choice_set};
use netchoice_core::seeds::{rng_for, stage};
use netchoice_core::{Feature, IdTables, SynthConfig, Timestamp};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigHasher, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::OutDir;
use crate::{SynthArgs, SynthKind};

/// 2014-01-01T00:00:00Z.
const EPOCH: Timestamp = 1_388_534_400;
/// Two and a half years.
const SPAN: Timestamp = 913 * 86_400;

const CONDITIONS: [&str; 6] = ["Cancer", "Heart", "Injury", "Transplant", "Condition Unknown", "None"];
const STATES: [&str; 8] = ["MN", "WI", "IA", "CA", "TX", "NY", "FL", "OH"];

pub fn run(cfg: &RunConfig, args: &SynthArgs) -> CliResult<()> {
    match args.kind {
        SynthKind::Events => events(cfg, args),
        SynthKind::Choices => choices(cfg, args),
    }
}

fn pad(prefix: char, i: usize, width: usize) -> String {
    format!("{prefix}{i:0width$}")
}

fn digits(n: usize) -> usize {
    n.max(1).to_string().len()
}

/// Index skewed toward 0, so a few authors and sites draw most activity.
fn skewed(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let u: f64 = rng.random();
    ((u * u * n as f64) as usize).min(n - 1)
}

#[derive(Serialize)]
struct EventsSummary {
    seed: u64,
    authors: usize,
    sites: usize,
    updates: usize,
    interactions: usize,
    geo_posts: usize,
}

/// Streams four input files; memory does not grow with `--events`.
fn events(cfg: &RunConfig, args: &SynthArgs) -> CliResult<()> {
    let n_events = args.events;
    let n_authors = args.authors.unwrap_or((n_events / 50).max(100));
    if n_authors < 2 {
        return Err(CliError::Validation("synthetic logs need at least two authors".into()));
    }
    let n_sites = n_authors;
    let n_updates = (n_events / 4).max(n_sites);
    let hash = ConfigHasher::new("synth", cfg)
        .param("kind", "events")
        .param("events", n_events)
        .param("authors", n_authors)
        .finish();
    let mut rng = rng_for(cfg.seed ^ stage::SYNTH_EVENTS, 0);
    let (aw, sw, uw) = (digits(n_authors), digits(n_sites), digits(n_updates));
    // site owner is the author with the same index; every tenth site has a co-author
    let co_author: Vec<Option<usize>> = (0..n_sites)
        .map(|s| (s % 10 == 3).then(|| (s + 1 + rng.random_range(0..n_authors - 1)) % n_authors))
        .collect();
    let update_time = |j: usize| EPOCH + (j as f64 * SPAN as f64 / n_updates as f64) as Timestamp;
    // update j is posted on site j for the first n_sites updates, so every site exists early
    let mut update_site: Vec<u32> = Vec::with_capacity(n_updates);

    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    let mut created = vec![None; n_sites];
    out.stamped("updates.csv", |w| {
        writeln!(w, "author_id,site_id,update_id,timestamp,role_label")?;
        for j in 0..n_updates {
            let site = if j < n_sites { j } else { skewed(&mut rng, n_sites) };
            let author = match co_author[site] {
                Some(c) if rng.random_bool(0.4) => c,
                _ => site,
            };
            let t = update_time(j);
            created[site].get_or_insert(t);
            let label = match (author % 3, rng.random::<f64>()) {
                (0, u) if u < 0.85 => "P",
                (1, u) if u < 0.85 => "CG",
                (2, u) if u < 0.4 => "P",
                (2, u) if u < 0.8 => "CG",
                (_, u) if u < 0.93 => "unlabeled",
                (0, _) => "CG",
                _ => "P",
            };
            update_site.push(site as u32);
            writeln!(w, "{},{},{},{},{}", pad('a', author, aw), pad('s', site, sw), pad('u', j, uw), t, label)?;
        }
        Ok(())
    })?;

    out.stamped("interactions.csv", |w| {
        writeln!(w, "actor_id,site_id,kind,timestamp,update_id")?;
        for i in 0..n_events {
            let t = EPOCH + (i as f64 * SPAN as f64 / n_events as f64) as Timestamp;
            let actor = skewed(&mut rng, n_authors);
            // updates published strictly before t
            let published = ((t - EPOCH) as f64 * n_updates as f64 / SPAN as f64).ceil() as usize;
            let published = published.min(n_updates);
            let kind: f64 = rng.random();
            if published == 0 || kind < 0.15 {
                let site = skewed(&mut rng, n_sites);
                writeln!(w, "{},{},guestbook,{},", pad('a', actor, aw), pad('s', site, sw), t)?;
            } else {
                // recent updates draw most responses
                let back = skewed(&mut rng, published.min(5_000));
                let j = published - 1 - back;
                let site = update_site[j] as usize;
                if kind < 0.4 {
                    writeln!(w, "{},{},amp,,{}", pad('a', actor, aw), pad('s', site, sw), pad('u', j, uw))?;
                } else {
                    writeln!(w, "{},{},comment,{},{}", pad('a', actor, aw), pad('s', site, sw), t, pad('u', j, uw))?;
                }
            }
        }
        Ok(())
    })?;

    out.stamped("sites.csv", |w| {
        writeln!(w, "site_id,created_at,health_condition")?;
        for (s, c) in created.iter().enumerate() {
            let cond = if s % 7 == 6 { "" } else { CONDITIONS[s % CONDITIONS.len()] };
            writeln!(w, "{},{},{}", pad('s', s, sw), c.unwrap_or(EPOCH), cond)?;
        }
        Ok(())
    })?;

    let mut geo_posts = 0;
    out.stamped("geo.csv", |w| {
        writeln!(w, "author_id,timestamp,state")?;
        for a in (0..n_authors).step_by(5) {
            let home = STATES[a % STATES.len()];
            let posts = rng.random_range(4..20);
            for k in 0..posts {
                let state = if rng.random_bool(0.75) { home } else { STATES[rng.random_range(0..STATES.len())] };
                writeln!(w, "{},{},{}", pad('a', a, aw), EPOCH + k * 86_400, state)?;
                geo_posts += 1;
            }
        }
        Ok(())
    })?;

    let summary = EventsSummary {
        seed: cfg.seed,
        authors: n_authors,
        sites: n_sites,
        updates: n_updates,
        interactions: n_events,
        geo_posts,
    };
    out.json("synth_events.json", &summary)?;
    eprintln!("synth: {n_events} interactions, {n_updates} updates over {n_authors} authors");
    Ok(())
}

#[derive(Serialize)]
struct ChoicesTruth<'a> {
    seed: u64,
    features: Vec<&'static str>,
    beta_true: &'a [f64],
    authors: usize,
    instances: usize,
    pool: usize,
    initial: usize,
}

fn choices(cfg: &RunConfig, args: &SynthArgs) -> CliResult<()> {
    let features = args
        .features
        .iter()
        .map(|n| Feature::from_name(n).ok_or_else(|| CliError::Validation(format!("unknown feature `{n}`"))))
        .collect::<CliResult<Vec<_>>>()?;
    let n_authors = args.authors.unwrap_or(800);
    let beta: Vec<String> = args.beta.iter().map(|b| b.to_string()).collect();
    let names: Vec<&str> = features.iter().map(|f| f.key()).collect();
    let hash = ConfigHasher::new("synth", cfg)
        .param("kind", "choices")
        .param("beta", beta.join(","))
        .param("features", names.join(","))
        .param("authors", n_authors)
        .param("choices", args.choices)
        .param("pool", args.pool)
        .param("initial", args.initial)
        .finish();
    let config = SynthConfig {
        beta_true: args.beta.clone(),
        features: features.clone(),
        n_authors,
        n_choices: args.choices,
        candidate_pool_size: args.pool,
        initial_authors: args.initial,
        seed: cfg.seed,
    };
    let (set, _) = synth_generate(&config)?;
    let mut ids = IdTables::new();
    let width = digits(n_authors);
    for a in 0..n_authors {
        ids.author(&pad('a', a, width));
    }
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.stamped("choices.jsonl", |w| write_choice_set(w, &set, &ids))?;
    out.json(
        "synth_truth.json",
        &ChoicesTruth {
            seed: cfg.seed,
            features: features.iter().map(|f| f.key()).collect(),
            beta_true: &args.beta,
            authors: n_authors,
            instances: set.instances.len(),
            pool: args.pool,
            initial: args.initial,
        },
    )?;
    eprintln!("synth: {} choice instances", set.instances.len());
    Ok(())
}
