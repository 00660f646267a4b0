//! Initiations framed as discrete choices.
//!
//! Each initiation becomes one [`ChoiceInstance`]: the actual receiver plus
//! a uniform sample of other eligible authors, every alternative described
//! by the same feature vector computed on the graph state strictly before
//! the initiation.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::authors::{shared_health_condition, AuthorTable, Role};
use crate::error::{Error, Result};
use crate::graph::{Edge, NetworkState, TemporalGraph};
use crate::ids::{AuthorId, IdTables, Timestamp};
use crate::initiations::Initiation;
use crate::seeds::{rng_for, stage};

pub const DEFAULT_NEGATIVES: usize = 24;

/// Candidate features, in model column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    LogOutdegree,
    HasIndegree,
    LogIndegree,
    IsReciprocal,
    IsWeaklyConnected,
    IsFriendOfFriend,
    RoleMixed,
    RoleP,
    AuthorTypeShared,
    HealthConditionShared,
    Multisite,
    Mixedsite,
    UpdateCount,
    UpdateFrequency,
    DaysSinceMostRecentUpdate,
    DaysSinceFirstUpdate,
    StateShared,
}

impl Feature {
    pub const ALL: [Feature; 17] = [
        Feature::LogOutdegree,
        Feature::HasIndegree,
        Feature::LogIndegree,
        Feature::IsReciprocal,
        Feature::IsWeaklyConnected,
        Feature::IsFriendOfFriend,
        Feature::RoleMixed,
        Feature::RoleP,
        Feature::AuthorTypeShared,
        Feature::HealthConditionShared,
        Feature::Multisite,
        Feature::Mixedsite,
        Feature::UpdateCount,
        Feature::UpdateFrequency,
        Feature::DaysSinceMostRecentUpdate,
        Feature::DaysSinceFirstUpdate,
        Feature::StateShared,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::LogOutdegree => "censored_log(target_outdegree, min = 1)",
            Feature::HasIndegree => "target_has_indegree",
            Feature::LogIndegree => "censored_log(target_indegree, min = 1)",
            Feature::IsReciprocal => "is_reciprocal",
            Feature::IsWeaklyConnected => "is_weakly_connected",
            Feature::IsFriendOfFriend => "is_friend_of_friend",
            Feature::RoleMixed => "factor(target_author_type)mixed",
            Feature::RoleP => "factor(target_author_type)p",
            Feature::AuthorTypeShared => "is_author_type_shared",
            Feature::HealthConditionShared => "is_health_condition_shared",
            Feature::Multisite => "target_is_multisite_author",
            Feature::Mixedsite => "target_is_mixedsite_author",
            Feature::UpdateCount => "target_update_count",
            Feature::UpdateFrequency => "target_update_frequency",
            Feature::DaysSinceMostRecentUpdate => "target_days_since_most_recent_update",
            Feature::DaysSinceFirstUpdate => "target_days_since_first_update",
            Feature::StateShared => "is_state_assignment_shared",
        }
    }

    /// Short snake_case key for command lines and config files.
    pub fn key(self) -> &'static str {
        match self {
            Feature::LogOutdegree => "log_outdegree",
            Feature::HasIndegree => "has_indegree",
            Feature::LogIndegree => "log_indegree",
            Feature::IsReciprocal => "is_reciprocal",
            Feature::IsWeaklyConnected => "is_weakly_connected",
            Feature::IsFriendOfFriend => "is_friend_of_friend",
            Feature::RoleMixed => "role_mixed",
            Feature::RoleP => "role_p",
            Feature::AuthorTypeShared => "is_author_type_shared",
            Feature::HealthConditionShared => "is_health_condition_shared",
            Feature::Multisite => "is_multisite",
            Feature::Mixedsite => "is_mixedsite",
            Feature::UpdateCount => "update_count",
            Feature::UpdateFrequency => "update_frequency",
            Feature::DaysSinceMostRecentUpdate => "days_since_most_recent_update",
            Feature::DaysSinceFirstUpdate => "days_since_first_update",
            Feature::StateShared => "is_state_assignment_shared",
        }
    }

    /// Accepts the column name or the short key.
    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name || f.key() == name)
    }

    /// Depends only on the graph, not on author attributes.
    pub fn is_network(self) -> bool {
        matches!(
            self,
            Feature::LogOutdegree
                | Feature::HasIndegree
                | Feature::LogIndegree
                | Feature::IsReciprocal
                | Feature::IsWeaklyConnected
                | Feature::IsFriendOfFriend
        )
    }

    fn is_activity(self) -> bool {
        matches!(
            self,
            Feature::Multisite
                | Feature::Mixedsite
                | Feature::UpdateCount
                | Feature::UpdateFrequency
                | Feature::DaysSinceMostRecentUpdate
                | Feature::DaysSinceFirstUpdate
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    pub include_state: bool,
    pub include_health: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        FeatureFlags {
            include_state: false,
            include_health: true,
        }
    }
}

impl FeatureFlags {
    pub fn features(self) -> Vec<Feature> {
        Feature::ALL
            .into_iter()
            .filter(|f| match f {
                Feature::StateShared => self.include_state,
                Feature::HealthConditionShared => self.include_health,
                _ => true,
            })
            .collect()
    }
}

/// ln(max(x, minimum)).
pub fn censored_log(x: f64, minimum: f64) -> f64 {
    x.max(minimum).ln()
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Feature vector of `candidate` as a target for `chooser` at `t`.
///
/// `state` must hold the graph strictly before `t`.
pub fn build_features(
    features: &[Feature],
    chooser: AuthorId,
    candidate: AuthorId,
    t: Timestamp,
    state: &NetworkState,
    authors: &AuthorTable,
) -> Result<Vec<f64>> {
    if candidate.index() >= state.capacity().max(authors.len()) {
        return Err(Error::UnknownAuthor(candidate.0));
    }
    let activity = if features.iter().any(|f| f.is_activity()) {
        authors.activity_features(candidate, t)
    } else {
        Default::default()
    };
    let target_role = authors.role(candidate);
    Ok(features
        .iter()
        .map(|f| match f {
            Feature::LogOutdegree => censored_log(state.out_degree(candidate) as f64, 1.0),
            Feature::HasIndegree => flag(state.in_degree(candidate) > 0),
            Feature::LogIndegree => censored_log(state.in_degree(candidate) as f64, 1.0),
            Feature::IsReciprocal => flag(state.has_edge(candidate, chooser)),
            Feature::IsWeaklyConnected => flag(state.same_wcc(chooser, candidate)),
            Feature::IsFriendOfFriend => flag(state.is_friend_of_friend(chooser, candidate)),
            Feature::RoleMixed => flag(target_role == Some(Role::Mixed)),
            Feature::RoleP => flag(target_role == Some(Role::P)),
            Feature::AuthorTypeShared => {
                flag(target_role.is_some() && authors.role(chooser) == target_role)
            }
            Feature::HealthConditionShared => f64::from(shared_health_condition(
                authors.health_condition(chooser),
                authors.health_condition(candidate),
            )),
            Feature::Multisite => flag(activity.is_multisite),
            Feature::Mixedsite => flag(activity.is_mixedsite),
            Feature::UpdateCount => activity.update_count,
            Feature::UpdateFrequency => activity.update_frequency,
            Feature::DaysSinceMostRecentUpdate => activity.days_since_most_recent_update,
            Feature::DaysSinceFirstUpdate => activity.days_since_first_update,
            Feature::StateShared => {
                let (a, b) = (authors.state(chooser), authors.state(candidate));
                flag(a.is_some() && a == b)
            }
        })
        .collect())
}

/// One choice: alternatives with a row-major `alternatives × n_features` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceInstance {
    pub chooser: AuthorId,
    pub time: Timestamp,
    pub chosen: usize,
    pub alternatives: Vec<AuthorId>,
    pub n_features: usize,
    pub x: Vec<f64>,
}

impl ChoiceInstance {
    /// Build from explicit rows; handy for fixtures.
    pub fn from_rows(chosen: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if rows.len() < 2 {
            return Err(Error::Invalid("a choice needs at least two alternatives".into()));
        }
        if chosen >= rows.len() || rows.iter().any(|r| r.len() != n_features) {
            return Err(Error::Invalid("ragged rows or chosen index out of range".into()));
        }
        Ok(ChoiceInstance {
            chooser: AuthorId(0),
            time: 0,
            chosen,
            alternatives: (0..rows.len() as u32).map(AuthorId).collect(),
            n_features,
            x: rows.concat(),
        })
    }

    pub fn n_alternatives(&self) -> usize {
        self.alternatives.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.x[k * self.n_features..(k + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.n_features.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.alternatives.len() < 2 {
            return Err(Error::Invalid("instance has fewer than two alternatives".into()));
        }
        if self.chosen >= self.alternatives.len() {
            return Err(Error::Invalid("chosen index out of range".into()));
        }
        if self.x.len() != self.alternatives.len() * self.n_features {
            return Err(Error::Invalid("feature matrix shape mismatch".into()));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite feature value".into()));
        }
        Ok(())
    }
}

/// Instances sharing one feature layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChoiceSet {
    pub feature_names: Vec<String>,
    pub instances: Vec<ChoiceInstance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_negatives: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_negatives: DEFAULT_NEGATIVES,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn new(n_negatives: usize, seed: u64) -> Result<Self> {
        if n_negatives == 0 {
            return Err(Error::Invalid("n_negatives must be at least 1".into()));
        }
        Ok(SamplerConfig { n_negatives, seed })
    }
}

/// Uniform sample without replacement from the eligible members of
/// `universe`, via a lazily materialised Fisher–Yates shuffle.
///
/// The output is a prefix of one random permutation of the eligible set,
/// so for a fixed RNG state the `n`-sample is a prefix of the `n+1`-sample.
/// `eligible_count` lets the walk stop once every eligible element is found.
pub fn sample_eligible<F>(
    universe: &[AuthorId],
    eligible: F,
    eligible_count: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<AuthorId>
where
    F: Fn(AuthorId) -> bool,
{
    let target = n.min(eligible_count);
    let mut out = Vec::with_capacity(target);
    let mut swapped: HashMap<usize, usize> = HashMap::new();
    let len = universe.len();
    let mut i = 0;
    while out.len() < target && i < len {
        let j = rng.random_range(i..len);
        let at_j = swapped.get(&j).copied().unwrap_or(j);
        let at_i = swapped.get(&i).copied().unwrap_or(i);
        swapped.insert(j, at_i);
        let candidate = universe[at_j];
        if eligible(candidate) {
            out.push(candidate);
        }
        i += 1;
    }
    out
}

/// Uniform sample of `n` from `pool` (everything if `pool.len() <= n`).
pub fn sample_negatives(pool: &[AuthorId], n: usize, seed: u64) -> Vec<AuthorId> {
    let mut rng = rng_for(seed, 0);
    sample_eligible(pool, |_| true, pool.len(), n, &mut rng)
}

/// Authors activated before the cursor, minus the chooser and its existing
/// out-neighbors. Full enumeration; the sampler avoids materialising this.
pub fn eligible_candidates(state: &NetworkState, chooser: AuthorId) -> Vec<AuthorId> {
    state
        .activated()
        .iter()
        .copied()
        .filter(|&c| c != chooser && !state.has_edge(chooser, c))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SkipReason {
    /// No eligible author besides the receiver.
    NoNegatives,
    /// The receiver was not yet active strictly before the initiation.
    ReceiverNotActive,
}

#[derive(Debug, Clone, Default)]
pub struct ChoiceBuild {
    pub set: ChoiceSet,
    /// `(index into the initiation list, reason)`
    pub skipped: Vec<(usize, SkipReason)>,
}

/// Replay initiations chronologically and emit one instance per initiation
/// that has at least one eligible negative. The chosen alternative is
/// always at index 0.
pub fn build_choice_sets(
    graph: &mut TemporalGraph,
    initiations: &[Initiation],
    authors: &AuthorTable,
    sampler: SamplerConfig,
    features: &[Feature],
) -> Result<ChoiceBuild> {
    graph.reset();
    let mut order: Vec<usize> = (0..initiations.len()).collect();
    order.sort_by_key(|&i| (initiations[i].time, initiations[i].initiator, initiations[i].receiver));
    let mut build = ChoiceBuild {
        set: ChoiceSet {
            feature_names: features.iter().map(|f| f.name().to_string()).collect(),
            instances: Vec::new(),
        },
        skipped: Vec::new(),
    };
    for idx in order {
        let init = &initiations[idx];
        graph.advance_to(init.time)?;
        let state = graph.state();
        let (chooser, chosen) = (init.initiator, init.receiver);
        if !state.is_activated(chosen) || state.has_edge(chooser, chosen) {
            log::debug!("skipping initiation {idx}: receiver not eligible");
            build.skipped.push((idx, SkipReason::ReceiverNotActive));
            continue;
        }
        let pool_size = state.n_activated()
            - usize::from(state.is_activated(chooser))
            - state.out_degree(chooser)
            - 1;
        if pool_size == 0 {
            log::debug!("skipping initiation {idx}: no negatives");
            build.skipped.push((idx, SkipReason::NoNegatives));
            continue;
        }
        let mut rng = rng_for(sampler.seed ^ stage::SAMPLE, idx as u64);
        let negatives = sample_eligible(
            state.activated(),
            |c| c != chooser && c != chosen && !state.has_edge(chooser, c),
            pool_size,
            sampler.n_negatives,
            &mut rng,
        );
        let mut alternatives = Vec::with_capacity(negatives.len() + 1);
        alternatives.push(chosen);
        alternatives.extend(negatives);
        let rows: Vec<Vec<f64>> = alternatives
            .par_iter()
            .with_min_len(16)
            .map(|&c| build_features(features, chooser, c, init.time, state, authors))
            .collect::<Result<_>>()?;
        build.set.instances.push(ChoiceInstance {
            chooser,
            time: init.time,
            chosen: 0,
            alternatives,
            n_features: features.len(),
            x: rows.concat(),
        });
    }
    Ok(build)
}

/// Half-open calendar window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self> {
        if start >= end {
            return Err(Error::Invalid(format!("window start {start} is not before end {end}")));
        }
        Ok(TimeWindow { start, end })
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }

    /// Calendar point at `fraction` of the span.
    pub fn split_point(&self, fraction: f64) -> Timestamp {
        self.start + ((self.end - self.start) as f64 * fraction).round() as Timestamp
    }
}

/// Calendar split: train is `[start, boundary)`, test `[boundary, end)`.
/// Instances outside the window are in neither.
pub fn temporal_split(
    instances: &[ChoiceInstance],
    window: TimeWindow,
    train_fraction: f64,
) -> Result<(Vec<ChoiceInstance>, Vec<ChoiceInstance>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Invalid("train fraction must lie in (0, 1)".into()));
    }
    let boundary = window.split_point(train_fraction);
    let (train, rest): (Vec<_>, Vec<_>) = instances
        .iter()
        .filter(|i| window.contains(i.time))
        .cloned()
        .partition(|i| i.time < boundary);
    Ok((train, rest))
}

#[derive(Serialize)]
struct InstanceLine<'a> {
    chooser: &'a str,
    time: Timestamp,
    alternatives: Vec<&'a str>,
    chosen: usize,
    #[serde(rename = "X")]
    x: Vec<&'a [f64]>,
    feature_names: &'a [String],
}

#[derive(Deserialize)]
struct InstanceLineOwned {
    chooser: String,
    time: Timestamp,
    alternatives: Vec<String>,
    chosen: usize,
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    feature_names: Vec<String>,
}

/// JSON-lines, one instance per line.
pub fn write_choice_set<W: Write>(mut out: W, set: &ChoiceSet, ids: &IdTables) -> std::io::Result<()> {
    for inst in &set.instances {
        let line = InstanceLine {
            chooser: ids.author_name(inst.chooser),
            time: inst.time,
            alternatives: inst.alternatives.iter().map(|&a| ids.author_name(a)).collect(),
            chosen: inst.chosen,
            x: inst.rows().collect(),
            feature_names: &set.feature_names,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_choice_set<R: BufRead>(reader: R, ids: &mut IdTables) -> Result<ChoiceSet> {
    let mut set = ChoiceSet::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<choices>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = |m: String| Error::Schema {
            path: "<choices>".into(),
            line: i as u64 + 1,
            field: String::new(),
            message: m,
        };
        let parsed: InstanceLineOwned = serde_json::from_str(trimmed).map_err(|e| bad(e.to_string()))?;
        if set.instances.is_empty() && set.feature_names.is_empty() {
            set.feature_names = parsed.feature_names.clone();
        } else if parsed.feature_names != set.feature_names {
            return Err(bad("feature names differ from the first instance".into()));
        }
        let inst = ChoiceInstance {
            chooser: ids.author(&parsed.chooser),
            time: parsed.time,
            chosen: parsed.chosen,
            alternatives: parsed.alternatives.iter().map(|a| ids.author(a)).collect(),
            n_features: set.feature_names.len(),
            x: parsed.x.concat(),
        };
        inst.validate().map_err(|e| bad(e.to_string()))?;
        set.instances.push(inst);
    }
    Ok(set)
}

/// Parameters of the synthetic growth process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub beta_true: Vec<f64>,
    /// Network features the coefficients apply to.
    pub features: Vec<Feature>,
    pub n_authors: usize,
    pub n_choices: usize,
    /// Alternatives offered per choice, chosen one included.
    pub candidate_pool_size: usize,
    pub initial_authors: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta_true.len() != self.features.len() {
            return Err(Error::Invalid("beta_true and features differ in length".into()));
        }
        if let Some(f) = self.features.iter().find(|f| !f.is_network()) {
            return Err(Error::Invalid(format!("synthetic growth supports network features only, got `{}`", f.name())));
        }
        if self.candidate_pool_size < 2 {
            return Err(Error::Invalid("candidate pool must hold at least two authors".into()));
        }
        if self.initial_authors < 2 || self.initial_authors > self.n_authors {
            return Err(Error::Invalid("need 2 <= initial_authors <= n_authors".into()));
        }
        Ok(())
    }
}

/// Seconds between synthetic choices.
pub const SYNTH_STEP: Timestamp = 60;

/// Grow a network one choice at a time. At each step a uniformly drawn
/// active author sees a uniform pool of eligible candidates and picks one
/// with softmax probabilities `exp(β·x)`. Returns the instances and the
/// graph of the chosen edges (with activation times) for replay.
pub fn synth_generate(config: &SynthConfig) -> Result<(ChoiceSet, TemporalGraph)> {
    config.validate()?;
    let mut rng = rng_for(config.seed ^ stage::SYNTH_CHOICES, 0);
    let authors = AuthorTable::empty();
    let mut state = NetworkState::new(config.n_authors);
    let mut activity = Vec::with_capacity(config.n_authors);
    let mut edges = Vec::with_capacity(config.n_choices);
    let mut set = ChoiceSet {
        feature_names: config.features.iter().map(|f| f.name().to_string()).collect(),
        instances: Vec::with_capacity(config.n_choices),
    };
    let growth = (config.n_authors - config.initial_authors) as f64 / config.n_choices.max(1) as f64;
    let max_steps = config.n_choices.saturating_mul(10).max(10);
    let mut next_author = 0usize;
    let mut step = 0usize;
    while set.instances.len() < config.n_choices && step < max_steps {
        let t = (step as Timestamp + 1) * SYNTH_STEP;
        let want = (config.initial_authors + (growth * step as f64) as usize).min(config.n_authors);
        while next_author < want {
            let a = AuthorId(next_author as u32);
            state.activate(a);
            activity.push((a, t - 1));
            next_author += 1;
        }
        step += 1;

        let active = state.activated();
        let chooser = active[rng.random_range(0..active.len())];
        let pool_size = active.len() - 1 - state.out_degree(chooser);
        if pool_size < 2 {
            continue;
        }
        let pool = sample_eligible(
            active,
            |c| c != chooser && !state.has_edge(chooser, c),
            pool_size,
            config.candidate_pool_size,
            &mut rng,
        );
        let rows: Vec<Vec<f64>> = pool
            .iter()
            .map(|&c| build_features(&config.features, chooser, c, t, &state, &authors))
            .collect::<Result<_>>()?;
        let utilities: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&config.beta_true).map(|(x, b)| x * b).sum())
            .collect();
        let max_u = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = utilities.iter().map(|u| (u - max_u).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut draw = rng.random::<f64>() * total;
        let mut chosen = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if draw < *w {
                chosen = k;
                break;
            }
            draw -= w;
        }
        let receiver = pool[chosen];
        state.add_edge(chooser, receiver)?;
        edges.push(Edge {
            source: chooser,
            target: receiver,
            first_time: t,
            interaction_count: 1,
        });
        set.instances.push(ChoiceInstance {
            chooser,
            time: t,
            chosen,
            alternatives: pool,
            n_features: config.features.len(),
            x: rows.concat(),
        });
    }
    let graph = TemporalGraph::from_edges(edges, activity);
    Ok((set, graph))
}
