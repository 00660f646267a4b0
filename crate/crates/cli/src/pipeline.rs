//! Stages shared by several subcommands.

use std::time::Instant;

use netchoice_core::authors::{load_geo_posts, load_sites, AuthorTable};
use netchoice_core::choices::{build_choice_sets, ChoiceBuild, SamplerConfig};
use netchoice_core::ingest::{unique_pair_count, DirectedInteraction};
use netchoice_core::initiations::classify_initiations;
use netchoice_core::{Dataset, Initiation, TemporalGraph};
use serde::Serialize;

use crate::config::{ConfigHasher, RunConfig};
use crate::error::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub interactions_loaded: usize,
    pub duplicate_interactions: usize,
    pub updates: usize,
    pub duplicate_updates: usize,
    pub self_interactions_removed: usize,
    pub interactions_kept: usize,
    pub authors: usize,
    pub sites: usize,
}

/// Load both logs, resolve amp times and drop self-interactions.
pub fn ingest(cfg: &RunConfig) -> CliResult<(Dataset, IngestSummary)> {
    let started = Instant::now();
    let mut ds = Dataset::load(cfg.require_input("interactions")?, cfg.require_input("updates")?)?;
    let loaded = ds.interactions.len();
    ds.resolve_amp_timestamps()?;
    let removed = ds.filter_self_interactions();
    log::info!("ingest: {loaded} interactions in {:.2?}", started.elapsed());
    let summary = IngestSummary {
        interactions_loaded: loaded,
        duplicate_interactions: ds.duplicate_interactions,
        updates: ds.updates.len(),
        duplicate_updates: ds.duplicate_updates,
        self_interactions_removed: removed,
        interactions_kept: ds.interactions.len(),
        authors: ds.ids.n_authors(),
        sites: ds.ids.sites.len(),
    };
    Ok((ds, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectSummary {
    pub site_interactions: usize,
    pub author_interactions: usize,
    pub unique_pairs: usize,
}

pub fn project(ds: &Dataset) -> CliResult<(Vec<DirectedInteraction>, ProjectSummary)> {
    let directed = ds.project()?;
    let summary = ProjectSummary {
        site_interactions: ds.interactions.len(),
        author_interactions: directed.len(),
        unique_pairs: unique_pair_count(&directed),
    };
    Ok((directed, summary))
}

/// Ingest, project and build the graph, releasing intermediates early.
pub fn network(cfg: &RunConfig) -> CliResult<(Dataset, TemporalGraph, IngestSummary, ProjectSummary)> {
    let (mut ds, ingest) = ingest(cfg)?;
    let (directed, proj) = project(&ds)?;
    ds.interactions = Vec::new();
    let graph = TemporalGraph::build_with_activity(&directed, &ds.updates);
    drop(directed);
    Ok((ds, graph, ingest, proj))
}

pub fn initiations(graph: &TemporalGraph) -> Vec<Initiation> {
    classify_initiations(graph)
}

/// Author table from the dataset plus the optional site and geo files.
pub fn author_table(cfg: &RunConfig, ds: &mut Dataset) -> CliResult<AuthorTable> {
    let sites = match cfg.input("sites") {
        Some(p) => load_sites(p, &mut ds.ids)?,
        None => Vec::new(),
    };
    let geo = match cfg.input("geo") {
        Some(p) => load_geo_posts(p, &mut ds.ids)?,
        None => Vec::new(),
    };
    Ok(AuthorTable::build(ds.ids.n_authors(), &ds.updates, &sites, &geo))
}

/// Everything needed to emit choice sets.
pub fn choice_sets(cfg: &RunConfig) -> CliResult<(Dataset, ChoiceBuild, usize)> {
    let (mut ds, mut graph, _, _) = network(cfg)?;
    let inits = initiations(&graph);
    let authors = author_table(cfg, &mut ds)?;
    let sampler = SamplerConfig::new(cfg.negatives, cfg.seed)?;
    let build = build_choice_sets(&mut graph, &inits, &authors, sampler, &cfg.flags.features())?;
    Ok((ds, build, inits.len()))
}

/// Hash of a stage that reads the raw logs.
pub fn data_hash(command: &str, cfg: &RunConfig) -> CliResult<ConfigHasher> {
    let mut h = ConfigHasher::new(command, cfg);
    for key in ["interactions", "updates", "sites", "geo"] {
        if let Some(p) = cfg.input(key) {
            h = h.input(key, p)?;
        }
    }
    Ok(h)
}
