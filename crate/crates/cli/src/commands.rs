//! Network-building subcommands.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use netchoice_core::choices::{build_features, write_choice_set, SkipReason};
use netchoice_core::design::Frame;
use netchoice_core::initiations::{timeline_stats, write_initiations};
use netchoice_core::{AuthorId, IdTables, Role, Timestamp};
use serde::Serialize;

use crate::config::{ConfigHasher, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{peak_rss_bytes, OutDir};
use crate::pipeline::{self, data_hash};

/// Quote a CSV field when needed.
pub fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn ingest(cfg: &RunConfig) -> CliResult<()> {
    let hash = data_hash("ingest", cfg)?.finish();
    let (ds, summary) = pipeline::ingest(cfg)?;
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.stamped("events.csv", |w| {
        writeln!(w, "actor_id,site_id,kind,timestamp,update_id")?;
        for e in &ds.interactions {
            writeln!(
                w,
                "{},{},{},{},{}",
                csv_quote(ds.ids.author_name(e.actor)),
                csv_quote(ds.ids.site_name(e.site)),
                e.kind.as_str(),
                e.timestamp.map_or(String::new(), |t| t.to_string()),
                e.update.map_or(String::new(), |u| csv_quote(ds.ids.update_name(u))),
            )?;
        }
        Ok(())
    })?;
    out.json("ingest.json", &summary)?;
    eprintln!(
        "ingest: kept {} of {} interactions ({} duplicates, {} self-interactions)",
        summary.interactions_kept, summary.interactions_loaded, summary.duplicate_interactions, summary.self_interactions_removed
    );
    Ok(())
}

pub fn project(cfg: &RunConfig) -> CliResult<()> {
    let hash = data_hash("project", cfg)?.finish();
    let (ds, ingest) = pipeline::ingest(cfg)?;
    let (directed, summary) = pipeline::project(&ds)?;
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.stamped("interactions.csv", |w| {
        writeln!(w, "source,target,timestamp,kind,via_site")?;
        for d in &directed {
            writeln!(
                w,
                "{},{},{},{},{}",
                csv_quote(ds.ids.author_name(d.source)),
                csv_quote(ds.ids.author_name(d.target)),
                d.timestamp,
                d.kind.as_str(),
                csv_quote(ds.ids.site_name(d.via_site)),
            )?;
        }
        Ok(())
    })?;
    #[derive(Serialize)]
    struct Doc {
        ingest: pipeline::IngestSummary,
        projection: pipeline::ProjectSummary,
    }
    out.json("project.json", &Doc { ingest, projection: summary.clone() })?;
    eprintln!(
        "project: {} site interactions -> {} author interactions ({} unique pairs)",
        summary.site_interactions, summary.author_interactions, summary.unique_pairs
    );
    Ok(())
}

/// Window starts covering `[first, last]`, aligned to multiples of `step`.
fn series_times(first: Timestamp, last: Timestamp, step: Timestamp) -> Vec<Timestamp> {
    let mut t = first.div_euclid(step) * step + step;
    let mut out = Vec::new();
    while t <= last + step {
        out.push(t);
        t += step;
    }
    out
}

#[derive(Serialize)]
struct GraphSummary {
    activated_authors: usize,
    edges: usize,
    largest_wcc_size: u32,
    largest_wcc_share: Option<f64>,
    scc_count: usize,
    largest_scc_sizes: Vec<usize>,
}

#[derive(Serialize)]
struct NetworkPerf {
    events: usize,
    build_seconds: f64,
    events_per_second: f64,
    peak_rss_bytes: Option<u64>,
    threads: usize,
}

pub fn network(cfg: &RunConfig) -> CliResult<()> {
    let hash = data_hash("network", cfg)?.finish();
    let started = Instant::now();
    let (ds, mut graph, ingest, projection) = pipeline::network(cfg)?;
    let build_seconds = started.elapsed().as_secs_f64();
    let perf = NetworkPerf {
        events: ingest.interactions_loaded,
        build_seconds,
        events_per_second: ingest.interactions_loaded as f64 / build_seconds.max(1e-9),
        peak_rss_bytes: peak_rss_bytes(),
        threads: rayon::current_num_threads(),
    };
    eprintln!(
        "network: {} events ingested, projected and built in {:.2} s ({:.0} events/s, peak RSS {})",
        perf.events,
        perf.build_seconds,
        perf.events_per_second,
        perf.peak_rss_bytes.map_or("n/a".to_string(), |b| format!("{:.1} MiB", b as f64 / 1048576.0))
    );

    let first = graph.activations().first().map(|a| a.0);
    let last = graph
        .activations()
        .last()
        .map(|a| a.0)
        .max(graph.edges().last().map(|e| e.first_time));
    let series = match (first, last) {
        (Some(f), Some(l)) => graph.largest_wcc_series(&series_times(f, l, cfg.timeline_window))?,
        _ => Vec::new(),
    };
    graph.advance_to_end()?;
    let scc = graph.state().scc_sizes();
    let summary = GraphSummary {
        activated_authors: graph.state().n_activated(),
        edges: graph.edges().len(),
        largest_wcc_size: graph.state().largest_wcc_size(),
        largest_wcc_share: graph.state().largest_wcc_share().ok(),
        scc_count: scc.len(),
        largest_scc_sizes: scc.iter().take(10).copied().collect(),
    };

    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.stamped("edges.csv", |w| graph.write_edge_list(w, |a| csv_quote(ds.ids.author_name(a))))?;
    out.stamped("wcc_series.csv", |w| {
        writeln!(w, "time,activated,largest_wcc_size,largest_wcc_share")?;
        for s in &series {
            writeln!(
                w,
                "{},{},{},{}",
                s.time,
                s.activated,
                s.largest_size,
                s.largest_share.map_or(String::new(), |v| v.to_string())
            )?;
        }
        Ok(())
    })?;
    #[derive(Serialize)]
    struct Doc {
        ingest: pipeline::IngestSummary,
        projection: pipeline::ProjectSummary,
        graph: GraphSummary,
    }
    out.json("network.json", &Doc { ingest, projection, graph: summary })?;
    out.json("network_perf.json", &perf)?;
    Ok(())
}

pub fn initiations(cfg: &RunConfig) -> CliResult<()> {
    let hash = data_hash("initiations", cfg)?.finish();
    let (ds, graph, _, _) = pipeline::network(cfg)?;
    let inits = pipeline::initiations(&graph);
    let stats = timeline_stats(&inits, cfg.timeline_window)?;
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.stamped("initiations.csv", |w| write_initiations(w, &inits, &ds.ids))?;
    out.json("timeline.json", &stats)?;
    eprintln!("initiations: {} classified", inits.len());
    Ok(())
}

#[derive(Serialize)]
struct AuthorSummary {
    authors: usize,
    with_role: usize,
    roles: std::collections::BTreeMap<&'static str, usize>,
    shared_accounts: usize,
    with_health_condition: usize,
    with_state: usize,
}

pub fn authors(cfg: &RunConfig) -> CliResult<()> {
    let hash = data_hash("authors", cfg)?.finish();
    let (mut ds, _) = pipeline::ingest(cfg)?;
    let table = pipeline::author_table(cfg, &mut ds)?;
    let records = table.records();
    let summary = AuthorSummary {
        authors: records.len(),
        with_role: records.iter().filter(|r| r.role.is_some()).count(),
        roles: Role::ALL
            .iter()
            .map(|&role| (role.as_str(), records.iter().filter(|r| r.role == Some(role)).count()))
            .collect(),
        shared_accounts: records.iter().filter(|r| r.is_shared_account).count(),
        with_health_condition: records.iter().filter(|r| r.health_condition.is_some()).count(),
        with_state: records.iter().filter(|r| r.state.is_some()).count(),
    };
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.stamped("authors.csv", |w| table.write_csv(w, &ds.ids))?;
    out.json("authors.json", &summary)?;
    Ok(())
}

fn lookup_author(ids: &IdTables, name: &str) -> CliResult<AuthorId> {
    ids.authors
        .get(name)
        .map(AuthorId)
        .ok_or_else(|| CliError::Validation(format!("unknown author `{name}` in queries")))
}

pub fn features(cfg: &RunConfig, queries: &Path) -> CliResult<()> {
    let hash = data_hash("features", cfg)?.input("queries", queries)?.finish();
    let frame = Frame::read_csv(queries)?;
    let col = |name: &str| -> CliResult<&Vec<String>> {
        frame
            .columns
            .iter()
            .position(|c| c == name)
            .map(|j| &frame.values[j])
            .ok_or_else(|| CliError::Validation(format!("queries file lacks column `{name}`")))
    };
    let (choosers, candidates, times) = (col("chooser")?, col("candidate")?, col("time")?);
    let (mut ds, mut graph, _, _) = pipeline::network(cfg)?;
    let table = pipeline::author_table(cfg, &mut ds)?;
    let mut rows = Vec::with_capacity(frame.n_rows());
    for i in 0..frame.n_rows() {
        let t: Timestamp = times[i]
            .parse()
            .map_err(|_| CliError::Validation(format!("query row {}: bad time `{}`", i + 2, times[i])))?;
        rows.push((t, i, lookup_author(&ds.ids, &choosers[i])?, lookup_author(&ds.ids, &candidates[i])?));
    }
    rows.sort();
    let features = cfg.flags.features();
    let mut values = vec![Vec::new(); rows.len()];
    for &(t, i, a, c) in &rows {
        graph.advance_to(t)?;
        values[i] = build_features(&features, a, c, t, graph.state(), &table)?;
    }
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.stamped("features.csv", |w| {
        let header: Vec<String> = ["chooser", "candidate", "time"]
            .iter()
            .map(|s| s.to_string())
            .chain(features.iter().map(|f| csv_quote(f.name())))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..frame.n_rows() {
            let vals: Vec<String> = values[i].iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{}",
                csv_quote(&choosers[i]),
                csv_quote(&candidates[i]),
                times[i],
                vals.join(",")
            )?;
        }
        Ok(())
    })?;
    Ok(())
}

#[derive(Serialize)]
struct SampleSummary {
    initiations: usize,
    instances: usize,
    skipped_no_negatives: usize,
    skipped_receiver_not_active: usize,
    negatives: usize,
    feature_names: Vec<String>,
}

pub fn sample(cfg: &RunConfig) -> CliResult<()> {
    let hash = data_hash("sample", cfg)?.finish();
    let (ds, build, n_inits) = pipeline::choice_sets(cfg)?;
    let count = |r: SkipReason| build.skipped.iter().filter(|s| s.1 == r).count();
    let summary = SampleSummary {
        initiations: n_inits,
        instances: build.set.instances.len(),
        skipped_no_negatives: count(SkipReason::NoNegatives),
        skipped_receiver_not_active: count(SkipReason::ReceiverNotActive),
        negatives: cfg.negatives,
        feature_names: build.set.feature_names.clone(),
    };
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.stamped("choices.jsonl", |w| write_choice_set(w, &build.set, &ds.ids))?;
    out.json("sample.json", &summary)?;
    eprintln!("sample: {} instances from {} initiations", summary.instances, n_inits);
    Ok(())
}

/// Hash for commands that consume a choice file or rebuild it from logs.
pub fn choices_hash(command: &str, cfg: &RunConfig) -> CliResult<ConfigHasher> {
    match cfg.input("choices") {
        Some(p) => ConfigHasher::new(command, cfg).input("choices", p),
        None => data_hash(command, cfg),
    }
}
