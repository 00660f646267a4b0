//! Descriptive report over initiations and fitted models.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use netchoice_core::authors::read_author_rows;
use netchoice_core::estimators::{coefficient_table, significance_stars};
use netchoice_core::initiations::{read_initiations, reciprocation_rate_by_role, timeline_stats, RoleReciprocity, WindowStats};
use netchoice_core::{AuthorId, FitResult, IdTables, Initiation, Role};
use serde::Serialize;

use crate::config::{ConfigHasher, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::OutDir;

#[derive(Serialize)]
struct SameState {
    available: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    both_assigned: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    same_state: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    share: Option<f64>,
}

#[derive(Serialize)]
struct CoefficientRow {
    name: String,
    estimate: f64,
    std_error: f64,
    p_value: f64,
    stars: &'static str,
}

#[derive(Serialize)]
struct ModelSection {
    source: String,
    model: netchoice_core::ModelKind,
    n_obs: usize,
    coefficients: Vec<CoefficientRow>,
    #[serde(skip)]
    table: String,
}

#[derive(Serialize)]
struct Report {
    initiations: WindowStats,
    same_state: SameState,
    #[serde(skip_serializing_if = "Option::is_none")]
    reciprocation_by_role: Option<RoleReciprocity>,
    models: Vec<ModelSection>,
}

/// True when the file holds nothing but comments and blank lines.
fn is_blank(path: &Path) -> CliResult<bool> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().all(|l| l.trim().is_empty() || l.trim_start().starts_with('#')))
}

fn same_state(inits: &[Initiation], state: &HashMap<AuthorId, String>) -> SameState {
    let mut both = 0;
    let mut same = 0;
    for i in inits {
        if let (Some(a), Some(b)) = (state.get(&i.initiator), state.get(&i.receiver)) {
            both += 1;
            same += usize::from(a == b);
        }
    }
    if both == 0 {
        return SameState {
            available: false,
            both_assigned: None,
            same_state: None,
            share: None,
        };
    }
    SameState {
        available: true,
        both_assigned: Some(both),
        same_state: Some(same),
        share: Some(same as f64 / both as f64),
    }
}

fn load_fit(path: &Path) -> CliResult<ModelSection> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut doc: serde_json::Value = serde_json::from_str(&text)?;
    let fit: FitResult = serde_json::from_value(doc.get_mut("fit").map(std::mem::take).ok_or_else(|| {
        CliError::Validation(format!("{} holds no `fit` object", path.display()))
    })?)?;
    let source = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let coefficients = (0..fit.n_params)
        .map(|j| CoefficientRow {
            name: fit.feature_names[j].clone(),
            estimate: fit.coefficients[j],
            std_error: fit.std_errors[j],
            p_value: fit.p_values[j],
            stars: significance_stars(fit.p_values[j]),
        })
        .collect();
    Ok(ModelSection {
        source,
        model: fit.model,
        n_obs: fit.n_obs,
        coefficients,
        table: coefficient_table(&fit),
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |s| format!("{:.2}%", 100.0 * s))
}

fn render(r: &Report) -> String {
    let mut s = String::new();
    let w = &r.initiations;
    let _ = writeln!(s, "Initiations: {}", w.total);
    for (t, c) in &w.counts {
        let share = w.shares.as_ref().and_then(|m| m.get(t).copied());
        let _ = writeln!(s, "  {:<18} {:>9}  {:>8}", t.as_str(), c, pct(share));
    }
    let _ = writeln!(s, "  reciprocal share:                 {}", pct(w.reciprocal_share));
    let _ = writeln!(s, "  bridging + joining isolates:      {}", pct(w.bridging_plus_isolates_share));
    let _ = writeln!(s, "  joining with isolate initiator:   {}", pct(w.joining_initiator_isolate_share));
    match (&r.same_state.share, r.same_state.both_assigned) {
        (Some(share), Some(n)) => {
            let _ = writeln!(s, "  same state ({n} with both assigned): {}", pct(Some(*share)));
        }
        _ => {
            let _ = writeln!(s, "  same state: unavailable (no state assignments)");
        }
    }
    if let Some(rr) = &r.reciprocation_by_role {
        let _ = writeln!(s, "\nReciprocation by role (initiator row, receiver column):");
        let _ = write!(s, "  {:<6}", "");
        for role in &rr.roles {
            let _ = write!(s, " {:>16}", role.as_str());
        }
        let _ = writeln!(s);
        for (i, row) in rr.cells.iter().enumerate() {
            let _ = write!(s, "  {:<6}", rr.roles[i].as_str());
            for cell in row {
                let _ = write!(s, " {:>8} ({:>5})", pct(cell.probability), cell.initiations);
            }
            let _ = writeln!(s);
        }
    }
    for m in &r.models {
        let _ = writeln!(s, "\nModel from {}:", m.source);
        s.push_str(&m.table);
    }
    s
}

pub fn run(cfg: &RunConfig, fits: &[PathBuf]) -> CliResult<()> {
    let mut hasher = ConfigHasher::new("report", cfg);
    for key in ["initiations", "authors"] {
        if let Some(p) = cfg.input(key) {
            hasher = hasher.input(key, p)?;
        }
    }
    for (i, f) in fits.iter().enumerate() {
        hasher = hasher.input(&format!("fit{i}"), f)?;
    }
    let hash = hasher.finish();

    let mut ids = IdTables::new();
    let inits = match cfg.input("initiations") {
        Some(p) if !is_blank(p)? => read_initiations(p, &mut ids)?,
        _ => Vec::new(),
    };
    let rows = match cfg.input("authors") {
        Some(p) if !is_blank(p)? => Some(read_author_rows(p, &mut ids)?),
        _ => None,
    };
    let stats = timeline_stats(&inits, cfg.timeline_window)?;
    let (same, by_role) = match &rows {
        Some(rows) => {
            let state: HashMap<AuthorId, String> =
                rows.iter().filter_map(|r| r.state.clone().map(|s| (r.author, s))).collect();
            let role: HashMap<AuthorId, Role> = rows.iter().filter_map(|r| r.role.map(|x| (r.author, x))).collect();
            (
                same_state(&inits, &state),
                Some(reciprocation_rate_by_role(&inits, |a| role.get(&a).copied())),
            )
        }
        None => (same_state(&inits, &HashMap::new()), None),
    };
    let report = Report {
        initiations: stats.overall,
        same_state: same,
        reciprocation_by_role: by_role,
        models: fits.iter().map(|p| load_fit(p)).collect::<CliResult<_>>()?,
    };
    let mut out = OutDir::create(&cfg.out_dir, hash)?;
    out.json("report.json", &report)?;
    let text = render(&report);
    out.stamped("report.txt", |w| w.write_all(text.as_bytes()))?;
    Ok(())
}
