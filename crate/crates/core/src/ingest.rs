//! Raw log loading and the author→site to author→author projection.
//!
//! Interaction logs record an author acting on a *site*. The network is
//! defined between authors, so each site interaction is fanned out to the
//! site's authors: everyone who updated the site strictly before the
//! interaction, plus every author who ever posts a patient-labelled update
//! there (even if that first update comes later).

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{AuthorId, IdTables, SiteId, Timestamp, UpdateId};
use crate::table::{read_rows, read_rows_from, Format, Row};

pub const INTERACTION_COLUMNS: [&str; 5] = ["actor_id", "site_id", "kind", "timestamp", "update_id"];
pub const UPDATE_COLUMNS: [&str; 5] = ["author_id", "site_id", "update_id", "timestamp", "role_label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Guestbook,
    Amp,
    Comment,
}

impl InteractionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InteractionKind::Guestbook => "guestbook",
            InteractionKind::Amp => "amp",
            InteractionKind::Comment => "comment",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "guestbook" => Some(InteractionKind::Guestbook),
            "amp" => Some(InteractionKind::Amp),
            "comment" => Some(InteractionKind::Comment),
            _ => None,
        }
    }
}

/// Update-level classifier output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoleLabel {
    P,
    CG,
    Unlabeled,
}

impl RoleLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RoleLabel::P => "P",
            RoleLabel::CG => "CG",
            RoleLabel::Unlabeled => "",
        }
    }

    pub fn parse(s: Option<&str>) -> Option<Self> {
        match s {
            None | Some("unlabeled") => Some(RoleLabel::Unlabeled),
            Some("P") => Some(RoleLabel::P),
            Some("CG") => Some(RoleLabel::CG),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InteractionEvent {
    pub actor: AuthorId,
    pub site: SiteId,
    pub kind: InteractionKind,
    pub timestamp: Option<Timestamp>,
    pub update: Option<UpdateId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UpdateEvent {
    pub author: AuthorId,
    pub site: SiteId,
    pub update: UpdateId,
    pub timestamp: Timestamp,
    pub role: RoleLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectedInteraction {
    pub source: AuthorId,
    pub target: AuthorId,
    pub timestamp: Timestamp,
    pub kind: InteractionKind,
    pub via_site: SiteId,
}

/// Records from one file plus the number of exact duplicate rows dropped.
#[derive(Debug, Clone, Default)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub duplicates: usize,
}

fn parse_interaction(row: &Row<'_>, ids: &mut IdTables) -> Result<InteractionEvent> {
    let actor = ids.author(row.require("actor_id")?);
    let site = ids.site(row.require("site_id")?);
    let kind_raw = row.require("kind")?;
    let kind = InteractionKind::parse(kind_raw)
        .ok_or_else(|| row.error("kind", format!("unknown interaction kind `{kind_raw}`")))?;
    let timestamp = row.parse_i64("timestamp")?;
    if let Some(t) = timestamp {
        if t < 0 {
            return Err(row.error("timestamp", "timestamp must be non-negative"));
        }
    } else if kind != InteractionKind::Amp {
        return Err(row.error("timestamp", "only amps may omit the timestamp"));
    }
    let update = row.get("update_id").map(|u| ids.update(u));
    if update.is_none() && kind != InteractionKind::Guestbook {
        return Err(row.error("update_id", format!("{} requires an update id", kind.as_str())));
    }
    Ok(InteractionEvent {
        actor,
        site,
        kind,
        timestamp,
        update,
    })
}

fn parse_update(row: &Row<'_>, ids: &mut IdTables) -> Result<UpdateEvent> {
    let author = ids.author(row.require("author_id")?);
    let site = ids.site(row.require("site_id")?);
    let update = ids.update(row.require("update_id")?);
    let timestamp = row
        .parse_i64("timestamp")?
        .ok_or_else(|| row.error("timestamp", "required value is missing"))?;
    if timestamp < 0 {
        return Err(row.error("timestamp", "timestamp must be non-negative"));
    }
    let raw = row.get("role_label");
    let role = RoleLabel::parse(raw)
        .ok_or_else(|| row.error("role_label", format!("unknown role label `{}`", raw.unwrap_or(""))))?;
    Ok(UpdateEvent {
        author,
        site,
        update,
        timestamp,
        role,
    })
}

/// Drop exact duplicates, keeping the first occurrence and the input order.
pub(crate) fn dedup_stable<T: Ord + Copy>(records: Vec<T>) -> Loaded<T> {
    let mut order: Vec<u32> = (0..records.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| records[a as usize].cmp(&records[b as usize]).then(a.cmp(&b)));
    let mut keep = vec![true; records.len()];
    let mut duplicates = 0;
    for pair in order.windows(2) {
        if records[pair[0] as usize] == records[pair[1] as usize] {
            keep[pair[1] as usize] = false;
            duplicates += 1;
        }
    }
    drop(order);
    let records = records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect();
    Loaded {
        records,
        duplicates,
    }
}

/// Load an interaction log. Exact duplicate rows are removed and counted.
pub fn load_events(path: &Path, format: Format, ids: &mut IdTables) -> Result<Loaded<InteractionEvent>> {
    let mut out = Vec::new();
    read_rows(path, format, &INTERACTION_COLUMNS, |row| {
        out.push(parse_interaction(row, ids)?);
        Ok(())
    })?;
    Ok(dedup_stable(out))
}

/// [`load_events`] over an in-memory reader.
pub fn load_events_from<R: std::io::Read>(
    reader: R,
    name: &Path,
    format: Format,
    ids: &mut IdTables,
) -> Result<Loaded<InteractionEvent>> {
    let mut out = Vec::new();
    read_rows_from(reader, name, format, &INTERACTION_COLUMNS, |row| {
        out.push(parse_interaction(row, ids)?);
        Ok(())
    })?;
    Ok(dedup_stable(out))
}

fn check_unique_updates(loaded: &Loaded<UpdateEvent>, ids: &IdTables) -> Result<()> {
    let mut seen = vec![false; ids.updates.len()];
    for u in &loaded.records {
        if std::mem::replace(&mut seen[u.update.index()], true) {
            return Err(Error::DuplicateUpdate(ids.update_name(u.update).to_string()));
        }
    }
    Ok(())
}

/// Load an update log. Exact duplicates are dropped; a repeated update id
/// with different content is an error.
pub fn load_updates(path: &Path, format: Format, ids: &mut IdTables) -> Result<Loaded<UpdateEvent>> {
    let mut out = Vec::new();
    read_rows(path, format, &UPDATE_COLUMNS, |row| {
        out.push(parse_update(row, ids)?);
        Ok(())
    })?;
    let loaded = dedup_stable(out);
    check_unique_updates(&loaded, ids)?;
    Ok(loaded)
}

pub fn load_updates_from<R: std::io::Read>(
    reader: R,
    name: &Path,
    format: Format,
    ids: &mut IdTables,
) -> Result<Loaded<UpdateEvent>> {
    let mut out = Vec::new();
    read_rows_from(reader, name, format, &UPDATE_COLUMNS, |row| {
        out.push(parse_update(row, ids)?);
        Ok(())
    })?;
    let loaded = dedup_stable(out);
    check_unique_updates(&loaded, ids)?;
    Ok(loaded)
}

fn update_times(updates: &[UpdateEvent]) -> Vec<Option<Timestamp>> {
    let len = updates.iter().map(|u| u.update.index() + 1).max().unwrap_or(0);
    let mut times = vec![None; len];
    for u in updates {
        times[u.update.index()] = Some(u.timestamp);
    }
    times
}

/// Set every amp's timestamp to its update's publication time.
///
/// On failure the error lists the raw handles of the unknown updates; use
/// [`Dataset::resolve_amp_timestamps`] for the original identifiers.
pub fn resolve_amp_timestamps(
    mut events: Vec<InteractionEvent>,
    updates: &[UpdateEvent],
) -> Result<Vec<InteractionEvent>> {
    let unresolved = resolve_in_place(&mut events, updates);
    if unresolved.is_empty() {
        Ok(events)
    } else {
        Err(Error::UnresolvedUpdates(
            unresolved.iter().map(|u| u.to_string()).collect(),
        ))
    }
}

fn resolve_in_place(events: &mut [InteractionEvent], updates: &[UpdateEvent]) -> Vec<UpdateId> {
    let times = update_times(updates);
    let mut missing = Vec::new();
    for ev in events.iter_mut().filter(|e| e.kind == InteractionKind::Amp) {
        let id = ev.update.expect("amps carry an update id");
        match times.get(id.index()).copied().flatten() {
            Some(t) => ev.timestamp = Some(t),
            None => missing.push(id),
        }
    }
    missing.sort_unstable();
    missing.dedup();
    missing
}

#[inline]
fn pair_key(a: u32, b: u32) -> u64 {
    (u64::from(a) << 32) | u64::from(b)
}

/// Remove interactions on sites the actor has ever updated.
///
/// The rule ignores time: a later update retroactively makes earlier
/// interactions with that site self-interactions.
pub fn filter_self_interactions(
    events: Vec<InteractionEvent>,
    updates: &[UpdateEvent],
) -> (Vec<InteractionEvent>, usize) {
    let authored: HashSet<u64> = updates.iter().map(|u| pair_key(u.author.0, u.site.0)).collect();
    let before = events.len();
    let kept: Vec<InteractionEvent> = events
        .into_iter()
        .filter(|e| !authored.contains(&pair_key(e.actor.0, e.site.0)))
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Per-site author roster ordered by first update time.
#[derive(Debug, Clone, Default)]
pub struct SiteRoster {
    /// `(first update time on the site, author, ever posted a P update there)`
    entries_by_site: Vec<Vec<(Timestamp, AuthorId, bool)>>,
}

impl SiteRoster {
    pub fn new(updates: &[UpdateEvent]) -> Self {
        let n_sites = updates.iter().map(|u| u.site.index() + 1).max().unwrap_or(0);
        let mut rows: Vec<(SiteId, AuthorId, Timestamp, bool)> = updates
            .iter()
            .map(|u| (u.site, u.author, u.timestamp, u.role == RoleLabel::P))
            .collect();
        rows.sort_unstable();
        let mut entries_by_site: Vec<Vec<(Timestamp, AuthorId, bool)>> = vec![Vec::new(); n_sites];
        let mut i = 0;
        while i < rows.len() {
            let (site, author, first, _) = rows[i];
            let mut is_p = false;
            while i < rows.len() && rows[i].0 == site && rows[i].1 == author {
                is_p |= rows[i].3;
                i += 1;
            }
            entries_by_site[site.index()].push((first, author, is_p));
        }
        for entries in &mut entries_by_site {
            entries.sort_unstable();
        }
        SiteRoster { entries_by_site }
    }

    pub fn site(&self, site: SiteId) -> &[(Timestamp, AuthorId, bool)] {
        self.entries_by_site
            .get(site.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Targets of one interaction by `actor` at `t`, in roster order.
    pub fn targets(&self, site: SiteId, actor: AuthorId, t: Timestamp) -> impl Iterator<Item = AuthorId> + '_ {
        let entries = self.site(site);
        let prior = entries.partition_point(|e| e.0 < t);
        entries[..prior]
            .iter()
            .map(|e| e.1)
            .chain(entries[prior..].iter().filter(|e| e.2).map(|e| e.1))
            .filter(move |&b| b != actor)
    }
}

/// Fan site interactions out to author→author interactions.
///
/// Duplicates across events are kept; the graph builder collapses them.
pub fn project_to_author_edges(
    events: &[InteractionEvent],
    updates: &[UpdateEvent],
) -> Result<Vec<DirectedInteraction>> {
    let roster = SiteRoster::new(updates);
    project_with_roster(events, &roster)
}

pub fn project_with_roster(
    events: &[InteractionEvent],
    roster: &SiteRoster,
) -> Result<Vec<DirectedInteraction>> {
    if let Some(ev) = events.iter().find(|e| e.timestamp.is_none()) {
        return Err(Error::MissingTimestamp {
            actor: ev.actor.to_string(),
            site: ev.site.to_string(),
        });
    }
    Ok(events
        .par_iter()
        .with_min_len(4096)
        .flat_map_iter(|ev| {
            let t = ev.timestamp.unwrap_or_default();
            roster.targets(ev.site, ev.actor, t).map(move |target| DirectedInteraction {
                source: ev.actor,
                target,
                timestamp: t,
                kind: ev.kind,
                via_site: ev.site,
            })
        })
        .collect())
}

/// Number of distinct ordered `(source, target)` pairs.
pub fn unique_pair_count(interactions: &[DirectedInteraction]) -> usize {
    let mut keys: Vec<u64> = interactions
        .iter()
        .map(|d| pair_key(d.source.0, d.target.0))
        .collect();
    keys.par_sort_unstable();
    keys.dedup();
    keys.len()
}

/// Interaction and update logs sharing one set of identifier tables.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub ids: IdTables,
    pub interactions: Vec<InteractionEvent>,
    pub updates: Vec<UpdateEvent>,
    pub duplicate_interactions: usize,
    pub duplicate_updates: usize,
}

impl Dataset {
    /// Load both logs and renumber identifiers into lexical order, so every
    /// id-based tie break downstream is independent of input row order.
    pub fn load(interactions: &Path, updates: &Path) -> Result<Self> {
        let mut ids = IdTables::new();
        let upd = load_updates(updates, Format::from_path(updates), &mut ids)?;
        let ints = load_events(interactions, Format::from_path(interactions), &mut ids)?;
        let mut ds = Dataset {
            ids,
            interactions: ints.records,
            updates: upd.records,
            duplicate_interactions: ints.duplicates,
            duplicate_updates: upd.duplicates,
        };
        ds.canonicalize();
        Ok(ds)
    }

    pub fn canonicalize(&mut self) {
        let authors = self.ids.authors.canonicalize();
        let sites = self.ids.sites.canonicalize();
        let updates = self.ids.updates.canonicalize();
        let remap = |v: &mut u32, map: &[u32]| *v = map[*v as usize];
        for e in &mut self.interactions {
            remap(&mut e.actor.0, &authors);
            remap(&mut e.site.0, &sites);
            if let Some(u) = e.update.as_mut() {
                remap(&mut u.0, &updates);
            }
        }
        for u in &mut self.updates {
            remap(&mut u.author.0, &authors);
            remap(&mut u.site.0, &sites);
            remap(&mut u.update.0, &updates);
        }
    }

    /// Resolve amp timestamps in place, reporting unknown updates by name.
    pub fn resolve_amp_timestamps(&mut self) -> Result<()> {
        let missing = resolve_in_place(&mut self.interactions, &self.updates);
        if missing.is_empty() {
            return Ok(());
        }
        Err(Error::UnresolvedUpdates(
            missing
                .into_iter()
                .map(|u| self.ids.update_name(u).to_string())
                .collect(),
        ))
    }

    pub fn filter_self_interactions(&mut self) -> usize {
        let events = std::mem::take(&mut self.interactions);
        let (kept, removed) = filter_self_interactions(events, &self.updates);
        self.interactions = kept;
        removed
    }

    pub fn project(&self) -> Result<Vec<DirectedInteraction>> {
        project_to_author_edges(&self.interactions, &self.updates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::memory_path;

    fn ev(actor: u32, site: u32, kind: InteractionKind, t: Option<i64>, update: Option<u32>) -> InteractionEvent {
        InteractionEvent {
            actor: AuthorId(actor),
            site: SiteId(site),
            kind,
            timestamp: t,
            update: update.map(UpdateId),
        }
    }

    fn up(author: u32, site: u32, update: u32, t: i64, role: RoleLabel) -> UpdateEvent {
        UpdateEvent {
            author: AuthorId(author),
            site: SiteId(site),
            update: UpdateId(update),
            timestamp: t,
            role,
        }
    }

    fn load_csv(text: &str) -> Result<Loaded<InteractionEvent>> {
        load_events_from(text.as_bytes(), &memory_path("events"), Format::Csv, &mut IdTables::new())
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let text = "actor_id,site_id,kind,timestamp,update_id\n\
                    a,s,guestbook,10,\n\
                    b,s,comment,11,u1\n\
                    a,s,guestbook,10,\n\
                    c,r,amp,,u2\n";
        let loaded = load_csv(text).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert_eq!(loaded.duplicates, 1);
        assert_eq!(loaded.records[1].kind, InteractionKind::Comment);
    }

    #[test]
    fn empty_file_loads_nothing() {
        let loaded = load_csv("actor_id,site_id,kind,timestamp,update_id\n").unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.duplicates, 0);
    }

    #[test]
    fn unknown_kind_names_the_line() {
        let text = "actor_id,site_id,kind,timestamp,update_id\na,s,guestbook,1,\na,s,visit,2,\n";
        match load_csv(text).unwrap_err() {
            Error::Schema { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "kind");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_timestamp_and_missing_amp_update() {
        let bad_ts = "actor_id,site_id,kind,timestamp,update_id\na,s,guestbook,soon,\n";
        assert!(matches!(load_csv(bad_ts).unwrap_err(), Error::Schema { ref field, line: 2, .. } if field == "timestamp"));
        let no_update = "actor_id,site_id,kind,timestamp,update_id\na,s,amp,,\n";
        assert!(matches!(load_csv(no_update).unwrap_err(), Error::Schema { ref field, .. } if field == "update_id"));
        let negative = "actor_id,site_id,kind,timestamp,update_id\na,s,guestbook,-4,\n";
        assert!(load_csv(negative).is_err());
        let untimed_guestbook = "actor_id,site_id,kind,timestamp,update_id\na,s,guestbook,,\n";
        assert!(load_csv(untimed_guestbook).is_err());
    }

    #[test]
    fn json_lines_uses_same_keys() {
        let text = r#"{"actor_id":"a","site_id":"s","kind":"amp","timestamp":null,"update_id":"u"}
{"actor_id":"a","site_id":"s","kind":"guestbook","timestamp":7,"update_id":""}"#;
        let loaded = load_events_from(text.as_bytes(), &memory_path("j"), Format::JsonLines, &mut IdTables::new()).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.records[1].timestamp, Some(7));
    }

    #[test]
    fn duplicate_update_id_with_different_content_errors() {
        let text = "author_id,site_id,update_id,timestamp,role_label\nb,s,u1,5,CG\nb,s,u1,6,CG\n";
        let err = load_updates_from(text.as_bytes(), &memory_path("u"), Format::Csv, &mut IdTables::new()).unwrap_err();
        assert!(matches!(err, Error::DuplicateUpdate(ref id) if id == "u1"));
    }

    #[test]
    fn amp_takes_update_time_and_others_unchanged() {
        let updates = [up(1, 0, 0, 100, RoleLabel::CG)];
        let events = vec![
            ev(2, 0, InteractionKind::Amp, None, Some(0)),
            ev(2, 0, InteractionKind::Guestbook, Some(50), None),
        ];
        let out = resolve_amp_timestamps(events, &updates).unwrap();
        assert_eq!(out[0].timestamp, Some(100));
        assert_eq!(out[1].timestamp, Some(50));
    }

    #[test]
    fn amp_on_unknown_update_is_an_error() {
        let updates = [up(1, 0, 0, 100, RoleLabel::CG)];
        let events = vec![ev(2, 0, InteractionKind::Amp, None, Some(7))];
        match resolve_amp_timestamps(events, &updates).unwrap_err() {
            Error::UnresolvedUpdates(ids) => assert_eq!(ids, vec!["7".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_interactions_removed_regardless_of_time() {
        // author 0 updates site 0 at t=1000; their earlier guestbook there is still self.
        let updates = [up(0, 0, 0, 1000, RoleLabel::P)];
        let events = vec![
            ev(0, 0, InteractionKind::Guestbook, Some(5), None),
            ev(0, 1, InteractionKind::Comment, Some(5), Some(0)),
        ];
        let (kept, removed) = filter_self_interactions(events, &updates);
        assert_eq!(removed, 1);
        assert_eq!(kept[0].site, SiteId(1));
        let (again, removed_again) = filter_self_interactions(kept.clone(), &updates);
        assert_eq!(again, kept);
        assert_eq!(removed_again, 0);
    }

    #[test]
    fn projection_prior_and_future_patient_authors() {
        // site 0: b=1 updates CG at 5, c=2 first P update at 50; a=0 interacts at 10.
        let updates = [
            up(1, 0, 0, 5, RoleLabel::CG),
            up(2, 0, 1, 50, RoleLabel::P),
        ];
        let events = [ev(0, 0, InteractionKind::Guestbook, Some(10), None)];
        let edges = project_to_author_edges(&events, &updates).unwrap();
        let pairs: Vec<_> = edges.iter().map(|e| (e.source.0, e.target.0, e.timestamp)).collect();
        assert_eq!(pairs, vec![(0, 1, 10), (0, 2, 10)]);
    }

    #[test]
    fn projection_ignores_future_caregivers_and_equal_time() {
        let updates = [up(1, 0, 0, 9, RoleLabel::CG), up(3, 1, 1, 10, RoleLabel::CG)];
        let events = [
            ev(0, 0, InteractionKind::Guestbook, Some(1), None),
            // update at exactly the interaction time is not prior
            ev(0, 1, InteractionKind::Guestbook, Some(10), None),
        ];
        assert!(project_to_author_edges(&events, &updates).unwrap().is_empty());
    }

    #[test]
    fn prior_author_who_is_also_patient_gets_one_edge() {
        let updates = [up(1, 0, 0, 5, RoleLabel::CG), up(1, 0, 1, 80, RoleLabel::P)];
        let events = [ev(0, 0, InteractionKind::Guestbook, Some(10), None)];
        assert_eq!(project_to_author_edges(&events, &updates).unwrap().len(), 1);
    }

    #[test]
    fn projection_requires_resolved_timestamps() {
        let events = [ev(0, 0, InteractionKind::Amp, None, Some(0))];
        assert!(matches!(
            project_to_author_edges(&events, &[]),
            Err(Error::MissingTimestamp { .. })
        ));
    }

    #[test]
    fn unique_pairs() {
        let d = |s, t| DirectedInteraction {
            source: AuthorId(s),
            target: AuthorId(t),
            timestamp: 0,
            kind: InteractionKind::Guestbook,
            via_site: SiteId(0),
        };
        assert_eq!(unique_pair_count(&[d(0, 1), d(0, 1), d(1, 0)]), 2);
        assert_eq!(unique_pair_count(&[]), 0);
    }
}
