//! Author-level attributes derived from update labels, site metadata and
//! geo-identifiable posts.
//!
//! All threshold rules run in integer arithmetic so boundary cases (a
//! fraction of exactly 1/3, a margin of exactly 20 points) are exact.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{AuthorId, IdTables, SiteId, Timestamp, SECONDS_PER_DAY};
use crate::ingest::{RoleLabel, UpdateEvent};
use crate::table::{read_rows, Format};

pub const DAYS_PER_MONTH: f64 = 30.44;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    P,
    CG,
    Mixed,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::P, Role::CG, Role::Mixed];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::P => "P",
            Role::CG => "CG",
            Role::Mixed => "Mixed",
        }
    }

    pub fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P" => Ok(Role::P),
            "CG" => Ok(Role::CG),
            "Mixed" => Ok(Role::Mixed),
            other => Err(Error::Invalid(format!("unknown role `{other}`"))),
        }
    }
}

/// Patient-labelled and total labelled update counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub patient: u32,
    pub labeled: u32,
}

impl LabelCounts {
    pub fn new(patient: u32, labeled: u32) -> Self {
        LabelCounts { patient, labeled }
    }

    pub fn add(&mut self, label: RoleLabel) {
        match label {
            RoleLabel::P => {
                self.patient += 1;
                self.labeled += 1;
            }
            RoleLabel::CG => self.labeled += 1,
            RoleLabel::Unlabeled => {}
        }
    }

    /// Fraction in the closed middle band [1/3, 2/3].
    pub fn in_middle_band(self) -> bool {
        let (p, n) = (u64::from(self.patient), u64::from(self.labeled));
        n > 0 && 3 * p >= n && 3 * p <= 2 * n
    }
}

/// `< 1/3` patient → CG, `> 2/3` → P, otherwise Mixed (boundaries are Mixed).
pub fn aggregate_role(counts: LabelCounts) -> Result<Role> {
    if counts.labeled == 0 {
        return Err(Error::UndefinedRole);
    }
    let (p, n) = (u64::from(counts.patient), u64::from(counts.labeled));
    Ok(if 3 * p < n {
        Role::CG
    } else if 3 * p > 2 * n {
        Role::P
    } else {
        Role::Mixed
    })
}

/// Shared account: on any site the patient fraction lies in [1/3, 2/3].
pub fn shared_account(per_site: &[LabelCounts]) -> bool {
    per_site.iter().any(|c| c.in_middle_band())
}

/// Values that never count as a reported health condition.
pub fn is_reported_condition(condition: Option<&str>) -> bool {
    !matches!(condition.map(str::trim), None | Some("") | Some("None") | Some("Condition Unknown"))
}

/// First reported condition among the author's sites in creation order.
pub fn assign_health_condition<'a, I>(conditions_in_creation_order: I) -> Option<String>
where
    I: IntoIterator<Item = Option<&'a str>>,
{
    conditions_in_creation_order
        .into_iter()
        .find(|c| is_reported_condition(*c))
        .flatten()
        .map(|c| c.trim().to_string())
}

/// 1 when both conditions are reported and equal.
pub fn shared_health_condition(a: Option<&str>, b: Option<&str>) -> u8 {
    u8::from(is_reported_condition(a) && a == b)
}

pub const MIN_GEO_POSTS: usize = 10;

/// Assign a US state from an author's geo-identifiable posts.
///
/// Requires at least ten posts with a state and a lead of at least twenty
/// percentage points over the runner-up (a sole state has runner-up 0).
pub fn assign_state<'a, I>(post_states: I) -> Option<String>
where
    I: IntoIterator<Item = Option<&'a str>>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut n = 0usize;
    for s in post_states.into_iter().flatten().filter(|s| !s.is_empty()) {
        *counts.entry(s).or_default() += 1;
        n += 1;
    }
    if n < MIN_GEO_POSTS {
        return None;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let top = ranked[0].1;
    let second = ranked.get(1).map_or(0, |r| r.1);
    // (top - second) / n >= 1/5
    (5 * (top - second) >= n).then(|| ranked[0].0.to_string())
}

/// Cohen's kappa between two raters.
pub fn cohens_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!(
            "label sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Invalid("kappa needs at least two items".into()));
    }
    let n = a.len() as u128;
    let mut agree = 0u128;
    let mut margins: HashMap<&T, (u128, u128)> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        agree += u128::from(x == y);
        margins.entry(x).or_default().0 += 1;
        margins.entry(y).or_default().1 += 1;
    }
    let chance: u128 = margins.values().map(|(ra, rb)| ra * rb).sum();
    if chance == n * n {
        return Err(Error::DegenerateMarginals(
            "both raters use one identical constant label".into(),
        ));
    }
    Ok(((n * agree) as f64 - chance as f64) / ((n * n) as f64 - chance as f64))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteMeta {
    pub site: SiteId,
    pub created_at: Option<Timestamp>,
    pub health_condition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeoPost {
    pub author: AuthorId,
    pub timestamp: Timestamp,
    /// `None` when the post could not be resolved to a US state.
    pub state: Option<String>,
}

pub const SITE_COLUMNS: [&str; 3] = ["site_id", "created_at", "health_condition"];
pub const GEO_COLUMNS: [&str; 3] = ["author_id", "timestamp", "state"];

pub fn load_sites(path: &Path, ids: &mut IdTables) -> Result<Vec<SiteMeta>> {
    let mut out = Vec::new();
    read_rows(path, Format::from_path(path), &SITE_COLUMNS, |row| {
        out.push(SiteMeta {
            site: ids.site(row.require("site_id")?),
            created_at: row.parse_i64("created_at")?,
            health_condition: row.get("health_condition").map(String::from),
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn load_geo_posts(path: &Path, ids: &mut IdTables) -> Result<Vec<GeoPost>> {
    let mut out = Vec::new();
    read_rows(path, Format::from_path(path), &GEO_COLUMNS, |row| {
        out.push(GeoPost {
            author: ids.author(row.require("author_id")?),
            timestamp: row
                .parse_i64("timestamp")?
                .ok_or_else(|| row.error("timestamp", "required value is missing"))?,
            state: row.get("state").map(String::from),
        });
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ActivityFeatures {
    pub update_count: f64,
    /// Updates per month of tenure.
    pub update_frequency: f64,
    pub days_since_most_recent_update: f64,
    pub days_since_first_update: f64,
    pub is_multisite: bool,
    pub is_mixedsite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuthorRecord {
    pub author: AuthorId,
    /// `None` for authors without any labelled update.
    pub role: Option<Role>,
    pub is_shared_account: bool,
    pub health_condition: Option<String>,
    pub state: Option<String>,
    pub first_update_time: Option<Timestamp>,
}

/// Per-author attributes plus the indexes needed for time-sliced activity.
#[derive(Debug, Clone, Default)]
pub struct AuthorTable {
    records: Vec<AuthorRecord>,
    /// CSR layout of each author's sorted update times.
    update_offsets: Vec<usize>,
    update_times: Vec<Timestamp>,
    /// Each author's sites as `(first own update there, site)`, sorted.
    author_sites: Vec<Vec<(Timestamp, SiteId)>>,
    /// Per site, the time its second distinct author first posted.
    second_author_time: Vec<Option<Timestamp>>,
}

impl AuthorTable {
    pub fn empty() -> Self {
        AuthorTable::default()
    }

    /// `n_authors` sizes the table; ids at or beyond it are unknown.
    pub fn build(n_authors: usize, updates: &[UpdateEvent], sites: &[SiteMeta], geo: &[GeoPost]) -> Self {
        let n_sites = updates
            .iter()
            .map(|u| u.site.index() + 1)
            .chain(sites.iter().map(|s| s.site.index() + 1))
            .max()
            .unwrap_or(0);

        let mut by_author: Vec<Vec<&UpdateEvent>> = vec![Vec::new(); n_authors];
        for u in updates {
            if u.author.index() < n_authors {
                by_author[u.author.index()].push(u);
            }
        }

        let mut site_first_update: Vec<Option<Timestamp>> = vec![None; n_sites];
        let mut site_author_firsts: Vec<Vec<Timestamp>> = vec![Vec::new(); n_sites];
        let mut author_sites: Vec<Vec<(Timestamp, SiteId)>> = vec![Vec::new(); n_authors];
        for (a, ups) in by_author.iter().enumerate() {
            let mut firsts: HashMap<SiteId, Timestamp> = HashMap::new();
            for u in ups {
                firsts
                    .entry(u.site)
                    .and_modify(|t| *t = (*t).min(u.timestamp))
                    .or_insert(u.timestamp);
            }
            for (&site, &t) in &firsts {
                let slot = &mut site_first_update[site.index()];
                *slot = Some(slot.map_or(t, |s| s.min(t)));
                site_author_firsts[site.index()].push(t);
            }
            let mut list: Vec<(Timestamp, SiteId)> = firsts.into_iter().map(|(s, t)| (t, s)).collect();
            list.sort_unstable();
            author_sites[a] = list;
        }
        let second_author_time = site_author_firsts
            .into_iter()
            .map(|mut v| {
                v.sort_unstable();
                v.get(1).copied()
            })
            .collect();

        let mut site_created: Vec<Option<Timestamp>> = site_first_update.clone();
        let mut site_condition: Vec<Option<&str>> = vec![None; n_sites];
        for s in sites {
            if let Some(c) = s.created_at {
                site_created[s.site.index()] = Some(c);
            }
            site_condition[s.site.index()] = s.health_condition.as_deref();
        }

        let mut geo_by_author: Vec<Vec<Option<&str>>> = vec![Vec::new(); n_authors];
        for g in geo {
            if g.author.index() < n_authors {
                geo_by_author[g.author.index()].push(g.state.as_deref());
            }
        }

        let mut update_offsets = Vec::with_capacity(n_authors + 1);
        let mut update_times = Vec::with_capacity(updates.len());
        update_offsets.push(0);
        let mut records = Vec::with_capacity(n_authors);
        for (a, ups) in by_author.iter().enumerate() {
            let mut total = LabelCounts::default();
            let mut per_site: HashMap<SiteId, LabelCounts> = HashMap::new();
            let start = update_times.len();
            for u in ups {
                total.add(u.role);
                per_site.entry(u.site).or_default().add(u.role);
                update_times.push(u.timestamp);
            }
            update_times[start..].sort_unstable();
            update_offsets.push(update_times.len());

            let per_site: Vec<LabelCounts> = per_site.into_values().collect();
            let mut own_sites: Vec<(Option<Timestamp>, SiteId)> = author_sites[a]
                .iter()
                .map(|&(_, s)| (site_created[s.index()], s))
                .collect();
            own_sites.sort_unstable();
            records.push(AuthorRecord {
                author: AuthorId(a as u32),
                role: aggregate_role(total).ok(),
                is_shared_account: shared_account(&per_site),
                health_condition: assign_health_condition(
                    own_sites.iter().map(|&(_, s)| site_condition[s.index()]),
                ),
                state: assign_state(geo_by_author[a].iter().copied()),
                first_update_time: update_times[start..].first().copied(),
            });
        }

        AuthorTable {
            records,
            update_offsets,
            update_times,
            author_sites,
            second_author_time,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AuthorRecord] {
        &self.records
    }

    pub fn get(&self, a: AuthorId) -> Option<&AuthorRecord> {
        self.records.get(a.index())
    }

    pub fn role(&self, a: AuthorId) -> Option<Role> {
        self.get(a).and_then(|r| r.role)
    }

    pub fn health_condition(&self, a: AuthorId) -> Option<&str> {
        self.get(a).and_then(|r| r.health_condition.as_deref())
    }

    pub fn state(&self, a: AuthorId) -> Option<&str> {
        self.get(a).and_then(|r| r.state.as_deref())
    }

    pub fn update_times(&self, a: AuthorId) -> &[Timestamp] {
        match (self.update_offsets.get(a.index()), self.update_offsets.get(a.index() + 1)) {
            (Some(&lo), Some(&hi)) => &self.update_times[lo..hi],
            _ => &[],
        }
    }

    /// Activity of `author` using only updates strictly before `t`.
    pub fn activity_features(&self, author: AuthorId, t: Timestamp) -> ActivityFeatures {
        let times = self.update_times(author);
        let count = times.partition_point(|&u| u < t);
        if count == 0 {
            return ActivityFeatures::default();
        }
        let first = times[0];
        let last = times[count - 1];
        let tenure_secs = ((t - first) as f64).max(SECONDS_PER_DAY);
        let tenure_months = tenure_secs / (DAYS_PER_MONTH * SECONDS_PER_DAY);
        let sites = self.author_sites.get(author.index()).map_or(&[][..], Vec::as_slice);
        let own_sites = &sites[..sites.partition_point(|&(first, _)| first < t)];
        ActivityFeatures {
            update_count: count as f64,
            update_frequency: count as f64 / tenure_months,
            days_since_most_recent_update: (t - last) as f64 / SECONDS_PER_DAY,
            days_since_first_update: (t - first) as f64 / SECONDS_PER_DAY,
            is_multisite: own_sites.len() >= 2,
            is_mixedsite: own_sites.iter().any(|&(_, s)| {
                self.second_author_time
                    .get(s.index())
                    .copied()
                    .flatten()
                    .is_some_and(|second| second < t)
            }),
        }
    }

    /// CSV `author_id,role,is_shared,health_condition,state,first_update_time`.
    pub fn write_csv<W: Write>(&self, mut out: W, ids: &IdTables) -> std::io::Result<()> {
        writeln!(out, "author_id,role,is_shared,health_condition,state,first_update_time")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(ids.author_name(r.author)),
                r.role.map_or("", Role::as_str),
                r.is_shared_account,
                csv_field(r.health_condition.as_deref().unwrap_or("")),
                csv_field(r.state.as_deref().unwrap_or("")),
                r.first_update_time.map_or(String::new(), |t| t.to_string()),
            )?;
        }
        Ok(())
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Author export as read back by the report stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorRow {
    pub author: AuthorId,
    pub role: Option<Role>,
    pub state: Option<String>,
}

pub fn read_author_rows(path: &Path, ids: &mut IdTables) -> Result<Vec<AuthorRow>> {
    let mut out = Vec::new();
    read_rows(path, Format::Csv, &["author_id", "role", "state"], |row| {
        let role = match row.get("role") {
            None => None,
            Some(r) => Some(r.parse().map_err(|_| row.error("role", format!("unknown role `{r}`")))?),
        };
        out.push(AuthorRow {
            author: ids.author(row.require("author_id")?),
            role,
            state: row.get("state").map(String::from),
        });
        Ok(())
    })?;
    Ok(out)
}
