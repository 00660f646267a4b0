//! Dense integer handles for the opaque string identifiers found in the logs.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// UTC seconds.
pub type Timestamp = i64;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(AuthorId);
id_type!(SiteId);
id_type!(UpdateId);

/// String interner handing out consecutive `u32` handles.
#[derive(Debug, Default, Clone)]
pub struct Interner {
    lookup: HashMap<Box<str>, u32>,
    names: Vec<Box<str>>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        let boxed: Box<str> = name.into();
        self.names.push(boxed.clone());
        self.lookup.insert(boxed, id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Renumber so that handle order equals lexical order of the names.
    ///
    /// Returns the old→new mapping; callers must rewrite every stored handle.
    pub fn canonicalize(&mut self) -> Vec<u32> {
        let mut order: Vec<u32> = (0..self.names.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| self.names[a as usize].cmp(&self.names[b as usize]));
        let mut remap = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old as usize] = new as u32;
        }
        let mut names = std::mem::take(&mut self.names);
        let mut sorted: Vec<Box<str>> = Vec::with_capacity(names.len());
        for &old in &order {
            sorted.push(std::mem::take(&mut names[old as usize]));
        }
        for (id, name) in sorted.iter().enumerate() {
            self.lookup.insert(name.clone(), id as u32);
        }
        self.names = sorted;
        remap
    }
}

/// Interners shared by every log of one dataset.
#[derive(Debug, Default, Clone)]
pub struct IdTables {
    pub authors: Interner,
    pub sites: Interner,
    pub updates: Interner,
}

impl IdTables {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn author(&mut self, name: &str) -> AuthorId {
        AuthorId(self.authors.intern(name))
    }

    pub fn site(&mut self, name: &str) -> SiteId {
        SiteId(self.sites.intern(name))
    }

    pub fn update(&mut self, name: &str) -> UpdateId {
        UpdateId(self.updates.intern(name))
    }

    pub fn author_name(&self, id: AuthorId) -> &str {
        self.authors.name(id.0)
    }

    pub fn site_name(&self, id: SiteId) -> &str {
        self.sites.name(id.0)
    }

    pub fn update_name(&self, id: UpdateId) -> &str {
        self.updates.name(id.0)
    }

    pub fn n_authors(&self) -> usize {
        self.authors.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalize_sorts_lexically() {
        let mut interner = Interner::new();
        for name in ["zeta", "alpha", "mid", "alpha"] {
            interner.intern(name);
        }
        let remap = interner.canonicalize();
        assert_eq!(remap, vec![2, 0, 1]);
        assert_eq!(interner.name(0), "alpha");
        assert_eq!(interner.get("zeta"), Some(2));
        assert_eq!(interner.intern("mid"), 1);
    }
}
