//! Symbol groups: sets of base symbols that act as one interchangeable
//! extended symbol, written `(A|B)`. Groups are generated by radius
//! clustering in the embedding space, or supplied by hand via a groups file
//! (one group per line, members separated by `|`).

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::corpus::{Alphabet, SymbolId};
use crate::embeddings::{euclidean, EmbeddingTable};
use crate::error::{Error, Result};

pub const WILDCARD_DISPLAY: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    /// Sorted, duplicate-free symbol ids; always at least 2.
    members: Vec<SymbolId>,
    /// Canonical rendering: `(A|B|...)` with members in surface order, or `*`.
    display: String,
}

impl Group {
    pub fn new(mut members: Vec<SymbolId>, alphabet: &Alphabet) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.len() < 2 {
            return Err(Error::InvalidInput(
                "a group needs at least 2 members".into(),
            ));
        }
        let display = render_display(&members, alphabet);
        Ok(Group { members, display })
    }

    fn with_display(mut members: Vec<SymbolId>, display: String) -> Self {
        members.sort_unstable();
        members.dedup();
        Group { members, display }
    }

    /// The full-alphabet group, displayed as `*`; matches any symbol.
    pub fn wildcard(alphabet: &Alphabet) -> Result<Self> {
        if alphabet.len() < 2 {
            return Err(Error::InvalidInput(
                "wildcard needs an alphabet of at least 2 symbols".into(),
            ));
        }
        Ok(Group::with_display(
            alphabet.ids().collect(),
            WILDCARD_DISPLAY.to_string(),
        ))
    }

    pub fn members(&self) -> &[SymbolId] {
        &self.members
    }

    pub fn display(&self) -> &str {
        &self.display
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: SymbolId) -> bool {
        self.members.binary_search(&id).is_ok()
    }
}

fn render_display(members: &[SymbolId], alphabet: &Alphabet) -> String {
    let mut names: Vec<&str> = members.iter().map(|&m| alphabet.name(m)).collect();
    names.sort_unstable();
    format!("({})", names.join("|"))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupSet {
    groups: Vec<Group>,
    member_index: HashMap<SymbolId, Vec<usize>>,
}

impl GroupSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a set from groups in the given order. Duplicate member sets are
    /// rejected.
    pub fn new(groups: Vec<Group>) -> Result<Self> {
        for (i, g) in groups.iter().enumerate() {
            for other in &groups[..i] {
                if g.members == other.members {
                    return Err(Error::InvalidInput(format!(
                        "duplicate group {}",
                        g.display
                    )));
                }
            }
        }
        let mut member_index: HashMap<SymbolId, Vec<usize>> = HashMap::new();
        for (i, g) in groups.iter().enumerate() {
            for &m in &g.members {
                member_index.entry(m).or_default().push(i);
            }
        }
        Ok(GroupSet {
            groups,
            member_index,
        })
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn get(&self, idx: usize) -> &Group {
        &self.groups[idx]
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Indices of all groups containing `id`.
    pub fn groups_of(&self, id: SymbolId) -> &[usize] {
        self.member_index.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn find_by_members(&self, members: &[SymbolId]) -> Option<usize> {
        self.groups.iter().position(|g| g.members == members)
    }

    /// Copy of this set with the wildcard group appended, unless a
    /// full-alphabet group is already present.
    pub fn with_wildcard(&self, alphabet: &Alphabet) -> Result<GroupSet> {
        let wc = Group::wildcard(alphabet)?;
        if self.find_by_members(wc.members()).is_some() {
            return Ok(self.clone());
        }
        let mut groups = self.groups.clone();
        groups.push(wc);
        GroupSet::new(groups)
    }

    pub fn save(&self, alphabet: &Alphabet, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        if self.groups.is_empty() {
            out.push_str("# no groups at this radius\n");
        }
        for g in &self.groups {
            let mut names: Vec<&str> = g.members.iter().map(|&m| alphabet.name(m)).collect();
            names.sort_unstable();
            out.push_str(&names.join("|"));
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(out.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Loads a groups file, interning unseen member names into `alphabet`.
pub fn load_groups(path: impl AsRef<Path>, alphabet: &mut Alphabet) -> Result<GroupSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_groups(&text, &path.display().to_string(), alphabet)
}

pub fn parse_groups(text: &str, origin: &str, alphabet: &mut Alphabet) -> Result<GroupSet> {
    let mut groups = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let members: Vec<SymbolId> = line.split('|').map(|n| alphabet.intern(n.trim())).collect();
        let g = Group::new(members, alphabet)
            .map_err(|e| Error::parse(origin, lineno + 1, e.to_string()))?;
        groups.push(g);
    }
    GroupSet::new(groups)
}

/// Radius clustering over the embedding space: for each symbol with a
/// resolvable embedding, the candidate group is every embedded symbol within
/// `radius` (Euclidean). Singleton candidates are dropped, exact duplicates
/// removed, output ordered by (size, display).
pub fn generate_groups(
    alphabet: &Alphabet,
    table: &EmbeddingTable,
    radius: f64,
    joiner: &str,
) -> Result<GroupSet> {
    if !table.is_normalized() {
        return Err(Error::InvalidInput(
            "group generation requires a normalized embedding table".into(),
        ));
    }
    if radius < 0.0 {
        return Err(Error::InvalidInput("radius must be non-negative".into()));
    }
    let embedded: Vec<(SymbolId, Vec<f64>)> = alphabet
        .ids()
        .filter_map(|id| {
            table
                .symbol_embedding(alphabet.name(id), joiner)
                .map(|v| (id, v))
        })
        .collect();
    let mut groups: Vec<Group> = Vec::new();
    for (_, center) in &embedded {
        let members: Vec<SymbolId> = embedded
            .iter()
            .filter(|(_, v)| euclidean(v, center) <= radius)
            .map(|&(id, _)| id)
            .collect();
        if members.len() < 2 {
            continue;
        }
        let g = Group::new(members, alphabet)?;
        if !groups.iter().any(|o| o.members == g.members) {
            groups.push(g);
        }
    }
    groups.sort_by(|a, b| {
        a.len()
            .cmp(&b.len())
            .then_with(|| a.display.cmp(&b.display))
    });
    GroupSet::new(groups)
}
