//! The weighted bipartite graph relating items to key-terms.
//!
//! Items and key-terms are addressed by dense indices. Each item row of the
//! weight matrix sums to one, and a key-term's member set `A_k` is the set of
//! items with a nonzero weight under it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums must be within this distance of one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KeyTermId(pub u32);

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl KeyTermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for KeyTermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One broken catalog invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeWeight { item: ItemId, keyterm: KeyTermId, weight: f64 },
    NonFiniteWeight { item: ItemId, keyterm: KeyTermId },
    RowSum { item: ItemId, sum: f64 },
    EmptyItem(ItemId),
    EmptyKeyTerm(KeyTermId),
    ItemOutOfRange { item: ItemId },
    KeyTermOutOfRange { keyterm: KeyTermId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeWeight { item, keyterm, weight } => {
                write!(f, "negative weight {weight} on item {item} key-term {keyterm}")
            }
            Violation::NonFiniteWeight { item, keyterm } => {
                write!(f, "non-finite weight on item {item} key-term {keyterm}")
            }
            Violation::RowSum { item, sum } => {
                write!(f, "row-sum violation item {item} (sum {sum})")
            }
            Violation::EmptyItem(item) => write!(f, "empty item {item}"),
            Violation::EmptyKeyTerm(k) => write!(f, "empty key-term {k}"),
            Violation::ItemOutOfRange { item } => write!(f, "item {item} out of range"),
            Violation::KeyTermOutOfRange { keyterm } => {
                write!(f, "key-term {keyterm} out of range")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// One line per violation.
    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

/// Immutable item/key-term graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    num_items: usize,
    num_keyterms: usize,
    // item -> [(key-term, weight)] ascending by key-term, zeros dropped
    rows: Vec<Vec<(KeyTermId, f64)>>,
    // key-term -> [(item, weight)] ascending by item, zeros dropped
    members: Vec<Vec<(ItemId, f64)>>,
    out_of_range: Vec<Violation>,
}

impl Catalog {
    /// Builds a catalog from raw edges without checking invariants; use
    /// [`Catalog::validate`] to inspect the result. Duplicate edges are summed.
    pub fn from_weights<I>(num_items: usize, num_keyterms: usize, weights: I) -> Self
    where
        I: IntoIterator<Item = (ItemId, KeyTermId, f64)>,
    {
        let mut merged: BTreeMap<(ItemId, KeyTermId), f64> = BTreeMap::new();
        let mut out_of_range = Vec::new();
        for (item, keyterm, w) in weights {
            if item.index() >= num_items {
                out_of_range.push(Violation::ItemOutOfRange { item });
                continue;
            }
            if keyterm.index() >= num_keyterms {
                out_of_range.push(Violation::KeyTermOutOfRange { keyterm });
                continue;
            }
            *merged.entry((item, keyterm)).or_insert(0.0) += w;
        }

        let mut rows = vec![Vec::new(); num_items];
        let mut members = vec![Vec::new(); num_keyterms];
        for ((item, keyterm), w) in merged {
            if w != 0.0 {
                rows[item.index()].push((keyterm, w));
                members[keyterm.index()].push((item, w));
            }
        }
        Catalog {
            num_items,
            num_keyterms,
            rows,
            members,
            out_of_range,
        }
    }

    /// Divides every item row by its sum. Rows already summing to one within
    /// 1e-12 are kept bitwise, so normalizing twice is a no-op.
    pub fn normalized<I>(num_items: usize, num_keyterms: usize, raw: I) -> Result<Self>
    where
        I: IntoIterator<Item = (ItemId, KeyTermId, f64)>,
    {
        let raw = Catalog::from_weights(num_items, num_keyterms, raw);
        if let Some(v) = raw.out_of_range.first() {
            return Err(Error::input(v.to_string()));
        }
        let mut edges = Vec::new();
        for (a, row) in raw.rows.iter().enumerate() {
            if let Some(&(k, w)) = row.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
                return Err(Error::input(format!(
                    "weight {w} on item {a} key-term {k} is not a nonnegative number"
                )));
            }
            let sum: f64 = row.iter().map(|(_, w)| w).sum();
            if !(sum > 0.0) {
                return Err(Error::input(format!("item {a} has an all-zero weight row")));
            }
            let keep = (sum - 1.0).abs() <= 1e-12;
            for &(k, w) in row {
                edges.push((ItemId(a as u32), k, if keep { w } else { w / sum }));
            }
        }
        let catalog = Catalog::from_weights(num_items, num_keyterms, edges);
        let report = catalog.validate();
        if !report.is_valid() {
            return Err(Error::input(report.messages().join("; ")));
        }
        Ok(catalog)
    }

    /// Binary catalog where key-term `k` owns the contiguous block of items
    /// `k * items_per_keyterm .. (k + 1) * items_per_keyterm`.
    pub fn contiguous_blocks(num_keyterms: usize, items_per_keyterm: usize) -> Result<Self> {
        if num_keyterms == 0 || items_per_keyterm == 0 {
            return Err(Error::input("catalog sizes must be positive"));
        }
        let edges = (0..num_keyterms).flat_map(|k| {
            (0..items_per_keyterm).map(move |j| {
                (
                    ItemId((k * items_per_keyterm + j) as u32),
                    KeyTermId(k as u32),
                    1.0,
                )
            })
        });
        Catalog::normalized(num_keyterms * items_per_keyterm, num_keyterms, edges)
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_keyterms(&self) -> usize {
        self.num_keyterms
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = self.out_of_range.clone();
        for (a, row) in self.rows.iter().enumerate() {
            let item = ItemId(a as u32);
            for &(keyterm, w) in row {
                if !w.is_finite() {
                    violations.push(Violation::NonFiniteWeight { item, keyterm });
                } else if w < 0.0 {
                    violations.push(Violation::NegativeWeight { item, keyterm, weight: w });
                }
            }
            if row.is_empty() {
                violations.push(Violation::EmptyItem(item));
            } else {
                let sum: f64 = row.iter().map(|(_, w)| w).sum();
                if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
                    violations.push(Violation::RowSum { item, sum });
                }
            }
        }
        for (k, m) in self.members.iter().enumerate() {
            if m.is_empty() {
                violations.push(Violation::EmptyKeyTerm(KeyTermId(k as u32)));
            }
        }
        ValidationReport { violations }
    }

    /// `A_k` with weights, ascending by item.
    pub fn items_of_keyterm(&self, k: KeyTermId) -> Result<&[(ItemId, f64)]> {
        self.members
            .get(k.index())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::input(format!("key-term {k} out of range")))
    }

    /// Unchecked variant for hot loops where `k` is known to be in range.
    pub(crate) fn members(&self, k: usize) -> &[(ItemId, f64)] {
        &self.members[k]
    }

    pub fn keyterms_of_item(&self, a: ItemId) -> Result<&[(KeyTermId, f64)]> {
        self.rows
            .get(a.index())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::input(format!("item {a} out of range")))
    }

    pub fn weight(&self, a: ItemId, k: KeyTermId) -> f64 {
        self.rows
            .get(a.index())
            .and_then(|row| row.iter().find(|(kk, _)| *kk == k))
            .map_or(0.0, |&(_, w)| w)
    }

    /// Every stored nonzero edge, ordered by item then key-term.
    pub fn edges(&self) -> impl Iterator<Item = (ItemId, KeyTermId, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(a, row)| {
            row.iter().map(move |&(k, w)| (ItemId(a as u32), k, w))
        })
    }
}

/// External string labels for dense ids, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Labels {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Labels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the existing id of `name` or assigns the next one.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    /// Adds a label that must not exist yet.
    pub fn push_unique(&mut self, name: &str) -> Option<u32> {
        if self.index.contains_key(name) {
            return None;
        }
        Some(self.intern(name))
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
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

    pub fn sequential(n: usize) -> Self {
        let mut labels = Labels::new();
        for i in 0..n {
            labels.intern(&i.to_string());
        }
        labels
    }
}

/// Graph file contents before any normalization.
#[derive(Debug, Clone)]
pub struct GraphFile {
    pub items: Labels,
    pub keyterms: Labels,
    pub edges: Vec<(ItemId, KeyTermId, f64)>,
    /// False when the weight column is absent (binary graph).
    pub weighted: bool,
}

impl GraphFile {
    /// Binary graphs are normalized; weighted graphs are taken verbatim.
    pub fn to_catalog(&self) -> Catalog {
        if self.weighted {
            Catalog::from_weights(self.items.len(), self.keyterms.len(), self.edges.clone())
        } else {
            Catalog::normalized(self.items.len(), self.keyterms.len(), self.edges.clone())
                .unwrap_or_else(|_| {
                    Catalog::from_weights(self.items.len(), self.keyterms.len(), self.edges.clone())
                })
        }
    }

    pub fn normalized_catalog(&self) -> Result<Catalog> {
        Catalog::normalized(self.items.len(), self.keyterms.len(), self.edges.clone())
    }
}

/// Reads `item_id,keyterm_id[,weight]`.
///
/// With `known_items`, every item label must already exist there; otherwise
/// labels are assigned in order of first appearance. The same holds for
/// `known_keyterms`.
pub fn read_graph_csv(
    path: &Path,
    known_items: Option<&Labels>,
    known_keyterms: Option<&Labels>,
) -> Result<GraphFile> {
    let file_name = display_name(path);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let weighted = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["item_id", "keyterm_id"] => false,
        ["item_id", "keyterm_id", "weight"] => true,
        other => {
            return Err(Error::data(
                &file_name,
                1,
                format!("expected header item_id,keyterm_id[,weight], found {}", other.join(",")),
            ))
        }
    };

    let mut items = known_items.cloned().unwrap_or_default();
    let mut keyterms = known_keyterms.cloned().unwrap_or_default();
    let mut edges = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| Error::data(&file_name, line, e.to_string()))?;
        let item_label = &record[0];
        let keyterm_label = &record[1];
        let item = match known_items {
            Some(known) => known.get(item_label).ok_or_else(|| {
                Error::data(&file_name, line, format!("unknown item id {item_label}"))
            })?,
            None => items.intern(item_label),
        };
        let keyterm = match known_keyterms {
            Some(known) => known.get(keyterm_label).ok_or_else(|| {
                Error::data(&file_name, line, format!("unknown key-term id {keyterm_label}"))
            })?,
            None => keyterms.intern(keyterm_label),
        };
        let weight = if weighted {
            let w: f64 = record[2].parse().map_err(|_| {
                Error::data(&file_name, line, format!("bad weight {:?}", &record[2]))
            })?;
            if !w.is_finite() || w < 0.0 {
                return Err(Error::data(
                    &file_name,
                    line,
                    format!("weight {w} must be finite and nonnegative"),
                ));
            }
            w
        } else {
            1.0
        };
        edges.push((ItemId(item), KeyTermId(keyterm), weight));
    }
    Ok(GraphFile {
        items,
        keyterms,
        edges,
        weighted,
    })
}

/// Writes the binary form (`item_id,keyterm_id`) when every weight is 1 before
/// normalization is implied, otherwise includes the weight column.
pub fn write_graph_csv(
    path: &Path,
    edges: &[(ItemId, KeyTermId, f64)],
    item_labels: &Labels,
    keyterm_labels: &Labels,
    weighted: bool,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: &[&str] = if weighted {
        &["item_id", "keyterm_id", "weight"]
    } else {
        &["item_id", "keyterm_id"]
    };
    writer.write_record(header).map_err(|e| Error::csv(path, e))?;
    for &(a, k, w) in edges {
        let mut row = vec![
            item_labels.name(a.0).to_string(),
            keyterm_labels.name(k.0).to_string(),
        ];
        if weighted {
            row.push(w.to_string());
        }
        writer.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn display_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
