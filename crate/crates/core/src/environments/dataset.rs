//! File-backed multi-user contextual datasets.
//!
//! A dataset directory holds `items.csv`, `users.csv`, `graph.csv` and an
//! optional `keyterms.csv`. Feature files share the layout
//! `<id column>,f0,f1,...,f{d-1}`; the graph file is described in
//! [`crate::catalog::read_graph_csv`]. Each user row becomes one
//! [`ContextualEnv`] whose `θ*` is that row.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::contextual::random_unit_vector;
use super::{derive_keyterm_contexts, Contexts, ContextualEnv, DiscountFactor};
use crate::catalog::{display_name, read_graph_csv, write_graph_csv, Catalog, ItemId, KeyTermId, Labels};
use crate::error::{Error, Result};
use crate::linear::ContextMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub items: PathBuf,
    pub keyterms: Option<PathBuf>,
    pub graph: PathBuf,
    pub users: PathBuf,
}

impl DatasetFiles {
    /// Standard file names inside `dir`; `keyterms.csv` is used when present.
    pub fn in_dir(dir: &Path) -> Self {
        let keyterms = dir.join("keyterms.csv");
        DatasetFiles {
            items: dir.join("items.csv"),
            keyterms: keyterms.exists().then_some(keyterms),
            graph: dir.join("graph.csv"),
            users: dir.join("users.csv"),
        }
    }
}

/// Sizes and seed for a random dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub users: usize,
    pub items: usize,
    pub keyterms: usize,
    pub dim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub item_labels: Labels,
    pub keyterm_labels: Labels,
    pub user_labels: Labels,
    pub catalog: Catalog,
    pub item_contexts: ContextMatrix,
    /// Verbatim key-term contexts; derived per user when absent.
    pub keyterm_contexts: Option<ContextMatrix>,
    pub users: Vec<Vec<f64>>,
    /// Raw graph edges as read or generated, before normalization.
    pub graph_edges: Vec<(ItemId, KeyTermId, f64)>,
    pub graph_weighted: bool,
}

impl Dataset {
    pub fn load(files: &DatasetFiles) -> Result<Self> {
        let (item_labels, item_contexts) = read_feature_csv(&files.items, "item_id")?;
        let (user_labels, users) = read_feature_csv(&files.users, "user_id")?;
        let dim = item_contexts.dim();
        check_dim(&files.users, users.dim(), dim)?;
        let (keyterm_labels, keyterm_contexts) = match &files.keyterms {
            Some(path) => {
                let (labels, m) = read_feature_csv(path, "keyterm_id")?;
                check_dim(path, m.dim(), dim)?;
                (Some(labels), Some(m))
            }
            None => (None, None),
        };
        let graph = read_graph_csv(&files.graph, Some(&item_labels), keyterm_labels.as_ref())?;
        let catalog = graph
            .normalized_catalog()
            .map_err(|e| Error::input(format!("{}: {e}", display_name(&files.graph))))?;
        Ok(Dataset {
            item_labels,
            keyterm_labels: graph.keyterms,
            user_labels,
            catalog,
            item_contexts,
            keyterm_contexts,
            users: users.rows().map(<[f64]>::to_vec).collect(),
            graph_edges: graph.edges,
            graph_weighted: graph.weighted,
        })
    }

    /// Random unit-sphere item contexts and user vectors with a balanced
    /// binary assignment of items to key-terms.
    pub fn generate(spec: &GeneratorSpec) -> Result<Self> {
        if spec.users == 0 || spec.items == 0 || spec.keyterms == 0 || spec.dim == 0 {
            return Err(Error::input("dataset sizes and dimension must be positive"));
        }
        if spec.items < spec.keyterms {
            return Err(Error::input(format!(
                "{} items cannot cover {} key-terms",
                spec.items, spec.keyterms
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let item_rows: Vec<Vec<f64>> = (0..spec.items)
            .map(|_| random_unit_vector(&mut rng, spec.dim))
            .collect();
        let users: Vec<Vec<f64>> = (0..spec.users)
            .map(|_| random_unit_vector(&mut rng, spec.dim))
            .collect();
        let mut order: Vec<u32> = (0..spec.items as u32).collect();
        order.shuffle(&mut rng);
        let mut edges: Vec<(ItemId, KeyTermId, f64)> = order
            .iter()
            .enumerate()
            .map(|(j, &a)| (ItemId(a), KeyTermId((j % spec.keyterms) as u32), 1.0))
            .collect();
        edges.sort_by_key(|e| (e.0, e.1));
        // Number key-terms by first appearance in item order so that reading
        // the written graph back reproduces the same ids.
        let mut relabel = vec![u32::MAX; spec.keyterms];
        let mut next = 0;
        for e in &mut edges {
            let slot = &mut relabel[e.1.index()];
            if *slot == u32::MAX {
                *slot = next;
                next += 1;
            }
            e.1 = KeyTermId(*slot);
        }
        let catalog = Catalog::normalized(spec.items, spec.keyterms, edges.clone())?;
        Ok(Dataset {
            item_labels: Labels::sequential(spec.items),
            keyterm_labels: Labels::sequential(spec.keyterms),
            user_labels: Labels::sequential(spec.users),
            catalog,
            item_contexts: ContextMatrix::from_rows(spec.dim, &item_rows)?,
            keyterm_contexts: None,
            users,
            graph_edges: edges,
            graph_weighted: false,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<DatasetFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let items = dir.join("items.csv");
        let users = dir.join("users.csv");
        let graph = dir.join("graph.csv");
        write_feature_csv(&items, "item_id", &self.item_labels, self.item_contexts.rows())?;
        write_feature_csv(
            &users,
            "user_id",
            &self.user_labels,
            self.users.iter().map(Vec::as_slice),
        )?;
        let keyterms = match &self.keyterm_contexts {
            Some(m) => {
                let path = dir.join("keyterms.csv");
                write_feature_csv(&path, "keyterm_id", &self.keyterm_labels, m.rows())?;
                Some(path)
            }
            None => None,
        };
        write_graph_csv(
            &graph,
            &self.graph_edges,
            &self.item_labels,
            &self.keyterm_labels,
            self.graph_weighted,
        )?;
        Ok(DatasetFiles {
            items,
            keyterms,
            graph,
            users,
        })
    }

    pub fn dim(&self) -> usize {
        self.item_contexts.dim()
    }

    /// One environment per user. User `u`'s noise stream is stream `u` of the
    /// generator seeded with `seed`.
    pub fn environments(
        &self,
        lambda: DiscountFactor,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Vec<ContextualEnv>> {
        self.users
            .iter()
            .enumerate()
            .map(|(u, theta)| {
                let keyterms = match &self.keyterm_contexts {
                    Some(m) => m.clone(),
                    None => derive_keyterm_contexts(
                        &self.catalog,
                        &self.item_contexts,
                        theta,
                        lambda,
                    )?,
                };
                let contexts = Contexts::new(self.item_contexts.clone(), keyterms)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u as u64);
                ContextualEnv::with_rng(
                    self.catalog.clone(),
                    theta.clone(),
                    contexts,
                    noise_sigma,
                    rng,
                )
                .map_err(|e| Error::input(format!("user {}: {e}", self.user_labels.name(u as u32))))
            })
            .collect()
    }
}

/// Loads a dataset and builds one environment per user.
pub fn load_dataset_env(
    files: &DatasetFiles,
    lambda: DiscountFactor,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<ContextualEnv>> {
    Dataset::load(files)?.environments(lambda, noise_sigma, seed)
}

fn check_dim(path: &Path, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::data(
            display_name(path),
            1,
            format!("dimension mismatch: {found} features but items have {expected}"),
        ));
    }
    Ok(())
}

fn read_feature_csv(path: &Path, id_column: &str) -> Result<(Labels, ContextMatrix)> {
    let file_name = display_name(path);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.get(0) != Some(id_column) {
        return Err(Error::data(
            &file_name,
            1,
            format!("first column must be {id_column}"),
        ));
    }
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(Error::data(&file_name, 1, "no feature columns"));
    }
    for (j, h) in headers.iter().skip(1).enumerate() {
        if h != format!("f{j}") {
            return Err(Error::data(
                &file_name,
                1,
                format!("feature column {} must be named f{j}, found {h}", j + 1),
            ));
        }
    }

    let mut labels = Labels::new();
    let mut matrix = ContextMatrix::new(dim);
    let mut row = vec![0.0; dim];
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| Error::data(&file_name, line, e.to_string()))?;
        if record.len() != dim + 1 {
            return Err(Error::data(
                &file_name,
                line,
                format!("dimension mismatch: {} fields, expected {}", record.len(), dim + 1),
            ));
        }
        if labels.push_unique(&record[0]).is_none() {
            return Err(Error::data(
                &file_name,
                line,
                format!("duplicate id {}", &record[0]),
            ));
        }
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::data(&file_name, line, format!("bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::data(&file_name, line, format!("non-finite value {field}")));
            }
            row[j] = v;
        }
        matrix
            .push(&row)
            .map_err(|e| Error::data(&file_name, line, e.to_string()))?;
    }
    if matrix.is_empty() {
        return Err(Error::data(&file_name, 1, "no rows"));
    }
    Ok((labels, matrix))
}

fn write_feature_csv<'a>(
    path: &Path,
    id_column: &str,
    labels: &Labels,
    rows: impl Iterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut rows = rows.peekable();
    let dim = rows.peek().map_or(0, |r| r.len());
    let mut header = vec![id_column.to_string()];
    header.extend((0..dim).map(|j| format!("f{j}")));
    writer.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for (i, row) in rows.enumerate() {
        let mut record = vec![labels.name(i as u32).to_string()];
        record.extend(row.iter().map(|v| v.to_string()));
        writer.write_record(&record).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
