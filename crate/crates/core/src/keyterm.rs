//! Key-term reward aggregation from member-item ratings.
//!
//! Three rules map a category's item ratings to one key-term rating: the
//! plain mean, the mean of the top `α` fraction, and a weight-averaged mean
//! (for example weighted by review count).

use std::collections::BTreeMap;
use std::path::Path;

use crate::catalog::display_name;
use crate::error::{Error, Result};

/// Ratings must lie on this scale.
pub const RATING_SCALE: (f64, f64) = (1.0, 5.0);

pub fn simple_average(ratings: &[f64]) -> Result<f64> {
    if ratings.is_empty() {
        return Err(Error::input("average of an empty rating list"));
    }
    Ok(ratings.iter().sum::<f64>() / ratings.len() as f64)
}

/// Number of ratings kept by [`top_alpha_average`]: `⌈α·n⌉`, where products
/// within 1e-9 of an integer count as that integer (so `0.3 · 10` keeps 3).
pub fn top_alpha_count(n: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::input(format!("alpha {alpha} not in (0, 1]")));
    }
    let x = alpha * n as f64;
    let m = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    };
    Ok((m as usize).clamp(1, n.max(1)))
}

/// Mean of the `⌈α·n⌉` highest ratings. Equal ratings keep their input
/// order, so the selection is deterministic.
pub fn top_alpha_average(ratings: &[f64], alpha: f64) -> Result<f64> {
    if ratings.is_empty() {
        return Err(Error::input("average of an empty rating list"));
    }
    let m = top_alpha_count(ratings.len(), alpha)?;
    if m == ratings.len() {
        return simple_average(ratings);
    }
    let mut sorted = ratings.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    simple_average(&sorted[..m])
}

pub fn weighted_average(ratings: &[f64], weights: &[f64]) -> Result<f64> {
    if ratings.is_empty() {
        return Err(Error::input("average of an empty rating list"));
    }
    if ratings.len() != weights.len() {
        return Err(Error::input(format!(
            "{} ratings but {} weights",
            ratings.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::input(format!("weight {w} must be finite and nonnegative")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::input("weights sum to zero"));
    }
    if weights.iter().all(|&w| w == weights[0]) {
        return simple_average(ratings);
    }
    let dot: f64 = ratings.iter().zip(weights).map(|(r, w)| r * w).sum();
    Ok(dot / total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rating {
    pub item: String,
    pub rating: f64,
    pub weight: Option<f64>,
}

/// Ratings grouped by category, ordered by category label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingTable {
    categories: BTreeMap<String, Vec<Rating>>,
    weighted: bool,
}

impl RatingTable {
    pub fn new(weighted: bool) -> Self {
        RatingTable {
            categories: BTreeMap::new(),
            weighted,
        }
    }

    /// Every rating carries a weight.
    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn push(&mut self, category: &str, rating: Rating) -> Result<()> {
        let (lo, hi) = RATING_SCALE;
        if !(rating.rating >= lo && rating.rating <= hi) {
            return Err(Error::input(format!(
                "rating {} outside [{lo}, {hi}]",
                rating.rating
            )));
        }
        match (self.weighted, rating.weight) {
            (true, None) => return Err(Error::input("missing weight")),
            (false, Some(_)) => return Err(Error::input("unexpected weight")),
            (_, Some(w)) if !(w.is_finite() && w >= 0.0) => {
                return Err(Error::input(format!("weight {w} must be finite and nonnegative")))
            }
            _ => {}
        }
        self.categories
            .entry(category.to_string())
            .or_default()
            .push(rating);
        Ok(())
    }

    pub fn categories(&self) -> impl Iterator<Item = (&str, &[Rating])> {
        self.categories.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

/// Reads `category,item,rating[,weight]`.
pub fn read_ratings_csv(path: &Path) -> Result<RatingTable> {
    let file = display_name(path);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let weighted = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["category", "item", "rating"] => false,
        ["category", "item", "rating", "weight"] => true,
        other => {
            return Err(Error::data(
                &file,
                1,
                format!("expected header category,item,rating[,weight], found {}", other.join(",")),
            ))
        }
    };
    let mut table = RatingTable::new(weighted);
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| Error::data(&file, line, e.to_string()))?;
        let number = |c: usize, name: &str| -> Result<f64> {
            record[c]
                .parse()
                .map_err(|_| Error::data(&file, line, format!("bad {name} {:?}", &record[c])))
        };
        let rating = Rating {
            item: record[1].to_string(),
            rating: number(2, "rating")?,
            weight: if weighted { Some(number(3, "weight")?) } else { None },
        };
        table.push(&record[0], rating).map_err(|e| match e {
            Error::Input(m) => Error::data(&file, line, m),
            other => other,
        })?;
    }
    if table.is_empty() {
        return Err(Error::data(&file, 1, "no ratings"));
    }
    Ok(table)
}

/// Aggregates of one category.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub category: String,
    pub simple: f64,
    /// One value per requested `α`, in request order.
    pub top: Vec<f64>,
    pub weighted: Option<f64>,
}

/// One row per category, ordered by category label.
pub fn compare_aggregates(table: &RatingTable, alphas: &[f64]) -> Result<Vec<AggregateRow>> {
    if alphas.is_empty() {
        return Err(Error::input("no alpha values"));
    }
    table
        .categories()
        .map(|(category, entries)| {
            let ratings: Vec<f64> = entries.iter().map(|r| r.rating).collect();
            let top = alphas
                .iter()
                .map(|&a| top_alpha_average(&ratings, a))
                .collect::<Result<_>>()?;
            let weighted = if table.is_weighted() {
                let weights: Vec<f64> = entries.iter().map(|r| r.weight.unwrap_or(0.0)).collect();
                Some(
                    weighted_average(&ratings, &weights)
                        .map_err(|e| Error::input(format!("category {category}: {e}")))?,
                )
            } else {
                None
            };
            Ok(AggregateRow {
                category: category.to_string(),
                simple: simple_average(&ratings)?,
                top,
                weighted,
            })
        })
        .collect()
}

fn top_column(alpha: f64) -> String {
    format!("top_{alpha}")
}

/// Writes `category,simple,top_<α>...[,weighted]`.
pub fn write_report_csv(path: &Path, alphas: &[f64], rows: &[AggregateRow]) -> Result<()> {
    let weighted = rows.iter().any(|r| r.weighted.is_some());
    let mut header = vec!["category".to_string(), "simple".to_string()];
    header.extend(alphas.iter().map(|&a| top_column(a)));
    if weighted {
        header.push("weighted".to_string());
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        let mut rec = vec![row.category.clone(), row.simple.to_string()];
        rec.extend(row.top.iter().map(f64::to_string));
        if weighted {
            rec.push(row.weighted.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a report written by [`write_report_csv`], returning the `α` values
/// parsed from the column names and the rows.
pub fn read_report_csv(path: &Path) -> Result<(Vec<f64>, Vec<AggregateRow>)> {
    let file = display_name(path);
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let bad_header = || Error::data(&file, 1, "expected category,simple,top_<alpha>...[,weighted]");
    if headers.len() < 3 || &headers[0] != "category" || &headers[1] != "simple" {
        return Err(bad_header());
    }
    let weighted = &headers[headers.len() - 1] == "weighted";
    let top_end = headers.len() - usize::from(weighted);
    let alphas = headers
        .iter()
        .take(top_end)
        .skip(2)
        .map(|h| h.strip_prefix("top_").and_then(|a| a.parse().ok()).ok_or_else(bad_header))
        .collect::<Result<Vec<f64>>>()?;
    if alphas.is_empty() {
        return Err(bad_header());
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| Error::data(&file, line, e.to_string()))?;
        let num = |c: usize| -> Result<f64> {
            record[c]
                .parse()
                .map_err(|_| Error::data(&file, line, format!("bad {} {:?}", &headers[c], &record[c])))
        };
        rows.push(AggregateRow {
            category: record[0].to_string(),
            simple: num(1)?,
            top: (2..top_end).map(num).collect::<Result<_>>()?,
            weighted: if weighted { Some(num(top_end)?) } else { None },
        });
    }
    Ok((alphas, rows))
}
