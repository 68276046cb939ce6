//! Reward-generating environments.
//!
//! An environment answers two questions about an [`Action`]: a sampled reward
//! from its own seeded stream, and the deterministic expected reward used for
//! pseudo-regret accounting.

mod contextual;
mod dataset;
mod stochastic;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use contextual::{build_synthetic_contextual, ContextualEnv, DimMode};
pub use dataset::{load_dataset_env, Dataset, DatasetFiles, GeneratorSpec};
pub use stochastic::{build_synthetic_stochastic, one_hot_contexts, StochasticEnv};

use crate::catalog::{Catalog, ItemId, KeyTermId};
use crate::error::{Error, Result};
use crate::linear::ContextMatrix;

/// The choice made in one round: recommend an item or ask about a key-term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Item(ItemId),
    KeyTerm(KeyTermId),
}

impl Action {
    pub fn is_keyterm(self) -> bool {
        matches!(self, Action::KeyTerm(_))
    }

    pub fn kind_str(self) -> &'static str {
        match self {
            Action::Item(_) => "item",
            Action::KeyTerm(_) => "keyterm",
        }
    }

    pub fn id(self) -> u32 {
        match self {
            Action::Item(a) => a.0,
            Action::KeyTerm(k) => k.0,
        }
    }

    pub fn check(self, catalog: &Catalog) -> Result<()> {
        match self {
            Action::Item(a) if a.index() >= catalog.num_items() => {
                Err(Error::input(format!("item {a} out of range")))
            }
            Action::KeyTerm(k) if k.index() >= catalog.num_keyterms() => {
                Err(Error::input(format!("key-term {k} out of range")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind_str(), self.id())
    }
}

/// Key-term reward discount, `0 < λ ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DiscountFactor(f64);

impl DiscountFactor {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda <= 1.0 {
            Ok(DiscountFactor(lambda))
        } else {
            Err(Error::input(format!("lambda out of range: {lambda} not in (0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    /// Rewards are draws in {0, 1}.
    Bernoulli,
    /// Rewards are unbounded reals (linear model plus noise).
    Real,
}

/// Static feature vectors for items and key-terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Contexts {
    pub items: ContextMatrix,
    pub keyterms: ContextMatrix,
}

impl Contexts {
    pub fn new(items: ContextMatrix, keyterms: ContextMatrix) -> Result<Self> {
        if items.dim() != keyterms.dim() {
            return Err(Error::input(format!(
                "item contexts have dimension {} but key-term contexts have {}",
                items.dim(),
                keyterms.dim()
            )));
        }
        Ok(Contexts { items, keyterms })
    }

    pub fn dim(&self) -> usize {
        self.items.dim()
    }

    pub fn of(&self, action: Action) -> &[f64] {
        match action {
            Action::Item(a) => self.items.row(a.index()),
            Action::KeyTerm(k) => self.keyterms.row(k.index()),
        }
    }

    pub(crate) fn check_sizes(&self, catalog: &Catalog) -> Result<()> {
        if self.items.len() != catalog.num_items() || self.keyterms.len() != catalog.num_keyterms()
        {
            return Err(Error::input(format!(
                "contexts cover {} items and {} key-terms but the catalog has {} and {}",
                self.items.len(),
                self.keyterms.len(),
                catalog.num_items(),
                catalog.num_keyterms()
            )));
        }
        Ok(())
    }
}

pub trait Environment: Send {
    fn catalog(&self) -> &Catalog;

    /// Feature vectors for contextual policies, if the environment has them.
    fn contexts(&self) -> Option<&Contexts>;

    fn reward_kind(&self) -> RewardKind;

    fn expected_reward(&self, action: Action) -> Result<f64>;

    /// Samples one reward; advances the environment's random stream by
    /// exactly one draw.
    fn step(&mut self, action: Action, round: u64) -> Result<f64>;

    /// Best expected reward over all items and key-terms and the action
    /// attaining it.
    fn optimal(&self) -> (f64, Action);
}

/// `μ̃_k = λ · max_{a ∈ A_k} W_{a,k} μ_a`.
pub fn derive_keyterm_means(
    catalog: &Catalog,
    item_means: &[f64],
    lambda: DiscountFactor,
) -> Result<Vec<f64>> {
    if item_means.len() != catalog.num_items() {
        return Err(Error::input(format!(
            "{} item means for {} items",
            item_means.len(),
            catalog.num_items()
        )));
    }
    Ok((0..catalog.num_keyterms())
        .map(|k| lambda.get() * best_member(catalog, k, item_means).1)
        .collect())
}

/// `x̃_k = λ · W_{a,k} · x_a` for `a = argmax_{a ∈ A_k} W_{a,k} x_aᵀθ`, so that
/// `x̃_kᵀθ = λ · max_{a ∈ A_k} W_{a,k} x_aᵀθ` holds exactly in real arithmetic.
pub fn derive_keyterm_contexts(
    catalog: &Catalog,
    item_contexts: &ContextMatrix,
    theta: &[f64],
    lambda: DiscountFactor,
) -> Result<ContextMatrix> {
    if item_contexts.len() != catalog.num_items() || theta.len() != item_contexts.dim() {
        return Err(Error::input("item contexts do not match the catalog or theta"));
    }
    let item_rewards: Vec<f64> = (0..catalog.num_items())
        .map(|a| item_contexts.dot(a, theta))
        .collect();
    let mut out = ContextMatrix::new(item_contexts.dim());
    for k in 0..catalog.num_keyterms() {
        let (best, _) = best_member(catalog, k, &item_rewards);
        let w = catalog.weight(best, KeyTermId(k as u32));
        let scale = lambda.get() * w;
        let row: Vec<f64> = item_contexts
            .row(best.index())
            .iter()
            .map(|v| scale * v)
            .collect();
        out.push(&row)?;
    }
    Ok(out)
}

/// `argmax_{a ∈ A_k} W_{a,k} v_a` (lowest index on ties) and the maximum.
fn best_member(catalog: &Catalog, k: usize, values: &[f64]) -> (ItemId, f64) {
    let mut best = (ItemId(u32::MAX), f64::NEG_INFINITY);
    for &(a, w) in catalog.members(k) {
        let v = w * values[a.index()];
        if v > best.1 {
            best = (a, v);
        }
    }
    best
}

/// Maximum over items, then key-terms; ties go to the lowest-index item,
/// then the lowest-index key-term.
pub(crate) fn argmax_action(item_values: &[f64], keyterm_values: &[f64]) -> (f64, Action) {
    let mut best = (f64::NEG_INFINITY, Action::Item(ItemId(0)));
    for (a, &v) in item_values.iter().enumerate() {
        if v > best.0 {
            best = (v, Action::Item(ItemId(a as u32)));
        }
    }
    for (k, &v) in keyterm_values.iter().enumerate() {
        if v > best.0 {
            best = (v, Action::KeyTerm(KeyTermId(k as u32)));
        }
    }
    best
}

/// The best item must lie inside the best key-term's member set.
pub(crate) fn check_best_item_in_best_keyterm(
    catalog: &Catalog,
    item_values: &[f64],
    keyterm_values: &[f64],
) -> Result<()> {
    let best_item = item_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_keyterm = keyterm_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let holds = keyterm_values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == best_keyterm)
        .any(|(k, _)| {
            catalog
                .members(k)
                .iter()
                .any(|&(a, _)| item_values[a.index()] == best_item)
        });
    if holds {
        Ok(())
    } else {
        Err(Error::input(
            "the best item does not belong to the best key-term; hierarchical \
             policies assume it does",
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyterm_means_of_first_synthetic_block() {
        let catalog = Catalog::contiguous_blocks(10, 10).unwrap();
        let means: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let derived =
            derive_keyterm_means(&catalog, &means, DiscountFactor::new(0.5).unwrap()).unwrap();
        assert_eq!(derived[0], 0.05);
        for (i, &m) in derived.iter().enumerate() {
            assert!((m - (i + 1) as f64 / 20.0).abs() < 1e-15);
        }
    }

    #[test]
    fn keyterm_mean_identity_at_lambda_one() {
        let catalog = Catalog::contiguous_blocks(1, 1).unwrap();
        let derived =
            derive_keyterm_means(&catalog, &[0.7], DiscountFactor::new(1.0).unwrap()).unwrap();
        assert_eq!(derived, vec![0.7]);
    }

    #[test]
    fn keyterm_mean_uses_weight() {
        let catalog = Catalog::from_weights(
            1,
            2,
            [(ItemId(0), KeyTermId(0), 0.5), (ItemId(0), KeyTermId(1), 0.5)],
        );
        let derived =
            derive_keyterm_means(&catalog, &[0.8], DiscountFactor::new(0.5).unwrap()).unwrap();
        assert_eq!(derived, vec![0.2, 0.2]);
    }

    #[test]
    fn discount_factor_range() {
        assert!(DiscountFactor::new(1.0).is_ok());
        assert!(DiscountFactor::new(0.0).is_err());
        let err = DiscountFactor::new(1.5).unwrap_err();
        assert!(err.to_string().contains("lambda out of range"));
    }

    #[test]
    fn argmax_prefers_item_on_tie() {
        assert_eq!(
            argmax_action(&[0.2, 0.5], &[0.5]),
            (0.5, Action::Item(ItemId(1)))
        );
        assert_eq!(
            argmax_action(&[0.3], &[0.4]),
            (0.4, Action::KeyTerm(KeyTermId(0)))
        );
    }
}
