use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    argmax_action, check_best_item_in_best_keyterm, derive_keyterm_means, Action, Contexts,
    DiscountFactor, Environment, RewardKind,
};
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::linear::ContextMatrix;

/// Bernoulli rewards with fixed item and key-term means.
#[derive(Debug, Clone)]
pub struct StochasticEnv {
    catalog: Catalog,
    item_means: Vec<f64>,
    keyterm_means: Vec<f64>,
    contexts: Option<Contexts>,
    optimal: (f64, Action),
    rng: ChaCha8Rng,
}

impl StochasticEnv {
    pub fn new(
        catalog: Catalog,
        item_means: Vec<f64>,
        keyterm_means: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let report = catalog.validate();
        if !report.is_valid() {
            return Err(Error::input(report.messages().join("; ")));
        }
        if item_means.len() != catalog.num_items() {
            return Err(Error::input(format!(
                "{} item means for {} items",
                item_means.len(),
                catalog.num_items()
            )));
        }
        if keyterm_means.len() != catalog.num_keyterms() {
            return Err(Error::input(format!(
                "{} key-term means for {} key-terms",
                keyterm_means.len(),
                catalog.num_keyterms()
            )));
        }
        if let Some(m) = item_means
            .iter()
            .chain(&keyterm_means)
            .find(|m| !(0.0..=1.0).contains(*m))
        {
            return Err(Error::input(format!("Bernoulli mean {m} outside [0, 1]")));
        }
        check_best_item_in_best_keyterm(&catalog, &item_means, &keyterm_means)?;
        let optimal = argmax_action(&item_means, &keyterm_means);
        Ok(StochasticEnv {
            catalog,
            item_means,
            keyterm_means,
            contexts: None,
            optimal,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Key-term means derived as `λ · max W μ`.
    pub fn with_derived_keyterms(
        catalog: Catalog,
        item_means: Vec<f64>,
        lambda: DiscountFactor,
        seed: u64,
    ) -> Result<Self> {
        let keyterm_means = derive_keyterm_means(&catalog, &item_means, lambda)?;
        StochasticEnv::new(catalog, item_means, keyterm_means, seed)
    }

    /// Attaches feature vectors so contextual policies can run here.
    pub fn attach_contexts(&mut self, contexts: Contexts) -> Result<()> {
        contexts.check_sizes(&self.catalog)?;
        self.contexts = Some(contexts);
        Ok(())
    }

    pub fn item_means(&self) -> &[f64] {
        &self.item_means
    }

    pub fn keyterm_means(&self) -> &[f64] {
        &self.keyterm_means
    }
}

impl Environment for StochasticEnv {
    fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn contexts(&self) -> Option<&Contexts> {
        self.contexts.as_ref()
    }

    fn reward_kind(&self) -> RewardKind {
        RewardKind::Bernoulli
    }

    fn expected_reward(&self, action: Action) -> Result<f64> {
        action.check(&self.catalog)?;
        Ok(match action {
            Action::Item(a) => self.item_means[a.index()],
            Action::KeyTerm(k) => self.keyterm_means[k.index()],
        })
    }

    fn step(&mut self, action: Action, _round: u64) -> Result<f64> {
        let mean = self.expected_reward(action)?;
        let u: f64 = self.rng.random();
        Ok(if u < mean { 1.0 } else { 0.0 })
    }

    fn optimal(&self) -> (f64, Action) {
        self.optimal
    }
}

/// `num_keyterms` contiguous blocks of `items_per_keyterm` items; item `i`
/// (1-based) has mean `i / num_items`.
pub fn build_synthetic_stochastic(
    num_keyterms: usize,
    items_per_keyterm: usize,
    lambda: DiscountFactor,
    seed: u64,
) -> Result<StochasticEnv> {
    let catalog = Catalog::contiguous_blocks(num_keyterms, items_per_keyterm)?;
    let n = catalog.num_items();
    let means = (1..=n).map(|i| i as f64 / n as f64).collect();
    StochasticEnv::with_derived_keyterms(catalog, means, lambda, seed)
}

/// One-hot item contexts `x_a = e_a` and key-term contexts
/// `x̃_k = λ W e_{a_k*}` built against `θ = μ`, so linear scores reproduce the
/// item and key-term means.
pub fn one_hot_contexts(
    catalog: &Catalog,
    item_means: &[f64],
    lambda: DiscountFactor,
) -> Result<Contexts> {
    let n = catalog.num_items();
    let mut items = ContextMatrix::new(n);
    let mut row = vec![0.0; n];
    for a in 0..n {
        row[a] = 1.0;
        items.push(&row)?;
        row[a] = 0.0;
    }
    let keyterms = super::derive_keyterm_contexts(catalog, &items, item_means, lambda)?;
    Contexts::new(items, keyterms)
}
