use serde::{Deserialize, Serialize};

use super::{argmax_ucb, hierarchical_decision, HierParams, Policy, PolicySnapshot};
use crate::catalog::{Catalog, ItemId, KeyTermId};
use crate::environments::{Action, Contexts};
use crate::error::{Error, Result};
use crate::linear::{ContextMatrix, QuadFormCache, RidgeState};

fn require<'a>(contexts: Option<&'a Contexts>, dim: usize, catalog: &Catalog) -> Result<&'a Contexts> {
    let ctx = contexts.ok_or_else(|| Error::input("contextual policy called without contexts"))?;
    if ctx.dim() != dim {
        return Err(Error::input(format!(
            "contexts have dimension {} but the policy expects {dim}",
            ctx.dim()
        )));
    }
    if ctx.items.len() != catalog.num_items() || ctx.keyterms.len() != catalog.num_keyterms() {
        return Err(Error::input("contexts do not cover the catalog"));
    }
    Ok(ctx)
}

/// A ridge state plus cached `xᵀM⁻¹x` for one fixed set of contexts.
#[derive(Debug, Clone)]
struct ScoredRidge {
    ridge: RidgeState,
    cache: Option<QuadFormCache>,
}

impl ScoredRidge {
    fn new(dim: usize) -> Result<Self> {
        Ok(ScoredRidge {
            ridge: RidgeState::new(dim)?,
            cache: None,
        })
    }

    fn ensure(&mut self, contexts: &ContextMatrix) {
        if self.cache.is_none() {
            self.cache = Some(QuadFormCache::new(&self.ridge, contexts));
        }
    }

    /// `(xᵢᵀθ̂, α‖xᵢ‖_{M⁻¹})`; call `ensure` first.
    fn score(&self, contexts: &ContextMatrix, i: usize, alpha: f64) -> (f64, f64) {
        let cache = self.cache.as_ref().expect("cache initialized");
        (contexts.dot(i, self.ridge.estimate()), cache.radius(i, alpha))
    }

    fn update(&mut self, x: &[f64], reward: f64, contexts: &ContextMatrix) -> Result<()> {
        let delta = self.ridge.update(x, reward)?;
        if let Some(cache) = self.cache.as_mut() {
            cache.apply(&delta, &self.ridge, contexts);
        }
        Ok(())
    }
}

/// Hierarchical LinUCB: separate ridge models for key-term and item feedback.
#[derive(Debug, Clone)]
pub struct HierLinUcb {
    catalog: Catalog,
    params: HierParams,
    dim: usize,
    items: ScoredRidge,
    keyterms: ScoredRidge,
    round: u64,
    pending: Option<ItemId>,
    last: PolicySnapshot,
}

impl HierLinUcb {
    pub fn new(catalog: Catalog, dim: usize, params: HierParams) -> Result<Self> {
        Ok(HierLinUcb {
            catalog,
            params,
            dim,
            items: ScoredRidge::new(dim)?,
            keyterms: ScoredRidge::new(dim)?,
            round: 0,
            pending: None,
            last: PolicySnapshot::default(),
        })
    }

    pub fn item_ridge(&self) -> &RidgeState {
        &self.items.ridge
    }

    pub fn keyterm_ridge(&self) -> &RidgeState {
        &self.keyterms.ridge
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn pending(&self) -> Option<ItemId> {
        self.pending
    }
}

impl Policy for HierLinUcb {
    fn name(&self) -> &'static str {
        "hier-linucb"
    }

    fn catalog(&self) -> Option<&Catalog> {
        Some(&self.catalog)
    }

    fn select(&mut self, contexts: Option<&Contexts>) -> Result<Action> {
        let ctx = require(contexts, self.dim, &self.catalog)?;
        if let Some(item) = self.pending.take() {
            self.last = PolicySnapshot {
                switching: None,
                pending: false,
                leading_keyterm: self.last.leading_keyterm,
            };
            return Ok(Action::Item(item));
        }
        self.items.ensure(&ctx.items);
        self.keyterms.ensure(&ctx.keyterms);
        let alpha = self.params.alpha;
        let (items, keyterms) = (&self.items, &self.keyterms);
        let d = hierarchical_decision(
            &self.catalog,
            |k| keyterms.score(&ctx.keyterms, k, alpha),
            |a| items.score(&ctx.items, a, alpha),
            self.params.gamma,
        );
        let action = if d.switching {
            Action::Item(d.item)
        } else {
            self.pending = Some(d.item);
            Action::KeyTerm(d.keyterm)
        };
        self.last = PolicySnapshot {
            switching: Some(d.switching),
            pending: self.pending.is_some(),
            leading_keyterm: Some(d.keyterm),
        };
        Ok(action)
    }

    fn update(&mut self, action: Action, contexts: Option<&Contexts>, reward: f64) -> Result<()> {
        let ctx = require(contexts, self.dim, &self.catalog)?;
        action.check(&self.catalog)?;
        match action {
            Action::Item(a) => self.items.update(ctx.items.row(a.index()), reward, &ctx.items)?,
            Action::KeyTerm(k) => {
                self.keyterms
                    .update(ctx.keyterms.row(k.index()), reward, &ctx.keyterms)?
            }
        }
        self.round += 1;
        Ok(())
    }

    fn snapshot(&self) -> PolicySnapshot {
        self.last
    }
}

/// Non-conversational LinUCB over all items.
#[derive(Debug, Clone)]
pub struct LinUcb {
    catalog: Catalog,
    alpha: f64,
    dim: usize,
    items: ScoredRidge,
    round: u64,
}

impl LinUcb {
    pub fn new(catalog: Catalog, dim: usize, params: HierParams) -> Result<Self> {
        Ok(LinUcb {
            catalog,
            alpha: params.alpha,
            dim,
            items: ScoredRidge::new(dim)?,
            round: 0,
        })
    }

    pub fn ridge(&self) -> &RidgeState {
        &self.items.ridge
    }
}

impl Policy for LinUcb {
    fn name(&self) -> &'static str {
        "linucb"
    }

    fn catalog(&self) -> Option<&Catalog> {
        Some(&self.catalog)
    }

    fn select(&mut self, contexts: Option<&Contexts>) -> Result<Action> {
        let ctx = require(contexts, self.dim, &self.catalog)?;
        self.items.ensure(&ctx.items);
        let items = &self.items;
        let a = argmax_ucb(ctx.items.len(), |a| items.score(&ctx.items, a, self.alpha));
        Ok(Action::Item(ItemId(a as u32)))
    }

    fn update(&mut self, action: Action, contexts: Option<&Contexts>, reward: f64) -> Result<()> {
        let ctx = require(contexts, self.dim, &self.catalog)?;
        let Action::Item(a) = action else {
            return Err(Error::input("linucb never asks about key-terms"));
        };
        action.check(&self.catalog)?;
        self.items.update(ctx.items.row(a.index()), reward, &ctx.items)?;
        self.round += 1;
        Ok(())
    }
}

/// Cumulative ask budget `b(t) = scale · ⌊log_base t⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqSchedule {
    pub scale: u64,
    pub base: u64,
}

impl Default for FreqSchedule {
    fn default() -> Self {
        FreqSchedule { scale: 10, base: 10 }
    }
}

impl FreqSchedule {
    pub fn budget(&self, t: u64) -> u64 {
        if self.base < 2 || t == 0 {
            return 0;
        }
        // integer floor(log_base t), exact at powers of the base
        let mut exponent = 0;
        let mut power: u64 = 1;
        while let Some(next) = power.checked_mul(self.base) {
            if next > t {
                break;
            }
            power = next;
            exponent += 1;
        }
        self.scale * exponent
    }
}

/// `10 ⌊log₁₀ t⌋`.
pub fn freqcon_schedule(t: u64) -> u64 {
    FreqSchedule::default().budget(t)
}

/// Fixed-frequency conversational baseline: asks key-terms whenever the
/// number of asks so far is behind `b(t)`, otherwise plays LinUCB over all
/// items. One ridge model is fit to both kinds of feedback.
#[derive(Debug, Clone)]
pub struct FreqConLinUcb {
    catalog: Catalog,
    alpha: f64,
    dim: usize,
    schedule: FreqSchedule,
    ridge: RidgeState,
    item_cache: Option<QuadFormCache>,
    keyterm_cache: Option<QuadFormCache>,
    round: u64,
    asks: u64,
}

impl FreqConLinUcb {
    pub fn new(
        catalog: Catalog,
        dim: usize,
        params: HierParams,
        schedule: FreqSchedule,
    ) -> Result<Self> {
        if schedule.base < 2 {
            return Err(Error::input("schedule base must be at least 2"));
        }
        Ok(FreqConLinUcb {
            catalog,
            alpha: params.alpha,
            dim,
            schedule,
            ridge: RidgeState::new(dim)?,
            item_cache: None,
            keyterm_cache: None,
            round: 0,
            asks: 0,
        })
    }

    pub fn asks(&self) -> u64 {
        self.asks
    }

    pub fn ridge(&self) -> &RidgeState {
        &self.ridge
    }
}

impl Policy for FreqConLinUcb {
    fn name(&self) -> &'static str {
        "freqcon-linucb"
    }

    fn catalog(&self) -> Option<&Catalog> {
        Some(&self.catalog)
    }

    fn select(&mut self, contexts: Option<&Contexts>) -> Result<Action> {
        let ctx = require(contexts, self.dim, &self.catalog)?;
        if self.item_cache.is_none() {
            self.item_cache = Some(QuadFormCache::new(&self.ridge, &ctx.items));
            self.keyterm_cache = Some(QuadFormCache::new(&self.ridge, &ctx.keyterms));
        }
        let t = self.round + 1;
        let theta = self.ridge.estimate();
        let alpha = self.alpha;
        if self.asks < self.schedule.budget(t) {
            let cache = self.keyterm_cache.as_ref().expect("initialized");
            let k = argmax_ucb(ctx.keyterms.len(), |k| {
                (ctx.keyterms.dot(k, theta), cache.radius(k, alpha))
            });
            self.asks += 1;
            return Ok(Action::KeyTerm(KeyTermId(k as u32)));
        }
        let cache = self.item_cache.as_ref().expect("initialized");
        let a = argmax_ucb(ctx.items.len(), |a| {
            (ctx.items.dot(a, theta), cache.radius(a, alpha))
        });
        Ok(Action::Item(ItemId(a as u32)))
    }

    fn update(&mut self, action: Action, contexts: Option<&Contexts>, reward: f64) -> Result<()> {
        let ctx = require(contexts, self.dim, &self.catalog)?;
        action.check(&self.catalog)?;
        let delta = self.ridge.update(ctx.of(action), reward)?;
        if let (Some(items), Some(keyterms)) = (self.item_cache.as_mut(), self.keyterm_cache.as_mut()) {
            items.apply(&delta, &self.ridge, &ctx.items);
            keyterms.apply(&delta, &self.ridge, &ctx.keyterms);
        }
        self.round += 1;
        Ok(())
    }
}
