//! Decision policies behind one select/update interface.
//!
//! Hierarchical policies first pick the key-term with the highest upper
//! confidence bound, then the best item inside it, and ask about the
//! key-term unless a conservative estimate of that item already beats a
//! generous estimate of the key-term. An ask is always followed by the item
//! chosen in the same decision; that item is cached as the pending action.

mod linucb;
mod ucb;

use serde::{Deserialize, Serialize};

pub use linucb::{freqcon_schedule, FreqConLinUcb, FreqSchedule, HierLinUcb, LinUcb};
pub use ucb::{switching_condition, ucb_confidence_radius, HierUcb, PolicyStats, Ucb};

use crate::catalog::{Catalog, ItemId, KeyTermId};
use crate::environments::{Action, Contexts, Environment, RewardKind};
use crate::error::{Error, Result};

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Chooses the action for the next round.
    fn select(&mut self, contexts: Option<&Contexts>) -> Result<Action>;

    /// Feeds back the reward of the action returned by the last `select`.
    fn update(&mut self, action: Action, contexts: Option<&Contexts>, reward: f64) -> Result<()>;

    /// The catalog the policy was built for; `None` for policies that do not
    /// depend on one.
    fn catalog(&self) -> Option<&Catalog> {
        None
    }

    /// State of the last decision, for trace logging.
    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot::default()
    }
}

/// What the last `select` saw and did.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolicySnapshot {
    /// Switching-condition value; `None` when the condition was not evaluated
    /// (a pending item was replayed or the policy has no such condition).
    pub switching: Option<bool>,
    /// A pending item is cached after this decision.
    pub pending: bool,
    /// Key-term with the highest upper confidence bound at decision time.
    pub leading_keyterm: Option<KeyTermId>,
}

/// Switching and exploration parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierParams {
    /// Larger values make the switch to item-only play harder.
    pub gamma: f64,
    /// Radius scale for the linear policies.
    pub alpha: f64,
}

impl HierParams {
    pub fn new(gamma: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("alpha", alpha)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::input(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(HierParams { gamma, alpha })
    }
}

impl Default for HierParams {
    fn default() -> Self {
        HierParams {
            gamma: 1.0,
            alpha: 1.0,
        }
    }
}

/// Outcome of one hierarchical decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierDecision {
    pub keyterm: KeyTermId,
    pub item: ItemId,
    pub switching: bool,
}

/// Picks `k̄* = argmax_k (mean + radius)`, then
/// `ā* = argmax_{a ∈ A_k̄*} W_{a,k̄*} (mean + radius)`, then evaluates the
/// switching condition on the pair. Scores are `(mean, radius)`; ties go to
/// the lowest index.
pub fn hierarchical_decision(
    catalog: &Catalog,
    keyterm_score: impl Fn(usize) -> (f64, f64),
    item_score: impl Fn(usize) -> (f64, f64),
    gamma: f64,
) -> HierDecision {
    let mut best_k = 0;
    let mut best_k_ucb = f64::NEG_INFINITY;
    let mut best_k_score = (0.0, 0.0);
    for k in 0..catalog.num_keyterms() {
        let score = keyterm_score(k);
        let ucb = score.0 + score.1;
        if ucb > best_k_ucb || k == 0 {
            best_k = k;
            best_k_ucb = ucb;
            best_k_score = score;
        }
    }

    let members = catalog.members(best_k);
    let mut best_a = members[0].0;
    let mut best_a_value = f64::NEG_INFINITY;
    let mut best_a_score = (0.0, 0.0);
    for (i, &(a, w)) in members.iter().enumerate() {
        let score = item_score(a.index());
        let value = w * (score.0 + score.1);
        if value > best_a_value || i == 0 {
            best_a = a;
            best_a_value = value;
            best_a_score = score;
        }
    }

    HierDecision {
        keyterm: KeyTermId(best_k as u32),
        item: best_a,
        switching: switching_condition(
            best_a_score.0,
            best_a_score.1,
            best_k_score.0,
            best_k_score.1,
            gamma,
        ),
    }
}

/// Index of the largest `mean + radius`, lowest index on ties.
pub(crate) fn argmax_ucb(n: usize, score: impl Fn(usize) -> (f64, f64)) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for i in 0..n {
        let (mean, radius) = score(i);
        let value = mean + radius;
        if value > best_value || i == 0 {
            best = i;
            best_value = value;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    HierUcb,
    Ucb,
    HierLinucb,
    Linucb,
    FreqconLinucb,
    /// Always plays the environment's optimal action; zero regret reference.
    Oracle,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::HierUcb => "hier-ucb",
            PolicyKind::Ucb => "ucb",
            PolicyKind::HierLinucb => "hier-linucb",
            PolicyKind::Linucb => "linucb",
            PolicyKind::FreqconLinucb => "freqcon-linucb",
            PolicyKind::Oracle => "oracle",
        }
    }

    pub fn needs_contexts(self) -> bool {
        matches!(
            self,
            PolicyKind::HierLinucb | PolicyKind::Linucb | PolicyKind::FreqconLinucb
        )
    }
}

/// Everything needed to build a policy for an environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub params: HierParams,
    pub schedule: FreqSchedule,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, params: HierParams) -> Self {
        PolicySpec {
            kind,
            params,
            schedule: FreqSchedule::default(),
        }
    }

    pub fn build(&self, env: &dyn Environment) -> Result<Box<dyn Policy>> {
        let catalog = env.catalog().clone();
        let bounded = env.reward_kind() == RewardKind::Bernoulli;
        let dim = || {
            env.contexts().map(Contexts::dim).ok_or_else(|| {
                Error::input(format!(
                    "{} needs item and key-term contexts but the environment has none",
                    self.kind.as_str()
                ))
            })
        };
        Ok(match self.kind {
            PolicyKind::HierUcb => Box::new(HierUcb::new(catalog, self.params, bounded)),
            PolicyKind::Ucb => Box::new(Ucb::new(catalog, bounded)),
            PolicyKind::HierLinucb => Box::new(HierLinUcb::new(catalog, dim()?, self.params)?),
            PolicyKind::Linucb => Box::new(LinUcb::new(catalog, dim()?, self.params)?),
            PolicyKind::FreqconLinucb => Box::new(FreqConLinUcb::new(
                catalog,
                dim()?,
                self.params,
                self.schedule,
            )?),
            PolicyKind::Oracle => Box::new(OraclePolicy::new(env.optimal().1)),
        })
    }
}

/// Plays one fixed action forever.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    action: Action,
}

impl OraclePolicy {
    pub fn new(action: Action) -> Self {
        OraclePolicy { action }
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn select(&mut self, _contexts: Option<&Contexts>) -> Result<Action> {
        Ok(self.action)
    }

    fn update(&mut self, _action: Action, _contexts: Option<&Contexts>, _reward: f64) -> Result<()> {
        Ok(())
    }
}
