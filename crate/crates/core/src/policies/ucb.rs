use super::{argmax_ucb, hierarchical_decision, Policy, PolicySnapshot};
use crate::catalog::{Catalog, ItemId};
use crate::environments::{Action, Contexts};
use crate::error::{Error, Result};
use crate::policies::HierParams;

/// `√(3 ln t / 2n)`, or `+∞` for an arm that has never been pulled.
pub fn ucb_confidence_radius(t: u64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    (3.0 * (t.max(1) as f64).ln() / (2.0 * n as f64)).sqrt()
}

/// `mean_item − γ·radius_item ≥ mean_keyterm + γ·radius_keyterm`.
///
/// With `γ = 0` the radii drop out entirely, so an infinite radius does not
/// produce `0·∞`.
pub fn switching_condition(
    mean_item: f64,
    radius_item: f64,
    mean_keyterm: f64,
    radius_keyterm: f64,
    gamma: f64,
) -> bool {
    let widen = |r: f64| if gamma == 0.0 { 0.0 } else { gamma * r };
    mean_item - widen(radius_item) >= mean_keyterm + widen(radius_keyterm)
}

/// Pull counts and empirical means for every item and key-term.
///
/// Means start at 1 and follow `μ̂ ← μ̂ + (r − μ̂)/T`, so the first
/// observation replaces the initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStats {
    pub item_counts: Vec<u64>,
    pub item_means: Vec<f64>,
    pub keyterm_counts: Vec<u64>,
    pub keyterm_means: Vec<f64>,
    /// Number of actions taken so far.
    pub round: u64,
}

impl PolicyStats {
    pub fn new(num_items: usize, num_keyterms: usize) -> Self {
        PolicyStats {
            item_counts: vec![0; num_items],
            item_means: vec![1.0; num_items],
            keyterm_counts: vec![0; num_keyterms],
            keyterm_means: vec![1.0; num_keyterms],
            round: 0,
        }
    }

    /// The 1-based index of the round about to be played.
    pub fn next_round(&self) -> u64 {
        self.round + 1
    }

    pub fn item_score(&self, t: u64, a: usize) -> (f64, f64) {
        (
            self.item_means[a],
            ucb_confidence_radius(t, self.item_counts[a]),
        )
    }

    pub fn keyterm_score(&self, t: u64, k: usize) -> (f64, f64) {
        (
            self.keyterm_means[k],
            ucb_confidence_radius(t, self.keyterm_counts[k]),
        )
    }

    fn record(&mut self, action: Action, reward: f64) -> Result<()> {
        let (count, mean) = match action {
            Action::Item(a) => (
                self.item_counts.get_mut(a.index()),
                self.item_means.get_mut(a.index()),
            ),
            Action::KeyTerm(k) => (
                self.keyterm_counts.get_mut(k.index()),
                self.keyterm_means.get_mut(k.index()),
            ),
        };
        let (Some(count), Some(mean)) = (count, mean) else {
            return Err(Error::input(format!("{action} out of range")));
        };
        *count += 1;
        *mean += (reward - *mean) / *count as f64;
        self.round += 1;
        Ok(())
    }
}

fn check_reward(bounded: bool, reward: f64) -> Result<()> {
    if !reward.is_finite() || (bounded && !(0.0..=1.0).contains(&reward)) {
        return Err(Error::input(format!("reward {reward} outside [0, 1]")));
    }
    Ok(())
}

/// Hierarchical UCB over key-terms and items.
#[derive(Debug, Clone)]
pub struct HierUcb {
    catalog: Catalog,
    params: HierParams,
    stats: PolicyStats,
    pending: Option<ItemId>,
    bounded: bool,
    last: PolicySnapshot,
}

impl HierUcb {
    /// `bounded` rejects rewards outside `[0, 1]`.
    pub fn new(catalog: Catalog, params: HierParams, bounded: bool) -> Self {
        let stats = PolicyStats::new(catalog.num_items(), catalog.num_keyterms());
        HierUcb {
            catalog,
            params,
            stats,
            pending: None,
            bounded,
            last: PolicySnapshot::default(),
        }
    }

    pub fn stats(&self) -> &PolicyStats {
        &self.stats
    }

    pub fn pending(&self) -> Option<ItemId> {
        self.pending
    }
}

impl Policy for HierUcb {
    fn name(&self) -> &'static str {
        "hier-ucb"
    }

    fn select(&mut self, _contexts: Option<&Contexts>) -> Result<Action> {
        if let Some(item) = self.pending.take() {
            self.last = PolicySnapshot {
                switching: None,
                pending: false,
                leading_keyterm: self.last.leading_keyterm,
            };
            return Ok(Action::Item(item));
        }
        let t = self.stats.next_round();
        let stats = &self.stats;
        let d = hierarchical_decision(
            &self.catalog,
            |k| stats.keyterm_score(t, k),
            |a| stats.item_score(t, a),
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

    fn update(&mut self, action: Action, _contexts: Option<&Contexts>, reward: f64) -> Result<()> {
        check_reward(self.bounded, reward)?;
        self.stats.record(action, reward)
    }

    fn catalog(&self) -> Option<&Catalog> {
        Some(&self.catalog)
    }

    fn snapshot(&self) -> PolicySnapshot {
        self.last
    }
}

/// Plain UCB over all items; never asks about key-terms.
#[derive(Debug, Clone)]
pub struct Ucb {
    catalog: Catalog,
    stats: PolicyStats,
    bounded: bool,
}

impl Ucb {
    pub fn new(catalog: Catalog, bounded: bool) -> Self {
        Ucb {
            stats: PolicyStats::new(catalog.num_items(), catalog.num_keyterms()),
            catalog,
            bounded,
        }
    }

    pub fn stats(&self) -> &PolicyStats {
        &self.stats
    }
}

impl Policy for Ucb {
    fn name(&self) -> &'static str {
        "ucb"
    }

    fn select(&mut self, _contexts: Option<&Contexts>) -> Result<Action> {
        let t = self.stats.next_round();
        let stats = &self.stats;
        let a = argmax_ucb(stats.item_counts.len(), |a| stats.item_score(t, a));
        Ok(Action::Item(ItemId(a as u32)))
    }

    fn update(&mut self, action: Action, _contexts: Option<&Contexts>, reward: f64) -> Result<()> {
        check_reward(self.bounded, reward)?;
        if let Action::KeyTerm(k) = action {
            return Err(Error::input(format!("ucb never asks about key-terms (got {k})")));
        }
        self.stats.record(action, reward)
    }

    fn catalog(&self) -> Option<&Catalog> {
        Some(&self.catalog)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::KeyTermId;

    #[test]
    fn radius_values() {
        assert_eq!(ucb_confidence_radius(1, 1), 0.0);
        let r = ucb_confidence_radius(100, 10);
        assert!((r - (3.0 * 100f64.ln() / 20.0).sqrt()).abs() < 1e-15);
        assert!((r - 0.831_13).abs() < 1e-5);
        assert_eq!(ucb_confidence_radius(5, 0), f64::INFINITY);
    }

    #[test]
    fn switching_examples() {
        assert!(switching_condition(0.9, 0.1, 0.4, 0.1, 1.0));
        assert!(!switching_condition(0.9, 0.1, 0.4, 0.1, 3.0));
        assert!(switching_condition(0.5, f64::INFINITY, 0.5, f64::INFINITY, 0.0));
        assert!(!switching_condition(0.4, 0.0, 0.5, f64::INFINITY, 0.0));
        assert!(!switching_condition(0.9, f64::INFINITY, 0.1, 0.0, 0.5));
        assert!(!switching_condition(0.9, 0.0, 0.1, f64::INFINITY, 0.5));
    }

    #[test]
    fn fresh_hier_ucb_asks_first() {
        let catalog = Catalog::contiguous_blocks(2, 2).unwrap();
        let mut p = HierUcb::new(catalog, HierParams::default(), true);
        assert_eq!(p.select(None).unwrap(), Action::KeyTerm(KeyTermId(0)));
        assert_eq!(p.pending(), Some(ItemId(0)));
        let snap = p.snapshot();
        assert_eq!(snap.switching, Some(false));
        assert!(snap.pending);
        p.update(Action::KeyTerm(KeyTermId(0)), None, 1.0).unwrap();
        assert_eq!(p.select(None).unwrap(), Action::Item(ItemId(0)));
        assert_eq!(p.snapshot().switching, None);
        assert_eq!(p.pending(), None);
    }

    #[test]
    fn single_arm_switches_to_items() {
        let catalog = Catalog::contiguous_blocks(1, 1).unwrap();
        let mut p = HierUcb::new(catalog, HierParams::default(), true);
        let mut saw_item_only = false;
        for _ in 0..400 {
            let a = p.select(None).unwrap();
            let r = match a {
                Action::Item(_) => 1.0,
                Action::KeyTerm(_) => 0.0,
            };
            if p.snapshot().switching == Some(true) {
                saw_item_only = true;
                assert_eq!(a, Action::Item(ItemId(0)));
            }
            p.update(a, None, r).unwrap();
        }
        assert!(saw_item_only);
    }

    #[test]
    fn incremental_means() {
        let catalog = Catalog::contiguous_blocks(1, 1).unwrap();
        let mut p = HierUcb::new(catalog, HierParams::default(), true);
        let a = Action::Item(ItemId(0));
        p.update(a, None, 0.0).unwrap();
        assert_eq!(p.stats().item_means[0], 0.0);
        p.update(a, None, 1.0).unwrap();
        assert_eq!(p.stats().item_means[0], 0.5);
        assert_eq!(p.stats().round, 2);
    }

    #[test]
    fn bounded_reward_check() {
        let catalog = Catalog::contiguous_blocks(1, 1).unwrap();
        let mut p = HierUcb::new(catalog.clone(), HierParams::default(), true);
        assert!(matches!(
            p.update(Action::Item(ItemId(0)), None, 1.5),
            Err(Error::Input(_))
        ));
        let mut p = HierUcb::new(catalog, HierParams::default(), false);
        assert!(p.update(Action::Item(ItemId(0)), None, 1.5).is_ok());
    }

    #[test]
    fn ucb_tie_break_and_preference() {
        let catalog = Catalog::contiguous_blocks(1, 2).unwrap();
        let mut p = Ucb::new(catalog, true);
        assert_eq!(p.select(None).unwrap(), Action::Item(ItemId(0)));
        for _ in 0..5 {
            p.update(Action::Item(ItemId(0)), None, 1.0).unwrap();
            p.update(Action::Item(ItemId(1)), None, 0.0).unwrap();
        }
        assert_eq!(p.select(None).unwrap(), Action::Item(ItemId(0)));
    }
}
