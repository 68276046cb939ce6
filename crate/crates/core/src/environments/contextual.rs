use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    argmax_action, check_best_item_in_best_keyterm, derive_keyterm_contexts, Action, Contexts,
    DiscountFactor, Environment, RewardKind,
};
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::linear::ContextMatrix;

const NORM_SLACK: f64 = 1e-9;

/// Linear rewards `xᵀθ* + ε` with Gaussian noise `ε ~ N(0, σ²)`.
#[derive(Debug, Clone)]
pub struct ContextualEnv {
    catalog: Catalog,
    theta: Vec<f64>,
    contexts: Contexts,
    noise_sigma: f64,
    item_values: Vec<f64>,
    keyterm_values: Vec<f64>,
    optimal: (f64, Action),
    rng: ChaCha8Rng,
}

impl ContextualEnv {
    pub fn new(
        catalog: Catalog,
        theta: Vec<f64>,
        contexts: Contexts,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::with_rng(
            catalog,
            theta,
            contexts,
            noise_sigma,
            ChaCha8Rng::seed_from_u64(seed),
        )
    }

    pub(crate) fn with_rng(
        catalog: Catalog,
        theta: Vec<f64>,
        contexts: Contexts,
        noise_sigma: f64,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let report = catalog.validate();
        if !report.is_valid() {
            return Err(Error::input(report.messages().join("; ")));
        }
        contexts.check_sizes(&catalog)?;
        if theta.len() != contexts.dim() {
            return Err(Error::input(format!(
                "theta has dimension {} but contexts have {}",
                theta.len(),
                contexts.dim()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("theta has a non-finite entry"));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::input(format!("noise sigma {noise_sigma} must be >= 0")));
        }
        for (name, m) in [("item", &contexts.items), ("key-term", &contexts.keyterms)] {
            for (i, row) in m.rows().enumerate() {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1.0 + NORM_SLACK {
                    return Err(Error::input(format!(
                        "{name} {i} context has norm {norm} > 1"
                    )));
                }
            }
        }
        let item_values: Vec<f64> = (0..contexts.items.len())
            .map(|a| contexts.items.dot(a, &theta))
            .collect();
        let keyterm_values: Vec<f64> = (0..contexts.keyterms.len())
            .map(|k| contexts.keyterms.dot(k, &theta))
            .collect();
        if let Some(v) = item_values
            .iter()
            .chain(&keyterm_values)
            .find(|v| v.abs() > 1.0 + NORM_SLACK)
        {
            return Err(Error::input(format!("expected reward {v} outside [-1, 1]")));
        }
        check_best_item_in_best_keyterm(&catalog, &item_values, &keyterm_values)?;
        let optimal = argmax_action(&item_values, &keyterm_values);
        Ok(ContextualEnv {
            catalog,
            theta,
            contexts,
            noise_sigma,
            item_values,
            keyterm_values,
            optimal,
            rng,
        })
    }

    /// Key-term contexts derived from the item contexts as `λ W x_{a_k*}`.
    pub fn with_derived_keyterms(
        catalog: Catalog,
        theta: Vec<f64>,
        item_contexts: ContextMatrix,
        lambda: DiscountFactor,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let keyterms = derive_keyterm_contexts(&catalog, &item_contexts, &theta, lambda)?;
        let contexts = Contexts::new(item_contexts, keyterms)?;
        ContextualEnv::new(catalog, theta, contexts, noise_sigma, seed)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn item_values(&self) -> &[f64] {
        &self.item_values
    }

    pub fn keyterm_values(&self) -> &[f64] {
        &self.keyterm_values
    }
}

impl Environment for ContextualEnv {
    fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn contexts(&self) -> Option<&Contexts> {
        Some(&self.contexts)
    }

    fn reward_kind(&self) -> RewardKind {
        RewardKind::Real
    }

    fn expected_reward(&self, action: Action) -> Result<f64> {
        action.check(&self.catalog)?;
        Ok(match action {
            Action::Item(a) => self.item_values[a.index()],
            Action::KeyTerm(k) => self.keyterm_values[k.index()],
        })
    }

    fn step(&mut self, action: Action, _round: u64) -> Result<f64> {
        let mean = self.expected_reward(action)?;
        let z: f64 = self.rng.sample(StandardNormal);
        Ok(mean + self.noise_sigma * z)
    }

    fn optimal(&self) -> (f64, Action) {
        self.optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimMode {
    /// `d = |A|`, `x_{a_i} = e_i`, `θ*_i = i / |A|`.
    OneHot,
    /// `d = dim`, `θ*` and item contexts uniform on the unit sphere, items
    /// relabeled in ascending order of expected reward.
    RandomUnit { dim: usize },
}

pub(crate) fn random_unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Contextual counterpart of the synthetic stochastic setup: the same
/// contiguous block catalog with key-term contexts `λ x_{a_k*}`.
pub fn build_synthetic_contextual(
    num_keyterms: usize,
    items_per_keyterm: usize,
    mode: DimMode,
    lambda: DiscountFactor,
    noise_sigma: f64,
    seed: u64,
) -> Result<ContextualEnv> {
    let catalog = Catalog::contiguous_blocks(num_keyterms, items_per_keyterm)?;
    let n = catalog.num_items();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (theta, items) = match mode {
        DimMode::OneHot => {
            let theta: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
            let mut items = ContextMatrix::new(n);
            let mut row = vec![0.0; n];
            for a in 0..n {
                row[a] = 1.0;
                items.push(&row)?;
                row[a] = 0.0;
            }
            (theta, items)
        }
        DimMode::RandomUnit { dim } => {
            if dim == 0 {
                return Err(Error::input("context dimension must be at least 1"));
            }
            let theta = random_unit_vector(&mut rng, dim);
            let mut raw: Vec<(f64, Vec<f64>)> = (0..n)
                .map(|_| {
                    let x = random_unit_vector(&mut rng, dim);
                    let value = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
                    (value, x)
                })
                .collect();
            raw.sort_by(|a, b| a.0.total_cmp(&b.0));
            let rows: Vec<Vec<f64>> = raw.into_iter().map(|(_, x)| x).collect();
            (theta, ContextMatrix::from_rows(dim, &rows)?)
        }
    };
    let keyterms = derive_keyterm_contexts(&catalog, &items, &theta, lambda)?;
    let contexts = Contexts::new(items, keyterms)?;
    ContextualEnv::with_rng(catalog, theta, contexts, noise_sigma, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ItemId, KeyTermId};

    fn lam(v: f64) -> DiscountFactor {
        DiscountFactor::new(v).unwrap()
    }

    fn unit_env(theta: Vec<f64>, x: Vec<f64>, sigma: f64, seed: u64) -> ContextualEnv {
        let catalog = Catalog::contiguous_blocks(1, 1).unwrap();
        let items = ContextMatrix::from_rows(theta.len(), &[x.clone()]).unwrap();
        let keyterms = ContextMatrix::from_rows(theta.len(), &[x]).unwrap();
        ContextualEnv::new(
            catalog,
            theta,
            Contexts::new(items, keyterms).unwrap(),
            sigma,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_unit_projection() {
        let mut env = unit_env(vec![1.0, 0.0], vec![1.0, 0.0], 0.0, 0);
        assert_eq!(env.step(Action::Item(ItemId(0)), 1).unwrap(), 1.0);
    }

    #[test]
    fn noiseless_orthogonal_is_zero() {
        // orthogonal item; key-term must still hold the best item so reuse it
        let catalog = Catalog::contiguous_blocks(1, 2).unwrap();
        let items = ContextMatrix::from_rows(2, &[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let keyterms = ContextMatrix::from_rows(2, &[[1.0, 0.0]]).unwrap();
        let mut env = ContextualEnv::new(
            catalog,
            vec![1.0, 0.0],
            Contexts::new(items, keyterms).unwrap(),
            0.0,
            0,
        )
        .unwrap();
        assert_eq!(env.step(Action::Item(ItemId(0)), 1).unwrap(), 0.0);
    }

    #[test]
    fn noisy_rewards_reproducible() {
        let run = || {
            let mut env = unit_env(vec![0.6, 0.8], vec![0.0, 1.0], 0.1, 42);
            (1..=5)
                .map(|t| env.step(Action::Item(ItemId(0)), t).unwrap())
                .collect::<Vec<_>>()
        };
        let first = run();
        assert_eq!(first, run());
        assert!(first.iter().any(|&r| r != 0.8));
    }

    #[test]
    fn keyterm_expected_reward_is_dot_product() {
        let catalog = Catalog::contiguous_blocks(1, 1).unwrap();
        let items = ContextMatrix::from_rows(2, &[[1.0, 0.0]]).unwrap();
        let keyterms = ContextMatrix::from_rows(2, &[[0.5, 0.0]]).unwrap();
        let env = ContextualEnv::new(
            catalog,
            vec![0.9, 0.0],
            Contexts::new(items, keyterms).unwrap(),
            0.0,
            0,
        )
        .unwrap();
        let v = env.expected_reward(Action::KeyTerm(KeyTermId(0))).unwrap();
        assert!((v - 0.45).abs() < 1e-15);
    }

    #[test]
    fn one_hot_synthetic() {
        let env = build_synthetic_contextual(10, 10, DimMode::OneHot, lam(0.5), 0.0, 3).unwrap();
        assert_eq!(env.expected_reward(Action::Item(ItemId(99))).unwrap(), 1.0);
        assert_eq!(env.expected_reward(Action::KeyTerm(KeyTermId(9))).unwrap(), 0.5);
        assert_eq!(env.optimal(), (1.0, Action::Item(ItemId(99))));

        let env = build_synthetic_contextual(1, 1, DimMode::OneHot, lam(0.5), 0.0, 3).unwrap();
        assert_eq!(env.theta(), &[1.0]);
        let ctx = env.contexts().unwrap();
        assert_eq!(ctx.items.row(0), &[1.0]);
        assert_eq!(ctx.keyterms.row(0), &[0.5]);
    }

    #[test]
    fn random_unit_keyterm_identity() {
        for seed in 0..20 {
            let env = build_synthetic_contextual(
                4,
                5,
                DimMode::RandomUnit { dim: 6 },
                lam(0.5),
                0.0,
                seed,
            )
            .unwrap();
            let items = env.item_values();
            assert!(items.windows(2).all(|w| w[0] <= w[1]), "items sorted");
            for k in 0..4 {
                let best = items[k * 5..(k + 1) * 5]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((env.keyterm_values()[k] - 0.5 * best).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_oversized_context() {
        let catalog = Catalog::contiguous_blocks(1, 1).unwrap();
        let items = ContextMatrix::from_rows(1, &[[2.0]]).unwrap();
        let keyterms = ContextMatrix::from_rows(1, &[[0.5]]).unwrap();
        let err = ContextualEnv::new(
            catalog,
            vec![0.1],
            Contexts::new(items, keyterms).unwrap(),
            0.0,
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("norm"));
    }
}
