//! Independent line-by-line transcriptions of the policies, shared by the
//! golden-trace tests and the acceptance run.
#![allow(dead_code)]

use conbandit::environments::DiscountFactor;
use conbandit::{Action, Environment, ItemId, KeyTermId};
use nalgebra::{DMatrix, DVector};

pub fn lam() -> DiscountFactor {
    DiscountFactor::new(0.5).unwrap()
}

/// Contiguous blocks: key-term k owns items k*per .. (k+1)*per.
fn members(k: usize, per: usize) -> std::ops::Range<usize> {
    k * per..(k + 1) * per
}

fn rho(t: usize, n: usize) -> f64 {
    if n == 0 {
        f64::INFINITY
    } else {
        (3.0 * (t as f64).ln() / (2.0 * n as f64)).sqrt()
    }
}

/// Hierarchical UCB written straight from the listing.
pub fn hier_ucb_oracle(env: &mut dyn Environment, kt: usize, per: usize, gamma: f64, horizon: usize) -> Vec<Action> {
    let mut mu = vec![1.0; kt * per];
    let mut n = vec![0usize; kt * per];
    let mut mu_k = vec![1.0; kt];
    let mut n_k = vec![0usize; kt];
    let mut t = 1usize;
    let mut out = Vec::new();
    while out.len() < horizon {
        // line 5: best key-term by UCB
        let mut k_bar = 0;
        for k in 1..kt {
            if mu_k[k] + rho(t, n_k[k]) > mu_k[k_bar] + rho(t, n_k[k_bar]) {
                k_bar = k;
            }
        }
        // line 6: best item inside it (binary weights)
        let mut a_bar = k_bar * per;
        for a in members(k_bar, per) {
            if mu[a] + rho(t, n[a]) > mu[a_bar] + rho(t, n[a_bar]) {
                a_bar = a;
            }
        }
        // line 7: switching condition; with gamma = 0 the radii cancel
        let widen = |r: f64| if gamma == 0.0 { 0.0 } else { gamma * r };
        let lhs = mu[a_bar] - widen(rho(t, n[a_bar]));
        let rhs = mu_k[k_bar] + widen(rho(t, n_k[k_bar]));
        if !(lhs >= rhs) {
            // lines 8-10: ask, update, advance
            let action = Action::KeyTerm(KeyTermId(k_bar as u32));
            let r = env.step(action, t as u64).unwrap();
            n_k[k_bar] += 1;
            mu_k[k_bar] += (r - mu_k[k_bar]) / n_k[k_bar] as f64;
            t += 1;
            out.push(action);
            if out.len() == horizon {
                break;
            }
        }
        // lines 12-14: recommend, update, advance
        let action = Action::Item(ItemId(a_bar as u32));
        let r = env.step(action, t as u64).unwrap();
        n[a_bar] += 1;
        mu[a_bar] += (r - mu[a_bar]) / n[a_bar] as f64;
        t += 1;
        out.push(action);
    }
    out
}

pub fn ucb_oracle(env: &mut dyn Environment, arms: usize, horizon: usize) -> Vec<Action> {
    let mut mu = vec![1.0; arms];
    let mut n = vec![0usize; arms];
    (1..=horizon)
        .map(|t| {
            let mut best = 0;
            for a in 1..arms {
                if mu[a] + rho(t, n[a]) > mu[best] + rho(t, n[best]) {
                    best = a;
                }
            }
            let action = Action::Item(ItemId(best as u32));
            let r = env.step(action, t as u64).unwrap();
            n[best] += 1;
            mu[best] += (r - mu[best]) / n[best] as f64;
            action
        })
        .collect()
}

struct Ridge {
    m: DMatrix<f64>,
    b: DVector<f64>,
}

impl Ridge {
    fn new(d: usize) -> Self {
        Ridge {
            m: DMatrix::identity(d, d),
            b: DVector::zeros(d),
        }
    }

    /// (xᵀθ, α‖x‖_{M⁻¹}) with θ and M⁻¹ from a direct solve.
    fn score(&self, x: &DVector<f64>, alpha: f64) -> (f64, f64) {
        let inv = self.m.clone().try_inverse().unwrap();
        let theta = &inv * &self.b;
        (x.dot(&theta), alpha * x.dot(&(&inv * x)).sqrt())
    }

    fn update(&mut self, x: &DVector<f64>, r: f64) {
        self.m += x * x.transpose();
        self.b += x * r;
    }
}

/// Hierarchical LinUCB written straight from the listing.
pub fn hier_linucb_oracle(
    env: &mut dyn Environment,
    kt: usize,
    per: usize,
    gamma: f64,
    alpha: f64,
    horizon: usize,
) -> Vec<Action> {
    let ctx = env.contexts().unwrap().clone();
    let d = ctx.dim();
    let x = |a: usize| DVector::from_column_slice(ctx.items.row(a));
    let xk = |k: usize| DVector::from_column_slice(ctx.keyterms.row(k));
    let mut item = Ridge::new(d);
    let mut key = Ridge::new(d);
    let mut t = 1u64;
    let mut out = Vec::new();
    while out.len() < horizon {
        let ucb = |s: (f64, f64)| s.0 + s.1;
        let mut k_bar = 0;
        for k in 1..kt {
            if ucb(key.score(&xk(k), alpha)) > ucb(key.score(&xk(k_bar), alpha)) {
                k_bar = k;
            }
        }
        let mut a_bar = k_bar * per;
        for a in members(k_bar, per) {
            if ucb(item.score(&x(a), alpha)) > ucb(item.score(&x(a_bar), alpha)) {
                a_bar = a;
            }
        }
        let (ia, ca) = item.score(&x(a_bar), alpha);
        let (ik, ck) = key.score(&xk(k_bar), alpha);
        if !(ia - gamma * ca >= ik + gamma * ck) {
            let action = Action::KeyTerm(KeyTermId(k_bar as u32));
            let r = env.step(action, t).unwrap();
            key.update(&xk(k_bar), r);
            t += 1;
            out.push(action);
            if out.len() == horizon {
                break;
            }
        }
        let action = Action::Item(ItemId(a_bar as u32));
        let r = env.step(action, t).unwrap();
        item.update(&x(a_bar), r);
        t += 1;
        out.push(action);
    }
    out
}
