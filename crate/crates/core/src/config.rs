//! Experiment configuration: strict TOML documents and built-in presets.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environments::{
    build_synthetic_contextual, build_synthetic_stochastic, one_hot_contexts, Dataset,
    DatasetFiles, DimMode, DiscountFactor, Environment, GeneratorSpec,
};
use crate::error::{Error, Result};
use crate::harness::EnvBuilder;
use crate::policies::{FreqSchedule, HierParams, PolicyKind, PolicySpec};

pub const PRESETS: [&str; 2] = ["paper-synthetic", "desk-contextual"];

fn default_level() -> f64 {
    0.95
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub horizon: u64,
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Confidence level of the reported intervals.
    #[serde(default = "default_level")]
    pub level: f64,
    /// Where `run` writes results; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub environment: EnvConfig,
    pub policies: Vec<PolicyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvConfig {
    SyntheticStochastic {
        num_keyterms: usize,
        items_per_keyterm: usize,
        lambda: f64,
    },
    SyntheticContextual {
        num_keyterms: usize,
        items_per_keyterm: usize,
        lambda: f64,
        dim_mode: DimMode,
        noise_sigma: f64,
    },
    /// Either `files` or `generate` must be given.
    Dataset {
        lambda: f64,
        noise_sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        files: Option<DatasetPaths>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        generate: Option<GeneratorSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub items: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyterms: Option<PathBuf>,
    pub graph: PathBuf,
    pub users: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Output name; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default = "default_one")]
    pub gamma: f64,
    #[serde(default = "default_one")]
    pub alpha: f64,
    #[serde(default)]
    pub schedule: FreqSchedule,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, gamma: f64, alpha: f64) -> Self {
        PolicyConfig {
            kind,
            label: None,
            gamma,
            alpha,
            schedule: FreqSchedule::default(),
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.kind.as_str())
    }

    pub fn spec(&self) -> Result<PolicySpec> {
        let mut spec = PolicySpec::new(self.kind, HierParams::new(self.gamma, self.alpha)?);
        spec.schedule = self.schedule;
        Ok(spec)
    }
}

impl RunConfig {
    /// Parses and validates a TOML document. Relative file paths are resolved
    /// against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        if let Some(base) = base_dir {
            config.resolve_paths(base);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let EnvConfig::Dataset {
            files: Some(files), ..
        } = &mut self.environment
        {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            fix(&mut files.items);
            fix(&mut files.graph);
            fix(&mut files.users);
            if let Some(k) = files.keyterms.as_mut() {
                fix(k);
            }
        }
        if let Some(out) = self.out_dir.as_mut() {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
    }

    /// Checks every semantic constraint, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.name.trim().is_empty() {
            return fail("name", "must not be empty".into());
        }
        if self.horizon == 0 {
            return fail("horizon", "must be at least 1".into());
        }
        if self.repetitions == 0 {
            return fail("repetitions", "must be at least 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return fail("level", format!("{} not in (0, 1)", self.level));
        }
        let (lambda, sigma) = match &self.environment {
            EnvConfig::SyntheticStochastic {
                num_keyterms,
                items_per_keyterm,
                lambda,
            } => {
                check_sizes(*num_keyterms, *items_per_keyterm)?;
                (*lambda, None)
            }
            EnvConfig::SyntheticContextual {
                num_keyterms,
                items_per_keyterm,
                lambda,
                dim_mode,
                noise_sigma,
            } => {
                check_sizes(*num_keyterms, *items_per_keyterm)?;
                if *dim_mode == (DimMode::RandomUnit { dim: 0 }) {
                    return fail("environment.dim_mode", "dim must be at least 1".into());
                }
                (*lambda, Some(*noise_sigma))
            }
            EnvConfig::Dataset {
                lambda,
                noise_sigma,
                files,
                generate,
            } => {
                match (files, generate) {
                    (Some(files), None) => {
                        let mut paths = vec![("items", &files.items), ("graph", &files.graph), ("users", &files.users)];
                        if let Some(k) = &files.keyterms {
                            paths.push(("keyterms", k));
                        }
                        for (field, path) in paths {
                            if !path.is_file() {
                                return fail(
                                    &format!("environment.files.{field}"),
                                    format!("file {} does not exist", path.display()),
                                );
                            }
                        }
                    }
                    (None, Some(g)) => {
                        if g.users == 0 || g.items == 0 || g.keyterms == 0 || g.dim == 0 {
                            return fail("environment.generate", "sizes must be positive".into());
                        }
                        if g.items < g.keyterms {
                            return fail("environment.generate", "needs at least as many items as key-terms".into());
                        }
                    }
                    _ => return fail("environment", "dataset needs exactly one of files or generate".into()),
                }
                (*lambda, Some(*noise_sigma))
            }
        };
        DiscountFactor::new(lambda).map_err(|e| named("environment.lambda", e))?;
        if let Some(s) = sigma {
            if !(s.is_finite() && s >= 0.0) {
                return fail("environment.noise_sigma", format!("{s} must be finite and >= 0"));
            }
        }
        if self.policies.is_empty() {
            return fail("policies", "at least one policy is required".into());
        }
        let mut labels = std::collections::BTreeSet::new();
        for (i, p) in self.policies.iter().enumerate() {
            let field = format!("policies[{i}]");
            HierParams::new(p.gamma, p.alpha).map_err(|e| named(&field, e))?;
            if p.schedule.base < 2 {
                return fail(&format!("{field}.schedule.base"), "must be at least 2".into());
            }
            let label = p.label();
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return fail(&format!("{field}.label"), format!("{label:?} is not a safe file name"));
            }
            if !labels.insert(label.to_string()) {
                return fail(&format!("{field}.label"), format!("duplicate label {label:?}"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form with `out_dir` removed.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = None;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn preset(name: &str) -> Result<Self> {
        let config = match name {
            "paper-synthetic" => RunConfig {
                name: name.into(),
                horizon: 50_000,
                repetitions: 50,
                base_seed: 0,
                level: 0.95,
                out_dir: None,
                environment: EnvConfig::SyntheticStochastic {
                    num_keyterms: 10,
                    items_per_keyterm: 10,
                    lambda: 0.5,
                },
                policies: vec![
                    PolicyConfig::new(PolicyKind::HierUcb, 1.0, 1.0),
                    PolicyConfig::new(PolicyKind::Ucb, 1.0, 1.0),
                    PolicyConfig::new(PolicyKind::HierLinucb, 1.0, 1.0),
                ],
            },
            "desk-contextual" => RunConfig {
                name: name.into(),
                horizon: 30_000,
                repetitions: 20,
                base_seed: 0,
                level: 0.95,
                out_dir: None,
                environment: EnvConfig::Dataset {
                    lambda: 0.5,
                    noise_sigma: 0.1,
                    files: None,
                    generate: Some(GeneratorSpec {
                        users: 20,
                        items: 200,
                        keyterms: 20,
                        dim: 20,
                        seed: 1,
                    }),
                },
                policies: vec![
                    PolicyConfig::new(PolicyKind::HierLinucb, 0.5, 0.25),
                    PolicyConfig::new(PolicyKind::Linucb, 0.5, 1.0),
                    PolicyConfig::new(PolicyKind::FreqconLinucb, 0.5, 1.0),
                ],
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; available: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        config.validate()?;
        Ok(config)
    }

    /// Builds the per-repetition environment factory. Datasets are loaded or
    /// generated once and shared.
    pub fn env_builder(&self) -> Result<Box<EnvBuilder<'static>>> {
        Ok(match self.environment.clone() {
            EnvConfig::SyntheticStochastic {
                num_keyterms,
                items_per_keyterm,
                lambda,
            } => {
                let lambda = DiscountFactor::new(lambda)?;
                Box::new(move |seed| {
                    let mut env = build_synthetic_stochastic(num_keyterms, items_per_keyterm, lambda, seed)?;
                    let contexts = one_hot_contexts(env.catalog(), env.item_means(), lambda)?;
                    env.attach_contexts(contexts)?;
                    Ok(vec![Box::new(env) as Box<dyn Environment>])
                })
            }
            EnvConfig::SyntheticContextual {
                num_keyterms,
                items_per_keyterm,
                lambda,
                dim_mode,
                noise_sigma,
            } => {
                let lambda = DiscountFactor::new(lambda)?;
                Box::new(move |seed| {
                    let env = build_synthetic_contextual(
                        num_keyterms,
                        items_per_keyterm,
                        dim_mode,
                        lambda,
                        noise_sigma,
                        seed,
                    )?;
                    Ok(vec![Box::new(env) as Box<dyn Environment>])
                })
            }
            EnvConfig::Dataset {
                lambda,
                noise_sigma,
                files,
                generate,
            } => {
                let lambda = DiscountFactor::new(lambda)?;
                let dataset = Arc::new(match (files, generate) {
                    (Some(f), _) => Dataset::load(&DatasetFiles {
                        items: f.items,
                        keyterms: f.keyterms,
                        graph: f.graph,
                        users: f.users,
                    })?,
                    (None, Some(g)) => Dataset::generate(&g)?,
                    (None, None) => return Err(Error::Config("environment: dataset needs files or generate".into())),
                });
                Box::new(move |seed| {
                    Ok(dataset
                        .environments(lambda, noise_sigma, seed)?
                        .into_iter()
                        .map(|e| Box::new(e) as Box<dyn Environment>)
                        .collect())
                })
            }
        })
    }
}

fn check_sizes(num_keyterms: usize, items_per_keyterm: usize) -> Result<()> {
    if num_keyterms == 0 || items_per_keyterm == 0 {
        return Err(Error::Config(
            "environment: num_keyterms and items_per_keyterm must be positive".into(),
        ));
    }
    Ok(())
}

fn named(field: &str, e: Error) -> Error {
    let message = match e {
        Error::Input(m) => m,
        other => other.to_string(),
    };
    Error::Config(format!("{field}: {message}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
horizon = 10
repetitions = 2

[environment]
kind = "synthetic-stochastic"
num_keyterms = 2
items_per_keyterm = 2
lambda = 0.5

[[policies]]
kind = "hier-ucb"
"#;

    #[test]
    fn minimal_document() {
        let c = RunConfig::parse(MINIMAL, None).unwrap();
        assert_eq!(c.level, 0.95);
        assert_eq!(c.policies[0].gamma, 1.0);
        assert_eq!(c.policies[0].label(), "hier-ucb");
    }

    #[test]
    fn lambda_out_of_range() {
        let text = MINIMAL.replace("lambda = 0.5", "lambda = 1.5");
        let err = RunConfig::parse(&text, None).unwrap_err().to_string();
        assert!(err.contains("lambda out of range"), "{err}");
        assert!(err.contains("environment.lambda"), "{err}");
    }

    #[test]
    fn unknown_keys_and_kinds() {
        let err = RunConfig::parse(&MINIMAL.replace("repetitions = 2", "repetitions = 2\nfoo = 1"), None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("foo"), "{err}");
        let err = RunConfig::parse(&MINIMAL.replace("\"hier-ucb\"", "\"thompson\""), None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("thompson"), "{err}");
        assert!(err.contains("line"), "{err}");
        let err = RunConfig::parse(&MINIMAL.replace("lambda = 0.5", "lambda = 0.5\nsigma = 1"), None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("sigma"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = RunConfig::parse(&MINIMAL.replace("horizon = 10", "horizon = 0"), None).unwrap_err();
        assert!(err.to_string().contains("horizon"));
        let text = MINIMAL.replace(
            "kind = \"synthetic-stochastic\"\nnum_keyterms = 2\nitems_per_keyterm = 2\nlambda = 0.5",
            "kind = \"dataset\"\nlambda = 0.5\nnoise_sigma = 0.1\nfiles = { items = \"nope.csv\", graph = \"g.csv\", users = \"u.csv\" }",
        );
        let err = RunConfig::parse(&text, None).unwrap_err().to_string();
        assert!(err.contains("environment.files.items"), "{err}");
    }

    #[test]
    fn presets() {
        let p = RunConfig::preset("paper-synthetic").unwrap();
        assert_eq!(p.horizon, 50_000);
        assert_eq!(p.repetitions, 50);
        assert!(matches!(
            p.environment,
            EnvConfig::SyntheticStochastic { num_keyterms: 10, items_per_keyterm: 10, lambda } if lambda == 0.5
        ));
        assert!(p.policies.iter().all(|q| q.gamma == 1.0));
        assert!(RunConfig::preset("desk-contextual").is_ok());
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn preset_round_trips_through_toml() {
        for name in PRESETS {
            let p = RunConfig::preset(name).unwrap();
            let text = toml::to_string(&p).unwrap();
            assert_eq!(RunConfig::parse(&text, None).unwrap(), p);
        }
    }

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = RunConfig::parse(MINIMAL, None).unwrap();
        let mut b = a.clone();
        b.out_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.policies[0].gamma = 2.0;
        assert_ne!(a.hash(), b.hash());
    }
}
