//! Named parameter archive and deterministic initialization.
//!
//! Every typed weight struct is built through a [`ParamSource`], so one
//! definition of names, shapes and initializers serves both seeded
//! initialization ([`Initializer`]) and loading ([`StoreLoader`]).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::param_stream;
use crate::tensor::Tensor;
use crate::transforms::TransformConfig;

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Uniform in `±1/√fan_in`.
    FanIn(usize),
    Uniform(f64, f64),
    /// `A_log` rows `ln 1, ln 2, …, ln N`, so that `-A` spans `{1..N}`.
    StateLadder,
    /// Bias whose softplus is uniform in `[lo, hi]`.
    SoftplusUniform(f64, f64),
}

pub trait ParamSource {
    fn take(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor<f32>>;
}

/// Joins a prefix and a leaf name with `.`.
pub fn join(prefix: &str, leaf: &str) -> String {
    if prefix.is_empty() {
        leaf.to_string()
    } else {
        let mut s = String::with_capacity(prefix.len() + 1 + leaf.len());
        s.push_str(prefix);
        s.push('.');
        s.push_str(leaf);
        s
    }
}

/// All parameters of one model plus the seed and configuration they were
/// created with. Entries are kept sorted by name.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub seed: u64,
    pub config: TransformConfig,
    entries: BTreeMap<String, Tensor<f32>>,
}

impl WeightStore {
    pub fn new(seed: u64, config: TransformConfig) -> Self {
        WeightStore {
            seed,
            config,
            entries: BTreeMap::new(),
        }
    }

    /// Inserts a parameter; a name may only be present once.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<f32>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::invalid(
                "WeightStore::insert",
                alloc::format!("duplicate parameter `{name}`"),
            ));
        }
        self.entries.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<f32>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }
}

fn fill(seed: u64, name: &str, shape: &[usize], init: Init) -> Tensor<f32> {
    let mut rng = param_stream(seed, name);
    let n: usize = shape.iter().product();
    let last = shape.last().copied().unwrap_or(1).max(1);
    let data: Vec<f32> = (0..n)
        .map(|i| {
            let v = match init {
                Init::Zeros => 0.0,
                Init::Const(c) => c,
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
                    rng.uniform(-bound, bound)
                }
                Init::Uniform(lo, hi) => rng.uniform(lo, hi),
                Init::StateLadder => libm::log((i % last + 1) as f64),
                Init::SoftplusUniform(lo, hi) => {
                    let dt = rng.uniform(lo, hi);
                    // softplus⁻¹(dt) = dt + ln(1 - e^{-dt})
                    dt + libm::log(-libm::expm1(-dt))
                }
            };
            v as f32
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches data length")
}

/// Generates parameters from a seed and records them in a [`WeightStore`].
pub struct Initializer {
    store: WeightStore,
}

impl Initializer {
    pub fn new(seed: u64, config: TransformConfig) -> Self {
        Initializer {
            store: WeightStore::new(seed, config),
        }
    }

    pub fn finish(self) -> WeightStore {
        self.store
    }
}

impl ParamSource for Initializer {
    fn take(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor<f32>> {
        let t = fill(self.store.seed, name, shape, init);
        self.store.insert(name, t.clone())?;
        Ok(t)
    }
}

/// Reads parameters out of a [`WeightStore`], checking shapes and tracking
/// which names were used.
pub struct StoreLoader<'a> {
    store: &'a WeightStore,
    used: BTreeSet<String>,
}

impl<'a> StoreLoader<'a> {
    pub fn new(store: &'a WeightStore) -> Self {
        StoreLoader {
            store,
            used: BTreeSet::new(),
        }
    }

    /// Fails if the store holds parameters that were never requested.
    pub fn finish(self) -> Result<()> {
        if let Some(extra) = self.store.entries.keys().find(|k| !self.used.contains(*k)) {
            return Err(Error::invalid(
                "WeightStore",
                alloc::format!("unexpected parameter `{extra}`"),
            ));
        }
        Ok(())
    }
}

impl ParamSource for StoreLoader<'_> {
    fn take(&mut self, name: &str, shape: &[usize], _init: Init) -> Result<Tensor<f32>> {
        let t = self
            .store
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if t.shape() != shape {
            return Err(Error::ParamShape {
                name: name.to_string(),
                expected: shape.to_vec(),
                actual: t.shape().to_vec(),
            });
        }
        self.used.insert(name.to_string());
        Ok(t.clone())
    }
}

/// Seeded initialization of every parameter the configuration names.
pub fn init_weights(config: &TransformConfig, seed: u64) -> Result<WeightStore> {
    let mut init = Initializer::new(seed, config.clone());
    crate::transforms::Model::build(config, &mut init)?;
    Ok(init.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softplus_scalar;

    #[test]
    fn fills_are_order_independent_and_seeded() {
        let a = fill(3, "x.w", &[4, 4], Init::FanIn(4));
        let _ = fill(3, "other", &[2], Init::FanIn(2));
        assert_eq!(a, fill(3, "x.w", &[4, 4], Init::FanIn(4)));
        assert_ne!(a, fill(4, "x.w", &[4, 4], Init::FanIn(4)));
        assert!(a.data().iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn state_ladder_and_dt_bias() {
        let t = fill(0, "a", &[2, 3], Init::StateLadder);
        let a: Vec<f32> = t.data().iter().map(|v| -libm::expf(*v)).collect();
        assert_eq!(a.len(), 6);
        for (i, v) in a.iter().enumerate() {
            assert!((v + (i % 3 + 1) as f32).abs() < 1e-5);
        }
        let b = fill(0, "dt", &[64], Init::SoftplusUniform(1e-3, 1e-1));
        for &v in b.data() {
            let dt = softplus_scalar(v as f64);
            assert!((1e-3 * 0.999..=1e-1 * 1.001).contains(&dt), "{dt}");
        }
    }

    #[test]
    fn duplicate_insert_rejected() {
        let mut s = WeightStore::new(0, TransformConfig::tiny());
        s.insert("a", Tensor::zeros([1])).unwrap();
        assert!(s.insert("a", Tensor::zeros([1])).is_err());
    }
}
