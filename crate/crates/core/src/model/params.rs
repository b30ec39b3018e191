//! Named parameter arrays with deterministic ordering and seeded init.

use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label::NUM_LABELS;
use crate::model::config::ModelConfig;
use crate::model::ops::CONV_KERNEL;

/// Ordered name -> array map. Every parameter is a 2-D float64 array;
/// vectors (biases, norm gains) use a single row. Iteration order is the
/// construction order and never changes, which makes optimizer state,
/// checkpoints and gradient application deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidConfig(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        let idx = self.index[name];
        &self.values[idx]
    }

    pub fn try_get(&self, name: &str) -> Result<&Array2<f64>> {
        self.index
            .get(name)
            .map(|&i| &self.values[i])
            .ok_or_else(|| Error::InvalidConfig(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        let idx = self.index[name];
        &mut self.values[idx]
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total scalar parameter count.
    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient arrays keyed by parameter name. Missing entries mean zero
/// gradient (e.g. unused embedding rows contribute nothing).
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    map: HashMap<String, Array2<f64>>,
}

impl Gradients {
    pub fn new() -> Self {
        Gradients { map: HashMap::new() }
    }

    /// Adds into the named slot, creating it on first touch.
    pub fn accumulate(&mut self, name: &str, grad: Array2<f64>) {
        match self.map.get_mut(name) {
            Some(existing) => *existing += &grad,
            None => {
                self.map.insert(name.to_string(), grad);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.map.get(name)
    }

    pub fn scale(&mut self, factor: f64) {
        for grad in self.map.values_mut() {
            grad.mapv_inplace(|g| g * factor);
        }
    }

    /// Sums another gradient set into this one.
    pub fn add(&mut self, other: &Gradients) {
        for (name, grad) in &other.map {
            self.accumulate(name, grad.clone());
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.map
            .values()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

fn embedding(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-0.05..0.05))
}

fn zeros(rows: usize, cols: usize) -> Array2<f64> {
    Array2::zeros((rows, cols))
}

fn ones(rows: usize, cols: usize) -> Array2<f64> {
    Array2::ones((rows, cols))
}

fn insert_block(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, cfg: &ModelConfig) {
    let d = cfg.d_model;
    let h = cfg.mlp_hidden();
    let entries: Vec<(String, Array2<f64>)> = vec![
        (format!("{prefix}.ln1.g"), ones(1, d)),
        (format!("{prefix}.ln1.b"), zeros(1, d)),
        (format!("{prefix}.attn.wq"), xavier(rng, d, d)),
        (format!("{prefix}.attn.bq"), zeros(1, d)),
        (format!("{prefix}.attn.wk"), xavier(rng, d, d)),
        (format!("{prefix}.attn.bk"), zeros(1, d)),
        (format!("{prefix}.attn.wv"), xavier(rng, d, d)),
        (format!("{prefix}.attn.bv"), zeros(1, d)),
        (format!("{prefix}.attn.wo"), xavier(rng, d, d)),
        (format!("{prefix}.attn.bo"), zeros(1, d)),
        (format!("{prefix}.ln2.g"), ones(1, d)),
        (format!("{prefix}.ln2.b"), zeros(1, d)),
        (format!("{prefix}.mlp.w1"), xavier(rng, d, h)),
        (format!("{prefix}.mlp.b1"), zeros(1, h)),
        (format!("{prefix}.mlp.w2"), xavier(rng, h, d)),
        (format!("{prefix}.mlp.b2"), zeros(1, d)),
    ];
    for (name, value) in entries {
        store.insert(name, value).expect("block names are unique");
    }
}

/// Builds all parameters for a model configuration with Xavier-style seeded
/// initialization. The construction order defines the canonical parameter
/// order everywhere else.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let d = cfg.d_model;

    store.insert("video.proj.w", xavier(&mut rng, 3, d))?;
    store.insert("video.proj.b", zeros(1, d))?;

    let mut in_dim = cfg.n_mels;
    for layer in 1..=4 {
        store.insert(
            format!("audio.conv{layer}.w"),
            xavier(&mut rng, CONV_KERNEL * in_dim, d),
        )?;
        store.insert(format!("audio.conv{layer}.b"), zeros(1, d))?;
        in_dim = d;
    }
    for j in 0..cfg.n_audio_blocks {
        insert_block(&mut store, &mut rng, &format!("audio.block{j}"), cfg);
    }

    store.insert("text.embed", embedding(&mut rng, cfg.vocab_size, d))?;
    store.insert("text.pos", embedding(&mut rng, cfg.max_text_tokens, d))?;

    for modality in ["video", "audio", "text"] {
        store.insert(
            format!("adapt.{modality}.w1"),
            xavier(&mut rng, d, cfg.adaptor_hidden),
        )?;
        store.insert(format!("adapt.{modality}.b1"), zeros(1, cfg.adaptor_hidden))?;
        store.insert(
            format!("adapt.{modality}.w2"),
            xavier(&mut rng, cfg.adaptor_hidden, d),
        )?;
        store.insert(format!("adapt.{modality}.b2"), zeros(1, d))?;
    }

    store.insert("fuse.type_embed", embedding(&mut rng, 3, d))?;
    if cfg.fusion_attention {
        for j in 0..cfg.n_fusion_blocks {
            insert_block(&mut store, &mut rng, &format!("fuse.block{j}"), cfg);
        }
    }

    store.insert("head.w", xavier(&mut rng, d, NUM_LABELS))?;
    store.insert("head.b", zeros(1, NUM_LABELS))?;
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_ordered() {
        let cfg = ModelConfig::tiny();
        let a = init_params(&cfg, 7).unwrap();
        let b = init_params(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = init_params(&cfg, 8).unwrap();
        assert_ne!(a, c);
        let names: Vec<&str> = a.names().collect();
        assert_eq!(names.first(), Some(&"video.proj.w"));
        assert_eq!(names.last(), Some(&"head.b"));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = ParamStore::new();
        store.insert("x", Array2::zeros((1, 1))).unwrap();
        assert!(store.insert("x", Array2::zeros((1, 1))).is_err());
    }

    #[test]
    fn attention_off_drops_fusion_blocks() {
        let mut cfg = ModelConfig::tiny();
        cfg.fusion_attention = false;
        let store = init_params(&cfg, 1).unwrap();
        assert!(!store.names().any(|n| n.starts_with("fuse.block")));
        assert!(store.contains("fuse.type_embed"));
    }

    #[test]
    fn gradients_accumulate_and_scale() {
        let mut grads = Gradients::new();
        grads.accumulate("w", ndarray::array![[1.0, 2.0]]);
        grads.accumulate("w", ndarray::array![[0.5, 0.5]]);
        grads.scale(2.0);
        assert_eq!(grads.get("w").unwrap(), &ndarray::array![[3.0, 5.0]]);
    }
}
