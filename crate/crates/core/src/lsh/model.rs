use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LshConfig;
use crate::error::{Error, Result};
use crate::window::{Query, WindowSet};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One Gaussian projection vector `a`, `a_j ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicHashFunction {
    pub a: Vec<f64>,
}

/// A bundle of `k` atomic functions; one hash table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundHashFunction {
    pub atomics: Vec<AtomicHashFunction>,
}

/// Projects every time step of a `t × d` window onto `w ⊙ a`.
pub fn hash_code(window: ArrayView2<'_, f64>, atomic: &AtomicHashFunction, weight: &[f64]) -> Vec<f64> {
    let b: Vec<f64> = weight.iter().zip(&atomic.a).map(|(w, a)| w * a).collect();
    project(window, &b)
}

fn project(window: ArrayView2<'_, f64>, b: &[f64]) -> Vec<f64> {
    window.rows().into_iter().map(|row| row.iter().zip(b).map(|(x, b)| x * b).sum()).collect()
}

/// Hash codes of one sequence under every atomic function, laid out
/// `[table][atomic][time]` in a single buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Codes {
    pub(crate) data: Vec<f64>,
    pub(crate) tables: usize,
    pub(crate) atomics: usize,
    pub(crate) t: usize,
}

impl Codes {
    pub fn get(&self, table: usize, atomic: usize) -> &[f64] {
        let off = (table * self.atomics + atomic) * self.t;
        &self.data[off..off + self.t]
    }
}

/// Hash codes of every window under the model's current weight.
///
/// Per window the `l · k · t` codes are contiguous.
#[derive(Debug, Clone)]
pub struct HashIndex {
    data: Vec<f64>,
    windows: usize,
    tables: usize,
    atomics: usize,
    t: usize,
    weight: Vec<f64>,
}

impl HashIndex {
    pub fn len(&self) -> usize {
        self.windows
    }

    pub fn is_empty(&self) -> bool {
        self.windows == 0
    }

    pub fn window_len(&self) -> usize {
        self.t
    }

    /// Weight vector the index was built with.
    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn code(&self, window: usize, table: usize, atomic: usize) -> &[f64] {
        let block = self.tables * self.atomics * self.t;
        let off = window * block + (table * self.atomics + atomic) * self.t;
        &self.data[off..off + self.t]
    }
}

/// Weighted query-aware LSH model: `l × k` Gaussian vectors plus a learned track weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LshModel {
    pub format_version: u32,
    pub config: LshConfig,
    pub seed: u64,
    pub dims: usize,
    pub window_len: usize,
    pub compounds: Vec<CompoundHashFunction>,
    weight: Vec<f64>,
    #[serde(skip)]
    query: Option<Query>,
    #[serde(skip)]
    query_codes: Option<Codes>,
}

impl LshModel {
    /// Samples `l · k` atomic vectors from ChaCha8 seeded with `seed`, drawing
    /// standard normals with `rand_distr`'s ziggurat sampler in table, atomic,
    /// track order. The weight starts at all ones.
    pub fn generate(dims: usize, window_len: usize, config: LshConfig, seed: u64) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidConfig("model needs d ≥ 1".into()));
        }
        config.validate_for(window_len)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let compounds = (0..config.num_tables)
            .map(|_| CompoundHashFunction {
                atomics: (0..config.hashes_per_table)
                    .map(|_| AtomicHashFunction { a: (0..dims).map(|_| StandardNormal.sample(&mut rng)).collect() })
                    .collect(),
            })
            .collect();
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            config,
            seed,
            dims,
            window_len,
            compounds,
            weight: vec![1.0; dims],
            query: None,
            query_codes: None,
        })
    }

    pub fn num_tables(&self) -> usize {
        self.compounds.len()
    }

    pub fn hashes_per_table(&self) -> usize {
        self.config.hashes_per_table
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn collision_threshold(&self) -> usize {
        self.config.threshold_for(self.window_len)
    }

    /// Installs a new weight vector, rescaled to norm `√d`, and refreshes the query codes.
    pub fn set_weight(&mut self, weight: &[f64]) -> Result<()> {
        if weight.len() != self.dims {
            return Err(Error::Shape(format!("weight has {} entries, model has {} tracks", weight.len(), self.dims)));
        }
        self.weight = crate::feedback::normalize_to_sqrt_d(weight)?;
        if let Some(q) = self.query.take() {
            self.set_query(&q)?;
        }
        Ok(())
    }

    /// Installs the weight exactly as given; used when restoring snapshots.
    pub(crate) fn set_weight_exact(&mut self, weight: Vec<f64>) -> Result<()> {
        if weight.len() != self.dims {
            return Err(Error::Shape("weight length mismatch".into()));
        }
        self.weight = weight;
        if let Some(q) = self.query.take() {
            self.set_query(&q)?;
        }
        Ok(())
    }

    pub fn set_query(&mut self, query: &Query) -> Result<()> {
        self.query_codes = Some(self.encode(query.values.view())?);
        self.query = Some(query.clone());
        Ok(())
    }

    pub fn query(&self) -> Option<&Query> {
        self.query.as_ref()
    }

    pub fn query_codes(&self) -> Option<&Codes> {
        self.query_codes.as_ref()
    }

    fn check_shape(&self, window: ArrayView2<'_, f64>) -> Result<()> {
        if window.dim() != (self.window_len, self.dims) {
            return Err(Error::Shape(format!("expected {}×{}, got {:?}", self.window_len, self.dims, window.dim())));
        }
        Ok(())
    }

    /// `w ⊙ a` for every atomic function, flattened `[table][atomic][track]`.
    fn weighted_vectors(&self) -> Vec<f64> {
        self.compounds
            .iter()
            .flat_map(|c| c.atomics.iter())
            .flat_map(|a| a.a.iter().zip(&self.weight).map(|(a, w)| a * w))
            .collect()
    }

    /// Codes of one `t × d` sequence under all atomic functions.
    pub fn encode(&self, window: ArrayView2<'_, f64>) -> Result<Codes> {
        self.check_shape(window)?;
        let b = self.weighted_vectors();
        let mut data = Vec::with_capacity(self.num_tables() * self.hashes_per_table() * self.window_len);
        for vec in b.chunks(self.dims) {
            data.extend(project(window, vec));
        }
        Ok(Codes { data, tables: self.num_tables(), atomics: self.hashes_per_table(), t: self.window_len })
    }

    /// Hashes every window under the current weight.
    pub fn index(&self, windows: &WindowSet) -> Result<HashIndex> {
        if windows.window_len() != self.window_len || windows.dims() != self.dims {
            return Err(Error::Shape(format!(
                "model is {}×{}, windows are {}×{}",
                self.window_len,
                self.dims,
                windows.window_len(),
                windows.dims()
            )));
        }
        let b = self.weighted_vectors();
        let per = self.num_tables() * self.hashes_per_table();
        let t = self.window_len;
        let d = self.dims;
        let mut data = vec![0.0; windows.len() * per * t];
        for (w, block) in windows.windows().iter().zip(data.chunks_mut(per * t)) {
            let values = w.values.as_standard_layout();
            let rows = values.as_slice().expect("standard layout");
            for (h, out) in block.chunks_mut(t).enumerate() {
                let vec = &b[h * d..(h + 1) * d];
                for (i, slot) in out.iter_mut().enumerate() {
                    let row = &rows[i * d..(i + 1) * d];
                    *slot = row.iter().zip(vec).map(|(x, b)| x * b).sum();
                }
            }
        }
        Ok(HashIndex {
            data,
            windows: windows.len(),
            tables: self.num_tables(),
            atomics: self.hashes_per_table(),
            t,
            weight: self.weight.clone(),
        })
    }

    /// SHA-256 over the serialized model (config, seed, vectors, weight).
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Document(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(json).map_err(|e| Error::Document(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Document(format!("unsupported model format {}", model.format_version)));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn initial_weight_is_balanced() {
        let m = LshModel::generate(4, 10, LshConfig::default(), 1).unwrap();
        assert_eq!(m.weight(), &[1.0, 1.0, 1.0, 1.0]);
        let norm: f64 = m.weight().iter().map(|w| w * w).sum::<f64>().sqrt();
        assert_eq!(norm, 2.0);
    }

    #[test]
    fn same_seed_same_vectors() {
        let a = LshModel::generate(3, 10, LshConfig::default(), 42).unwrap();
        let b = LshModel::generate(3, 10, LshConfig::default(), 42).unwrap();
        let c = LshModel::generate(3, 10, LshConfig::default(), 43).unwrap();
        assert_eq!(a.compounds, b.compounds);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.compounds, c.compounds);
    }

    #[test]
    fn vector_count() {
        let cfg = LshConfig { num_tables: 3, hashes_per_table: 2, ..Default::default() };
        let m = LshModel::generate(5, 10, cfg, 0).unwrap();
        let total: usize = m.compounds.iter().map(|c| c.atomics.len()).sum();
        assert_eq!(total, 6);
        assert!(m.compounds.iter().flat_map(|c| &c.atomics).all(|a| a.a.len() == 5));
    }

    #[test]
    fn hash_code_examples() {
        let x = array![[2.0, -1.0, 0.5]];
        let a = AtomicHashFunction { a: vec![1.0, 0.0, 2.0] };
        assert_eq!(hash_code(x.view(), &a, &[1.0, 1.0, 1.0]), vec![3.0]);

        let x = array![[1.0, 1.0]];
        let a = AtomicHashFunction { a: vec![3.0, 4.0] };
        assert_eq!(hash_code(x.view(), &a, &[1.0, 1.0]), vec![7.0]);
    }

    #[test]
    fn hash_code_masks_tracks() {
        let d = 4usize;
        let sqrt_d = (d as f64).sqrt();
        let mut w = vec![0.0; d];
        w[2] = sqrt_d;
        let x = Array2::from_shape_fn((5, d), |(i, j)| (i * 7 + j * 3) as f64 - 4.0);
        let a = AtomicHashFunction { a: vec![0.3, -1.2, 0.7, 2.0] };
        let code = hash_code(x.view(), &a, &w);
        for (i, c) in code.iter().enumerate() {
            assert!((c - sqrt_d * 0.7 * x[[i, 2]]).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_matches_hash_code() {
        let m = LshModel::generate(3, 4, LshConfig::default(), 9).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64).sin() + j as f64);
        let codes = m.encode(x.view()).unwrap();
        for (ti, c) in m.compounds.iter().enumerate() {
            for (ai, a) in c.atomics.iter().enumerate() {
                assert_eq!(codes.get(ti, ai), hash_code(x.view(), a, m.weight()).as_slice());
            }
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut m = LshModel::generate(3, 8, LshConfig::default(), 5).unwrap();
        m.set_weight(&[0.3, 1.7, 0.9]).unwrap();
        let back = LshModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fingerprint(), m.fingerprint());
    }
}
