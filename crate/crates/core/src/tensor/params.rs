use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, Tensor};
use crate::error::{Error, Result};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub id: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Serialized form of one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Owns every trainable parameter of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, id: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let id = id.into();
        if self.index.contains_key(&id) {
            return Err(Error::InvalidArgument(format!("duplicate parameter id `{id}`")));
        }
        let pid = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape());
        self.index.insert(id.clone(), pid);
        self.params.push(Parameter { id, value, grad });
        Ok(pid)
    }

    /// Matrix of shape `[rows, cols]` drawn from U(-s, s), s = sqrt(6 / (rows + cols)).
    pub fn add_uniform_matrix<R: Rng>(
        &mut self,
        id: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let s = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-s..s)).collect();
        self.add(id, Tensor::new(vec![rows, cols], data)?)
    }

    pub fn add_zeros(&mut self, id: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.add(id, Tensor::zeros(shape))
    }

    pub fn lookup(&self, id: &str) -> Option<ParamId> {
        self.index.get(id).copied()
    }

    pub fn get(&self, pid: ParamId) -> &Parameter {
        &self.params[pid.0]
    }

    pub fn value(&self, pid: ParamId) -> &Tensor {
        &self.params[pid.0].value
    }

    pub fn value_mut(&mut self, pid: ParamId) -> &mut Tensor {
        &mut self.params[pid.0].value
    }

    pub fn grad(&self, pid: ParamId) -> &Tensor {
        &self.params[pid.0].grad
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds gradients from one backward pass; repeated calls sum.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (idx, g) in grads.params() {
            let dst = self.params[idx].grad.data_mut();
            for (d, s) in dst.iter_mut().zip(g) {
                *d += s;
            }
        }
    }

    pub fn to_records(&self) -> BTreeMap<String, ParamRecord> {
        self.params
            .iter()
            .map(|p| {
                (
                    p.id.clone(),
                    ParamRecord {
                        shape: p.value.shape().to_vec(),
                        values: p.value.data().to_vec(),
                    },
                )
            })
            .collect()
    }

    /// Overwrites values of existing parameters from records. Every parameter
    /// must be present with a matching shape, and no extra records are allowed.
    pub fn load_records(&mut self, records: &BTreeMap<String, ParamRecord>) -> Result<()> {
        if records.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.params.len(),
                records.len()
            )));
        }
        for p in &mut self.params {
            let rec = records
                .get(&p.id)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{}`", p.id)))?;
            if rec.shape != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has shape {:?}, checkpoint has {:?}",
                    p.id,
                    p.value.shape(),
                    rec.shape
                )));
            }
            p.value = Tensor::new(rec.shape.clone(), rec.values.clone())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicate_ids_rejected() {
        let mut store = ParamStore::new();
        store.add_zeros("w", &[2]).unwrap();
        assert!(store.add_zeros("w", &[3]).is_err());
    }

    #[test]
    fn uniform_init_within_bound() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pid = store.add_uniform_matrix("w", 4, 8, &mut rng).unwrap();
        let s = (6.0f64 / 12.0).sqrt();
        assert!(store.value(pid).data().iter().all(|v| v.abs() < s));
        assert_eq!(store.grad(pid).shape(), &[4, 8]);
    }

    #[test]
    fn records_round_trip() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        store.add_uniform_matrix("a", 2, 3, &mut rng).unwrap();
        store.add_zeros("b", &[3]).unwrap();
        let recs = store.to_records();
        let mut other = store.clone();
        other.zero_grad();
        other.load_records(&recs).unwrap();
        assert_eq!(other.to_records(), recs);

        let mut bad = recs.clone();
        bad.get_mut("b").unwrap().shape = vec![4];
        assert!(other.load_records(&bad).is_err());
    }
}
