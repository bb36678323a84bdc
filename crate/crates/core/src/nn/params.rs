use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Named collection of trainable tensors. Names are slash-separated paths
/// such as `encoder/conv1/weight` and must be unique.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, tensor: Tensor<T>) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Checkpoint(format!("duplicate parameter name `{name}`")));
        }
        let id = self.params.len();
        self.by_name.insert(name.to_string(), id);
        self.params.push(Parameter {
            name: name.to_string(),
            tensor,
        });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    /// Ids of every parameter whose path starts with `prefix`.
    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.params
            .iter()
            .enumerate()
            .filter(|(_, p)| p.name.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Writes the checkpoint container described in [`save_checkpoint`].
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        save_checkpoint(self, w)
    }

    /// Overwrites every parameter with the same-named entry of a checkpoint.
    /// Names and shapes must match exactly.
    pub fn load_from<R: Read>(&mut self, r: R) -> Result<()> {
        let loaded: ParamStore<T> = load_checkpoint(r)?;
        if loaded.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model expects {}",
                loaded.len(),
                self.len()
            )));
        }
        for (_, p) in loaded.iter() {
            let id = self
                .find(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter `{}`", p.name)))?;
            if self.get(id).shape() != p.tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for `{}`: {:?} vs {:?}",
                    p.name,
                    p.tensor.shape(),
                    self.get(id).shape()
                )));
            }
            *self.get_mut(id) = p.tensor.clone();
        }
        Ok(())
    }
}

/// Gradients keyed by parameter, ordered by id so reductions are
/// deterministic.
#[derive(Clone, Debug, Default)]
pub struct Gradients<T> {
    grads: BTreeMap<ParamId, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn new() -> Self {
        Gradients {
            grads: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: ParamId, grad: Tensor<T>) {
        self.grads.insert(id, grad);
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.grads.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// L2 norm over the gradients of `ids` (all gradients when `None`).
    pub fn global_norm(&self, ids: Option<&[ParamId]>) -> T {
        let mut acc = T::zero();
        for (id, g) in &self.grads {
            if ids.is_none_or(|ids| ids.contains(id)) {
                acc += g.sum_sq();
            }
        }
        acc.sqrt()
    }

    /// Fails with the parameter path of the first non-finite gradient.
    pub fn check_finite(&self, store: &ParamStore<T>) -> Result<()> {
        for (id, g) in &self.grads {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("grad:{}", store.name(*id))));
            }
        }
        Ok(())
    }
}

const MAGIC: &[u8; 8] = b"NAVCKPT\0";
const VERSION: u32 = 1;

/// Checkpoint layout (all integers little-endian):
///
/// ```text
/// magic    8 bytes  "NAVCKPT\0"
/// version  u32      1
/// count    u32      number of parameters
/// repeated count times, in insertion order:
///   name_len u32, name (utf-8 bytes)
///   rank     u32, dims (u64 each)
///   values   f64 each, row-major
/// ```
///
/// Values are widened to f64, which is lossless for both f32 and f64
/// models, so save -> load -> save is byte-identical.
pub fn save_checkpoint<T: Scalar, W: Write>(store: &ParamStore<T>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(p.tensor.shape().len() as u32).to_le_bytes())?;
        for &d in p.tensor.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in p.tensor.data() {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn load_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<ParamStore<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(T::lit(f64::from_bits(read_u64(&mut r)?)));
        }
        store.add(&name, Tensor::new(&shape, data)?)?;
    }
    Ok(store)
}
