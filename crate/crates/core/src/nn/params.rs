use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::Matrix;
use crate::dataset::fmt_f64;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
    pub frozen: bool,
}

/// Named trainable matrices with gradient buffers, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.insert(
            name.into(),
            Param {
                value,
                grad,
                frozen: false,
            },
        );
    }

    pub fn remove(&mut self, name: &str) -> Option<Param> {
        self.params.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    fn entry(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter {name:?}")))
    }

    fn entry_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter {name:?}")))
    }

    pub fn value(&self, name: &str) -> Result<&Matrix> {
        Ok(&self.entry(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        Ok(&mut self.entry_mut(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Matrix> {
        Ok(&self.entry(name)?.grad)
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.params.get(name).is_some_and(|p| p.frozen)
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) -> Result<()> {
        self.entry_mut(name)?.frozen = frozen;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.data().len()).sum()
    }

    /// Adds `g` to the gradient buffer unless the parameter is frozen.
    pub fn accumulate_grad(&mut self, name: &str, g: &Matrix) -> Result<()> {
        let p = self.entry_mut(name)?;
        if p.frozen {
            return Ok(());
        }
        if p.grad.shape() != g.shape() {
            return Err(Error::Invalid(format!(
                "gradient for {name:?}: shape {:?} vs parameter {:?}",
                g.shape(),
                p.grad.shape()
            )));
        }
        p.grad.add_assign(g)
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Copies parameter values (not gradients) from `other`.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, p) in &mut self.params {
            let src = other.value(name)?;
            if src.shape() != p.value.shape() {
                return Err(Error::Invalid(format!("copy {name:?}: shape mismatch")));
            }
            p.value = src.clone();
        }
        Ok(())
    }

    /// Text checkpoint: a header line, then per parameter (in name order) a
    /// line `<name> <rows> <cols>` followed by one line of space-separated
    /// values at 17 significant digits.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("propnews-checkpoint v1\n");
        for (name, p) in &self.params {
            let _ = writeln!(out, "{name} {} {}", p.value.rows(), p.value.cols());
            let vals: Vec<String> = p.value.data().iter().map(|x| fmt_f64(*x)).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            context: "checkpoint".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "propnews-checkpoint v1")) => {}
            _ => return Err(parse_err(1, "bad checkpoint header".into())),
        }
        let mut store = ParamStore::new();
        while let Some((i, head)) = lines.next() {
            if head.is_empty() {
                continue;
            }
            let parts: Vec<&str> = head.split(' ').collect();
            let [name, rows, cols] = parts[..] else {
                return Err(parse_err(i + 1, format!("bad parameter header {head:?}")));
            };
            let rows: usize = rows.parse().map_err(|_| parse_err(i + 1, "rows".into()))?;
            let cols: usize = cols.parse().map_err(|_| parse_err(i + 1, "cols".into()))?;
            let (j, body) = lines
                .next()
                .ok_or_else(|| parse_err(i + 2, "missing values".into()))?;
            let data = body
                .split(' ')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|e| parse_err(j + 1, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            store.insert(name, Matrix::from_vec(rows, cols, data)?);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}

/// Glorot/Xavier uniform initialization for a `fan_in x fan_out` weight.
pub fn glorot_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized by construction")
}
