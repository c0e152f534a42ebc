//! Named parameter store with plain-SGD updates and a small binary
//! checkpoint format (text manifest + little-endian f64 payload).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::AafError;
use crate::scalar::Scalar;
use crate::tape::{GradTape, Var};
use crate::tensor::Tensor;

const MAGIC: &str = "aaf-params v1";

/// One SGD update: `param <- param - lr * grad`.
pub fn sgd_step<S: Scalar>(param: &mut Tensor<S>, grad: &[S], lr: S) {
    debug_assert_eq!(param.numel(), grad.len());
    for (p, &g) in param.data_mut().iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

/// Collection of named, gradient-tracked tensors. Iteration order is the
/// lexicographic name order, so every walk over the set is deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<S: Scalar> {
    entries: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet {
            entries: BTreeMap::new(),
        }
    }

    /// Registers a tensor under `name`; gradient tracking is forced on.
    /// Whitespace is reserved by the checkpoint manifest.
    pub fn insert(&mut self, name: &str, tensor: Tensor<S>) -> Result<(), AafError> {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(AafError::ParamStore(format!(
                "invalid parameter name {name:?}: must be non-empty without whitespace"
            )));
        }
        self.entries.insert(name.to_string(), tensor.with_grad());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    /// Registers every parameter on the tape; returns name -> variable.
    pub fn bind(&self, tape: &mut GradTape<S>) -> BTreeMap<String, Var> {
        self.entries
            .iter()
            .map(|(name, t)| (name.clone(), tape.leaf(t)))
            .collect()
    }

    /// Applies one SGD step from gradients accumulated on `tape`. Every
    /// bound parameter must have received a gradient — a missing one means
    /// the parameter never reached the loss, which is a wiring bug. The
    /// gradient buffers live on the tape and vanish with it.
    pub fn sgd_step(
        &mut self,
        tape: &GradTape<S>,
        bindings: &BTreeMap<String, Var>,
        lr: S,
    ) -> Result<(), AafError> {
        for (name, var) in bindings {
            let Some(grad) = tape.grad(*var) else {
                return Err(AafError::MissingGrad { name: name.clone() });
            };
            let param = self
                .entries
                .get_mut(name)
                .ok_or_else(|| AafError::MissingGrad { name: name.clone() })?;
            if grad.len() != param.numel() {
                return Err(AafError::GradShape {
                    len: grad.len(),
                    shape: param.shape().to_vec(),
                });
            }
            sgd_step(param, grad, lr);
        }
        Ok(())
    }

    /// True if any stored value is NaN or infinite.
    pub fn any_non_finite(&self) -> bool {
        self.entries.values().any(|t| !t.is_finite())
    }

    // ---- checkpoint I/O ---------------------------------------------------

    pub fn save_to(&self, mut w: impl Write) -> Result<(), AafError> {
        let io = |e: std::io::Error| AafError::ParamStore(format!("write failed: {e}"));
        writeln!(w, "{MAGIC}").map_err(io)?;
        writeln!(w, "count {}", self.entries.len()).map_err(io)?;
        for (name, t) in &self.entries {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            writeln!(w, "tensor {name} {}", dims.join(" ")).map_err(io)?;
        }
        writeln!(w, "data").map_err(io)?;
        for t in self.entries.values() {
            for &v in t.data() {
                w.write_all(&v.as_f64().to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn load_from(r: impl Read) -> Result<Self, AafError> {
        let io = |e: std::io::Error| AafError::ParamStore(format!("read failed: {e}"));
        let bad = |msg: String| AafError::ParamStore(msg);
        let mut reader = BufReader::new(r);
        let mut line = String::new();

        let read_line = |reader: &mut BufReader<_>, line: &mut String| {
            line.clear();
            reader
                .read_line(line)
                .map(|n| {
                    let trimmed = line.trim_end_matches('\n').to_string();
                    (n, trimmed)
                })
                .map_err(io)
        };

        let (_, magic) = read_line(&mut reader, &mut line)?;
        if magic != MAGIC {
            return Err(bad(format!("unrecognized header {magic:?}")));
        }
        let (_, count_line) = read_line(&mut reader, &mut line)?;
        let count: usize = count_line
            .strip_prefix("count ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("bad count line {count_line:?}")))?;

        let mut manifest: Vec<(String, Vec<usize>)> = Vec::with_capacity(count);
        for _ in 0..count {
            let (_, tensor_line) = read_line(&mut reader, &mut line)?;
            let rest = tensor_line
                .strip_prefix("tensor ")
                .ok_or_else(|| bad(format!("bad tensor line {tensor_line:?}")))?;
            let mut fields = rest.split(' ');
            let name = fields
                .next()
                .filter(|n| !n.is_empty())
                .ok_or_else(|| bad("tensor line missing name".to_string()))?;
            let dims: Vec<usize> = fields
                .map(|f| {
                    f.parse()
                        .map_err(|_| bad(format!("bad dimension {f:?} for {name}")))
                })
                .collect::<Result<_, _>>()?;
            manifest.push((name.to_string(), dims));
        }
        let (_, data_line) = read_line(&mut reader, &mut line)?;
        if data_line != "data" {
            return Err(bad(format!("expected data marker, found {data_line:?}")));
        }

        let mut set = ParamSet::new();
        for (name, dims) in manifest {
            let numel: usize = dims.iter().product();
            let mut buf = vec![0u8; numel * 8];
            reader.read_exact(&mut buf).map_err(io)?;
            let data: Vec<S> = buf
                .chunks_exact(8)
                .map(|c| S::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
                .collect();
            let tensor = Tensor::new(dims, data)?;
            set.insert(&name, tensor)?;
        }
        let mut trailing = [0u8; 1];
        match reader.read(&mut trailing) {
            Ok(0) => Ok(set),
            Ok(_) => Err(bad("trailing bytes after payload".to_string())),
            Err(e) => Err(io(e)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), AafError> {
        let file = std::fs::File::create(path).map_err(|e| {
            AafError::ParamStore(format!("cannot create {}: {e}", path.display()))
        })?;
        self.save_to(BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, AafError> {
        let file = std::fs::File::open(path).map_err(|e| {
            AafError::ParamStore(format!("cannot open {}: {e}", path.display()))
        })?;
        Self::load_from(BufReader::new(file))
    }
}
