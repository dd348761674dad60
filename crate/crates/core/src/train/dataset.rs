use std::io::Read;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{dot, stream_rng, Example};
use crate::partition::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Binary,
    /// Single-layer softmax over `q` classes.
    Multiclass(usize),
}

impl DatasetKind {
    pub fn classes(self) -> usize {
        match self {
            DatasetKind::Binary => 2,
            DatasetKind::Multiclass(q) => q,
        }
    }
}

/// Seeded synthetic data.
///
/// Features are standard normal. The ground-truth weights are a uniform
/// direction times `scale` (one row per class for multiclass data). Without a
/// margin, labels are sampled from the model; with one, points closer than
/// `margin` to the decision boundary are redrawn and labels are
/// deterministic, so the data is separable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    pub scale: f64,
    pub margin: Option<f64>,
    pub classes: usize,
}

impl SyntheticSpec {
    pub fn new(seed: u64, d: usize, n: usize) -> Self {
        SyntheticSpec {
            seed,
            d,
            n,
            scale: 2.0,
            margin: None,
            classes: 2,
        }
    }

    pub fn separable(self, margin: f64) -> Self {
        SyntheticSpec {
            margin: Some(margin),
            ..self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Synthetic {
        spec: SyntheticSpec,
        /// Row-major, `classes x d` (a single row for binary data).
        truth: Vec<f64>,
    },
    Csv(PathBuf),
    Derived(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    examples: Vec<Example>,
    kind: DatasetKind,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, kind: DatasetKind, provenance: Provenance) -> Result<Self> {
        let Some(first) = examples.first() else {
            return Err(Error::Dataset("a dataset needs n >= 1 examples".into()));
        };
        let d = first.dim();
        if let DatasetKind::Multiclass(q) = kind {
            if q < 2 {
                return Err(Error::Dataset(format!("multiclass data needs q >= 2, got {q}")));
            }
        }
        let q = kind.classes();
        for (i, ex) in examples.iter().enumerate() {
            if ex.dim() != d {
                return Err(Error::Dataset(format!(
                    "example {i} has {} features, expected {d}",
                    ex.dim()
                )));
            }
            if ex.y >= q {
                return Err(Error::Dataset(format!("example {i} has label {} outside 0..{q}", ex.y)));
            }
            if ex.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!("example {i} has a non-finite feature")));
            }
        }
        Ok(Dataset {
            examples,
            kind,
            provenance,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.examples[0].dim()
    }

    /// Number of parameters: `d` for binary data, `q d` for softmax.
    pub fn param_len(&self) -> usize {
        match self.kind {
            DatasetKind::Binary => self.dim(),
            DatasetKind::Multiclass(q) => q * self.dim(),
        }
    }

    pub fn synthetic(spec: SyntheticSpec) -> Result<Self> {
        if spec.d == 0 || spec.n == 0 {
            return Err(Error::Dataset("synthetic data needs d >= 1 and n >= 1".into()));
        }
        if spec.classes < 2 {
            return Err(Error::Dataset("synthetic data needs at least 2 classes".into()));
        }
        if let Some(m) = spec.margin {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::Dataset(format!("margin must be finite and >= 0, got {m}")));
            }
        }
        let mut rng = stream_rng(spec.seed, 0);
        let rows = if spec.classes == 2 { 1 } else { spec.classes };
        let mut truth = Vec::with_capacity(rows * spec.d);
        for _ in 0..rows {
            let mut v = normal_vec(&mut rng, spec.d);
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let norm = if norm > 0.0 { norm } else { 1.0 };
            v.iter_mut().for_each(|a| *a *= spec.scale / norm);
            truth.extend(v);
        }
        let mut examples = Vec::with_capacity(spec.n);
        while examples.len() < spec.n {
            let x = normal_vec(&mut rng, spec.d);
            let logits: Vec<f64> = truth.chunks(spec.d).map(|w| dot(w, &x)).collect();
            let y = match spec.margin {
                Some(margin) => {
                    let (best, gap) = top_gap(&logits, spec.scale);
                    if gap < margin {
                        continue;
                    }
                    best
                }
                None if rows == 1 => usize::from(rng.random::<f64>() < sigmoid(logits[0])),
                None => sample_softmax(&logits, rng.random::<f64>()),
            };
            examples.push(Example { x, y });
        }
        let kind = if spec.classes == 2 {
            DatasetKind::Binary
        } else {
            DatasetKind::Multiclass(spec.classes)
        };
        Dataset::new(examples, kind, Provenance::Synthetic { spec, truth })
    }

    /// Reads `x1,...,xd,y` CSV. Labels in `{0, 1}` give binary data, larger
    /// labels a softmax dataset with `q = max label + 1`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, Provenance::Csv(path.to_path_buf()))
    }

    pub fn from_reader(reader: impl Read, provenance: Provenance) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let d = headers.len().saturating_sub(1);
        let well_formed = d >= 1
            && headers.get(d) == Some("y")
            && (0..d).all(|j| headers.get(j) == Some(format!("x{}", j + 1).as_str()));
        if !well_formed {
            return Err(Error::Dataset(format!(
                "expected header x1,...,xd,y, got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut examples = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let parse = |j: usize| -> Result<f64> {
                record[j]
                    .parse::<f64>()
                    .map_err(|e| Error::Dataset(format!("row {}: column {}: {e}", i + 1, j + 1)))
            };
            let x = (0..d).map(parse).collect::<Result<Vec<_>>>()?;
            let y = record[d]
                .parse::<usize>()
                .map_err(|e| Error::Dataset(format!("row {}: label: {e}", i + 1)))?;
            examples.push(Example::new(x, y)?);
        }
        let top = examples.iter().map(|e| e.y).max().unwrap_or(0);
        let kind = if top <= 1 {
            DatasetKind::Binary
        } else {
            DatasetKind::Multiclass(top + 1)
        };
        Dataset::new(examples, kind, provenance)
    }

    /// All features multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Dataset {
        Dataset {
            examples: self
                .examples
                .iter()
                .map(|e| Example {
                    x: e.x.iter().map(|v| v * factor).collect(),
                    y: e.y,
                })
                .collect(),
            kind: self.kind,
            provenance: Provenance::Derived(format!("features scaled by {factor:e}")),
        }
    }
}

fn normal_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Winning class and its normalized gap to the boundary: `|logit| / scale`
/// for one logit, the top-two difference over `scale` otherwise.
fn top_gap(logits: &[f64], scale: f64) -> (usize, f64) {
    if logits.len() == 1 {
        return (usize::from(logits[0] > 0.0), logits[0].abs() / scale);
    }
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]));
    (order[0], (logits[order[0]] - logits[order[1]]) / scale)
}

fn sample_softmax(logits: &[f64], u: f64) -> usize {
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (c, w) in weights.iter().enumerate() {
        acc += w / total;
        if u < acc {
            return c;
        }
    }
    logits.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_reproducible() {
        let spec = SyntheticSpec::new(3, 4, 50);
        assert_eq!(Dataset::synthetic(spec).unwrap(), Dataset::synthetic(spec).unwrap());
        let other = Dataset::synthetic(SyntheticSpec::new(4, 4, 50)).unwrap();
        assert_ne!(Dataset::synthetic(spec).unwrap(), other);
    }

    #[test]
    fn separable_data_respects_the_margin() {
        let ds = Dataset::synthetic(SyntheticSpec::new(1, 3, 200).separable(0.2)).unwrap();
        let Provenance::Synthetic { truth, .. } = ds.provenance() else {
            panic!("synthetic provenance")
        };
        for ex in ds.examples() {
            let z = dot(truth, &ex.x);
            assert_eq!(ex.y, usize::from(z > 0.0));
            assert!(z.abs() / 2.0 >= 0.2);
        }
    }

    #[test]
    fn multiclass_synthetic() {
        let spec = SyntheticSpec {
            classes: 3,
            ..SyntheticSpec::new(9, 2, 90)
        };
        let ds = Dataset::synthetic(spec).unwrap();
        assert_eq!(ds.kind(), DatasetKind::Multiclass(3));
        assert_eq!(ds.param_len(), 6);
        assert!(ds.examples().iter().all(|e| e.y < 3));
    }

    #[test]
    fn csv_round_trip() {
        let text = "x1,x2,y\n0.5,-1,1\n2,3.25,0\n";
        let ds = Dataset::from_reader(text.as_bytes(), Provenance::Derived("inline".into())).unwrap();
        assert_eq!(ds.kind(), DatasetKind::Binary);
        assert_eq!(ds.examples()[1].x, vec![2.0, 3.25]);
        let multi = Dataset::from_reader("x1,y\n1,0\n2,2\n".as_bytes(), Provenance::Derived("m".into())).unwrap();
        assert_eq!(multi.kind(), DatasetKind::Multiclass(3));
    }

    #[test]
    fn csv_rejects_bad_input() {
        let p = || Provenance::Derived("bad".into());
        assert!(Dataset::from_reader("a,b,y\n1,2,0\n".as_bytes(), p()).is_err());
        assert!(Dataset::from_reader("x1,x2,y\n1,2\n".as_bytes(), p()).is_err());
        assert!(Dataset::from_reader("x1,y\nfoo,0\n".as_bytes(), p()).is_err());
        assert!(Dataset::from_reader("x1,y\n1,-1\n".as_bytes(), p()).is_err());
        assert!(Dataset::from_reader("x1,y\n".as_bytes(), p()).is_err());
    }

    #[test]
    fn inconsistent_dimensions_are_rejected() {
        let ex = vec![
            Example { x: vec![1.0, 2.0], y: 0 },
            Example { x: vec![1.0], y: 1 },
        ];
        assert!(Dataset::new(ex, DatasetKind::Binary, Provenance::Derived("t".into())).is_err());
    }
}
