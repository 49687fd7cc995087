//! Sparse vector arithmetic and the kernel functions used everywhere else.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Compensated (Neumaier) summation, for accumulations over many terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Sparse vector over a fixed dimensionality.
///
/// Indices are strictly increasing, all stored values are finite and
/// non-zero (explicit zeros are canonicalized away on construction).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(dim: usize, indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Contract(format!(
                "index/value length mismatch: {} vs {}",
                indices.len(),
                values.len()
            )));
        }
        let mut prev: Option<u32> = None;
        for &i in &indices {
            if (i as usize) >= dim {
                return Err(Error::Contract(format!(
                    "index {i} out of range for dim {dim}"
                )));
            }
            if let Some(p) = prev {
                if i <= p {
                    return Err(Error::Contract(format!(
                        "indices not strictly increasing at index {i}"
                    )));
                }
            }
            prev = Some(i);
        }
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::Contract(format!("non-finite value {v}")));
            }
        }
        // canonicalize: drop explicit zeros
        let (indices, values) = indices
            .into_iter()
            .zip(values)
            .filter(|&(_, v)| v != 0.0)
            .unzip();
        Ok(SparseVector {
            dim,
            indices,
            values,
        })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                indices.push(i as u32);
                values.push(v);
            }
        }
        SparseVector {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, index: u32) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i as usize] = v;
        }
        out
    }

    /// Dot product; callers are responsible for dimension agreement.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn squared_distance(&self, other: &SparseVector) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < self.indices.len() || j < other.indices.len() {
            let a = self.indices.get(i).copied();
            let b = other.indices.get(j).copied();
            let d = match (a, b) {
                (Some(x), Some(y)) if x == y => {
                    let d = self.values[i] - other.values[j];
                    i += 1;
                    j += 1;
                    d
                }
                (Some(x), Some(y)) if x < y => {
                    let d = self.values[i];
                    i += 1;
                    d
                }
                (Some(_), Some(_)) | (None, Some(_)) => {
                    let d = -other.values[j];
                    j += 1;
                    d
                }
                (Some(_), None) => {
                    let d = self.values[i];
                    i += 1;
                    d
                }
                (None, None) => unreachable!(),
            };
            acc += d * d;
        }
        acc
    }

    pub fn distance(&self, other: &SparseVector) -> f64 {
        self.squared_distance(other).sqrt()
    }
}

#[derive(Deserialize)]
struct RawSparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl<'de> Deserialize<'de> for SparseVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSparseVector::deserialize(deserializer)?;
        SparseVector::new(raw.dim, raw.indices, raw.values).map_err(serde::de::Error::custom)
    }
}

/// RBF bandwidth: fixed, or the median-heuristic sentinel to be resolved
/// against a pooled sample before use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSpec {
    Fixed(f64),
    MedianHeuristic,
}

impl Serialize for GammaSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GammaSpec::Fixed(g) => serializer.serialize_f64(*g),
            GammaSpec::MedianHeuristic => serializer.serialize_str("median-heuristic"),
        }
    }
}

impl<'de> Deserialize<'de> for GammaSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(g) => Ok(GammaSpec::Fixed(g)),
            Raw::Text(s) if s == "median-heuristic" => Ok(GammaSpec::MedianHeuristic),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("unknown gamma {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    Cosine,
    Rbf { gamma: GammaSpec },
}

/// A kernel plus the bound K with k(u,u) <= K, carried explicitly because the
/// two-sample threshold needs it. Both supported kernels have K = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    kind: KernelKind,
    bound: f64,
}

impl KernelSpec {
    pub fn cosine() -> Self {
        KernelSpec {
            kind: KernelKind::Cosine,
            bound: 1.0,
        }
    }

    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Contract(format!("gamma must be positive, got {gamma}")));
        }
        Ok(KernelSpec {
            kind: KernelKind::Rbf {
                gamma: GammaSpec::Fixed(gamma),
            },
            bound: 1.0,
        })
    }

    pub fn rbf_median_heuristic() -> Self {
        KernelSpec {
            kind: KernelKind::Rbf {
                gamma: GammaSpec::MedianHeuristic,
            },
            bound: 1.0,
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_resolved(&self) -> bool {
        !matches!(
            self.kind,
            KernelKind::Rbf {
                gamma: GammaSpec::MedianHeuristic
            }
        )
    }

    /// Resolves a median-heuristic sentinel against a pooled sample.
    /// Already-resolved kernels pass through unchanged.
    pub fn resolve(&self, pooled: &[SparseVector]) -> Result<KernelSpec> {
        match self.kind {
            KernelKind::Rbf {
                gamma: GammaSpec::MedianHeuristic,
            } => {
                let gamma = median_heuristic_gamma(pooled)?;
                KernelSpec::rbf(gamma)
            }
            _ => Ok(*self),
        }
    }

    pub fn eval(&self, u: &SparseVector, v: &SparseVector) -> Result<f64> {
        match self.kind {
            KernelKind::Cosine => cosine_kernel(u, v),
            KernelKind::Rbf {
                gamma: GammaSpec::Fixed(g),
            } => rbf_kernel(u, v, g),
            KernelKind::Rbf {
                gamma: GammaSpec::MedianHeuristic,
            } => Err(Error::Config(
                "median-heuristic gamma not resolved; call resolve() with a pooled sample".into(),
            )),
        }
    }
}

fn check_dims(u: &SparseVector, v: &SparseVector) -> Result<()> {
    if u.dim() != v.dim() {
        return Err(Error::Contract(format!(
            "dimension mismatch: {} vs {}",
            u.dim(),
            v.dim()
        )));
    }
    Ok(())
}

/// Cosine similarity. An all-zero vector has similarity 0 to everything,
/// never NaN, so degenerate perturbations cannot poison aggregates.
///
/// ```
/// use limeaudit::numkit::{cosine_kernel, SparseVector};
/// let u = SparseVector::from_dense(&[1.0, 0.0]);
/// let v = SparseVector::from_dense(&[1.0, 1.0]);
/// let k = cosine_kernel(&u, &v)?;
/// assert!((k - 0.70710678).abs() < 1e-8);
/// # Ok::<(), limeaudit::Error>(())
/// ```
pub fn cosine_kernel(u: &SparseVector, v: &SparseVector) -> Result<f64> {
    check_dims(u, v)?;
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok(u.dot(v) / (nu * nv))
}

pub fn rbf_kernel(u: &SparseVector, v: &SparseVector, gamma: f64) -> Result<f64> {
    check_dims(u, v)?;
    if !(gamma > 0.0) {
        return Err(Error::Contract(format!("gamma must be positive, got {gamma}")));
    }
    Ok((-gamma * u.squared_distance(v)).exp())
}

/// Gram matrix G[i][j] = k(xs[i], ys[j]). Cosine norms are computed once per
/// vector.
pub fn gram(xs: &[SparseVector], ys: &[SparseVector], kernel: &KernelSpec) -> Result<Vec<Vec<f64>>> {
    if !kernel.is_resolved() {
        return Err(Error::Config(
            "median-heuristic gamma not resolved; call resolve() with a pooled sample".into(),
        ));
    }
    if let Some(first) = xs.first().or_else(|| ys.first()) {
        for v in xs.iter().chain(ys.iter()) {
            if v.dim() != first.dim() {
                return Err(Error::Contract(format!(
                    "dimension mismatch: {} vs {}",
                    v.dim(),
                    first.dim()
                )));
            }
        }
    }
    match kernel.kind() {
        KernelKind::Cosine => {
            let xn: Vec<f64> = xs.iter().map(SparseVector::norm).collect();
            let yn: Vec<f64> = ys.iter().map(SparseVector::norm).collect();
            Ok(xs
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    ys.iter()
                        .enumerate()
                        .map(|(j, y)| {
                            if xn[i] == 0.0 || yn[j] == 0.0 {
                                0.0
                            } else {
                                x.dot(y) / (xn[i] * yn[j])
                            }
                        })
                        .collect()
                })
                .collect())
        }
        KernelKind::Rbf {
            gamma: GammaSpec::Fixed(g),
        } => Ok(xs
            .iter()
            .map(|x| {
                ys.iter()
                    .map(|y| (-g * x.squared_distance(y)).exp())
                    .collect()
            })
            .collect()),
        KernelKind::Rbf { .. } => unreachable!("checked resolved above"),
    }
}

/// Median-heuristic RBF bandwidth: gamma = 1/(2 median^2) over the pairwise
/// Euclidean distances of the pooled sample; falls back to 1 when the median
/// distance is zero.
pub fn median_heuristic_gamma(pooled: &[SparseVector]) -> Result<f64> {
    if pooled.len() < 2 {
        return Err(Error::Contract(format!(
            "median heuristic needs at least 2 instances, got {}",
            pooled.len()
        )));
    }
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in (i + 1)..pooled.len() {
            dists.push(pooled[i].distance(&pooled[j]));
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let n = dists.len();
    let median = if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    };
    if median == 0.0 {
        Ok(1.0)
    } else {
        Ok(1.0 / (2.0 * median * median))
    }
}
