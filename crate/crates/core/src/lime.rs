//! Sparse linear explanations: perturbation, interpretable representation,
//! proximity weighting, path-based feature selection, weighted ridge
//! surrogate, and the explanation loss.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::blackbox::Scorer;
use crate::error::{Error, Result};
use crate::lars::lars_lasso_select;
use crate::numkit::{KahanSum, KernelSpec, SparseVector};
use crate::stream::{CounterStream, UniformSource};

/// Domain tag separating perturbation draws from other keyed streams.
pub const DOMAIN_PERTURB: u64 = 1;

/// Perturbations of one explained instance.
///
/// Each row keeps a random non-empty subset of the parent's non-zero
/// features at their original values and zeroes the rest. `z_binary` is the
/// interpretable representation over the parent support; `proximities` the
/// kernel similarities to the parent.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    pub parent: SparseVector,
    pub z_rows: Vec<SparseVector>,
    pub z_binary: Vec<Vec<u8>>,
    pub proximities: Vec<f64>,
}

/// Draws `n` perturbation rows. Row `r` consumes uniforms from
/// `row_stream(r)`: one draw for the keep-count k = 1 + floor(u * d), then k
/// partial Fisher-Yates draws selecting which support positions survive.
pub fn perturb<S, F>(x: &SparseVector, n: usize, mut row_stream: F) -> Result<PerturbationSet>
where
    S: UniformSource,
    F: FnMut(u64) -> S,
{
    let d = x.nnz();
    if d == 0 {
        return Err(Error::Contract(
            "instance has no non-zero features to perturb".into(),
        ));
    }
    if n == 0 {
        return Err(Error::Contract("perturbation count must be at least 1".into()));
    }
    let mut z_rows = Vec::with_capacity(n);
    for row in 0..n {
        let mut src = row_stream(row as u64);
        let u = src.next_uniform();
        let k = ((1 + (u * d as f64) as usize).min(d)).max(1);
        let mut positions: Vec<usize> = (0..d).collect();
        for i in 0..k {
            let span = (d - i) as f64;
            let j = i + ((src.next_uniform() * span) as usize).min(d - i - 1);
            positions.swap(i, j);
        }
        let mut kept = positions[..k].to_vec();
        kept.sort_unstable();
        let indices: Vec<u32> = kept.iter().map(|&p| x.indices()[p]).collect();
        let values: Vec<f64> = kept.iter().map(|&p| x.values()[p]).collect();
        z_rows.push(SparseVector::new(x.dim(), indices, values)?);
    }
    Ok(PerturbationSet {
        parent: x.clone(),
        z_rows,
        z_binary: Vec::new(),
        proximities: Vec::new(),
    })
}

/// Interpretable representation: row i, column j is 1 exactly when the
/// parent's j-th non-zero feature survives in row i.
pub fn to_interpretable(set: &PerturbationSet) -> Vec<Vec<u8>> {
    let support = set.parent.indices();
    set.z_rows
        .iter()
        .map(|z| {
            let mut row = vec![0u8; support.len()];
            let mut zi = 0;
            let z_idx = z.indices();
            for (j, &feat) in support.iter().enumerate() {
                while zi < z_idx.len() && z_idx[zi] < feat {
                    zi += 1;
                }
                if zi < z_idx.len() && z_idx[zi] == feat {
                    row[j] = 1;
                }
            }
            row
        })
        .collect()
}

/// Proximity of each row to the parent under the kernel pi. Negative
/// similarities clamp to zero weight.
pub fn proximity_weights(set: &PerturbationSet, pi: &KernelSpec) -> Result<Vec<f64>> {
    set.z_rows
        .iter()
        .map(|z| Ok(pi.eval(z, &set.parent)?.max(0.0)))
        .collect()
}

/// Weighted ridge fit with an unpenalized intercept, solved in closed form
/// through the normal equations. Returns (weights, intercept).
pub fn fit_weighted_ridge(
    design_rows: &[Vec<f64>],
    weights: &[f64],
    targets: &[f64],
    ridge: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = design_rows.len();
    if n == 0 || n != weights.len() || n != targets.len() {
        return Err(Error::Contract(format!(
            "row count mismatch: {} rows, {} weights, {} targets",
            n,
            weights.len(),
            targets.len()
        )));
    }
    if ridge < 0.0 {
        return Err(Error::Contract(format!("ridge must be nonnegative, got {ridge}")));
    }
    let p = design_rows[0].len();
    if design_rows.iter().any(|r| r.len() != p) {
        return Err(Error::Contract("ragged design matrix".into()));
    }
    let w_sum: f64 = weights.iter().sum();
    if !(w_sum > 0.0) {
        return Err(Error::Solver("all sample weights are zero".into()));
    }
    if p == 0 {
        let mut wy = KahanSum::new();
        for (w, y) in weights.iter().zip(targets) {
            wy.add(w * y);
        }
        return Ok((Vec::new(), wy.value() / w_sum));
    }

    // normal equations over [weights..., intercept]
    let mut m = DMatrix::zeros(p + 1, p + 1);
    let mut rhs = DVector::zeros(p + 1);
    for (row, (&w, &y)) in design_rows.iter().zip(weights.iter().zip(targets)) {
        for a in 0..p {
            let wa = w * row[a];
            for b in a..p {
                m[(a, b)] += wa * row[b];
            }
            m[(a, p)] += wa;
            rhs[a] += wa * y;
        }
        m[(p, p)] += w;
        rhs[p] += w * y;
    }
    for a in 0..p {
        m[(a, a)] += ridge;
        for b in (a + 1)..=p {
            m[(b, a)] = m[(a, b)];
        }
    }
    let chol = Cholesky::new(m).ok_or_else(|| {
        Error::Solver("singular normal matrix; use ridge > 0".into())
    })?;
    let l = chol.l_dirty();
    let (mut pivot_min, mut pivot_max) = (f64::INFINITY, 0.0f64);
    for i in 0..=p {
        pivot_min = pivot_min.min(l[(i, i)]);
        pivot_max = pivot_max.max(l[(i, i)]);
    }
    if !(pivot_min > pivot_max * 1e-7) {
        return Err(Error::Solver("singular normal matrix; use ridge > 0".into()));
    }
    let sol: DVector<f64> = chol.solve(&rhs);
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(Error::Solver("singular normal matrix; use ridge > 0".into()));
    }
    Ok((sol.as_slice()[..p].to_vec(), sol[p]))
}

/// Explanation loss: sum_i D_i (f_i - g_i)^2.
pub fn lime_loss(f_scores: &[f64], g_scores: &[f64], weights: &[f64]) -> Result<f64> {
    if f_scores.len() != g_scores.len() || f_scores.len() != weights.len() {
        return Err(Error::Contract(format!(
            "length mismatch: {} f-scores, {} g-scores, {} weights",
            f_scores.len(),
            g_scores.len(),
            weights.len()
        )));
    }
    let mut acc = KahanSum::new();
    for ((f, g), w) in f_scores.iter().zip(g_scores).zip(weights) {
        let d = f - g;
        acc.add(w * d * d);
    }
    Ok(acc.value())
}

/// One selected feature of an explanation: the original feature id, its
/// position in the parent support, and the fitted surrogate weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub feature: u32,
    pub position: usize,
    pub weight: f64,
}

/// Output of one explanation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub class_id: i32,
    /// selected features sorted by |weight| descending, ties by feature id
    pub features: Vec<FeatureWeight>,
    pub intercept: f64,
    /// feature ids in the order they entered the regularization path
    pub selected: Vec<u32>,
    pub loss: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Explanation {
    /// Surrogate score of a binary row over the parent support:
    /// intercept + sum of weights over retained selected features.
    pub fn surrogate_score(&self, z_binary_row: &[u8]) -> f64 {
        let mut acc = self.intercept;
        for fw in &self.features {
            if z_binary_row[fw.position] != 0 {
                acc += fw.weight;
            }
        }
        acc
    }

    /// Surrogate score at the explained instance itself (the all-ones row).
    pub fn surrogate_at_parent(&self) -> f64 {
        self.intercept + self.features.iter().map(|f| f.weight).sum::<f64>()
    }
}

/// Tuning for one explanation run.
#[derive(Debug, Clone, Copy)]
pub struct LimeParams {
    pub n_samples: usize,
    pub k_features: usize,
    pub proximity: KernelSpec,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for LimeParams {
    fn default() -> Self {
        LimeParams {
            n_samples: 1000,
            k_features: 6,
            proximity: KernelSpec::cosine(),
            ridge: 1.0,
            seed: 0,
        }
    }
}

/// Everything produced along the way to an explanation; the audit consumes
/// the perturbations and black-box scores that `explain` alone discards.
pub struct ExplainDetail {
    pub explanation: Explanation,
    pub perturbation: PerturbationSet,
    /// full black-box score vectors of the perturbation rows
    pub score_vectors: Vec<crate::blackbox::ScoreVector>,
    /// explained-class scalar scores of the perturbation rows
    pub f_scores: Vec<f64>,
}

/// Runs the full pipeline for one instance and class. Deterministic given
/// `params.seed`; every random draw is keyed by (seed, domain, row).
pub fn explain(
    x: &SparseVector,
    class_id: i32,
    scorer: &dyn Scorer,
    params: &LimeParams,
) -> Result<Explanation> {
    Ok(explain_detail(x, class_id, scorer, params)?.explanation)
}

pub fn explain_detail(
    x: &SparseVector,
    class_id: i32,
    scorer: &dyn Scorer,
    params: &LimeParams,
) -> Result<ExplainDetail> {
    let seed = params.seed;
    let mut set = perturb(x, params.n_samples, |row| {
        CounterStream::new(seed, &[DOMAIN_PERTURB, row])
    })
    .map_err(|e| e.in_stage("perturb"))?;
    set.z_binary = to_interpretable(&set);
    set.proximities =
        proximity_weights(&set, &params.proximity).map_err(|e| e.in_stage("proximity"))?;

    let score_vectors = scorer
        .score_batch(&set.z_rows)
        .map_err(|e| e.in_stage("score"))?;
    let f_scores: Vec<f64> = score_vectors
        .iter()
        .map(|s| s.score_for(class_id))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("score"))?;

    // A perturbation set with no informative columns (e.g. every row kept the
    // full support) carries no selection signal; fall back to the trivial
    // weighted-mean surrogate instead of failing the whole run.
    let has_informative = {
        let d = x.nnz();
        (0..d).any(|j| {
            let first = set.z_binary[0][j];
            set.z_binary.iter().any(|r| r[j] != first)
        })
    };
    let selected_positions = if has_informative {
        lars_lasso_select(&set.z_binary, &set.proximities, &f_scores, params.k_features)
            .map_err(|e| e.in_stage("select"))?
    } else {
        Vec::new()
    };

    let design: Vec<Vec<f64>> = set
        .z_binary
        .iter()
        .map(|row| selected_positions.iter().map(|&p| row[p] as f64).collect())
        .collect();
    let (weights, intercept) =
        fit_weighted_ridge(&design, &set.proximities, &f_scores, params.ridge)
            .map_err(|e| e.in_stage("fit"))?;

    let mut features: Vec<FeatureWeight> = selected_positions
        .iter()
        .zip(&weights)
        .map(|(&p, &w)| FeatureWeight {
            feature: x.indices()[p],
            position: p,
            weight: w,
        })
        .collect();
    features.sort_by(|a, b| {
        b.weight
            .abs()
            .partial_cmp(&a.weight.abs())
            .expect("finite weights")
            .then(a.feature.cmp(&b.feature))
    });

    let explanation = Explanation {
        class_id,
        intercept,
        selected: selected_positions
            .iter()
            .map(|&p| x.indices()[p])
            .collect(),
        loss: 0.0,
        n_samples: params.n_samples,
        seed,
        features,
    };
    let g_scores: Vec<f64> = set
        .z_binary
        .iter()
        .map(|row| explanation.surrogate_score(row))
        .collect();
    let loss = lime_loss(&f_scores, &g_scores, &set.proximities)?;

    Ok(ExplainDetail {
        explanation: Explanation { loss, ..explanation },
        perturbation: set,
        score_vectors,
        f_scores,
    })
}
