//! Shift-and-fidelity audit of the explanation pipeline: reference-set
//! selection, data-shift and label-shift two-sample tests, fidelity, per-n
//! aggregation, and the MMD-fidelity correlation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::{Scorer, ScoreVector};
use crate::config::{AuditConfig, ReferenceStrategy};
use crate::error::{Error, Result};
use crate::lime::{explain_detail, LimeParams};
use crate::mmd::{two_sample_test, TwoSampleResult};
use crate::numkit::{KahanSum, KernelSpec, SparseVector};
use crate::stream::{derive_key, CounterStream, UniformSource};

/// Stream-domain tags: every random draw in an audit is keyed by
/// (seed, domain, instance id, n, ...), which is what makes fan-out across
/// any number of workers reproducible.
pub const DOMAIN_INSTANCE: u64 = 2;
pub const DOMAIN_CLASS_REF: u64 = 3;
pub const DOMAIN_NULL_SPLIT: u64 = 4;

/// Agreement between black-box and surrogate at the explained instance:
/// 1 / (|f_y - g_y| + 1), in (0, 1], equal to 1 only at exact agreement.
pub fn fidelity(f_y: f64, g_y: f64) -> Result<f64> {
    if !f_y.is_finite() || !g_y.is_finite() {
        return Err(Error::Contract(format!(
            "fidelity needs finite scores, got f_y {f_y}, g_y {g_y}"
        )));
    }
    Ok(1.0 / ((f_y - g_y).abs() + 1.0))
}

/// Sample Pearson correlation. Constant inputs are undefined, never 0.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Contract(format!(
            "pearson needs two equal-length samples of size >= 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let (mut sx, mut sy) = (KahanSum::new(), KahanSum::new());
    for (&x, &y) in xs.iter().zip(ys) {
        sx.add(x);
        sy.add(y);
    }
    let (mx, my) = (sx.value() / n, sy.value() / n);
    let (mut cov, mut vx, mut vy) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        cov.add(dx * dy);
        vx.add(dx * dx);
        vy.add(dy * dy);
    }
    if vx.value() <= 0.0 || vy.value() <= 0.0 {
        return Err(Error::CorrelationUndefined(
            "at least one input is constant".into(),
        ));
    }
    Ok(cov.value() / (vx.value().sqrt() * vy.value().sqrt()))
}

/// Index order of `train` by descending kernel similarity to `x`, ties by
/// ascending training index.
pub fn neighbor_order(
    train: &[SparseVector],
    x: &SparseVector,
    kernel: &KernelSpec,
) -> Result<Vec<usize>> {
    let sims: Vec<f64> = train
        .iter()
        .map(|t| kernel.eval(t, x))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .partial_cmp(&sims[a])
            .expect("finite similarities")
            .then(a.cmp(&b))
    });
    Ok(order)
}

/// The n training instances most similar to `x` under the kernel.
pub fn knn_reference(
    train: &[SparseVector],
    x: &SparseVector,
    n: usize,
    kernel: &KernelSpec,
) -> Result<Vec<SparseVector>> {
    if n == 0 || n > train.len() {
        return Err(Error::Contract(format!(
            "knn reference needs 1 <= n <= {} training instances, got n = {n}",
            train.len()
        )));
    }
    let order = neighbor_order(train, x, kernel)?;
    Ok(order[..n].iter().map(|&i| train[i].clone()).collect())
}

/// Uniform subsample (without replacement) of `k` positions from `0..len`,
/// via the same partial Fisher-Yates procedure the perturber uses; returned
/// ascending.
fn subsample_positions<S: UniformSource>(len: usize, k: usize, stream: &mut S) -> Vec<usize> {
    let mut positions: Vec<usize> = (0..len).collect();
    for i in 0..k {
        let span = (len - i) as f64;
        let j = i + ((stream.next_uniform() * span) as usize).min(len - i - 1);
        positions.swap(i, j);
    }
    let mut chosen = positions[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Random subsample of `n` reference instances whose predicted class matches
/// the predicted class of `x`.
pub fn class_conditional_reference<S: UniformSource>(
    reference: &[SparseVector],
    scorer: &dyn Scorer,
    x: &SparseVector,
    n: usize,
    stream: &mut S,
) -> Result<Vec<SparseVector>> {
    let predicted = scorer.score(x)?.argmax_class();
    let matching: Vec<usize> = reference
        .iter()
        .map(|r| scorer.score(r))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .enumerate()
        .filter(|(_, s)| s.argmax_class() == predicted)
        .map(|(i, _)| i)
        .collect();
    class_conditional_from_matching(reference, &matching, predicted, n, stream)
}

fn class_conditional_from_matching<S: UniformSource>(
    reference: &[SparseVector],
    matching: &[usize],
    predicted: i32,
    n: usize,
    stream: &mut S,
) -> Result<Vec<SparseVector>> {
    if matching.len() < n {
        return Err(Error::Audit(format!(
            "class-conditional reference for predicted class {predicted}: need {n} matching instances, only {} available",
            matching.len()
        )));
    }
    let chosen = subsample_positions(matching.len(), n, stream);
    Ok(chosen.iter().map(|&p| reference[matching[p]].clone()).collect())
}

/// Per-instance audit outcome for one perturbation count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub instance_id: usize,
    pub n: usize,
    pub data_shift: TwoSampleResult,
    pub label_shift: TwoSampleResult,
    pub fidelity: f64,
    pub f_y_at_x: f64,
    pub g_y_at_x: f64,
}

/// Per-n aggregate of one two-sample test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestAggregate {
    pub reject_count: usize,
    pub reject_fraction: f64,
    pub fail_count: usize,
    pub fail_fraction: f64,
    pub mmd_mean: f64,
    pub mmd_std: f64,
    pub scaled_mean: f64,
    pub scaled_std: f64,
    pub pearson_mmd_fidelity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: usize,
    pub instances: usize,
    pub data_shift: TestAggregate,
    pub label_shift: TestAggregate,
    pub fidelity_mean: f64,
    pub fidelity_std: f64,
}

/// The report body: per-n aggregates plus whole-run correlations and the
/// provenance block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub provenance: crate::config::Provenance,
    pub aggregates: Vec<AggregateRow>,
    pub data_pearson_mmd_fidelity: Option<f64>,
    pub label_pearson_mmd_fidelity: Option<f64>,
}

/// An aborted audit: the failing instance plus every row that completed.
#[derive(Debug)]
pub struct AuditFailure {
    pub error: Error,
    pub partial_rows: Vec<AuditRow>,
}

/// Precomputed per-run state shared by all (instance, n) tasks.
struct AuditContext<'a> {
    train: &'a [SparseVector],
    scorer: &'a dyn Scorer,
    config: &'a AuditConfig,
    /// full score vectors of every training instance
    train_scores: Vec<ScoreVector>,
}

fn score_points(
    vectors: &[ScoreVector],
    class_id: i32,
    scalar: bool,
) -> Result<Vec<SparseVector>> {
    if scalar {
        vectors
            .iter()
            .map(|s| Ok(SparseVector::from_dense(&[s.score_for(class_id)?])))
            .collect()
    } else {
        Ok(vectors.iter().map(ScoreVector::to_sparse).collect())
    }
}

fn audit_instance_inner(
    ctx: &AuditContext,
    x: &SparseVector,
    instance_id: usize,
    neighbor_order: &[usize],
    n: usize,
) -> Result<AuditRow> {
    let config = ctx.config;
    let f_at_x = ctx.scorer.score(x)?;
    let f_y_at_x = f_at_x.score_for(config.explained_class)?;

    // reference set (indices into train)
    let ref_indices: Vec<usize> = match config.reference {
        ReferenceStrategy::Knn => {
            if n > ctx.train.len() {
                return Err(Error::Contract(format!(
                    "knn reference needs 1 <= n <= {} training instances, got n = {n}",
                    ctx.train.len()
                )));
            }
            neighbor_order[..n].to_vec()
        }
        ReferenceStrategy::Class => {
            let predicted = f_at_x.argmax_class();
            let matching: Vec<usize> = (0..ctx.train.len())
                .filter(|&i| ctx.train_scores[i].argmax_class() == predicted)
                .collect();
            if matching.len() < n {
                return Err(Error::Audit(format!(
                    "class-conditional reference for predicted class {predicted}: need {n} matching instances, only {} available",
                    matching.len()
                )));
            }
            let mut stream = CounterStream::new(
                config.seed,
                &[DOMAIN_CLASS_REF, instance_id as u64, n as u64],
            );
            subsample_positions(matching.len(), n, &mut stream)
                .into_iter()
                .map(|p| matching[p])
                .collect()
        }
    };

    // explanation (always runs; fidelity is reported in every mode)
    let lime_seed = derive_key(config.seed, &[DOMAIN_INSTANCE, instance_id as u64, n as u64]);
    let detail = explain_detail(
        x,
        config.explained_class,
        ctx.scorer,
        &LimeParams {
            n_samples: n,
            k_features: config.k_features,
            proximity: config.proximity_kernel,
            ridge: config.ridge,
            seed: lime_seed,
        },
    )
    ?;
    let g_y_at_x = detail.explanation.surrogate_at_parent();

    // the comparison sample: perturbations, or a disjoint reference draw in
    // null mode
    let (reference, z_sample, z_score_vectors): (Vec<SparseVector>, Vec<SparseVector>, Vec<ScoreVector>) =
        if config.null_mode {
            if config.reference != ReferenceStrategy::Knn {
                return Err(Error::Config(
                    "null mode requires the knn reference strategy".into(),
                ));
            }
            if 2 * n > ctx.train.len() {
                return Err(Error::Audit(format!(
                    "null mode needs 2n <= {} training instances, got n = {n}",
                    ctx.train.len()
                )));
            }
            let top: Vec<usize> = neighbor_order[..2 * n].to_vec();
            let mut stream = CounterStream::new(
                config.seed,
                &[DOMAIN_NULL_SPLIT, instance_id as u64, n as u64],
            );
            let first_half = subsample_positions(2 * n, n, &mut stream);
            let mut in_first = vec![false; 2 * n];
            for &p in &first_half {
                in_first[p] = true;
            }
            let refs: Vec<usize> = first_half.iter().map(|&p| top[p]).collect();
            let others: Vec<usize> = (0..2 * n).filter(|&p| !in_first[p]).map(|p| top[p]).collect();
            (
                refs.iter().map(|&i| ctx.train[i].clone()).collect(),
                others.iter().map(|&i| ctx.train[i].clone()).collect(),
                others.iter().map(|&i| ctx.train_scores[i].clone()).collect(),
            )
        } else {
            (
                ref_indices.iter().map(|&i| ctx.train[i].clone()).collect(),
                detail.perturbation.z_rows.clone(),
                detail.score_vectors.clone(),
            )
        };

    assert_eq!(
        reference.len(),
        z_sample.len(),
        "two-sample inputs must have matched sizes"
    );

    let data_shift = two_sample_test(
        &reference,
        &z_sample,
        &config.data_shift_kernel,
        config.alpha,
    )
    .map_err(|e| e.in_stage("data-shift"))?;

    let ref_score_vectors: Vec<ScoreVector> = ref_indices
        .iter()
        .map(|&i| ctx.train_scores[i].clone())
        .collect();
    let f_ref = score_points(
        &ref_score_vectors,
        config.explained_class,
        config.label_shift_scalar,
    )?;
    let f_z = score_points(
        &z_score_vectors,
        config.explained_class,
        config.label_shift_scalar,
    )?;
    let label_shift = two_sample_test(&f_ref, &f_z, &config.label_shift_kernel, config.alpha)
        .map_err(|e| e.in_stage("label-shift"))?;

    Ok(AuditRow {
        instance_id,
        n,
        data_shift,
        label_shift,
        fidelity: fidelity(f_y_at_x, g_y_at_x)?,
        f_y_at_x,
        g_y_at_x,
    })
}

/// Audits a single instance at one perturbation count.
pub fn audit_instance(
    x: &SparseVector,
    instance_id: usize,
    scorer: &dyn Scorer,
    train: &[SparseVector],
    n: usize,
    config: &AuditConfig,
) -> Result<AuditRow> {
    config.validate()?;
    let ctx = AuditContext {
        train,
        scorer,
        config,
        train_scores: scorer.score_batch(train)?,
    };
    let order = neighbor_order(train, x, &KernelSpec::cosine())?;
    audit_instance_inner(&ctx, x, instance_id, &order, n).map_err(|e| e.for_instance(instance_id))
}

/// Runs the full audit: every test instance crossed with every grid size.
/// Tasks fan out on the current rayon pool; results are aggregated in a
/// fixed order so the report does not depend on worker count.
pub fn audit_dataset(
    test: &[SparseVector],
    scorer: &dyn Scorer,
    train: &[SparseVector],
    config: &AuditConfig,
    provenance: crate::config::Provenance,
) -> std::result::Result<(AuditReport, Vec<AuditRow>), AuditFailure> {
    let fail = |error: Error| AuditFailure {
        error,
        partial_rows: Vec::new(),
    };
    config.validate().map_err(fail)?;
    if test.is_empty() {
        return Err(fail(Error::Contract("empty test set".into())));
    }
    let ctx = AuditContext {
        train,
        scorer,
        config,
        train_scores: scorer.score_batch(train).map_err(fail)?,
    };
    let orders: Vec<Vec<usize>> = test
        .par_iter()
        .map(|x| neighbor_order(train, x, &KernelSpec::cosine()))
        .collect::<Result<_>>()
        .map_err(fail)?;

    let tasks: Vec<(usize, usize)> = (0..test.len())
        .flat_map(|i| config.n_grid.iter().map(move |&n| (i, n)))
        .collect();
    let outcomes: Vec<Result<AuditRow>> = tasks
        .par_iter()
        .map(|&(i, n)| {
            audit_instance_inner(&ctx, &test[i], i, &orders[i], n).map_err(|e| e.for_instance(i))
        })
        .collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut first_error: Option<(usize, usize, Error)> = None;
    for (&(i, n), outcome) in tasks.iter().zip(outcomes) {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => {
                if first_error
                    .as_ref()
                    .map(|(fi, fn_, _)| (i, n) < (*fi, *fn_))
                    .unwrap_or(true)
                {
                    first_error = Some((i, n, e));
                }
            }
        }
    }
    rows.sort_by_key(|r| (r.instance_id, r.n));
    if let Some((_, _, error)) = first_error {
        return Err(AuditFailure {
            error,
            partial_rows: rows,
        });
    }

    let report = aggregate(&rows, config, provenance);
    Ok((report, rows))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut sum = KahanSum::new();
    for &v in values {
        sum.add(v);
    }
    let mean = sum.value() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq = KahanSum::new();
    for &v in values {
        sq.add((v - mean) * (v - mean));
    }
    (mean, (sq.value() / (n - 1.0)).sqrt())
}

fn aggregate_test<F: Fn(&AuditRow) -> &TwoSampleResult>(
    rows: &[&AuditRow],
    pick: F,
) -> TestAggregate {
    let total = rows.len();
    let reject_count = rows.iter().filter(|r| pick(r).reject).count();
    let mmds: Vec<f64> = rows.iter().map(|r| pick(r).mmd_b).collect();
    let scaled: Vec<f64> = rows.iter().map(|r| pick(r).scaled_stat).collect();
    let fids: Vec<f64> = rows.iter().map(|r| r.fidelity).collect();
    let (mmd_mean, mmd_std) = mean_std(&mmds);
    let (scaled_mean, scaled_std) = mean_std(&scaled);
    TestAggregate {
        reject_count,
        reject_fraction: reject_count as f64 / total as f64,
        fail_count: total - reject_count,
        fail_fraction: (total - reject_count) as f64 / total as f64,
        mmd_mean,
        mmd_std,
        scaled_mean,
        scaled_std,
        pearson_mmd_fidelity: pearson(&mmds, &fids).ok(),
    }
}

fn aggregate(
    rows: &[AuditRow],
    config: &AuditConfig,
    provenance: crate::config::Provenance,
) -> AuditReport {
    let mut aggregates = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let group: Vec<&AuditRow> = rows.iter().filter(|r| r.n == n).collect();
        if group.is_empty() {
            continue;
        }
        let fids: Vec<f64> = group.iter().map(|r| r.fidelity).collect();
        let (fidelity_mean, fidelity_std) = mean_std(&fids);
        aggregates.push(AggregateRow {
            n,
            instances: group.len(),
            data_shift: aggregate_test(&group, |r| &r.data_shift),
            label_shift: aggregate_test(&group, |r| &r.label_shift),
            fidelity_mean,
            fidelity_std,
        });
    }
    let fids: Vec<f64> = rows.iter().map(|r| r.fidelity).collect();
    let data_mmds: Vec<f64> = rows.iter().map(|r| r.data_shift.mmd_b).collect();
    let label_mmds: Vec<f64> = rows.iter().map(|r| r.label_shift.mmd_b).collect();
    AuditReport {
        provenance,
        aggregates,
        data_pearson_mmd_fidelity: pearson(&data_mmds, &fids).ok(),
        label_pearson_mmd_fidelity: pearson(&label_mmds, &fids).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::FixedUniforms;

    fn sv(dim: usize, pairs: &[(u32, f64)]) -> SparseVector {
        SparseVector::new(
            dim,
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn fidelity_examples() {
        assert_eq!(fidelity(0.7, 0.7).unwrap(), 1.0);
        assert_eq!(fidelity(1.0, 0.0).unwrap(), 0.5);
        assert!((fidelity(0.8, 0.6).unwrap() - 0.8333333333333334).abs() < 1e-12);
        assert!(fidelity(f64::NAN, 0.5).is_err());
        assert!(fidelity(0.5, f64::INFINITY).is_err());
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((pearson(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::CorrelationUndefined(_))
        ));
        assert!(pearson(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn knn_examples() {
        let train = vec![
            sv(2, &[(0, 1.0)]),
            sv(2, &[(0, 0.9), (1, 0.1)]),
            sv(2, &[(1, 1.0)]),
        ];
        let x = sv(2, &[(0, 1.0)]);
        let top1 = knn_reference(&train, &x, 1, &KernelSpec::cosine()).unwrap();
        assert_eq!(top1[0], train[0]);
        let top2 = knn_reference(&train, &x, 2, &KernelSpec::cosine()).unwrap();
        assert_eq!(top2, vec![train[0].clone(), train[1].clone()]);
        assert!(knn_reference(&train, &x, 4, &KernelSpec::cosine()).is_err());
    }

    #[test]
    fn knn_is_permutation_invariant_up_to_ties() {
        let train = vec![
            sv(3, &[(0, 1.0), (1, 1.0)]),
            sv(3, &[(1, 1.0)]),
            sv(3, &[(2, 1.0)]),
            sv(3, &[(0, 1.0)]),
        ];
        let x = sv(3, &[(0, 2.0)]);
        let picked = knn_reference(&train, &x, 2, &KernelSpec::cosine()).unwrap();
        let mut permuted = train.clone();
        permuted.swap(0, 2);
        permuted.swap(1, 3);
        let picked_p = knn_reference(&permuted, &x, 2, &KernelSpec::cosine()).unwrap();
        let mut a: Vec<_> = picked.iter().map(|v| v.indices().to_vec()).collect();
        let mut b: Vec<_> = picked_p.iter().map(|v| v.indices().to_vec()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn ties_break_by_ascending_index() {
        let train = vec![sv(2, &[(1, 1.0)]), sv(2, &[(1, 2.0)]), sv(2, &[(0, 1.0)])];
        let x = sv(2, &[(0, 1.0)]);
        // instances 0 and 1 both have similarity 0; index 0 wins the tie
        let picked = knn_reference(&train, &x, 2, &KernelSpec::cosine()).unwrap();
        assert_eq!(picked[0], train[2]);
        assert_eq!(picked[1], train[0]);
    }

    struct StubScorer {
        dim: usize,
        classes: [i32; 2],
    }

    impl Scorer for StubScorer {
        fn dim(&self) -> usize {
            self.dim
        }
        fn class_ids(&self) -> &[i32] {
            &self.classes
        }
        fn score(&self, x: &SparseVector) -> Result<ScoreVector> {
            // class 1 iff feature 0 present
            let p = if x.get(0) != 0.0 { 0.9 } else { 0.2 };
            ScoreVector::new(vec![1.0 - p, p], self.classes.to_vec())
        }
    }

    #[test]
    fn class_conditional_examples() {
        let scorer = StubScorer { dim: 4, classes: [0, 1] };
        let reference = vec![
            sv(4, &[(0, 1.0)]),          // predicted 1
            sv(4, &[(1, 1.0)]),          // predicted 0
            sv(4, &[(0, 1.0), (2, 1.0)]), // predicted 1
            sv(4, &[(0, 2.0)]),          // predicted 1
        ];
        let x = sv(4, &[(0, 1.0), (3, 1.0)]); // predicted 1

        // n equals the whole matching subset: everything comes back
        let mut all_stream = FixedUniforms::new(vec![0.0]);
        let all =
            class_conditional_reference(&reference, &scorer, &x, 3, &mut all_stream).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.iter().all(|r| r.get(0) != 0.0));

        // matching subset {a, b, c} with uniforms picking positions {0, 2}
        let mut stream = FixedUniforms::new(vec![0.0, 0.5]);
        let picked =
            class_conditional_reference(&reference, &scorer, &x, 2, &mut stream).unwrap();
        assert_eq!(picked[0], reference[0]);
        assert_eq!(picked[1], reference[3]);

        // nothing matching: error, not empty set
        let y = sv(4, &[(1, 1.0)]); // predicted 0; only one match but ask for 2
        let mut s2 = FixedUniforms::new(vec![0.0]);
        let err = class_conditional_reference(&reference, &scorer, &y, 2, &mut s2).unwrap_err();
        match err {
            Error::Audit(msg) => {
                assert!(msg.contains("class 0"), "{msg}");
                assert!(msg.contains("only 1"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identical_samples_fail_to_reject_in_both_tests() {
        // diagnostic mode: comparing a reference set against itself
        let refs: Vec<SparseVector> = (0..10)
            .map(|i| sv(6, &[(i % 6, 1.0 + i as f64)]))
            .collect();
        let data = two_sample_test(&refs, &refs.clone(), &KernelSpec::cosine(), 0.05).unwrap();
        assert!(!data.reject);
        let scores: Vec<SparseVector> = (0..10)
            .map(|i| SparseVector::from_dense(&[0.5 + 0.01 * i as f64, 0.5 - 0.01 * i as f64]))
            .collect();
        let label =
            two_sample_test(&scores, &scores.clone(), &KernelSpec::rbf_median_heuristic(), 0.05)
                .unwrap();
        assert!(!label.reject);
    }

    #[test]
    fn fidelity_always_in_unit_interval() {
        let mut s = CounterStream::new(3, &[8]);
        for _ in 0..1000 {
            let f = s.next_uniform();
            let g = s.next_uniform() * 4.0 - 2.0;
            let v = fidelity(f, g).unwrap();
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn aggregation_is_linear_under_duplication() {
        let dim = 8;
        let train: Vec<SparseVector> = (0..20)
            .map(|i| sv(dim, &[(0, 1.0 + (i % 3) as f64), ((i % 7) as u32 + 1, 1.0)]))
            .collect();
        let test: Vec<SparseVector> = (0..4)
            .map(|i| sv(dim, &[(0, 1.0), ((i % 5) as u32 + 2, 2.0)]))
            .collect();
        let scorer = StubScorer { dim, classes: [0, 1] };
        let config = AuditConfig {
            n_grid: vec![2, 5],
            explained_class: 1,
            ..AuditConfig::default()
        };
        let provenance = crate::config::Provenance::new(&config, "t", "u", "stub".into());
        let (report, rows) =
            audit_dataset(&test, &scorer, &train, &config, provenance.clone()).unwrap();

        // duplicating every row doubles counts and leaves fractions and means
        // unchanged
        let mut doubled_rows = rows.clone();
        doubled_rows.extend(rows.iter().cloned());
        doubled_rows.sort_by_key(|r| (r.instance_id, r.n));
        let report2 = aggregate(&doubled_rows, &config, provenance);
        for (a, b) in report.aggregates.iter().zip(&report2.aggregates) {
            assert_eq!(2 * a.instances, b.instances);
            assert_eq!(2 * a.data_shift.reject_count, b.data_shift.reject_count);
            assert_eq!(2 * a.label_shift.fail_count, b.label_shift.fail_count);
            assert!((a.data_shift.reject_fraction - b.data_shift.reject_fraction).abs() < 1e-12);
            assert!((a.fidelity_mean - b.fidelity_mean).abs() < 1e-12);
            assert!((a.data_shift.mmd_mean - b.data_shift.mmd_mean).abs() < 1e-12);
            assert!((a.label_shift.scaled_mean - b.label_shift.scaled_mean).abs() < 1e-12);
        }
    }

    #[test]
    fn audit_rows_are_reproducible_via_audit_instance() {
        let dim = 8;
        let train: Vec<SparseVector> = (0..20)
            .map(|i| sv(dim, &[(0, 1.0 + (i % 3) as f64), ((i % 7) as u32 + 1, 1.0)]))
            .collect();
        let test: Vec<SparseVector> = (0..3)
            .map(|i| sv(dim, &[(0, 1.0), ((i % 5) as u32 + 2, 2.0)]))
            .collect();
        let scorer = StubScorer { dim, classes: [0, 1] };
        let config = AuditConfig {
            n_grid: vec![2, 5],
            explained_class: 1,
            ..AuditConfig::default()
        };
        let provenance = crate::config::Provenance::new(&config, "t", "u", "stub".into());
        let (_, rows) = audit_dataset(&test, &scorer, &train, &config, provenance).unwrap();
        for row in &rows {
            let again = audit_instance(
                &test[row.instance_id],
                row.instance_id,
                &scorer,
                &train,
                row.n,
                &config,
            )
            .unwrap();
            assert_eq!(&again, row, "instance {} n {}", row.instance_id, row.n);
        }
    }
}
