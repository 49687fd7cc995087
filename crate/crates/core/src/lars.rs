//! Least Angle Regression with the lasso modification, used to order the
//! interpretable features by entry into the regularization path.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

const EPS: f64 = 1e-12;

/// Preprocessed design: weighted, centered, unit-norm columns.
struct Standardized {
    /// column-major data, rows.len() entries each
    columns: Vec<Vec<f64>>,
    /// original column index of each surviving column
    col_ids: Vec<usize>,
    /// centered sqrt-weighted target
    target: Vec<f64>,
}

fn standardize(z_binary: &[Vec<u8>], weights: &[f64], targets: &[f64]) -> Result<Standardized> {
    let rows = z_binary.len();
    let dims = z_binary[0].len();
    let root_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();

    let mut target: Vec<f64> = targets
        .iter()
        .zip(&root_w)
        .map(|(y, rw)| y * rw)
        .collect();
    let t_mean = target.iter().sum::<f64>() / rows as f64;
    for t in &mut target {
        *t -= t_mean;
    }

    let mut columns = Vec::new();
    let mut col_ids = Vec::new();
    for j in 0..dims {
        let mut col: Vec<f64> = z_binary
            .iter()
            .zip(&root_w)
            .map(|(row, rw)| row[j] as f64 * rw)
            .collect();
        let mean = col.iter().sum::<f64>() / rows as f64;
        let mut norm_sq = 0.0;
        for v in &mut col {
            *v -= mean;
            norm_sq += *v * *v;
        }
        let norm = norm_sq.sqrt();
        if norm <= EPS {
            continue; // zero-variance column
        }
        for v in &mut col {
            *v /= norm;
        }
        columns.push(col);
        col_ids.push(j);
    }
    Ok(Standardized {
        columns,
        col_ids,
        target,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs the LARS-LASSO path on the binary interpretable matrix until `k_max`
/// variables are active or the path exhausts, and returns the surviving
/// columns in entry order.
///
/// Rows and the target are pre-scaled by sqrt(weight), then columns are
/// centered and l2-normalized; zero-variance columns never enter. Returns an
/// empty selection when the target carries no signal.
pub fn lars_lasso_select(
    z_binary: &[Vec<u8>],
    weights: &[f64],
    targets: &[f64],
    k_max: usize,
) -> Result<Vec<usize>> {
    if z_binary.is_empty()
        || z_binary.len() != weights.len()
        || z_binary.len() != targets.len()
    {
        return Err(Error::Contract(format!(
            "row count mismatch: {} rows, {} weights, {} targets",
            z_binary.len(),
            weights.len(),
            targets.len()
        )));
    }
    if k_max == 0 {
        return Err(Error::Contract("k_max must be at least 1".into()));
    }
    let width = z_binary[0].len();
    if z_binary.iter().any(|r| r.len() != width) {
        return Err(Error::Contract("ragged binary matrix".into()));
    }
    let std = standardize(z_binary, weights, targets)?;
    if std.columns.is_empty() {
        return Err(Error::Selection(
            "no informative interpretable features".into(),
        ));
    }

    let rows = std.target.len();
    let p = std.columns.len();
    let mut active: Vec<usize> = Vec::new();
    let mut is_active = vec![false; p];
    let mut beta = vec![0.0f64; p];
    let mut mu = vec![0.0f64; rows];
    let mut drop_pending = false;
    let scale = std.target.iter().map(|t| t * t).sum::<f64>().sqrt().max(1.0);
    let tol = EPS * scale;

    let max_iters = 8 * p + 32;
    for _ in 0..max_iters {
        // correlations with the current residual
        let corr: Vec<f64> = std
            .columns
            .iter()
            .map(|col| {
                col.iter()
                    .zip(std.target.iter().zip(&mu))
                    .map(|(c, (t, m))| c * (t - m))
                    .sum::<f64>()
            })
            .collect();
        let c_max = corr.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        if c_max < tol {
            break; // residual uncorrelated with everything
        }

        if !drop_pending && active.len() < k_max {
            // add the most correlated inactive column; skip candidates that
            // would make the active Gram singular (collinear with the set)
            let mut candidates: Vec<usize> = (0..p).filter(|&j| !is_active[j]).collect();
            candidates.sort_by(|&a, &b| {
                corr[b]
                    .abs()
                    .partial_cmp(&corr[a].abs())
                    .expect("finite correlations")
                    .then(a.cmp(&b))
            });
            let mut added = false;
            for &cand in &candidates {
                if corr[cand].abs() < tol {
                    break;
                }
                active.push(cand);
                if active_direction(&std.columns, &active, &corr).is_some() {
                    is_active[cand] = true;
                    added = true;
                    break;
                }
                active.pop();
            }
            if !added {
                break; // path exhausted
            }
            if active.len() == k_max {
                break; // selection complete, no need to step further
            }
        }
        drop_pending = false;

        let Some((direction, equi_norm)) = active_direction(&std.columns, &active, &corr) else {
            break;
        };
        // equiangular vector in row space and its correlation with all columns
        let mut u = vec![0.0f64; rows];
        for (pos, &j) in active.iter().enumerate() {
            let d = direction[pos];
            for (ui, cji) in u.iter_mut().zip(&std.columns[j]) {
                *ui += d * cji;
            }
        }
        let a_corr: Vec<f64> = std.columns.iter().map(|col| dot(col, &u)).collect();

        // entry step: smallest positive gamma where an inactive column ties
        let mut gamma = c_max / equi_norm;
        for j in 0..p {
            if is_active[j] {
                continue;
            }
            for cand in [
                (c_max - corr[j]) / (equi_norm - a_corr[j]),
                (c_max + corr[j]) / (equi_norm + a_corr[j]),
            ] {
                if cand > tol && cand < gamma {
                    gamma = cand;
                }
            }
        }
        // lasso modification: drop a coefficient that would cross zero
        let mut drop_pos: Option<usize> = None;
        for (pos, &j) in active.iter().enumerate() {
            if direction[pos] == 0.0 {
                continue;
            }
            let crossing = -beta[j] / direction[pos];
            if crossing > tol && crossing < gamma {
                gamma = crossing;
                drop_pos = Some(pos);
            }
        }

        for (pos, &j) in active.iter().enumerate() {
            beta[j] += gamma * direction[pos];
        }
        for (mi, ui) in mu.iter_mut().zip(&u) {
            *mi += gamma * ui;
        }

        if let Some(pos) = drop_pos {
            let j = active.remove(pos);
            beta[j] = 0.0;
            is_active[j] = false;
            drop_pending = true;
        }
    }

    Ok(active.into_iter().map(|j| std.col_ids[j]).collect())
}

/// Coefficient direction (sign-adjusted equiangular weights) for the active
/// set, plus the equiangular correlation A. `None` when the active Gram is
/// numerically singular.
fn active_direction(
    columns: &[Vec<f64>],
    active: &[usize],
    corr: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let k = active.len();
    let signs: Vec<f64> = active.iter().map(|&j| corr[j].signum()).collect();
    let mut g = DMatrix::zeros(k, k);
    for r in 0..k {
        for c in r..k {
            let v = signs[r] * signs[c] * dot(&columns[active[r]], &columns[active[c]]);
            g[(r, c)] = v;
            g[(c, r)] = v;
        }
    }
    let chol = Cholesky::new(g)?;
    let l = chol.l_dirty();
    let (mut pivot_min, mut pivot_max) = (f64::INFINITY, 0.0f64);
    for i in 0..k {
        pivot_min = pivot_min.min(l[(i, i)]);
        pivot_max = pivot_max.max(l[(i, i)]);
    }
    if !(pivot_min > pivot_max * 1e-7) {
        return None;
    }
    let w_bar = chol.solve(&DVector::from_element(k, 1.0));
    let total: f64 = w_bar.iter().sum();
    if !(total > EPS) || !w_bar.iter().all(|v| v.is_finite()) {
        return None;
    }
    let equi_norm = total.sqrt().recip();
    let direction: Vec<f64> = w_bar
        .iter()
        .zip(&signs)
        .map(|(w, s)| s * w * equi_norm)
        .collect();
    if !direction.iter().all(|v| v.is_finite()) || !equi_norm.is_finite() {
        return None;
    }
    Some((direction, equi_norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{CounterStream, UniformSource};

    #[test]
    fn single_informative_column_selected_first() {
        // y depends only on column 3
        let rows = vec![
            vec![1u8, 0, 1, 1, 0],
            vec![0, 1, 1, 0, 1],
            vec![0, 1, 0, 1, 0],
            vec![0, 0, 1, 0, 1],
            vec![1, 0, 0, 1, 1],
            vec![0, 1, 0, 0, 0],
        ];
        let y: Vec<f64> = rows.iter().map(|r| r[3] as f64).collect();
        let w = vec![1.0; rows.len()];
        let sel = lars_lasso_select(&rows, &w, &y, 1).unwrap();
        assert_eq!(sel, vec![3]);
    }

    #[test]
    fn informative_columns_all_enter_and_constant_columns_never_do() {
        // column 1 is constant one, column 4 constant zero; y linear in 0 and 2
        let rows = vec![
            vec![1u8, 1, 1, 0, 0],
            vec![0, 1, 1, 1, 0],
            vec![1, 1, 0, 1, 0],
            vec![0, 1, 0, 0, 0],
            vec![1, 1, 1, 1, 0],
            vec![0, 1, 0, 1, 0],
        ];
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 0.8 * r[0] as f64 - 0.5 * r[2] as f64)
            .collect();
        let w = vec![1.0; rows.len()];
        let sel = lars_lasso_select(&rows, &w, &y, 5).unwrap();
        assert!(sel.contains(&0) && sel.contains(&2), "selected {sel:?}");
        assert!(!sel.contains(&1) && !sel.contains(&4), "selected {sel:?}");
    }

    #[test]
    fn all_zero_variance_is_a_selection_error() {
        let rows = vec![vec![1u8, 0], vec![1, 0], vec![1, 0]];
        let y = vec![1.0, 2.0, 3.0];
        let w = vec![1.0; 3];
        assert!(matches!(
            lars_lasso_select(&rows, &w, &y, 2),
            Err(Error::Selection(_))
        ));
    }

    #[test]
    fn constant_target_selects_nothing() {
        let rows = vec![vec![1u8, 0], vec![0, 1], vec![1, 1]];
        let y = vec![0.7; 3];
        let w = vec![1.0; 3];
        assert_eq!(lars_lasso_select(&rows, &w, &y, 2).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn duplicate_columns_do_not_break_the_path() {
        // columns 0 and 1 identical: only one of them can enter
        let rows = vec![
            vec![1u8, 1, 0],
            vec![0, 0, 1],
            vec![1, 1, 1],
            vec![0, 0, 0],
        ];
        let y = vec![1.0, 0.1, 1.2, 0.0];
        let w = vec![1.0; 4];
        let sel = lars_lasso_select(&rows, &w, &y, 3).unwrap();
        assert!(!(sel.contains(&0) && sel.contains(&1)), "selected {sel:?}");
        assert!(!sel.is_empty());
    }

    #[test]
    fn two_rows_select_at_most_one_column() {
        // after centering, every 2-row column is collinear
        let rows = vec![vec![1u8, 0, 1, 1], vec![0, 1, 1, 0]];
        let y = vec![0.9, 0.2];
        let w = vec![1.0, 0.5];
        let sel = lars_lasso_select(&rows, &w, &y, 4).unwrap();
        assert_eq!(sel.len(), 1);
    }

    /// Direct scan oracle: weighted correlation of each column with the
    /// centered target, under the same sqrt-weight reduction.
    fn first_entry_oracle(rows: &[Vec<u8>], w: &[f64], y: &[f64]) -> Vec<f64> {
        let n = rows.len();
        let d = rows[0].len();
        let rw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let ty: Vec<f64> = y.iter().zip(&rw).map(|(a, b)| a * b).collect();
        let y_mean = ty.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = ty.iter().map(|v| v - y_mean).collect();
        let y_norm = yc.iter().map(|v| v * v).sum::<f64>().sqrt();
        (0..d)
            .map(|j| {
                let col: Vec<f64> = (0..n).map(|i| rows[i][j] as f64 * rw[i]).collect();
                let mean = col.iter().sum::<f64>() / n as f64;
                let cc: Vec<f64> = col.iter().map(|v| v - mean).collect();
                let norm = cc.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm <= EPS || y_norm <= EPS {
                    return 0.0;
                }
                (cc.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / (norm * y_norm)).abs()
            })
            .collect()
    }

    #[test]
    fn first_entry_matches_weighted_correlation_scan() {
        let mut s = CounterStream::new(77, &[0]);
        for case in 0..100u64 {
            let d = 2 + (s.next_uniform() * 11.0) as usize; // <= 12
            let n = 5 + (s.next_uniform() * 46.0) as usize; // <= 50
            let rows: Vec<Vec<u8>> = (0..n)
                .map(|_| (0..d).map(|_| (s.next_uniform() < 0.5) as u8).collect())
                .collect();
            let w: Vec<f64> = (0..n).map(|_| 0.05 + 0.95 * s.next_uniform()).collect();
            let y: Vec<f64> = (0..n).map(|_| s.next_normal()).collect();
            let sel = lars_lasso_select(&rows, &w, &y, 1).unwrap();
            let corr = first_entry_oracle(&rows, &w, &y);
            let best = corr.iter().fold(0.0f64, |a, &c| a.max(c));
            if best < 1e-9 {
                continue; // degenerate draw, nothing informative
            }
            assert_eq!(sel.len(), 1, "case {case}");
            assert!(
                corr[sel[0]] >= best - 1e-9,
                "case {case}: picked col {} with corr {}, best {best}",
                sel[0],
                corr[sel[0]]
            );
        }
    }
}
