use ndarray::{Array1, Array2, ArrayView1};

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Target<F> {
    Hard(u32),
    /// Sparse distribution over token ids; weights sum to one.
    Soft(Vec<(u32, F)>),
}

/// Target for one logits row, with its weight in the summed loss.
#[derive(Debug, Clone, PartialEq)]
pub struct RowTarget<F> {
    pub target: Target<F>,
    pub weight: F,
}

pub fn softmax_row<F: Scalar>(row: ArrayView1<F>) -> Array1<F> {
    let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
    let e = row.mapv(|x| (x - max).exp());
    let s = e.sum();
    e / s
}

fn log_sum_exp<F: Scalar>(row: ArrayView1<F>) -> F {
    let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
    max + row.iter().map(|&x| (x - max).exp()).sum::<F>().ln()
}

pub fn entropy<F: Scalar>(p: &[F]) -> F {
    -p.iter().filter(|&&q| q > F::zero()).map(|&q| q * q.ln()).sum::<F>()
}

/// Weighted sum of per-row cross-entropies and its gradient w.r.t. the logits.
/// `targets[i]` applies to `logits.row(i)`.
pub fn cross_entropy<F: Scalar>(logits: &Array2<F>, targets: &[RowTarget<F>]) -> Result<(F, Array2<F>)> {
    if logits.nrows() != targets.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} targets", logits.nrows()),
            got: format!("{}", targets.len()),
        });
    }
    let v = logits.ncols();
    let mut loss = F::zero();
    let mut grad = Array2::<F>::zeros(logits.raw_dim());
    for (i, t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        let mut g = grad.row_mut(i);
        for (gj, &x) in g.iter_mut().zip(row.iter()) {
            *gj = (x - lse).exp() * t.weight;
        }
        match &t.target {
            Target::Hard(id) => {
                let id = *id as usize;
                if id >= v {
                    return Err(Error::UnknownToken { id: id as u32, size: v });
                }
                loss += t.weight * (lse - row[id]);
                g[id] -= t.weight;
            }
            Target::Soft(dist) => {
                for &(id, q) in dist {
                    let id = id as usize;
                    if id >= v {
                        return Err(Error::UnknownToken { id: id as u32, size: v });
                    }
                    loss += t.weight * q * (lse - row[id]);
                    g[id] -= t.weight * q;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Mean negative log-likelihood over the masked rows.
pub fn loss_ce<F: Scalar>(logits: &Array2<F>, targets: &[Target<F>], mask: &[bool]) -> Result<F> {
    if targets.len() != logits.nrows() || mask.len() != logits.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", logits.nrows()),
            got: format!("{} targets, {} mask entries", targets.len(), mask.len()),
        });
    }
    let n = mask.iter().filter(|m| **m).count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let w = F::one() / F::lit(n as f64);
    let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let sel = logits.select(ndarray::Axis(0), &rows);
    let rt: Vec<RowTarget<F>> = rows
        .iter()
        .map(|&i| RowTarget {
            target: targets[i].clone(),
            weight: w,
        })
        .collect();
    Ok(cross_entropy(&sel, &rt)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_way_uniform_is_ln2() {
        let l = array![[0.0f64, 0.0]];
        let v = loss_ce(&l, &[Target::Hard(1)], &[true]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_logits_give_near_zero_loss() {
        let l = array![[60.0f64, 0.0, 0.0]];
        assert!(loss_ce(&l, &[Target::Hard(0)], &[true]).unwrap() < 1e-20);
    }

    #[test]
    fn soft_target_equal_to_prediction_gives_entropy() {
        let l = array![[0.3f64, -1.2, 2.0, 0.1]];
        let p = softmax_row(l.row(0));
        let dist: Vec<(u32, f64)> = p.iter().enumerate().map(|(i, &q)| (i as u32, q)).collect();
        let v = loss_ce(&l, &[Target::Soft(dist)], &[true]).unwrap();
        assert!((v - entropy(p.as_slice().unwrap())).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let l = array![[0.0f64, 0.0]];
        assert!(matches!(loss_ce(&l, &[Target::Hard(0)], &[false]), Err(Error::EmptyMask)));
    }

    #[test]
    fn gradient_matches_closed_form() {
        let l = array![[1.0f64, 2.0, 0.5]];
        let t = [RowTarget { target: Target::Hard(2), weight: 0.5 }];
        let (_, g) = cross_entropy(&l, &t).unwrap();
        let p = softmax_row(l.row(0));
        assert!((g[(0, 0)] - 0.5 * p[0]).abs() < 1e-15);
        assert!((g[(0, 2)] - 0.5 * (p[2] - 1.0)).abs() < 1e-15);
    }
}
