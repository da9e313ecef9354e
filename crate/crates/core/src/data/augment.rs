//! History-only augmentation: stride-2 subsampling and stochastic trimming.

use rand::Rng;

use super::sample::{Augmentation, TrainingSample};

pub const SUBSAMPLE_MIN_FRAMES: usize = 10;
pub const TRIM_MIN_FRAMES: usize = 7;

/// Every other frame, starting with the first.
pub fn subsample_history<T: Clone>(h: &[T]) -> Vec<T> {
    h.iter().step_by(2).cloned().collect()
}

pub fn trim_first_two<T: Clone>(h: &[T]) -> Vec<T> {
    h.iter().skip(2).cloned().collect()
}

/// Removes frames `k` and `k + 1`.
pub fn remove_pair<T: Clone>(h: &[T], k: usize) -> Vec<T> {
    h.iter()
        .enumerate()
        .filter(|(i, _)| *i != k && *i != k + 1)
        .map(|(_, f)| f.clone())
        .collect()
}

/// Up to two perturbed copies of `sample`; only the history changes.
pub fn augment(sample: &TrainingSample, rng: &mut impl Rng) -> Vec<TrainingSample> {
    let mut out = Vec::new();
    let n = sample.history.len();
    if n >= SUBSAMPLE_MIN_FRAMES && rng.random_bool(0.5) {
        let mut s = sample.clone();
        s.history = subsample_history(&sample.history);
        s.augmentation = Some(Augmentation::Subsample);
        out.push(s);
    }
    if n >= TRIM_MIN_FRAMES {
        let mut h = sample.history.clone();
        let first = rng.random_bool(0.5);
        if first {
            h = trim_first_two(&h);
        }
        let pair = h.len() >= TRIM_MIN_FRAMES && rng.random_bool(0.5);
        let mut removed_at = None;
        if pair {
            let k = rng.random_range(0..h.len() - 1);
            h = remove_pair(&h, k);
            removed_at = Some(k);
        }
        if first || pair {
            let mut s = sample.clone();
            s.history = h;
            s.augmentation = Some(Augmentation::Trim {
                first_two: first,
                pair_at: removed_at,
            });
            out.push(s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let h: Vec<u32> = (1..=12).collect();
        assert_eq!(subsample_history(&h), vec![1, 3, 5, 7, 9, 11]);
        let h8: Vec<u32> = (1..=8).collect();
        assert_eq!(trim_first_two(&h8), (3..=8).collect::<Vec<_>>());
        assert_eq!(remove_pair(&h8, 2), vec![1, 2, 5, 6, 7, 8]);
    }
}
