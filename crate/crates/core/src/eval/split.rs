use rand::seq::SliceRandom;

use crate::data::{AssociationLabels, N_CLASSES};
use crate::error::{McmaError, Result};
use crate::rng::{stream, Stream};

/// Train and test row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Puts `round(test_fraction * n_c)` rows of every class `c` in the test set.
pub fn stratified_split(
    labels: &AssociationLabels,
    test_fraction: f64,
    seed: u64,
) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(McmaError::InvalidArgument(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    let mut rng = stream(seed, Stream::Split);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..N_CLASSES {
        let mut idx: Vec<usize> = labels
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &y)| usize::from(y) == c)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        let n_test = (test_fraction * idx.len() as f64).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}
