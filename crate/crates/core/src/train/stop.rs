/// True once each of the last `patience` epochs improved on the epoch
/// before it by at most `min_delta`. A rise in loss counts as no
/// improvement.
pub fn should_stop(losses: &[f64], min_delta: f64, patience: usize) -> bool {
    if patience == 0 || losses.len() <= patience {
        return false;
    }
    losses[losses.len() - patience - 1..]
        .windows(2)
        .all(|w| w[0] - w[1] <= min_delta)
}

/// One-based epoch of the lowest loss; the earliest on ties.
pub fn select_epoch(losses: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[best] {
            best = i;
        }
    }
    best + 1
}
