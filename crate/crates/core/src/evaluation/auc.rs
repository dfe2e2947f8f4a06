use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::waveform::Label;

/// One scored record, the unit of evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredRecord {
    pub id: String,
    pub label: Label,
    pub score: f64,
}

/// Mann-Whitney AUC: the fraction of (event, noise) pairs where the event
/// scores higher, ties counting one half.
pub fn roc_auc(records: &[ScoredRecord]) -> Result<f64> {
    if let Some(r) = records.iter().find(|r| !r.score.is_finite()) {
        return Err(Error::InvalidArgument(format!("record {} has non-finite score {}", r.id, r.score)));
    }
    let n_pos = records.iter().filter(|r| r.label == Label::Event).count();
    let n_neg = records.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(format!(
            "roc_auc needs both classes, got {n_pos} event and {n_neg} noise records"
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].score.total_cmp(&records[b].score));
    // Twice the rank sum of events keeps tied mid-ranks integral.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && records[order[j + 1]].score == records[order[i]].score {
            j += 1;
        }
        // Ranks i+1..=j+1 share the mid-rank (i + j + 2) / 2.
        let twice_mid = (i + j + 2) as u64;
        let events = order[i..=j].iter().filter(|&&k| records[k].label == Label::Event).count() as u64;
        twice_rank_sum += events * twice_mid;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - (n_pos * (n_pos + 1)) as u64;
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Stratified assignment of `labels` to `k` disjoint folds. Each class is
/// shuffled and dealt round-robin, continuing across classes, so fold sizes
/// differ by at most one overall and per class.
pub fn kfold_split(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-fold needs k >= 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::InvalidArgument(format!("{} records cannot fill {k} folds", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dealt = Vec::with_capacity(labels.len());
    for class in [Label::Event, Label::Noise] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        dealt.extend(idx);
    }
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in dealt.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}
