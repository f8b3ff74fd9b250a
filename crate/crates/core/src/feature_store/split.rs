use rand::seq::SliceRandom;

use super::Split;
use crate::error::{Error, Result};
use crate::util;

/// Per-class part sizes for `m` samples: floors plus largest remainders,
/// then every nonzero part is lifted to at least one sample.
fn part_sizes(m: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * m as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut rest = m - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        if fractions[k] > 0.0 {
            sizes[k] += 1;
            rest -= 1;
        }
    }
    for k in 0..3 {
        if fractions[k] > 0.0 && sizes[k] == 0 {
            let donor = (0..3).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
            sizes[donor] -= 1;
            sizes[k] += 1;
        }
    }
    sizes
}

/// Assigns train/val/test tags so each class is split in the given proportions.
///
/// `fractions` is (train, val, test) and must sum to one.
pub fn stratified_split(labels: &[usize], fractions: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::invalid(format!("split fractions out of range: {fractions:?}")));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions must sum to 1: {fractions:?}")));
    }
    let parts = fractions.iter().filter(|&&f| f > 0.0).count();
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = util::rng(seed);
    let mut out = vec![Split::Train; labels.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < parts {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                parts,
            });
        }
        members.shuffle(&mut rng);
        let sizes = part_sizes(members.len(), &fractions);
        let mut it = members.iter();
        for (tag, size) in Split::ALL.into_iter().zip(sizes) {
            for &i in it.by_ref().take(size) {
                out[i] = tag;
            }
        }
    }
    Ok(out)
}
