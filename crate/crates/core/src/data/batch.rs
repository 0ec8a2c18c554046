//! Deterministic batching: seeded shuffles, plus the paired source/target
//! stream used by domain adaptation.

use crate::data::{Dataset, DomainTag, ImageBatch};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// One epoch of index batches: a seeded shuffle chunked by `batch_size`
/// (final batch may be smaller).
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1);
    shuffled(n, rng).chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// One epoch of paired (source, target) index batches for DA: the larger set
/// defines the epoch, the smaller one cycles; the two batches of a step are
/// always the same size.
pub fn paired_epoch(
    n_source: usize,
    n_target: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(Vec<usize>, Vec<usize>)> {
    assert!(batch_size >= 1);
    let src = shuffled(n_source, rng);
    let tgt = shuffled(n_target, rng);
    let drive_source = n_source >= n_target;
    let driver: &[usize] = if drive_source { &src } else { &tgt };
    let cycler: &[usize] = if drive_source { &tgt } else { &src };
    let mut out = Vec::new();
    let mut cyc = 0usize;
    for chunk in driver.chunks(batch_size) {
        let follow: Vec<usize> = (0..chunk.len())
            .map(|k| cycler[(cyc + k) % cycler.len()])
            .collect();
        cyc = (cyc + chunk.len()) % cycler.len();
        if drive_source {
            out.push((chunk.to_vec(), follow));
        } else {
            out.push((follow, chunk.to_vec()));
        }
    }
    out
}

/// Materialize an [`ImageBatch`] from dataset rows. Target batches are
/// structurally unlabeled.
pub fn batch_from(ds: &Dataset, idxs: &[usize], tag: DomainTag) -> ImageBatch {
    let labels = match tag {
        DomainTag::Source(_) => idxs.iter().map(|&i| Some(ds.labels[i])).collect(),
        DomainTag::Target => vec![None; idxs.len()],
    };
    ImageBatch {
        images: idxs.iter().map(|&i| ds.images[i].clone()).collect(),
        labels,
        domains: vec![tag; idxs.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::rng::{stream_rng, Stream};

    fn rng(i: u64) -> ChaCha8Rng {
        stream_rng(3, Stream::Shuffle, i)
    }

    #[test]
    fn ten_by_three_gives_3331() {
        let batches = epoch_batches(10, 3, &mut rng(0));
        let sizes: Vec<usize> = batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
    }

    #[test]
    fn epoch_is_a_partition() {
        let batches = epoch_batches(23, 4, &mut rng(1));
        let mut seen: Vec<usize> = batches.into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_sequence() {
        let a = epoch_batches(17, 5, &mut rng(2));
        let b = epoch_batches(17, 5, &mut rng(2));
        assert_eq!(a, b);
        let c = epoch_batches(17, 5, &mut rng(3));
        assert_ne!(a, c);
    }

    #[test]
    fn paired_epoch_cycles_smaller_target() {
        let pairs = paired_epoch(10, 4, 3, &mut rng(4));
        // 10 source samples drive: batches 3,3,3,1
        assert_eq!(pairs.len(), 4);
        let mut src_seen: Vec<usize> = Vec::new();
        for (s, t) in &pairs {
            assert_eq!(s.len(), t.len(), "paired batches must match in size");
            for &ti in t {
                assert!(ti < 4);
            }
            src_seen.extend_from_slice(s);
        }
        src_seen.sort_unstable();
        assert_eq!(src_seen, (0..10).collect::<Vec<_>>());
        // every target index appears at least twice across 10 draws from 4
        let mut counts = [0usize; 4];
        for (_, t) in &pairs {
            for &ti in t {
                counts[ti] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c >= 2), "{counts:?}");
    }

    #[test]
    fn paired_epoch_cycles_smaller_source() {
        let pairs = paired_epoch(4, 9, 4, &mut rng(5));
        assert_eq!(pairs.len(), 3); // target drives: 4,4,1
        let mut tgt_seen: Vec<usize> = Vec::new();
        for (s, t) in &pairs {
            assert_eq!(s.len(), t.len());
            tgt_seen.extend_from_slice(t);
        }
        tgt_seen.sort_unstable();
        assert_eq!(tgt_seen, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn target_batches_are_structurally_unlabeled() {
        let ds = Dataset {
            domain: "t".into(),
            num_classes: 2,
            images: vec![Image::zeros(1, 4, 4), Image::zeros(1, 4, 4)],
            labels: vec![0, 1],
        };
        let src = batch_from(&ds, &[0, 1], DomainTag::Source(0));
        assert_eq!(src.labels, vec![Some(0), Some(1)]);
        src.check_invariants().unwrap();
        let tgt = batch_from(&ds, &[0, 1], DomainTag::Target);
        assert_eq!(tgt.labels, vec![None, None]);
        tgt.check_invariants().unwrap();
    }
}
