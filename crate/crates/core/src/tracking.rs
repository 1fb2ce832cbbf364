//! Minimal overlap tracker that turns per-frame instance masks into a track file.
//!
//! It exists so that segmentation output can be scored with TRA; it does not
//! detect divisions.

use std::collections::BTreeMap;

use crate::dataio::TrackRecord;
use crate::raster::LabelMask;
use crate::{Error, Result};

/// A candidate link between a label in frame t−1 and one in frame t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub prev: u32,
    pub next: u32,
    pub iou: f64,
}

/// Pairs with positive overlap and IoU ≥ `min_iou`, sorted by descending IoU,
/// ties broken by (prev, next) ascending.
pub fn candidate_links(prev: &LabelMask, next: &LabelMask, min_iou: f64) -> Result<Vec<Link>> {
    prev.check_same_shape(next)?;
    let mut area_prev: BTreeMap<u32, u64> = BTreeMap::new();
    let mut area_next: BTreeMap<u32, u64> = BTreeMap::new();
    let mut overlap: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for (&a, &b) in prev.as_slice().iter().zip(next.as_slice()) {
        if a != 0 {
            *area_prev.entry(a).or_default() += 1;
        }
        if b != 0 {
            *area_next.entry(b).or_default() += 1;
        }
        if a != 0 && b != 0 {
            *overlap.entry((a, b)).or_default() += 1;
        }
    }
    let mut links: Vec<Link> = overlap
        .into_iter()
        .map(|((a, b), inter)| {
            let union = area_prev[&a] + area_next[&b] - inter;
            Link {
                prev: a,
                next: b,
                iou: inter as f64 / union as f64,
            }
        })
        .filter(|l| l.iou >= min_iou)
        .collect();
    links.sort_by(|x, y| y.iou.total_cmp(&x.iou).then((x.prev, x.next).cmp(&(y.prev, y.next))));
    Ok(links)
}

/// Greedy one-to-one selection from links already in priority order.
pub fn greedy_assignment(links: &[Link]) -> Vec<Link> {
    let mut used_prev = std::collections::BTreeSet::new();
    let mut used_next = std::collections::BTreeSet::new();
    links
        .iter()
        .filter(|l| {
            if used_prev.contains(&l.prev) || used_next.contains(&l.next) {
                return false;
            }
            used_prev.insert(l.prev);
            used_next.insert(l.next);
            true
        })
        .copied()
        .collect()
}

/// Links objects frame to frame by greedy IoU matching.
///
/// Returns the masks relabeled by track id and the matching track records.
/// Unmatched objects start new tracks; parents are always 0.
pub fn link_by_overlap(masks: &[LabelMask], min_iou: f64) -> Result<(Vec<LabelMask>, Vec<TrackRecord>)> {
    if !(0.0..=1.0).contains(&min_iou) {
        return Err(Error::InvalidArgument(format!("min_iou must lie in [0, 1], got {min_iou}")));
    }
    let Some(first) = masks.first() else {
        return Ok((Vec::new(), Vec::new()));
    };
    for m in &masks[1..] {
        first.check_same_shape(m)?;
    }
    let mut tracks: Vec<TrackRecord> = Vec::new();
    let mut out = Vec::with_capacity(masks.len());
    // Input label in the previous frame -> track id.
    let mut previous: BTreeMap<u32, u32> = BTreeMap::new();
    for (t, mask) in masks.iter().enumerate() {
        let mut current: BTreeMap<u32, u32> = BTreeMap::new();
        if t > 0 {
            for link in greedy_assignment(&candidate_links(&masks[t - 1], mask, min_iou)?) {
                let id = previous[&link.prev];
                tracks[id as usize - 1].end_frame = t;
                current.insert(link.next, id);
            }
        }
        for label in mask.labels() {
            current.entry(label).or_insert_with(|| {
                tracks.push(TrackRecord::new(tracks.len() as u32 + 1, t, t, 0));
                tracks.len() as u32
            });
        }
        out.push(mask.map(|&l| if l == 0 { 0 } else { current[&l] }));
        previous = current;
    }
    Ok((out, tracks))
}
