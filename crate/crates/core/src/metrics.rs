//! Segmentation and tracking scores plus reference training numerics.
//!
//! SEG and TRA follow the Cell Tracking Challenge conventions: a result object
//! detects a ground-truth object when it covers strictly more than half of it,
//! and TRA is one minus the normalized cost of editing the result lineage
//! graph into the ground-truth one (AOGM).

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::dataio::TrackRecord;
use crate::par::{self, Execution};
use crate::raster::{BinaryMask, LabelMask};
use crate::{Error, Result};

/// `|X ∩ Y| / |X ∪ Y|`, or 1 when both masks are empty.
pub fn jaccard(x: &BinaryMask, y: &BinaryMask) -> Result<f64> {
    x.check_same_shape(y)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in x.as_slice().iter().zip(y.as_slice()) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Which object the majority-overlap test is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchRule {
    /// `|R ∩ G| > 0.5 |G|`: the evaluation software's rule.
    #[default]
    CoversGroundTruth,
    /// `|R ∩ G| > 0.5 |R|`: literal reading of an inverted description, kept
    /// only for comparison runs.
    CoversResult,
}

/// SEG score of one ground-truth object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectScore {
    pub gt_label: u32,
    /// Result object with the largest overlap, if it passed the detection test.
    pub res_label: Option<u32>,
    pub score: f64,
}

pub fn seg_frame(gt: &LabelMask, res: &LabelMask) -> Result<Vec<ObjectScore>> {
    seg_frame_with(gt, res, MatchRule::default())
}

/// Scores every ground-truth object of one frame, in ascending label order.
pub fn seg_frame_with(gt: &LabelMask, res: &LabelMask, rule: MatchRule) -> Result<Vec<ObjectScore>> {
    gt.check_same_shape(res)?;
    let mut gt_area: BTreeMap<u32, usize> = BTreeMap::new();
    let mut res_area: HashMap<u32, usize> = HashMap::new();
    let mut overlap: HashMap<(u32, u32), usize> = HashMap::new();
    for (&g, &r) in gt.as_slice().iter().zip(res.as_slice()) {
        if g > 0 {
            *gt_area.entry(g).or_default() += 1;
        }
        if r > 0 {
            *res_area.entry(r).or_default() += 1;
        }
        if g > 0 && r > 0 {
            *overlap.entry((g, r)).or_default() += 1;
        }
    }
    let mut best: HashMap<u32, (u32, usize)> = HashMap::new();
    for (&(g, r), &n) in &overlap {
        let e = best.entry(g).or_insert((r, n));
        if n > e.1 || (n == e.1 && r < e.0) {
            *e = (r, n);
        }
    }
    Ok(gt_area
        .iter()
        .map(|(&g, &g_area)| {
            let Some(&(r, n)) = best.get(&g) else {
                return ObjectScore {
                    gt_label: g,
                    res_label: None,
                    score: 0.0,
                };
            };
            let r_area = res_area[&r];
            let detected = match rule {
                MatchRule::CoversGroundTruth => 2 * n > g_area,
                MatchRule::CoversResult => 2 * n > r_area,
            };
            if detected {
                ObjectScore {
                    gt_label: g,
                    res_label: Some(r),
                    score: n as f64 / (g_area + r_area - n) as f64,
                }
            } else {
                ObjectScore {
                    gt_label: g,
                    res_label: None,
                    score: 0.0,
                }
            }
        })
        .collect())
}

/// SEG of one video: the mean over all ground-truth objects of all frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSeg {
    /// Object scores per annotated frame, in input order.
    pub frames: Vec<Vec<ObjectScore>>,
    /// `None` when the video has no ground-truth objects.
    pub seg: Option<f64>,
}

impl VideoSeg {
    pub fn object_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    fn score_sum(&self) -> f64 {
        self.frames.iter().flatten().map(|o| o.score).sum()
    }
}

/// `(ground truth, result)` masks of one annotated frame.
pub type FramePair = (LabelMask, LabelMask);

pub fn seg_video(frames: &[FramePair], rule: MatchRule, exec: Execution) -> Result<VideoSeg> {
    let frames = par::map(exec, frames, |(g, r)| seg_frame_with(g, r, rule))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut out = VideoSeg { frames, seg: None };
    let n = out.object_count();
    if n > 0 {
        out.seg = Some(out.score_sum() / n as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegReport {
    pub videos: Vec<VideoSeg>,
    /// Unweighted mean of per-video SEG over videos with objects.
    pub mean: f64,
    /// Mean over every ground-truth object of every video.
    pub pooled: f64,
}

/// Dataset SEG as the mean of per-video means. Videos without ground-truth
/// objects are left out with a warning.
pub fn seg_dataset(videos: &[Vec<FramePair>], rule: MatchRule, exec: Execution) -> Result<SegReport> {
    if videos.is_empty() {
        return Err(Error::InvalidInput("SEG needs at least one video".into()));
    }
    let inner = if videos.len() > 1 { Execution::Sequential } else { exec };
    let videos = par::map(exec, videos, |v| seg_video(v, rule, inner))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut per_video = Vec::new();
    let (mut pooled_sum, mut pooled_n) = (0.0, 0usize);
    for (i, v) in videos.iter().enumerate() {
        match v.seg {
            Some(s) => per_video.push(s),
            None => log::warn!("video {i} has no ground-truth objects; excluded from SEG"),
        }
        pooled_sum += v.score_sum();
        pooled_n += v.object_count();
    }
    if per_video.is_empty() {
        return Err(Error::UndefinedMetric("no video has ground-truth objects".into()));
    }
    Ok(SegReport {
        mean: per_video.iter().sum::<f64>() / per_video.len() as f64,
        pooled: pooled_sum / pooled_n as f64,
        videos,
    })
}

pub type NodeId = usize;

/// A detection: one labeled region in one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub frame: usize,
    pub label: u32,
    /// Row-major pixel indices, ascending.
    pub pixels: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    /// Same track, consecutive frames.
    Track,
    /// Division or other parent-to-child link.
    Parent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
}

/// Acyclic lineage graph of detections over a video.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineageGraph {
    width: usize,
    height: usize,
    frames: usize,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl LineageGraph {
    pub fn new(width: usize, height: usize, frames: usize) -> Self {
        Self {
            width,
            height,
            frames,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_count(&self) -> usize {
        self.frames
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn find(&self, frame: usize, label: u32) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.frame == frame && n.label == label)
    }

    /// Adds a node; its pixels must be in bounds and disjoint from the other
    /// nodes of the same frame.
    pub fn add_node(&mut self, frame: usize, label: u32, mut pixels: Vec<u32>) -> Result<NodeId> {
        if frame >= self.frames {
            return Err(Error::Structural(format!(
                "node ({label}, frame {frame}) outside {} frames",
                self.frames
            )));
        }
        if pixels.is_empty() {
            return Err(Error::Structural(format!("node ({label}, frame {frame}) has no pixels")));
        }
        pixels.sort_unstable();
        pixels.dedup();
        let limit = (self.width * self.height) as u32;
        if pixels.last().is_some_and(|&p| p >= limit) {
            return Err(Error::Structural(format!(
                "node ({label}, frame {frame}) has pixels outside the image"
            )));
        }
        for other in self.nodes.iter().filter(|n| n.frame == frame) {
            if other.label == label {
                return Err(Error::Structural(format!("duplicate node ({label}, frame {frame})")));
            }
            if intersection_size(&other.pixels, &pixels) > 0 {
                return Err(Error::Structural(format!(
                    "nodes {} and {label} overlap in frame {frame}",
                    other.label
                )));
            }
        }
        self.nodes.push(Node { frame, label, pixels });
        Ok(self.nodes.len() - 1)
    }

    /// Adds an edge pointing forward in time.
    pub fn add_edge(&mut self, from: NodeId, to: NodeId, kind: EdgeKind) -> Result<()> {
        let (a, b) = match (self.nodes.get(from), self.nodes.get(to)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Structural(format!("edge {from}->{to} names a missing node"))),
        };
        if a.frame >= b.frame {
            return Err(Error::Structural(format!(
                "edge ({}, frame {}) -> ({}, frame {}) does not point forward in time",
                a.label, a.frame, b.label, b.frame
            )));
        }
        let edge = Edge { from, to, kind };
        if !self.edges.contains(&edge) {
            self.edges.push(edge);
        }
        Ok(())
    }

    /// Deletes a node together with its incident edges. Node ids above `id` shift down.
    pub fn remove_node(&mut self, id: NodeId) -> Node {
        let node = self.nodes.remove(id);
        self.edges.retain(|e| e.from != id && e.to != id);
        for e in &mut self.edges {
            if e.from > id {
                e.from -= 1;
            }
            if e.to > id {
                e.to -= 1;
            }
        }
        node
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.edges.iter().filter(|e| e.from == id || e.to == id).count()
    }
}

fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Assembles a lineage graph from a label-mask video and its track records.
pub fn build_graph(masks: &[LabelMask], tracks: &[TrackRecord]) -> Result<LineageGraph> {
    let Some(first) = masks.first() else {
        if let Some(t) = tracks.first() {
            return Err(Error::Structural(format!(
                "track {} declared for an empty video",
                t.label
            )));
        }
        return Ok(LineageGraph::default());
    };
    let (w, h) = (first.width(), first.height());
    let mut regions: Vec<BTreeMap<u32, Vec<u32>>> = Vec::with_capacity(masks.len());
    for (t, m) in masks.iter().enumerate() {
        if !m.same_shape(first) {
            return Err(Error::DimensionMismatch {
                left: format!("frame 0 {w}x{h}"),
                right: format!("frame {t} {}x{}", m.width(), m.height()),
            });
        }
        let mut by_label: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (i, &l) in m.as_slice().iter().enumerate() {
            if l > 0 {
                by_label.entry(l).or_default().push(i as u32);
            }
        }
        regions.push(by_label);
    }

    let mut graph = LineageGraph::new(w, h, masks.len());
    let mut ends: HashMap<u32, NodeId> = HashMap::new();
    let mut begins: HashMap<u32, NodeId> = HashMap::new();
    let mut declared: HashSet<(usize, u32)> = HashSet::new();
    for rec in tracks {
        if rec.end_frame >= masks.len() {
            return Err(Error::Structural(format!(
                "track {} ends at frame {} beyond the {}-frame video",
                rec.label,
                rec.end_frame,
                masks.len()
            )));
        }
        let mut prev = None;
        for (t, frame) in regions.iter().enumerate().take(rec.end_frame + 1).skip(rec.begin_frame) {
            let pixels = frame.get(&rec.label).cloned().ok_or_else(|| {
                Error::Structural(format!("track {} has no region in frame {t}", rec.label))
            })?;
            declared.insert((t, rec.label));
            let id = graph.add_node(t, rec.label, pixels)?;
            if let Some(p) = prev {
                graph.add_edge(p, id, EdgeKind::Track)?;
            } else {
                begins.insert(rec.label, id);
            }
            prev = Some(id);
        }
        ends.insert(rec.label, prev.expect("non-empty interval"));
    }
    for (t, by_label) in regions.iter().enumerate() {
        if let Some(&l) = by_label.keys().find(|&&l| !declared.contains(&(t, l))) {
            return Err(Error::Structural(format!(
                "label {l} in frame {t} is not covered by any track record"
            )));
        }
    }
    for rec in tracks.iter().filter(|r| r.parent > 0) {
        let parent = ends.get(&rec.parent).ok_or_else(|| {
            Error::Structural(format!("track {} names missing parent {}", rec.label, rec.parent))
        })?;
        graph.add_edge(*parent, begins[&rec.label], EdgeKind::Parent)?;
    }
    Ok(graph)
}

/// Edit-operation weights for AOGM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AogmWeights {
    pub split: f64,
    pub false_negative: f64,
    pub false_positive: f64,
    pub redundant_edge: f64,
    pub missing_edge: f64,
    pub wrong_semantics: f64,
}

impl Default for AogmWeights {
    fn default() -> Self {
        Self {
            split: 5.0,
            false_negative: 10.0,
            false_positive: 1.0,
            redundant_edge: 1.0,
            missing_edge: 1.5,
            wrong_semantics: 1.0,
        }
    }
}

impl AogmWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.split,
            self.false_negative,
            self.false_positive,
            self.redundant_edge,
            self.missing_edge,
            self.wrong_semantics,
        ];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("AOGM weights must be non-negative: {self:?}")))
        }
    }
}

/// Number of each graph edit needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AogmCounts {
    /// Extra ground-truth nodes claimed by one result node, summed.
    pub splits: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
    pub redundant_edges: usize,
    pub missing_edges: usize,
    pub wrong_semantics: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aogm {
    /// Cost of editing the result into the ground truth.
    pub cost: f64,
    /// Cost of building the ground truth from nothing.
    pub empty_cost: f64,
    pub counts: AogmCounts,
}

impl Aogm {
    /// `1 - min(cost, empty_cost) / empty_cost`.
    pub fn tra(&self) -> Result<f64> {
        if self.empty_cost <= 0.0 {
            return Err(Error::UndefinedMetric(
                "TRA is undefined for an empty ground-truth graph".into(),
            ));
        }
        Ok(1.0 - self.cost.min(self.empty_cost) / self.empty_cost)
    }
}

/// Ground-truth node -> detecting result node, under the majority-overlap test.
fn match_nodes(gt: &LineageGraph, res: &LineageGraph) -> Vec<Option<NodeId>> {
    let mut owner = vec![u32::MAX; gt.width * gt.height];
    let mut matches = vec![None; gt.nodes.len()];
    for frame in 0..gt.frames {
        let res_here: Vec<NodeId> = (0..res.nodes.len()).filter(|&r| res.nodes[r].frame == frame).collect();
        if res_here.is_empty() {
            continue;
        }
        for &r in &res_here {
            for &p in &res.nodes[r].pixels {
                owner[p as usize] = r as u32;
            }
        }
        for (g, node) in gt.nodes.iter().enumerate().filter(|(_, n)| n.frame == frame) {
            let mut counts: HashMap<u32, usize> = HashMap::new();
            for &p in &node.pixels {
                let o = owner[p as usize];
                if o != u32::MAX {
                    *counts.entry(o).or_default() += 1;
                }
            }
            // At most one result node can hold a strict majority.
            matches[g] = counts
                .into_iter()
                .find(|&(_, n)| 2 * n > node.pixels.len())
                .map(|(r, _)| r as NodeId);
        }
        for &r in &res_here {
            for &p in &res.nodes[r].pixels {
                owner[p as usize] = u32::MAX;
            }
        }
    }
    matches
}

/// Acyclic oriented graph matching cost between two lineage graphs.
pub fn aogm(gt: &LineageGraph, res: &LineageGraph, w: &AogmWeights) -> Result<Aogm> {
    w.validate()?;
    if gt.frames != res.frames {
        return Err(Error::InvalidInput(format!(
            "frame ranges differ: ground truth has {} frames, result {}",
            gt.frames, res.frames
        )));
    }
    if (gt.width, gt.height) != (res.width, res.height) {
        return Err(Error::DimensionMismatch {
            left: format!("{}x{}", gt.width, gt.height),
            right: format!("{}x{}", res.width, res.height),
        });
    }
    let gt_to_res = match_nodes(gt, res);
    let mut res_to_gt: Vec<Vec<NodeId>> = vec![Vec::new(); res.nodes.len()];
    for (g, r) in gt_to_res.iter().enumerate() {
        if let Some(r) = r {
            res_to_gt[*r].push(g);
        }
    }

    let mut counts = AogmCounts {
        false_negatives: gt_to_res.iter().filter(|m| m.is_none()).count(),
        ..AogmCounts::default()
    };
    for claimed in &res_to_gt {
        match claimed.len() {
            0 => counts.false_positives += 1,
            n => counts.splits += n - 1,
        }
    }

    let gt_edges: HashMap<(NodeId, NodeId), EdgeKind> = gt.edges.iter().map(|e| ((e.from, e.to), e.kind)).collect();
    let mut covered: HashSet<(NodeId, NodeId)> = HashSet::new();
    for e in &res.edges {
        let mut found = false;
        for &g1 in &res_to_gt[e.from] {
            for &g2 in &res_to_gt[e.to] {
                if let Some(&kind) = gt_edges.get(&(g1, g2)) {
                    found = true;
                    if covered.insert((g1, g2)) && kind != e.kind {
                        counts.wrong_semantics += 1;
                    }
                }
            }
        }
        if !found {
            counts.redundant_edges += 1;
        }
    }
    counts.missing_edges = gt_edges.len() - covered.len();

    let cost = w.split * counts.splits as f64
        + w.false_negative * counts.false_negatives as f64
        + w.false_positive * counts.false_positives as f64
        + w.redundant_edge * counts.redundant_edges as f64
        + w.missing_edge * counts.missing_edges as f64
        + w.wrong_semantics * counts.wrong_semantics as f64;
    let empty_cost = w.false_negative * gt.nodes.len() as f64 + w.missing_edge * gt_edges.len() as f64;
    Ok(Aogm {
        cost,
        empty_cost,
        counts,
    })
}

/// Tracking accuracy of one video.
pub fn tra(gt: &LineageGraph, res: &LineageGraph, w: &AogmWeights) -> Result<f64> {
    aogm(gt, res, w)?.tra()
}

/// Unweighted mean of per-video TRA.
pub fn tra_dataset(videos: &[(LineageGraph, LineageGraph)], w: &AogmWeights, exec: Execution) -> Result<(Vec<f64>, f64)> {
    if videos.is_empty() {
        return Err(Error::InvalidInput("TRA needs at least one video".into()));
    }
    let per_video = par::map(exec, videos, |(g, r)| tra(g, r, w))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mean = per_video.iter().sum::<f64>() / per_video.len() as f64;
    Ok((per_video, mean))
}

/// Categorical cross-entropy `-Σ x_i ln y_i` of a one-hot target `x` and a
/// probability vector `y`. A zero probability on the true class gives `+∞`.
pub fn cross_entropy(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "class vectors must have equal non-zero length, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().any(|&v| v != 0.0 && v != 1.0) || x.iter().filter(|&&v| v == 1.0).count() != 1 {
        return Err(Error::InvalidArgument(format!("target {x:?} is not one-hot")));
    }
    if y.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (y.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!("{y:?} is not a probability vector")));
    }
    Ok(x.iter()
        .zip(y)
        .filter(|(&xi, _)| xi == 1.0)
        .map(|(_, &yi)| if yi == 0.0 { f64::INFINITY } else { -yi.ln() })
        .sum())
}

/// Exponential moving averages of the gradient and its square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamBetas {
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamBetas {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

/// One moment update: `m = β1 m + (1 - β1) g`, `v = β2 v + (1 - β2) g²`.
pub fn adam_moments(m_prev: f64, v_prev: f64, g: f64, betas: AdamBetas) -> Result<(f64, f64)> {
    let AdamBetas { beta1, beta2 } = betas;
    if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
        return Err(Error::InvalidArgument(format!(
            "betas must lie in [0, 1), got ({beta1}, {beta2})"
        )));
    }
    Ok((beta1 * m_prev + (1.0 - beta1) * g, beta2 * v_prev + (1.0 - beta2) * g * g))
}
