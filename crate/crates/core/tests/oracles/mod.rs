//! Slow, obviously-correct reference implementations used by the test suites.
//!
//! None of these share code with the library: each one recomputes its result
//! from the definition by exhaustive search or plain relaxation.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cellmig::raster::Connectivity;
use cellmig::{BinaryMask, Grid, LabelMask, Pixel};

fn neighbors(conn: Connectivity) -> Vec<(isize, isize)> {
    let mut out = Vec::new();
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            if (dr, dc) == (0, 0) {
                continue;
            }
            if conn == Connectivity::Four && dr != 0 && dc != 0 {
                continue;
            }
            out.push((dr, dc));
        }
    }
    out
}

/// Components as sets of pixel indices, found by repeated breadth-first search.
pub fn components(mask: &BinaryMask, conn: Connectivity) -> BTreeSet<BTreeSet<usize>> {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let fg = mask.as_slice();
    let mut seen = vec![false; fg.len()];
    let mut out = BTreeSet::new();
    for start in 0..fg.len() {
        if !fg[start] || seen[start] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            comp.insert(i);
            let (r, c) = (i as isize / w, i as isize % w);
            for (dr, dc) in neighbors(conn) {
                let (nr, nc) = (r + dr, c + dc);
                if nr >= 0 && nc >= 0 && nr < h && nc < w {
                    let j = (nr * w + nc) as usize;
                    if fg[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.insert(comp);
    }
    out
}

/// Squared distance to the nearest background pixel, searching every
/// background pixel plus the ring of virtual background around the image.
pub fn brute_squared_edt(mask: &BinaryMask) -> Vec<u64> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut background: Vec<(i64, i64)> = Vec::new();
    for r in -1..=h {
        for c in -1..=w {
            let outside = r < 0 || c < 0 || r >= h || c >= w;
            if outside || !*mask.at(r as usize, c as usize) {
                background.push((r, c));
            }
        }
    }
    (0..h * w)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            if !*mask.at(r as usize, c as usize) {
                return 0;
            }
            background
                .iter()
                .map(|&(br, bc)| ((br - r) * (br - r) + (bc - c) * (bc - c)) as u64)
                .min()
                .expect("the virtual border is never empty")
        })
        .collect()
}

/// Geodesic distances by Bellman-Ford relaxation over the 8-connected grid.
pub fn bellman_ford_geodesic(mask: &BinaryMask, seed: Pixel) -> Vec<f64> {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let mut dist = vec![f64::INFINITY; (w * h) as usize];
    dist[seed.row * w as usize + seed.col] = 0.0;
    loop {
        let mut changed = false;
        for i in 0..dist.len() {
            if !mask.as_slice()[i] || dist[i].is_infinite() {
                continue;
            }
            let (r, c) = (i as isize / w, i as isize % w);
            for (dr, dc) in neighbors(Connectivity::Eight) {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h || nc >= w {
                    continue;
                }
                let j = (nr * w + nc) as usize;
                if !mask.as_slice()[j] {
                    continue;
                }
                let step = if dr != 0 && dc != 0 { 2f64.sqrt() } else { 1.0 };
                if dist[i] + step < dist[j] - 1e-12 {
                    dist[j] = dist[i] + step;
                    changed = true;
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

/// Per ground-truth label: the result label that covers more than half of it
/// and their Jaccard index, by explicit pixel counting per pair.
pub fn brute_seg(gt: &LabelMask, res: &LabelMask) -> BTreeMap<u32, (Option<u32>, f64)> {
    let labels = |m: &LabelMask| m.as_slice().iter().copied().filter(|&l| l > 0).collect::<BTreeSet<u32>>();
    let mut out = BTreeMap::new();
    for g in labels(gt) {
        let g_area = gt.as_slice().iter().filter(|&&l| l == g).count();
        let mut hit = (None, 0.0);
        for r in labels(res) {
            let r_area = res.as_slice().iter().filter(|&&l| l == r).count();
            let inter = gt
                .as_slice()
                .iter()
                .zip(res.as_slice())
                .filter(|&(&a, &b)| a == g && b == r)
                .count();
            if 2 * inter > g_area {
                hit = (Some(r), inter as f64 / (g_area + r_area - inter) as f64);
            }
        }
        out.insert(g, hit);
    }
    out
}

/// Every one-to-one matching between `n_prev` and `n_next` objects, as lists
/// of index pairs.
pub fn all_matchings(n_prev: usize, n_next: usize) -> Vec<Vec<(usize, usize)>> {
    fn go(i: usize, n_prev: usize, n_next: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if i == n_prev {
            out.push(cur.clone());
            return;
        }
        go(i + 1, n_prev, n_next, used, cur, out);
        for j in 0..n_next {
            if !used[j] {
                used[j] = true;
                cur.push((i, j));
                go(i + 1, n_prev, n_next, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, n_prev, n_next, &mut vec![false; n_next], &mut Vec::new(), &mut out);
    out
}

/// Random label mask: up to `max_objects` axis-aligned rectangles painted in
/// order, later ones on top.
pub fn random_label_mask(rng: &mut impl rand::Rng, width: usize, height: usize, max_objects: u32) -> LabelMask {
    let mut m = Grid::filled(width, height, 0u32);
    let objects = rng.random_range(0..=max_objects);
    for label in 1..=objects {
        let h = rng.random_range(1..=height);
        let w = rng.random_range(1..=width);
        let top = rng.random_range(0..=height - h);
        let left = rng.random_range(0..=width - w);
        for r in top..top + h {
            for c in left..left + w {
                m.set(Pixel::new(r, c), label);
            }
        }
    }
    m
}

/// Random binary mask with the given foreground probability.
pub fn random_binary_mask(rng: &mut impl rand::Rng, width: usize, height: usize, p: f64) -> BinaryMask {
    let data = (0..width * height).map(|_| rng.random_bool(p)).collect();
    Grid::from_vec(width, height, data).unwrap()
}

/// Random 8-connected mask grown from a seed by a random walk of accretions.
pub fn random_connected_mask(rng: &mut impl rand::Rng, width: usize, height: usize, cells: usize) -> (BinaryMask, Pixel) {
    let seed = Pixel::new(rng.random_range(0..height), rng.random_range(0..width));
    let mut m = Grid::filled(width, height, false);
    m.set(seed, true);
    let mut members = vec![seed];
    while members.len() < cells.min(width * height) {
        let from = members[rng.random_range(0..members.len())];
        let (dr, dc) = (rng.random_range(-1i32..=1) as isize, rng.random_range(-1i32..=1) as isize);
        let (r, c) = (from.row as isize + dr, from.col as isize + dc);
        if r < 0 || c < 0 || r as usize >= height || c as usize >= width {
            continue;
        }
        let p = Pixel::new(r as usize, c as usize);
        if !*m.get(p) {
            m.set(p, true);
            members.push(p);
        }
    }
    (m, seed)
}
