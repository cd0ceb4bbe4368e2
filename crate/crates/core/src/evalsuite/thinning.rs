//! Zhang-Suen thinning with a topology guard.
//!
//! Plain Zhang-Suen deletes all candidates of a subcycle at once, which can
//! erase 2-pixel-thick strokes and small blobs entirely. Here candidates are
//! marked on a snapshot as usual, then deleted one at a time in raster order,
//! each only if it is still 8-simple (Yokoi connectivity number 1) and not an
//! end point.
//!
//! Pixels left in 2×2 foreground blocks are then removed in three escalating
//! steps: simple deletions; deletions whose foreground neighbours stay
//! mutually 8-connected (this may fill a one-pixel hole); and, for blocks
//! where every pixel anchors a separate arm (an "X" crossing), deleting the
//! block pixel whose removal detaches the smallest spur together with that
//! spur. Every step keeps the number of 8-connected components. The phases
//! alternate until nothing changes.

use crate::raster::BinaryMask;

/// Padded working copy: one background pixel of border on every side.
struct Canvas {
    w: usize,
    px: Vec<u8>,
}

impl Canvas {
    fn from_mask(m: &BinaryMask) -> Self {
        let (w, h) = (m.width() + 2, m.height() + 2);
        let mut px = vec![0u8; w * h];
        for (r, c) in m.ones() {
            px[(r + 1) * w + c + 1] = 1;
        }
        Self { w, px }
    }

    /// Neighbours P2..P9 clockwise from north.
    #[inline]
    fn ring(&self, i: usize) -> [u8; 8] {
        let (p, w) = (&self.px, self.w);
        [
            p[i - w],
            p[i - w + 1],
            p[i + 1],
            p[i + w + 1],
            p[i + w],
            p[i + w - 1],
            p[i - 1],
            p[i - w - 1],
        ]
    }
}

/// Yokoi 8-connectivity number. 1 means deleting the pixel changes neither
/// the foreground components nor the holes around it.
#[inline]
fn yokoi8(n: &[u8; 8]) -> u8 {
    // counter-clockwise from east: E, NE, N, NW, W, SW, S, SE
    let x = [n[2], n[1], n[0], n[7], n[6], n[5], n[4], n[3]];
    let b = |k: usize| 1 - x[k % 8];
    (0..4)
        .map(|j| {
            let k = 2 * j;
            b(k) - b(k) * b(k + 1) * b(k + 2)
        })
        .sum()
}

#[inline]
fn transitions(n: &[u8; 8]) -> usize {
    (0..8).filter(|&k| n[k] == 0 && n[(k + 1) % 8] == 1).count()
}

#[inline]
fn zs_candidate(n: &[u8; 8], first: bool) -> bool {
    let b: u8 = n.iter().sum();
    if !(2..=6).contains(&b) || transitions(n) != 1 {
        return false;
    }
    let [p2, _, p4, _, p6, _, p8, _] = *n;
    if first {
        p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0
    } else {
        p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0
    }
}

#[inline]
fn deletable(n: &[u8; 8]) -> bool {
    n.iter().sum::<u8>() >= 2 && yokoi8(n) == 1
}

fn in_block(c: &Canvas, i: usize) -> bool {
    let (p, w) = (&c.px, c.w);
    let q = |a: usize, b: usize, d: usize| p[a] & p[b] & p[d] == 1;
    q(i - w - 1, i - w, i - 1) || q(i - w, i - w + 1, i + 1) || q(i - 1, i + w - 1, i + w) || q(i + 1, i + w, i + w + 1)
}

fn zs_subcycle(c: &mut Canvas, fg: &[usize], first: bool) -> bool {
    let marked: Vec<usize> = fg
        .iter()
        .copied()
        .filter(|&i| c.px[i] == 1 && zs_candidate(&c.ring(i), first))
        .collect();
    let mut changed = false;
    for i in marked {
        if deletable(&c.ring(i)) {
            c.px[i] = 0;
            changed = true;
        }
    }
    changed
}

/// Whether the foreground ring cells form exactly one 8-connected group of
/// at least two pixels, so deleting the center keeps the component intact.
#[inline]
fn ring_connected(n: &[u8; 8]) -> bool {
    if n.iter().sum::<u8>() < 2 {
        return false;
    }
    let mut label = [0u8; 8];
    let mut groups = 0u8;
    for start in 0..8 {
        if n[start] == 0 || label[start] != 0 {
            continue;
        }
        groups += 1;
        let mut stack = vec![start];
        label[start] = groups;
        while let Some(i) = stack.pop() {
            // edge cells (even) also touch the edge cells two steps away
            let reach: &[usize] = if i % 2 == 0 { &[1, 7, 2, 6] } else { &[1, 7] };
            for &d in reach {
                let j = (i + d) % 8;
                if n[j] == 1 && label[j] == 0 {
                    label[j] = groups;
                    stack.push(j);
                }
            }
        }
    }
    groups == 1
}

fn block_pixels(c: &Canvas, fg: &[usize]) -> Vec<[usize; 4]> {
    let w = c.w;
    fg.iter()
        .filter(|&&i| c.px[i] & c.px[i + 1] & c.px[i + w] & c.px[i + w + 1] == 1)
        .map(|&i| [i, i + 1, i + w, i + w + 1])
        .collect()
}

fn flood(c: &Canvas, seed: usize, mark: &mut [bool], out: &mut Vec<usize>) {
    let w = c.w as isize;
    let mut stack = vec![seed];
    mark[seed] = true;
    while let Some(i) = stack.pop() {
        out.push(i);
        for d in [-w - 1, -w, -w + 1, -1, 1, w - 1, w, w + 1] {
            let j = (i as isize + d) as usize;
            if c.px[j] == 1 && !mark[j] {
                mark[j] = true;
                stack.push(j);
            }
        }
    }
}

/// Pixels that become disconnected from the rest of `block` if `p` is removed.
fn detached_by(c: &mut Canvas, p: usize, block: &[usize; 4]) -> Vec<usize> {
    c.px[p] = 0;
    let mut mark = vec![false; c.px.len()];
    let anchor = *block.iter().find(|&&q| q != p).expect("block has four pixels");
    let mut kept = Vec::new();
    flood(c, anchor, &mut mark, &mut kept);
    let mut lost = Vec::new();
    let w = c.w as isize;
    for d in [-w - 1, -w, -w + 1, -1, 1, w - 1, w, w + 1] {
        let j = (p as isize + d) as usize;
        if c.px[j] == 1 && !mark[j] {
            flood(c, j, &mut mark, &mut lost);
        }
    }
    c.px[p] = 1;
    lost
}

fn block_cleanup(c: &mut Canvas, fg: &[usize]) -> bool {
    let mut changed = false;
    for &i in fg {
        if c.px[i] == 1 && in_block(c, i) && deletable(&c.ring(i)) {
            c.px[i] = 0;
            changed = true;
        }
    }
    for &i in fg {
        if c.px[i] == 1 && in_block(c, i) && ring_connected(&c.ring(i)) {
            c.px[i] = 0;
            changed = true;
        }
    }
    for block in block_pixels(c, fg) {
        if block.iter().any(|&q| c.px[q] == 0) {
            continue;
        }
        let (p, lost) = block
            .iter()
            .map(|&p| (p, detached_by(c, p, &block)))
            .min_by_key(|(_, lost)| lost.len())
            .expect("block has four pixels");
        c.px[p] = 0;
        for q in lost {
            c.px[q] = 0;
        }
        changed = true;
    }
    changed
}

/// Thins `mask` to 1-pixel-wide, 8-connected curves.
pub fn thin_mask(mask: &BinaryMask) -> BinaryMask {
    let mut c = Canvas::from_mask(mask);
    let mut fg: Vec<usize> = (0..c.px.len()).filter(|&i| c.px[i] == 1).collect();
    loop {
        let mut changed = false;
        loop {
            let a = zs_subcycle(&mut c, &fg, true);
            let b = zs_subcycle(&mut c, &fg, false);
            fg.retain(|&i| c.px[i] == 1);
            if !(a || b) {
                break;
            }
            changed = true;
        }
        if block_cleanup(&mut c, &fg) {
            changed = true;
            fg.retain(|&i| c.px[i] == 1);
        }
        if !changed {
            break;
        }
    }
    let w = c.w;
    let mut out = BinaryMask::empty(mask.width(), mask.height(), *mask.transform())
        .expect("same shape as a valid mask");
    for i in fg {
        out.set(i / w - 1, i % w - 1, true);
    }
    out
}

/// Number of 8-connected foreground components.
pub fn count_components8(mask: &BinaryMask) -> usize {
    let w = mask.width();
    let mut seen = vec![false; w * mask.height()];
    let mut stack = Vec::new();
    let mut n = 0;
    for (r, c) in mask.ones() {
        if seen[r * w + c] {
            continue;
        }
        n += 1;
        seen[r * w + c] = true;
        stack.push((r, c));
        while let Some((r, c)) = stack.pop() {
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if mask.get_signed(rr, cc) {
                        let j = rr as usize * w + cc as usize;
                        if !seen[j] {
                            seen[j] = true;
                            stack.push((rr as usize, cc as usize));
                        }
                    }
                }
            }
        }
    }
    n
}

/// Top-left corners of all 2×2 all-foreground blocks.
pub fn blocks_2x2(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for r in 0..mask.height().saturating_sub(1) {
        for c in 0..mask.width().saturating_sub(1) {
            if mask.get(r, c) && mask.get(r + 1, c) && mask.get(r, c + 1) && mask.get(r + 1, c + 1) {
                v.push((r, c));
            }
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocore::GeoTransform;

    fn mask(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::from_fn(w, h, GeoTransform::identity(), |r, c| rows[r].as_bytes()[c] == b'#').unwrap()
    }

    fn render(m: &BinaryMask) -> Vec<String> {
        (0..m.height())
            .map(|r| (0..m.width()).map(|c| if m.get(r, c) { '#' } else { '.' }).collect())
            .collect()
    }

    #[test]
    fn yokoi_examples() {
        assert_eq!(yokoi8(&[0; 8]), 0); // isolated
        assert_eq!(yokoi8(&[1; 8]), 0); // interior
        assert_eq!(yokoi8(&[1, 0, 0, 0, 0, 0, 0, 0]), 1); // end point
        assert_eq!(yokoi8(&[1, 0, 0, 0, 1, 0, 0, 0]), 2); // middle of a line
        assert_eq!(yokoi8(&[0, 1, 0, 0, 0, 1, 0, 0]), 2); // diagonal line
    }

    #[test]
    fn thin_line_unchanged() {
        let m = mask(&["........", ".######.", "........"]);
        assert_eq!(thin_mask(&m), m);
        let d = mask(&["#...", ".#..", "..#.", "...#"]);
        assert_eq!(thin_mask(&d), d);
    }

    #[test]
    fn empty_stays_empty() {
        let m = BinaryMask::empty(7, 5, GeoTransform::identity()).unwrap();
        assert_eq!(thin_mask(&m).count_ones(), 0);
    }

    #[test]
    fn square_5x5_skeleton() {
        let m = mask(&[".......", ".#####.", ".#####.", ".#####.", ".#####.", ".#####.", "......."]);
        let t = thin_mask(&m);
        assert!(t.is_subset_of(&m));
        assert!(blocks_2x2(&t).is_empty(), "{:?}", render(&t));
        assert_eq!(count_components8(&t), 1);
        assert!(t.count_ones() >= 1 && t.count_ones() <= 9, "{:?}", render(&t));
    }

    #[test]
    fn solid_2x2_and_thick_bar_survive() {
        let m = mask(&["....", ".##.", ".##.", "...."]);
        let t = thin_mask(&m);
        assert_eq!(count_components8(&t), 1);
        assert!(blocks_2x2(&t).is_empty());

        let bar = mask(&["............", ".##########.", ".##########.", "............"]);
        let t = thin_mask(&bar);
        assert_eq!(count_components8(&t), 1);
        assert!(blocks_2x2(&t).is_empty());
        assert!(t.count_ones() >= 8, "{:?}", render(&t));
    }

    #[test]
    fn ring_keeps_its_hole() {
        let m = mask(&[
            ".........",
            ".#######.",
            ".#######.",
            ".##...##.",
            ".##...##.",
            ".#######.",
            ".#######.",
            ".........",
        ]);
        let t = thin_mask(&m);
        assert_eq!(count_components8(&t), 1);
        assert!(blocks_2x2(&t).is_empty());
        let holes = |m: &BinaryMask| {
            let inv = BinaryMask::from_fn(m.width(), m.height(), GeoTransform::identity(), |r, c| !m.get(r, c)).unwrap();
            count_components8(&inv)
        };
        assert_eq!(holes(&t), 2, "{:?}", render(&t));
    }

    #[test]
    fn x_crossing_loses_shortest_spur() {
        let m = mask(&["#......", ".#..#..", "..##...", "..##...", ".#..#..", "#....#.", "......#"]);
        let t = thin_mask(&m);
        assert!(blocks_2x2(&t).is_empty(), "{:?}", render(&t));
        assert_eq!(count_components8(&t), 1);
        assert!(t.is_subset_of(&m));
        // the north-east arm is shortest (one pixel) and goes with its anchor
        assert_eq!(t.count_ones(), m.count_ones() - 2, "{:?}", render(&t));
        assert!(!t.get(1, 4) && !t.get(2, 3) && t.get(6, 6));
    }

    #[test]
    fn ring_connectivity_rule() {
        assert!(ring_connected(&[1, 1, 0, 0, 0, 0, 0, 0]));
        assert!(ring_connected(&[1, 0, 1, 0, 0, 0, 0, 0])); // N and E touch
        assert!(!ring_connected(&[0, 1, 0, 1, 0, 0, 0, 0])); // NE and SE do not
        assert!(!ring_connected(&[1, 0, 0, 0, 0, 0, 0, 0]));
        assert!(ring_connected(&[1, 1, 1, 1, 1, 1, 1, 1]));
    }
}
