//! Random instance generators and brute-force oracles shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::VecDeque;

use lccount::{BinaryMask, LogitMap, Point, PointAnnotations};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, density: f64) -> BinaryMask {
    let values = (0..h * w).map(|_| rng.random::<f64>() < density).collect();
    BinaryMask::new(h, w, values).unwrap()
}

/// Class map painted with random rectangles, turned into logits with noise.
/// The argmax of the logits reproduces the painted map.
pub fn random_logits(rng: &mut ChaCha8Rng, h: usize, w: usize, classes: usize, rects: usize) -> LogitMap {
    let mut map = vec![0usize; h * w];
    for _ in 0..rects {
        let (r0, c0) = (rng.random_range(0..h), rng.random_range(0..w));
        let (r1, c1) = (rng.random_range(r0..h), rng.random_range(c0..w));
        let k = rng.random_range(1..classes);
        for r in r0..=r1 {
            for c in c0..=c1 {
                map[r * w + c] = k;
            }
        }
    }
    let mut values = vec![0.0; h * w * classes];
    for (i, &k) in map.iter().enumerate() {
        for c in 0..classes {
            let noise = rng.random_range(-1.0..1.0);
            values[i * classes + c] = if c == k { 2.5 + noise } else { noise * 0.5 };
        }
    }
    LogitMap::new(h, w, classes, values).unwrap()
}

/// Unconstrained logits, normal-ish with the given scale.
pub fn noise_logits(rng: &mut ChaCha8Rng, h: usize, w: usize, classes: usize, scale: f64) -> LogitMap {
    let values = (0..h * w * classes)
        .map(|_| scale * rng.random_range(-1.0..1.0))
        .collect();
    LogitMap::new(h, w, classes, values).unwrap()
}

/// Up to `n` distinct annotated pixels with classes in `1..classes`.
pub fn random_points(rng: &mut ChaCha8Rng, h: usize, w: usize, classes: usize, n: usize) -> PointAnnotations {
    let mut taken = vec![false; h * w];
    let mut points = Vec::new();
    for _ in 0..n {
        let i = rng.random_range(0..h * w);
        if !taken[i] {
            taken[i] = true;
            points.push(Point::new(i / w, i % w, rng.random_range(1..classes)));
        }
    }
    PointAnnotations::new(h, w, points).unwrap()
}

/// Breadth-first flood fill with 8-connectivity; labels in discovery order.
pub fn flood_fill(mask: &BinaryMask) -> Vec<u32> {
    let (h, w) = (mask.height(), mask.width());
    let mut labels = vec![0u32; h * w];
    let mut next = 0;
    for start in 0..h * w {
        if !mask.values()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if mask.values()[j] && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    labels
}

/// Whether two labelings describe the same partition (0 stays 0).
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    use std::collections::HashMap;
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(&x, &y)| (x == 0) == (y == 0) && *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}
