//! Seeded watershed by priority flooding.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::distance::RealGrid;
use crate::error::{Error, Result};
use crate::grid::BinaryMask;

#[derive(Debug, PartialEq)]
struct Entry {
    level: f64,
    seq: u64,
    pixel: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.level.total_cmp(&other.level).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) const NEIGHBORS_8: [(isize, isize); 8] =
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Floods `domain` from `seeds`, treating high relief as basin interior.
///
/// Pixels are popped in order of `(-relief, insertion sequence)` and pass
/// their label to unlabelled 8-neighbours inside the domain. Seed `i` gets
/// label `i + 1`; pixels outside the domain get 0. Domain pixels that no
/// seed can reach take the label of the nearest seed (lowest index on ties),
/// so the labels always partition the domain.
pub fn seeded_watershed(relief: &RealGrid, seeds: &[(usize, usize)], domain: &BinaryMask) -> Result<Vec<u32>> {
    let (h, w) = (domain.height(), domain.width());
    if relief.height != h || relief.width != w {
        return Err(Error::Shape(format!(
            "relief is {}x{}, domain is {h}x{w}",
            relief.height, relief.width
        )));
    }
    let inside = domain.values();
    if let Some(index) = (0..h * w).find(|&i| inside[i] && !relief.values[i].is_finite()) {
        return Err(Error::NonFinite {
            what: "watershed relief",
            index,
        });
    }

    let mut labels = vec![0u32; h * w];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for (k, &(row, col)) in seeds.iter().enumerate() {
        if row >= h || col >= w || !domain.get(row, col) {
            return Err(Error::SeedOutsideDomain { row, col });
        }
        let i = row * w + col;
        if labels[i] != 0 {
            return Err(Error::DuplicateSeed { row, col });
        }
        labels[i] = k as u32 + 1;
        heap.push(Reverse(Entry {
            level: -relief.values[i],
            seq,
            pixel: i,
        }));
        seq += 1;
    }

    while let Some(Reverse(Entry { pixel, .. })) = heap.pop() {
        let (r, c) = ((pixel / w) as isize, (pixel % w) as isize);
        for (dr, dc) in NEIGHBORS_8 {
            let (nr, nc) = (r + dr, c + dc);
            if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                continue;
            }
            let n = nr as usize * w + nc as usize;
            if inside[n] && labels[n] == 0 {
                labels[n] = labels[pixel];
                heap.push(Reverse(Entry {
                    level: -relief.values[n],
                    seq,
                    pixel: n,
                }));
                seq += 1;
            }
        }
    }

    if !seeds.is_empty() {
        for i in 0..h * w {
            if inside[i] && labels[i] == 0 {
                let (r, c) = (i / w, i % w);
                let nearest = seeds
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, &(sr, sc))| {
                        let (dr, dc) = (sr.abs_diff(r), sc.abs_diff(c));
                        dr * dr + dc * dc
                    })
                    .map(|(k, _)| k)
                    .expect("seeds nonempty");
                labels[i] = nearest as u32 + 1;
            }
        }
    }
    Ok(labels)
}

const NEIGHBORS_4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];

fn ridges_with(labels: &[u32], height: usize, width: usize, offsets: &[(isize, isize)]) -> Vec<usize> {
    let mut out = Vec::new();
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            let l = labels[i];
            if l == 0 {
                continue;
            }
            let ridge = offsets.iter().any(|&(dr, dc)| {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
                    return false;
                }
                let n = labels[nr as usize * width + nc as usize];
                n != 0 && n != l
            });
            if ridge {
                out.push(i);
            }
        }
    }
    out
}

/// Pixels that have a 4-neighbour carrying a different nonzero label.
pub fn ridge_pixels(labels: &[u32], height: usize, width: usize) -> Vec<usize> {
    ridges_with(labels, height, width, &NEIGHBORS_4)
}

/// Pixels that have an 8-neighbour carrying a different nonzero label.
pub fn ridge_pixels_8(labels: &[u32], height: usize, width: usize) -> Vec<usize> {
    ridges_with(labels, height, width, &NEIGHBORS_8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(h: usize, w: usize, v: f64) -> RealGrid {
        RealGrid {
            height: h,
            width: w,
            values: vec![v; h * w],
        }
    }

    #[test]
    fn single_seed_floods_everything() {
        let domain = BinaryMask::from_ascii(&["###.", ".###", "...#"]).unwrap();
        let labels = seeded_watershed(&flat(3, 4, 1.0), &[(0, 0)], &domain).unwrap();
        for (l, &d) in labels.iter().zip(domain.values()) {
            assert_eq!(*l, u32::from(d));
        }
    }

    #[test]
    fn every_pixel_a_seed_is_identity() {
        let domain = BinaryMask::filled(2, 3, true);
        let seeds: Vec<_> = (0..2).flat_map(|r| (0..3).map(move |c| (r, c))).collect();
        let labels = seeded_watershed(&flat(2, 3, 0.0), &seeds, &domain).unwrap();
        assert_eq!(labels, (1..=6).collect::<Vec<u32>>());
    }

    #[test]
    fn dumbbell_lobes_get_their_own_seed() {
        let domain = BinaryMask::from_ascii(&["###.###", "#######", "###.###"]).unwrap();
        let relief = super::super::distance::distance_transform(&domain);
        let labels = seeded_watershed(&relief, &[(1, 1), (1, 5)], &domain).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(labels[r * 7 + c], 1);
                assert_eq!(labels[r * 7 + c + 4], 2);
            }
        }
        assert!(labels[7 + 3] == 1 || labels[7 + 3] == 2);
    }

    #[test]
    fn unreachable_component_takes_nearest_seed() {
        let domain = BinaryMask::from_ascii(&["#...#"]).unwrap();
        let labels = seeded_watershed(&flat(1, 5, 0.0), &[(0, 0)], &domain).unwrap();
        assert_eq!(labels, vec![1, 0, 0, 0, 1]);
    }

    #[test]
    fn seed_errors() {
        let domain = BinaryMask::from_ascii(&["#."]).unwrap();
        assert!(matches!(
            seeded_watershed(&flat(1, 2, 0.0), &[(0, 1)], &domain),
            Err(Error::SeedOutsideDomain { row: 0, col: 1 })
        ));
        assert!(matches!(
            seeded_watershed(&flat(1, 2, 0.0), &[(0, 0), (0, 0)], &domain),
            Err(Error::DuplicateSeed { .. })
        ));
    }

    #[test]
    fn ridges_use_four_neighbours() {
        let labels = [1, 1, 2, 0, 0, 2];
        assert_eq!(ridge_pixels(&labels, 2, 3), vec![1, 2]);
        // diagonal contact only: no 4-ridge, but an 8-ridge
        assert!(ridge_pixels(&[1, 0, 0, 2], 2, 2).is_empty());
        assert_eq!(ridge_pixels_8(&[1, 0, 0, 2], 2, 2), vec![0, 3]);
    }
}
