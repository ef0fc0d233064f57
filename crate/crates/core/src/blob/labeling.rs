use crate::grid::{argmax_class, BinaryMask, ClassId, Point, PointAnnotations, ProbMap};

/// Disjoint-set forest over provisional labels.
struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: vec![0] }
    }

    fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        // the smaller root wins so that roots follow raster order
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Connected foreground regions of one class, plus the annotations that fall in each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlobLabeling {
    height: usize,
    width: usize,
    class: ClassId,
    labels: Vec<u32>,
    sizes: Vec<usize>,
    points: Vec<Vec<Point>>,
    unmatched: Vec<Point>,
}

impl BlobLabeling {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Class the labelled mask was drawn from.
    pub fn class(&self) -> ClassId {
        self.class
    }

    /// Blob id per pixel; 0 outside every blob, otherwise `1..=num_blobs()`.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn num_blobs(&self) -> usize {
        self.sizes.len()
    }

    pub fn blob_ids(&self) -> impl Iterator<Item = u32> {
        1..=self.sizes.len() as u32
    }

    pub fn size(&self, blob: u32) -> usize {
        self.sizes[blob as usize - 1]
    }

    pub fn points_in(&self, blob: u32) -> &[Point] {
        &self.points[blob as usize - 1]
    }

    /// Number of annotations inside `blob`.
    pub fn tally(&self, blob: u32) -> usize {
        self.points[blob as usize - 1].len()
    }

    /// Annotations that landed on no blob.
    pub fn unmatched(&self) -> &[Point] {
        &self.unmatched
    }

    /// Blobs with exactly one annotation.
    pub fn singleton_blobs(&self) -> Vec<u32> {
        self.blob_ids().filter(|&b| self.tally(b) == 1).collect()
    }

    /// Blobs with two or more annotations.
    pub fn multi_blobs(&self) -> Vec<u32> {
        self.blob_ids().filter(|&b| self.tally(b) >= 2).collect()
    }

    /// Blobs without any annotation.
    pub fn false_positive_blobs(&self) -> Vec<u32> {
        self.blob_ids().filter(|&b| self.tally(b) == 0).collect()
    }

    /// Flat pixel indices of `blob`, in raster order.
    pub fn pixels_of(&self, blob: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == blob).then_some(i))
            .collect()
    }

    /// Mask of a single blob.
    pub fn blob_mask(&self, blob: u32) -> BinaryMask {
        BinaryMask::new(
            self.height,
            self.width,
            self.labels.iter().map(|&l| l == blob).collect(),
        )
        .expect("dims match")
    }

    /// Mask of all blob pixels.
    pub fn mask(&self) -> BinaryMask {
        BinaryMask::new(self.height, self.width, self.labels.iter().map(|&l| l != 0).collect()).expect("dims match")
    }
}

/// Two-pass union-find labelling under 8-connectivity. Blobs are tagged with class 1.
pub fn connected_components(mask: &BinaryMask) -> BlobLabeling {
    connected_components_of_class(mask, 1)
}

/// Same as [`connected_components`] with an explicit class tag.
pub fn connected_components_of_class(mask: &BinaryMask, class: ClassId) -> BlobLabeling {
    let (h, w) = (mask.height(), mask.width());
    let fg = mask.values();
    let mut provisional = vec![0u32; h * w];
    let mut sets = DisjointSet::new();

    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !fg[i] {
                continue;
            }
            // already-visited neighbours: W, NW, N, NE
            let mut current = 0u32;
            let visit = |n: usize, current: &mut u32, sets: &mut DisjointSet| {
                let l = provisional[n];
                if l != 0 {
                    *current = if *current == 0 {
                        sets.find(l)
                    } else {
                        sets.union(*current, l)
                    };
                }
            };
            if c > 0 {
                visit(i - 1, &mut current, &mut sets);
            }
            if r > 0 {
                if c > 0 {
                    visit(i - w - 1, &mut current, &mut sets);
                }
                visit(i - w, &mut current, &mut sets);
                if c + 1 < w {
                    visit(i - w + 1, &mut current, &mut sets);
                }
            }
            provisional[i] = if current == 0 { sets.make_set() } else { current };
        }
    }

    let mut dense = vec![0u32; sets.parent.len()];
    let mut sizes = Vec::new();
    let labels = provisional
        .iter()
        .map(|&l| {
            if l == 0 {
                return 0;
            }
            let root = sets.find(l) as usize;
            if dense[root] == 0 {
                sizes.push(0);
                dense[root] = sizes.len() as u32;
            }
            let id = dense[root];
            sizes[id as usize - 1] += 1;
            id
        })
        .collect();

    BlobLabeling {
        height: h,
        width: w,
        class,
        points: vec![Vec::new(); sizes.len()],
        labels,
        sizes,
        unmatched: Vec::new(),
    }
}

/// Files every point under the blob it falls on, replacing earlier assignments.
/// Points on unlabelled pixels go to [`BlobLabeling::unmatched`].
pub fn assign_points<'a>(mut blobs: BlobLabeling, points: impl IntoIterator<Item = &'a Point>) -> BlobLabeling {
    blobs.points.iter_mut().for_each(Vec::clear);
    blobs.unmatched.clear();
    for p in points {
        if p.row >= blobs.height || p.col >= blobs.width {
            blobs.unmatched.push(*p);
            continue;
        }
        match blobs.label(p.row, p.col) {
            0 => blobs.unmatched.push(*p),
            b => blobs.points[b as usize - 1].push(*p),
        }
    }
    blobs
}

/// Per-class blobs of the argmax prediction, with the annotations of the
/// matching class assigned. Entry `k` holds class `k + 1`.
pub fn label_classes(s: &ProbMap, t: &PointAnnotations) -> Vec<BlobLabeling> {
    let classes = argmax_class(s);
    (1..s.classes())
        .map(|c| assign_points(connected_components_of_class(&classes.mask_of(c), c), t.of_class(c)))
        .collect()
}

/// Centroid of each blob rounded half-up to a pixel. The centre of a
/// non-convex blob can land outside the blob itself.
pub fn blob_centers(blobs: &BlobLabeling) -> Vec<Point> {
    let n = blobs.num_blobs();
    let mut sums = vec![(0.0f64, 0.0f64); n];
    for (i, &l) in blobs.labels.iter().enumerate() {
        if l != 0 {
            let s = &mut sums[l as usize - 1];
            s.0 += (i / blobs.width) as f64;
            s.1 += (i % blobs.width) as f64;
        }
    }
    sums.iter()
        .zip(&blobs.sizes)
        .map(|(&(sr, sc), &size)| {
            let round = |v: f64, max: usize| ((v / size as f64 + 0.5).floor().max(0.0) as usize).min(max - 1);
            Point::new(round(sr, blobs.height), round(sc, blobs.width), blobs.class)
        })
        .collect()
}
