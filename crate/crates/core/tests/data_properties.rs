use std::path::Path;

use image::{GrayImage, Luma};
use lccount::data::{
    flip_horizontal, format_manifest, parse_manifest, synthesize, DatasetManifest, ManifestEntry, Split, SyntheticSpec,
};
use lccount::fcn::Tensor;
use lccount::{Point, PointAnnotations};
use proptest::prelude::*;

const SIZES: [(u32, u32); 3] = [(8, 8), (5, 12), (17, 3)];

fn write_images(dir: &Path) {
    for (i, &(h, w)) in SIZES.iter().enumerate() {
        GrayImage::from_pixel(w, h, Luma([i as u8 * 40]))
            .save(dir.join(format!("im{i}.png")))
            .unwrap();
    }
}

fn entry_strategy(classes: usize) -> impl Strategy<Value = ManifestEntry> {
    (
        0..SIZES.len(),
        0usize..3,
        proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 1..=classes), 0..8),
    )
        .prop_map(|(img, split, raw)| {
            let (h, w) = (SIZES[img].0 as usize, SIZES[img].1 as usize);
            let mut points: Vec<Point> = raw
                .into_iter()
                .map(|(r, c, k)| Point::new((r * h as f64) as usize, (c * w as f64) as usize, k))
                .collect();
            points.sort_by_key(|p| (p.row, p.col));
            points.dedup_by_key(|p| (p.row, p.col));
            ManifestEntry {
                image: format!("im{img}.png").into(),
                split: [Split::Train, Split::Val, Split::Test][split],
                points: PointAnnotations::new(h, w, points).unwrap(),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn manifest_round_trips(classes in 1usize..4, entries in proptest::collection::vec(entry_strategy(3), 0..6)) {
        let dir = tempfile::tempdir().unwrap();
        write_images(dir.path());
        let entries: Vec<ManifestEntry> = entries
            .into_iter()
            .map(|mut e| {
                let pts = e.points.points().iter().map(|p| Point::new(p.row, p.col, p.class.min(classes))).collect();
                e.points = PointAnnotations::new(e.points.height(), e.points.width(), pts).unwrap();
                e
            })
            .collect();
        let m = DatasetManifest {
            root: dir.path().to_path_buf(),
            class_names: (1..=classes).map(|k| format!("c{k}")).collect(),
            entries,
        };
        let text = format_manifest(&m);
        let back = parse_manifest(&text, dir.path(), Path::new("m.txt")).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(format_manifest(&back), text);
    }

    #[test]
    fn flip_keeps_point_histogram(entry in entry_strategy(4)) {
        let t = entry.points;
        let image = Tensor::zeros(1, t.height(), t.width());
        let (flipped_image, flipped) = flip_horizontal(&image, &t);
        prop_assert_eq!(flipped.len(), t.len());
        prop_assert_eq!(flipped.counts(5), t.counts(5));
        prop_assert_eq!((flipped_image.height, flipped_image.width), (t.height(), t.width()));
        let (_, back) = flip_horizontal(&flipped_image, &flipped);
        prop_assert_eq!(back, t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthetic_counts_match_rendered_dots(seed in any::<u64>(), classes in 1usize..3, overlap in 0.0f64..1.0, max_count in 0usize..10) {
        let spec = SyntheticSpec { images: 6, height: 24, width: 24, min_count: 0, max_count, overlap, seed, classes, ..SyntheticSpec::default() };
        for im in synthesize(&spec).unwrap() {
            prop_assert_eq!(im.radii.len(), im.points.len());
            prop_assert!(im.points.len() <= max_count);
            prop_assert_eq!(im.points.counts(classes + 1).iter().skip(1).sum::<usize>(), im.points.len());
            // every dot center is brighter than the image median
            let mut sorted = im.pixels.clone();
            sorted.sort_unstable();
            let median = sorted[sorted.len() / 2];
            for p in im.points.points() {
                prop_assert!(im.pixels[p.row * im.width + p.col] > median);
            }
        }
    }
}
