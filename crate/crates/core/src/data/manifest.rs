//! Line-oriented dataset manifests.
//!
//! ```text
//! # comment
//! classes=dot
//! image=img/0000.png; split=train; points=12,30,1;40,8,1
//! image=img/0001.png; split=val; boxes=10,10,20,20,1
//! ```
//!
//! Image paths are relative to the manifest's directory. Boxes are
//! `r0,c0,r1,c1,class` and become their center pixel.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::image_io::load_image_as;
use crate::error::{Error, Result};
use crate::fcn::Sample;
use crate::grid::{Point, PointAnnotations};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// Relative to the manifest directory.
    pub image: PathBuf,
    pub split: Split,
    pub points: PointAnnotations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    /// Object class names; class `k` is `class_names[k - 1]`.
    pub class_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Classes including background.
    pub fn num_classes(&self) -> usize {
        self.class_names.len() + 1
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn image_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.image)
    }

    /// Decodes the images of one split, converted to `channels` channels.
    pub fn samples(&self, split: Split, channels: usize) -> Result<Vec<Sample>> {
        self.split(split)
            .map(|e| Sample::new(load_image_as(&self.image_path(e), channels)?, e.points.clone()))
            .collect()
    }

    /// Channel count of the first image, 1 if there are none.
    pub fn channels(&self) -> Result<usize> {
        match self.entries.first() {
            Some(e) => Ok(super::image_io::load_image(&self.image_path(e))?.channels),
            None => Ok(1),
        }
    }
}

fn parse_numbers(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|_| format!("bad number {v:?}")))
        .collect()
}

struct RawRecord {
    image: Option<String>,
    split: Option<Split>,
    points: Vec<Point>,
}

fn parse_record(line: &str) -> std::result::Result<RawRecord, String> {
    let mut rec = RawRecord {
        image: None,
        split: None,
        points: Vec::new(),
    };
    let mut list_key: Option<String> = None;
    for token in line.split(';').map(str::trim) {
        let (key, value) = match token.split_once('=') {
            Some((k, v)) => (k.trim().to_string(), v.trim()),
            None => match &list_key {
                Some(k) => (k.clone(), token),
                None => return Err(format!("expected key=value, got {token:?}")),
            },
        };
        list_key = None;
        match key.as_str() {
            "image" => rec.image = Some(value.to_string()),
            "split" => rec.split = Some(value.parse()?),
            "points" | "boxes" => {
                list_key = Some(key.clone());
                if value.is_empty() {
                    continue;
                }
                let v = parse_numbers(value)?;
                let point = match (key.as_str(), v.as_slice()) {
                    ("points", &[r, c, k]) => Point::new(r, c, k),
                    ("boxes", &[r0, c0, r1, c1, k]) => {
                        if r1 < r0 || c1 < c0 {
                            return Err(format!("box {value:?} has negative extent"));
                        }
                        Point::new((r0 + r1) / 2, (c0 + c1) / 2, k)
                    }
                    _ => return Err(format!("malformed {key} entry {value:?}")),
                };
                rec.points.push(point);
            }
            other => return Err(format!("unknown field {other:?}")),
        }
    }
    Ok(rec)
}

/// Parses manifest text. `root` is where image paths are resolved; images
/// must exist and have a readable header.
pub fn parse_manifest(text: &str, root: &Path, source: &Path) -> Result<DatasetManifest> {
    let err = |line: usize, msg: String| Error::Manifest {
        path: source.to_path_buf(),
        line,
        msg,
    };
    let mut class_names: Option<Vec<String>> = None;
    let mut entries = Vec::new();
    let mut max_class = 0;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(names) = line.strip_prefix("classes=") {
            if class_names.is_some() || !entries.is_empty() {
                return Err(err(line_no, "classes must come first and only once".into()));
            }
            let names: Vec<String> = names.split(',').map(|s| s.trim().to_string()).collect();
            if names.iter().any(String::is_empty) {
                return Err(err(line_no, "empty class name".into()));
            }
            class_names = Some(names);
            continue;
        }
        let rec = parse_record(line).map_err(|m| err(line_no, m))?;
        let image = rec.image.ok_or_else(|| err(line_no, "missing image".into()))?;
        let split = rec.split.ok_or_else(|| err(line_no, "missing split".into()))?;
        let path = root.join(&image);
        let (w, h) = image::image_dimensions(&path).map_err(|e| err(line_no, format!("{}: {e}", path.display())))?;
        if let Some(names) = &class_names {
            if let Some(p) = rec.points.iter().find(|p| p.class > names.len()) {
                return Err(err(line_no, format!("class {} not in the class table", p.class)));
            }
        }
        max_class = rec.points.iter().map(|p| p.class).fold(max_class, usize::max);
        let points =
            PointAnnotations::new(h as usize, w as usize, rec.points).map_err(|e| err(line_no, e.to_string()))?;
        entries.push(ManifestEntry {
            image: PathBuf::from(image),
            split,
            points,
        });
    }
    let class_names = class_names.unwrap_or_else(|| (1..=max_class.max(1)).map(|k| format!("class{k}")).collect());
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        class_names,
        entries,
    })
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, &root, path)
}

/// Manifest text; boxes are written as their center points.
pub fn format_manifest(m: &DatasetManifest) -> String {
    let mut out = format!("classes={}\n", m.class_names.join(","));
    for e in &m.entries {
        let points: Vec<String> = e
            .points
            .points()
            .iter()
            .map(|p| format!("{},{},{}", p.row, p.col, p.class))
            .collect();
        out.push_str(&format!(
            "image={}; split={}; points={}\n",
            e.image.display(),
            e.split,
            points.join(";")
        ));
    }
    out
}

pub fn save_manifest(path: &Path, m: &DatasetManifest) -> Result<()> {
    fs::write(path, format_manifest(m))?;
    Ok(())
}
