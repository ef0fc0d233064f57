use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lccount::data::{
    generate_synthetic, load_image_as, load_manifest, render_overlay, DatasetManifest, Split, SyntheticSpec,
};
use lccount::fcn::{
    load_checkpoint, predict_counts, save_checkpoint, train, AdamConfig, EpochLog, FcnParams, Sample, TrainConfig,
};
use lccount::metrics::{count_mae, fscore, game, mrmse_family, BlobHit, EvalRecord, Localization};
use lccount::{Error, LossConfig, LossTerms};
use log::{info, warn};
use rayon::prelude::*;

use crate::{AblateArgs, EvalArgs, GenerateArgs, PredictArgs, TrainArgs, TrainCmd};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Exit status for an error; the first toolkit error in the chain decides.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Numeric(_) | Error::NonFinite { .. } => EXIT_NUMERIC,
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

/// Worker pool for per-image work, sized by `LCCOUNT_THREADS` when set.
fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("LCCOUNT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("LCCOUNT_THREADS={v:?} is not a number")))?;
        if n == 0 {
            return Err(usage("LCCOUNT_THREADS must be at least 1"));
        }
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn parse_ratio(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split([':', ','])
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("split ratio {s:?} is not three integers")))?;
    parts
        .try_into()
        .map_err(|_| usage(format!("split ratio {s:?} needs three parts")))
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec {
        images: a.images,
        height: a.height.unwrap_or(a.size),
        width: a.width.unwrap_or(a.size),
        min_count: a.min_count,
        max_count: a.max_count,
        min_radius: a.min_radius,
        max_radius: a.max_radius,
        noise: a.noise,
        overlap: a.overlap,
        seed: a.seed,
        classes: a.classes,
        split_ratio: parse_ratio(&a.split_ratio)?,
    };
    let m = generate_synthetic(&spec, &a.out).with_context(|| format!("generating into {}", a.out.display()))?;
    println!(
        "wrote {} images and {}",
        m.entries.len(),
        a.out.join("manifest.txt").display()
    );
    Ok(())
}

fn train_config(a: &TrainArgs, terms: LossTerms) -> TrainConfig {
    TrainConfig {
        adam: AdamConfig {
            learning_rate: a.learning_rate,
            weight_decay: a.weight_decay,
            beta1: a.beta1,
            beta2: a.beta2,
            ..AdamConfig::default()
        },
        loss: LossConfig {
            split_method: a.split_method,
            terms,
            normalize: a.normalize,
            ..LossConfig::default()
        },
        max_epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        flip: !a.no_flip,
        ..TrainConfig::default()
    }
}

struct Splits {
    manifest: DatasetManifest,
    train: Vec<Sample>,
    val: Vec<Sample>,
}

fn load_splits(path: &Path) -> Result<Splits> {
    let manifest = load_manifest(path)?;
    let channels = manifest.channels()?;
    let train = manifest.samples(Split::Train, channels)?;
    let val = manifest.samples(Split::Val, channels)?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("no train images in manifest").into());
    }
    if val.is_empty() {
        return Err(Error::EmptyDataset("no val images in manifest").into());
    }
    Ok(Splits { manifest, train, val })
}

const LOG_HEADER: &str = "epoch,loss_image,loss_point,loss_split,loss_fp,loss_total,val_mae,val_fscore";

fn log_row(e: &EpochLog) -> String {
    let t = &e.train;
    format!(
        "{},{},{},{},{},{},{},{}",
        e.epoch, t.image_level, t.point_level, t.split_level, t.false_positive, t.total, e.val_mae, e.val_fscore
    )
}

/// Trains one configuration into `out`, returning the best parameters.
fn train_into(s: &Splits, cfg: &TrainConfig, out: &Path) -> Result<FcnParams> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let classes = s.manifest.num_classes();
    info!(
        "training {} on {} train / {} val images",
        cfg.loss.terms,
        s.train.len(),
        s.val.len()
    );
    let outcome = train(&s.train, &s.val, classes, cfg)?;
    let mut csv = String::from(LOG_HEADER);
    csv.push('\n');
    for e in &outcome.log {
        csv.push_str(&log_row(e));
        csv.push('\n');
    }
    fs::write(out.join("train_log.csv"), csv)?;
    save_checkpoint(&out.join("model.ckpt"), &outcome.params)?;
    info!(
        "best epoch {} of {}; checkpoint in {}",
        outcome.best_epoch,
        outcome.log.len(),
        out.join("model.ckpt").display()
    );
    Ok(outcome.params)
}

pub fn train_cmd(a: &TrainCmd) -> Result<()> {
    let cfg = train_config(&a.train, a.loss);
    cfg.validate()?;
    let s = load_splits(&a.train.manifest)?;
    train_into(&s, &cfg, &a.out)?;
    println!(
        "wrote {} and {}",
        a.out.join("model.ckpt").display(),
        a.out.join("train_log.csv").display()
    );
    Ok(())
}

fn network_records(
    pool: &rayon::ThreadPool,
    params: &FcnParams,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<Vec<EvalRecord>> {
    if params.classes != manifest.num_classes() {
        return Err(Error::Shape(format!(
            "checkpoint has {} classes, manifest has {}",
            params.classes,
            manifest.num_classes()
        ))
        .into());
    }
    let samples = manifest.samples(split, params.in_channels)?;
    let records: lccount::Result<Vec<EvalRecord>> = pool.install(|| {
        samples
            .par_iter()
            .map(|s| Ok(predict_counts(params, &s.image)?.record(&s.points)))
            .collect()
    });
    Ok(records?)
}

/// Records from predicted object locations: each predicted point is a
/// one-pixel blob that contains the annotations of its class at that pixel.
fn point_records(truth: &DatasetManifest, predicted: &DatasetManifest, split: Split) -> Result<Vec<EvalRecord>> {
    if truth.num_classes() != predicted.num_classes() {
        return Err(Error::Shape(format!(
            "predictions have {} classes, manifest has {}",
            predicted.num_classes(),
            truth.num_classes()
        ))
        .into());
    }
    let key = |m: &DatasetManifest, p: &Path| -> PathBuf {
        let full = m.root.join(p);
        fs::canonicalize(&full).unwrap_or(full)
    };
    let index: std::collections::HashMap<PathBuf, usize> = predicted
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (key(predicted, &e.image), i))
        .collect();
    let classes = truth.num_classes() - 1;
    truth
        .split(split)
        .map(|e| {
            let p = index
                .get(&key(truth, &e.image))
                .map(|&i| &predicted.entries[i])
                .ok_or_else(|| Error::Annotation(format!("no prediction for {}", e.image.display())))?;
            let t = &e.points;
            let blobs = p
                .points
                .points()
                .iter()
                .map(|q| BlobHit {
                    class: q.class,
                    points: t
                        .points()
                        .iter()
                        .filter(|g| g.row == q.row && g.col == q.col && g.class == q.class)
                        .count(),
                })
                .collect();
            Ok(EvalRecord {
                true_counts: t.counts(classes + 1)[1..].to_vec(),
                pred_counts: p.points.counts(classes + 1)[1..].to_vec(),
                localization: Some(Localization {
                    height: t.height(),
                    width: t.width(),
                    centers: p.points.points().to_vec(),
                    points: t.points().to_vec(),
                    blobs,
                }),
            })
        })
        .collect()
}

/// Metric name/value pairs in report order.
fn metric_rows(records: &[EvalRecord], game_level: u32) -> Result<Vec<(String, f64)>> {
    let mut rows = vec![("mae".to_string(), count_mae(records)?)];
    let multi = records[0].classes() > 1;
    if !multi {
        for l in 0..=game_level {
            rows.push((format!("game{l}"), game(records, l)?));
        }
    }
    rows.push(("fscore".into(), fscore(records)?));
    if multi {
        let f = mrmse_family(records)?;
        rows.push(("mrmse".into(), f.mrmse));
        rows.push(("rel_mrmse".into(), f.rel_mrmse));
        if let Some(v) = f.mrmse_nz {
            rows.push(("mrmse_nz".into(), v));
        }
        if let Some(v) = f.rel_mrmse_nz {
            rows.push(("rel_mrmse_nz".into(), v));
        }
    }
    Ok(rows)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if a.game_level > 16 {
        return Err(usage(format!("--game-level {} is too large", a.game_level)));
    }
    let pool = pool()?;
    let manifest = load_manifest(&a.manifest)?;
    let records = match (&a.checkpoint, &a.predictions) {
        (Some(ckpt), _) => network_records(&pool, &load_checkpoint(ckpt)?, &manifest, a.split)?,
        (None, Some(pred)) => point_records(&manifest, &load_manifest(pred)?, a.split)?,
        (None, None) => return Err(usage("eval needs --checkpoint or --predictions")),
    };
    if records.is_empty() {
        return Err(Error::EmptyDataset("no images in the evaluated split").into());
    }
    let rows = metric_rows(&records, a.game_level)?;
    let mut text = format!("split={}\nimages={}\n", a.split, records.len());
    for (k, v) in &rows {
        writeln!(text, "{k}={v}")?;
    }
    print!("{text}");
    if let Some(out) = &a.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        fs::write(out.join("metrics.txt"), &text)?;
        let header: Vec<&str> = rows.iter().map(|(k, _)| k.as_str()).collect();
        let values: Vec<String> = rows.iter().map(|(_, v)| v.to_string()).collect();
        let csv = format!(
            "split,images,{}\n{},{},{}\n",
            header.join(","),
            a.split,
            records.len(),
            values.join(",")
        );
        fs::write(out.join("metrics.csv"), csv)?;
    }
    Ok(())
}

fn overlay_path(image: &Path, out: Option<&Path>) -> PathBuf {
    let stem = image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| image.parent().unwrap_or(Path::new("")).to_path_buf());
    dir.join(format!("{stem}_overlay.png"))
}

/// Prints counts for every image that decodes; returns 2 if any did not.
pub fn predict(a: &PredictArgs) -> Result<u8> {
    let params = load_checkpoint(&a.checkpoint)?;
    if let Some(out) = &a.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    }
    let pool = pool()?;
    let results: Vec<Result<Vec<usize>>> = pool.install(|| {
        a.images
            .par_iter()
            .map(|path| {
                let image = load_image_as(path, params.in_channels)?;
                let pred = predict_counts(&params, &image)?;
                if !a.no_overlay {
                    let target = overlay_path(path, a.out.as_deref());
                    render_overlay(&image, &pred.blobs, &[], None)
                        .save(&target)
                        .with_context(|| format!("writing {}", target.display()))?;
                }
                Ok(pred.counts)
            })
            .collect()
    });
    let mut failed = 0;
    for (path, r) in a.images.iter().zip(results) {
        match r {
            Ok(counts) => {
                for (k, n) in counts.iter().enumerate() {
                    println!("image={} class={} count={}", path.display(), k + 1, n);
                }
            }
            Err(e) => {
                if exit_code(&e) == EXIT_NUMERIC {
                    return Err(e);
                }
                warn!("skipping {}: {e:#}", path.display());
                failed += 1;
            }
        }
    }
    if failed > 0 {
        warn!("{failed} of {} images failed", a.images.len());
        return Ok(EXIT_DATA);
    }
    Ok(0)
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let s = load_splits(&a.train.manifest)?;
    let test = s.manifest.samples(Split::Test, s.manifest.channels()?)?;
    let (eval_set, eval_name) = if test.is_empty() {
        (&s.val, "val")
    } else {
        (&test, "test")
    };
    let mut table = format!("loss,{eval_name}_mae,{eval_name}_fscore\n");
    println!("{:<12} {:>8} {:>8}", "loss", "MAE", "F-score");
    for terms in LossTerms::ABLATIONS {
        let cfg = train_config(&a.train, terms);
        cfg.validate()?;
        let dir = a.out.join(terms.to_string().replace('+', "_"));
        let params = train_into(&s, &cfg, &dir)?;
        let records: Vec<EvalRecord> = eval_set
            .iter()
            .map(|x| Ok(predict_counts(&params, &x.image)?.record(&x.points)))
            .collect::<lccount::Result<_>>()?;
        let (m, f) = (count_mae(&records)?, fscore(&records)?);
        println!("{:<12} {m:>8.3} {f:>8.3}", terms.to_string());
        writeln!(table, "{terms},{m},{f}")?;
    }
    fs::write(a.out.join("ablation.csv"), table).context("writing ablation.csv")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_kind() {
        let wrap = |e: Error| Err::<(), _>(e).context("while running").unwrap_err();
        assert_eq!(exit_code(&wrap(Error::Numeric("loss is NaN".into()))), EXIT_NUMERIC);
        assert_eq!(
            exit_code(&wrap(Error::NonFinite { what: "loss", index: 0 })),
            EXIT_NUMERIC
        );
        assert_eq!(exit_code(&wrap(Error::Config("bad".into()))), EXIT_USAGE);
        assert_eq!(exit_code(&wrap(Error::EmptyDataset("no val"))), EXIT_DATA);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), EXIT_DATA);
    }

    #[test]
    fn split_ratio_parsing() {
        assert_eq!(parse_ratio("5:1:1").unwrap(), [5, 1, 1]);
        assert_eq!(parse_ratio("2,1,0").unwrap(), [2, 1, 0]);
        assert!(parse_ratio("5:1").is_err());
        assert!(parse_ratio("a:b:c").is_err());
    }
}
