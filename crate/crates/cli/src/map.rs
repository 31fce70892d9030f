use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use image::RgbImage;
use log::{info, warn};
use rayon::prelude::*;
use urbani_core::datasets::decode_image;
use urbani_core::detector::{Detection, SsdModel};
use urbani_core::geo::{extract_metadata, GeoPoint, TimeParts};
use urbani_core::records::{export_geojson, make_record, write_csv, GeoRecord};
use urbani_core::slumsnet::{PlanningStatus, SlumsNet};

use crate::failure::{check_threshold, load_models, Classify, Failure};
use crate::MapArgs;

/// Everything the pipeline derives from one image.
pub struct Analysis {
    pub image: RgbImage,
    pub status: PlanningStatus,
    pub detections: Vec<Detection>,
    pub geo: Option<GeoPoint>,
    pub time: Option<TimeParts>,
}

pub fn analyze(
    path: &Path,
    classifier: &SlumsNet,
    detector: &SsdModel,
    class_threshold: f64,
    score_threshold: f64,
) -> anyhow::Result<Analysis> {
    let image = decode_image(path)?;
    let status = classifier.predict_with_threshold(&image, class_threshold)?;
    let detections = detector.detect(&image, score_threshold)?;
    let (geo, time) = extract_metadata(path)?;
    Ok(Analysis {
        image,
        status,
        detections,
        geo,
        time,
    })
}

fn list_images(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))? {
        let entry = entry.with_context(|| format!("reading directory {}", dir.display()))?;
        if entry.file_type().map(|t| t.is_file()).unwrap_or(false) {
            files.push(entry.path());
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Summary {
    pub processed: usize,
    pub skipped: usize,
    pub missing_geo: usize,
}

pub fn run(args: MapArgs) -> Result<(), Failure> {
    check_threshold("--score-threshold", args.models.score_threshold)?;
    check_threshold("--class-threshold", args.models.class_threshold)?;
    if args.workers == 0 {
        return Err(Failure::usage(anyhow!("--workers must be at least 1")));
    }
    let (classifier, detector) = load_models(&args.models.classifier, &args.models.detector)?;
    if !args.input.is_dir() {
        return Err(Failure::data(anyhow!(
            "input directory {} does not exist",
            args.input.display()
        )));
    }
    let files = list_images(&args.input).or_data()?;
    info!("{} candidate files, seed {}", files.len(), args.seed);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| Failure::usage(anyhow!("worker pool: {e}")))?;
    let results: Vec<Option<GeoRecord>> = pool.install(|| {
        files
            .par_iter()
            .map(|path| {
                match analyze(
                    path,
                    &classifier,
                    &detector,
                    args.models.class_threshold,
                    args.models.score_threshold,
                ) {
                    Ok(a) => Some(make_record(path, &a.status, &a.detections, a.geo, a.time)),
                    Err(e) => {
                        warn!("skipping {}: {e:#}", path.display());
                        None
                    }
                }
            })
            .collect()
    });

    let mut summary = Summary::default();
    let mut records = Vec::with_capacity(results.len());
    for record in results {
        let Some(record) = record else {
            summary.skipped += 1;
            continue;
        };
        summary.processed += 1;
        if record.geo.is_none() {
            summary.missing_geo += 1;
            if !args.keep_missing_geo {
                warn!("{}: no GPS position; row skipped", record.source.display());
                continue;
            }
        }
        info!("row {}: {}", records.len() + 1, record.source.display());
        records.push(record);
    }

    write_csv(&records, &args.out).or_data()?;
    if let Some(path) = &args.geojson {
        let without = export_geojson(&records, path).or_data()?;
        if without > 0 {
            info!("{without} rows without position left out of {}", path.display());
        }
    }
    eprintln!(
        "{} processed, {} skipped, {} missing geo",
        summary.processed, summary.skipped, summary.missing_geo
    );
    Ok(())
}
