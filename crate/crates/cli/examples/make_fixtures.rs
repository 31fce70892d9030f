//! Regenerates the committed test fixtures: EXIF probe files for the core
//! tests and the five geotagged images of the golden map run.
//!
//! Usage: `cargo run -p urbani-cli --example make_fixtures -- <workspace root>`
//!
//! The golden checkpoints and `expected.csv` are produced by the CLI itself:
//!
//! ```text
//! urbani train-slumsnet --synthetic 200 --preset desk --seed 7 --out $G/classifier.ckpt
//! urbani train-detector --synthetic 40 --preset desk --seed 7 --out $G/detector.ckpt
//! urbani map $G/images --classifier $G/classifier.ckpt --detector $G/detector.ckpt --out $G/expected.csv
//! ```

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use anyhow::Context;
use image::{ImageFormat, RgbImage};
use urbani_core::datasets::{generate_synthetic_classification, generate_synthetic_detection};
use urbani_core::geo::{embed_exif, ExifTags, Hemisphere, Urational};

fn jpeg(img: &RgbImage) -> anyhow::Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Jpeg)?;
    Ok(buf.into_inner())
}

fn write(path: PathBuf, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn dms(d: u32, m: u32, s: Urational, h: Hemisphere) -> Option<([Urational; 3], Hemisphere)> {
    Some(([(d, 1), (m, 1), s], h))
}

fn exif_fixtures(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    let base = jpeg(&RgbImage::from_pixel(16, 16, image::Rgb([128, 128, 128])))?;
    let london = ExifTags {
        latitude: dms(51, 30, (0, 1), Hemisphere::N),
        longitude: dms(0, 7, (3972, 100), Hemisphere::W),
        datetime_original: Some("2018:07:14 09:30:05".into()),
        datetime: None,
    };
    write(dir.join("geotagged.jpg"), &embed_exif(&base, &london)?)?;
    write(dir.join("no_metadata.jpg"), &base)?;
    let south = ExifTags {
        latitude: dms(33, 52, (3084, 100), Hemisphere::S),
        longitude: dms(151, 12, (2604, 100), Hemisphere::E),
        datetime_original: Some("2019:02:28 23:59:59".into()),
        datetime: None,
    };
    write(dir.join("southern.jpg"), &embed_exif(&base, &south)?)?;
    let fallback = ExifTags {
        datetime: Some("2020:02:29 12:00:00".into()),
        ..ExifTags::default()
    };
    write(dir.join("datetime_only.jpg"), &embed_exif(&base, &fallback)?)?;
    let bad_month = ExifTags {
        datetime_original: Some("2018:13:14 09:30:05".into()),
        ..london.clone()
    };
    write(dir.join("invalid_month.jpg"), &embed_exif(&base, &bad_month)?)?;
    let bad_gps = ExifTags {
        latitude: dms(51, 75, (0, 1), Hemisphere::N),
        ..london
    };
    write(dir.join("malformed_gps.jpg"), &embed_exif(&base, &bad_gps)?)?;
    Ok(())
}

fn golden_images(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    let mut scenes: Vec<RgbImage> = Vec::new();
    for e in generate_synthetic_detection(3, 96, 21)?.examples {
        scenes.push(e.source.load()?);
    }
    for e in generate_synthetic_classification(2, 96, 21)?.examples {
        scenes.push(e.source.load()?);
    }
    let places = [
        (
            dms(51, 30, (0, 1), Hemisphere::N),
            dms(0, 7, (3972, 100), Hemisphere::W),
            "2018:07:14 09:30:05",
        ),
        (
            dms(1, 17, (3156, 100), Hemisphere::S),
            dms(36, 49, (1200, 100), Hemisphere::E),
            "2019:03:02 16:04:41",
        ),
        (
            dms(19, 2, (3000, 100), Hemisphere::N),
            dms(72, 51, (3624, 100), Hemisphere::E),
            "2020:12:31 23:59:59",
        ),
        (
            dms(22, 54, (3600, 100), Hemisphere::S),
            dms(43, 12, (2700, 100), Hemisphere::W),
            "2017:01:01 00:00:00",
        ),
        (
            dms(6, 31, (2400, 100), Hemisphere::N),
            dms(3, 22, (4800, 100), Hemisphere::E),
            "2021:06:15 07:45:30",
        ),
    ];
    for (k, (img, (lat, lon, time))) in scenes.iter().zip(places).enumerate() {
        let tags = ExifTags {
            latitude: lat,
            longitude: lon,
            datetime_original: Some(time.into()),
            datetime: None,
        };
        write(dir.join(format!("scene{k}.jpg")), &embed_exif(&jpeg(img)?, &tags)?)?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    exif_fixtures(&root.join("crates/core/tests/fixtures/exif"))?;
    golden_images(&root.join("crates/cli/tests/fixtures/golden/images"))?;
    Ok(())
}
