use std::path::PathBuf;

use urbani_core::geo::{extract_datetime, extract_gps, extract_metadata, GeoError, TimeParts};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/exif")
        .join(name)
}

#[test]
fn geotagged_fixture_yields_position_and_time() {
    let p = extract_gps(fixture("geotagged.jpg")).unwrap().expect("position");
    assert!((p.latitude - 51.5).abs() < 1e-6, "{p:?}");
    assert!((p.longitude + 0.1277).abs() < 1e-6, "{p:?}");
    let t = extract_datetime(fixture("geotagged.jpg")).unwrap().expect("timestamp");
    assert_eq!(t, TimeParts::new(2018, 7, 14, 9, 30, 5).unwrap());
}

#[test]
fn metadata_free_file_is_absent_not_an_error() {
    assert_eq!(extract_metadata(fixture("no_metadata.jpg")).unwrap(), (None, None));
}

#[test]
fn southern_and_eastern_references_set_signs() {
    let p = extract_gps(fixture("southern.jpg")).unwrap().unwrap();
    // 33°52'30.84" S, 151°12'26.04" E
    assert!((p.latitude + (33.0 + 52.0 / 60.0 + 30.84 / 3600.0)).abs() < 1e-9);
    assert!((p.longitude - (151.0 + 12.0 / 60.0 + 26.04 / 3600.0)).abs() < 1e-9);
}

#[test]
fn datetime_falls_back_when_original_is_missing() {
    let (geo, time) = extract_metadata(fixture("datetime_only.jpg")).unwrap();
    assert_eq!(geo, None);
    assert_eq!(time, Some(TimeParts::new(2020, 2, 29, 12, 0, 0).unwrap()));
}

#[test]
fn invalid_month_drops_only_the_timestamp() {
    let (geo, time) = extract_metadata(fixture("invalid_month.jpg")).unwrap();
    assert!(geo.is_some());
    assert_eq!(time, None);
}

#[test]
fn out_of_range_minutes_drop_only_the_position() {
    let (geo, time) = extract_metadata(fixture("malformed_gps.jpg")).unwrap();
    assert_eq!(geo, None);
    assert!(time.is_some());
}

#[test]
fn unreadable_path_is_an_error() {
    let err = extract_gps(fixture("missing.jpg")).unwrap_err();
    assert!(matches!(err, GeoError::Io { .. }), "{err}");
}

#[test]
fn non_image_bytes_are_absent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("notes.jpg");
    std::fs::write(&path, b"not an image at all").unwrap();
    assert_eq!(extract_metadata(&path).unwrap(), (None, None));
}
