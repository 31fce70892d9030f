//! GPS coordinates and capture timestamps from EXIF metadata.

use std::fs::File;
use std::io::{self, BufReader, Cursor};
use std::path::{Path, PathBuf};

use exif::experimental::Writer;
use exif::{Field, In, Rational, Tag, Value};
use log::warn;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("{component} out of range: {value}")]
    OutOfRange { component: &'static str, value: f64 },
    #[error("invalid hemisphere reference {0:?}")]
    InvalidRef(String),
    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),
    #[error("invalid date/time {0:?}")]
    InvalidTime(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot write EXIF block: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hemisphere {
    N,
    S,
    E,
    W,
}

impl Hemisphere {
    pub fn parse(s: &str) -> Result<Self, GeoError> {
        match s.trim() {
            "N" => Ok(Self::N),
            "S" => Ok(Self::S),
            "E" => Ok(Self::E),
            "W" => Ok(Self::W),
            other => Err(GeoError::InvalidRef(other.to_string())),
        }
    }

    fn sign(self) -> i64 {
        match self {
            Self::N | Self::E => 1,
            Self::S | Self::W => -1,
        }
    }

    fn letter(self) -> &'static str {
        match self {
            Self::N => "N",
            Self::S => "S",
            Self::E => "E",
            Self::W => "W",
        }
    }
}

/// An unsigned EXIF rational.
pub type Urational = (u32, u32);

fn ratio(r: Urational, what: &'static str) -> Result<Ratio<i128>, GeoError> {
    if r.1 == 0 {
        return Err(GeoError::ZeroDenominator(what));
    }
    Ok(Ratio::new(r.0 as i128, r.1 as i128))
}

fn to_f64(r: Ratio<i128>) -> f64 {
    // The numerator and denominator fit well within f64's exact range for
    // EXIF-sized inputs; one rounding at the final division.
    *r.numer() as f64 / *r.denom() as f64
}

/// `d + m/60 + s/3600`, negated for south and west, evaluated exactly
/// before the final division.
pub fn dms_to_decimal(
    degrees: Urational,
    minutes: Urational,
    seconds: Urational,
    hemisphere: Hemisphere,
) -> Result<f64, GeoError> {
    let d = ratio(degrees, "degrees")?;
    let m = ratio(minutes, "minutes")?;
    let s = ratio(seconds, "seconds")?;
    let sixty = Ratio::from_integer(60);
    if m >= sixty {
        return Err(GeoError::OutOfRange {
            component: "minutes",
            value: to_f64(m),
        });
    }
    if s >= sixty {
        return Err(GeoError::OutOfRange {
            component: "seconds",
            value: to_f64(s),
        });
    }
    let total = d + m / sixty + s / Ratio::from_integer(3600);
    Ok(to_f64(total * Ratio::from_integer(hemisphere.sign() as i128)))
}

/// Splits `|value|` into whole degrees, whole minutes and rational seconds
/// with the given seconds denominator.
pub fn decimal_to_dms(value: f64, seconds_denominator: u32) -> (Urational, Urational, Urational) {
    let a = value.abs();
    let d = a.floor();
    let m = ((a - d) * 60.0).floor();
    let s = (a - d - m / 60.0) * 3600.0;
    let mut s_num = (s * seconds_denominator as f64).round();
    let (mut d, mut m) = (d as u32, m as u32);
    if s_num >= 60.0 * seconds_denominator as f64 {
        s_num -= 60.0 * seconds_denominator as f64;
        m += 1;
        if m == 60 {
            m = 0;
            d += 1;
        }
    }
    ((d, 1), (m, 1), (s_num as u32, seconds_denominator))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(GeoError::OutOfRange {
                component: "latitude",
                value: latitude,
            });
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(GeoError::OutOfRange {
                component: "longitude",
                value: longitude,
            });
        }
        Ok(Self { latitude, longitude })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeParts {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub hour: u32,
    pub minute: u32,
    pub second: u32,
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        2 => 28,
        _ => 0,
    }
}

impl TimeParts {
    pub fn new(year: i32, month: u32, day: u32, hour: u32, minute: u32, second: u32) -> Result<Self, GeoError> {
        let t = Self {
            year,
            month,
            day,
            hour,
            minute,
            second,
        };
        let valid = (1..=12).contains(&month)
            && day >= 1
            && day <= days_in_month(year, month)
            && hour < 24
            && minute < 60
            && second < 60;
        if valid {
            Ok(t)
        } else {
            Err(GeoError::InvalidTime(t.to_exif()))
        }
    }

    /// Parses `YYYY:MM:DD HH:MM:SS`; the time is taken verbatim, with no
    /// timezone adjustment.
    pub fn parse_exif(s: &str) -> Result<Self, GeoError> {
        let bad = || GeoError::InvalidTime(s.to_string());
        let s = s.trim_end_matches('\0').trim();
        let (date, time) = s.split_once(' ').ok_or_else(bad)?;
        let num = |p: &str, len: usize| -> Result<u32, GeoError> {
            if p.len() != len || !p.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            p.parse().map_err(|_| bad())
        };
        let d: Vec<&str> = date.split(':').collect();
        let t: Vec<&str> = time.trim().split(':').collect();
        if d.len() != 3 || t.len() != 3 {
            return Err(bad());
        }
        Self::new(
            num(d[0], 4)? as i32,
            num(d[1], 2)?,
            num(d[2], 2)?,
            num(t[0], 2)?,
            num(t[1], 2)?,
            num(t[2], 2)?,
        )
        .map_err(|_| bad())
    }

    pub fn to_exif(&self) -> String {
        format!(
            "{:04}:{:02}:{:02} {:02}:{:02}:{:02}",
            self.year, self.month, self.day, self.hour, self.minute, self.second
        )
    }
}

/// EXIF block of a file; `None` when the container holds no readable
/// metadata.
fn read_exif(path: &Path) -> Result<Option<exif::Exif>, GeoError> {
    let file = File::open(path).map_err(|source| GeoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match exif::Reader::new().read_from_container(&mut BufReader::new(file)) {
        Ok(e) => Ok(Some(e)),
        Err(exif::Error::Io(source)) if source.kind() != io::ErrorKind::UnexpectedEof => Err(GeoError::Io {
            path: path.to_path_buf(),
            source,
        }),
        Err(_) => Ok(None),
    }
}

fn ascii(field: &Field) -> Option<String> {
    match &field.value {
        Value::Ascii(parts) => parts
            .first()
            .map(|b| String::from_utf8_lossy(b).trim_end_matches('\0').to_string()),
        _ => None,
    }
}

fn dms_triple(field: &Field) -> Option<[Urational; 3]> {
    match &field.value {
        Value::Rational(v) if v.len() >= 3 => {
            Some([(v[0].num, v[0].denom), (v[1].num, v[1].denom), (v[2].num, v[2].denom)])
        }
        _ => None,
    }
}

fn gps_from_exif(exif: &exif::Exif, path: &Path) -> Option<GeoPoint> {
    let get = |tag| exif.get_field(tag, In::PRIMARY);
    let (lat, lat_ref, lon, lon_ref) = (
        get(Tag::GPSLatitude)?,
        get(Tag::GPSLatitudeRef)?,
        get(Tag::GPSLongitude)?,
        get(Tag::GPSLongitudeRef)?,
    );
    let parse = || -> Result<GeoPoint, String> {
        let coord = |f: &Field, r: &Field| -> Result<f64, String> {
            let [d, m, s] = dms_triple(f).ok_or("expected three rationals")?;
            let hemi = Hemisphere::parse(&ascii(r).ok_or("expected an ASCII reference")?).map_err(|e| e.to_string())?;
            dms_to_decimal(d, m, s, hemi).map_err(|e| e.to_string())
        };
        let latitude = coord(lat, lat_ref)?;
        let longitude = coord(lon, lon_ref)?;
        if ascii(lat_ref).is_some_and(|r| !matches!(r.trim(), "N" | "S"))
            || ascii(lon_ref).is_some_and(|r| !matches!(r.trim(), "E" | "W"))
        {
            return Err("hemisphere reference on the wrong axis".into());
        }
        GeoPoint::new(latitude, longitude).map_err(|e| e.to_string())
    };
    match parse() {
        Ok(p) => Some(p),
        Err(e) => {
            warn!("{}: malformed GPS tags ({e}); treating as absent", path.display());
            None
        }
    }
}

fn datetime_from_exif(exif: &exif::Exif, path: &Path) -> Option<TimeParts> {
    let field = exif
        .get_field(Tag::DateTimeOriginal, In::PRIMARY)
        .or_else(|| exif.get_field(Tag::DateTime, In::PRIMARY))?;
    let text = ascii(field);
    match text.as_deref().map(TimeParts::parse_exif) {
        Some(Ok(t)) => Some(t),
        _ => {
            warn!(
                "{}: unparseable timestamp {:?}; treating as absent",
                path.display(),
                text
            );
            None
        }
    }
}

/// GPS position of an image; `Ok(None)` when the tags are missing or
/// malformed, `Err` only when the file cannot be read.
pub fn extract_gps(path: impl AsRef<Path>) -> Result<Option<GeoPoint>, GeoError> {
    let path = path.as_ref();
    Ok(read_exif(path)?.and_then(|e| gps_from_exif(&e, path)))
}

/// Capture time from `DateTimeOriginal`, falling back to `DateTime`.
pub fn extract_datetime(path: impl AsRef<Path>) -> Result<Option<TimeParts>, GeoError> {
    let path = path.as_ref();
    Ok(read_exif(path)?.and_then(|e| datetime_from_exif(&e, path)))
}

/// Both lookups with a single read of the file.
pub fn extract_metadata(path: impl AsRef<Path>) -> Result<(Option<GeoPoint>, Option<TimeParts>), GeoError> {
    let path = path.as_ref();
    Ok(match read_exif(path)? {
        Some(e) => (gps_from_exif(&e, path), datetime_from_exif(&e, path)),
        None => (None, None),
    })
}

/// Tag values for [`embed_exif`].
#[derive(Debug, Clone, Default)]
pub struct ExifTags {
    pub latitude: Option<([Urational; 3], Hemisphere)>,
    pub longitude: Option<([Urational; 3], Hemisphere)>,
    pub datetime_original: Option<String>,
    pub datetime: Option<String>,
}

fn rationals(v: &[Urational; 3]) -> Value {
    Value::Rational(v.iter().map(|&(num, denom)| Rational { num, denom }).collect())
}

fn ascii_value(s: &str) -> Value {
    Value::Ascii(vec![s.as_bytes().to_vec()])
}

/// Inserts an APP1 EXIF segment holding `tags` right after the SOI marker
/// of a baseline JPEG byte stream.
pub fn embed_exif(jpeg: &[u8], tags: &ExifTags) -> Result<Vec<u8>, GeoError> {
    if jpeg.len() < 2 || jpeg[..2] != [0xFF, 0xD8] {
        return Err(GeoError::Encode("input is not a JPEG stream".into()));
    }
    let mut fields = Vec::new();
    let mut push = |tag, value| {
        fields.push(Field {
            tag,
            ifd_num: In::PRIMARY,
            value,
        })
    };
    if let Some((dms, h)) = &tags.latitude {
        push(Tag::GPSLatitudeRef, ascii_value(h.letter()));
        push(Tag::GPSLatitude, rationals(dms));
    }
    if let Some((dms, h)) = &tags.longitude {
        push(Tag::GPSLongitudeRef, ascii_value(h.letter()));
        push(Tag::GPSLongitude, rationals(dms));
    }
    if let Some(s) = &tags.datetime {
        push(Tag::DateTime, ascii_value(s));
    }
    if let Some(s) = &tags.datetime_original {
        push(Tag::DateTimeOriginal, ascii_value(s));
    }
    if fields.is_empty() {
        return Ok(jpeg.to_vec());
    }
    let mut writer = Writer::new();
    for f in &fields {
        writer.push_field(f);
    }
    let mut tiff = Cursor::new(Vec::new());
    writer
        .write(&mut tiff, false)
        .map_err(|e| GeoError::Encode(e.to_string()))?;
    let tiff = tiff.into_inner();
    let seg_len = tiff.len() + 8;
    let seg_len = u16::try_from(seg_len).map_err(|_| GeoError::Encode("EXIF block exceeds 64 KiB".into()))?;

    let mut out = Vec::with_capacity(jpeg.len() + tiff.len() + 10);
    out.extend_from_slice(&jpeg[..2]);
    out.extend_from_slice(&[0xFF, 0xE1]);
    out.extend_from_slice(&seg_len.to_be_bytes());
    out.extend_from_slice(b"Exif\0\0");
    out.extend_from_slice(&tiff);
    out.extend_from_slice(&jpeg[2..]);
    Ok(out)
}
