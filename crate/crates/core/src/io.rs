//! Dataset file formats: PGM images, event streams (CSV and binary) and the
//! frame index.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::event::Event;
use crate::image::ImageF64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl DataError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        DataError::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        DataError::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }
}

/// Raw grayscale image as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawImage {
    U8 {
        width: usize,
        height: usize,
        data: Vec<u8>,
    },
    U16 {
        width: usize,
        height: usize,
        data: Vec<u16>,
    },
}

impl RawImage {
    pub fn dimensions(&self) -> (usize, usize) {
        match self {
            RawImage::U8 { width, height, .. } | RawImage::U16 { width, height, .. } => (*width, *height),
        }
    }

    /// Intensity normalized by the bit depth's maximum, in [0, 1].
    pub fn to_normalized(&self) -> ImageF64 {
        match self {
            RawImage::U8 {
                width,
                height,
                data,
            } => ImageF64::from_vec(*width, *height, data.iter().map(|&v| v as f64 / 255.0).collect()),
            RawImage::U16 {
                width,
                height,
                data,
            } => ImageF64::from_vec(*width, *height, data.iter().map(|&v| v as f64 / 65535.0).collect()),
        }
    }
}

// ---------------------------------------------------------------------------
// PGM (binary P5)
// ---------------------------------------------------------------------------

/// Writes an intensity image in [0, 1] as an 8-bit binary PGM.
pub fn write_pgm_u8(path: &Path, img: &ImageF64) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| DataError::io(path, e))?);
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(header.as_bytes())
        .and_then(|_| w.write_all(&bytes))
        .map_err(|e| DataError::io(path, e))
}

/// Writes raw 16-bit samples as a binary PGM (big-endian, per the format).
pub fn write_pgm_u16(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<(), DataError> {
    assert_eq!(data.len(), width * height);
    let mut w = BufWriter::new(File::create(path).map_err(|e| DataError::io(path, e))?);
    let header = format!("P5\n{} {}\n65535\n", width, height);
    let mut bytes = Vec::with_capacity(data.len() * 2);
    for v in data {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    w.write_all(header.as_bytes())
        .and_then(|_| w.write_all(&bytes))
        .map_err(|e| DataError::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<RawImage, DataError> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| DataError::io(path, e))?;
    let mut pos = 0usize;
    let mut token = |raw: &[u8]| -> Result<String, DataError> {
        // skip whitespace and '#' comment lines
        loop {
            while pos < raw.len() && raw[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < raw.len() && raw[pos] == b'#' {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(DataError::format(path, "truncated header"));
        }
        Ok(String::from_utf8_lossy(&raw[start..pos]).into_owned())
    };
    let magic = token(&raw)?;
    if magic != "P5" {
        return Err(DataError::format(path, format!("unsupported magic '{magic}'")));
    }
    let width: usize = token(&raw)?
        .parse()
        .map_err(|_| DataError::format(path, "bad width"))?;
    let height: usize = token(&raw)?
        .parse()
        .map_err(|_| DataError::format(path, "bad height"))?;
    let maxval: usize = token(&raw)?
        .parse()
        .map_err(|_| DataError::format(path, "bad maxval"))?;
    pos += 1; // single whitespace after maxval
    let body = &raw[pos..];
    if maxval <= 255 {
        if body.len() < width * height {
            return Err(DataError::format(path, "truncated pixel data"));
        }
        Ok(RawImage::U8 {
            width,
            height,
            data: body[..width * height].to_vec(),
        })
    } else {
        if body.len() < width * height * 2 {
            return Err(DataError::format(path, "truncated pixel data"));
        }
        let data = body[..width * height * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        Ok(RawImage::U16 {
            width,
            height,
            data,
        })
    }
}

// ---------------------------------------------------------------------------
// Event streams
// ---------------------------------------------------------------------------

pub const EVENTS_CSV_HEADER: &str = "t_us,x,y,p";

/// Writes `events.csv` with polarity encoded as p in {0, 1} for {-1, +1}.
pub fn write_events_csv(path: &Path, events: &[Event]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| DataError::io(path, e))?);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{EVENTS_CSV_HEADER}")?;
        for e in events {
            writeln!(w, "{},{},{},{}", e.t_us, e.x, e.y, if e.polarity > 0 { 1 } else { 0 })?;
        }
        Ok(())
    };
    write().map_err(|e| DataError::io(path, e))
}

pub fn read_events_csv(path: &Path) -> Result<Vec<Event>, DataError> {
    let reader = BufReader::new(File::open(path).map_err(|e| DataError::io(path, e))?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 {
            if trimmed != EVENTS_CSV_HEADER {
                return Err(DataError::parse(path, 1, format!("expected header '{EVENTS_CSV_HEADER}'")));
            }
            continue;
        }
        let mut cols = trimmed.split(',');
        let mut next = |name: &str| {
            cols.next()
                .ok_or_else(|| DataError::parse(path, i + 1, format!("missing column {name}")))
        };
        let t_us: u64 = next("t_us")?
            .trim()
            .parse()
            .map_err(|_| DataError::parse(path, i + 1, "bad t_us"))?;
        let x: u16 = next("x")?
            .trim()
            .parse()
            .map_err(|_| DataError::parse(path, i + 1, "bad x"))?;
        let y: u16 = next("y")?
            .trim()
            .parse()
            .map_err(|_| DataError::parse(path, i + 1, "bad y"))?;
        let p: u8 = next("p")?
            .trim()
            .parse()
            .map_err(|_| DataError::parse(path, i + 1, "bad p"))?;
        let polarity = match p {
            0 => -1,
            1 => 1,
            _ => return Err(DataError::parse(path, i + 1, "p must be 0 or 1")),
        };
        events.push(Event::new(t_us, x, y, polarity));
    }
    Ok(events)
}

/// Writes `events.bin`: little-endian records (u64 t_us, u16 x, u16 y, u8 p).
pub fn write_events_bin(path: &Path, events: &[Event]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| DataError::io(path, e))?);
    let mut buf = Vec::with_capacity(events.len() * 13);
    for e in events {
        buf.extend_from_slice(&e.t_us.to_le_bytes());
        buf.extend_from_slice(&e.x.to_le_bytes());
        buf.extend_from_slice(&e.y.to_le_bytes());
        buf.push(if e.polarity > 0 { 1 } else { 0 });
    }
    w.write_all(&buf).map_err(|e| DataError::io(path, e))
}

pub fn read_events_bin(path: &Path) -> Result<Vec<Event>, DataError> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| DataError::io(path, e))?;
    if raw.len() % 13 != 0 {
        return Err(DataError::format(path, "length is not a multiple of the 13-byte record"));
    }
    Ok(raw
        .chunks_exact(13)
        .map(|c| {
            let t_us = u64::from_le_bytes(c[0..8].try_into().unwrap());
            let x = u16::from_le_bytes(c[8..10].try_into().unwrap());
            let y = u16::from_le_bytes(c[10..12].try_into().unwrap());
            Event::new(t_us, x, y, if c[12] == 1 { 1 } else { -1 })
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Frame index
// ---------------------------------------------------------------------------

pub const FRAMES_CSV_HEADER: &str = "timestamp_s,filename,exposure_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEntry {
    pub timestamp_s: f64,
    pub filename: String,
    pub exposure_ms: f64,
}

pub fn write_frames_csv(path: &Path, entries: &[FrameEntry]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| DataError::io(path, e))?);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{FRAMES_CSV_HEADER}")?;
        for e in entries {
            writeln!(w, "{:.9},{},{}", e.timestamp_s, e.filename, e.exposure_ms)?;
        }
        Ok(())
    };
    write().map_err(|e| DataError::io(path, e))
}

pub fn read_frames_csv(path: &Path) -> Result<Vec<FrameEntry>, DataError> {
    let reader = BufReader::new(File::open(path).map_err(|e| DataError::io(path, e))?);
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i == 0 {
            if trimmed != FRAMES_CSV_HEADER {
                return Err(DataError::parse(path, 1, format!("expected header '{FRAMES_CSV_HEADER}'")));
            }
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').collect();
        if cols.len() != 3 {
            return Err(DataError::parse(path, i + 1, "expected 3 columns"));
        }
        entries.push(FrameEntry {
            timestamp_s: cols[0]
                .trim()
                .parse()
                .map_err(|_| DataError::parse(path, i + 1, "bad timestamp_s"))?,
            filename: cols[1].trim().to_string(),
            exposure_ms: cols[2]
                .trim()
                .parse()
                .map_err(|_| DataError::parse(path, i + 1, "bad exposure_ms"))?,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_u8_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        let img = ImageF64::from_fn(7, 5, |x, y| ((x * 37 + y * 11) % 256) as f64 / 255.0);
        write_pgm_u8(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        match &back {
            RawImage::U8 {
                width,
                height,
                data,
            } => {
                assert_eq!((*width, *height), (7, 5));
                let expect: Vec<u8> = img.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
                assert_eq!(data, &expect);
            }
            _ => panic!("expected 8-bit image"),
        }
        // write the same bytes again: identical file
        let path2 = dir.path().join("g.pgm");
        write_pgm_u8(&path2, &back.to_normalized()).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn pgm_u16_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pgm");
        let data: Vec<u16> = (0..12).map(|i| (i * 4999) as u16).collect();
        write_pgm_u16(&path, 4, 3, &data).unwrap();
        match read_pgm(&path).unwrap() {
            RawImage::U16 {
                width,
                height,
                data: d,
            } => {
                assert_eq!((width, height), (4, 3));
                assert_eq!(d, data);
            }
            _ => panic!("expected 16-bit image"),
        }
    }

    #[test]
    fn events_csv_and_bin_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let events: Vec<Event> = (0..100)
            .map(|i| Event::new(i * 17, (i % 13) as u16, (i % 7) as u16, if i % 3 == 0 { -1 } else { 1 }))
            .collect();
        let csv = dir.path().join("events.csv");
        write_events_csv(&csv, &events).unwrap();
        assert_eq!(read_events_csv(&csv).unwrap(), events);

        let bin = dir.path().join("events.bin");
        write_events_bin(&bin, &events).unwrap();
        assert_eq!(read_events_bin(&bin).unwrap(), events);
    }

    #[test]
    fn events_csv_reports_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        std::fs::write(&path, "t_us,x,y,p\n1,2,3,5\n").unwrap();
        let err = read_events_csv(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn frames_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.csv");
        let entries = vec![
            FrameEntry {
                timestamp_s: 0.05,
                filename: "frames/000000.pgm".into(),
                exposure_ms: 5.0,
            },
            FrameEntry {
                timestamp_s: 0.1,
                filename: "frames/000001.pgm".into(),
                exposure_ms: 5.0,
            },
        ];
        write_frames_csv(&path, &entries).unwrap();
        assert_eq!(read_frames_csv(&path).unwrap(), entries);
    }
}
