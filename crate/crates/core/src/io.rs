//! Cloud and label file formats.
//!
//! A cloud file starts with a text header:
//!
//! ```text
//! FIELDS x y z range intensity reflectivity ring col valid
//! COUNT 65536
//! LAYERS 64
//! COLS 1024
//! DATA binary
//! ```
//!
//! In `text` layout the payload is one whitespace-separated row per valid
//! point, columns in `FIELDS` order (`valid` optional). Rows may come in any
//! order; grid slots without a row are read back as dropouts. In `binary` layout
//! every slot is written as a packed little-endian record of 43 bytes:
//! `f64 x, f64 y, f64 z, f64 range, f32 intensity, u16 reflectivity,
//! u16 ring, u16 col, u8 valid`.
//!
//! Label sidecars hold one token (`road`, `marking`, `other`) per line; line
//! `k` labels point `k`.
//!
//! Line files hold one fitted line per row:
//! `anchor_x anchor_y anchor_z dir_x dir_y dir_z support accepted`, after a
//! `#` header.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::cloud::{Label, LidarPoint, PointCloud};
use crate::error::{Error, Result};
use crate::lines::LineModel;

const REQUIRED: [&str; 8] = ["x", "y", "z", "range", "intensity", "reflectivity", "ring", "col"];
const BINARY_FIELDS: [&str; 9] = [
    "x",
    "y",
    "z",
    "range",
    "intensity",
    "reflectivity",
    "ring",
    "col",
    "valid",
];
pub const BINARY_RECORD_LEN: usize = 43;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Text,
    Binary,
}

impl Layout {
    fn as_str(self) -> &'static str {
        match self {
            Layout::Text => "text",
            Layout::Binary => "binary",
        }
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Layout::Text),
            "binary" => Ok(Layout::Binary),
            other => Err(Error::schema("DATA", format!("unknown layout `{other}`"))),
        }
    }
}

/// Parsed cloud file header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloudFileHeader {
    pub fields: Vec<String>,
    pub count: usize,
    pub layers: u16,
    pub cols: u16,
    pub layout: Layout,
}

impl CloudFileHeader {
    fn render(&self) -> String {
        format!(
            "FIELDS {}\nCOUNT {}\nLAYERS {}\nCOLS {}\nDATA {}\n",
            self.fields.join(" "),
            self.count,
            self.layers,
            self.cols,
            self.layout.as_str()
        )
    }

    /// Parses the header and returns it with the payload offset.
    fn parse(bytes: &[u8]) -> Result<(CloudFileHeader, usize)> {
        let mut fields = None;
        let mut count = None;
        let mut layers = None;
        let mut cols = None;
        let mut offset = 0usize;
        loop {
            let rest = &bytes[offset..];
            let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
                return Err(Error::Corrupt {
                    offset: bytes.len() as u64,
                    detail: "header ended before DATA line".into(),
                });
            };
            let line = std::str::from_utf8(&rest[..nl]).map_err(|_| Error::Corrupt {
                offset: offset as u64,
                detail: "header line is not UTF-8".into(),
            })?;
            offset += nl + 1;
            let line = line.trim_end_matches('\r');
            let (key, value) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "FIELDS" => fields = Some(value.split_whitespace().map(str::to_owned).collect::<Vec<_>>()),
                "COUNT" => count = Some(parse_header_num::<usize>("COUNT", value)?),
                "LAYERS" => layers = Some(parse_header_num::<u16>("LAYERS", value)?),
                "COLS" => cols = Some(parse_header_num::<u16>("COLS", value)?),
                "DATA" => {
                    let layout = value.trim().parse::<Layout>()?;
                    let header = CloudFileHeader {
                        fields: fields.ok_or_else(|| Error::schema("FIELDS", "missing header line"))?,
                        count: count.ok_or_else(|| Error::schema("COUNT", "missing header line"))?,
                        layers: layers.ok_or_else(|| Error::schema("LAYERS", "missing header line"))?,
                        cols: cols.ok_or_else(|| Error::schema("COLS", "missing header line"))?,
                        layout,
                    };
                    header.check_fields()?;
                    return Ok((header, offset));
                }
                other => {
                    return Err(Error::schema(other, "unknown header keyword"));
                }
            }
        }
    }

    fn check_fields(&self) -> Result<()> {
        for req in REQUIRED {
            if !self.fields.iter().any(|f| f == req) {
                return Err(Error::schema(req, "required field missing"));
            }
        }
        for (k, f) in self.fields.iter().enumerate() {
            if !BINARY_FIELDS.contains(&f.as_str()) {
                return Err(Error::schema(f.as_str(), "unknown field"));
            }
            if self.fields[..k].contains(f) {
                return Err(Error::schema(f.as_str(), "duplicate field"));
            }
        }
        if self.layout == Layout::Binary && self.fields != BINARY_FIELDS {
            let missing = BINARY_FIELDS
                .iter()
                .find(|f| !self.fields.iter().any(|g| g == *f))
                .copied()
                .unwrap_or("FIELDS");
            return Err(Error::schema(
                missing,
                format!("binary layout requires fields `{}`", BINARY_FIELDS.join(" ")),
            ));
        }
        Ok(())
    }
}

fn parse_header_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::schema(key, format!("invalid value `{}`", value.trim())))
}

/// Serializes a cloud. Text layout omits no-return slots.
pub fn encode_cloud(cloud: &PointCloud, layout: Layout) -> Vec<u8> {
    match layout {
        Layout::Binary => {
            let header = CloudFileHeader {
                fields: BINARY_FIELDS.iter().map(|s| s.to_string()).collect(),
                count: cloud.len(),
                layers: cloud.n_layers(),
                cols: cloud.n_cols(),
                layout,
            };
            let mut out = header.render().into_bytes();
            out.reserve(cloud.len() * BINARY_RECORD_LEN);
            for p in cloud.points() {
                out.extend_from_slice(&p.x.to_le_bytes());
                out.extend_from_slice(&p.y.to_le_bytes());
                out.extend_from_slice(&p.z.to_le_bytes());
                out.extend_from_slice(&p.range.to_le_bytes());
                out.extend_from_slice(&p.intensity.to_le_bytes());
                out.extend_from_slice(&p.reflectivity.to_le_bytes());
                out.extend_from_slice(&p.ring.to_le_bytes());
                out.extend_from_slice(&p.col.to_le_bytes());
                out.push(u8::from(p.valid));
            }
            out
        }
        Layout::Text => {
            let header = CloudFileHeader {
                fields: REQUIRED.iter().map(|s| s.to_string()).collect(),
                count: cloud.valid_count(),
                layers: cloud.n_layers(),
                cols: cloud.n_cols(),
                layout,
            };
            let mut out = header.render();
            for p in cloud.points().iter().filter(|p| p.valid) {
                // Display for floats is the shortest representation that round-trips.
                let _ = writeln!(
                    out,
                    "{} {} {} {} {} {} {} {}",
                    p.x, p.y, p.z, p.range, p.intensity, p.reflectivity, p.ring, p.col
                );
            }
            out.into_bytes()
        }
    }
}

pub fn decode_cloud(bytes: &[u8], frame_id: &str) -> Result<PointCloud> {
    let (header, start) = CloudFileHeader::parse(bytes)?;
    let points = match header.layout {
        Layout::Binary => decode_binary(&header, bytes, start)?,
        Layout::Text => organize(&header, decode_text(&header, bytes, start)?)?,
    };
    PointCloud::new(header.layers, header.cols, frame_id, points)
}

/// Places text rows on the declared grid; slots without a row become
/// dropouts, so a cloud read from either layout has every slot.
fn organize(header: &CloudFileHeader, rows: Vec<LidarPoint>) -> Result<Vec<LidarPoint>> {
    let (layers, cols) = (header.layers as usize, header.cols as usize);
    let mut grid: Vec<Option<LidarPoint>> = vec![None; layers * cols];
    for p in rows {
        if p.ring as usize >= layers || p.col as usize >= cols {
            return Err(Error::Structural(format!(
                "point (ring {}, col {}) outside {layers}x{cols} grid",
                p.ring, p.col
            )));
        }
        let slot = &mut grid[p.ring as usize * cols + p.col as usize];
        if slot.is_some() {
            return Err(Error::Structural(format!(
                "two rows for (ring {}, col {})",
                p.ring, p.col
            )));
        }
        *slot = Some(p);
    }
    Ok(grid
        .into_iter()
        .enumerate()
        .map(|(k, p)| p.unwrap_or_else(|| LidarPoint::dropout((k / cols) as u16, (k % cols) as u16)))
        .collect())
}

fn decode_binary(header: &CloudFileHeader, bytes: &[u8], start: usize) -> Result<Vec<LidarPoint>> {
    let payload = &bytes[start..];
    let expected = header.count * BINARY_RECORD_LEN;
    if payload.len() < expected {
        let complete = payload.len() / BINARY_RECORD_LEN;
        return Err(Error::Corrupt {
            offset: (start + complete * BINARY_RECORD_LEN) as u64,
            detail: format!(
                "truncated payload: record {complete} of {} incomplete ({} of {expected} bytes present)",
                header.count,
                payload.len()
            ),
        });
    }
    if payload.len() > expected {
        return Err(Error::Corrupt {
            offset: (start + expected) as u64,
            detail: format!("{} trailing bytes after declared COUNT", payload.len() - expected),
        });
    }
    let f64_at = |r: &[u8], o: usize| f64::from_le_bytes(r[o..o + 8].try_into().unwrap());
    let u16_at = |r: &[u8], o: usize| u16::from_le_bytes(r[o..o + 2].try_into().unwrap());
    let mut points = Vec::with_capacity(header.count);
    for (k, r) in payload.chunks_exact(BINARY_RECORD_LEN).enumerate() {
        let valid = match r[42] {
            0 => false,
            1 => true,
            v => {
                return Err(Error::Corrupt {
                    offset: (start + k * BINARY_RECORD_LEN + 42) as u64,
                    detail: format!("validity byte {v} is neither 0 nor 1"),
                })
            }
        };
        points.push(LidarPoint {
            x: f64_at(r, 0),
            y: f64_at(r, 8),
            z: f64_at(r, 16),
            range: f64_at(r, 24),
            intensity: f32::from_le_bytes(r[32..36].try_into().unwrap()),
            reflectivity: u16_at(r, 36),
            ring: u16_at(r, 38),
            col: u16_at(r, 40),
            valid,
        });
    }
    Ok(points)
}

fn decode_text(header: &CloudFileHeader, bytes: &[u8], start: usize) -> Result<Vec<LidarPoint>> {
    let body = std::str::from_utf8(&bytes[start..]).map_err(|e| Error::Corrupt {
        offset: (start + e.valid_up_to()) as u64,
        detail: "text payload is not UTF-8".into(),
    })?;
    let col_of = |name: &str| header.fields.iter().position(|f| f == name);
    let cols: Vec<usize> = REQUIRED.iter().map(|f| col_of(f).unwrap()).collect();
    let valid_col = col_of("valid");
    let mut points = Vec::with_capacity(header.count);
    let mut offset = start;
    for line in body.split_inclusive('\n') {
        let row_offset = offset;
        offset += line.len();
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if points.len() == header.count {
            return Err(Error::Corrupt {
                offset: row_offset as u64,
                detail: format!("more rows than declared COUNT {}", header.count),
            });
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != header.fields.len() {
            return Err(Error::Corrupt {
                offset: row_offset as u64,
                detail: format!(
                    "row has {} columns, header declares {}",
                    tokens.len(),
                    header.fields.len()
                ),
            });
        }
        let bad = |field: &str| Error::Corrupt {
            offset: row_offset as u64,
            detail: format!("unparsable `{field}` value"),
        };
        let f = |k: usize| tokens[cols[k]].parse::<f64>().map_err(|_| bad(REQUIRED[k]));
        let u = |k: usize| tokens[cols[k]].parse::<u16>().map_err(|_| bad(REQUIRED[k]));
        let valid = match valid_col {
            None => true,
            Some(c) => match tokens[c] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("valid")),
            },
        };
        points.push(LidarPoint {
            x: f(0)?,
            y: f(1)?,
            z: f(2)?,
            range: f(3)?,
            intensity: tokens[cols[4]].parse::<f32>().map_err(|_| bad("intensity"))?,
            reflectivity: u(5)?,
            ring: u(6)?,
            col: u(7)?,
            valid,
        });
    }
    if points.len() != header.count {
        return Err(Error::Corrupt {
            offset: bytes.len() as u64,
            detail: format!(
                "truncated payload: {} rows present, COUNT declares {}",
                points.len(),
                header.count
            ),
        });
    }
    Ok(points)
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let frame_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_cloud(&bytes, &frame_id)
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>, layout: Layout) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_cloud(cloud, layout)).map_err(|e| Error::io(path, e))
}

pub fn encode_labels(labels: &[Label]) -> String {
    let mut out = String::with_capacity(labels.len() * 6);
    for l in labels {
        out.push_str(l.as_str());
        out.push('\n');
    }
    out
}

pub fn decode_labels(text: &str) -> Result<Vec<Label>> {
    text.lines()
        .enumerate()
        .map(|(k, line)| {
            let token = line.trim();
            Label::parse(token)
                .ok_or_else(|| Error::schema("label", format!("unknown token `{token}` on line {}", k + 1)))
        })
        .collect()
}

/// Reads a label sidecar. With `expected_len`, a count mismatch is a
/// structural error.
pub fn read_labels(path: impl AsRef<Path>, expected_len: Option<usize>) -> Result<Vec<Label>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels = decode_labels(&text)?;
    if let Some(n) = expected_len {
        if labels.len() != n {
            return Err(Error::Structural(format!(
                "{}: {} labels for a cloud of {n} points",
                path.display(),
                labels.len()
            )));
        }
    }
    Ok(labels)
}

pub fn write_labels(labels: &[Label], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_labels(labels)).map_err(|e| Error::io(path, e))
}

const LINES_HEADER: &str = "# anchor_x anchor_y anchor_z dir_x dir_y dir_z support accepted";

pub fn encode_lines(lines: &[LineModel]) -> String {
    let mut out = format!("{LINES_HEADER}\n");
    for l in lines {
        let [ax, ay, az] = l.anchor;
        let [dx, dy, dz] = l.direction;
        let _ = writeln!(
            out,
            "{ax} {ay} {az} {dx} {dy} {dz} {} {}",
            l.support.len(),
            u8::from(l.accepted)
        );
    }
    out
}

/// One row of a line file.
#[derive(Debug, Clone, PartialEq)]
pub struct LineRecord {
    pub anchor: [f64; 3],
    pub direction: [f64; 3],
    pub support: usize,
    pub accepted: bool,
}

pub fn decode_lines(text: &str) -> Result<Vec<LineRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(k, line)| {
            let bad = |what: &str| Error::schema("line", format!("{what} on line {}", k + 1));
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 8 {
                return Err(bad(&format!("expected 8 columns, found {}", tok.len())));
            }
            let f = |j: usize| {
                tok[j]
                    .parse::<f64>()
                    .map_err(|_| bad(&format!("bad number `{}`", tok[j])))
            };
            Ok(LineRecord {
                anchor: [f(0)?, f(1)?, f(2)?],
                direction: [f(3)?, f(4)?, f(5)?],
                support: tok[6].parse().map_err(|_| bad("bad support count"))?,
                accepted: match tok[7] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad("accepted flag must be 0 or 1")),
                },
            })
        })
        .collect()
}

pub fn write_lines(lines: &[LineModel], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_lines(lines)).map_err(|e| Error::io(path, e))
}
