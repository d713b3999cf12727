//! Text point clouds, organized clouds and binary PGM images.
//!
//! Point clouds are one header line `# x y z ring intensity` followed by one
//! space-separated point per line, `-1` marking an absent ring or intensity.
//! Organized clouds add a leading `# width W height H` line and hold exactly
//! `W * H` rows in row-major pixel order, `nan` coordinates marking pixels
//! without a point.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use velostereo_core::{CameraFrame, GrayImage, LidarFrame, Point3};

pub const CLOUD_HEADER: &str = "# x y z ring intensity";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// One parsed row of a cloud file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudRow {
    /// `None` for `nan` rows of organized clouds.
    pub point: Option<Point3>,
    pub ring: Option<u16>,
    pub intensity: Option<f64>,
}

fn write_row<W: Write>(w: &mut W, row: &CloudRow) -> std::io::Result<()> {
    match row.point {
        Some(p) => write!(w, "{} {} {}", p.x, p.y, p.z)?,
        None => w.write_all(b"nan nan nan")?,
    }
    match row.ring {
        Some(r) => write!(w, " {r}")?,
        None => w.write_all(b" -1")?,
    }
    match row.intensity {
        Some(i) => writeln!(w, " {i}"),
        None => writeln!(w, " -1"),
    }
}

fn parse_row(text: &str, path: &Path, line: usize) -> Result<CloudRow, FormatError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(parse_err(path, line, format!("expected 5 fields, found {}", fields.len())));
    }
    let num = |s: &str| -> Result<f64, FormatError> {
        s.parse::<f64>().map_err(|_| parse_err(path, line, format!("bad number `{s}`")))
    };
    let (x, y, z) = (num(fields[0])?, num(fields[1])?, num(fields[2])?);
    let point = if x.is_nan() || y.is_nan() || z.is_nan() {
        None
    } else {
        Some(Point3::new(x, y, z))
    };
    let ring = match fields[3].parse::<i64>() {
        Ok(-1) => None,
        Ok(r) if (0..=u16::MAX as i64).contains(&r) => Some(r as u16),
        _ => return Err(parse_err(path, line, format!("bad ring `{}`", fields[3]))),
    };
    let i = num(fields[4])?;
    let intensity = if i == -1.0 { None } else { Some(i) };
    Ok(CloudRow { point, ring, intensity })
}

pub fn write_lidar_cloud(path: &Path, frame: &LidarFrame) -> Result<(), FormatError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "{CLOUD_HEADER}")?;
        for (ring, points) in frame.rings.iter().enumerate() {
            for p in points {
                let row = CloudRow {
                    point: Some(p.position),
                    ring: Some(ring as u16),
                    intensity: None,
                };
                write_row(w, &row)?;
            }
        }
        w.flush()
    };
    run(&mut w).map_err(io_err(path))
}

/// Reads a lidar cloud; every point needs a ring index. The layer count is
/// one past the highest ring seen.
pub fn read_lidar_cloud(path: &Path) -> Result<LidarFrame, FormatError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut tagged = Vec::new();
    let mut layers = 0usize;
    let mut header_seen = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text.starts_with('#') {
            header_seen |= text == CLOUD_HEADER;
            continue;
        }
        if !header_seen {
            return Err(parse_err(path, i + 1, "missing `# x y z ring intensity` header"));
        }
        let row = parse_row(text, path, i + 1)?;
        let p = row.point.ok_or_else(|| parse_err(path, i + 1, "lidar rows cannot be nan"))?;
        let r = row.ring.ok_or_else(|| parse_err(path, i + 1, "lidar rows need a ring index"))?;
        layers = layers.max(r as usize + 1);
        tagged.push((p, r));
    }
    if !header_seen {
        return Err(parse_err(path, 1, "missing `# x y z ring intensity` header"));
    }
    Ok(LidarFrame::from_tagged_points(tagged, layers))
}

/// Writes the organized cloud of a camera frame, with the gray level of
/// each pixel in the intensity column.
pub fn write_organized_cloud(path: &Path, frame: &CameraFrame) -> Result<(), FormatError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "# width {} height {}", frame.width(), frame.height())?;
        writeln!(w, "{CLOUD_HEADER}")?;
        for (p, &g) in frame.cloud.iter().zip(&frame.image.data) {
            let row = CloudRow {
                point: *p,
                ring: None,
                intensity: Some(g as f64),
            };
            write_row(w, &row)?;
        }
        w.flush()
    };
    run(&mut w).map_err(io_err(path))
}

/// Organized cloud rows and dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganizedCloud {
    pub width: usize,
    pub height: usize,
    pub rows: Vec<CloudRow>,
}

pub fn read_organized_cloud(path: &Path) -> Result<OrganizedCloud, FormatError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut dims: Option<(usize, usize)> = None;
    let mut header_seen = false;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix('#') {
            let words: Vec<&str> = rest.split_whitespace().collect();
            if let ["width", w, "height", h] = words[..] {
                let parse = |s: &str| s.parse::<usize>().map_err(|_| parse_err(path, i + 1, format!("bad dimension `{s}`")));
                let (w, h) = (parse(w)?, parse(h)?);
                rows.reserve(w * h);
                dims = Some((w, h));
            }
            header_seen |= text == CLOUD_HEADER;
            continue;
        }
        if dims.is_none() || !header_seen {
            return Err(parse_err(path, i + 1, "organized cloud needs `# width W height H` and column headers"));
        }
        rows.push(parse_row(text, path, i + 1)?);
    }
    let (width, height) = dims.ok_or_else(|| parse_err(path, 1, "missing `# width W height H` header"))?;
    if rows.len() != width * height {
        return Err(parse_err(
            path,
            rows.len(),
            format!("expected {} rows for {width}x{height}, found {}", width * height, rows.len()),
        ));
    }
    Ok(OrganizedCloud { width, height, rows })
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<(), FormatError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", image.width, image.height)?;
        w.write_all(&image.data)?;
        w.flush()
    };
    run(&mut w).map_err(io_err(path))
}

/// Reads a binary PGM with maxval 255; `#` comments in the header are
/// skipped.
pub fn read_pgm(path: &Path) -> Result<GrayImage, FormatError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, 1, "truncated PGM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // single whitespace byte separates the header from the raster
    pos += 1;
    if tokens[0] != "P5" {
        return Err(parse_err(path, 1, format!("expected P5, found `{}`", tokens[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| parse_err(path, 1, format!("bad header value `{s}`")));
    let (w, h, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval != 255 {
        return Err(parse_err(path, 1, format!("unsupported maxval {maxval}")));
    }
    let end = pos + w * h;
    if bytes.len() < end {
        return Err(parse_err(path, 1, "raster shorter than width * height"));
    }
    GrayImage::from_raw(w, h, bytes[pos..end].to_vec()).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Camera frame from an organized cloud and an optional image. Without an
/// image the gray levels come from the intensity column.
pub fn camera_frame(cloud: OrganizedCloud, image: Option<GrayImage>, path: &Path) -> Result<CameraFrame, FormatError> {
    let image = match image {
        Some(img) => {
            if (img.width, img.height) != (cloud.width, cloud.height) {
                return Err(parse_err(path, 1, "image and cloud dimensions differ"));
            }
            img
        }
        None => {
            let data = cloud
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| match r.intensity {
                    Some(v) if (0.0..=255.0).contains(&v) => Ok(v.round() as u8),
                    _ => Err(parse_err(path, i + 3, "no image given and intensity is missing")),
                })
                .collect::<Result<Vec<u8>, _>>()?;
            GrayImage::from_raw(cloud.width, cloud.height, data).map_err(|e| parse_err(path, 1, e.to_string()))?
        }
    };
    let points = cloud.rows.iter().map(|r| r.point).collect();
    CameraFrame::new(image, points).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// Reads `<stem>.txt` as an organized cloud and `<stem>.pgm` beside it when
/// present.
pub fn read_camera_frame(cloud_path: &Path) -> Result<CameraFrame, FormatError> {
    let cloud = read_organized_cloud(cloud_path)?;
    let pgm = cloud_path.with_extension("pgm");
    let image = if pgm.exists() { Some(read_pgm(&pgm)?) } else { None };
    camera_frame(cloud, image, cloud_path)
}

pub fn write_camera_frame(cloud_path: &Path, frame: &CameraFrame) -> Result<(), FormatError> {
    write_organized_cloud(cloud_path, frame)?;
    write_pgm(&cloud_path.with_extension("pgm"), &frame.image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lidar_cloud_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.txt");
        let frame = LidarFrame::from_rings(vec![
            vec![Point3::new(1.0, 0.1, -0.3), Point3::new(1.1, 0.2, -0.3)],
            vec![],
            vec![Point3::new(2.0, 1.0 / 3.0, 0.5)],
        ]);
        write_lidar_cloud(&path, &frame).unwrap();
        let back = read_lidar_cloud(&path).unwrap();
        assert_eq!(back, frame);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# x y z ring intensity\n"));
        assert!(text.contains(" 2 -1\n"));
    }

    #[test]
    fn lidar_rows_need_rings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "# x y z ring intensity\n1 2 3 -1 -1\n").unwrap();
        let err = read_lidar_cloud(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn organized_cloud_and_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cam.txt");
        let image = GrayImage::from_raw(3, 2, vec![0, 10, 20, 30, 40, 255]).unwrap();
        let cloud = vec![
            Some(Point3::new(1.0, 0.0, 0.0)),
            None,
            Some(Point3::new(2.0, -0.5, 0.25)),
            None,
            None,
            Some(Point3::new(3.0, 0.1, 0.2)),
        ];
        let frame = CameraFrame::new(image, cloud).unwrap();
        write_camera_frame(&path, &frame).unwrap();
        assert_eq!(read_camera_frame(&path).unwrap(), frame);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# width 3 height 2\n# x y z ring intensity\n"));
        assert!(text.contains("nan nan nan -1 10\n"));

        std::fs::remove_file(path.with_extension("pgm")).unwrap();
        assert_eq!(read_camera_frame(&path).unwrap(), frame);
    }

    #[test]
    fn pgm_header_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let mut bytes = b"P5\n# made by hand\n2 2\n255\n".to_vec();
        bytes.extend([1, 2, 3, 4]);
        std::fs::write(&path, bytes).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!((img.width, img.height), (2, 2));
        assert_eq!(img.data, vec![1, 2, 3, 4]);
    }

    #[test]
    fn organized_row_count_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.txt");
        std::fs::write(&path, "# width 2 height 2\n# x y z ring intensity\n1 0 0 -1 5\n").unwrap();
        assert!(read_organized_cloud(&path).is_err());
    }
}
