//! Line-oriented manifests for image datasets and videos.
//!
//! Both formats start with a `classes N` directive. Blank lines and lines
//! starting with `#` are ignored. Relative paths resolve against the
//! manifest's directory; paths must not contain whitespace.
//!
//! Image manifest, one sample per line:
//!
//! ```text
//! path labels [domain]        labels: `3` or `3;7`, domain: image | frame
//! ```
//!
//! Video manifest, one video per line:
//!
//! ```text
//! id split labels ts:path,ts:path,... [kf=i,j,...]
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{Dataset, Domain, Entry, ImageSource};
use crate::error::{Error, Result};
use crate::video::{Frame, Split, VideoRecord};

struct LineCtx<'a> {
    path: &'a Path,
    line: usize,
}

impl LineCtx<'_> {
    fn parse(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn invalid(&self, msg: impl Into<String>) -> Error {
        Error::Validation {
            path: self.path.to_path_buf(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn labels(&self, field: &str, class_count: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for tok in field.split(';') {
            let l: usize = tok
                .parse()
                .map_err(|_| self.parse(format!("bad label {tok:?}")))?;
            if l >= class_count {
                return Err(self.invalid(format!("class {l} outside vocabulary of {class_count}")));
            }
            out.push(l);
        }
        Ok(out)
    }

    fn existing_file(&self, base: &Path, rel: &str) -> Result<PathBuf> {
        let p = base.join(rel);
        if !p.is_file() {
            return Err(self.invalid(format!("missing file {}", p.display())));
        }
        Ok(p)
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-comment lines with 1-based numbers, and the declared class count.
fn content_lines(path: &Path, text: &str) -> Result<(Option<usize>, Vec<(usize, String)>)> {
    let mut classes = None;
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ctx = LineCtx { path, line: i + 1 };
        if let Some(rest) = line.strip_prefix("classes") {
            if classes.is_some() {
                return Err(ctx.parse("duplicate classes directive"));
            }
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|_| ctx.parse("classes directive needs a count"))?;
            if n == 0 {
                return Err(ctx.invalid("class vocabulary must be non-empty"));
            }
            classes = Some(n);
            continue;
        }
        if classes.is_none() {
            return Err(ctx.parse("entry before the classes directive"));
        }
        lines.push((i + 1, line.to_string()));
    }
    Ok((classes, lines))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = read_text(path)?;
    let (classes, lines) = content_lines(path, &text)?;
    let base = base_dir(path);
    let class_count = classes.unwrap_or(0);
    let mut entries = Vec::with_capacity(lines.len());
    for (line, content) in lines {
        let ctx = LineCtx { path, line };
        let fields: Vec<&str> = content.split_whitespace().collect();
        let (file, labels, domain) = match fields.as_slice() {
            [f, l] => (*f, *l, Domain::Image),
            [f, l, d] => (
                *f,
                *l,
                Domain::from_tag(d).ok_or_else(|| ctx.parse(format!("unknown domain {d:?}")))?,
            ),
            _ => return Err(ctx.parse("expected `path labels [domain]`")),
        };
        let labels = ctx.labels(labels, class_count)?;
        let file = ctx.existing_file(&base, file)?;
        entries.push(Entry::new(ImageSource::Path(file), labels, domain));
    }
    Ok(Dataset {
        class_count,
        entries,
    })
}

fn relative_path(base: &Path, source: &ImageSource) -> Result<String> {
    let ImageSource::Path(p) = source else {
        return Err(Error::config("in-memory images cannot be written to a manifest"));
    };
    let rel = p.strip_prefix(base).unwrap_or(p);
    let s = rel
        .to_str()
        .ok_or_else(|| Error::config(format!("non-UTF-8 path {}", p.display())))?;
    if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c == ',') {
        return Err(Error::config(format!("path {s:?} cannot be written to a manifest")));
    }
    Ok(s.to_string())
}

fn join_labels(labels: &[usize]) -> String {
    labels.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

pub fn format_manifest(ds: &Dataset, base: &Path) -> Result<String> {
    let mut s = format!("classes {}\n", ds.class_count);
    for e in &ds.entries {
        writeln!(
            s,
            "{} {} {}",
            relative_path(base, &e.source)?,
            join_labels(&e.labels),
            e.domain.tag()
        )
        .unwrap();
    }
    Ok(s)
}

pub fn write_manifest(ds: &Dataset, path: &Path) -> Result<()> {
    let text = format_manifest(ds, &base_dir(path))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_video_manifest(path: &Path) -> Result<(usize, Vec<VideoRecord>)> {
    let text = read_text(path)?;
    let (classes, lines) = content_lines(path, &text)?;
    let base = base_dir(path);
    let class_count = classes.unwrap_or(0);
    let mut videos = Vec::with_capacity(lines.len());
    for (line, content) in lines {
        let ctx = LineCtx { path, line };
        let fields: Vec<&str> = content.split_whitespace().collect();
        let (id, split, labels, frames, kf) = match fields.as_slice() {
            [a, b, c, d] => (*a, *b, *c, *d, None),
            [a, b, c, d, k] => (*a, *b, *c, *d, Some(*k)),
            _ => return Err(ctx.parse("expected `id split labels frames [kf=...]`")),
        };
        let split =
            Split::from_tag(split).ok_or_else(|| ctx.parse(format!("unknown split {split:?}")))?;
        let labels = ctx.labels(labels, class_count)?;
        let mut parsed = Vec::new();
        for item in frames.split(',') {
            let (ts, file) = item
                .split_once(':')
                .ok_or_else(|| ctx.parse(format!("frame {item:?} is not ts:path")))?;
            let timestamp: f64 = ts
                .parse()
                .map_err(|_| ctx.parse(format!("bad timestamp {ts:?}")))?;
            parsed.push(Frame {
                timestamp,
                source: ImageSource::Path(ctx.existing_file(&base, file)?),
            });
        }
        let keyframes = match kf {
            None => None,
            Some(k) => {
                let list = k
                    .strip_prefix("kf=")
                    .ok_or_else(|| ctx.parse(format!("expected kf=..., got {k:?}")))?;
                Some(
                    list.split(',')
                        .map(|t| t.parse().map_err(|_| ctx.parse(format!("bad keyframe {t:?}"))))
                        .collect::<Result<Vec<usize>>>()?,
                )
            }
        };
        let video = VideoRecord::new(id, parsed, labels, split, keyframes)
            .map_err(|e| ctx.invalid(e.to_string()))?;
        videos.push(video);
    }
    Ok((class_count, videos))
}

pub fn format_video_manifest(class_count: usize, videos: &[VideoRecord], base: &Path) -> Result<String> {
    let mut s = format!("classes {class_count}\n");
    for v in videos {
        if v.id.is_empty() || v.id.chars().any(char::is_whitespace) {
            return Err(Error::config(format!("video id {:?} cannot be written", v.id)));
        }
        let frames = v
            .frames
            .iter()
            .map(|f| Ok(format!("{}:{}", f.timestamp, relative_path(base, &f.source)?)))
            .collect::<Result<Vec<_>>>()?
            .join(",");
        write!(s, "{} {} {} {frames}", v.id, v.split.tag(), join_labels(&v.labels)).unwrap();
        if let Some(k) = &v.keyframes {
            let k: Vec<String> = k.iter().map(usize::to_string).collect();
            write!(s, " kf={}", k.join(",")).unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_video_manifest(class_count: usize, videos: &[VideoRecord], path: &Path) -> Result<()> {
    let text = format_video_manifest(class_count, videos, &base_dir(path))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, name: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, b"P6 1 1 255\n\0\0\0").unwrap();
        p
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.txt");
        fs::write(&m, "").unwrap();
        let ds = load_manifest(&m).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn round_trip_preserves_order_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let entries = ["b.ppm", "a.ppm", "c.ppm"]
            .iter()
            .zip([vec![2], vec![0, 1], vec![1]])
            .zip([Domain::Image, Domain::VideoFrame, Domain::Image])
            .map(|((n, l), d)| Entry::new(ImageSource::Path(touch(dir.path(), n)), l, d))
            .collect();
        let ds = Dataset::new(3, entries).unwrap();
        let m = dir.path().join("m.txt");
        write_manifest(&ds, &m).unwrap();
        let back = load_manifest(&m).unwrap();
        assert_eq!(back, ds);
        write_manifest(&back, &m).unwrap();
        assert_eq!(load_manifest(&m).unwrap(), ds);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "a.ppm");
        let m = dir.path().join("m.txt");
        fs::write(&m, "# header\nclasses 2\na.ppm 0\na.ppm 5\n").unwrap();
        match load_manifest(&m) {
            Err(Error::Validation { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        fs::write(&m, "classes 2\na.ppm zero\n").unwrap();
        assert!(matches!(load_manifest(&m), Err(Error::Parse { line: 2, .. })));
        fs::write(&m, "classes 2\nmissing.ppm 0\n").unwrap();
        assert!(matches!(load_manifest(&m), Err(Error::Validation { line: 2, .. })));
        fs::write(&m, "a.ppm 0\n").unwrap();
        assert!(matches!(load_manifest(&m), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn video_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f0 = touch(dir.path(), "f0.ppm");
        let f1 = touch(dir.path(), "f1.ppm");
        let frames = vec![
            Frame { timestamp: 0.0, source: ImageSource::Path(f0) },
            Frame { timestamp: 0.25, source: ImageSource::Path(f1) },
        ];
        let videos = vec![
            VideoRecord::new("v1", frames.clone(), vec![3, 1], Split::Train, None).unwrap(),
            VideoRecord::new("v2", frames, vec![0], Split::Test, Some(vec![1])).unwrap(),
        ];
        let m = dir.path().join("videos.txt");
        write_video_manifest(4, &videos, &m).unwrap();
        let (n, back) = load_video_manifest(&m).unwrap();
        assert_eq!(n, 4);
        assert_eq!(back, videos);
        fs::write(&m, "classes 4\nv1 train 1 0.5:f0.ppm,0.25:f1.ppm\n").unwrap();
        assert!(matches!(load_video_manifest(&m), Err(Error::Validation { line: 2, .. })));
    }
}
