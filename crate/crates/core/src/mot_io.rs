//! Readers and writers for the text formats the toolkit exchanges.
//!
//! * MOT detections: `frame,id,x,y,w,h,conf[,...]` (id ignored)
//! * MOT ground truth / results: `frame,id,x,y,w,h[,conf,...]`
//! * Results written as `frame,id,x,y,w,h,1,-1,-1,-1`, boxes with two decimals
//! * Feature sidecar: header `D=<dim> count=<n>`, rows `frame,det_index,v1..vD`
//! * Proposals: header `D=<dim> count=<n>`, rows `frame,x,y,w,h,s_spec,s_gen,v1..vD`
//! * Referring annotation JSON with `object`, `attributes`, `other_attributes`, `tracks`
//!
//! Frames are 1-based. `det_index` is the 0-based position of a detection
//! among the accepted detections of its frame, in file order. Numbers are
//! parsed with `.` as the only decimal separator; non-finite values are
//! rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde_json::Value;

use crate::appearance::Feature;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::qgm::Proposal;
use crate::tracker::Detection;

/// Per-frame lists keyed by 1-based frame index.
pub type FrameMap<T> = BTreeMap<u32, Vec<T>>;

/// `(object id, box)` entries of a ground-truth or results file.
pub type TrackFrames = FrameMap<(u64, BBox)>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionFile {
    pub frames: FrameMap<Detection>,
    /// Lines dropped because of a non-positive width or height.
    pub skipped: usize,
}

impl DetectionFile {
    pub fn total(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

/// Non-empty lines with their 1-based line numbers.
fn lines<'a>(path: &'a Path, text: &'a str) -> Lines<'a> {
    Lines {
        path,
        inner: text.lines().enumerate(),
    }
}

impl<'a> Iterator for Lines<'a> {
    type Item = (usize, Vec<&'a str>);

    fn next(&mut self) -> Option<Self::Item> {
        for (i, line) in self.inner.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            return Some((i + 1, line.split(',').map(str::trim).collect()));
        }
        None
    }
}

impl Lines<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        parse_error(self.path, line, msg)
    }
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn num(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_error(path, line, format!("{what}: '{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, format!("{what}: '{field}' is not finite")));
    }
    Ok(v)
}

fn frame_index(path: &Path, line: usize, field: &str) -> Result<u32> {
    let f: u32 = field
        .parse()
        .map_err(|_| parse_error(path, line, format!("frame: '{field}' is not a positive integer")))?;
    if f == 0 {
        return Err(parse_error(path, line, "frame indices are 1-based"));
    }
    Ok(f)
}

fn bbox_fields(path: &Path, line: usize, cols: &[&str]) -> Result<BBox> {
    Ok(BBox::new(
        num(path, line, cols[0], "x")?,
        num(path, line, cols[1], "y")?,
        num(path, line, cols[2], "w")?,
        num(path, line, cols[3], "h")?,
    ))
}

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

/// Read a MOT detection file.
pub fn read_detections(path: impl AsRef<Path>) -> Result<DetectionFile> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut out = DetectionFile::default();
    let mut it = lines(path, &text);
    while let Some((ln, cols)) = it.next() {
        if cols.len() < 7 {
            return Err(it.err(ln, format!("expected at least 7 columns, found {}", cols.len())));
        }
        let frame = frame_index(path, ln, cols[0])?;
        let bbox = bbox_fields(path, ln, &cols[2..6])?;
        let conf = num(path, ln, cols[6], "conf")?;
        if bbox.w <= 0.0 || bbox.h <= 0.0 {
            warn!("{}:{ln}: skipping detection with non-positive size", path.display());
            out.skipped += 1;
            continue;
        }
        out.frames.entry(frame).or_default().push(Detection::new(bbox, conf));
    }
    Ok(out)
}

fn read_track_file(path: &Path, honor_ignore_flag: bool) -> Result<TrackFrames> {
    let text = read_text(path)?;
    let mut out = TrackFrames::new();
    let mut it = lines(path, &text);
    while let Some((ln, cols)) = it.next() {
        if cols.len() < 6 {
            return Err(it.err(ln, format!("expected at least 6 columns, found {}", cols.len())));
        }
        let frame = frame_index(path, ln, cols[0])?;
        let id: u64 = cols[1]
            .parse()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| it.err(ln, format!("id: '{}' is not a positive integer", cols[1])))?;
        let bbox = bbox_fields(path, ln, &cols[2..6])?;
        if honor_ignore_flag && cols.len() >= 7 && num(path, ln, cols[6], "flag")? == 0.0 {
            continue;
        }
        if bbox.w <= 0.0 || bbox.h <= 0.0 {
            warn!("{}:{ln}: skipping box with non-positive size", path.display());
            continue;
        }
        out.entry(frame).or_default().push((id, bbox));
    }
    Ok(out)
}

/// Read ground truth. Rows whose 7th column is 0 are ignore-flagged and dropped.
pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<TrackFrames> {
    read_track_file(path.as_ref(), true)
}

/// Read tracker results.
pub fn read_results(path: impl AsRef<Path>) -> Result<TrackFrames> {
    read_track_file(path.as_ref(), false)
}

fn sorted_rows(outputs: &TrackFrames) -> Vec<(u32, u64, BBox)> {
    let mut rows: Vec<(u32, u64, BBox)> = outputs
        .iter()
        .flat_map(|(&f, v)| v.iter().map(move |&(id, b)| (f, id, b)))
        .collect();
    rows.sort_by_key(|&(f, id, _)| (f, id));
    rows
}

/// Results text: one `frame,id,x,y,w,h,1,-1,-1,-1` line per box, sorted by (frame, id).
pub fn format_results(outputs: &TrackFrames) -> String {
    let mut s = String::new();
    for (f, id, b) in sorted_rows(outputs) {
        let _ = writeln!(s, "{f},{id},{:.2},{:.2},{:.2},{:.2},1,-1,-1,-1", b.x, b.y, b.w, b.h);
    }
    s
}

pub fn write_results(path: impl AsRef<Path>, outputs: &TrackFrames) -> Result<()> {
    Ok(fs::write(path, format_results(outputs))?)
}

/// Ground-truth text in MOT layout: `frame,id,x,y,w,h,1,1,1`.
pub fn format_ground_truth(gt: &TrackFrames) -> String {
    let mut s = String::new();
    for (f, id, b) in sorted_rows(gt) {
        let _ = writeln!(s, "{f},{id},{:.2},{:.2},{:.2},{:.2},1,1,1", b.x, b.y, b.w, b.h);
    }
    s
}

/// Detection text: `frame,-1,x,y,w,h,conf,-1,-1,-1`, frames ascending, file
/// order within a frame.
pub fn format_detections(frames: &FrameMap<Detection>) -> String {
    let mut s = String::new();
    for (f, dets) in frames {
        for d in dets {
            let b = d.bbox;
            let _ = writeln!(s, "{f},-1,{:.2},{:.2},{:.2},{:.2},{},-1,-1,-1", b.x, b.y, b.w, b.h, d.conf);
        }
    }
    s
}

fn parse_header(path: &Path, text: &str) -> Result<(usize, usize, usize)> {
    let (ln, header) = text
        .lines()
        .enumerate()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::Schema(format!("{}: missing 'D=<dim> count=<n>' header", path.display())))?;
    let mut dim = None;
    let mut count = None;
    for tok in header.split_whitespace() {
        match tok.split_once('=') {
            Some(("D", v)) => dim = v.parse::<usize>().ok(),
            Some(("count", v)) => count = v.parse::<usize>().ok(),
            _ => return Err(Error::Schema(format!("{}:{}: unexpected header token '{tok}'", path.display(), ln + 1))),
        }
    }
    match (dim, count) {
        (Some(d), Some(c)) if d > 0 => Ok((d, c, ln + 1)),
        _ => Err(Error::Schema(format!(
            "{}:{}: header must be 'D=<dim> count=<n>' with dim >= 1",
            path.display(),
            ln + 1
        ))),
    }
}

fn body_after(text: &str, header_line: usize) -> String {
    // keep line numbering by blanking the header and anything before it
    text.lines()
        .enumerate()
        .map(|(i, l)| if i < header_line { "" } else { l })
        .collect::<Vec<_>>()
        .join("\n")
}

fn feature_values(path: &Path, ln: usize, cols: &[&str], dim: usize) -> Result<Feature> {
    if cols.len() != dim {
        return Err(Error::Schema(format!(
            "{}:{ln}: row has {} feature values, header declares D={dim}",
            path.display(),
            cols.len()
        )));
    }
    let values = cols
        .iter()
        .map(|c| num(path, ln, c, "feature value"))
        .collect::<Result<Vec<f64>>>()?;
    Feature::new(values).map_err(|e| parse_error(path, ln, e.to_string()))
}

/// Features keyed by `(frame, det_index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub dim: usize,
    pub rows: BTreeMap<(u32, usize), Feature>,
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureFile> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let (dim, count, header_line) = parse_header(path, &text)?;
    let body = body_after(&text, header_line);
    let mut rows = BTreeMap::new();
    let mut it = lines(path, &body);
    while let Some((ln, cols)) = it.next() {
        if cols.len() < 2 {
            return Err(it.err(ln, "expected frame,det_index,values..."));
        }
        let frame = frame_index(path, ln, cols[0])?;
        let idx: usize = cols[1]
            .parse()
            .map_err(|_| it.err(ln, format!("det_index: '{}' is not a non-negative integer", cols[1])))?;
        let feat = feature_values(path, ln, &cols[2..], dim)?;
        if rows.insert((frame, idx), feat).is_some() {
            return Err(Error::Alignment(format!(
                "{}:{ln}: duplicate feature row for frame {frame}, detection {idx}",
                path.display()
            )));
        }
    }
    if rows.len() != count {
        return Err(Error::Schema(format!(
            "{}: header declares count={count} but {} rows were read",
            path.display(),
            rows.len()
        )));
    }
    Ok(FeatureFile { dim, rows })
}

/// Attach sidecar features to detections. Every detection must receive
/// exactly one feature and every feature row must name a detection.
pub fn attach_features(dets: &mut FrameMap<Detection>, feats: &FeatureFile) -> Result<()> {
    for &(frame, idx) in feats.rows.keys() {
        let ok = dets.get(&frame).is_some_and(|v| idx < v.len());
        if !ok {
            return Err(Error::Alignment(format!(
                "feature row (frame {frame}, detection {idx}) has no matching detection"
            )));
        }
    }
    for (&frame, list) in dets.iter_mut() {
        for (idx, d) in list.iter_mut().enumerate() {
            let f = feats.rows.get(&(frame, idx)).ok_or_else(|| {
                Error::Alignment(format!("detection {idx} of frame {frame} has no feature row"))
            })?;
            d.feature = Some(f.clone());
        }
    }
    Ok(())
}

fn format_vector(s: &mut String, v: &[f64]) {
    for x in v {
        let _ = write!(s, ",{x}");
    }
}

/// Sidecar text for every detection that carries a feature.
pub fn format_features(frames: &FrameMap<Detection>) -> Result<String> {
    let rows: Vec<(u32, usize, &Feature)> = frames
        .iter()
        .flat_map(|(&f, v)| v.iter().enumerate().filter_map(move |(i, d)| d.feature.as_ref().map(|x| (f, i, x))))
        .collect();
    let dim = rows.first().map_or(1, |r| r.2.dim());
    if rows.iter().any(|r| r.2.dim() != dim) {
        return Err(Error::invalid("features of mixed dimensions"));
    }
    let mut s = format!("D={dim} count={}\n", rows.len());
    for (f, i, feat) in rows {
        let _ = write!(s, "{f},{i}");
        format_vector(&mut s, feat.as_slice());
        s.push('\n');
    }
    Ok(s)
}

pub fn read_proposals(path: impl AsRef<Path>) -> Result<Vec<Proposal>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let (dim, count, header_line) = parse_header(path, &text)?;
    let body = body_after(&text, header_line);
    let mut out = Vec::with_capacity(count);
    let mut it = lines(path, &body);
    while let Some((ln, cols)) = it.next() {
        if cols.len() < 7 {
            return Err(it.err(ln, format!("expected frame,x,y,w,h,s_spec,s_gen,v1..vD; found {} columns", cols.len())));
        }
        let p = Proposal {
            frame: frame_index(path, ln, cols[0])?,
            bbox: bbox_fields(path, ln, &cols[1..5])?,
            s_spec: num(path, ln, cols[5], "s_spec")?,
            s_gen: num(path, ln, cols[6], "s_gen")?,
            feature: feature_values(path, ln, &cols[7..], dim)?,
        };
        p.validate().map_err(|e| parse_error(path, ln, e.to_string()))?;
        out.push(p);
    }
    if out.len() != count {
        return Err(Error::Schema(format!(
            "{}: header declares count={count} but {} rows were read",
            path.display(),
            out.len()
        )));
    }
    Ok(out)
}

pub fn format_proposals(props: &[Proposal]) -> Result<String> {
    let dim = props.first().map_or(1, |p| p.feature.dim());
    if props.iter().any(|p| p.feature.dim() != dim) {
        return Err(Error::invalid("proposal features of mixed dimensions"));
    }
    let mut s = format!("D={dim} count={}\n", props.len());
    for p in props {
        let b = p.bbox;
        let _ = write!(s, "{},{},{},{},{},{},{}", p.frame, b.x, b.y, b.w, b.h, p.s_spec, p.s_gen);
        format_vector(&mut s, p.feature.as_slice());
        s.push('\n');
    }
    Ok(s)
}

/// Referring annotation for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferAnnotation {
    pub object: String,
    pub attributes: Vec<String>,
    pub other_attributes: Vec<String>,
    /// Ground-truth track file, resolved against the annotation's directory.
    pub tracks: PathBuf,
}

impl ReferAnnotation {
    /// Bare category prompt, e.g. "ball".
    pub fn general_prompt(&self) -> String {
        self.object.clone()
    }

    /// Attributes followed by the category, e.g. "red ball".
    pub fn specific_prompt(&self) -> String {
        let mut words: Vec<&str> = self.attributes.iter().map(String::as_str).collect();
        words.push(&self.object);
        words.join(" ")
    }
}

fn text_list(v: Option<&Value>, key: &str) -> Result<Vec<String>> {
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|i| {
                i.as_str()
                    .map(|s| s.trim().to_string())
                    .ok_or_else(|| Error::Schema(format!("'{key}' entries must be strings")))
            })
            .collect(),
        Some(_) => Err(Error::Schema(format!("'{key}' must be a string or a list of strings"))),
    }
}

pub fn parse_refer_annotation(json: &str, base_dir: &Path) -> Result<ReferAnnotation> {
    let v: Value = serde_json::from_str(json).map_err(|e| Error::Schema(format!("invalid JSON: {e}")))?;
    let obj = v.as_object().ok_or_else(|| Error::Schema("annotation must be a JSON object".into()))?;
    let object = obj
        .get("object")
        .ok_or_else(|| Error::Schema("missing required key 'object'".into()))?
        .as_str()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Schema("'object' must be a non-empty string".into()))?
        .to_string();
    if !obj.contains_key("attributes") {
        return Err(Error::Schema("missing required key 'attributes'".into()));
    }
    let attributes = text_list(obj.get("attributes"), "attributes")?;
    let other_attributes = text_list(obj.get("other_attributes"), "other_attributes")?;
    let tracks = obj
        .get("tracks")
        .ok_or_else(|| Error::Schema("missing required key 'tracks'".into()))?
        .as_str()
        .ok_or_else(|| Error::Schema("'tracks' must be a path string".into()))?;
    Ok(ReferAnnotation {
        object,
        attributes,
        other_attributes,
        tracks: base_dir.join(tracks),
    })
}

pub fn read_refer_annotation(path: impl AsRef<Path>) -> Result<ReferAnnotation> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_refer_annotation(&read_text(path)?, base)
}

/// Everything known about one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBundle {
    pub name: String,
    /// Highest frame index seen in detections or ground truth.
    pub frames: u32,
    pub detections: FrameMap<Detection>,
    pub gt: Option<TrackFrames>,
    pub meta: Option<ReferAnnotation>,
}

impl SequenceBundle {
    /// Load detections (plus optional features and ground truth). Feature
    /// alignment is checked before anything is returned.
    pub fn load(
        name: impl Into<String>,
        det_path: &Path,
        feat_path: Option<&Path>,
        gt_path: Option<&Path>,
    ) -> Result<Self> {
        let mut dets = read_detections(det_path)?;
        if let Some(fp) = feat_path {
            attach_features(&mut dets.frames, &read_features(fp)?)?;
        }
        let gt = gt_path.map(read_ground_truth).transpose()?;
        let frames = dets
            .frames
            .keys()
            .chain(gt.iter().flat_map(|g| g.keys()))
            .copied()
            .max()
            .unwrap_or(0);
        Ok(Self {
            name: name.into(),
            frames,
            detections: dets.frames,
            gt,
            meta: None,
        })
    }
}
