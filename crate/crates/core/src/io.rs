//! Text formats: event files, rig configuration and window-sequence manifests.
//!
//! Event files hold one `t_us x y p` record per line (integer microseconds, pixel
//! coordinates, polarity bit); `#` lines are comments, some of which carry metadata:
//! `# gt omega=<rad/s> v=<m/s>` and `# window t_ref=<s> dt=<s>`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::event::{Event, EventError, EventWindow, GridSpec, Polarity};
use crate::warp::{AckermannWarp, CameraIntrinsics, MotionParams, RigGeometry, WarpError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Warp(#[from] WarpError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Metadata carried in event-file comments.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EventHeader {
    pub gt: Option<MotionParams>,
    /// `(t_ref, dt)` in seconds.
    pub window: Option<(f64, f64)>,
}

fn key_values(s: &str) -> impl Iterator<Item = (&str, &str)> {
    s.split_whitespace().filter_map(|kv| kv.split_once('='))
}

fn parse_header_line(body: &str, header: &mut EventHeader, line: usize) -> Result<(), IoError> {
    let body = body.trim();
    let (tag, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
    let num = |v: &str| {
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| parse_err(line, format!("bad number '{v}'")))
    };
    match tag {
        "gt" => {
            let mut gt = MotionParams::default();
            let (mut seen_w, mut seen_v) = (false, false);
            for (k, v) in key_values(rest) {
                match k {
                    "omega" => (gt.omega, seen_w) = (num(v)?, true),
                    "v" => (gt.v, seen_v) = (num(v)?, true),
                    _ => {}
                }
            }
            if !(seen_w && seen_v) {
                return Err(parse_err(line, "gt header needs omega= and v="));
            }
            header.gt = Some(gt);
        }
        "window" => {
            let (mut t_ref, mut dt) = (None, None);
            for (k, v) in key_values(rest) {
                match k {
                    "t_ref" => t_ref = Some(num(v)?),
                    "dt" => dt = Some(num(v)?),
                    _ => {}
                }
            }
            match (t_ref, dt) {
                (Some(a), Some(b)) => header.window = Some((a, b)),
                _ => return Err(parse_err(line, "window header needs t_ref= and dt=")),
            }
        }
        _ => {}
    }
    Ok(())
}

/// Parses an event file; events keep file order.
pub fn read_events<R: BufRead>(reader: R) -> Result<(Vec<Event>, EventHeader), IoError> {
    let mut events = Vec::new();
    let mut header = EventHeader::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(body) = trimmed.strip_prefix('#') {
            parse_header_line(body, &mut header, line_no)?;
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(line_no, format!("expected 't_us x y p', got {} fields", fields.len())));
        }
        let t_us: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad timestamp '{}'", fields[0])))?;
        let coord = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(line_no, format!("bad coordinate '{s}'")))
        };
        let (x, y) = (coord(fields[1])?, coord(fields[2])?);
        let polarity = match fields[3] {
            "0" => Polarity::Negative,
            "1" => Polarity::Positive,
            other => return Err(parse_err(line_no, format!("polarity must be 0 or 1, got '{other}'"))),
        };
        events.push(Event::new(x, y, t_us as f64 / 1e6, polarity));
    }
    Ok((events, header))
}

pub fn read_events_file(path: &Path) -> Result<(Vec<Event>, EventHeader), IoError> {
    let f = std::fs::File::open(path)?;
    read_events(std::io::BufReader::new(f))
}

fn format_coord(out: &mut String, v: f64) {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        let _ = write!(out, "{}", v as i64);
    } else {
        let _ = write!(out, "{v}");
    }
}

/// Writes header comments followed by one `t_us x y p` line per event.
pub fn write_events<W: Write>(mut w: W, events: &[Event], header: &EventHeader) -> Result<(), IoError> {
    let mut out = String::with_capacity(24 * events.len() + 64);
    if let Some(gt) = header.gt {
        let _ = writeln!(out, "# gt omega={} v={}", gt.omega, gt.v);
    }
    if let Some((t_ref, dt)) = header.window {
        let _ = writeln!(out, "# window t_ref={t_ref} dt={dt}");
    }
    for e in events {
        let _ = write!(out, "{} ", (e.t * 1e6).round() as u64);
        format_coord(&mut out, e.x);
        out.push(' ');
        format_coord(&mut out, e.y);
        let _ = writeln!(out, " {}", e.polarity.bit());
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_events_file(path: &Path, events: &[Event], header: &EventHeader) -> Result<(), IoError> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_events(&mut w, events, header)?;
    w.flush()?;
    Ok(())
}

/// Turns parsed events into a window: the header's window if present, otherwise `fallback_dt`
/// (or the event span) starting at the first event.
pub fn window_from_file(
    events: Vec<Event>,
    header: &EventHeader,
    fallback_dt: Option<f64>,
) -> Result<EventWindow, IoError> {
    let (t_ref, dt) = match header.window {
        Some(w) => w,
        None => {
            let first = events.first().map_or(0.0, |e| e.t);
            let last = events.last().map_or(0.0, |e| e.t);
            let span = events.iter().map(|e| e.t).fold(last, f64::max) - first;
            (first, fallback_dt.unwrap_or(if span > 0.0 { span } else { 1e-6 }))
        }
    };
    Ok(EventWindow::from_unsorted(events, t_ref, dt)?)
}

/// Camera intrinsics, rig geometry and sensor size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigConfig {
    pub f: f64,
    pub u0: f64,
    pub v0: f64,
    pub s: f64,
    pub d: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            f: 200.0,
            u0: 173.0,
            v0: 130.0,
            s: -0.45,
            d: 0.23,
            width: 346,
            height: 260,
        }
    }
}

impl RigConfig {
    pub fn warp(&self) -> Result<AckermannWarp, WarpError> {
        Ok(AckermannWarp::new(
            CameraIntrinsics::new(self.f, self.u0, self.v0)?,
            RigGeometry::new(self.s, self.d)?,
        ))
    }

    pub fn sensor(&self) -> GridSpec {
        GridSpec::sensor(self.width, self.height)
    }

    /// Applies one `key value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let num = || {
            value
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("bad value '{value}' for {key}"))
        };
        let size = || {
            value
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| format!("bad value '{value}' for {key}"))
        };
        match key {
            "f" => self.f = num()?,
            "u0" => self.u0 = num()?,
            "v0" => self.v0 = num()?,
            "s" => self.s = num()?,
            "d" => self.d = num()?,
            "width" => self.width = size()?,
            "height" => self.height = size()?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Parses `key = value` lines (also `key: value` or `key value`); `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(['=', ':'])
                .or_else(|| line.split_once(char::is_whitespace))
                .ok_or_else(|| parse_err(i + 1, format!("expected 'key = value', got '{line}'")))?;
            cfg.set(k.trim(), v.trim()).map_err(|m| parse_err(i + 1, m))?;
        }
        cfg.warp()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        format!(
            "f = {}\nu0 = {}\nv0 = {}\ns = {}\nd = {}\nwidth = {}\nheight = {}\n",
            self.f, self.u0, self.v0, self.s, self.d, self.width, self.height
        )
    }
}

/// One line of a window-sequence manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub index: usize,
    pub file: String,
    pub t_ref: f64,
    pub dt: f64,
}

/// Parses `window_index file t_ref dt` lines.
pub fn read_manifest(text: &str) -> Result<Vec<ManifestEntry>, IoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(parse_err(i + 1, "expected 'window_index file t_ref dt'"));
        }
        let bad = |what: &str| parse_err(i + 1, format!("bad {what}"));
        out.push(ManifestEntry {
            index: f[0].parse().map_err(|_| bad("window index"))?,
            file: f[1].to_string(),
            t_ref: f[2].parse().map_err(|_| bad("t_ref"))?,
            dt: f[3].parse().map_err(|_| bad("dt"))?,
        });
    }
    Ok(out)
}

pub fn write_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(s, "{} {} {} {}", e.index, e.file, e.t_ref, e.dt);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_round_trip() {
        let events = vec![
            Event::new(10.0, 20.0, 0.000_001, Polarity::Positive),
            Event::new(10.25, 3.0, 0.05, Polarity::Negative),
            Event::new(345.0, 259.0, 0.1, Polarity::Positive),
        ];
        let header = EventHeader {
            gt: Some(MotionParams::new(0.5, 0.5)),
            window: Some((0.0, 0.1)),
        };
        let mut buf = Vec::new();
        write_events(&mut buf, &events, &header).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "# gt omega=0.5 v=0.5\n# window t_ref=0 dt=0.1\n1 10 20 1\n50000 10.25 3 0\n100000 345 259 1\n"
        );
        let (back, h) = read_events(&buf[..]).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, events);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("# comment\n12 1 2\n", 2),
            ("1 2 3 1\n-5 1 2 1\n", 2),
            ("1 2 3 7\n", 1),
            ("1 x 3 1\n", 1),
            ("# gt omega=0.5\n", 1),
        ];
        for (text, line) in cases {
            match read_events(text.as_bytes()) {
                Err(IoError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn window_fallbacks() {
        let (events, h) = read_events("1000 1 1 1\n41000 2 2 0\n".as_bytes()).unwrap();
        let w = window_from_file(events.clone(), &h, None).unwrap();
        assert_eq!(w.t_ref(), 0.001);
        assert!((w.duration() - 0.04).abs() < 1e-12);
        let w = window_from_file(events, &h, Some(0.1)).unwrap();
        assert_eq!(w.duration(), 0.1);
    }

    #[test]
    fn rig_config_round_trip() {
        let cfg = RigConfig {
            f: 250.5,
            d: 2.0,
            ..Default::default()
        };
        assert_eq!(RigConfig::parse(&cfg.to_text()).unwrap(), cfg);
        let mixed = RigConfig::parse("# rig\nf: 300\nd 1.5\nwidth=640 # sensor\n").unwrap();
        assert_eq!((mixed.f, mixed.d, mixed.width, mixed.height), (300.0, 1.5, 640, 260));
        assert!(RigConfig::parse("zoom = 2\n").is_err());
        assert!(RigConfig::parse("d = 0\n").is_err());
        assert!(RigConfig::parse("width = -3\n").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let entries = vec![
            ManifestEntry { index: 0, file: "seq.w000.txt".into(), t_ref: 0.0, dt: 0.1 },
            ManifestEntry { index: 1, file: "seq.w001.txt".into(), t_ref: 0.1, dt: 0.1 },
        ];
        let text = write_manifest(&entries);
        assert_eq!(text, "0 seq.w000.txt 0 0.1\n1 seq.w001.txt 0.1 0.1\n");
        assert_eq!(read_manifest(&text).unwrap(), entries);
        assert!(read_manifest("0 a.txt 0\n").is_err());
    }
}
