//! `key: value` records and the run manifest written next to every command's outputs.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

/// Ordered `key: value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record(pub Vec<(String, String)>);

impl Record {
    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.0.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn is_timing(key: &str) -> bool {
        key == "wall_s" || key.ends_with(".wall_s")
    }

    /// Lines that must reproduce exactly.
    pub fn stable(&self) -> Record {
        Record(
            self.0
                .iter()
                .filter(|(k, _)| !Self::is_timing(k))
                .cloned()
                .collect(),
        )
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.0 {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}

/// Everything needed to re-run a command: its arguments, working directory, the
/// configuration it resolved, and what it produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub cwd: PathBuf,
    /// Arguments after the program name.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config: Record,
    pub results: Record,
    pub timings: Record,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# contrastbnb run manifest\n");
        let _ = writeln!(s, "version: {}", self.version);
        let _ = writeln!(s, "command: {}", self.command);
        let _ = writeln!(s, "cwd: {}", self.cwd.display());
        for a in &self.args {
            let _ = writeln!(s, "arg: {a}");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed: {seed}");
        }
        for (k, v) in &self.config.0 {
            let _ = writeln!(s, "config.{k}: {v}");
        }
        for (k, v) in &self.results.0 {
            let _ = writeln!(s, "result.{k}: {v}");
        }
        for o in &self.outputs {
            let _ = writeln!(s, "output: {}", o.display());
        }
        for (k, v) in &self.timings.0 {
            let _ = writeln!(s, "timing.{k}: {v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut m = RunManifest::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(": ")
                .or_else(|| line.strip_suffix(':').map(|k| (k, "")))
                .ok_or_else(|| format!("manifest line {}: expected 'key: value'", i + 1))?;
            match k {
                "version" => m.version = v.to_string(),
                "command" => m.command = v.to_string(),
                "cwd" => m.cwd = PathBuf::from(v),
                "arg" => m.args.push(v.to_string()),
                "seed" => {
                    m.seed = Some(v.parse().map_err(|_| format!("manifest line {}: bad seed", i + 1))?)
                }
                "output" => m.outputs.push(PathBuf::from(v)),
                _ => {
                    if let Some(k) = k.strip_prefix("config.") {
                        m.config.push(k, v);
                    } else if let Some(k) = k.strip_prefix("result.") {
                        m.results.push(k, v);
                    } else if let Some(k) = k.strip_prefix("timing.") {
                        m.timings.push(k, v);
                    } else {
                        return Err(format!("manifest line {}: unknown key '{k}'", i + 1));
                    }
                }
            }
        }
        if m.command.is_empty() {
            return Err("manifest has no command".into());
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }
}

/// `<path>` with `suffix` appended to its file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let mut m = RunManifest {
            version: "0.1.0".into(),
            command: "solve".into(),
            cwd: PathBuf::from("/tmp"),
            args: vec!["solve".into(), "--loss".into(), "sos".into(), "--omega-range".into(), "0.4:0.6".into()],
            seed: Some(7),
            outputs: vec![PathBuf::from("a.txt")],
            ..Default::default()
        };
        m.config.push("f", 200);
        m.results.push("omega_hat", 0.5);
        m.results.push("note", "");
        m.timings.push("wall_s", 0.25);
        assert_eq!(RunManifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn stable_drops_timings() {
        let mut r = Record::default();
        r.push("loss", 3);
        r.push("wall_s", 0.1);
        r.push("bnb.wall_s", 0.1);
        assert_eq!(r.stable().0, vec![("loss".to_string(), "3".to_string())]);
        assert_eq!(r.to_string(), "loss: 3\nwall_s: 0.1\nbnb.wall_s: 0.1\n");
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/ev.txt"), ".run"), PathBuf::from("out/ev.txt.run"));
    }
}
