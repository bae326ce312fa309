//! Artifacts: CSV with `#` provenance lines, JSON with a `provenance` object.
//! Without `--out` everything goes to stdout.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

pub struct Provenance {
    pub command: String,
    pub settings: Vec<(String, String)>,
}

impl Provenance {
    fn lines(&self) -> Vec<String> {
        let mut out = vec![
            // The inner `#` keeps these lines comments once the header is stripped
            // back into a config file.
            format!("# bergman-lab {}", env!("CARGO_PKG_VERSION")),
            format!("# threads = {}", rayon::current_num_threads()),
            format!("command = {}", self.command),
        ];
        out.extend(
            self.settings
                .iter()
                .filter(|(k, _)| k != "command")
                .map(|(k, v)| format!("{k} = {v}")),
        );
        out
    }

    fn json(&self) -> Value {
        let mut settings = serde_json::Map::new();
        settings.insert("command".into(), json!(self.command));
        for (k, v) in &self.settings {
            if k != "command" {
                settings.insert(k.clone(), json!(v));
            }
        }
        json!({
            "tool": format!("bergman-lab {}", env!("CARGO_PKG_VERSION")),
            "threads": rayon::current_num_threads(),
            "settings": settings,
        })
    }
}

pub struct Sink {
    dir: Option<PathBuf>,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> anyhow::Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self { dir, written: Vec::new() })
    }

    fn emit(&mut self, name: &str, text: &str) -> anyhow::Result<()> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                fs::write(&path, text)?;
                self.written.push(path);
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                out.flush()?;
            }
        }
        Ok(())
    }

    pub fn csv(&mut self, name: &str, prov: &Provenance, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
        let mut text = String::new();
        for l in prov.lines() {
            text.push_str("# ");
            text.push_str(&l);
            text.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        text.push_str(std::str::from_utf8(&w.into_inner()?)?);
        self.emit(&format!("{name}.csv"), &text)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, prov: &Provenance, result: &T) -> anyhow::Result<()> {
        let doc = json!({ "provenance": prov.json(), "result": result });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        self.emit(&format!("{name}.json"), &text)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Shortest round-trip formatting.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
