use serde_json::{json, Map, Value};

use maxwalk::walk::PRNG_ID;

use crate::cli::Format;

/// A finished report: header, JSON body, CSV table and verdict.
pub struct Report {
    pub command: &'static str,
    pub config: Map<String, Value>,
    /// Numeric mode of each reported field: exact, float or estimate.
    pub modes: Vec<(&'static str, &'static str)>,
    pub body: Value,
    pub csv_header: String,
    pub csv_rows: Vec<String>,
    pub passed: bool,
    pub default_format: Format,
}

impl Report {
    pub fn new(command: &'static str, default_format: Format) -> Self {
        Self {
            command,
            config: Map::new(),
            modes: Vec::new(),
            body: Value::Null,
            csv_header: String::new(),
            csv_rows: Vec::new(),
            passed: true,
            default_format,
        }
    }

    pub fn config(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.config.insert(key.to_string(), value.into());
        self
    }

    pub fn render(&self, format: Option<Format>) -> String {
        let modes: Map<String, Value> = self
            .modes
            .iter()
            .map(|(field, mode)| (field.to_string(), Value::from(*mode)))
            .collect();
        let verdict = if self.passed { "pass" } else { "fail" };
        match format.unwrap_or(self.default_format) {
            Format::Json => {
                let doc = json!({
                    "header": {
                        "tool": "maxwalk",
                        "version": env!("CARGO_PKG_VERSION"),
                        "prng": PRNG_ID,
                        "command": self.command,
                        "config": self.config,
                        "modes": modes,
                    },
                    "report": self.body,
                    "verdict": verdict,
                });
                let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
                text.push('\n');
                text
            }
            Format::Csv => {
                let mut out = String::new();
                out.push_str(&format!("# tool: maxwalk {}\n", env!("CARGO_PKG_VERSION")));
                out.push_str(&format!("# prng: {PRNG_ID}\n"));
                out.push_str(&format!("# command: {}\n", self.command));
                let config: Vec<String> = self.config.iter().map(|(k, v)| format!("{k}={}", plain(v))).collect();
                out.push_str(&format!("# config: {}\n", config.join(" ")));
                let modes: Vec<String> = self.modes.iter().map(|(f, m)| format!("{f}={m}")).collect();
                out.push_str(&format!("# modes: {}\n", modes.join(" ")));
                out.push_str(&format!("# verdict: {verdict}\n"));
                out.push_str(&self.csv_header);
                out.push('\n');
                for row in &self.csv_rows {
                    out.push_str(row);
                    out.push('\n');
                }
                out
            }
        }
    }
}

fn plain(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
