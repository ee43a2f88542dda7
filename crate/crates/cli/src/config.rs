//! Flat `key = value` configuration files with bracketed sections.
//!
//! Lines are `[section]`, `key = value`, blank, or `#` comments. All numeric
//! parameters are decimal. Parse errors carry line and column.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
    /// Raw text, echoed into run manifests.
    pub raw: String,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(ConfigError {
                        line: lineno + 1,
                        col: line.len(),
                        message: "unterminated section header, expected ']'".into(),
                    });
                };
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(ConfigError {
                        line: lineno + 1,
                        col: 2,
                        message: "empty section name".into(),
                    });
                }
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(ConfigError {
                    line: lineno + 1,
                    col: line.len() - line.trim_start().len() + 1,
                    message: format!("expected 'key = value', got {trimmed:?}"),
                });
            };
            let key = line[..eq].trim();
            if key.is_empty() {
                return Err(ConfigError {
                    line: lineno + 1,
                    col: eq + 1,
                    message: "missing key before '='".into(),
                });
            }
            let value = line[eq + 1..].trim();
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            entries.insert(full, value.to_string());
        }
        Ok(Config { entries, raw: text.to_string() })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> anyhow::Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| anyhow::anyhow!("config key {key}: expected a number, got {v:?}")),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> anyhow::Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| anyhow::anyhow!("config key {key}: expected an integer, got {v:?}")),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> anyhow::Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("yes") | Some("1") => Ok(true),
            Some("false") | Some("no") | Some("0") => Ok(false),
            Some(v) => Err(anyhow::anyhow!("config key {key}: expected a boolean, got {v:?}")),
        }
    }

    /// Comma-separated list of numbers.
    pub fn f64_list(&self, key: &str) -> anyhow::Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let mut out = Vec::new();
        for part in v.split(',') {
            let t = part.trim();
            if t.is_empty() {
                continue;
            }
            out.push(
                t.parse::<f64>()
                    .map_err(|_| anyhow::anyhow!("config key {key}: bad number {t:?}"))?,
            );
        }
        Ok(Some(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_values() {
        let cfg = Config::parse(
            "# comment\n[domain]\ndim = 2\ncells = 64\n\n[solver]\ncfl = 0.4\nflux = rusanov\n",
        )
        .unwrap();
        assert_eq!(cfg.get("domain.dim"), Some("2"));
        assert_eq!(cfg.f64_or("solver.cfl", 0.0).unwrap(), 0.4);
        assert_eq!(cfg.str_or("solver.flux", "x"), "rusanov");
        assert_eq!(cfg.usize_or("domain.cells", 0).unwrap(), 64);
        assert_eq!(cfg.usize_or("missing.key", 7).unwrap(), 7);
    }

    #[test]
    fn reports_line_and_column() {
        let err = Config::parse("[solver]\ncfl 0.4\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("key = value"));

        let err2 = Config::parse("[oops\n").unwrap_err();
        assert_eq!(err2.line, 1);
        assert!(err2.message.contains("']'"));
    }

    #[test]
    fn lists_parse() {
        let cfg = Config::parse("[sweep]\nepsilons = 1e-1, 5e-2, 2.5e-2\n").unwrap();
        assert_eq!(cfg.f64_list("sweep.epsilons").unwrap().unwrap(), vec![0.1, 0.05, 0.025]);
    }
}
