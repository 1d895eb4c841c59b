use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::CliError;

/// Seventeen significant digits, so values survive a text round trip.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: impl IntoIterator<Item = S>) -> Self {
        let cols: Vec<String> = header.into_iter().map(|s| s.as_ref().to_owned()).collect();
        let mut text = cols.join(",");
        text.push('\n');
        Self {
            text,
            width: cols.len(),
        }
    }

    pub fn row(&mut self, cells: impl IntoIterator<Item = String>) {
        let cells: Vec<String> = cells.into_iter().collect();
        debug_assert_eq!(cells.len(), self.width, "row width");
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Header cells `prefix_0, …, prefix_{d−1}`.
pub fn indexed(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (0..d).map(move |i| format!("{prefix}_{i}"))
}

pub fn nums(xs: &[f64]) -> impl Iterator<Item = String> + '_ {
    xs.iter().map(|&x| num(x))
}

/// Two-column `key,value` table.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary(Csv);

impl Default for Summary {
    fn default() -> Self {
        Self(Csv::new(["key", "value"]))
    }
}

impl Summary {
    pub fn text(&mut self, key: &str, value: impl Into<String>) {
        self.0.row([key.to_owned(), value.into()]);
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.text(key, num(value));
    }

    pub fn count(&mut self, key: &str, value: usize) {
        self.text(key, value.to_string());
    }

    pub fn into_csv(self) -> Csv {
        self.0
    }
}

/// Files produced by a subcommand, held in memory until the run succeeds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub files: Vec<(String, Csv)>,
    pub notices: Vec<String>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, csv: Csv) {
        self.files.push((name.to_owned(), csv));
    }

    pub fn notice(&mut self, msg: impl Into<String>) {
        self.notices.push(msg.into());
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        for (name, csv) in &self.files {
            fs::write(dir.join(name), csv.as_str())?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
