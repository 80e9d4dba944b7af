use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// A comma-separated table with `#` header comments.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(comments: &[&str], columns: &[&str]) -> Self {
        let mut text = String::new();
        for c in comments {
            let _ = writeln!(text, "# {c}");
        }
        let _ = writeln!(text, "{}", columns.join(","));
        Csv { text }
    }

    pub fn row(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn text_row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, &self.text)
    }
}

/// `key = value` lines.
#[derive(Default)]
pub struct Summary {
    text: String,
}

impl Summary {
    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key} = {value}");
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.put(key, format!("{value:?}"));
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, &self.text)
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(path)?;
        Ok(OutDir(path.to_path_buf()))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}
