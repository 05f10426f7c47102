//! Experiment reports: a CSV file, a console table and per-run traces.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use surrogate_pgd::model::ModelParams;

/// Outcome of one method on one seed.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Value(f64),
    Failed(String),
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            Cell::Failed(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    /// One cell per seed, in the order of [`Report::seeds`].
    pub cells: Vec<Cell>,
}

impl ReportRow {
    /// Mean over the seeds that succeeded.
    pub fn mean(&self) -> Option<f64> {
        let vals: Vec<f64> = self.cells.iter().filter_map(Cell::value).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// Line-delimited records of one optimization run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub name: String,
    pub lines: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub experiment: String,
    /// What the numbers in the rows are.
    pub value_label: String,
    /// Free-form protocol notes, written as comment lines.
    pub notes: Vec<String>,
    pub seeds: Vec<u64>,
    pub rows: Vec<ReportRow>,
    pub traces: Vec<Trace>,
    pub models: Vec<(String, ModelParams)>,
}

fn fmt_value(v: f64) -> String {
    v.to_string()
}

fn fmt_short(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

impl Report {
    pub fn row(&self, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// The report as CSV, without the timestamp line. Failed cells read
    /// `failed`; the reasons are listed as trailing comment lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# experiment: {}", self.experiment);
        let _ = writeln!(out, "# values: {}", self.value_label);
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        out.push_str("method,mean");
        for s in &self.seeds {
            let _ = write!(out, ",seed_{s}");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.method);
            out.push(',');
            out.push_str(&r.mean().map_or("failed".into(), fmt_value));
            for c in &r.cells {
                out.push(',');
                out.push_str(&c.value().map_or("failed".into(), fmt_value));
            }
            out.push('\n');
        }
        for r in &self.rows {
            for (s, c) in self.seeds.iter().zip(&r.cells) {
                if let Cell::Failed(why) = c {
                    let _ = writeln!(out, "# failed: {} seed {s}: {}", r.method, why.replace('\n', " "));
                }
            }
        }
        out
    }

    /// Aligned plain-text table for the console.
    pub fn table(&self) -> String {
        let mut header = vec!["method".to_string(), "mean".to_string()];
        header.extend(self.seeds.iter().map(|s| format!("seed {s}")));
        let mut body: Vec<Vec<String>> = vec![header];
        for r in &self.rows {
            let mut line = vec![r.method.clone(), r.mean().map_or("failed".into(), fmt_short)];
            line.extend(r.cells.iter().map(|c| c.value().map_or("failed".into(), fmt_short)));
            body.push(line);
        }
        let cols = body[0].len();
        let widths: Vec<usize> = (0..cols).map(|c| body.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
        let mut out = format!("{} ({})\n", self.experiment, self.value_label);
        for (i, line) in body.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
                out.push('\n');
            }
        }
        out
    }

    /// Writes `report.csv`, one `trace_<name>.jsonl` per trace and one
    /// `model_<name>.txt` checkpoint per model into `dir`. The CSV starts
    /// with a `# generated_at` line; everything else is deterministic.
    pub fn write(&self, dir: &Path, generated_at: u64) -> io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("report.csv");
        fs::write(&path, format!("# generated_at: {generated_at}\n{}", self.to_csv()))?;
        for t in &self.traces {
            let mut text = t.lines.join("\n");
            text.push('\n');
            fs::write(dir.join(format!("trace_{}.jsonl", t.name)), text)?;
        }
        for (name, m) in &self.models {
            fs::write(dir.join(format!("model_{name}.txt")), m.to_checkpoint())?;
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            experiment: "demo".into(),
            value_label: "test loss".into(),
            notes: vec!["note".into()],
            seeds: vec![0, 1],
            rows: vec![
                ReportRow {
                    method: "a".into(),
                    cells: vec![Cell::Value(0.25), Cell::Value(0.75)],
                },
                ReportRow {
                    method: "b".into(),
                    cells: vec![Cell::Value(0.5), Cell::Failed("boom".into())],
                },
            ],
            traces: vec![],
            models: vec![],
        }
    }

    #[test]
    fn csv_layout() {
        let csv = sample().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[3], "method,mean,seed_0,seed_1");
        assert_eq!(lines[4], "a,0.5,0.25,0.75");
        assert_eq!(lines[5], "b,0.5,0.5,failed");
        assert_eq!(lines[6], "# failed: b seed 1: boom");
    }

    #[test]
    fn table_is_aligned() {
        let t = sample().table();
        let lens: Vec<usize> = t.lines().skip(1).filter(|l| !l.starts_with('-')).map(str::len).collect();
        assert!(lens.windows(2).all(|w| w[0] == w[1]), "{t}");
    }

    #[test]
    fn write_prefixes_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let path = sample().write(dir.path(), 42).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert!(text.starts_with("# generated_at: 42\n# experiment: demo\n"));
    }
}
