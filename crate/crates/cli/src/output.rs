//! Text output: CSV with `#` comment blocks, and JSON lines.

use std::fmt::Write;

use tsdyn::criteria::BoundConstants;

/// Fixed 17-significant-digit scientific notation.
pub fn number(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header comment block: library version and the resolved configuration.
pub fn header(resolved_toml: &str) -> String {
    let mut out = format!("# tsdyn {}\n", tsdyn::VERSION);
    for line in resolved_toml.lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else {
            let _ = writeln!(out, "# {line}");
        }
    }
    out
}

/// Appends `# name,v1,v2,…` summary rows.
pub fn summary(out: &mut String, name: &str, values: &[f64]) {
    out.push_str("# ");
    out.push_str(name);
    for v in values {
        out.push(',');
        out.push_str(&number(*v));
    }
    out.push('\n');
}

pub fn summary_text(out: &mut String, name: &str, value: &str) {
    // keep each summary on one line
    let clean = value.replace(['\n', '\r'], " ");
    let _ = writeln!(out, "# {name},{clean}");
}

pub fn constants(out: &mut String, c: &BoundConstants) {
    for (name, values) in c.rows() {
        summary(out, name, &values);
    }
}

/// One CSV data row.
pub fn row(out: &mut String, cells: impl IntoIterator<Item = Option<f64>>) {
    let mut first = true;
    for c in cells {
        if !first {
            out.push(',');
        }
        first = false;
        if let Some(v) = c {
            out.push_str(&number(v));
        }
    }
    out.push('\n');
}
