//! Plain CSV with a header row, LF endings and 17 significant digits, so a
//! written file reads back bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Spatial table: index, r, then one column per field.
pub fn nodal_table(nodes: &[f64], columns: &[(&str, &[f64])]) -> String {
    let mut out = String::from("index,r");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, r) in nodes.iter().enumerate() {
        write!(out, "{i},{}", fmt_f64(*r)).unwrap();
        for (_, col) in columns {
            write!(out, ",{}", fmt_f64(col[i])).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Non-spatial series: index, then one column per series (shorter ones padded with NaN).
pub fn series_table(columns: &[(&str, &[f64])]) -> String {
    let mut out = String::from("index");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let len = columns.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for i in 0..len {
        write!(out, "{i}").unwrap();
        for (_, col) in columns {
            write!(out, ",{}", fmt_f64(col.get(i).copied().unwrap_or(f64::NAN))).unwrap();
        }
        out.push('\n');
    }
    out
}

/// A nodal table read back: r and the first value column.
pub struct NodalField {
    pub r: Vec<f64>,
    pub value: Vec<f64>,
}

pub fn read_nodal(path: &Path) -> Result<NodalField, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format!("{}: empty file", path.display()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "index" || cols[1] != "r" {
        return Err(format!("{}: header must start with index,r,value", path.display()));
    }
    let (mut r, mut value) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 3 {
            return Err(format!("{} row {}: expected at least 3 columns", path.display(), k + 2));
        }
        let idx: usize = f[0].trim().parse().map_err(|_| format!("{} row {}: bad index", path.display(), k + 2))?;
        if idx != r.len() {
            return Err(format!("{} row {}: index {idx} out of sequence", path.display(), k + 2));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("{} row {}: bad number `{s}`", path.display(), k + 2));
        r.push(num(f[1])?);
        value.push(num(f[2])?);
    }
    Ok(NodalField { r, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let nodes = [1.0, 1.1, 1.2];
        let vals = [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-17];
        let text = nodal_table(&nodes, &[("value", &vals)]);
        let dir = std::env::temp_dir().join(format!("yamabe-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("t.csv");
        std::fs::write(&p, &text).unwrap();
        let back = read_nodal(&p).unwrap();
        assert_eq!(back.value, vals);
        assert_eq!(back.r, nodes);
        assert!(!text.contains('\r'));
        std::fs::remove_dir_all(&dir).ok();
    }
}
