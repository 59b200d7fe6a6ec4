//! Run configuration: flat `key = value` lines grouped under `[section]`
//! headers. `#` starts a comment. Every key is optional except the geometry
//! block's `n`, `r0`, `r1` and `nodes`.
//!
//! ```text
//! [geometry]
//! n = 3
//! r0 = 1.0
//! r1 = 2.0
//! nodes = 4001
//! factor = flat                  # flat | power:k | gauss:A,s,rc | fourier:c1,c2,.. | a*b
//! factor_table = v.csv           # optional (r, v) table multiplied into the factor
//! precondition = gauss:0.2,0.1,1.5   # optional extra conformal factor
//! potential = gauss:-20,0.2,1.5  # flat-frame potential: zero | const:c + gauss:A,s,rc
//! h_inner = 1.0                  # flat-frame boundary mean curvatures (default -1/r0, 1/r1)
//! h_outer = 0.5
//!
//! [case]
//! mode = auto                    # auto | zero | negative | positive
//! lambda = -0.6                  # negative class only; default eta1/2
//!
//! [targets]                      # used by `verify` when no report is present
//! lambda = 0
//! zeta = 0
//!
//! [solver]
//! tol = 1e-9
//! max_iter = 20000
//! tau0 = -0.05
//! steps = 8
//! seed = 7
//! restarts = 3
//!
//! [output]
//! dir = out
//! formats = csv,json
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use yamabe_lab::geometry::{FactorSpec, FlatFrame, GeometrySpec, MonotoneCubic};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError { line: Some(line), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseMode {
    Auto,
    Zero,
    Negative,
    Positive,
}

impl CaseMode {
    pub fn parse(s: &str) -> Option<CaseMode> {
        match s {
            "auto" => Some(CaseMode::Auto),
            "zero" => Some(CaseMode::Zero),
            "negative" => Some(CaseMode::Negative),
            "positive" => Some(CaseMode::Positive),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub mode: CaseMode,
    pub lambda: Option<f64>,
    pub target_lambda: Option<f64>,
    pub target_zeta: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub tau0: f64,
    pub steps: usize,
    pub seed: u64,
    pub restarts: usize,
    pub out_dir: PathBuf,
    pub write_csv: bool,
    pub write_json: bool,
    /// every key as written, for the report
    pub echo: BTreeMap<String, String>,
}

const KEYS: &[(&str, &[&str])] = &[
    ("geometry", &["n", "r0", "r1", "nodes", "factor", "factor_table", "precondition", "potential", "h_inner", "h_outer"]),
    ("case", &["mode", "lambda"]),
    ("targets", &["lambda", "zeta"]),
    ("solver", &["tol", "max_iter", "tau0", "steps", "seed", "restarts"]),
    ("output", &["dir", "formats"]),
];

struct Entry {
    value: String,
    line: usize,
}

struct Raw {
    entries: BTreeMap<(String, String), Entry>,
    last_line: usize,
}

impl Raw {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn required(&self, section: &str, key: &str) -> Result<&Entry, ConfigError> {
        self.get(section, key).ok_or_else(|| err(self.last_line, format!("missing required key `{key}` in [{section}]")))
    }

    fn required_number<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<(T, usize), ConfigError> {
        self.required(section, key)?;
        Ok(self.number(section, key)?.expect("present"))
    }

    fn number<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<(T, usize)>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(|v| Some((v, e.line)))
                .map_err(|_| err(e.line, format!("`{key}` must be a number, got `{}`", e.value))),
        }
    }
}

fn tokenize(text: &str) -> Result<Raw, ConfigError> {
    let mut entries = BTreeMap::new();
    let mut section: Option<String> = None;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| err(line, "unterminated section header"))?.trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(err(line, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| err(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.clone().ok_or_else(|| err(line, "key outside any section"))?;
        let allowed = KEYS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(err(line, format!("unknown key `{key}` in [{sec}]")));
        }
        if value.is_empty() {
            return Err(err(line, format!("empty value for `{key}`")));
        }
        if entries.insert((sec.clone(), key.to_string()), Entry { value: value.to_string(), line }).is_some() {
            return Err(err(line, format!("duplicate key `{key}` in [{sec}]")));
        }
    }
    Ok(Raw { entries, last_line })
}

/// Reads a two-column (r, v) CSV with a header row.
pub fn read_factor_table(path: &Path) -> Result<MonotoneCubic, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("{} row {}: bad number `{s}`", path.display(), i + 1));
        if cols.len() < 2 {
            return Err(format!("{} row {}: expected r,v", path.display(), i + 1));
        }
        xs.push(parse(cols[0])?);
        ys.push(parse(cols[1])?);
    }
    MonotoneCubic::new(xs, ys).map_err(|e| format!("{}: {e}", path.display()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::parse(&text, &base)
    }

    /// Parses config text; relative file references resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
        let raw = tokenize(text)?;
        let (n, n_line) = raw.required_number::<usize>("geometry", "n")?;
        if n < 3 {
            return Err(err(n_line, "n must be at least 3"));
        }
        let (r0, r0_line) = raw.required_number::<f64>("geometry", "r0")?;
        let (r1, r1_line) = raw.required_number::<f64>("geometry", "r1")?;
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(err(r0_line, "r0 must be positive"));
        }
        if !(r1 > r0 && r1.is_finite()) {
            return Err(err(r1_line, "r1 must exceed r0"));
        }
        let (nodes, nodes_line) = raw.required_number::<usize>("geometry", "nodes")?;
        if nodes < 5 {
            return Err(err(nodes_line, "nodes must be at least 5"));
        }
        let parse_factor = |key: &str| -> Result<Option<FactorSpec>, ConfigError> {
            match raw.get("geometry", key) {
                None => Ok(None),
                Some(e) => FactorSpec::parse(&e.value).map(Some).map_err(|x| err(e.line, x.to_string())),
            }
        };
        let mut factor = parse_factor("factor")?.unwrap_or(FactorSpec::Flat);
        let mut extras = Vec::new();
        if let Some(e) = raw.get("geometry", "factor_table") {
            let p = base.join(&e.value);
            if !p.exists() {
                return Err(err(e.line, format!("factor table {} does not exist", p.display())));
            }
            let tab = read_factor_table(&p).map_err(|m| err(e.line, m))?;
            let (lo, hi) = tab.range();
            if lo > r0 || hi < r1 {
                return Err(err(e.line, format!("factor table covers [{lo}, {hi}], domain is [{r0}, {r1}]")));
            }
            extras.push(FactorSpec::Table(tab));
        }
        if let Some(p) = parse_factor("precondition")? {
            extras.push(p);
        }
        if !extras.is_empty() {
            let mut all = vec![factor];
            all.extend(extras);
            factor = FactorSpec::Product(all);
        }
        let potential = match raw.get("geometry", "potential") {
            None => vec![],
            Some(e) => FlatFrame::parse_potential(&e.value).map_err(|x| err(e.line, x.to_string()))?,
        };
        let h_inner = raw.number::<f64>("geometry", "h_inner")?.map(|x| x.0);
        let h_outer = raw.number::<f64>("geometry", "h_outer")?.map(|x| x.0);
        let geometry = GeometrySpec { n, r0, r1, num_nodes: nodes, factor, frame: FlatFrame { potential, h_inner, h_outer } };
        // factor positivity and the like are checked by building once
        if let Err(e) = geometry.with_nodes(nodes.min(65)).build() {
            return Err(err(nodes_line, format!("geometry rejected: {e}")));
        }

        let mode = match raw.get("case", "mode") {
            None => CaseMode::Auto,
            Some(e) => CaseMode::parse(&e.value)
                .ok_or_else(|| err(e.line, format!("mode must be auto|zero|negative|positive, got `{}`", e.value)))?,
        };
        let lambda = raw.number::<f64>("case", "lambda")?.map(|x| x.0);
        let target_lambda = raw.number::<f64>("targets", "lambda")?.map(|x| x.0);
        let target_zeta = raw.number::<f64>("targets", "zeta")?.map(|x| x.0);
        if let Some((z, line)) = raw.number::<f64>("targets", "zeta")? {
            if z < 0.0 {
                return Err(err(line, "target zeta must be >= 0"));
            }
        }

        let tol = match raw.number::<f64>("solver", "tol")? {
            Some((t, line)) if !(t > 0.0 && t < 1.0) => return Err(err(line, "tol must lie in (0, 1)")),
            Some((t, _)) => t,
            None => 1e-9,
        };
        let max_iter = match raw.number::<usize>("solver", "max_iter")? {
            Some((0, line)) => return Err(err(line, "max_iter must be positive")),
            Some((m, _)) => m,
            None => 20000,
        };
        let tau0 = match raw.number::<f64>("solver", "tau0")? {
            Some((t, line)) if !(t < 0.0 && t.is_finite()) => return Err(err(line, "tau0 must be negative")),
            Some((t, _)) => t,
            None => -0.05,
        };
        let steps = match raw.number::<usize>("solver", "steps")? {
            Some((0, line)) => return Err(err(line, "steps must be positive")),
            Some((s, _)) => s,
            None => 8,
        };
        let seed = raw.number::<u64>("solver", "seed")?.map(|x| x.0).unwrap_or(7);
        let restarts = raw.number::<usize>("solver", "restarts")?.map(|x| x.0).unwrap_or(3);

        let out_dir = raw.get("output", "dir").map(|e| base.join(&e.value)).unwrap_or_else(|| base.join("out"));
        let (mut write_csv, mut write_json) = (true, true);
        if let Some(e) = raw.get("output", "formats") {
            write_csv = false;
            write_json = false;
            for f in e.value.split(',').map(str::trim) {
                match f {
                    "csv" => write_csv = true,
                    "json" => write_json = true,
                    other => return Err(err(e.line, format!("unknown output format `{other}`"))),
                }
            }
        }
        let echo = raw.entries.iter().map(|((s, k), e)| (format!("{s}.{k}"), e.value.clone())).collect();
        Ok(RunConfig {
            geometry,
            mode,
            lambda,
            target_lambda,
            target_zeta,
            tol,
            max_iter,
            tau0,
            steps,
            seed,
            restarts,
            out_dir,
            write_csv,
            write_json,
            echo,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[geometry]\nn = 3\nr0 = 1\nr1 = 2\nnodes = 101\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::parse(BASE, Path::new(".")).unwrap();
        assert_eq!(c.geometry.num_nodes, 101);
        assert_eq!(c.mode, CaseMode::Auto);
        assert_eq!(c.tol, 1e-9);
        assert!(c.write_csv && c.write_json);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = format!("{BASE}\n[solver]\ntol = -1\n");
        let e = RunConfig::parse(&text, Path::new(".")).unwrap_err();
        assert_eq!(e.line, Some(8));
        let e = RunConfig::parse("[geometry]\nn = 3\nbogus = 1\n", Path::new(".")).unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = RunConfig::parse("[geometry]\nn = x\n", Path::new(".")).unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = RunConfig::parse(&format!("{BASE}[weird]\n"), Path::new(".")).unwrap_err();
        assert_eq!(e.line, Some(6));
    }

    #[test]
    fn missing_table_is_rejected() {
        let text = format!("{BASE}factor_table = /nonexistent/v.csv\n");
        let e = RunConfig::parse(&text, Path::new(".")).unwrap_err();
        assert_eq!(e.line, Some(6));
        assert!(e.message.contains("does not exist"));
    }

    #[test]
    fn precondition_multiplies_factor() {
        let text = format!("{BASE}factor = power:1\nprecondition = gauss:0.1,0.2,1.5\n");
        let c = RunConfig::parse(&text, Path::new(".")).unwrap();
        assert!(matches!(c.geometry.factor, FactorSpec::Product(ref v) if v.len() == 2));
    }
}
