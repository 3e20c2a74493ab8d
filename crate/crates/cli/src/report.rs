//! Score merging and summary tables.

use std::collections::BTreeMap;
use std::io::Write;

use xling_core::evalsts::{delta_row, fmt_delta, write_before_after_csv, SuiteScores, FIN_STS, KOR_FIN_STS, SUITES};

use crate::error::CliError;

/// One line of `eval_results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub suite: String,
    pub n_pairs: usize,
    pub spearman_before: f64,
    pub spearman_after: f64,
    pub pearson_before: f64,
    pub pearson_after: f64,
}

pub const EVAL_HEADER: &str = "model,suite,n_pairs,spearman_before,spearman_after,pearson_before,pearson_after";

/// Values are written in shortest round-trip form so the report reads back
/// exactly what eval computed.
pub fn write_eval_results<W: Write>(mut out: W, rows: &[EvalRow]) -> std::io::Result<()> {
    writeln!(out, "{EVAL_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.model, r.suite, r.n_pairs, r.spearman_before, r.spearman_after, r.pearson_before, r.pearson_after
        )?;
    }
    Ok(())
}

/// Splits a simple CSV (no quoting) into header-checked records.
fn records<'a>(text: &'a str, what: &str, header: &[&str]) -> Result<Vec<(usize, Vec<&'a str>)>, CliError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, head)) = lines.next() else {
        return Err(CliError::data(format!("{what}: empty file")));
    };
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    if cols.len() < header.len() || cols[..header.len()] != *header {
        return Err(CliError::data(format!(
            "{what}: header must start with `{}`, got `{head}`",
            header.join(",")
        )));
    }
    lines
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(CliError::data(format!(
                    "{what} line {}: expected {} fields, got {}",
                    i + 1,
                    cols.len(),
                    fields.len()
                )));
            }
            Ok((i + 1, fields))
        })
        .collect()
}

fn number(what: &str, line: usize, field: &str, value: &str) -> Result<f64, CliError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::data(format!("{what} line {line}: {field} `{value}` is not a finite number")))
}

/// Before/after Spearman scores per model, in first-seen model order.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    rows: Vec<(String, SuiteScores, SuiteScores)>,
}

impl ScoreTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn models(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.0.as_str()).collect()
    }

    pub fn insert(&mut self, model: &str, suite: &str, before: f64, after: f64) -> Result<(), CliError> {
        let idx = match self.rows.iter().position(|r| r.0 == model) {
            Some(i) => i,
            None => {
                self.rows.push((model.to_string(), SuiteScores::new(), SuiteScores::new()));
                self.rows.len() - 1
            }
        };
        let row = &mut self.rows[idx];
        if row.1.contains_key(suite) {
            return Err(CliError::data(format!("duplicate scores for model `{model}` on suite `{suite}`")));
        }
        row.1.insert(suite.to_string(), before);
        row.2.insert(suite.to_string(), after);
        Ok(())
    }

    pub fn merge_eval_results(&mut self, bytes: &[u8]) -> Result<(), CliError> {
        let what = crate::run::EVAL_RESULTS;
        let text = std::str::from_utf8(bytes).map_err(|_| CliError::data(format!("{what} is not UTF-8")))?;
        let header: Vec<&str> = EVAL_HEADER.split(',').collect();
        for (line, f) in records(text, what, &header)? {
            let before = number(what, line, "spearman_before", f[3])?;
            let after = number(what, line, "spearman_after", f[4])?;
            self.insert(f[0], f[1], before, after)?;
        }
        Ok(())
    }

    /// External scores: `model,suite,before,after`.
    pub fn merge_external(&mut self, bytes: &[u8]) -> Result<(), CliError> {
        let what = "external scores";
        let text = std::str::from_utf8(bytes).map_err(|_| CliError::data(format!("{what} are not UTF-8")))?;
        for (line, f) in records(text, what, &["model", "suite", "before", "after"])? {
            let before = number(what, line, "before", f[2])?;
            let after = number(what, line, "after", f[3])?;
            self.insert(f[0], f[1], before, after)
                .map_err(|e| e.context(&format!("{what} line {line}")))?;
        }
        Ok(())
    }

    /// Known suites first, then any others in name order.
    fn suites(&self) -> Vec<String> {
        let mut extra: Vec<String> = self
            .rows
            .iter()
            .flat_map(|r| r.1.keys())
            .filter(|s| !SUITES.contains(&s.as_str()))
            .cloned()
            .collect();
        extra.sort();
        extra.dedup();
        SUITES
            .iter()
            .filter(|s| self.rows.iter().any(|r| r.1.contains_key(**s)))
            .map(|s| s.to_string())
            .chain(extra)
            .collect()
    }

    pub fn write_rho_table<W: Write>(&self, out: W) -> std::io::Result<()> {
        let suites = self.suites();
        let refs: Vec<&str> = suites.iter().map(String::as_str).collect();
        write_before_after_csv(out, &self.rows, &refs)
    }

    /// `model,delta_FinSTS,delta_KorFinSTS,mean_delta[,korean_token_pct]`.
    /// Models lacking either financial suite get empty delta cells rather
    /// than failing the whole report.
    pub fn write_delta_table<W: Write>(&self, mut out: W, coverage: Option<&CoverageTable>) -> std::io::Result<()> {
        write!(out, "model,delta_{FIN_STS},delta_{KOR_FIN_STS},mean_delta")?;
        if coverage.is_some() {
            write!(out, ",korean_token_pct")?;
        }
        writeln!(out)?;
        for (model, before, after) in &self.rows {
            match delta_row(model, before, after) {
                Ok(r) => write!(
                    out,
                    "{model},{},{},{}",
                    fmt_delta(r.delta_fin),
                    fmt_delta(r.delta_kor_fin),
                    fmt_delta(r.mean_delta)
                )?,
                Err(_) => {
                    let d = |s: &str| match (before.get(s), after.get(s)) {
                        (Some(b), Some(a)) => fmt_delta(a - b),
                        _ => String::new(),
                    };
                    write!(out, "{model},{},{},", d(FIN_STS), d(KOR_FIN_STS))?
                }
            }
            if let Some(cov) = coverage {
                match cov.get(model) {
                    Some(c) => write!(out, ",{}", c.pct)?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub vocab_size: u64,
    pub korean_token_count: u64,
    /// Kept as written so the summary repeats the audit's rounding.
    pub pct: String,
}

pub type CoverageTable = BTreeMap<String, CoverageRow>;

pub fn parse_coverage(bytes: &[u8]) -> Result<CoverageTable, CliError> {
    let what = crate::run::COVERAGE;
    let text = std::str::from_utf8(bytes).map_err(|_| CliError::data(format!("{what} is not UTF-8")))?;
    let header = ["model", "vocab_size", "korean_token_count", "korean_token_pct"];
    let mut table = CoverageTable::new();
    for (line, f) in records(text, what, &header)? {
        let int = |field: &str, v: &str| {
            v.parse::<u64>()
                .map_err(|_| CliError::data(format!("{what} line {line}: {field} `{v}` is not an integer")))
        };
        number(what, line, "korean_token_pct", f[3])?;
        let row = CoverageRow {
            vocab_size: int("vocab_size", f[1])?,
            korean_token_count: int("korean_token_count", f[2])?,
            pct: f[3].to_string(),
        };
        if table.insert(f[0].to_string(), row).is_some() {
            return Err(CliError::data(format!("{what} line {line}: duplicate model `{}`", f[0])));
        }
    }
    Ok(table)
}

/// Coverage sorted by percentage, highest first; ties by model name.
pub fn write_coverage_table<W: Write>(mut out: W, table: &CoverageTable) -> std::io::Result<()> {
    let mut rows: Vec<(&String, &CoverageRow)> = table.iter().collect();
    let pct = |r: &CoverageRow| r.pct.parse::<f64>().unwrap_or(0.0);
    rows.sort_by(|a, b| pct(b.1).total_cmp(&pct(a.1)).then_with(|| a.0.cmp(b.0)));
    writeln!(out, "rank,model,vocab_size,korean_token_count,korean_token_pct")?;
    for (i, (model, r)) in rows.iter().enumerate() {
        writeln!(out, "{},{model},{},{},{}", i + 1, r.vocab_size, r.korean_token_count, r.pct)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
        let mut b = Vec::new();
        f(&mut b).unwrap();
        String::from_utf8(b).unwrap()
    }

    #[test]
    fn missing_financial_suite_leaves_blank_cells() {
        let mut t = ScoreTable::default();
        t.merge_external(b"model,suite,before,after\nm,FinSTS,0.5,0.4\nm,STS,0.7,0.8\n").unwrap();
        let s = csv(|b| t.write_delta_table(b, None));
        assert_eq!(s, "model,delta_FinSTS,delta_KorFinSTS,mean_delta\nm,-0.1000,,\n");
    }

    #[test]
    fn eval_results_round_trip_exactly() {
        let rows = vec![EvalRow {
            model: "m".into(),
            suite: "FinSTS".into(),
            n_pairs: 3,
            spearman_before: 0.1 + 0.2,
            spearman_after: 1.0 / 3.0,
            pearson_before: 0.0,
            pearson_after: 0.5,
        }];
        let bytes = csv(|b| write_eval_results(b, &rows));
        let mut t = ScoreTable::default();
        t.merge_eval_results(bytes.as_bytes()).unwrap();
        assert_eq!(t.rows[0].1["FinSTS"], 0.1 + 0.2);
        assert_eq!(t.rows[0].2["FinSTS"], 1.0 / 3.0);
    }

    #[test]
    fn duplicates_and_bad_numbers_are_data_errors() {
        let mut t = ScoreTable::default();
        let e = t
            .merge_external(b"model,suite,before,after\nm,FinSTS,0.5,0.4\nm,FinSTS,0.5,0.4\n")
            .unwrap_err();
        assert!(e.message.contains("line 3"), "{}", e.message);
        let e = ScoreTable::default()
            .merge_external(b"model,suite,before,after\nm,FinSTS,x,0.4\n")
            .unwrap_err();
        assert_eq!(e.kind.exit_code(), 3);
        assert!(ScoreTable::default().merge_external(b"model,suite\n").is_err());
    }

    #[test]
    fn coverage_summary_ranks_by_percentage() {
        let t = parse_coverage(b"model,vocab_size,korean_token_count,korean_token_pct\na,100,1,1.00\nb,100,5,5.00\n").unwrap();
        let s = csv(|b| write_coverage_table(b, &t));
        assert_eq!(
            s,
            "rank,model,vocab_size,korean_token_count,korean_token_pct\n1,b,100,5,5.00\n2,a,100,1,1.00\n"
        );
    }
}
