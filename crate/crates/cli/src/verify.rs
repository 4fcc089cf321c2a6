//! `verify`: run one named verification suite.

use rr_replay::verify::{CheckReport, Suite};

use crate::CliError;

pub fn cmd_verify(suite: &str, seeds: Option<usize>) -> Result<CheckReport, CliError> {
    let suite: Suite = suite.parse().map_err(|_| {
        let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
        CliError::Usage(format!(
            "unknown suite '{suite}' (expected one of {})",
            names.join(", ")
        ))
    })?;
    Ok(suite.run(seeds)?)
}

pub fn render(report: &CheckReport) -> String {
    let mut out = String::new();
    for line in &report.lines {
        out.push_str(line);
        out.push('\n');
    }
    for (name, value) in &report.metrics {
        out.push_str(&format!("{name} = {value}\n"));
    }
    out.push_str(&format!(
        "{}: {}\n",
        report.suite,
        if report.passed { "PASS" } else { "FAIL" }
    ));
    out
}
