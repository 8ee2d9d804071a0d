//! CSV emission. Every file starts with a schema line; an optional
//! generation-time line follows it and is the only nondeterministic content.

use std::fmt::Display;
use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::Result;
use crate::estimates::{EnergyLemmaReport, LpsReport, SizeEstimateReport, ThreeSpheresReport};
use crate::functionals::{FrequencyReport, WorkReport};
use crate::material::Regime;

pub const SCHEMA_VERSION: &str = "platesize/1";

/// Writes the schema header and, when asked, a timestamp line.
pub fn write_header<W: Write>(out: &mut W, kind: &str, timestamp: bool) -> Result<()> {
    writeln!(out, "# schema: {SCHEMA_VERSION} {kind}")?;
    if timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        writeln!(out, "# generated: {secs}")?;
    }
    Ok(())
}

/// Quantity/value pairs of a report.
pub trait Rows {
    fn rows(&self) -> Vec<(String, String)>;
}

fn row(name: &str, v: impl Display) -> (String, String) {
    (name.to_string(), v.to_string())
}

fn regime(r: Regime) -> &'static str {
    match r {
        Regime::Stiff => "stiff",
        Regime::Soft => "soft",
    }
}

impl Rows for WorkReport {
    fn rows(&self) -> Vec<(String, String)> {
        vec![
            row("W", self.w),
            row("W0", self.w0),
            row("gap", self.gap),
            row("relative_gap", self.relative_gap),
        ]
    }
}

impl Rows for FrequencyReport {
    fn rows(&self) -> Vec<(String, String)> {
        vec![row("norm_half", self.norm_half), row("norm_one", self.norm_one), row("F", self.f)]
    }
}

impl Rows for EnergyLemmaReport {
    fn rows(&self) -> Vec<(String, String)> {
        vec![
            row("regime", regime(self.regime)),
            row("lhs", self.lhs),
            row("mid", self.mid),
            row("mid_boundary", self.mid_boundary),
            row("rhs", self.rhs),
            row("W", self.w),
            row("W0", self.w0),
            row("cross_check", self.cross_check),
            row("lower_slack", self.lower_slack),
            row("upper_slack", self.upper_slack),
            row("lower_pass", self.lower_pass),
            row("upper_pass", self.upper_pass),
            row("sign_consistent", self.sign_consistent),
            row("pass", self.pass()),
        ]
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

impl Rows for SizeEstimateReport {
    fn rows(&self) -> Vec<(String, String)> {
        let mut r = vec![row("area", self.true_area)];
        r.extend(self.work.rows());
        r.push(row("lower", opt(self.bounds.map(|b| b[0]))));
        r.push(row("upper", opt(self.bounds.map(|b| b[1]))));
        r.push(row("C1", opt(self.c1)));
        r.push(row("C2", opt(self.c2)));
        r.push(row("eta", opt(self.jumps.map(|j| j.eta))));
        r.push(row("delta", opt(self.jumps.map(|j| j.delta))));
        r.push(row("regime", self.jumps.map(|j| regime(j.regime)).unwrap_or("none")));
        r.push(row("fatness", self.fatness.ratio));
        r.push(row("F", self.frequency));
        r.push(row("F_override", self.frequency_override));
        r.push(row("sign_consistent", self.sign_consistent));
        r.push(row("lemma_pass", self.lemma.map(|l| l.pass().to_string()).unwrap_or_else(|| "NA".into())));
        r
    }
}

impl Rows for ThreeSpheresReport {
    fn rows(&self) -> Vec<(String, String)> {
        vec![
            row("center_x", self.center.x),
            row("center_y", self.center.y),
            row("rho", self.rho),
            row("theta", self.theta),
            row("outer_radius", self.outer_radius),
            row("I_rho", self.i_rho),
            row("I_3rho", self.i_3rho),
            row("I_outer", self.i_outer),
            row("tau_raw", opt(self.tau_raw)),
            row("tau", opt(self.tau)),
            row("C", opt(self.c)),
            row("status", format!("{:?}", self.status).to_lowercase()),
            row("holds", self.holds),
        ]
    }
}

impl Rows for LpsReport {
    fn rows(&self) -> Vec<(String, String)> {
        vec![
            row("rho", self.rho),
            row("theta", self.theta),
            row("pitch", self.pitch),
            row("centers", self.centers.len()),
            row("total", self.total),
            row("C_rho", self.min_ratio),
            row("argmin_x", self.argmin.x),
            row("argmin_y", self.argmin.y),
        ]
    }
}

/// `experiment,quantity,value` rows.
pub fn write_rows<W: Write>(out: &mut W, experiment: &str, rows: &[(String, String)]) -> Result<()> {
    for (q, v) in rows {
        writeln!(out, "{experiment},{q},{v}")?;
    }
    Ok(())
}

/// Header plus rows of one report.
pub fn write_report<W: Write>(mut out: W, kind: &str, experiment: &str, report: &dyn Rows, timestamp: bool) -> Result<()> {
    write_header(&mut out, kind, timestamp)?;
    writeln!(out, "experiment,quantity,value")?;
    write_rows(&mut out, experiment, &report.rows())
}

/// One row per experiment of a corpus.
pub fn write_corpus<W: Write>(mut out: W, reports: &[SizeEstimateReport], timestamp: bool) -> Result<()> {
    write_header(&mut out, "corpus", timestamp)?;
    writeln!(out, "id,area,W0,W,gap,lower,upper,fatness,F,lemma_pass")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.id,
            r.true_area,
            r.work.w0,
            r.work.w,
            r.work.gap,
            opt(r.bounds.map(|b| b[0])),
            opt(r.bounds.map(|b| b[1])),
            r.fatness.ratio,
            r.frequency,
            r.lemma.map(|l| l.pass().to_string()).unwrap_or_else(|| "NA".into()),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_rows() {
        let mut buf = Vec::new();
        write_report(&mut buf, "work", "e1", &WorkReport::new(1.0, 1.5), false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# schema: {SCHEMA_VERSION} work"));
        assert_eq!(lines[1], "experiment,quantity,value");
        assert_eq!(lines[4], "e1,gap,0.5");
    }

    #[test]
    fn deterministic_without_timestamp() {
        let r = WorkReport::new(0.1, 0.3);
        let run = |ts| {
            let mut b = Vec::new();
            write_report(&mut b, "work", "x", &r, ts).unwrap();
            b
        };
        assert_eq!(run(false), run(false));
        let with = String::from_utf8(run(true)).unwrap();
        assert!(with.lines().nth(1).unwrap().starts_with("# generated: "));
    }
}
