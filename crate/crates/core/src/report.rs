//! On-disk artifacts of evaluation runs.
//!
//! Every file opens with a `# fingerprint=<hex>` line; CSV readers skip `#`
//! lines. Floats are written in shortest round-trip form.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::env::ScenarioKind;
use crate::error::{Error, Result};
use crate::eval::{AggregateReport, EpisodeMetrics, TrajectoryRow};
use crate::policy::Architecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

fn create_with_preamble(path: &Path, fingerprint: &str) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "# fingerprint={fingerprint}").map_err(|e| Error::io(path, e))?;
    Ok(f)
}

fn write_rows<T: Serialize>(path: &Path, fingerprint: &str, rows: &[T]) -> Result<()> {
    let file = create_with_preamble(path, fingerprint)?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Column order: episode_id, seed, scenario, n_sections, architecture, success,
/// episode_length, final_distance, mean_action_magnitude, settling_steps.
pub fn write_episodes_csv(path: &Path, fingerprint: &str, rows: &[EpisodeMetrics]) -> Result<()> {
    write_rows(path, fingerprint, rows)
}

/// Header plus rows, as written by [`write_episodes_csv`] without the preamble.
pub fn episodes_csv_string(rows: &[EpisodeMetrics]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    read_rows(path)
}

pub fn write_aggregate_csv(path: &Path, fingerprint: &str, reports: &[AggregateReport]) -> Result<()> {
    write_rows(path, fingerprint, reports)
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateReport>> {
    read_rows(path)
}

pub fn write_json(
    path: &Path,
    fingerprint: &str,
    reports: &[AggregateReport],
    episodes: &[EpisodeMetrics],
) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        fingerprint: &'a str,
        aggregates: &'a [AggregateReport],
        episodes: &'a [EpisodeMetrics],
    }
    let text = serde_json::to_string_pretty(&Doc {
        fingerprint,
        aggregates: reports,
        episodes,
    })
    .expect("report serialises");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One table per scenario: rows are metric × architecture, columns ascending n.
pub fn render_markdown(reports: &[AggregateReport], fingerprint: &str) -> String {
    let mut out = String::new();
    let scenarios: BTreeSet<ScenarioKind> = reports.iter().map(|r| r.scenario).collect();
    for scenario in scenarios {
        let cells: Vec<&AggregateReport> = reports.iter().filter(|r| r.scenario == scenario).collect();
        let ns: BTreeSet<usize> = cells.iter().map(|r| r.n_sections).collect();
        let archs: BTreeSet<Architecture> = cells.iter().map(|r| r.architecture).collect();
        let lookup = |a: Architecture, n: usize| cells.iter().find(|r| r.architecture == a && r.n_sections == n);

        out.push_str(&format!("### Scenario {}: {}\n\n", scenario.number(), scenario.name()));
        out.push_str("| Metric | Policy |");
        for n in &ns {
            out.push_str(&format!(" n={n} |"));
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|".repeat(ns.len()));
        out.push('\n');

        type Cell = fn(&AggregateReport) -> Option<String>;
        let mut metrics: Vec<(&str, Cell)> = vec![
            ("Mean action magnitude (N)", |r| {
                Some(format!("{:.2}", r.mean_action_magnitude))
            }),
            ("Final distance (m)", |r| {
                Some(format!("{:.4} ± {:.4}", r.mean_final_distance, r.std_final_distance))
            }),
            ("Episode length (steps)", |r| {
                Some(format!("{:.1} ± {:.1}", r.mean_episode_length, r.std_episode_length))
            }),
            ("Success rate (%)", |r| Some(format!("{:.2}", r.success_rate))),
        ];
        if scenario == ScenarioKind::Disturbance {
            metrics.push(("Settling steps", |r| r.mean_settling_steps.map(|s| format!("{s:.1}"))));
        }
        for (label, cell) in metrics {
            for &a in &archs {
                out.push_str(&format!("| {label} | {} |", a.label()));
                for &n in &ns {
                    let text = lookup(a, n).and_then(|r| cell(r)).unwrap_or_else(|| "n/a".into());
                    out.push_str(&format!(" {text} |"));
                }
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "fingerprint: `{fingerprint}`. Action magnitude is the per-step L2 norm of the applied 3n-dim force vector, averaged over the episode.\n"
    ));
    out
}

pub fn write_markdown(path: &Path, fingerprint: &str, reports: &[AggregateReport]) -> Result<()> {
    let mut f = create_with_preamble(path, fingerprint).map(std::io::BufWriter::new)?;
    f.write_all(render_markdown(reports, fingerprint).as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

/// Rows: step, time_s, tip_x, tip_y, tip_z, tip_distance, then f{i}_{x,y,z} per agent.
pub fn write_trajectory_csv(path: &Path, fingerprint: &str, rows: &[TrajectoryRow]) -> Result<()> {
    let file = create_with_preamble(path, fingerprint)?;
    let mut w = csv::Writer::from_writer(file);
    let n_agents = rows.first().map_or(0, |r| r.forces.len() / 3);
    let mut header: Vec<String> = ["step", "time_s", "tip_x", "tip_y", "tip_z", "tip_distance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 0..n_agents {
        header.extend(["x", "y", "z"].iter().map(|c| format!("f{i}_{c}")));
    }
    let err = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![
            r.step.to_string(),
            r.time_s.to_string(),
            r.tip.x.to_string(),
            r.tip.y.to_string(),
            r.tip.z.to_string(),
            r.tip_distance.to_string(),
        ];
        rec.extend(r.forces.iter().map(f64::to_string));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn emit_report(
    dir: &Path,
    fingerprint: &str,
    reports: &[AggregateReport],
    episodes: &[EpisodeMetrics],
    formats: &[Format],
) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::config("nothing to report"));
    }
    for f in formats {
        match f {
            Format::Csv => {
                write_aggregate_csv(&dir.join("aggregate.csv"), fingerprint, reports)?;
                write_episodes_csv(&dir.join("episodes.csv"), fingerprint, episodes)?;
            }
            Format::Json => write_json(&dir.join("report.json"), fingerprint, reports, episodes)?,
            Format::Markdown => write_markdown(&dir.join("report.md"), fingerprint, reports)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(arch: Architecture, n: usize) -> AggregateReport {
        AggregateReport {
            architecture: arch,
            n_sections: n,
            scenario: ScenarioKind::Nominal,
            episodes: 100,
            successes: 73,
            success_rate: 73.0,
            mean_action_magnitude: 21.1 + n as f64 / 3.0,
            mean_final_distance: 0.1 / 3.0,
            std_final_distance: 0.01,
            mean_episode_length: 1000.0,
            std_episode_length: 0.0,
            mean_settling_steps: None,
            fingerprint: "abc".into(),
        }
    }

    #[test]
    fn single_cell_table() {
        let md = render_markdown(&[report(Architecture::Centralised, 6)], "abc");
        let rows: Vec<&str> = md
            .lines()
            .filter(|l| l.starts_with("| ") && !l.starts_with("| Metric"))
            .collect();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.matches(" |").count() == 3));
        assert!(md.contains("1000.0 ± 0.0"));
    }

    #[test]
    fn columns_ascend() {
        let md = render_markdown(
            &[
                report(Architecture::Distributed, 12),
                report(Architecture::Centralised, 2),
                report(Architecture::Distributed, 6),
            ],
            "abc",
        );
        let header = md.lines().find(|l| l.starts_with("| Metric")).unwrap();
        assert_eq!(header, "| Metric | Policy | n=2 | n=6 | n=12 |");
        assert!(md.contains("n/a"));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agg.csv");
        let mut reports = vec![
            report(Architecture::Centralised, 2),
            report(Architecture::Distributed, 8),
        ];
        reports[1].mean_settling_steps = Some(123.456789012345);
        reports[1].scenario = ScenarioKind::Disturbance;
        write_aggregate_csv(&path, "abc", &reports).unwrap();
        assert!(std::fs::read_to_string(&path)
            .unwrap()
            .starts_with("# fingerprint=abc\n"));
        assert_eq!(read_aggregate_csv(&path).unwrap(), reports);
    }
}
