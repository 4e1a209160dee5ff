//! `csib demo`: the particle-cloud descent trajectory and the mode-coverage
//! comparison.

use csib_core::oracle::{demo_cloud_descent, demo_mode_coverage, CloudConfig};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::io::{cell, csv_text, json_line, json_record, write_atomic};
use crate::{DemoArgs, DemoKind};

pub const CLOUD_COLUMNS: [&str; 3] = ["step", "d_cs", "mmd_sq"];

pub fn demo(a: &DemoArgs) -> CliResult<()> {
    match a.kind {
        DemoKind::Cloud => {
            let cfg = CloudConfig {
                steps: a.steps,
                seed: a.seed,
                ..CloudConfig::default()
            };
            let t = demo_cloud_descent(&cfg)?;
            let rows: Vec<Vec<String>> = t
                .steps
                .iter()
                .map(|s| vec![s.step.to_string(), cell(Some(s.d_cs)), cell(Some(s.mmd_sq))])
                .collect();
            let text = csv_text(&CLOUD_COLUMNS, &rows)?;
            match &a.output {
                Some(p) => {
                    write_atomic(p, text.as_bytes())?;
                    let last = t.steps.last().expect("initial step recorded");
                    let summary = json!({
                        "steps": t.steps.len() - 1,
                        "final_d_cs": last.d_cs,
                        "final_mmd_sq": last.mmd_sq,
                        "aborted": t.aborted,
                    });
                    print!("{}", json_line(&json_record(&summary, &[])));
                }
                None => print!("{text}"),
            }
            if let Some(why) = t.aborted {
                return Err(CliError::Infinite(format!("descent stopped: {why}")));
            }
            Ok(())
        }
        DemoKind::Modes => {
            let m = demo_mode_coverage(a.seed, a.steps)?;
            let mut v = json_record(&m, &[]);
            v["passes"] = json!(m.passes());
            let line = json_line(&v);
            if let Some(p) = &a.output {
                write_atomic(p, line.as_bytes())?;
            }
            print!("{line}");
            Ok(())
        }
    }
}
