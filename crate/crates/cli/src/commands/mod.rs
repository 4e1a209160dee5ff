//! One module per subcommand.

use csib_core::data::gen_synthetic;

use crate::error::CliResult;
use crate::io::{cell, csv_text, write_atomic};
use crate::{Command, GenerateArgs};

pub mod attack;
pub mod demo;
pub mod estimate;
pub mod run;
pub mod verify;

pub fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Estimate(a) => estimate::estimate(&a),
        Command::Generate(a) => generate(&a),
        Command::Train(a) => run::train(&a),
        Command::Sweep(a) => run::sweep(&a),
        Command::Attack(a) => attack::attack(&a),
        Command::Verify(a) => verify::verify(&a),
        Command::Demo(a) => demo::demo(&a),
    }
}

/// Columns `x1..xd` then `y`, at 12 significant digits.
fn generate(a: &GenerateArgs) -> CliResult<()> {
    let ds = gen_synthetic(a.n, a.d, a.seed)?;
    let mut headers: Vec<String> = (1..=a.d).map(|j| format!("x{j}")).collect();
    headers.push("y".into());
    let rows: Vec<Vec<String>> = (0..ds.len())
        .map(|i| {
            ds.features
                .row(i)
                .iter()
                .chain(ds.targets.row(i))
                .map(|&v| cell(Some(v)))
                .collect()
        })
        .collect();
    let h: Vec<&str> = headers.iter().map(String::as_str).collect();
    write_atomic(&a.output, csv_text(&h, &rows)?.as_bytes())
}
