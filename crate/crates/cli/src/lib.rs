//! Subcommands of the `ropelab` binary.
//!
//! Every subcommand layers a `key = value` config file under its flags,
//! writes a [`manifest::RunManifest`] next to its main artifact before
//! producing anything else, and reports failures through the exit codes in
//! [`exit`].

pub mod commands;
pub mod encoding;
pub mod exit;
pub mod manifest;
pub mod settings;
pub mod toy_run;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ropelab", version, about = "Rotary position encoding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a task dataset as JSON Lines.
    Gen(commands::gen::GenArgs),
    /// Train the toy transformer and write a checkpoint.
    ToyTrain(commands::toy_train::ToyTrainArgs),
    /// Answer a toy-retrieval dataset with a checkpoint.
    ToyEval(commands::toy_eval::ToyEvalArgs),
    /// Score model outputs against a dataset.
    Score(commands::score::ScoreArgs),
    /// Windowed perplexity of a token document.
    Ppl(commands::ppl::PplArgs),
    /// Frequency-basis curves as CSV and SVG.
    BasisPlot(commands::basis_plot::BasisPlotArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen(a) => commands::gen::run(a),
        Command::ToyTrain(a) => commands::toy_train::run(a),
        Command::ToyEval(a) => commands::toy_eval::run(a),
        Command::Score(a) => commands::score::run(a),
        Command::Ppl(a) => commands::ppl::run(a),
        Command::BasisPlot(a) => commands::basis_plot::run(a),
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
