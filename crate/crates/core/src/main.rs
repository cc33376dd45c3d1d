mod cli;

use clap::Parser;

fn main() -> anyhow::Result<()> {
    cli::main_with(cli::Cli::parse())
}
