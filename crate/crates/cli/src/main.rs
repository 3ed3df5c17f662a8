use clap::Parser;
use revolve_cli::cli::Cli;
use revolve_cli::run::execute;

fn main() {
    let cli = Cli::parse();
    let result = cli.command.config().and_then(|cfg| execute(&cfg));
    match result {
        Ok(summary) => println!("{}", summary.trim_end()),
        Err(e) => {
            eprintln!("revolve: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
