use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = hocsearch::cli::Cli::parse();
    match hocsearch::cli::run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
