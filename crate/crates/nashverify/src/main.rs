use clap::Parser;

fn main() {
    let cli = nashverify::cli::Cli::parse();
    if let Err(e) = nashverify::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(i32::from(e.exit_code()));
    }
}
