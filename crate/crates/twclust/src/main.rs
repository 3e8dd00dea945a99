use clap::Parser;

fn main() {
    let cli = twclust::cli::Cli::parse();
    match twclust::cli::run(cli) {
        Ok(summary) => println!("{summary}"),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
