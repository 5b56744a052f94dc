use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = gpr_cli::Cli::parse();
    match gpr_cli::run(&cli) {
        Ok(outcome) => println!("{}", outcome.summary),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
