fn main() {
    let code = match dual_cli::load(std::env::args_os()) {
        Ok(cfg) => dual_cli::run(&cfg),
        Err(dual_cli::ConfigError::Args(msg)) => {
            eprint!("{msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    std::process::exit(code);
}
