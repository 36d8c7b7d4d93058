use clap::Parser;

use offload_aco::cli::{self, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("OFFLOAD_ACO_LOG")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; everything else is a
            // usage error.
            if e.exit_code() == 0 {
                let _ = e.print();
                std::process::exit(0);
            }
            let _ = e.print();
            std::process::exit(1);
        }
    };
    if let Err(e) = cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(cli::exit_code_for(&e));
    }
}
