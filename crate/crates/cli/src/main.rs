use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BSS_LOG", "warn")).init();
    let cli = fastmvae_cli::Cli::parse();
    if let Err(e) = fastmvae_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
