fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or(monogram_cli::LOG_ENV, "warn"))
        .format_timestamp(None)
        .init();
    std::process::exit(monogram_cli::run(std::env::args_os()));
}
