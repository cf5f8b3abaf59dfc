fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SRLANG_LOG", "warn")).init();
    std::process::exit(srlang::cli::run_from_args(std::env::args_os()));
}
