fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("OCUFUSE_LOG", "warn")).init();
    std::process::exit(ocufuse::cli::run_from_args(std::env::args_os()));
}
