fn main() {
    env_logger::init();
    std::process::exit(sdpopf::cli::run(std::env::args_os()));
}
