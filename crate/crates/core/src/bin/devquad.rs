fn main() {
    env_logger::init();
    std::process::exit(devquad::cli::run(std::env::args_os()));
}
