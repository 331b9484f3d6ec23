fn main() {
    std::process::exit(satrecon_cli::run(std::env::args_os()));
}
