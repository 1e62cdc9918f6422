fn main() {
    std::process::exit(gw::run(std::env::args_os()));
}
