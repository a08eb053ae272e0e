fn main() {
    std::process::exit(softgait::run_cli(std::env::args_os()));
}
