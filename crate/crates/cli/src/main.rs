fn main() {
    std::process::exit(ctrend::run(std::env::args_os()));
}
