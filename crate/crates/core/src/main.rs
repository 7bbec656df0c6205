fn main() {
    std::process::exit(sircap::runner::run_from_args(std::env::args_os()));
}
