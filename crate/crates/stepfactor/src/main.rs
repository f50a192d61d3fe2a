fn main() {
    std::process::exit(stepfactor::cli::dispatch(std::env::args_os()));
}
