fn main() {
    std::process::exit(sipf::cli::dispatch(std::env::args_os()));
}
