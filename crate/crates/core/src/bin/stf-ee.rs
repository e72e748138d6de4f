fn main() {
    std::process::exit(stf_ee::cli::dispatch(std::env::args_os()));
}
