fn main() {
    std::process::exit(synspec::cli::dispatch(std::env::args_os()));
}
