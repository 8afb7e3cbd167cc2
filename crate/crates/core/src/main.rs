fn main() {
    std::process::exit(concept_forge::cli::dispatch(std::env::args_os()));
}
