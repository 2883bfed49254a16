fn main() -> std::process::ExitCode {
    ngram_flux::cli::main()
}
