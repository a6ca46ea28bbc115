fn main() -> std::process::ExitCode {
    hreye::cli::main()
}
