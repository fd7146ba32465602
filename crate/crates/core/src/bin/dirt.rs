fn main() -> std::process::ExitCode {
    dyadic_irt::cli::main()
}
