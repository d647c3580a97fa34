fn main() -> std::process::ExitCode {
    vidsteg::cli::main()
}
