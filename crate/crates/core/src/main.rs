fn main() -> std::process::ExitCode {
    crowdner::cli::main()
}
