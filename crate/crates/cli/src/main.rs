fn main() -> std::process::ExitCode {
    levelset_cli::run()
}
