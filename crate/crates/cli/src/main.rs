fn main() -> std::process::ExitCode {
    csib::run()
}
