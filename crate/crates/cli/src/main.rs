fn main() -> std::process::ExitCode {
    lfaa_cli::main_with_args(std::env::args_os())
}
