fn main() -> std::process::ExitCode {
    nwidth_cli::main_exit()
}
