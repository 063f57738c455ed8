fn main() -> std::process::ExitCode {
    posthoc_ood::cli::main()
}
