fn main() {
    let stdout = &mut std::io::stdout().lock();
    let stderr = &mut std::io::stderr().lock();
    let code = softirl_tools::cli::run(std::env::args_os(), stdout, stderr);
    std::process::exit(code);
}
