fn main() {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = contrastbnb_cli::run_from_args(std::env::args(), &mut stdout.lock(), &mut stderr.lock());
    std::process::exit(code);
}
