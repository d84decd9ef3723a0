fn main() {
    let code = radvid_cli::cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
