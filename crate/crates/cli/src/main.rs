fn main() {
    let code = fin_equity_cli::run(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
