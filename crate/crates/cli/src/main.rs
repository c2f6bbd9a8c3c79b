fn main() {
    let code = fontpair_cli::run(std::env::args_os());
    std::process::exit(code);
}
