fn main() {
    let code = observatory::cli::dispatch(std::env::args_os());
    std::process::exit(code);
}
