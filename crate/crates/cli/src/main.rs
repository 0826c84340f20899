fn main() {
    let code = qmoves::dispatch(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
