use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cwd = match std::env::current_dir() {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: cannot read current directory: {e}");
            return ExitCode::from(1);
        }
    };
    let code = crushpool::cli::main_with(&argv, &cwd, &mut io::stdout(), &mut io::stderr());
    ExitCode::from(code as u8)
}
