use std::process::ExitCode;

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match geee::cli::run(std::env::args_os(), &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.code == 0 {
                // --help and --version
                print!("{}", e.message);
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", e.message.trim_end());
            ExitCode::from(e.code as u8)
        }
    }
}
