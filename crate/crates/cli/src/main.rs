use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match catmfpca_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => e.exit(),
    };
    let mut stdout = std::io::stdout().lock();
    match catmfpca_cli::run(cli, &mut stdout) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", catmfpca_cli::error_line(&e));
            ExitCode::from(catmfpca_cli::exit_code(&e) as u8)
        }
    }
}
