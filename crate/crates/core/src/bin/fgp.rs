use std::process::ExitCode;

fn main() -> ExitCode {
    let result = std::panic::catch_unwind(|| {
        let (mut out, mut err) = (std::io::stdout().lock(), std::io::stderr().lock());
        fgp::cli::run_cli(std::env::args_os(), &mut out, &mut err)
    });
    // A panic is an internal error; its message is already on stderr.
    ExitCode::from(result.unwrap_or(2) as u8)
}
