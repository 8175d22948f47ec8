use std::io::Write;

fn main() {
    let outcome = qidlaw_cli::execute(std::env::args_os());
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(&outcome.stdout);
    let _ = stdout.flush();
    let mut stderr = std::io::stderr().lock();
    for line in &outcome.diagnostics {
        let _ = writeln!(stderr, "{line}");
    }
    std::process::exit(outcome.exit_code);
}
