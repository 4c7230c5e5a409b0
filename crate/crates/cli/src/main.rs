use std::path::Path;
use std::process::ExitCode;

const USAGE: &str = "usage: fkloop run <spec-file>";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let file = match args.as_slice() {
        [cmd, file] if cmd == "run" => file,
        [flag] if flag == "-h" || flag == "--help" => {
            println!("{USAGE}");
            return ExitCode::SUCCESS;
        }
        _ => {
            eprintln!("{USAGE}");
            return ExitCode::from(2);
        }
    };
    match fkloop_cli::run_file(Path::new(file)) {
        Ok(outcome) => {
            match &outcome.path {
                Some(p) => eprintln!("wrote {}", p.display()),
                None => print!("{}", outcome.text),
            }
            if !outcome.passed {
                eprintln!("check failed");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
