use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::args::{Cli, Command};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct RunConfig<'a> {
    version: &'static str,
    threads: usize,
    effective_threads: usize,
    #[serde(flatten)]
    command: &'a Command,
}

/// Resolved configuration as one JSON object.
pub fn config_json(cli: &Cli) -> serde_json::Value {
    serde_json::to_value(RunConfig {
        version: VERSION,
        threads: cli.threads,
        effective_threads: rayon::current_num_threads(),
        command: &cli.command,
    })
    .expect("configuration serialises")
}

fn shell_quote(arg: &str) -> String {
    let plain = !arg.is_empty()
        && arg
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_=.,:/+@%".contains(c));
    if plain {
        arg.to_string()
    } else {
        format!("'{}'", arg.replace('\'', r"'\''"))
    }
}

/// Comment lines (without the leading `# `) identifying a run.
pub fn header_lines(cli: &Cli, command_line: &[String]) -> Vec<String> {
    let argv: Vec<String> = command_line.iter().map(|a| shell_quote(a)).collect();
    vec![
        format!("nwidth {VERSION}"),
        format!("argv: nwidth {}", argv.join(" ")),
        format!("config: {}", config_json(cli)),
    ]
}

pub fn comment_block(lines: &[String]) -> String {
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

pub fn write_text(path: &Path, text: &str) -> io::Result<()> {
    if path.as_os_str() == "-" {
        let mut out = io::stdout().lock();
        out.write_all(text.as_bytes())?;
        out.flush()
    } else {
        fs::write(path, text)
    }
}

pub fn read_text(path: &Path) -> io::Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting() {
        assert_eq!(shell_quote("family=exp,gamma=1"), "family=exp,gamma=1");
        assert_eq!(shell_quote("family=exp gamma=1"), "'family=exp gamma=1'");
        assert_eq!(shell_quote("it's"), r"'it'\''s'");
        assert_eq!(shell_quote(""), "''");
    }
}
