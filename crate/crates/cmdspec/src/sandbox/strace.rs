//! Parser normalizing external-tracer text output (strace-style lines)
//! into [`SyscallRecord`]s, so derivation stays agnostic to the tracing
//! technique. Lines look like:
//!
//! ```text
//! openat(AT_FDCWD, "p0", O_RDONLY|O_CLOEXEC) = 3
//! unlinkat(AT_FDCWD, "p0", 0)                = 0
//! access("p0", W_OK)                         = -1 EACCES (Permission denied)
//! ```
//!
//! Event lines (`--- SIGCHLD ---`, `+++ exited with 0 +++`) and
//! unfinished/resumed fragments are skipped.

use super::exec::normalize_path;
use super::syscalls::{SyscallRecord, SyscallTable};

/// Splits an argument list on top-level commas, honoring quotes and
/// nested brackets.
fn split_args(text: &str) -> Vec<String> {
    let mut args = Vec::new();
    let mut depth = 0usize;
    let mut in_quotes = false;
    let mut escaped = false;
    let mut current = String::new();
    for ch in text.chars() {
        if escaped {
            current.push(ch);
            escaped = false;
            continue;
        }
        match ch {
            '\\' if in_quotes => {
                current.push(ch);
                escaped = true;
            }
            '"' => {
                current.push(ch);
                in_quotes = !in_quotes;
            }
            '(' | '[' | '{' if !in_quotes => {
                current.push(ch);
                depth += 1;
            }
            ')' | ']' | '}' if !in_quotes => {
                current.push(ch);
                depth = depth.saturating_sub(1);
            }
            ',' if !in_quotes && depth == 0 => {
                args.push(current.trim().to_string());
                current.clear();
            }
            _ => current.push(ch),
        }
    }
    if !current.trim().is_empty() {
        args.push(current.trim().to_string());
    }
    args
}

fn unquote(arg: &str) -> Option<String> {
    let inner = arg.strip_prefix('"')?.strip_suffix('"')?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(ch) = chars.next() {
        if ch == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => break,
            }
        } else {
            out.push(ch);
        }
    }
    Some(out)
}

/// Symbolic open(2) flags rendered by external tracers.
fn parse_open_flags(arg: &str) -> u64 {
    let mut flags = 0u64;
    for token in arg.split('|') {
        flags |= match token.trim() {
            "O_RDONLY" => libc::O_RDONLY as u64,
            "O_WRONLY" => libc::O_WRONLY as u64,
            "O_RDWR" => libc::O_RDWR as u64,
            "O_CREAT" => libc::O_CREAT as u64,
            "O_TRUNC" => libc::O_TRUNC as u64,
            "O_APPEND" => libc::O_APPEND as u64,
            "O_EXCL" => libc::O_EXCL as u64,
            "O_CLOEXEC" => libc::O_CLOEXEC as u64,
            "O_DIRECTORY" => libc::O_DIRECTORY as u64,
            "O_NOFOLLOW" => libc::O_NOFOLLOW as u64,
            "O_NONBLOCK" => libc::O_NONBLOCK as u64,
            "O_PATH" => libc::O_PATH as u64,
            other => other.trim().parse::<u64>().unwrap_or(0),
        };
    }
    flags
}

fn parse_return(text: &str) -> Option<i64> {
    // "= 3", "= -1 ENOENT (No such file or directory)", "= ?" (killed)
    let value = text.trim().split_whitespace().next()?;
    if value == "?" {
        return None;
    }
    if let Some(hex) = value.strip_prefix("0x") {
        return i64::from_str_radix(hex, 16).ok();
    }
    value.parse::<i64>().ok()
}

/// Byte offset of the `)` closing the paren at `open`, honoring quotes.
fn matching_paren(line: &str, open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_quotes = false;
    let mut escaped = false;
    for (i, ch) in line.char_indices().skip_while(|(i, _)| *i < open) {
        if escaped {
            escaped = false;
            continue;
        }
        match ch {
            '\\' if in_quotes => escaped = true,
            '"' => in_quotes = !in_quotes,
            '(' if !in_quotes => depth += 1,
            ')' if !in_quotes => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_line(line: &str, table: &SyscallTable, scratch_prefix: &str) -> Option<SyscallRecord> {
    let line = line.trim();
    // drop optional leading "[pid N]" / pid-column prefixes
    let line = if let Some(rest) = line.strip_prefix("[pid") {
        rest.split_once(']')?.1.trim()
    } else {
        line
    };
    if line.is_empty() || line.starts_with("---") || line.starts_with("+++") {
        return None;
    }
    if line.contains("<unfinished") || line.contains("resumed>") {
        return None;
    }
    let open_paren = line.find('(')?;
    let name = line[..open_paren].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    let close_paren = matching_paren(line, open_paren)?;
    let args_text = &line[open_paren + 1..close_paren];
    let tail = line[close_paren + 1..].trim();
    let return_value = parse_return(tail.strip_prefix('=')?)?;

    let args = split_args(args_text);
    let entry = table.entry(name);
    let touched_path = entry
        .and_then(|e| e.path_arg)
        .and_then(|idx| args.get(idx))
        .and_then(|arg| unquote(arg))
        .map(|path| normalize_path(&path, scratch_prefix));
    let flags = entry
        .and_then(|e| e.open_flags_arg)
        .and_then(|idx| args.get(idx))
        .map(|arg| parse_open_flags(arg));

    Some(SyscallRecord {
        name: name.to_string(),
        args,
        return_value,
        classification: table.classify(name, flags),
        touched_path,
    })
}

/// Parses a whole tracer transcript; unparseable lines are skipped,
/// recognized calls keep their order.
pub fn parse_trace_text(text: &str, table: &SyscallTable, scratch_prefix: &str) -> Vec<SyscallRecord> {
    text.lines()
        .filter_map(|line| parse_line(line, table, scratch_prefix))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::syscalls::SyscallClass;

    fn table() -> SyscallTable {
        SyscallTable::default_table()
    }

    #[test]
    fn parses_a_typical_rm_transcript() {
        // [DERIVED] fixture transcript checked field by field against the
        // documented line grammar.
        let text = r#"
execve("/usr/bin/rm", ["rm", "p0"], 0x7ffd
newfstatat(AT_FDCWD, "p0", {st_mode=S_IFREG|0644, st_size=5, ...}, AT_SYMLINK_NOFOLLOW) = 0
unlinkat(AT_FDCWD, "p0", 0) = 0
+++ exited with 0 +++
"#;
        let records = parse_trace_text(text, &table(), "");
        assert_eq!(records.len(), 2, "{records:?}");
        assert_eq!(records[0].name, "newfstatat");
        assert_eq!(records[0].classification, SyscallClass::Read);
        assert_eq!(records[0].touched_path.as_deref(), Some("p0"));
        assert_eq!(records[0].return_value, 0);
        assert_eq!(records[1].name, "unlinkat");
        assert_eq!(records[1].classification, SyscallClass::Write);
        assert_eq!(records[1].touched_path.as_deref(), Some("p0"));
    }

    #[test]
    fn open_flags_symbols_refine_classification() {
        // [DERIVED] symbolic flags resolve identically to numeric ones.
        let text = concat!(
            "openat(AT_FDCWD, \"p0\", O_RDONLY|O_CLOEXEC) = 3\n",
            "openat(AT_FDCWD, \"p1\", O_WRONLY|O_CREAT|O_TRUNC, 0666) = 4\n",
        );
        let records = parse_trace_text(text, &table(), "");
        assert_eq!(records[0].classification, SyscallClass::Read);
        assert_eq!(records[1].classification, SyscallClass::Write);
    }

    #[test]
    fn error_returns_and_signal_lines_are_handled() {
        // [TRIVIAL]
        let text = concat!(
            "access(\"p0\", F_OK) = -1 ENOENT (No such file or directory)\n",
            "--- SIGCHLD {si_signo=SIGCHLD} ---\n",
            "+++ killed by SIGKILL +++\n",
        );
        let records = parse_trace_text(text, &table(), "");
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].return_value, -1);
    }

    #[test]
    fn unknown_calls_are_kept_as_other_class() {
        // [TRIVIAL] classification totality across backends.
        let records = parse_trace_text("prctl(PR_SET_NAME, \"x\") = 0\n", &table(), "");
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].classification, SyscallClass::Other);
        assert_eq!(records[0].touched_path, None);
    }

    #[test]
    fn scratch_prefix_is_stripped_from_paths() {
        // [TRIVIAL]
        let text = "unlink(\"/sb/scratch/p0\") = 0\n";
        let records = parse_trace_text(text, &table(), "/sb/scratch");
        assert_eq!(records[0].touched_path.as_deref(), Some("p0"));
    }

    #[test]
    fn quoted_commas_do_not_split_arguments() {
        // [DERIVED] the splitter honors quotes and nested brackets.
        assert_eq!(
            split_args(r#"AT_FDCWD, "a,b", {x, y}, 3"#),
            vec!["AT_FDCWD", "\"a,b\"", "{x, y}", "3"]
        );
    }
}
