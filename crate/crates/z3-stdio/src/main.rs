//! SMT-LIB v2 server over stdin/stdout, backed by a statically linked Z3.
//!
//! Reads one balanced s-expression command at a time, evaluates it in a
//! persistent solver context, and writes the solver's reply. Exists so the
//! prover has a solver to spawn on machines without `z3` on the PATH; any
//! SMT-LIB 2.6 solver can be used in its place.

use std::ffi::{CStr, CString};
use std::io::{BufWriter, Read, Stdout, Write};
use std::os::raw::{c_char, c_int, c_void};

type Z3Config = *mut c_void;
type Z3Context = *mut c_void;

extern "C" {
    fn Z3_mk_config() -> Z3Config;
    fn Z3_del_config(cfg: Z3Config);
    fn Z3_mk_context(cfg: Z3Config) -> Z3Context;
    fn Z3_set_error_handler(ctx: Z3Context, handler: extern "C" fn(Z3Context, c_int));
    fn Z3_eval_smtlib2_string(ctx: Z3Context, input: *const c_char) -> *const c_char;
}

// Errors are reported through the command's textual reply; the handler only
// has to keep Z3 from aborting the process.
extern "C" fn ignore_error(_ctx: Z3Context, _code: c_int) {}

struct Server {
    ctx: Z3Context,
    out: BufWriter<Stdout>,
}

impl Server {
    fn new() -> Self {
        let ctx = unsafe {
            let cfg = Z3_mk_config();
            let ctx = Z3_mk_context(cfg);
            Z3_del_config(cfg);
            Z3_set_error_handler(ctx, ignore_error);
            ctx
        };
        Server {
            ctx,
            out: BufWriter::new(std::io::stdout()),
        }
    }

    fn eval(&mut self, command: &str) {
        let cmd = match CString::new(command) {
            Ok(cmd) => cmd,
            Err(_) => {
                writeln!(self.out, "(error \"command contains a NUL byte\")").ok();
                self.out.flush().ok();
                return;
            }
        };
        let reply = unsafe {
            let raw = Z3_eval_smtlib2_string(self.ctx, cmd.as_ptr());
            if raw.is_null() {
                String::new()
            } else {
                CStr::from_ptr(raw).to_string_lossy().into_owned()
            }
        };
        let reply = reply.trim_end();
        if !reply.is_empty() {
            writeln!(self.out, "{reply}").ok();
        }
        self.out.flush().ok();
    }
}

/// Splits a byte stream into top-level s-expressions, honoring string
/// literals, `|`-quoted symbols, and `;` comments.
struct Chunker {
    buf: String,
    depth: i64,
    state: LexState,
}

#[derive(Clone, Copy, PartialEq)]
enum LexState {
    Normal,
    InString,
    InQuotedSymbol,
    InComment,
}

impl Chunker {
    fn new() -> Self {
        Chunker {
            buf: String::new(),
            depth: 0,
            state: LexState::Normal,
        }
    }

    /// Feeds one character; returns a complete command when one closes.
    fn push(&mut self, c: char) -> Option<String> {
        use LexState::*;
        match self.state {
            InComment => {
                if c == '\n' {
                    self.state = Normal;
                }
                // Comments are dropped; they may sit between commands.
                if self.depth > 0 {
                    self.buf.push(' ');
                }
                return None;
            }
            InString => {
                self.buf.push(c);
                if c == '"' {
                    // SMT-LIB escapes a quote by doubling it; a lone quote
                    // ends the literal. Peeking is not possible here, so
                    // treat every quote as a toggle: a doubled quote
                    // re-enters the string state on the next character.
                    self.state = Normal;
                }
                return None;
            }
            InQuotedSymbol => {
                self.buf.push(c);
                if c == '|' {
                    self.state = Normal;
                }
                return None;
            }
            Normal => {}
        }
        match c {
            ';' => {
                self.state = InComment;
                None
            }
            '"' => {
                self.state = InString;
                self.buf.push(c);
                None
            }
            '|' => {
                self.state = InQuotedSymbol;
                self.buf.push(c);
                None
            }
            '(' => {
                self.depth += 1;
                self.buf.push(c);
                None
            }
            ')' => {
                self.depth -= 1;
                self.buf.push(c);
                if self.depth <= 0 {
                    self.depth = 0;
                    let cmd = std::mem::take(&mut self.buf);
                    Some(cmd)
                } else {
                    None
                }
            }
            _ => {
                if self.depth > 0 || !c.is_whitespace() {
                    self.buf.push(c);
                }
                None
            }
        }
    }
}

fn main() {
    let mut server = Server::new();
    let mut chunker = Chunker::new();
    let stdin = std::io::stdin();
    let mut reader = stdin.lock();
    let mut byte_buf = [0u8; 4096];
    loop {
        let n = match reader.read(&mut byte_buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(_) => break,
        };
        // SMT-LIB scripts are ASCII in practice; non-ASCII bytes only ever
        // occur inside string literals, where lossy decoding is acceptable.
        for c in String::from_utf8_lossy(&byte_buf[..n]).chars() {
            if let Some(cmd) = chunker.push(c) {
                let trimmed = cmd.trim();
                if trimmed == "(exit)" {
                    return;
                }
                server.eval(trimmed);
            }
        }
    }
}
