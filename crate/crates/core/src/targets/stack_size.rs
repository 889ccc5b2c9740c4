//! A tiny PHP-flavoured script interpreter around a fiber stack-size setting.
//!
//! The script language knows three statements:
//!
//! ```text
//! ini_set("fiber.stack_size", "<quantity>");
//! $f = new Fiber(function() {});
//! $f->start();
//! ```
//!
//! The whole script is parsed before anything runs, so a syntax error anywhere
//! means nothing executes. Execution goes through a single dispatch block,
//! which keeps coverage independent of statement order. Every positive stack
//! size takes the same path through the setter, and a fiber started with a
//! size in `1..4096` overflows its stack.

use std::sync::OnceLock;

use crate::blk;
use crate::fuzzer::{CrashKind, Exec, Outcome};
use crate::runtime::{site_id, AnnotationEvent, Macro};

pub const CRASH_BELOW: i64 = 4096;
pub const DEFAULT_STACK_SIZE: i64 = 2 * 1024 * 1024;
/// Sizes above this cannot be mapped and fail cleanly.
pub const MAX_MAPPABLE: i64 = 1 << 31;
/// `memory_limit` values below this are rejected.
pub const MIN_MEMORY_LIMIT: i64 = 2 * 1024 * 1024;
pub const DEFAULT_MEMORY_LIMIT: i64 = 128 * 1024 * 1024;

pub const ANALOG_FILE: &str = "Zend/zend.c";
pub const ANALOG_FUNCTION: &str = "OnUpdateFiberStackSize";
pub const SET_SNIPPET: &str = "IJON_SET(EG(fiber_stack_size));";

pub const CRASH_FRAMES: [&str; 4] = [
    "zend_fiber_execute",
    "zend_fiber_trampoline",
    "zend_fiber_object_start",
    "zim_Fiber_start",
];

pub fn set_site() -> u64 {
    static ID: OnceLock<u64> = OnceLock::new();
    *ID.get_or_init(|| site_id(ANALOG_FILE, ANALOG_FUNCTION, Macro::Set, SET_SNIPPET))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt<'a> {
    IniSet { key: &'a [u8], value: &'a [u8] },
    NewFiber { var: &'a [u8] },
    Start { var: &'a [u8] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Warning {
    NoDigits,
    TrailingJunk,
    Overflow,
}

/// Result of the quantity parser: value plus the warnings it emitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quantity {
    pub value: i64,
    pub warnings: Vec<Warning>,
}

/// Leading optional sign, decimal digits, optional K/M/G suffix. Trailing
/// junk is tolerated with a warning; overflow saturates with a warning.
pub fn parse_quantity(s: &[u8]) -> Quantity {
    parse_quantity_traced(s, &mut None)
}

fn parse_quantity_traced(s: &[u8], x: &mut Option<&mut Exec<'_>>) -> Quantity {
    let q = parse_quantity_inner(s, x);
    if let Some(x) = x.as_deref_mut() {
        blk!(x, "pq_return");
    }
    q
}

fn parse_quantity_inner(s: &[u8], x: &mut Option<&mut Exec<'_>>) -> Quantity {
    macro_rules! hit {
        ($l:literal) => {
            if let Some(x) = x.as_deref_mut() {
                blk!(x, $l);
            }
        };
    }
    hit!("pq_enter");
    let mut warnings = Vec::new();
    if s.is_empty() {
        hit!("pq_empty");
        return Quantity { value: 0, warnings };
    }
    let mut i = 0;
    while i < s.len() && matches!(s[i], b' ' | b'\t') {
        i += 1;
    }
    let mut neg = false;
    if i < s.len() && (s[i] == b'-' || s[i] == b'+') {
        neg = s[i] == b'-';
        hit!("pq_sign");
        i += 1;
    }
    let start = i;
    let mut v: i64 = 0;
    let mut overflow = false;
    while i < s.len() && s[i].is_ascii_digit() {
        let d = (s[i] - b'0') as i64;
        match v.checked_mul(10).and_then(|v| v.checked_add(d)) {
            Some(n) => v = n,
            None => {
                overflow = true;
                v = i64::MAX;
            }
        }
        i += 1;
    }
    if i == start {
        hit!("pq_no_digits");
        warnings.push(Warning::NoDigits);
        return Quantity { value: 0, warnings };
    }
    hit!("pq_digits");
    let shift = match s.get(i) {
        Some(b'k' | b'K') => 10,
        Some(b'm' | b'M') => 20,
        Some(b'g' | b'G') => 30,
        _ => 0,
    };
    if shift > 0 {
        hit!("pq_suffix");
        i += 1;
        match v.checked_mul(1 << shift) {
            Some(n) => v = n,
            None => {
                overflow = true;
                v = i64::MAX;
            }
        }
    }
    if overflow {
        hit!("pq_overflow");
        warnings.push(Warning::Overflow);
    }
    if i < s.len() {
        hit!("pq_junk");
        warnings.push(Warning::TrailingJunk);
    }
    Quantity { value: if neg { -v } else { v }, warnings }
}

struct Lexer<'a> {
    s: &'a [u8],
    i: usize,
}

impl<'a> Lexer<'a> {
    fn skip_trivia(&mut self) -> Result<(), ()> {
        loop {
            while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
                self.i += 1;
            }
            let rest = &self.s[self.i..];
            if rest.starts_with(b"/*") {
                let end = rest[2..].windows(2).position(|w| w == b"*/").ok_or(())?;
                self.i += end + 4;
            } else if rest.starts_with(b"//") || rest.starts_with(b"#") {
                while self.i < self.s.len() && self.s[self.i] != b'\n' {
                    self.i += 1;
                }
            } else {
                return Ok(());
            }
        }
    }

    fn eat(&mut self, tok: &[u8]) -> Result<(), ()> {
        self.skip_trivia()?;
        if self.s[self.i..].starts_with(tok) {
            self.i += tok.len();
            Ok(())
        } else {
            Err(())
        }
    }

    fn peek(&mut self, tok: &[u8]) -> Result<bool, ()> {
        self.skip_trivia()?;
        Ok(self.s[self.i..].starts_with(tok))
    }

    fn ident(&mut self) -> Result<&'a [u8], ()> {
        self.skip_trivia()?;
        let start = self.i;
        while self.i < self.s.len()
            && (self.s[self.i].is_ascii_alphanumeric() || self.s[self.i] == b'_')
        {
            self.i += 1;
        }
        if self.i == start || self.s[start].is_ascii_digit() {
            return Err(());
        }
        Ok(&self.s[start..self.i])
    }

    fn string(&mut self) -> Result<&'a [u8], ()> {
        self.skip_trivia()?;
        let q = *self.s.get(self.i).ok_or(())?;
        if q != b'"' && q != b'\'' {
            return Err(());
        }
        let start = self.i + 1;
        let mut j = start;
        while j < self.s.len() && self.s[j] != q {
            if self.s[j] == b'\n' {
                return Err(());
            }
            j += 1;
        }
        if j >= self.s.len() {
            return Err(());
        }
        self.i = j + 1;
        Ok(&self.s[start..j])
    }

    fn at_end(&mut self) -> Result<bool, ()> {
        self.skip_trivia()?;
        Ok(self.i >= self.s.len() || self.s[self.i..].starts_with(b"?>"))
    }
}

/// Parses a whole script; `None` on any syntax error.
pub fn parse_script(src: &[u8]) -> Option<Vec<Stmt<'_>>> {
    let mut lx = Lexer { s: src, i: 0 };
    let mut out = Vec::new();
    if lx.peek(b"<?php").ok()? {
        lx.eat(b"<?php").ok()?;
    }
    while !lx.at_end().ok()? {
        out.push(parse_stmt(&mut lx).ok()?);
    }
    Some(out)
}

fn parse_stmt<'a>(lx: &mut Lexer<'a>) -> Result<Stmt<'a>, ()> {
    if lx.peek(b"$")? {
        lx.eat(b"$")?;
        let var = lx.ident()?;
        if lx.peek(b"->")? {
            lx.eat(b"->")?;
            if lx.ident()? != b"start" {
                return Err(());
            }
            lx.eat(b"(")?;
            lx.eat(b")")?;
            lx.eat(b";")?;
            return Ok(Stmt::Start { var });
        }
        lx.eat(b"=")?;
        if lx.ident()? != b"new" || lx.ident()? != b"Fiber" {
            return Err(());
        }
        lx.eat(b"(")?;
        if lx.ident()? != b"function" {
            return Err(());
        }
        lx.eat(b"(")?;
        lx.eat(b")")?;
        lx.eat(b"{")?;
        lx.eat(b"}")?;
        lx.eat(b")")?;
        lx.eat(b";")?;
        return Ok(Stmt::NewFiber { var });
    }
    if lx.ident()? != b"ini_set" {
        return Err(());
    }
    lx.eat(b"(")?;
    let key = lx.string()?;
    lx.eat(b",")?;
    let value = lx.string()?;
    lx.eat(b")")?;
    lx.eat(b";")?;
    Ok(Stmt::IniSet { key, value })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Fiber {
    started: bool,
}

/// Simulated engine globals.
struct Globals<'a> {
    fiber_stack_size: i64,
    memory_limit: i64,
    fibers: Vec<(&'a [u8], Fiber)>,
}

/// Runs a script. Errors thrown by the engine end the script without a crash.
pub fn run(input: &[u8], x: &mut Exec<'_>) -> Outcome {
    blk!(x, "php_compile");
    let Some(stmts) = parse_script(input) else {
        blk!(x, "php_parse_error");
        return Outcome::Ok;
    };
    let mut eg = Globals {
        fiber_stack_size: DEFAULT_STACK_SIZE,
        memory_limit: DEFAULT_MEMORY_LIMIT,
        fibers: Vec::new(),
    };
    for st in &stmts {
        blk!(x, "php_dispatch");
        match *st {
            Stmt::IniSet { key, value } => {
                blk!(x, "ini_set");
                match key {
                    b"fiber.stack_size" => on_update_fiber_stack_size(&mut eg, Some(value), x),
                    b"memory_limit" => on_update_memory_limit(&mut eg, value, x),
                    _ => blk!(x, "ini_unknown_key"),
                }
            }
            Stmt::NewFiber { var } => {
                blk!(x, "fiber_new");
                match eg.fibers.iter_mut().find(|(n, _)| *n == var) {
                    Some(slot) => slot.1 = Fiber { started: false },
                    None => eg.fibers.push((var, Fiber { started: false })),
                }
            }
            Stmt::Start { var } => {
                blk!(x, "fiber_start_call");
                let Some(slot) = eg.fibers.iter_mut().find(|(n, _)| *n == var) else {
                    blk!(x, "error_undefined_variable");
                    return Outcome::Ok;
                };
                if slot.1.started {
                    blk!(x, "error_fiber_already_started");
                    return Outcome::Ok;
                }
                slot.1.started = true;
                let size = eg.fiber_stack_size;
                if size == 0 {
                    blk!(x, "error_stack_too_small");
                    return Outcome::Ok;
                }
                if size > MAX_MAPPABLE {
                    blk!(x, "error_stack_allocate");
                    return Outcome::Ok;
                }
                x.work(8);
                if size < CRASH_BELOW {
                    return Outcome::crash(CrashKind::StackOverflow, &CRASH_FRAMES);
                }
                blk!(x, "fiber_run_ok");
            }
        }
    }
    blk!(x, "php_shutdown");
    Outcome::Ok
}

/// Analog of the INI modify handler: parse, reject negatives, commit.
fn on_update_fiber_stack_size(eg: &mut Globals<'_>, new_value: Option<&[u8]>, x: &mut Exec<'_>) {
    blk!(x, "OnUpdateFiberStackSize");
    match new_value {
        Some(v) => {
            let tmp = parse_quantity_traced(v, &mut Some(&mut *x)).value;
            if tmp < 0 {
                blk!(x, "ini_failure");
                return;
            }
            blk!(x, "ini_commit");
            eg.fiber_stack_size = tmp;
            x.annotate(AnnotationEvent::new(set_site(), Macro::Set, eg.fiber_stack_size));
        }
        None => {
            blk!(x, "ini_default");
            eg.fiber_stack_size = DEFAULT_STACK_SIZE;
        }
    }
}

/// Shares the quantity parser with the stack-size handler but carries no
/// annotation and has no effect on fibers.
fn on_update_memory_limit(eg: &mut Globals<'_>, new_value: &[u8], x: &mut Exec<'_>) {
    blk!(x, "OnUpdateMemoryLimit");
    let tmp = parse_quantity_traced(new_value, &mut Some(&mut *x)).value;
    if tmp < MIN_MEMORY_LIMIT {
        blk!(x, "mem_failure");
        return;
    }
    blk!(x, "mem_commit");
    eg.memory_limit = tmp;
}

/// The value committed by the last well-formed `ini_set`, if the script parses.
pub fn committed_value(input: &[u8]) -> Option<i64> {
    let stmts = parse_script(input)?;
    let mut v = DEFAULT_STACK_SIZE;
    for st in stmts {
        if let Stmt::IniSet { key: b"fiber.stack_size", value } = st {
            let q = parse_quantity(value).value;
            if q >= 0 {
                v = q;
            }
        }
    }
    Some(v)
}

/// Built-in seed scripts, shaped like small regression tests. Only the two
/// fiber tests touch `fiber.stack_size`, and neither commits a positive
/// size; parser paths are exercised through `memory_limit`, which shares the
/// quantity parser but carries no annotation.
pub const SEEDS: [(&str, &str); 17] = [
    (
        "gh10249",
        "<?php\n/*\n * --TEST--\n * GH-10249: an empty fiber.stack_size must not be accepted as a usable size\n * --DESCRIPTION--\n * Setting the option to the empty string parses as zero. Starting a fiber\n * afterwards has to fail with an error instead of running on a stack that\n * cannot hold even a single frame.\n *\n * The handler used to accept any value the quantity parser produced, so a\n * script could shrink the stack of every fiber created later on. The check\n * now happens when the fiber is started, because the setting can change\n * between the creation of the fiber object and the call to start, and only\n * the value in effect at that moment decides how much memory is mapped.\n * Values given in kilobytes or megabytes go through the same path.\n * --INI--\n * fiber.stack_size is changed at runtime below\n */\n$fiber = new Fiber(function() {});\nini_set(\"fiber.stack_size\", \"\");\n$fiber->start();\n/*\n * --EXPECT--\n * Fiber stack size is too small, it needs to be at least a few pages\n */\n",
    ),
    (
        "negative_stack_size",
        "<?php\n/*\n * --TEST--\n * Negative fiber.stack_size values are refused\n * --DESCRIPTION--\n * A negative size must be rejected by the INI handler with a warning, and\n * the previously configured size has to stay in effect, so starting a\n * fiber afterwards works as usual on the default stack.\n *\n * The quantity parser accepts an optional sign, digits and a unit suffix.\n * A leading minus is carried through to the handler, which is the only\n * place that can tell a negative size apart from a large unsigned one.\n * Trailing characters after the unit only produce a warning and do not\n * change the parsed number, which matches how other size options behave.\n * --INI--\n * fiber.stack_size is changed at runtime below\n */\n$fiber = new Fiber(function() {});\nini_set(\"fiber.stack_size\", \"-2M\");\n$fiber->start();\n/*\n * --EXPECT--\n * Warning: fiber.stack_size must be a positive size, invalid value ignored\n */\n",
    ),
    (
        "fiber_start",
        "<?php\n/* Zend/tests/fibers/start.phpt */\n$fiber = new Fiber(function() {});\n$fiber->start();\n",
    ),
    (
        "fiber_double_start",
        "<?php\n/* Zend/tests/fibers/double_start.phpt */\n$f = new Fiber(function() {});\n$f->start();\n$f->start();\n/* expected: Cannot start a fiber that has already been started */\n",
    ),
    (
        "fiber_undefined",
        "<?php\n/* Zend/tests/fibers/undefined.phpt */\n$g->start();\n/* expected: Undefined variable */\n",
    ),
    ("memory_mega", "<?php\n/* memory_limit_mega.phpt */\nini_set(\"memory_limit\", \"256M\");\n"),
    ("memory_junk", "<?php\n/* memory_limit_junk.phpt */\nini_set(\"memory_limit\", \"9690x-D\");\n"),
    ("memory_words", "<?php\n/* memory_limit_words.phpt */\nini_set(\"memory_limit\", \"abc\");\n"),
    ("memory_negative", "<?php\n/* memory_limit_negative.phpt */\nini_set(\"memory_limit\", \"-abc\");\n"),
    ("memory_empty", "<?php\n/* memory_limit_empty.phpt */\nini_set(\"memory_limit\", \"\");\n"),
    (
        "memory_overflow",
        "<?php\n/* memory_limit_overflow.phpt */\nini_set(\"memory_limit\", \"99999999999999999999G\");\nini_set(\"memory_limit\", \"+8Kb\");\n",
    ),
    ("memory_kilo", "<?php\n/* memory_limit_kilo.phpt */\nini_set(\"memory_limit\", \"512K\");\n"),
    ("memory_giga", "<?php\n/* memory_limit_giga.phpt */\nini_set(\"memory_limit\", \"1G\");\n"),
    ("memory_plain", "<?php\n/* memory_limit_bytes.phpt */\nini_set(\"memory_limit\", \"134217728\");\n"),
    ("memory_unlimited", "<?php\n/* memory_limit_unlimited.phpt */\nini_set(\"memory_limit\", \"-1\");\n"),
    (
        "memory_twice",
        "<?php\n/* memory_limit_twice.phpt */\nini_set(\"memory_limit\", \"64m\");\nini_set(\"memory_limit\", \"8Mb\");\n",
    ),
    ("unknown_key", "<?php\n/* ini_unknown.phpt */\nini_set(\"display_errors\", \"1\");\n?>\n"),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::FeedbackState;

    fn script(q: &str) -> Vec<u8> {
        format!(
            "<?php\nini_set(\"fiber.stack_size\", \"{q}\");\n$fiber = new Fiber(function() {{}});\n$fiber->start();\n"
        )
        .into_bytes()
    }

    fn exec(input: &[u8], annot: bool) -> (Outcome, FeedbackState) {
        let mut fb = FeedbackState::new();
        let out = {
            let mut x = Exec::new(&mut fb, annot);
            run(input, &mut x)
        };
        (out, fb)
    }

    #[test]
    fn quantity_examples() {
        assert_eq!(parse_quantity(b"-1").value, -1);
        let q = parse_quantity(b"9690x-D");
        assert_eq!(q.value, 9690);
        assert_eq!(q.warnings, vec![Warning::TrailingJunk]);
        assert_eq!(parse_quantity(b"").value, 0);
        assert_eq!(parse_quantity(b"2K").value, 2048);
        assert_eq!(parse_quantity(b"1m").value, 1 << 20);
        assert_eq!(parse_quantity(b"3G").value, 3 << 30);
        assert_eq!(parse_quantity(b"abc").warnings, vec![Warning::NoDigits]);
        assert_eq!(parse_quantity(b"99999999999999999999").warnings, vec![Warning::Overflow]);
        assert_eq!(parse_quantity(b"-0").value, 0);
    }

    #[test]
    fn negative_is_rejected() {
        let (out, _) = exec(&script("-1"), true);
        assert_eq!(out, Outcome::Ok);
        assert_eq!(committed_value(&script("-1")), Some(DEFAULT_STACK_SIZE));
    }

    #[test]
    fn junk_value_commits_without_crash() {
        let (out, _) = exec(&script("9690x-D"), true);
        assert_eq!(out, Outcome::Ok);
    }

    #[test]
    fn small_value_overflows_stack() {
        let (out, _) = exec(&script("512"), false);
        assert_eq!(out, Outcome::crash(CrashKind::StackOverflow, &CRASH_FRAMES));
        assert!(exec(&script("4095"), false).0.is_crash());
        assert!(!exec(&script("4096"), false).0.is_crash());
        assert!(!exec(&script("0"), false).0.is_crash());
        assert!(!exec(&script(""), false).0.is_crash());
    }

    #[test]
    fn positive_values_share_one_path() {
        let base = exec(&script("5000"), false).1;
        for q in ["4096", "65536", "123456", "1048575", "2000000000"] {
            let fb = exec(&script(q), false).1;
            assert_eq!(fb.edge_map(), base.edge_map(), "{q}");
        }
        let a = exec(&script("5000"), true).1;
        let b = exec(&script("5001"), true).1;
        assert_ne!(a.annot_map(), b.annot_map());
    }

    #[test]
    fn syntax_error_runs_nothing() {
        let mut s = script("512");
        s.truncate(s.len() - 3);
        assert_eq!(exec(&s, false).0, Outcome::Ok);
    }

    #[test]
    fn start_requires_fiber() {
        let s = b"<?php\nini_set(\"fiber.stack_size\", \"1\");\n$f->start();\n";
        assert_eq!(exec(s, false).0, Outcome::Ok);
    }

    #[test]
    fn fiber_created_before_setting_uses_setting_at_start() {
        let s = b"<?php $f = new Fiber(function() {}); ini_set('fiber.stack_size', '100'); $f->start();";
        assert!(exec(s, false).0.is_crash());
    }
}
