//! Function boundaries in C-family source.
//!
//! A function is a top-level `{ ... }` block whose header (the text since the
//! previous top-level `;`, `}` or preprocessor line) ends in a parenthesized
//! parameter list preceded by an identifier. Definition macros on the
//! allowlist contribute the name inside their parentheses instead:
//! `static ZEND_INI_MH(OnUpdateFiberStackSize)` names `OnUpdateFiberStackSize`.

use serde::{Deserialize, Serialize};

use crate::csrc::{self, BalanceError};

/// Macros whose first argument is the defined function's name.
pub const DEFINITION_MACROS: &[&str] = &[
    "ZEND_INI_MH",
    "PHP_INI_MH",
    "PHP_FUNCTION",
    "ZEND_FUNCTION",
    "PHP_METHOD",
    "ZEND_METHOD",
    "PHP_MINIT_FUNCTION",
    "PHP_MSHUTDOWN_FUNCTION",
    "PHP_RINIT_FUNCTION",
    "PHP_RSHUTDOWN_FUNCTION",
    "PHP_MINFO_FUNCTION",
];

const NOT_FUNCTIONS: &[&str] = &["if", "for", "while", "switch", "return", "sizeof", "do", "else"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpan {
    pub name: String,
    /// 1-based, inclusive.
    pub start_line: usize,
    pub end_line: usize,
    /// Byte range of the whole definition, header through closing brace.
    pub start: usize,
    pub end: usize,
    /// Offset of the opening brace.
    pub body_start: usize,
}

impl FunctionSpan {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unbalanced braces at line {line}")]
pub struct Unbalanced {
    pub line: usize,
}

fn ident_before(m: &[u8], end: usize) -> Option<(usize, usize)> {
    let mut e = end;
    while e > 0 && m[e - 1].is_ascii_whitespace() {
        e -= 1;
    }
    let mut s = e;
    while s > 0 && (m[s - 1].is_ascii_alphanumeric() || m[s - 1] == b'_') {
        s -= 1;
    }
    (s < e && !m[s].is_ascii_digit()).then_some((s, e))
}

/// Matching `(` for the `)` at `close`.
fn open_paren(m: &[u8], close: usize) -> Option<usize> {
    let mut depth = 0;
    for i in (0..=close).rev() {
        match m[i] {
            b')' => depth += 1,
            b'(' => {
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

/// Name of the function whose header is `m[hs..brace]`, if it is one.
fn header_name(src: &str, m: &[u8], hs: usize, brace: usize) -> Option<String> {
    let mut e = brace;
    while e > hs && m[e - 1].is_ascii_whitespace() {
        e -= 1;
    }
    if e <= hs || m[e - 1] != b')' {
        return None;
    }
    let open = open_paren(&m[..e], e - 1)?;
    if open < hs {
        return None;
    }
    let (ns, ne) = ident_before(m, open)?;
    if ns < hs {
        return None;
    }
    let name = &src[ns..ne];
    if DEFINITION_MACROS.contains(&name) {
        let inner = src[open + 1..e - 1].split(',').next()?.trim();
        let ok = !inner.is_empty() && inner.bytes().all(|c| c.is_ascii_alphanumeric() || c == b'_');
        return ok.then(|| inner.to_string());
    }
    if NOT_FUNCTIONS.contains(&name) || name.bytes().all(|c| c.is_ascii_uppercase() || c == b'_' || c.is_ascii_digit()) {
        // Bare upper-case macro invocations are not definitions we know.
        return None;
    }
    // Something (a return type) must precede the name.
    let before = std::str::from_utf8(&m[hs..ns]).ok()?.trim();
    if before.is_empty() || before.ends_with('=') || before.ends_with(',') {
        return None;
    }
    Some(name.to_string())
}

/// All function definitions in `src`, in order. Fails on a file whose
/// braces do not balance, naming the first offending line.
pub fn extract_functions(src: &str) -> Result<Vec<FunctionSpan>, Unbalanced> {
    let m = csrc::mask(src, true);
    if let Err(e) = csrc::check_balance(&m) {
        let at = match e {
            BalanceError::Unexpected(i) | BalanceError::Mismatch(i) | BalanceError::Unclosed(i) => i,
        };
        return Err(Unbalanced { line: csrc::line_of(src, at) });
    }
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut header_start = 0;
    let mut open_at: Option<(usize, Option<String>)> = None;
    for (i, &c) in m.iter().enumerate() {
        match c {
            b'{' => {
                if depth == 0 {
                    let name = header_name(src, &m, header_start, i);
                    open_at = Some((i, name));
                }
                depth += 1;
            }
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    if let Some((brace, Some(name))) = open_at.take() {
                        let start = (header_start..brace).find(|&k| !m[k].is_ascii_whitespace()).unwrap_or(brace);
                        out.push(FunctionSpan {
                            name,
                            start_line: csrc::line_of(src, start),
                            end_line: csrc::line_of(src, i),
                            start,
                            end: i + 1,
                            body_start: brace,
                        });
                    }
                    header_start = i + 1;
                }
            }
            b';' if depth == 0 => header_start = i + 1,
            _ => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = r#"#include "zend.h"
/* { not a brace */
static int helper(int a, const char *s)
{
    if (a) { return 1; }
    return s[0] == '}';
}

struct point { int x; int y; };
static const int table[] = { 1, 2 };

static ZEND_INI_MH(OnUpdateFiberStackSize)
{
    return SUCCESS;
}
#define WRAP(x) { x }
int
main(void) {
    return helper(0, "{");
}
"#;

    #[test]
    fn finds_functions() {
        let fs = extract_functions(SRC).unwrap();
        let names: Vec<_> = fs.iter().map(|f| (f.name.as_str(), f.start_line, f.end_line)).collect();
        assert_eq!(names, vec![("helper", 3, 7), ("OnUpdateFiberStackSize", 12, 15), ("main", 17, 20)]);
        assert!(fs[0].text(SRC).starts_with("static int helper"));
        assert!(fs[2].text(SRC).starts_with("int\nmain"));
    }

    #[test]
    fn unbalanced_file() {
        let e = extract_functions("int f(void) {\n  if (x) {\n}\n").unwrap_err();
        assert_eq!(e.line, 1);
    }
}
