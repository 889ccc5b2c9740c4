//! Lexical helpers for C-family source text. Nothing here parses C; the
//! functions only know enough about comments, literals and preprocessor
//! lines to count brackets and pick out identifiers reliably.

/// Copy of `src` with comment bodies and string/char literal contents
/// replaced by spaces. Newlines and byte offsets are preserved. With
/// `preproc`, preprocessor lines (and their continuations) are blanked too.
pub fn mask(src: &str, preproc: bool) -> Vec<u8> {
    let b = src.as_bytes();
    let mut out = b.to_vec();
    let mut i = 0;
    let mut line_start = true;
    while i < b.len() {
        let c = b[i];
        if line_start && preproc && c == b'#' {
            // Blank through the end of the logical line.
            while i < b.len() && !(b[i] == b'\n' && (i == 0 || b[i - 1] != b'\\')) {
                if b[i] != b'\n' {
                    out[i] = b' ';
                }
                i += 1;
            }
            continue;
        }
        match c {
            b'/' if b.get(i + 1) == Some(&b'/') => {
                while i < b.len() && b[i] != b'\n' {
                    out[i] = b' ';
                    i += 1;
                }
                continue;
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                out[i] = b' ';
                out[i + 1] = b' ';
                i += 2;
                while i < b.len() && !(b[i] == b'*' && b.get(i + 1) == Some(&b'/')) {
                    if b[i] != b'\n' {
                        out[i] = b' ';
                    }
                    i += 1;
                }
                let end = (i + 2).min(b.len());
                out[i..end].fill(b' ');
                i += 2;
                line_start = false;
                continue;
            }
            b'"' | b'\'' => {
                let q = c;
                i += 1;
                while i < b.len() && b[i] != q && b[i] != b'\n' {
                    if b[i] == b'\\' && i + 1 < b.len() {
                        out[i] = b' ';
                        i += 1;
                    }
                    if b[i] != b'\n' {
                        out[i] = b' ';
                    }
                    i += 1;
                }
                i += 1;
                line_start = false;
                continue;
            }
            b'\n' => line_start = true,
            b' ' | b'\t' | b'\r' => {}
            _ => line_start = false,
        }
        i += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceError {
    /// A closer with no matching opener, at this byte offset.
    Unexpected(usize),
    /// A closer that does not match the innermost open bracket.
    Mismatch(usize),
    /// Brackets still open at the end; offset of the innermost opener.
    Unclosed(usize),
}

/// Checks `()`, `[]` and `{}` nesting over already-masked bytes.
pub fn check_balance(masked: &[u8]) -> Result<(), BalanceError> {
    let mut stack: Vec<(u8, usize)> = Vec::new();
    for (i, &c) in masked.iter().enumerate() {
        match c {
            b'(' | b'[' | b'{' => stack.push((c, i)),
            b')' | b']' | b'}' => {
                let want = match c {
                    b')' => b'(',
                    b']' => b'[',
                    _ => b'{',
                };
                match stack.pop() {
                    None => return Err(BalanceError::Unexpected(i)),
                    Some((open, _)) if open != want => return Err(BalanceError::Mismatch(i)),
                    _ => {}
                }
            }
            _ => {}
        }
    }
    match stack.last() {
        Some(&(_, at)) => Err(BalanceError::Unclosed(at)),
        None => Ok(()),
    }
}

/// Per-bracket-kind counts `(parens, brackets, braces)` as opened minus closed.
pub fn bracket_delta(masked: &[u8]) -> (i64, i64, i64) {
    let mut d = (0, 0, 0);
    for &c in masked {
        match c {
            b'(' => d.0 += 1,
            b')' => d.0 -= 1,
            b'[' => d.1 += 1,
            b']' => d.1 -= 1,
            b'{' => d.2 += 1,
            b'}' => d.2 -= 1,
            _ => {}
        }
    }
    d
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ident<'a> {
    pub offset: usize,
    pub text: &'a str,
    /// Preceded by `.` or `->`, i.e. a member name rather than a variable.
    pub member: bool,
}

/// Identifiers in `src` outside comments and literals. Numbers such as
/// `0x1fULL` are skipped whole.
pub fn identifiers(src: &str) -> Vec<Ident<'_>> {
    let m = mask(src, false);
    let mut out = Vec::new();
    let mut i = 0;
    while i < m.len() {
        let c = m[i];
        if c.is_ascii_digit() {
            while i < m.len() && (is_ident(m[i]) || m[i] == b'.') {
                i += 1;
            }
            continue;
        }
        if is_ident_start(c) {
            let s = i;
            while i < m.len() && is_ident(m[i]) {
                i += 1;
            }
            let before = m[..s].iter().rposition(|c| !c.is_ascii_whitespace());
            let member = match before {
                Some(p) if m[p] == b'.' => true,
                Some(p) if m[p] == b'>' && p > 0 && m[p - 1] == b'-' => true,
                _ => false,
            };
            out.push(Ident { offset: s, text: &src[s..i], member });
            continue;
        }
        i += 1;
    }
    out
}

/// C keywords and a few ubiquitous names never treated as variables.
pub const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern",
    "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return", "short", "signed",
    "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "bool",
    "true", "false", "NULL",
];

/// Byte ranges `(start, end)` of the lines of `s`, newline excluded.
pub fn line_spans(s: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in s.bytes().enumerate() {
        if c == b'\n' {
            out.push((start, i));
            start = i + 1;
        }
    }
    if start < s.len() {
        out.push((start, s.len()));
    }
    out
}

/// Leading spaces and tabs of the line containing `offset`.
pub fn indent_at(s: &str, offset: usize) -> &str {
    let ls = s[..offset].rfind('\n').map_or(0, |p| p + 1);
    let rest = &s[ls..];
    let n = rest.len() - rest.trim_start_matches([' ', '\t']).len();
    &rest[..n]
}

/// 1-based line number of a byte offset.
pub fn line_of(s: &str, offset: usize) -> usize {
    s.as_bytes()[..offset.min(s.len())].iter().filter(|&&c| c == b'\n').count() + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_comments_and_literals() {
        let src = "a = \"{\"; // }\nb = '}'; /* { \n */ c";
        let m = String::from_utf8(mask(src, false)).unwrap();
        assert_eq!(m.len(), src.len());
        assert!(!m.contains('{') && !m.contains('}'));
        assert!(m.ends_with(" c"));
        assert_eq!(m.matches('\n').count(), 2);
    }

    #[test]
    fn preproc_lines() {
        let src = "#define X { \\\n  }\nint y;";
        let m = String::from_utf8(mask(src, true)).unwrap();
        assert_eq!(m.trim(), "int y;");
        assert_eq!(check_balance(&mask(src, true)), Ok(()));
    }

    #[test]
    fn balance_errors() {
        assert_eq!(check_balance(b"(]"), Err(BalanceError::Mismatch(1)));
        assert_eq!(check_balance(b"}"), Err(BalanceError::Unexpected(0)));
        assert_eq!(check_balance(b"{("), Err(BalanceError::Unclosed(1)));
    }

    #[test]
    fn idents() {
        let ids: Vec<_> = identifiers("p->len + 0x1f + s.cap + f(x) /* zz */ + \"q\"")
            .into_iter()
            .map(|i| (i.text, i.member))
            .collect();
        assert_eq!(ids, vec![("p", false), ("len", true), ("s", false), ("cap", true), ("f", false), ("x", false)]);
    }
}
