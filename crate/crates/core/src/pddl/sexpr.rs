use std::fmt;

use super::PddlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Atom(String, Pos),
    List(Vec<SExpr>, Pos),
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Atom(_, p) | SExpr::List(_, p) => *p,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(a, _) => Some(a),
            SExpr::List(..) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(l, _) => Some(l),
            SExpr::Atom(..) => None,
        }
    }

    /// The leading keyword of a list, lowercased (`(:action ...)` -> `:action`).
    pub fn head(&self) -> Option<String> {
        self.as_list()?.first()?.as_atom().map(str::to_ascii_lowercase)
    }
}

/// Reads exactly one top-level expression from `text`. PDDL is case
/// insensitive, so atoms are lowercased.
pub fn parse_one(text: &str) -> Result<SExpr, PddlError> {
    let mut r = Reader::new(text);
    r.skip_ws();
    let expr = r.expr()?;
    r.skip_ws();
    if r.peek().is_some() {
        return Err(r.err("end of input"));
    }
    Ok(expr)
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader { chars: text.chars().peekable(), line: 1, column: 1 }
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, column: self.column }
    }

    fn err(&self, expected: &str) -> PddlError {
        PddlError::Syntax { line: self.line, column: self.column, expected: expected.to_string() }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn expr(&mut self) -> Result<SExpr, PddlError> {
        let start = self.pos();
        match self.peek() {
            None => Err(self.err("`(` or atom")),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        None => return Err(self.err("`)`")),
                        Some(')') => {
                            self.bump();
                            return Ok(SExpr::List(items, start));
                        }
                        Some(_) => items.push(self.expr()?),
                    }
                }
            }
            Some(')') => Err(self.err("`(` or atom")),
            Some(_) => {
                let mut s = String::new();
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.push(c.to_ascii_lowercase());
                    self.bump();
                }
                Ok(SExpr::Atom(s, start))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_lists_and_comments() {
        let e = parse_one("; header\n(define (Domain X) ; trailing\n  (:predicates))").unwrap();
        let l = e.as_list().unwrap();
        assert_eq!(l.len(), 3);
        assert_eq!(l[0].as_atom(), Some("define"));
        assert_eq!(l[1].head().as_deref(), Some("domain"));
        assert_eq!(l[2].pos(), Pos { line: 3, column: 3 });
    }

    #[test]
    fn unbalanced_reports_position() {
        match parse_one("(a (b c)\n") {
            Err(PddlError::Syntax { line, expected, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(expected, "`)`");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_one("(a) b"), Err(PddlError::Syntax { .. })));
    }
}
