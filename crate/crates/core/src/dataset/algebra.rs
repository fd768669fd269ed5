//! Set expressions over context notations.
//!
//! Operators: `∩` (or `&`), `∪` (or `|`), `\` (or `-`), with parentheses.
//! `∩` binds tighter than `∪` and `\`, which share one left-associative level.

use std::fmt;

use super::DatasetError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetExpr {
    Name(String),
    Intersect(Box<SetExpr>, Box<SetExpr>),
    Union(Box<SetExpr>, Box<SetExpr>),
    Difference(Box<SetExpr>, Box<SetExpr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Name(String),
    Cap,
    Cup,
    Minus,
    Open,
    Close,
}

fn tokenize(expr: &str) -> Result<Vec<Token>, String> {
    let mut out = Vec::new();
    let mut chars = expr.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '∩' | '&' => {
                chars.next();
                out.push(Token::Cap);
            }
            '∪' | '|' => {
                chars.next();
                out.push(Token::Cup);
            }
            '\\' | '-' | '∖' => {
                chars.next();
                out.push(Token::Minus);
            }
            '(' => {
                chars.next();
                out.push(Token::Open);
            }
            ')' => {
                chars.next();
                out.push(Token::Close);
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let mut name = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        name.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Token::Name(name));
            }
            other => return Err(format!("unexpected character `{other}`")),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<SetExpr, String> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Cup) => {
                    self.next();
                    lhs = SetExpr::Union(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.next();
                    lhs = SetExpr::Difference(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<SetExpr, String> {
        let mut lhs = self.atom()?;
        while let Some(Token::Cap) = self.peek() {
            self.next();
            lhs = SetExpr::Intersect(Box::new(lhs), Box::new(self.atom()?));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<SetExpr, String> {
        match self.next() {
            Some(Token::Name(n)) => Ok(SetExpr::Name(n)),
            Some(Token::Open) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token::Close) => Ok(inner),
                    _ => Err("missing `)`".into()),
                }
            }
            Some(t) => Err(format!("unexpected token {t:?}")),
            None => Err("unexpected end of expression".into()),
        }
    }
}

impl SetExpr {
    pub fn parse(expr: &str) -> Result<SetExpr, DatasetError> {
        let err = |message: String| DatasetError::Expression {
            expr: expr.to_string(),
            message,
        };
        let tokens = tokenize(expr).map_err(err)?;
        let mut p = Parser { tokens, pos: 0 };
        let parsed = p.expr().map_err(err)?;
        if p.pos != p.tokens.len() {
            return Err(err(format!("trailing input at token {}", p.pos)));
        }
        Ok(parsed)
    }

    /// Every notation the expression references.
    pub fn names(&self) -> Vec<&str> {
        match self {
            SetExpr::Name(n) => vec![n.as_str()],
            SetExpr::Intersect(a, b) | SetExpr::Union(a, b) | SetExpr::Difference(a, b) => {
                let mut v = a.names();
                v.extend(b.names());
                v
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            SetExpr::Name(_) => 3,
            SetExpr::Intersect(..) => 2,
            SetExpr::Union(..) | SetExpr::Difference(..) => 1,
        }
    }
}

impl fmt::Display for SetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b, op) = match self {
            SetExpr::Name(n) => return f.write_str(n),
            SetExpr::Intersect(a, b) => (a, b, "∩"),
            SetExpr::Union(a, b) => (a, b, "∪"),
            SetExpr::Difference(a, b) => (a, b, "\\"),
        };
        let p = self.precedence();
        if a.precedence() < p {
            write!(f, "({a})")?;
        } else {
            write!(f, "{a}")?;
        }
        write!(f, " {op} ")?;
        // left-associative: an equal-precedence right operand needs parentheses
        if b.precedence() <= p && !matches!(**b, SetExpr::Name(_)) {
            write!(f, "({b})")
        } else {
            write!(f, "{b}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn name(n: &str) -> Box<SetExpr> {
        Box::new(SetExpr::Name(n.into()))
    }

    #[test]
    fn parses_table_style_intersections() {
        let e = SetExpr::parse("$S_C \\cap S_MB").err();
        assert!(e.is_some());
        let e = SetExpr::parse("S_C ∩ S_MB ∩ S_NZC ∩ S_Const").unwrap();
        assert_eq!(e.names(), vec!["S_C", "S_MB", "S_NZC", "S_Const"]);
        assert_eq!(e.to_string(), "S_C ∩ S_MB ∩ S_NZC ∩ S_Const");
    }

    #[test]
    fn precedence_and_ascii_aliases() {
        let e = SetExpr::parse("S_A | S_B & S_C").unwrap();
        assert_eq!(
            e,
            SetExpr::Union(name("S_A"), Box::new(SetExpr::Intersect(name("S_B"), name("S_C"))))
        );
        let e = SetExpr::parse("S_A - S_B - S_C").unwrap();
        assert_eq!(
            e,
            SetExpr::Difference(Box::new(SetExpr::Difference(name("S_A"), name("S_B"))), name("S_C"))
        );
        assert_eq!(e.to_string(), "S_A \\ S_B \\ S_C");
        let e = SetExpr::parse("S_A \\ (S_B ∪ S_C)").unwrap();
        assert_eq!(e.to_string(), "S_A \\ (S_B ∪ S_C)");
        let e = SetExpr::parse("(S_A ∪ S_B) ∩ S_C").unwrap();
        assert_eq!(e.to_string(), "(S_A ∪ S_B) ∩ S_C");
    }

    #[test]
    fn display_reparses_to_same_tree() {
        for src in ["S_A ∩ (S_B ∩ S_C)", "(S_A \\ S_B) ∪ S_C", "S_A ∪ (S_B \\ S_C)", "((S_A))"] {
            let e = SetExpr::parse(src).unwrap();
            assert_eq!(SetExpr::parse(&e.to_string()).unwrap(), e, "{src}");
        }
    }

    #[test]
    fn syntax_errors() {
        for bad in ["", "S_A ∩", "(S_A", "S_A S_B", "S_A ∪ ∪ S_B", "S_A)"] {
            assert!(
                matches!(SetExpr::parse(bad), Err(DatasetError::Expression { .. })),
                "{bad:?} should fail"
            );
        }
    }
}
