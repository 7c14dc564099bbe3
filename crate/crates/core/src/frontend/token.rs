//! Tokenizer for EDL source text.
//!
//! `#` starts a comment running to end of line. Whitespace (including
//! newlines) separates tokens and is otherwise discarded; the parser uses
//! token spans to recover line structure where it matters (statements are
//! line-oriented). Identifiers are plain `[A-Za-z][A-Za-z0-9]*`; index
//! suffixes like `v_i` or `delta^ij` arrive as separate `_` / `^` tokens and
//! are assembled by the parser.

use num::BigRational;

use crate::diag::{DiagCode, DiagResult, Diagnostic};
use crate::span::SourceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Begin,
    End,
    Group,
    Parameters,
    Calculation,
    Derivatives,
}

impl Keyword {
    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Begin => "begin",
            Keyword::End => "end",
            Keyword::Group => "group",
            Keyword::Parameters => "parameters",
            Keyword::Calculation => "calculation",
            Keyword::Derivatives => "derivatives",
        }
    }

    fn from_str(s: &str) -> Option<Keyword> {
        Some(match s {
            "begin" => Keyword::Begin,
            "end" => Keyword::End,
            "group" => Keyword::Group,
            "parameters" => Keyword::Parameters,
            "calculation" => Keyword::Calculation,
            "derivatives" => Keyword::Derivatives,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident(String),
    Number(BigRational),
    Str(String),
    Eq,
    Plus,
    Minus,
    Star,
    StarStar,
    Slash,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Caret,
    Underscore,
}

impl TokenKind {
    /// Short token description for "expected X, found Y" messages.
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Keyword(k) => format!("keyword `{}`", k.as_str()),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Number(_) => "number".to_string(),
            TokenKind::Str(_) => "string".to_string(),
            TokenKind::Eq => "`=`".to_string(),
            TokenKind::Plus => "`+`".to_string(),
            TokenKind::Minus => "`-`".to_string(),
            TokenKind::Star => "`*`".to_string(),
            TokenKind::StarStar => "`**`".to_string(),
            TokenKind::Slash => "`/`".to_string(),
            TokenKind::LParen => "`(`".to_string(),
            TokenKind::RParen => "`)`".to_string(),
            TokenKind::LBracket => "`[`".to_string(),
            TokenKind::RBracket => "`]`".to_string(),
            TokenKind::Comma => "`,`".to_string(),
            TokenKind::Colon => "`:`".to_string(),
            TokenKind::Caret => "`^`".to_string(),
            TokenKind::Underscore => "`_`".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

struct Cursor<'a> {
    rest: std::str::Chars<'a>,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor {
            rest: src.chars(),
            line: 1,
            col: 1,
        }
    }

    fn peek(&self) -> Option<char> {
        self.rest.clone().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.rest.clone();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.rest.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

/// Tokenize EDL source. Returns the full token stream or the first lexical
/// error (unrecognized character, unterminated string), always with a span.
pub fn tokenize(source: &str) -> DiagResult<Vec<Token>> {
    let mut cur = Cursor::new(source);
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '#' {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }

        let (line, col) = (cur.line, cur.col);
        let kind = match c {
            'a'..='z' | 'A'..='Z' => {
                let mut word = String::new();
                while let Some(c) = cur.peek() {
                    if c.is_ascii_alphanumeric() {
                        word.push(c);
                        cur.bump();
                    } else {
                        break;
                    }
                }
                match Keyword::from_str(&word) {
                    Some(kw) => TokenKind::Keyword(kw),
                    None => TokenKind::Ident(word),
                }
            }
            '0'..='9' => lex_number(&mut cur),
            '.' if cur.peek2().is_some_and(|c| c.is_ascii_digit()) => lex_number(&mut cur),
            '"' => {
                cur.bump();
                let mut text = String::new();
                loop {
                    match cur.peek() {
                        Some('"') => {
                            cur.bump();
                            break;
                        }
                        Some('\n') | None => {
                            return Err(Diagnostic::error(
                                DiagCode::UnterminatedString,
                                SourceSpan::new(line, col, cur.line, cur.col.saturating_sub(1).max(1)),
                                "unterminated string literal",
                            ));
                        }
                        Some(c) => {
                            text.push(c);
                            cur.bump();
                        }
                    }
                }
                TokenKind::Str(text)
            }
            '*' => {
                cur.bump();
                if cur.peek() == Some('*') {
                    cur.bump();
                    TokenKind::StarStar
                } else {
                    TokenKind::Star
                }
            }
            _ => {
                cur.bump();
                match c {
                    '=' => TokenKind::Eq,
                    '+' => TokenKind::Plus,
                    '-' => TokenKind::Minus,
                    '/' => TokenKind::Slash,
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    '[' => TokenKind::LBracket,
                    ']' => TokenKind::RBracket,
                    ',' => TokenKind::Comma,
                    ':' => TokenKind::Colon,
                    '^' => TokenKind::Caret,
                    '_' => TokenKind::Underscore,
                    other => {
                        return Err(Diagnostic::error(
                            DiagCode::UnrecognizedCharacter,
                            SourceSpan::point(line, col),
                            format!("unrecognized character `{other}`"),
                        ));
                    }
                }
            }
        };
        // No token spans a line break (strings reject embedded newlines),
        // so the end position is on the starting line.
        let span = SourceSpan::new(line, col, line, (cur.col - 1).max(col));
        tokens.push(Token { kind, span });
    }

    Ok(tokens)
}

/// Lex an unsigned number literal into an exact rational:
/// digits, optional fraction, optional decimal exponent.
fn lex_number(cur: &mut Cursor) -> TokenKind {
    use num::{BigInt, One, Zero};

    let mut int_part = BigInt::zero();
    let mut frac_digits = 0u32;
    while let Some(c) = cur.peek() {
        if let Some(d) = c.to_digit(10) {
            int_part = int_part * 10 + d;
            cur.bump();
        } else {
            break;
        }
    }
    if cur.peek() == Some('.') && cur.peek2().is_some_and(|c| c.is_ascii_digit()) {
        cur.bump();
        while let Some(c) = cur.peek() {
            if let Some(d) = c.to_digit(10) {
                int_part = int_part * 10 + d;
                frac_digits += 1;
                cur.bump();
            } else {
                break;
            }
        }
    }
    let mut exponent: i64 = 0;
    if matches!(cur.peek(), Some('e') | Some('E')) {
        // Only consume the exponent when it is well-formed; `2e` should lex
        // as number `2` followed by identifier `e`.
        let mut probe = cur.rest.clone();
        probe.next();
        let sign = match probe.clone().next() {
            Some('+') => {
                probe.next();
                1
            }
            Some('-') => {
                probe.next();
                -1
            }
            _ => 1,
        };
        if probe.next().is_some_and(|c| c.is_ascii_digit()) {
            cur.bump(); // e
            if matches!(cur.peek(), Some('+') | Some('-')) {
                cur.bump();
            }
            let mut exp = 0i64;
            while let Some(c) = cur.peek() {
                if let Some(d) = c.to_digit(10) {
                    exp = exp * 10 + d as i64;
                    cur.bump();
                } else {
                    break;
                }
            }
            exponent = sign * exp;
        }
    }

    let mut numer = int_part;
    let mut denom = BigInt::one();
    let shift = exponent - frac_digits as i64;
    if shift >= 0 {
        numer *= BigInt::from(10).pow(shift as u32);
    } else {
        denom = BigInt::from(10).pow((-shift) as u32);
    }
    TokenKind::Number(BigRational::new(numer, denom))
}
