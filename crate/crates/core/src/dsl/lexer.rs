use super::ast::Span;
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Str(String),
    Number(f64),
    Comment(String),
    KwPolicy,
    KwDefault,
    KwRule,
    KwWhen,
    KwIn,
    KwTrue,
    KwFalse,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Comma,
    Dot,
    Arrow,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

impl TokenKind {
    /// Human-readable token description used in expected-token sets.
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Str(s) => format!("string \"{s}\""),
            TokenKind::Number(n) => format!("number {n}"),
            TokenKind::Comment(_) => "comment".into(),
            TokenKind::Eof => "end of input".into(),
            other => format!("`{}`", other.text()),
        }
    }

    pub fn text(&self) -> &'static str {
        match self {
            TokenKind::KwPolicy => "policy",
            TokenKind::KwDefault => "default",
            TokenKind::KwRule => "rule",
            TokenKind::KwWhen => "when",
            TokenKind::KwIn => "in",
            TokenKind::KwTrue => "true",
            TokenKind::KwFalse => "false",
            TokenKind::LBrace => "{",
            TokenKind::RBrace => "}",
            TokenKind::LParen => "(",
            TokenKind::RParen => ")",
            TokenKind::Semi => ";",
            TokenKind::Comma => ",",
            TokenKind::Dot => ".",
            TokenKind::Arrow => "->",
            TokenKind::Assign => "=",
            TokenKind::EqEq => "==",
            TokenKind::NotEq => "!=",
            TokenKind::Lt => "<",
            TokenKind::Le => "<=",
            TokenKind::Gt => ">",
            TokenKind::Ge => ">=",
            TokenKind::AndAnd => "&&",
            TokenKind::OrOr => "||",
            TokenKind::Bang => "!",
            TokenKind::Ident(_)
            | TokenKind::Str(_)
            | TokenKind::Number(_)
            | TokenKind::Comment(_)
            | TokenKind::Eof => "",
        }
    }
}

pub const KEYWORDS: &[&str] = &["policy", "default", "rule", "when", "in", "true", "false"];

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span { line: self.line, col: self.col }
    }
}

fn lex_error(span: Span, message: impl Into<String>) -> ParseError {
    ParseError { line: span.line, col: span.col, expected: Vec::new(), found: message.into() }
}

/// Splits policy source into tokens. Comments are kept as tokens so the
/// parser can attach them to the following item.
pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let mut cur = Cursor { chars: source.char_indices().peekable(), line: 1, col: 1 };
    let mut out = Vec::new();
    while let Some(c) = cur.peek() {
        let span = cur.span();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        let kind = match c {
            '#' => {
                cur.bump();
                let mut text = String::new();
                while let Some(c) = cur.peek() {
                    if c == '\n' {
                        break;
                    }
                    text.push(c);
                    cur.bump();
                }
                TokenKind::Comment(text.trim_end().to_string())
            }
            '"' => {
                cur.bump();
                let mut text = String::new();
                loop {
                    match cur.bump() {
                        Some('"') => break,
                        Some('\\') => match cur.bump() {
                            Some(c @ ('"' | '\\')) => text.push(c),
                            _ => return Err(lex_error(cur.span(), "invalid escape in string")),
                        },
                        Some('\n') | None => return Err(lex_error(span, "unterminated string")),
                        Some(c) => text.push(c),
                    }
                }
                TokenKind::Str(text)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut word = String::new();
                while let Some(c) = cur.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        cur.bump();
                    } else {
                        break;
                    }
                }
                match word.as_str() {
                    "policy" => TokenKind::KwPolicy,
                    "default" => TokenKind::KwDefault,
                    "rule" => TokenKind::KwRule,
                    "when" => TokenKind::KwWhen,
                    "in" => TokenKind::KwIn,
                    "true" => TokenKind::KwTrue,
                    "false" => TokenKind::KwFalse,
                    _ => TokenKind::Ident(word),
                }
            }
            c if c.is_ascii_digit() || c == '-' => {
                let mut text = String::new();
                text.push(c);
                cur.bump();
                if c == '-' {
                    match cur.peek() {
                        Some('>') => {
                            cur.bump();
                            out.push(Token { kind: TokenKind::Arrow, span });
                            continue;
                        }
                        Some(d) if d.is_ascii_digit() => {}
                        _ => return Err(lex_error(span, "expected `->` or a number after `-`")),
                    }
                }
                let mut seen_dot = false;
                while let Some(c) = cur.peek() {
                    if c.is_ascii_digit() {
                        text.push(c);
                        cur.bump();
                    } else if c == '.' && !seen_dot {
                        seen_dot = true;
                        text.push(c);
                        cur.bump();
                        if !cur.peek().is_some_and(|d| d.is_ascii_digit()) {
                            return Err(lex_error(cur.span(), "expected digit after decimal point"));
                        }
                    } else {
                        break;
                    }
                }
                let n: f64 = text
                    .parse()
                    .map_err(|_| lex_error(span, format!("invalid number `{text}`")))?;
                TokenKind::Number(n)
            }
            _ => {
                cur.bump();
                let next = cur.peek();
                let two = |cur: &mut Cursor, k: TokenKind| {
                    cur.bump();
                    k
                };
                match (c, next) {
                    ('{', _) => TokenKind::LBrace,
                    ('}', _) => TokenKind::RBrace,
                    ('(', _) => TokenKind::LParen,
                    (')', _) => TokenKind::RParen,
                    (';', _) => TokenKind::Semi,
                    (',', _) => TokenKind::Comma,
                    ('.', _) => TokenKind::Dot,
                    ('=', Some('=')) => two(&mut cur, TokenKind::EqEq),
                    ('=', _) => TokenKind::Assign,
                    ('!', Some('=')) => two(&mut cur, TokenKind::NotEq),
                    ('!', _) => TokenKind::Bang,
                    ('<', Some('=')) => two(&mut cur, TokenKind::Le),
                    ('<', _) => TokenKind::Lt,
                    ('>', Some('=')) => two(&mut cur, TokenKind::Ge),
                    ('>', _) => TokenKind::Gt,
                    ('&', Some('&')) => two(&mut cur, TokenKind::AndAnd),
                    ('|', Some('|')) => two(&mut cur, TokenKind::OrOr),
                    _ => return Err(lex_error(span, format!("unexpected character `{c}`"))),
                }
            }
        };
        out.push(Token { kind, span });
    }
    out.push(Token { kind: TokenKind::Eof, span: cur.span() });
    Ok(out)
}
