//! Recursive-descent parser for `.dcp` policy files.
//!
//! ```text
//! policy  := "policy" STRING "{" "default" "->" pathway ";" rule* "}"
//! rule    := "rule" IDENT "when" expr "->" pathway ";"
//! pathway := "ai_only" | "clinician_only" | "clinician_and_ai" [ "(" "priority" "=" IDENT ")" ]
//! expr    := and ( "||" and )*
//! and     := unary ( "&&" unary )*
//! unary   := "!" unary | atom
//! atom    := "(" expr ")" | path cmp literal | path "in" "{" literal ( "," literal )* "}"
//! path    := IDENT ( "." IDENT )+
//! ```
//!
//! Comments directly above the `policy` keyword, the `default` line, a rule
//! or the closing brace are kept in the AST; comments anywhere else are
//! discarded.

use super::ast::{CmpOp, Expr, FieldPath, Literal, Policy, Rule, Span};
use super::lexer::{tokenize, Token, TokenKind};
use super::ParseError;
use crate::model::{Pathway, Priority};

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

fn expected(items: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = items.iter().map(|s| s.to_string()).collect();
    v.sort();
    v
}

impl Parser {
    fn take_comments(&mut self) -> Vec<String> {
        let mut out = Vec::new();
        while let TokenKind::Comment(text) = &self.tokens[self.pos].kind {
            out.push(text.clone());
            self.pos += 1;
        }
        out
    }

    fn skip_comments(&mut self) {
        while matches!(self.tokens[self.pos].kind, TokenKind::Comment(_)) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> &Token {
        self.skip_comments();
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        self.skip_comments();
        let tok = self.tokens[self.pos].clone();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn error_at(&self, tok: &Token, expected: Vec<String>) -> ParseError {
        ParseError {
            line: tok.span.line,
            col: tok.span.col,
            expected,
            found: tok.kind.describe(),
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<Token, ParseError> {
        let tok = self.next();
        if tok.kind == kind {
            Ok(tok)
        } else {
            Err(self.error_at(&tok, vec![format!("`{}`", kind.text())]))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        let tok = self.next();
        match tok.kind {
            TokenKind::Ident(s) => Ok((s, tok.span)),
            _ => Err(self.error_at(&tok, vec![what.to_string()])),
        }
    }

    fn policy(&mut self) -> Result<Policy, ParseError> {
        let header_comments = self.take_comments();
        self.expect(TokenKind::KwPolicy)?;
        let tok = self.next();
        let name = match tok.kind {
            TokenKind::Str(s) => s,
            _ => return Err(self.error_at(&tok, vec!["policy name string".into()])),
        };
        self.expect(TokenKind::LBrace)?;
        let default_comments = self.take_comments();
        let default_tok = self.expect(TokenKind::KwDefault)?;
        self.expect(TokenKind::Arrow)?;
        let default_pathway = self.pathway()?;
        self.expect(TokenKind::Semi)?;

        let mut rules = Vec::new();
        let trailing_comments = loop {
            let comments = self.take_comments();
            let tok = self.next();
            match tok.kind {
                TokenKind::KwRule => {
                    let mut rule = self.rule_body(tok.span)?;
                    rule.comments = comments;
                    rules.push(rule);
                }
                TokenKind::RBrace => break comments,
                _ => return Err(self.error_at(&tok, expected(&["`rule`", "`}`"]))),
            }
        };
        let mut trailing_comments = trailing_comments;
        trailing_comments.extend(self.take_comments());
        let tok = self.next();
        if tok.kind != TokenKind::Eof {
            return Err(self.error_at(&tok, vec!["end of input".into()]));
        }
        Ok(Policy {
            name,
            default_pathway,
            rules,
            header_comments,
            default_comments,
            trailing_comments,
            default_span: default_tok.span,
        })
    }

    fn rule_body(&mut self, span: Span) -> Result<Rule, ParseError> {
        let (rule_id, _) = self.ident("rule identifier")?;
        self.expect(TokenKind::KwWhen)?;
        let condition = self.or_expr()?;
        self.expect(TokenKind::Arrow)?;
        let target = self.pathway()?;
        self.expect(TokenKind::Semi)?;
        Ok(Rule { rule_id, condition, target, comments: Vec::new(), span })
    }

    fn pathway(&mut self) -> Result<Pathway, ParseError> {
        const PATHWAYS: &[&str] = &["`ai_only`", "`clinician_only`", "`clinician_and_ai`"];
        let tok = self.next();
        let name = match &tok.kind {
            TokenKind::Ident(s) => s.as_str(),
            _ => return Err(self.error_at(&tok, expected(PATHWAYS))),
        };
        match name {
            "ai_only" => Ok(Pathway::AiOnly),
            "clinician_only" => Ok(Pathway::ClinicianOnly),
            "clinician_and_ai" => {
                if self.peek().kind != TokenKind::LParen {
                    return Ok(Pathway::ClinicianAndAi { priority: None });
                }
                self.next();
                let (key, key_span) = self.ident("`priority`")?;
                if key != "priority" {
                    let tok = Token { kind: TokenKind::Ident(key), span: key_span };
                    return Err(self.error_at(&tok, vec!["`priority`".into()]));
                }
                self.expect(TokenKind::Assign)?;
                let tok = self.next();
                let priority = match &tok.kind {
                    TokenKind::Ident(s) if s == "urgent" => Priority::Urgent,
                    TokenKind::Ident(s) if s == "routine" => Priority::Routine,
                    _ => return Err(self.error_at(&tok, expected(&["`urgent`", "`routine`"]))),
                };
                self.expect(TokenKind::RParen)?;
                Ok(Pathway::ClinicianAndAi { priority: Some(priority) })
            }
            _ => Err(self.error_at(&tok, expected(PATHWAYS))),
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.peek().kind == TokenKind::OrOr {
            self.next();
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while self.peek().kind == TokenKind::AndAnd {
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek().kind == TokenKind::Bang {
            self.next();
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        if self.peek().kind == TokenKind::LParen {
            self.next();
            let inner = self.or_expr()?;
            self.expect(TokenKind::RParen)?;
            return Ok(inner);
        }
        let tok = self.next();
        let (first, span) = match tok.kind {
            TokenKind::Ident(s) => (s, tok.span),
            _ => {
                return Err(self.error_at(&tok, expected(&["field path", "`(`", "`!`"])));
            }
        };
        let mut segments = vec![first];
        loop {
            let tok = self.peek().clone();
            if tok.kind != TokenKind::Dot {
                if segments.len() < 2 {
                    return Err(self.error_at(&tok, vec!["`.`".into()]));
                }
                break;
            }
            self.next();
            segments.push(self.ident("field name")?.0);
        }
        let path = FieldPath { segments, span };

        let tok = self.next();
        let op = match tok.kind {
            TokenKind::EqEq => CmpOp::Eq,
            TokenKind::NotEq => CmpOp::Ne,
            TokenKind::Lt => CmpOp::Lt,
            TokenKind::Le => CmpOp::Le,
            TokenKind::Gt => CmpOp::Gt,
            TokenKind::Ge => CmpOp::Ge,
            TokenKind::KwIn => {
                self.expect(TokenKind::LBrace)?;
                let mut values = vec![self.literal()?];
                loop {
                    let tok = self.next();
                    match tok.kind {
                        TokenKind::Comma => values.push(self.literal()?),
                        TokenKind::RBrace => break,
                        _ => return Err(self.error_at(&tok, expected(&["`,`", "`}`"]))),
                    }
                }
                return Ok(Expr::In { path, values });
            }
            _ => {
                return Err(self.error_at(
                    &tok,
                    expected(&["`==`", "`!=`", "`<`", "`<=`", "`>`", "`>=`", "`in`", "`.`"]),
                ))
            }
        };
        let value = self.literal()?;
        Ok(Expr::Compare { path, op, value })
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let tok = self.next();
        match tok.kind {
            TokenKind::KwTrue => Ok(Literal::Bool(true)),
            TokenKind::KwFalse => Ok(Literal::Bool(false)),
            TokenKind::Number(n) => Ok(Literal::Number(n)),
            TokenKind::Ident(s) => Ok(Literal::Ident(s)),
            _ => Err(self.error_at(&tok, expected(&["literal"]))),
        }
    }
}

/// Parses a complete policy. The first error aborts.
pub fn parse_policy(source: &str) -> Result<Policy, ParseError> {
    let tokens = tokenize(source)?;
    Parser { tokens, pos: 0 }.policy()
}
