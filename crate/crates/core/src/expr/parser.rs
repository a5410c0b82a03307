use super::{Expr, ExprError, Scope};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64, bool),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn syntax(offset: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax { offset, message: message.into() }
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let token = match c {
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'/' => Token::Slash,
            b'^' => Token::Caret,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'0'..=b'9' | b'.' => {
                let mut integral = true;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    integral = false;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        integral = false;
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let literal = &text[start..i];
                let value: f64 = literal
                    .parse()
                    .map_err(|_| syntax(start, format!("malformed number `{literal}`")))?;
                tokens.push((Token::Number(value, integral), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push((Token::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        tokens.push((token, start));
        i += 1;
    }
    tokens.push((Token::End, text.len()));
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    scope: &'a Scope,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> (Token, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.signed()?;
        loop {
            match self.peek() {
                Token::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.signed()?));
                }
                Token::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.signed()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn signed(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Token::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.signed()?)));
        }
        self.term()
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Token::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Token::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Token::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let mut base = self.primary()?;
        while *self.peek() == Token::Caret {
            self.bump();
            let offset = self.offset();
            match self.bump().0 {
                Token::Number(v, true) if v >= 0.0 && v <= u32::MAX as f64 => {
                    base = Expr::Pow(Box::new(base), v as u32);
                }
                Token::Number(..) | Token::Minus => return Err(ExprError::BadExponent { offset }),
                _ => return Err(syntax(offset, "expected integer exponent after `^`")),
            }
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let (token, offset) = self.bump();
        match token {
            Token::Number(v, _) => Ok(Expr::Const(v)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => match name.as_str() {
                "exp" | "ln" => {
                    if *self.peek() != Token::LParen {
                        return Err(syntax(self.offset(), format!("expected `(` after `{name}`")));
                    }
                    self.bump();
                    let arg = Box::new(self.expr()?);
                    self.expect_rparen()?;
                    Ok(if name == "exp" { Expr::Exp(arg) } else { Expr::Ln(arg) })
                }
                super::INPUT_NAME => Ok(Expr::Input),
                super::TIME_NAME => Ok(Expr::Time),
                _ => self
                    .scope
                    .resolve(&name)
                    .ok_or(ExprError::UnknownIdentifier { name, offset }),
            },
            Token::End => Err(syntax(offset, "unexpected end of input")),
            other => Err(syntax(offset, format!("unexpected token {other:?}"))),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        let offset = self.offset();
        match self.bump().0 {
            Token::RParen => Ok(()),
            _ => Err(syntax(offset, "expected `)`")),
        }
    }
}

/// Parses `text` with identifiers resolved against `scope`.
pub fn parse(text: &str, scope: &Scope) -> Result<Expr, ExprError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0, scope };
    if *parser.peek() == Token::End {
        return Err(syntax(0, "empty expression"));
    }
    let e = parser.expr()?;
    match parser.peek() {
        Token::End => Ok(e),
        _ => Err(syntax(parser.offset(), "unexpected trailing input")),
    }
}
