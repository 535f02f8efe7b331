//! Safe arithmetic calculator.
//!
//! Input is tokenized and parsed by a small recursive-descent parser into
//! an [`Expr`] tree that can only hold numbers, unary minus, the four basic
//! operators, and grouping. There are no identifiers, calls, or statements,
//! so nothing in the input can reach a general evaluator.
//!
//! Grammar (unary binds tighter than `* /`, which bind tighter than `+ -`;
//! binary operators are left-associative):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | '(' expr ')'
//! number  := digits ['.' digits] | '.' digits
//! ```

use std::fmt;

use thiserror::Error;

pub const MAX_INPUT_LEN: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalcError {
    #[error("expression is {len} characters long; the limit is {MAX_INPUT_LEN}")]
    TooLong { len: usize },
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("result is too large to represent")]
    NonFinite,
}

impl CalcError {
    pub fn is_syntax(&self) -> bool {
        matches!(self, CalcError::Syntax { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self) -> Result<f64, CalcError> {
        let v = match self {
            Expr::Number(n) => *n,
            Expr::Neg(inner) => -inner.eval()?,
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval()?;
                let b = rhs.eval()?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(CalcError::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CalcError::NonFinite)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    Op(BinOp),
    LParen,
    RParen,
}

fn tokenize(input: &str) -> Result<Vec<(usize, Tok)>, CalcError> {
    let chars: Vec<(usize, char)> = input.chars().enumerate().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '+' => Tok::Op(BinOp::Add),
            '-' | '\u{2212}' => Tok::Op(BinOp::Sub),
            '*' | '\u{00D7}' => Tok::Op(BinOp::Mul),
            '/' | '\u{00F7}' => Tok::Op(BinOp::Div),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '0'..='9' | '.' => {
                let start = i;
                let mut seen_dot = false;
                while i < chars.len() {
                    match chars[i].1 {
                        '0'..='9' => {}
                        '.' if !seen_dot => seen_dot = true,
                        _ => break,
                    }
                    i += 1;
                }
                let text: String = chars[start..i].iter().map(|(_, c)| *c).collect();
                if text == "." || text.ends_with('.') {
                    return Err(CalcError::Syntax {
                        pos,
                        message: format!("malformed number '{text}'"),
                    });
                }
                let value = text.parse::<f64>().map_err(|_| CalcError::Syntax {
                    pos,
                    message: format!("malformed number '{text}'"),
                })?;
                out.push((pos, Tok::Num(value)));
                continue;
            }
            other => {
                return Err(CalcError::Syntax {
                    pos,
                    message: format!("unexpected character '{other}'"),
                })
            }
        };
        out.push((pos, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<Tok> {
        self.tokens.get(self.at).map(|(_, t)| *t)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.at).map_or(self.end, |(p, _)| *p)
    }

    fn error(&self, message: impl Into<String>) -> CalcError {
        CalcError::Syntax {
            pos: self.pos(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Expr, CalcError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ (BinOp::Add | BinOp::Sub))) = self.peek() {
            self.at += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, CalcError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ (BinOp::Mul | BinOp::Div))) = self.peek() {
            self.at += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, CalcError> {
        if let Some(Tok::Op(BinOp::Sub)) = self.peek() {
            self.at += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, CalcError> {
        match self.peek() {
            Some(Tok::Num(n)) => {
                self.at += 1;
                Ok(Expr::Number(n))
            }
            Some(Tok::LParen) => {
                self.at += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.at += 1;
                        Ok(inner)
                    }
                    _ => Err(self.error("expected ')'")),
                }
            }
            Some(Tok::RParen) => Err(self.error("unexpected ')'")),
            Some(Tok::Op(op)) => Err(self.error(format!("unexpected operator '{op}'"))),
            None => Err(self.error("unexpected end of expression")),
        }
    }
}

/// Parses `input` into an expression tree.
pub fn parse_expression(input: &str) -> Result<Expr, CalcError> {
    let len = input.chars().count();
    if len > MAX_INPUT_LEN {
        return Err(CalcError::TooLong { len });
    }
    let tokens = tokenize(input)?;
    let mut parser = Parser {
        tokens,
        at: 0,
        end: len,
    };
    let expr = parser.expr()?;
    if parser.at < parser.tokens.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

/// Parses and evaluates an arithmetic expression.
pub fn eval_expression(input: &str) -> Result<f64, CalcError> {
    parse_expression(input)?.eval()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        assert_eq!(eval_expression("2+3*4").unwrap(), 14.0);
        assert_eq!(eval_expression("(2+3)*4").unwrap(), 20.0);
        assert_eq!(eval_expression("10-4-3").unwrap(), 3.0);
        assert_eq!(eval_expression("64/4/2").unwrap(), 8.0);
        assert_eq!(eval_expression("-2*3").unwrap(), -6.0);
        assert_eq!(eval_expression("2*-3").unwrap(), -6.0);
        assert_eq!(eval_expression("--2").unwrap(), 2.0);
        assert_eq!(eval_expression("3 × 4 ÷ 2").unwrap(), 6.0);
    }

    #[test]
    fn pizza_fractions() {
        assert_eq!(eval_expression("(1/4)+(2/4)").unwrap(), 0.75);
    }

    #[test]
    fn division_by_zero() {
        assert_eq!(eval_expression("1/0"), Err(CalcError::DivisionByZero));
        assert_eq!(eval_expression("1/(2-2)"), Err(CalcError::DivisionByZero));
    }

    #[test]
    fn injection_shapes_are_syntax_errors() {
        for bad in ["import os", "a+b", "2;2", "__import__('os')", "2**3", "1e5", "", "(", "2+", ")"] {
            let err = eval_expression(bad).unwrap_err();
            assert!(err.is_syntax(), "{bad}: {err:?}");
        }
    }

    #[test]
    fn syntax_error_positions() {
        assert_eq!(
            eval_expression("2 + x"),
            Err(CalcError::Syntax {
                pos: 4,
                message: "unexpected character 'x'".into()
            })
        );
        match eval_expression("(1+2") {
            Err(CalcError::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn length_limit() {
        let long = "1+".repeat(128) + "1";
        assert!(matches!(eval_expression(&long), Err(CalcError::TooLong { len: 257 })));
        let ok = "1+".repeat(127) + "1";
        assert_eq!(eval_expression(&ok).unwrap(), 128.0);
    }

    #[test]
    fn decimals() {
        assert_eq!(eval_expression(".5 + 0.25").unwrap(), 0.75);
        assert!(eval_expression("1.2.3").unwrap_err().is_syntax());
        assert!(eval_expression("3.").unwrap_err().is_syntax());
    }
}
