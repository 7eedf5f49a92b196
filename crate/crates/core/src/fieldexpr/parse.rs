use std::collections::HashMap;
use std::sync::Arc;

use super::{Chart, ExprError, FieldExpr, Func, Profile};

/// Symbols available to the parser beyond the chart coordinates.
#[derive(Clone, Debug, Default)]
pub struct ParseContext {
    profiles: HashMap<String, Arc<Profile>>,
}

impl ParseContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_profile(mut self, profile: Arc<Profile>) -> Self {
        self.profiles.insert(profile.name().to_string(), profile);
        self
    }
}

/// Parse with the standard chart of dimension `dim`.
pub fn parse_field(text: &str, dim: usize) -> Result<FieldExpr, ExprError> {
    parse_field_in(text, &Chart::standard(dim), &ParseContext::default())
}

pub fn parse_field_in(
    text: &str,
    chart: &Chart,
    ctx: &ParseContext,
) -> Result<FieldExpr, ExprError> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        chart,
        ctx,
        end: text.len(),
    };
    let e = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(ExprError::Syntax {
            offset: t.offset,
            message: format!("unexpected {:?}", t.kind),
        });
    }
    Ok(e)
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct Token {
    kind: Kind,
    offset: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit())
        {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit = &text[start..i];
            let v: f64 = lit.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{lit}`"),
            })?;
            out.push(Token {
                kind: Kind::Num(v),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: Kind::Ident(text[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        let kind = match c {
            '+' | '-' | '*' | '/' | '^' => Kind::Op(c),
            '(' => Kind::LParen,
            ')' => Kind::RParen,
            _ => {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push(Token {
            kind,
            offset: start,
        });
        i += c.len_utf8();
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    chart: &'a Chart,
    ctx: &'a ParseContext,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if matches!(self.peek(), Some(Token { kind: Kind::Op(c), .. }) if *c == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: Kind, what: &str) -> Result<(), ExprError> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(ExprError::Syntax {
                offset: self.offset(),
                message: format!("expected {what}"),
            }),
        }
    }

    fn expr(&mut self) -> Result<FieldExpr, ExprError> {
        let mut acc = self.term()?;
        loop {
            if self.eat_op('+') {
                acc = acc + self.term()?;
            } else if self.eat_op('-') {
                acc = acc - self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<FieldExpr, ExprError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat_op('*') {
                acc = acc * self.unary()?;
            } else if self.eat_op('/') {
                acc = acc / self.unary()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<FieldExpr, ExprError> {
        if self.eat_op('-') {
            return Ok(-self.unary()?);
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<FieldExpr, ExprError> {
        let base = self.atom()?;
        if self.eat_op('^') {
            let exponent = self.unary()?;
            return Ok(base.pow(&exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<FieldExpr, ExprError> {
        let dim = self.chart.dim();
        let Some(tok) = self.peek().cloned() else {
            return Err(ExprError::Syntax {
                offset: self.end,
                message: "unexpected end of input".into(),
            });
        };
        self.pos += 1;
        match tok.kind {
            Kind::Num(v) => Ok(FieldExpr::constant(v, dim)),
            Kind::LParen => {
                let e = self.expr()?;
                self.expect(Kind::RParen, "`)`")?;
                Ok(e)
            }
            Kind::Ident(name) => {
                if matches!(self.peek(), Some(Token { kind: Kind::LParen, .. })) {
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(Kind::RParen, "`)`")?;
                    return self.apply(&name, tok.offset, arg);
                }
                self.symbol(&name, tok.offset)
            }
            other => Err(ExprError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {other:?}"),
            }),
        }
    }

    fn symbol(&self, name: &str, offset: usize) -> Result<FieldExpr, ExprError> {
        let dim = self.chart.dim();
        if let Some(i) = self.chart.index_of(name) {
            return Ok(FieldExpr::var(i, dim));
        }
        match name {
            "pi" => return Ok(FieldExpr::constant(std::f64::consts::PI, dim)),
            "e" => return Ok(FieldExpr::constant(std::f64::consts::E, dim)),
            _ => {}
        }
        if looks_like_coordinate(name) {
            return Err(ExprError::DimensionMismatch {
                name: name.to_string(),
                dim,
            });
        }
        Err(ExprError::UnknownSymbol {
            name: name.to_string(),
            offset,
        })
    }

    fn apply(&self, name: &str, offset: usize, arg: FieldExpr) -> Result<FieldExpr, ExprError> {
        let f = match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "expinv" => Func::ExpInv(0),
            "bump" => return Ok(arg.bump()),
            "smoothstep" => return Ok(arg.smoothstep()),
            _ => {
                let (base, order) = split_order(name);
                if base == "expinv" {
                    Func::ExpInv(order)
                } else if let Some(p) = self.ctx.profiles.get(base) {
                    Func::Profile(p.clone(), order)
                } else if let Some(p) = self.ctx.profiles.get(name) {
                    Func::Profile(p.clone(), 0)
                } else {
                    return Err(ExprError::UnknownSymbol {
                        name: name.to_string(),
                        offset,
                    });
                }
            }
        };
        Ok(arg.call(f))
    }
}

fn split_order(name: &str) -> (&str, u32) {
    if let Some((base, k)) = name.rsplit_once('_') {
        if let Ok(order) = k.parse() {
            return (base, order);
        }
    }
    (name, 0)
}

// x1, y3, q2, p1, c4 ...
fn looks_like_coordinate(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some('x' | 'y' | 'q' | 'p' | 'c' | 'z' | 'u'))
        && !name[1..].is_empty()
        && name[1..].chars().all(|c| c.is_ascii_digit())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_model_vanishes_at_origin() {
        let f = parse_field("x - x^3/3 - x*y^2", 2).unwrap();
        assert_eq!(f.eval(&[0.0, 0.0]).unwrap(), 0.0);
        let v = f.eval(&[0.5, 0.2]).unwrap();
        let expected = 0.5 - 0.125 / 3.0 - 0.5 * 0.04;
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn chi_of_gcondition_example() {
        let chi = parse_field("sqrt(2*z + 2)", 4).unwrap();
        assert!((chi.eval(&[0.0, 0.0, 1.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(chi.eval(&[0.0, 0.0, -1.5, 0.0]).is_err());
    }

    #[test]
    fn truncated_input_reports_offset() {
        let err = parse_field("1 +", 2).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { offset: 3, .. }), "{err:?}");
        let err = parse_field("(x + y", 2).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { offset: 6, .. }), "{err:?}");
        let err = parse_field("x $ y", 2).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { offset: 2, .. }), "{err:?}");
    }

    #[test]
    fn unknown_symbols_and_dimension() {
        assert!(matches!(
            parse_field("foo + x", 2),
            Err(ExprError::UnknownSymbol { offset: 0, .. })
        ));
        assert!(matches!(
            parse_field("x + x3", 4),
            Err(ExprError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            parse_field("wobble(x)", 2),
            Err(ExprError::UnknownSymbol { .. })
        ));
    }

    #[test]
    fn precedence_and_associativity() {
        let f = parse_field("-x^2 + 2^3^0 - 8/2/2", 2).unwrap();
        assert!((f.eval(&[3.0, 0.0]).unwrap() - (-9.0 + 2.0 - 2.0)).abs() < 1e-15);
        let g = parse_field("1.5e-1*y + pi - e", 2).unwrap();
        let expected = 0.15 * 2.0 + std::f64::consts::PI - std::f64::consts::E;
        assert!((g.eval(&[0.0, 2.0]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn named_chart_and_derivative_functions() {
        let chart = Chart::with_names(&["q", "p"]);
        let f = parse_field_in("p*cos(q) + expinv_1(p)", &chart, &ParseContext::new()).unwrap();
        let v = f.eval(&[0.0, 0.5]).unwrap();
        // d/du exp(-1/u) = exp(-1/u)/u^2
        let expected = 0.5 + (-2.0f64).exp() * 4.0;
        assert!((v - expected).abs() < 1e-14);
    }
}
