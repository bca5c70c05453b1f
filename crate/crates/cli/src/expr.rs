//! Numeric expressions in configs: numbers, `pi`, `inf`, `+ - * / ^`,
//! parentheses and a few functions (`sqrt`, `sin`, `cos`, `tan`, `asin`,
//! `acos`, `atan`).

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub expr: String,
    pub detail: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cannot evaluate `{}`: {}", self.expr, self.detail)
    }
}

impl std::error::Error for ExprError {}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<f64, String> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                acc += self.term()?;
            } else if self.eat(b'-') {
                acc -= self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<f64, String> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                acc *= self.unary()?;
            } else if self.eat(b'/') {
                acc /= self.unary()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<f64, String> {
        if self.eat(b'-') {
            return Ok(-self.unary()?);
        }
        if self.eat(b'+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(base.powf(self.unary()?));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<f64, String> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let v = self.expr()?;
                if !self.eat(b')') {
                    return Err(format!("expected `)` at offset {}", self.pos));
                }
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                match word {
                    "pi" => Ok(std::f64::consts::PI),
                    "inf" => Ok(f64::INFINITY),
                    _ => {
                        let f: fn(f64) -> f64 = match word {
                            "sqrt" => f64::sqrt,
                            "sin" => f64::sin,
                            "cos" => f64::cos,
                            "tan" => f64::tan,
                            "asin" => f64::asin,
                            "acos" => f64::acos,
                            "atan" => f64::atan,
                            _ => return Err(format!("unknown name `{word}`")),
                        };
                        if !self.eat(b'(') {
                            return Err(format!("expected `(` after `{word}`"));
                        }
                        let v = self.expr()?;
                        if !self.eat(b')') {
                            return Err(format!("expected `)` at offset {}", self.pos));
                        }
                        Ok(f(v))
                    }
                }
            }
            Some(c) => Err(format!("unexpected `{}` at offset {}", c as char, self.pos)),
            None => Err("unexpected end of input".into()),
        }
    }

    fn number(&mut self) -> Result<f64, String> {
        let start = self.pos;
        let digits = |p: &mut Parser| {
            while p.pos < p.src.len() && (p.src[p.pos].is_ascii_digit() || p.src[p.pos] == b'.') {
                p.pos += 1;
            }
        };
        digits(self);
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map_err(|_| format!("bad number `{text}`"))
    }
}

/// Evaluate an expression such as `3*pi/4` or `pi/sqrt(3)`.
pub fn eval(src: &str) -> Result<f64, ExprError> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    let wrap = |detail: String| ExprError {
        expr: src.to_string(),
        detail,
    };
    let v = p.expr().map_err(wrap)?;
    if p.peek().is_some() {
        return Err(wrap(format!("trailing input at offset {}", p.pos)));
    }
    if v.is_nan() {
        return Err(wrap("result is not a number".into()));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn evaluates_pi_expressions() {
        assert_eq!(eval("pi/4").unwrap(), PI / 4.0);
        assert_eq!(eval("3*pi/4").unwrap(), 3.0 * PI / 4.0);
        assert_eq!(eval("pi/sqrt(3)").unwrap(), PI / 3f64.sqrt());
        assert_eq!(eval(" -(1 + 2) * 2 ").unwrap(), -6.0);
        assert_eq!(eval("2^-1").unwrap(), 0.5);
        assert_eq!(eval("1e-3").unwrap(), 1e-3);
        assert_eq!(eval("2.5E+2").unwrap(), 250.0);
        assert_eq!(eval("inf").unwrap(), f64::INFINITY);
        assert_eq!(eval("pi/2 - pi/4").unwrap(), PI / 2.0 - PI / 4.0);
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in ["", "pi pi", "(1", "foo", "sqrt 2", "1/", "asin(2)"] {
            assert!(eval(bad).is_err(), "{bad}");
        }
    }
}
