//! Prefix s-expression text format: `(add x0 (mul 2 x1))`.
//!
//! Features are written `x<index>`; constants use the shortest decimal form
//! that reads back to the same `f64`.

use std::fmt;
use std::str::FromStr;

use super::{Expression, Node, Op};
use crate::error::{Error, Result};

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // (remaining children, needs closing paren) per open function
        let mut open: Vec<usize> = Vec::new();
        for (i, node) in self.nodes().iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            match node {
                Node::Func(op) => {
                    write!(f, "({}", op.name())?;
                    open.push(op.arity());
                    continue;
                }
                Node::Feature(idx) => write!(f, "x{idx}")?,
                Node::Const(c) => write!(f, "{c}")?,
            }
            // a terminal completes one child of each finished ancestor
            while let Some(top) = open.last_mut() {
                *top -= 1;
                if *top == 0 {
                    f.write_str(")")?;
                    open.pop();
                } else {
                    break;
                }
            }
        }
        Ok(())
    }
}

impl Expression {
    /// Parses the s-expression format.
    pub fn parse(text: &str) -> Result<Expression> {
        let tokens = tokenize(text);
        let mut parser = Parser { tokens: &tokens, pos: 0, end: text.len(), nodes: Vec::new() };
        parser.expr()?;
        if let Some(tok) = parser.tokens.get(parser.pos) {
            return Err(parse_err(tok.pos, format!("unexpected trailing token `{}`", tok.text)));
        }
        Expression::from_nodes(parser.nodes)
    }
}

impl FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expression::parse(s)
    }
}

struct Token<'a> {
    text: &'a str,
    pos: usize,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        let delimiter = ch == '(' || ch == ')' || ch.is_whitespace();
        if delimiter {
            if let Some(s) = start.take() {
                out.push(Token { text: &text[s..i], pos: s });
            }
            if !ch.is_whitespace() {
                out.push(Token { text: &text[i..i + 1], pos: i });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token { text: &text[s..], pos: s });
    }
    out
}

fn parse_err(pos: usize, message: impl Into<String>) -> Error {
    Error::Parse { pos, message: message.into() }
}

struct Parser<'t, 'a> {
    tokens: &'t [Token<'a>],
    pos: usize,
    end: usize,
    nodes: Vec<Node>,
}

impl<'t, 'a> Parser<'t, 'a> {
    fn next(&mut self, what: &str) -> Result<&'t Token<'a>> {
        let tok = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| parse_err(self.end, format!("expected {what}, found end of input")))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expr(&mut self) -> Result<()> {
        let tok = self.next("expression")?;
        let (text, pos) = (tok.text, tok.pos);
        match text {
            "(" => {
                let head = self.next("operator")?;
                let (name, head_pos) = (head.text, head.pos);
                let op =
                    Op::from_name(name).ok_or_else(|| parse_err(head_pos, format!("unknown operator `{name}`")))?;
                self.nodes.push(Node::Func(op));
                let mut count = 0;
                loop {
                    match self.tokens.get(self.pos) {
                        Some(t) if t.text == ")" => {
                            let close = t.pos;
                            self.pos += 1;
                            if count != op.arity() {
                                return Err(parse_err(
                                    close,
                                    format!("`{}` takes {} argument(s), got {count}", op.name(), op.arity()),
                                ));
                            }
                            return Ok(());
                        }
                        Some(_) => {
                            self.expr()?;
                            count += 1;
                        }
                        None => return Err(parse_err(self.end, "unclosed `(`")),
                    }
                }
            }
            ")" => Err(parse_err(pos, "unexpected `)`")),
            atom => {
                self.nodes.push(parse_atom(atom, pos)?);
                Ok(())
            }
        }
    }
}

fn parse_atom(atom: &str, pos: usize) -> Result<Node> {
    if let Some(idx) = atom.strip_prefix('x') {
        return idx
            .parse::<usize>()
            .map(Node::Feature)
            .map_err(|_| parse_err(pos, format!("bad feature token `{atom}`")));
    }
    if Op::from_name(atom).is_some() {
        return Err(parse_err(pos, format!("operator `{atom}` must follow `(`")));
    }
    match atom.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Node::Const(v)),
        _ => Err(parse_err(pos, format!("bad constant `{atom}`"))),
    }
}
