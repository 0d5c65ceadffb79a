//! Tokenizer and recursive-descent parser for the mini-IR text format.
//!
//! The grammar is token-based: newlines are whitespace, so both the
//! conventional one-instruction-per-line layout and compact forms like
//! `fn main { b0: exit 0 }` parse. Every instruction is self-delimiting
//! (fixed arity per opcode). Opcode keywords are reserved and cannot be used
//! as identifiers.

use super::{
    ArithOp, Atom, BasicBlock, Expr, Function, GlobalVar, Instr, MtirError, Program,
};
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Eq,
    Comma,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: u32,
    col: u32,
}

fn syntax(line: u32, col: u32, msg: impl Into<String>) -> MtirError {
    MtirError::Syntax { line, col, msg: msg.into() }
}

fn tokenize(text: &str) -> Result<Vec<Spanned>, MtirError> {
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }
    loop {
        let (sl, sc) = (line, col);
        let c = match chars.peek().copied() {
            Some(c) => c,
            None => break,
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '{' | '}' | '(' | ')' | ':' | '=' | ',' => {
                bump!();
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ':' => Tok::Colon,
                    '=' => Tok::Eq,
                    _ => Tok::Comma,
                };
                toks.push(Spanned { tok, line: sl, col: sc });
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        Some('"') => break,
                        Some('\n') | None => {
                            return Err(syntax(sl, sc, "unterminated string"));
                        }
                        Some(c) => s.push(c),
                    }
                }
                toks.push(Spanned { tok: Tok::Str(s), line: sl, col: sc });
            }
            '-' | '0'..='9' => {
                let mut s = String::new();
                s.push(c);
                bump!();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        s.push(d);
                        bump!();
                    } else {
                        break;
                    }
                }
                if s == "-" {
                    return Err(syntax(sl, sc, "expected digits after `-`"));
                }
                let v: i64 = s
                    .parse()
                    .map_err(|_| syntax(sl, sc, format!("integer `{s}` out of range")))?;
                toks.push(Spanned { tok: Tok::Int(v), line: sl, col: sc });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        s.push(d);
                        bump!();
                    } else {
                        break;
                    }
                }
                toks.push(Spanned { tok: Tok::Ident(s), line: sl, col: sc });
            }
            other => {
                return Err(syntax(sl, sc, format!("unexpected character `{other}`")));
            }
        }
    }
    Ok(toks)
}

const OPCODE_KEYWORDS: &[&str] = &[
    "const", "add", "sub", "mul", "div", "load", "store", "input", "inputlen", "branch", "jump",
    "call", "return", "exit", "crash", "fork", "join", "lock", "unlock", "nop", "fn", "mutex",
    "global",
];

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    globals: HashSet<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn peek2(&self) -> Option<&Spanned> {
        self.toks.get(self.pos + 1)
    }

    fn here(&self) -> (u32, u32) {
        self.peek()
            .map(|s| (s.line, s.col))
            .unwrap_or_else(|| {
                self.toks
                    .last()
                    .map(|s| (s.line, s.col + 1))
                    .unwrap_or((1, 1))
            })
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, msg: impl Into<String>) -> MtirError {
        let (l, c) = self.here();
        syntax(l, c, msg)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), MtirError> {
        match self.next() {
            Some(s) if s.tok == want => Ok(()),
            Some(s) => Err(syntax(s.line, s.col, format!("expected {what}"))),
            None => Err(self.err_here(format!("expected {what}, found end of input"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, MtirError> {
        match self.next() {
            Some(Spanned { tok: Tok::Ident(s), line, col }) => {
                if OPCODE_KEYWORDS.contains(&s.as_str()) {
                    return Err(syntax(
                        line,
                        col,
                        format!("keyword `{s}` cannot be used as {what}"),
                    ));
                }
                Ok(s)
            }
            Some(s) => Err(syntax(s.line, s.col, format!("expected {what}"))),
            None => Err(self.err_here(format!("expected {what}, found end of input"))),
        }
    }

    fn int(&mut self, what: &str) -> Result<i64, MtirError> {
        match self.next() {
            Some(Spanned { tok: Tok::Int(v), .. }) => Ok(v),
            Some(s) => Err(syntax(s.line, s.col, format!("expected {what}"))),
            None => Err(self.err_here(format!("expected {what}, found end of input"))),
        }
    }

    /// Names resolve against the declared globals: a declared name is a
    /// shared atom, anything else is a local.
    fn atom(&mut self) -> Result<Atom, MtirError> {
        match self.next() {
            Some(Spanned { tok: Tok::Int(v), .. }) => Ok(Atom::Const(v)),
            Some(Spanned { tok: Tok::Ident(s), line, col }) => {
                if OPCODE_KEYWORDS.contains(&s.as_str()) {
                    return Err(syntax(line, col, format!("keyword `{s}` is not an operand")));
                }
                if self.globals.contains(&s) {
                    Ok(Atom::Shared(s))
                } else {
                    Ok(Atom::Local(s))
                }
            }
            Some(s) => Err(syntax(s.line, s.col, "expected operand")),
            None => Err(self.err_here("expected operand, found end of input")),
        }
    }

    fn arith_op(name: &str) -> Option<ArithOp> {
        match name {
            "add" => Some(ArithOp::Add),
            "sub" => Some(ArithOp::Sub),
            "mul" => Some(ArithOp::Mul),
            "div" => Some(ArithOp::Div),
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Expr, MtirError> {
        if let Some(Spanned { tok: Tok::Ident(s), .. }) = self.peek() {
            if let Some(op) = Self::arith_op(s) {
                self.next();
                let lhs = self.atom()?;
                self.expect(Tok::Comma, "`,`")?;
                let rhs = self.atom()?;
                return Ok(Expr::Bin { op, lhs, rhs });
            }
        }
        Ok(Expr::Atom(self.atom()?))
    }

    fn instr(&mut self) -> Result<Instr, MtirError> {
        let head = match self.next() {
            Some(s) => s,
            None => return Err(self.err_here("expected instruction")),
        };
        let name = match &head.tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(syntax(head.line, head.col, "expected instruction")),
        };
        match name.as_str() {
            "store" => {
                // The target may be undeclared; that is a runtime crash, not
                // a parse error.
                let var = self.ident("shared variable name")?;
                self.expect(Tok::Comma, "`,`")?;
                let expr = self.expr()?;
                Ok(Instr::StoreShared { var, expr })
            }
            "branch" => {
                let cond = self.atom()?;
                self.expect(Tok::Comma, "`,`")?;
                let then_block = self.ident("block label")?;
                self.expect(Tok::Comma, "`,`")?;
                let else_block = self.ident("block label")?;
                Ok(Instr::Branch { cond, then_block, else_block })
            }
            "jump" => Ok(Instr::Jump { target: self.ident("block label")? }),
            "call" => {
                let target = self.ident("function name")?;
                let mut args = Vec::new();
                while matches!(self.peek().map(|s| &s.tok), Some(Tok::Comma)) {
                    self.next();
                    args.push(self.atom()?);
                }
                Ok(Instr::Call { target, args })
            }
            "return" => Ok(Instr::Return),
            "exit" => Ok(Instr::Exit { code: self.atom()? }),
            "crash" => match self.next() {
                Some(Spanned { tok: Tok::Str(tag), .. }) => Ok(Instr::Crash { tag }),
                _ => Err(self.err_here("expected crash tag string")),
            },
            "fork" => {
                let target = self.ident("function name")?;
                let arg = if matches!(self.peek().map(|s| &s.tok), Some(Tok::Comma)) {
                    self.next();
                    Some(self.atom()?)
                } else {
                    None
                };
                Ok(Instr::ThreadFork { target, arg })
            }
            "join" => Ok(Instr::ThreadJoin),
            "lock" => {
                let m = self.int("mutex id")?;
                if m < 0 {
                    return Err(syntax(head.line, head.col, "mutex id must be non-negative"));
                }
                Ok(Instr::LockAcquire { mutex: m as u32 })
            }
            "unlock" => {
                let m = self.int("mutex id")?;
                if m < 0 {
                    return Err(syntax(head.line, head.col, "mutex id must be non-negative"));
                }
                Ok(Instr::LockRelease { mutex: m as u32 })
            }
            "nop" => Ok(Instr::Nop),
            _ if OPCODE_KEYWORDS.contains(&name.as_str()) => Err(syntax(
                head.line,
                head.col,
                format!("`{name}` is not valid at the start of an instruction"),
            )),
            _ => {
                // `dest = <op> ...` form.
                self.expect(Tok::Eq, "`=` after destination")?;
                let dest = name;
                let op = match self.next() {
                    Some(Spanned { tok: Tok::Ident(s), line, col }) => {
                        let known = matches!(
                            s.as_str(),
                            "const" | "add" | "sub" | "mul" | "div" | "load" | "input" | "inputlen"
                        );
                        if !known {
                            return Err(syntax(line, col, format!("unknown opcode `{s}`")));
                        }
                        s
                    }
                    _ => return Err(self.err_here("expected opcode after `=`")),
                };
                match op.as_str() {
                    "const" => Ok(Instr::ConstAssign { dest, value: self.int("integer")? }),
                    "add" | "sub" | "mul" | "div" => {
                        let lhs = self.atom()?;
                        self.expect(Tok::Comma, "`,`")?;
                        let rhs = self.atom()?;
                        Ok(Instr::Arith {
                            dest,
                            op: Self::arith_op(&op).unwrap(),
                            lhs,
                            rhs,
                        })
                    }
                    "load" => Ok(Instr::LoadShared { dest, var: self.ident("shared variable name")? }),
                    "input" => Ok(Instr::LoadInput { dest, offset: self.atom()? }),
                    "inputlen" => Ok(Instr::InputLen { dest }),
                    _ => unreachable!(),
                }
            }
        }
    }

    fn function(&mut self) -> Result<Function, MtirError> {
        let name = self.ident("function name")?;
        let mut params = Vec::new();
        if matches!(self.peek().map(|s| &s.tok), Some(Tok::LParen)) {
            self.next();
            if !matches!(self.peek().map(|s| &s.tok), Some(Tok::RParen)) {
                loop {
                    params.push(self.ident("parameter name")?);
                    match self.peek().map(|s| &s.tok) {
                        Some(Tok::Comma) => {
                            self.next();
                        }
                        _ => break,
                    }
                }
            }
            self.expect(Tok::RParen, "`)`")?;
        }
        self.expect(Tok::LBrace, "`{`")?;
        let mut blocks: Vec<BasicBlock> = Vec::new();
        loop {
            match self.peek().map(|s| &s.tok) {
                Some(Tok::RBrace) => {
                    self.next();
                    break;
                }
                None => return Err(self.err_here("expected `}` to close function")),
                _ => {}
            }
            // `ident :` starts a new block; anything else continues the
            // current one.
            let is_label = matches!(self.peek().map(|s| &s.tok), Some(Tok::Ident(_)))
                && matches!(self.peek2().map(|s| &s.tok), Some(Tok::Colon));
            if is_label {
                let id = self.ident("block label")?;
                self.expect(Tok::Colon, "`:`")?;
                blocks.push(BasicBlock { id, instrs: Vec::new() });
            } else {
                let (l, c) = self.here();
                let instr = self.instr()?;
                match blocks.last_mut() {
                    Some(b) => b.instrs.push(instr),
                    None => return Err(syntax(l, c, "instruction before first block label")),
                }
            }
        }
        Ok(Function { name, params, blocks })
    }

    fn program(&mut self) -> Result<Program, MtirError> {
        let mut mutex_count: Option<u32> = None;
        let mut globals: Vec<GlobalVar> = Vec::new();
        let mut functions: Vec<Function> = Vec::new();
        while let Some(s) = self.peek() {
            let (line, col) = (s.line, s.col);
            // Header declarations must precede all functions so that name
            // resolution (shared vs local atoms) is defined up front.
            match &s.tok {
                Tok::Ident(k) if k == "mutex" => {
                    if !functions.is_empty() {
                        return Err(syntax(line, col, "`mutex` declaration after first function"));
                    }
                    self.next();
                    let n = self.int("mutex count")?;
                    if n < 0 {
                        return Err(syntax(line, col, "mutex count must be non-negative"));
                    }
                    if mutex_count.replace(n as u32).is_some() {
                        return Err(syntax(line, col, "duplicate `mutex` declaration"));
                    }
                }
                Tok::Ident(k) if k == "global" => {
                    if !functions.is_empty() {
                        return Err(syntax(line, col, "`global` declaration after first function"));
                    }
                    self.next();
                    let name = self.ident("global name")?;
                    self.expect(Tok::Eq, "`=`")?;
                    let init = self.int("integer")?;
                    if !self.globals.insert(name.clone()) {
                        return Err(syntax(line, col, format!("duplicate global `{name}`")));
                    }
                    globals.push(GlobalVar { name, init });
                }
                Tok::Ident(k) if k == "fn" => {
                    self.next();
                    functions.push(self.function()?);
                }
                _ => {
                    return Err(syntax(line, col, "expected `mutex`, `global`, or `fn`"));
                }
            }
        }
        Program::new(functions, globals, mutex_count.unwrap_or(0))
    }
}

/// Parses and validates mini-IR source text. Total: malformed input yields an
/// error with line/column, never a panic.
pub fn parse_program(text: &str) -> Result<Program, MtirError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0, globals: HashSet::new() };
    p.program()
}
