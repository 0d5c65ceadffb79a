//! The concurrent mini-IR target language.
//!
//! Programs are integer-valued, thread APIs and shared (global) variables are
//! syntactic, and there are no pointers. A program declares its mutexes and
//! globals in a header, then defines functions made of labeled basic blocks.
//! The textual grammar lives in `docs/mtir-grammar.md`; `parse_program` turns
//! source text into a validated [`Program`].
//!
//! Semantics highlights:
//! - integers are 64-bit signed with wrapping arithmetic; division by zero is
//!   a runtime crash tagged `div-by-zero`, not a validation error;
//! - `input OFF` reads one byte of the fuzz input (0 past either end),
//!   `inputlen` its length;
//! - `store VAR, EXPR` evaluates `EXPR` and writes atomically, and `EXPR`
//!   atoms may name globals, so `store g, add g, 1` is an atomic
//!   read-modify-write;
//! - loads/stores of *undeclared* globals are runtime crashes, mirroring wild
//!   memory accesses, and are deliberately not validation errors.

mod parse;

pub use parse::parse_program;

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// Parse or validation failure for mini-IR source.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MtirError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalVar {
    pub name: String,
    pub init: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            ArithOp::Add => "add",
            ArithOp::Sub => "sub",
            ArithOp::Mul => "mul",
            ArithOp::Div => "div",
        }
    }
}

/// A value reference. `Shared` atoms are only legal where an instruction is
/// allowed to read a global atomically: branch conditions and store
/// expressions. Everywhere else operands are locals or literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Atom {
    Local(String),
    Const(i64),
    Shared(String),
}

/// Right-hand side of `store`: an atom or a single binary operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Atom(Atom),
    Bin { op: ArithOp, lhs: Atom, rhs: Atom },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    ConstAssign { dest: String, value: i64 },
    Arith { dest: String, op: ArithOp, lhs: Atom, rhs: Atom },
    LoadShared { dest: String, var: String },
    StoreShared { var: String, expr: Expr },
    LoadInput { dest: String, offset: Atom },
    InputLen { dest: String },
    Branch { cond: Atom, then_block: String, else_block: String },
    Jump { target: String },
    Call { target: String, args: Vec<Atom> },
    Return,
    Exit { code: Atom },
    Crash { tag: String },
    ThreadFork { target: String, arg: Option<Atom> },
    ThreadJoin,
    LockAcquire { mutex: u32 },
    LockRelease { mutex: u32 },
    Nop,
}

impl Instr {
    /// Branch, Jump, Return, and Exit are the only terminators. `crash` is
    /// not: it aborts at runtime but a block containing it still needs an
    /// explicit terminator.
    pub fn is_terminator(&self) -> bool {
        matches!(
            self,
            Instr::Branch { .. } | Instr::Jump { .. } | Instr::Return | Instr::Exit { .. }
        )
    }

    /// Counts toward memory-operation density: input loads and shared
    /// loads/stores.
    pub fn is_memory_op(&self) -> bool {
        matches!(
            self,
            Instr::LoadShared { .. } | Instr::StoreShared { .. } | Instr::LoadInput { .. }
        )
    }

    /// Globals read by this single instruction (not counting callees).
    /// `store g, add g, 1` reads and writes `g`.
    pub fn shared_reads(&self) -> Vec<&str> {
        fn push_atom<'a>(a: &'a Atom, out: &mut Vec<&'a str>) {
            if let Atom::Shared(name) = a {
                out.push(name.as_str());
            }
        }
        let mut out = Vec::new();
        match self {
            Instr::LoadShared { var, .. } => out.push(var.as_str()),
            Instr::StoreShared { expr, .. } => match expr {
                Expr::Atom(a) => push_atom(a, &mut out),
                Expr::Bin { lhs, rhs, .. } => {
                    push_atom(lhs, &mut out);
                    push_atom(rhs, &mut out);
                }
            },
            Instr::Branch { cond, .. } => push_atom(cond, &mut out),
            _ => {}
        }
        out
    }

    /// Globals written by this single instruction.
    pub fn shared_writes(&self) -> Option<&str> {
        match self {
            Instr::StoreShared { var, .. } => Some(var.as_str()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: String,
    pub instrs: Vec<Instr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub blocks: Vec<BasicBlock>,
}

impl Function {
    /// The entry block is the first declared block.
    pub fn entry_block(&self) -> &BasicBlock {
        &self.blocks[0]
    }

    pub fn block_index(&self, id: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.id == id)
    }
}

/// A validated program. The entry function is `main` and must take no
/// parameters. Globals are always shared.
#[derive(Debug, Clone)]
pub struct Program {
    pub functions: Vec<Function>,
    pub entry: String,
    pub globals: Vec<GlobalVar>,
    pub mutex_count: u32,
    fn_index: HashMap<String, usize>,
    global_index: HashMap<String, usize>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.functions == other.functions
            && self.entry == other.entry
            && self.globals == other.globals
            && self.mutex_count == other.mutex_count
    }
}

impl Eq for Program {}

pub const ENTRY_FUNCTION: &str = "main";

impl Program {
    /// Builds the lookup tables and checks every structural invariant.
    pub fn new(
        functions: Vec<Function>,
        globals: Vec<GlobalVar>,
        mutex_count: u32,
    ) -> Result<Program, MtirError> {
        let mut fn_index = HashMap::new();
        for (i, f) in functions.iter().enumerate() {
            if fn_index.insert(f.name.clone(), i).is_some() {
                return Err(MtirError::Validation(format!(
                    "duplicate function `{}`",
                    f.name
                )));
            }
        }
        let mut global_index = HashMap::new();
        for (i, g) in globals.iter().enumerate() {
            if global_index.insert(g.name.clone(), i).is_some() {
                return Err(MtirError::Validation(format!(
                    "duplicate global `{}`",
                    g.name
                )));
            }
        }
        let program = Program {
            functions,
            entry: ENTRY_FUNCTION.to_string(),
            globals,
            mutex_count,
            fn_index,
            global_index,
        };
        program.validate()?;
        Ok(program)
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.fn_index.get(name).map(|&i| &self.functions[i])
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.fn_index.get(name).copied()
    }

    pub fn global_index(&self, name: &str) -> Option<usize> {
        self.global_index.get(name).copied()
    }

    pub fn entry_function(&self) -> &Function {
        self.function(&self.entry).expect("validated entry")
    }

    pub fn total_instrs(&self) -> usize {
        self.functions
            .iter()
            .flat_map(|f| &f.blocks)
            .map(|b| b.instrs.len())
            .sum()
    }

    fn validate(&self) -> Result<(), MtirError> {
        let err = |msg: String| Err(MtirError::Validation(msg));
        let entry = match self.function(&self.entry) {
            Some(f) => f,
            None => return err(format!("entry function `{}` not defined", self.entry)),
        };
        if !entry.params.is_empty() {
            return err(format!("entry function `{}` must take no parameters", self.entry));
        }
        for f in &self.functions {
            if f.blocks.is_empty() {
                return err(format!("function `{}` has no blocks", f.name));
            }
            let mut seen_params = HashMap::new();
            for p in &f.params {
                if seen_params.insert(p, ()).is_some() {
                    return err(format!("function `{}` has duplicate parameter `{p}`", f.name));
                }
                if self.global_index.contains_key(p) {
                    return err(format!(
                        "function `{}` parameter `{p}` shadows a global",
                        f.name
                    ));
                }
            }
            let mut block_ids = HashMap::new();
            for (i, b) in f.blocks.iter().enumerate() {
                if block_ids.insert(b.id.clone(), i).is_some() {
                    return err(format!("function `{}` has duplicate block `{}`", f.name, b.id));
                }
                if b.instrs.is_empty() {
                    return err(format!("block `{}` in `{}` is empty", b.id, f.name));
                }
            }
            for b in &f.blocks {
                let last = b.instrs.len() - 1;
                for (i, instr) in b.instrs.iter().enumerate() {
                    if i < last && instr.is_terminator() {
                        return err(format!(
                            "block `{}` in `{}` has a terminator before its last instruction",
                            b.id, f.name
                        ));
                    }
                    if i == last && !instr.is_terminator() {
                        return err(format!(
                            "block `{}` in `{}` does not end with a terminator",
                            b.id, f.name
                        ));
                    }
                    self.validate_instr(f, b, instr, &block_ids)?;
                }
            }
        }
        Ok(())
    }

    fn validate_instr(
        &self,
        f: &Function,
        b: &BasicBlock,
        instr: &Instr,
        block_ids: &HashMap<String, usize>,
    ) -> Result<(), MtirError> {
        let at = format!("{}:{}", f.name, b.id);
        let err = |msg: String| Err(MtirError::Validation(msg));
        let check_dest = |dest: &String| {
            if self.global_index.contains_key(dest) {
                return err(format!("at {at}: local `{dest}` shadows a global"));
            }
            Ok(())
        };
        // Shared atoms are only legal in branch conditions and store
        // expressions; arithmetic and argument positions are locals-only.
        let check_local_atom = |a: &Atom| match a {
            Atom::Shared(name) => err(format!(
                "at {at}: shared variable `{name}` used where a local operand is required"
            )),
            Atom::Local(name) if self.global_index.contains_key(name) => err(format!(
                "at {at}: local `{name}` shadows a global"
            )),
            _ => Ok(()),
        };
        let check_target = |target: &String| {
            if !block_ids.contains_key(target) {
                return err(format!("at {at}: branch target `{target}` is not a block"));
            }
            Ok(())
        };
        match instr {
            Instr::ConstAssign { dest, .. } | Instr::InputLen { dest } => check_dest(dest),
            Instr::Arith { dest, lhs, rhs, .. } => {
                check_dest(dest)?;
                check_local_atom(lhs)?;
                check_local_atom(rhs)
            }
            Instr::LoadShared { dest, .. } => check_dest(dest),
            Instr::StoreShared { .. } => Ok(()),
            Instr::LoadInput { dest, offset } => {
                check_dest(dest)?;
                check_local_atom(offset)?;
                if let Atom::Const(c) = offset {
                    if *c < 0 {
                        return err(format!("at {at}: input offset must be non-negative"));
                    }
                }
                Ok(())
            }
            Instr::Branch { then_block, else_block, .. } => {
                check_target(then_block)?;
                check_target(else_block)
            }
            Instr::Jump { target } => check_target(target),
            Instr::Call { target, args } => {
                let callee = match self.function(target) {
                    Some(c) => c,
                    None => {
                        return err(format!("at {at}: call target `{target}` is not a function"))
                    }
                };
                if callee.params.len() != args.len() {
                    return err(format!(
                        "at {at}: call to `{target}` passes {} args, expected {}",
                        args.len(),
                        callee.params.len()
                    ));
                }
                for a in args {
                    check_local_atom(a)?;
                }
                Ok(())
            }
            Instr::Exit { code } => check_local_atom(code),
            Instr::ThreadFork { target, arg } => {
                let callee = match self.function(target) {
                    Some(c) => c,
                    None => {
                        return err(format!("at {at}: fork target `{target}` is not a function"))
                    }
                };
                let expected = callee.params.len();
                if expected > 1 {
                    return err(format!(
                        "at {at}: fork target `{target}` takes {expected} parameters, at most 1 supported"
                    ));
                }
                if expected != arg.iter().len() {
                    return err(format!(
                        "at {at}: fork to `{target}` passes {} args, expected {expected}",
                        arg.iter().len()
                    ));
                }
                if let Some(a) = arg {
                    check_local_atom(a)?;
                }
                Ok(())
            }
            Instr::LockAcquire { mutex } | Instr::LockRelease { mutex } => {
                if *mutex >= self.mutex_count {
                    return err(format!(
                        "at {at}: mutex {mutex} not declared (header declares {})",
                        self.mutex_count
                    ));
                }
                Ok(())
            }
            Instr::Return | Instr::Crash { .. } | Instr::ThreadJoin | Instr::Nop => Ok(()),
        }
    }
}

/// Per-block instruction counts for one function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockCounts {
    pub block_id: String,
    /// N(b): total instructions.
    pub n: usize,
    /// N_m(b): memory-operation instructions.
    pub n_mem: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionCounts {
    pub blocks: usize,
    pub instrs: usize,
    pub per_block: Vec<BlockCounts>,
}

/// Stable N(b)/N_m(b) counts for a validated function.
pub fn count_instructions(f: &Function) -> FunctionCounts {
    let per_block: Vec<BlockCounts> = f
        .blocks
        .iter()
        .map(|b| BlockCounts {
            block_id: b.id.clone(),
            n: b.instrs.len(),
            n_mem: b.instrs.iter().filter(|i| i.is_memory_op()).count(),
        })
        .collect();
    FunctionCounts {
        blocks: f.blocks.len(),
        instrs: per_block.iter().map(|b| b.n).sum(),
        per_block,
    }
}

/// Identifies one instruction globally: functions, blocks, and instructions
/// in declaration order. Stable across parse/serialize round trips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstrId(pub u32);

impl fmt::Display for InstrId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

/// Location of an instruction as indices into the program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstrRef {
    pub func: usize,
    pub block: usize,
    pub idx: usize,
}

/// Bidirectional map between [`InstrId`]s and program locations.
#[derive(Debug, Clone)]
pub struct InstrTable {
    refs: Vec<InstrRef>,
    /// `block_base[func][block]` is the id of the block's first instruction.
    block_base: Vec<Vec<u32>>,
}

impl InstrTable {
    pub fn build(program: &Program) -> InstrTable {
        let mut refs = Vec::with_capacity(program.total_instrs());
        let mut block_base = Vec::with_capacity(program.functions.len());
        for (fi, f) in program.functions.iter().enumerate() {
            let mut bases = Vec::with_capacity(f.blocks.len());
            for (bi, b) in f.blocks.iter().enumerate() {
                bases.push(refs.len() as u32);
                for idx in 0..b.instrs.len() {
                    refs.push(InstrRef { func: fi, block: bi, idx });
                }
            }
            block_base.push(bases);
        }
        InstrTable { refs, block_base }
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn loc(&self, id: InstrId) -> InstrRef {
        self.refs[id.0 as usize]
    }

    pub fn id(&self, func: usize, block: usize, idx: usize) -> InstrId {
        InstrId(self.block_base[func][block] + idx as u32)
    }

    pub fn block_entry(&self, func: usize, block: usize) -> InstrId {
        InstrId(self.block_base[func][block])
    }

    pub fn iter_ids(&self) -> impl Iterator<Item = InstrId> {
        (0..self.refs.len() as u32).map(InstrId)
    }

    /// Human-readable `(function, block, idx)` triple for reports.
    pub fn describe(&self, program: &Program, id: InstrId) -> (String, String, usize) {
        let r = self.loc(id);
        let f = &program.functions[r.func];
        (f.name.clone(), f.blocks[r.block].id.clone(), r.idx)
    }
}

fn fmt_atom(a: &Atom, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match a {
        Atom::Local(n) | Atom::Shared(n) => write!(f, "{n}"),
        Atom::Const(c) => write!(f, "{c}"),
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::ConstAssign { dest, value } => write!(f, "{dest} = const {value}"),
            Instr::Arith { dest, op, lhs, rhs } => {
                write!(f, "{dest} = {} ", op.mnemonic())?;
                fmt_atom(lhs, f)?;
                write!(f, ", ")?;
                fmt_atom(rhs, f)
            }
            Instr::LoadShared { dest, var } => write!(f, "{dest} = load {var}"),
            Instr::StoreShared { var, expr } => {
                write!(f, "store {var}, ")?;
                match expr {
                    Expr::Atom(a) => fmt_atom(a, f),
                    Expr::Bin { op, lhs, rhs } => {
                        write!(f, "{} ", op.mnemonic())?;
                        fmt_atom(lhs, f)?;
                        write!(f, ", ")?;
                        fmt_atom(rhs, f)
                    }
                }
            }
            Instr::LoadInput { dest, offset } => {
                write!(f, "{dest} = input ")?;
                fmt_atom(offset, f)
            }
            Instr::InputLen { dest } => write!(f, "{dest} = inputlen"),
            Instr::Branch { cond, then_block, else_block } => {
                write!(f, "branch ")?;
                fmt_atom(cond, f)?;
                write!(f, ", {then_block}, {else_block}")
            }
            Instr::Jump { target } => write!(f, "jump {target}"),
            Instr::Call { target, args } => {
                write!(f, "call {target}")?;
                for a in args {
                    write!(f, ", ")?;
                    fmt_atom(a, f)?;
                }
                Ok(())
            }
            Instr::Return => write!(f, "return"),
            Instr::Exit { code } => {
                write!(f, "exit ")?;
                fmt_atom(code, f)
            }
            Instr::Crash { tag } => write!(f, "crash \"{tag}\""),
            Instr::ThreadFork { target, arg } => {
                write!(f, "fork {target}")?;
                if let Some(a) = arg {
                    write!(f, ", ")?;
                    fmt_atom(a, f)?;
                }
                Ok(())
            }
            Instr::ThreadJoin => write!(f, "join"),
            Instr::LockAcquire { mutex } => write!(f, "lock {mutex}"),
            Instr::LockRelease { mutex } => write!(f, "unlock {mutex}"),
            Instr::Nop => write!(f, "nop"),
        }
    }
}

impl fmt::Display for Program {
    /// Canonical text form; reparsing yields a structurally equal program.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mutex_count > 0 {
            writeln!(f, "mutex {}", self.mutex_count)?;
        }
        for g in &self.globals {
            writeln!(f, "global {} = {}", g.name, g.init)?;
        }
        for func in &self.functions {
            write!(f, "fn {}", func.name)?;
            if !func.params.is_empty() {
                write!(f, "({})", func.params.join(", "))?;
            }
            writeln!(f, " {{")?;
            for b in &func.blocks {
                writeln!(f, "{}:", b.id)?;
                for i in &b.instrs {
                    writeln!(f, "  {i}")?;
                }
            }
            writeln!(f, "}}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
