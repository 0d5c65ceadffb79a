//! Lowering of a validated program plus instrumentation plan into the
//! index-resolved form the interpreter executes. Names become slots, block
//! labels become indices, and each instruction carries its deputy label (if
//! any) and global instruction id.

use crate::analysis::InstrumentationPlan;
use crate::mtir::{ArithOp, Atom, Expr, Instr, InstrId, InstrTable, Program};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy)]
pub enum CAtom {
    Local(u16),
    Const(i64),
    Shared(u16),
}

#[derive(Debug, Clone, Copy)]
pub enum CExpr {
    Atom(CAtom),
    Bin { op: ArithOp, lhs: CAtom, rhs: CAtom },
}

#[derive(Debug, Clone)]
pub enum COp {
    Const { dest: u16, value: i64 },
    Arith { dest: u16, op: ArithOp, lhs: CAtom, rhs: CAtom },
    Load { dest: u16, slot: u16 },
    /// Load/store of a global the header never declared: runtime crash.
    LoadUndeclared { var: String },
    Store { slot: u16, expr: CExpr },
    StoreUndeclared { var: String },
    Input { dest: u16, offset: CAtom },
    InputLen { dest: u16 },
    Branch { cond: CAtom, then_block: u32, else_block: u32 },
    Jump { target: u32 },
    Call { func: u32, args: Vec<CAtom> },
    Return,
    Exit { code: CAtom },
    Crash { tag: String },
    Fork { func: u32, arg: Option<CAtom> },
    Join,
    Lock { mutex: u32 },
    Unlock { mutex: u32 },
    Nop,
}

#[derive(Debug, Clone)]
pub struct CInstr {
    pub op: COp,
    pub label: Option<u16>,
    pub id: InstrId,
}

#[derive(Debug, Clone)]
pub struct CBlock {
    pub id: String,
    pub instrs: Vec<CInstr>,
}

#[derive(Debug, Clone)]
pub struct CFunc {
    pub name: String,
    pub n_slots: u16,
    /// Parameter slots, in declaration order (always the first slots).
    pub n_params: u16,
    pub blocks: Vec<CBlock>,
}

#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub funcs: Vec<CFunc>,
    pub entry: u32,
    pub shared_names: Vec<String>,
    pub shared_init: Vec<i64>,
    pub mutex_count: u32,
}

struct SlotMap {
    slots: HashMap<String, u16>,
}

impl SlotMap {
    fn new(params: &[String]) -> SlotMap {
        let mut slots = HashMap::new();
        for p in params {
            let n = slots.len() as u16;
            slots.insert(p.clone(), n);
        }
        SlotMap { slots }
    }

    fn get(&mut self, name: &str) -> u16 {
        if let Some(&s) = self.slots.get(name) {
            return s;
        }
        let n = self.slots.len() as u16;
        self.slots.insert(name.to_string(), n);
        n
    }
}

pub fn compile(program: &Program, plan: &InstrumentationPlan) -> CompiledProgram {
    let table = InstrTable::build(program);
    let mut funcs = Vec::with_capacity(program.functions.len());
    for (fi, f) in program.functions.iter().enumerate() {
        let mut slots = SlotMap::new(&f.params);
        let mut atom = |a: &Atom, slots: &mut SlotMap| match a {
            Atom::Local(name) => CAtom::Local(slots.get(name)),
            Atom::Const(v) => CAtom::Const(*v),
            Atom::Shared(name) => {
                CAtom::Shared(program.global_index(name).expect("resolved shared atom") as u16)
            }
        };
        let mut blocks = Vec::with_capacity(f.blocks.len());
        for (bi, b) in f.blocks.iter().enumerate() {
            let mut instrs = Vec::with_capacity(b.instrs.len());
            for (idx, instr) in b.instrs.iter().enumerate() {
                let id = table.id(fi, bi, idx);
                let op = match instr {
                    Instr::ConstAssign { dest, value } => {
                        COp::Const { dest: slots.get(dest), value: *value }
                    }
                    Instr::Arith { dest, op, lhs, rhs } => COp::Arith {
                        dest: slots.get(dest),
                        op: *op,
                        lhs: atom(lhs, &mut slots),
                        rhs: atom(rhs, &mut slots),
                    },
                    Instr::LoadShared { dest, var } => match program.global_index(var) {
                        Some(slot) => COp::Load { dest: slots.get(dest), slot: slot as u16 },
                        None => COp::LoadUndeclared { var: var.clone() },
                    },
                    Instr::StoreShared { var, expr } => match program.global_index(var) {
                        Some(slot) => COp::Store {
                            slot: slot as u16,
                            expr: match expr {
                                Expr::Atom(a) => CExpr::Atom(atom(a, &mut slots)),
                                Expr::Bin { op, lhs, rhs } => CExpr::Bin {
                                    op: *op,
                                    lhs: atom(lhs, &mut slots),
                                    rhs: atom(rhs, &mut slots),
                                },
                            },
                        },
                        None => COp::StoreUndeclared { var: var.clone() },
                    },
                    Instr::LoadInput { dest, offset } => {
                        COp::Input { dest: slots.get(dest), offset: atom(offset, &mut slots) }
                    }
                    Instr::InputLen { dest } => COp::InputLen { dest: slots.get(dest) },
                    Instr::Branch { cond, then_block, else_block } => COp::Branch {
                        cond: atom(cond, &mut slots),
                        then_block: f.block_index(then_block).unwrap() as u32,
                        else_block: f.block_index(else_block).unwrap() as u32,
                    },
                    Instr::Jump { target } => {
                        COp::Jump { target: f.block_index(target).unwrap() as u32 }
                    }
                    Instr::Call { target, args } => COp::Call {
                        func: program.function_index(target).unwrap() as u32,
                        args: args.iter().map(|a| atom(a, &mut slots)).collect(),
                    },
                    Instr::Return => COp::Return,
                    Instr::Exit { code } => COp::Exit { code: atom(code, &mut slots) },
                    Instr::Crash { tag } => COp::Crash { tag: tag.clone() },
                    Instr::ThreadFork { target, arg } => COp::Fork {
                        func: program.function_index(target).unwrap() as u32,
                        arg: arg.as_ref().map(|a| atom(a, &mut slots)),
                    },
                    Instr::ThreadJoin => COp::Join,
                    Instr::LockAcquire { mutex } => COp::Lock { mutex: *mutex },
                    Instr::LockRelease { mutex } => COp::Unlock { mutex: *mutex },
                    Instr::Nop => COp::Nop,
                };
                instrs.push(CInstr { op, label: plan.label(id), id });
            }
            blocks.push(CBlock { id: b.id.clone(), instrs });
        }
        funcs.push(CFunc {
            name: f.name.clone(),
            n_slots: slots.slots.len() as u16,
            n_params: f.params.len() as u16,
            blocks,
        });
    }
    CompiledProgram {
        funcs,
        entry: program.function_index(&program.entry).unwrap() as u32,
        shared_names: program.globals.iter().map(|g| g.name.clone()).collect(),
        shared_init: program.globals.iter().map(|g| g.init).collect(),
        mutex_count: program.mutex_count,
    }
}
