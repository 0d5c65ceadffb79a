use super::*;

const FIG1: &str = include_str!("../../benchmarks/fig1.mtir");

#[test]
fn minimal_program() {
    let p = parse_program("fn main { b0: exit 0 }").unwrap();
    assert_eq!(p.functions.len(), 1);
    assert_eq!(p.functions[0].blocks.len(), 1);
    assert_eq!(p.mutex_count, 0);
    assert!(p.globals.is_empty());
}

#[test]
fn fig1_parses_with_expected_functions() {
    let p = parse_program(FIG1).unwrap();
    let names: Vec<&str> = p.functions.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["main", "check", "compute", "modify"]);
    assert_eq!(p.mutex_count, 1);
    assert_eq!(p.globals.len(), 2);
    assert_eq!(p.global_index("g_var"), Some(0));
    assert_eq!(p.global_index("s_var"), Some(1));
}

#[test]
fn branch_to_undefined_block_is_validation_error() {
    let src = "fn main { b0: branch 1, b0, nowhere }";
    match parse_program(src) {
        Err(MtirError::Validation(msg)) => assert!(msg.contains("nowhere")),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn syntax_error_reports_position() {
    let src = "fn main {\nb0:\n  x = frob 1\n}";
    match parse_program(src) {
        Err(MtirError::Syntax { line, col, msg }) => {
            assert_eq!(line, 3);
            assert!(col > 1);
            assert!(msg.contains("frob"));
        }
        other => panic!("expected syntax error, got {other:?}"),
    }
}

#[test]
fn parse_is_total_on_junk() {
    for junk in ["", "fn", "{", "fn main {", "fn main { b0: }", "mutex -3", "\u{1F980}", "fn main { b0: exit } }"] {
        let _ = parse_program(junk);
    }
}

#[test]
fn terminator_rules_enforced() {
    assert!(matches!(
        parse_program("fn main { b0: nop }"),
        Err(MtirError::Validation(_))
    ));
    assert!(matches!(
        parse_program("fn main { b0: exit 0 nop }"),
        Err(MtirError::Validation(_))
    ));
}

#[test]
fn entry_must_exist_and_take_no_params() {
    assert!(matches!(
        parse_program("fn helper { b0: exit 0 }"),
        Err(MtirError::Validation(_))
    ));
    assert!(matches!(
        parse_program("fn main(x) { b0: exit 0 }"),
        Err(MtirError::Validation(_))
    ));
}

#[test]
fn call_and_fork_targets_checked() {
    assert!(matches!(
        parse_program("fn main { b0: call nothing return }"),
        Err(MtirError::Validation(_))
    ));
    assert!(matches!(
        parse_program("fn main { b0: fork nothing return }"),
        Err(MtirError::Validation(_))
    ));
    // Arity mismatches.
    assert!(matches!(
        parse_program("fn main { b0: call f, 1 return } fn f { c0: return }"),
        Err(MtirError::Validation(_))
    ));
    assert!(matches!(
        parse_program("fn main { b0: fork f return } fn f(a) { c0: return }"),
        Err(MtirError::Validation(_))
    ));
}

#[test]
fn mutex_references_validated() {
    assert!(matches!(
        parse_program("fn main { b0: lock 0 exit 0 }"),
        Err(MtirError::Validation(_))
    ));
    assert!(parse_program("mutex 1 fn main { b0: lock 0 unlock 0 exit 0 }").is_ok());
}

#[test]
fn arith_rejects_shared_operands() {
    let src = "global g = 0 fn main { b0: x = add g, 1 exit 0 }";
    assert!(matches!(parse_program(src), Err(MtirError::Validation(_))));
}

#[test]
fn locals_cannot_shadow_globals() {
    let src = "global g = 0 fn main { b0: g = const 1 exit 0 }";
    assert!(matches!(parse_program(src), Err(MtirError::Validation(_))));
}

#[test]
fn negative_literal_input_offset_rejected() {
    let src = "fn main { b0: x = input -1 exit 0 }";
    assert!(matches!(parse_program(src), Err(MtirError::Validation(_))));
}

#[test]
fn undeclared_shared_load_is_not_a_validation_error() {
    // Runtime crash semantics, checked in the executor tests.
    assert!(parse_program("fn main { b0: x = load nothing exit 0 }").is_ok());
    assert!(parse_program("fn main { b0: store nothing, 1 exit 0 }").is_ok());
}

#[test]
fn count_instructions_direct() {
    let p = parse_program(
        "global g = 0\nfn main { b0: x = const 1 store g, x jump b1 b1: nop nop nop nop exit 0 }",
    )
    .unwrap();
    let counts = count_instructions(&p.functions[0]);
    assert_eq!(counts.blocks, 2);
    assert_eq!(counts.per_block[0].n, 3);
    assert_eq!(counts.per_block[0].n_mem, 1);
    assert_eq!(counts.per_block[1].n, 5);
    assert_eq!(counts.per_block[1].n_mem, 0);
    assert_eq!(counts.instrs, 8);
}

#[test]
fn fig1_compute_counts_golden() {
    // Hand count of benchmarks/fig1.mtir's compute function:
    //   k0:    input, store, store, branch   -> N=4, N_m=3
    //   k_neg: call, jump                    -> N=2, N_m=0
    //   k_pos: lock, call, unlock, load, ret -> N=5, N_m=1
    let p = parse_program(FIG1).unwrap();
    let compute = p.function("compute").unwrap();
    let counts = count_instructions(compute);
    assert_eq!(counts.blocks, 3);
    assert_eq!(counts.instrs, 11);
    let per: Vec<(usize, usize)> = counts.per_block.iter().map(|b| (b.n, b.n_mem)).collect();
    assert_eq!(per, [(4, 3), (2, 0), (5, 1)]);
}

#[test]
fn roundtrip_fig1() {
    let p = parse_program(FIG1).unwrap();
    let text = p.to_string();
    let p2 = parse_program(&text).unwrap();
    assert_eq!(p, p2);
}

#[test]
fn instr_table_addresses_every_instruction_once() {
    let p = parse_program(FIG1).unwrap();
    let table = InstrTable::build(&p);
    assert_eq!(table.len(), p.total_instrs());
    for id in table.iter_ids() {
        let r = table.loc(id);
        assert_eq!(table.id(r.func, r.block, r.idx), id);
    }
    let (f, b, i) = table.describe(&p, table.block_entry(2, 0));
    assert_eq!((f.as_str(), b.as_str(), i), ("compute", "k0", 0));
}

#[test]
fn validation_is_deterministic() {
    let src = "fn main { b0: branch 1, b0, gone }";
    let a = format!("{:?}", parse_program(src));
    let b = format!("{:?}", parse_program(src));
    assert_eq!(a, b);
}
