//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! (written to stderr directly so it shows even when output is captured).

mod common;

use std::io::Write;

use common::*;
use fgp::bench::CompoundCase;
use fgp::cli::RunReport;
use fgp::compiler::{compile, CompileOptions};
use fgp::gmp::{
    compound_mult_eq_direct, compound_mult_eq_update, faddeev, is_psd, run_rls_reference, GaussianMessage, StateMatrix,
};
use fgp::isa::{assemble, disassemble_words, Instruction, Opcode, OperandRef, Part, Select};
use fgp::linalg::C64;
use fgp::machine::{Bank, Machine, MachineConfig};
use fgp::rls::RlsProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, what: &str, pass: bool, detail: String) {
    let line = format!("criterion {n} ({what}): {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

const COMPOUND_CYCLES: u64 = 235;

fn compound_cycles() -> u64 {
    let case = CompoundCase::generate(&mut ChaCha8Rng::seed_from_u64(11), 4, 4);
    let mut m = Machine::fixed(MachineConfig::default()).unwrap();
    case.run(&mut m).unwrap().0.total_cycles
}

#[test]
fn criterion_1_compound_node_cycles() {
    let cycles = compound_cycles();
    let within = (221..=299).contains(&cycles);
    let pinned = cycles == COMPOUND_CYCLES;
    report(1, "compound-node cycles", within && pinned, format!("total={cycles} target=260±15% pinned={COMPOUND_CYCLES}"));
    assert!(within, "{cycles} outside [221, 299]");
    assert_eq!(cycles, COMPOUND_CYCLES);
}

#[test]
fn criterion_2_throughput_accounting() {
    let case = CompoundCase::generate(&mut ChaCha8Rng::seed_from_u64(11), 4, 4);
    let mut m = Machine::fixed(MachineConfig::default()).unwrap();
    let (exec, _) = case.run(&mut m).unwrap();
    let r = RunReport::new(&exec, 130e6, None);
    let consistent = r.throughput_at(130e6) == 130e6 / exec.total_cycles as f64 && r.compound_nodes == 1;
    let target = 2.25e6;
    let rel = (r.throughput() - target).abs() / target;
    let pass = consistent && rel <= 0.15;
    report(
        2,
        "throughput accounting",
        pass,
        format!("throughput={:.4e} CN/s target=2.25e6±15% rel_dev={:.3} consistent={consistent}", r.throughput(), rel),
    );
    assert!(consistent);
    assert!(rel <= 0.15, "throughput {:.4e} deviates {:.1}% from 2.25e6", r.throughput(), rel * 100.0);
}

#[test]
fn criterion_3_faddeev_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = rng.gen_range(1..=8);
        let q = rng.gen_range(1..=8);
        let r = rng.gen_range(1..=8);
        let a = well_conditioned(&mut rng, p);
        let b = random_mat(&mut rng, p, q, 1.0);
        let c = random_mat(&mut rng, r, p, 1.0);
        let d = random_mat(&mut rng, r, q, 1.0);
        let got = faddeev(&a, &b, &c, &d).unwrap();
        let want = schur(&a, &b, &c, &d);
        let err = frob(&got.sub(&want)) / frob(&want);
        worst = worst.max(err);
    }
    report(3, "faddeev vs direct inverse", worst <= 1e-9, format!("worst_rel_frobenius={worst:.3e} over 1000"));
    assert!(worst <= 1e-9, "{worst}");
}

#[test]
fn criterion_4_compound_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut worst_oracle, mut psd_ok) = (0.0f64, 0.0f64, true);
    for _ in 0..500 {
        let x = GaussianMessage::mean_cov((0..4).map(|_| cn(&mut rng, 1.0)).collect(), random_hpd(&mut rng, 4, 0.2)).unwrap();
        let y = GaussianMessage::mean_cov((0..4).map(|_| cn(&mut rng, 1.0)).collect(), random_hpd(&mut rng, 4, 0.2)).unwrap();
        let a = StateMatrix::new(random_mat(&mut rng, 4, 4, 0.5));
        let via_blocks = compound_mult_eq_update(&x, &y, &a).unwrap();
        let direct = compound_mult_eq_direct(&x, &y, &a).unwrap();
        worst = worst.max(msg_error(&via_blocks, &direct));
        let (mz, vz) = kalman_update(&x.mean, &x.cov, &y.mean, &y.cov, a.matrix());
        let oracle = GaussianMessage::mean_cov(mz.as_slice().to_vec(), vz).unwrap();
        worst_oracle = worst_oracle.max(msg_error(&via_blocks, &oracle));
        psd_ok &= is_psd(&x.cov.sub(&via_blocks.cov), 1e-9);
    }
    let pass = worst <= 1e-9 && worst_oracle <= 1e-9 && psd_ok;
    report(
        4,
        "compound node direct vs faddeev",
        pass,
        format!("max_diff={worst:.3e} vs_kalman_oracle={worst_oracle:.3e} psd={psd_ok} over 500"),
    );
    assert!(pass);
}

/// Runs the compiled program on the fixed machine and returns the slots
/// holding the final `x` and the last `Y`.
fn machine_rls(p: &RlsProblem, opts: &CompileOptions) -> (fgp::systolic::FxBlock, fgp::systolic::FxBlock, GaussianMessage) {
    let c = compile(&p.source(), opts).unwrap();
    let mut m = Machine::fixed(MachineConfig::default()).unwrap();
    let (_, out) = c.run(&mut m, &p.inputs()).unwrap();
    let x_slot = c.layout.outputs[0].addr;
    let last_y = c.schedule.steps.iter().rev().find(|s| c.schedule.values[s.output].name == "Y").unwrap().output;
    let y_slot = c.allocation.slot_of[last_y];
    (m.read_memory(Bank::Msg, x_slot).unwrap(), m.read_memory(Bank::Msg, y_slot).unwrap(), out["x"].clone())
}

#[test]
fn criterion_5_fixed_point_machine_vs_oracles() {
    let mut bit_exact = true;
    let mut worst_float = 0.0f64;
    for seed in 0..20 {
        let p = RlsProblem::generate(&mut ChaCha8Rng::seed_from_u64(seed), 4, 2, 0.01);
        let (x_blk, y_blk, x_msg) = machine_rls(&p, &CompileOptions::default());

        let mut seq = SeqFxp::new(fgp::fxp::FxUnit::new(MachineConfig::default().format));
        let mut x = quantized_block(&mut seq, &p.prior);
        let n = quantized_block(&mut seq, &p.noise);
        let mut y_last = None;
        for (row, obs) in p.rows.iter().zip(&p.observations) {
            let yq = quantized_block(&mut seq, obs);
            let a = seq.quantize(row);
            let big_y = seq.adder_backward(&yq, &n);
            x = seq.compound(&x, &big_y, &a).unwrap();
            y_last = Some(big_y);
        }
        bit_exact &= x_blk.aug && x_blk.mat == x && y_blk.mat == y_last.unwrap();

        let want = run_rls_reference(&p.state_matrices(), &p.observations, &p.prior, &p.noise).unwrap();
        worst_float = worst_float.max(msg_error(&x_msg, want.last().unwrap()));
    }
    let pass = bit_exact && worst_float <= 1e-4;
    report(
        5,
        "fixed-point machine vs oracles",
        pass,
        format!("bit_exact_vs_sequential={bit_exact} max_abs_vs_float={worst_float:.3e} (Q8.24, 20 seeds)"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_rls_vs_batch_lmmse() {
    let mut worst = 0.0f64;
    for &k in &[1usize, 2, 4, 8] {
        for seed in 0..10 {
            let p = RlsProblem::generate(&mut ChaCha8Rng::seed_from_u64(100 + seed), 4, k, 0.1);
            let post = run_rls_reference(&p.state_matrices(), &p.observations, &p.prior, &p.noise).unwrap();
            let y: Vec<C64> = p.observations.iter().map(|o| o.mean[(0, 0)]).collect();
            let (m, v) = batch_lmmse(&p.rows, &y, &p.prior.mean, &p.prior.cov, p.noise_var);
            let last = post.last().unwrap();
            let oracle = GaussianMessage::mean_cov(m.as_slice().to_vec(), v).unwrap();
            worst = worst.max(msg_error(last, &oracle));
        }
    }
    report(6, "RLS vs batch LMMSE", worst <= 1e-8, format!("max_abs={worst:.3e} k in {{1,2,4,8}}"));
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn criterion_7_compiler_pipeline() {
    use Opcode::*;
    let p = RlsProblem::generate(&mut ChaCha8Rng::seed_from_u64(7), 4, 2, 0.01);
    let opt = compile(&p.source(), &CompileOptions::default()).unwrap();
    let raw = compile(&p.source(), &CompileOptions::default().unoptimized()).unwrap();
    let ops: Vec<Opcode> = opt.instructions.iter().map(Instruction::opcode).collect();
    let shape = ops == [Prg, Loop, Mma, Mms, Smm, Mma, Mms, Fad, Smm];
    let fewer = opt.distinct_ids() < raw.distinct_ids();
    let (x_opt, _, _) = machine_rls(&p, &CompileOptions::default());
    let (x_raw, _, _) = machine_rls(&p, &CompileOptions::default().unoptimized());
    let same = x_opt == x_raw;
    let pass = shape && fewer && same;
    report(
        7,
        "compiler pipeline",
        pass,
        format!(
            "instructions={} opcodes_match={shape} ids={}<{} bit_identical={same}",
            opt.instructions.len(),
            opt.distinct_ids(),
            raw.distinct_ids()
        ),
    );
    assert!(pass);
}

fn random_operand<R: Rng>(rng: &mut R, memory_only: bool) -> OperandRef {
    let sel = if memory_only {
        [Select::Msg, Select::StateMat, Select::MsgIndexed, Select::StateMatIndexed][rng.gen_range(0..4)]
    } else {
        Select::ALL[rng.gen_range(0..Select::ALL.len())]
    };
    OperandRef { sel, addr: rng.gen_range(0..64), herm: rng.gen(), neg: rng.gen() }
}

fn random_instruction<R: Rng>(rng: &mut R) -> Instruction {
    let part = Part::ALL[rng.gen_range(0..4)];
    match rng.gen_range(0..6) {
        0 => Instruction::Mma { a: random_operand(rng, false), b: random_operand(rng, false), part },
        1 => Instruction::Mms { a: random_operand(rng, false), b: random_operand(rng, false), part },
        2 => {
            let mut d = random_operand(rng, false);
            d.neg = false;
            Instruction::Fad { d, part }
        }
        3 => {
            let o = random_operand(rng, true);
            Instruction::Smm { from_acc: rng.gen(), sel: o.sel, addr: o.addr, part }
        }
        4 => Instruction::Loop { count: rng.gen(), extent: rng.gen_range(1..=63) },
        _ => Instruction::Prg { index: rng.gen() },
    }
}

#[test]
fn criterion_8_isa_round_trip_and_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let words: Vec<u32> = (0..10_000).map(|_| random_instruction(&mut rng).encode()).collect();
    let mut round_trip = true;
    for w in &words {
        let text = disassemble_words(&[*w]).unwrap();
        round_trip &= assemble(&text).map(|img| img.words() == [*w]).unwrap_or(false);
    }
    let mut decoded = 0usize;
    let fuzz = std::panic::catch_unwind(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let mut ok = 0;
        for _ in 0..100_000 {
            if Instruction::decode(rng.gen()).is_ok() {
                ok += 1;
            }
        }
        ok
    });
    let no_panic = fuzz.is_ok();
    if let Ok(n) = fuzz {
        decoded = n;
    }
    let pass = round_trip && no_panic;
    report(
        8,
        "ISA round trip and fuzz",
        pass,
        format!("round_trip_10k={round_trip} fuzz_100k_no_panic={no_panic} decodable={decoded}"),
    );
    assert!(pass);
}
