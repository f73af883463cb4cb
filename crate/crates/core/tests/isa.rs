use fgp::isa::{assemble, disassemble, Instruction, IsaError, Opcode, OperandRef, Part, ProgramImage, Select};
use proptest::prelude::*;

const LOOPED_UPDATE: &str = "\
prg 1
loop 1 1
mma 1 1 c 0 1 e 0 0 0
mms 0 1 d 0 1 e 1 0 0
smm 1 1 d 0
mma 0 4 d 0 4 c 0 1 0
mms 1 1 d 0 4 c 1 0 0
fad 0 4 d 1
smm 0 4 d 1
";

#[test]
fn looped_update_program_assembles() {
    use Opcode::*;
    let img = assemble(LOOPED_UPDATE).unwrap();
    assert_eq!(img.len(), 9);
    let ops: Vec<Opcode> = img.instructions().iter().map(Instruction::opcode).collect();
    assert_eq!(ops, [Prg, Loop, Mma, Mms, Smm, Mma, Mms, Fad, Smm]);
    assert_eq!(img.program_table().get(&1), Some(&0));
    let text = disassemble(&img);
    assert_eq!(assemble(&text).unwrap(), img);
    assert_eq!(disassemble(&assemble(&text).unwrap()), text);
}

#[test]
fn image_file_round_trip() {
    let img = assemble(LOOPED_UPDATE).unwrap();
    let bytes = img.to_bytes();
    assert_eq!(&bytes[..4], &0x4647_5030u32.to_le_bytes());
    assert_eq!(ProgramImage::from_bytes(&bytes).unwrap(), img);
    assert!(ProgramImage::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn malformed_lines_produce_no_image() {
    for (src, line) in [
        ("prg 1\nmma 1 1 c 0 1 e 0 0\n", 2),
        ("prg 1\nfoo 1\n", 2),
        ("prg 1\nsmm 0 4 40 1\n", 2),
        ("prg 1\nprg 1\n", 2),
        ("prg 1\nloop 1 0\n", 2),
        ("prg 1\nsmm 0 0 0 1\n", 2),
    ] {
        let err = assemble(src).unwrap_err();
        let at = match err {
            IsaError::Syntax { line, .. }
            | IsaError::UnknownOpcode { line, .. }
            | IsaError::AddressRange { line, .. }
            | IsaError::DuplicatePrg { line, .. } => line,
            e => panic!("unexpected {e}"),
        };
        assert_eq!(at, line, "{src:?}");
    }
}

fn select() -> impl Strategy<Value = Select> {
    proptest::sample::select(Select::ALL.to_vec())
}

fn memory_select() -> impl Strategy<Value = Select> {
    proptest::sample::select(Select::ALL.iter().copied().filter(|s| s.is_memory()).collect::<Vec<_>>())
}

fn part() -> impl Strategy<Value = Part> {
    proptest::sample::select(Part::ALL.to_vec())
}

fn operand() -> impl Strategy<Value = OperandRef> {
    (select(), 0u8..64, any::<bool>(), any::<bool>()).prop_map(|(sel, addr, herm, neg)| OperandRef { sel, addr, herm, neg })
}

fn instruction() -> impl Strategy<Value = Instruction> {
    prop_oneof![
        (operand(), operand(), part()).prop_map(|(a, b, part)| Instruction::Mma { a, b, part }),
        (operand(), operand(), part()).prop_map(|(a, b, part)| Instruction::Mms { a, b, part }),
        (operand(), part()).prop_map(|(mut d, part)| {
            d.neg = false;
            Instruction::Fad { d, part }
        }),
        (any::<bool>(), memory_select(), 0u8..64, part()).prop_map(|(from_acc, sel, addr, part)| Instruction::Smm {
            from_acc,
            sel,
            addr,
            part
        }),
        (any::<u16>(), 1u8..=63).prop_map(|(count, extent)| Instruction::Loop { count, extent }),
        any::<u8>().prop_map(|index| Instruction::Prg { index }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    #[test]
    fn decode_is_left_inverse_of_encode(inst in instruction()) {
        prop_assume!(inst.validate().is_ok());
        prop_assert_eq!(Instruction::decode(inst.encode()), Ok(inst));
    }

    #[test]
    fn decodable_words_re_encode_identically(w in any::<u32>()) {
        if let Ok(inst) = Instruction::decode(w) {
            prop_assert_eq!(inst.encode(), w);
        }
    }

    #[test]
    fn text_round_trip(inst in instruction()) {
        prop_assume!(inst.validate().is_ok());
        let img = ProgramImage::from_instructions(&[inst]).unwrap();
        prop_assert_eq!(assemble(&disassemble(&img)).unwrap(), img);
    }
}
