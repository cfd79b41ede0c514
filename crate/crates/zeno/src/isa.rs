//! Decoded instruction representation for the rv64i-subset + namespace
//! dialect, shared by the assembler, the timing simulator, and the
//! functional interpreter.

/// Operation mnemonics after decoding. Branch and jump targets are stored as
/// resolved instruction indices in `Instruction::imm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    // Integer register-register.
    Add,
    Sub,
    And,
    Or,
    Xor,
    Sll,
    Srl,
    Sra,
    Slt,
    Sltu,
    // Integer register-immediate.
    Addi,
    Andi,
    Ori,
    Xori,
    Slli,
    Srli,
    Srai,
    Slti,
    Sltiu,
    Lui,
    Auipc,
    // Control flow.
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Jal,
    Jalr,
    // Loads and stores through the extended register paired with the base
    // register (plain rv64i spellings).
    Lb,
    Lh,
    Lw,
    Ld,
    Sb,
    Sh,
    Sw,
    Sd,
    // Loads and stores with an explicit extended (namespace) register.
    Elw,
    Eld,
    Esw,
    Esd,
    // Tagged capability-word transfers between extended registers and memory.
    Eldc,
    Esdc,
    // Uncached 8-byte load; always reads the home copy. Used for
    // synchronization flags.
    Eldv,
    // Extended-register moves. Only e->e preserves the tag.
    EmovEE,
    EmovEX,
    EmovXE,
    // Namespace management.
    NsCreate,
    NsDerive,
    NsRevoke,
    // Remote-data-cache invalidation (selective / whole cache).
    RcInv,
    RcInvAll,
    // Simulator control.
    Statmark,
    Halt,
}

/// One decoded instruction. Unused register fields are zero. `source_line`
/// is the 1-based line of the mnemonic in the assembly text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub opcode: Opcode,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub rs3: u8,
    pub erd: u8,
    pub ers1: u8,
    pub ers2: u8,
    pub imm: i64,
    pub source_line: u32,
}

impl Instruction {
    pub fn new(opcode: Opcode) -> Self {
        Instruction {
            opcode,
            rd: 0,
            rs1: 0,
            rs2: 0,
            rs3: 0,
            erd: 0,
            ers1: 0,
            ers2: 0,
            imm: 0,
            source_line: 0,
        }
    }
}

/// Bytes placed into a node's data namespace before execution starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSegment {
    pub offset: u64,
    pub bytes: Vec<u8>,
}

/// A parsed program: decoded instructions, the resolved label table, the
/// entry index, and any data segments. Two programs compare equal on the
/// decoded form (instructions, entry, data); label spellings are
/// source-level names and do not participate in equality.
#[derive(Debug, Clone, Default)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    pub labels: std::collections::BTreeMap<String, usize>,
    pub entry: usize,
    pub data_segments: Vec<DataSegment>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.instructions == other.instructions
            && self.entry == other.entry
            && self.data_segments == other.data_segments
    }
}

impl Eq for Program {}

impl Program {
    /// Highest byte touched by the data segments, or None when there are
    /// none. The loader sizes the per-node data namespace from this.
    pub fn data_extent(&self) -> Option<u64> {
        self.data_segments
            .iter()
            .map(|s| s.offset + s.bytes.len() as u64)
            .max()
            .filter(|&e| e > 0)
    }
}

/// Memory access width in bytes for a load/store opcode.
pub fn access_size(op: Opcode) -> u64 {
    use Opcode::*;
    match op {
        Lb | Sb => 1,
        Lh | Sh => 2,
        Lw | Sw | Elw | Esw => 4,
        Ld | Sd | Eld | Esd | Eldc | Esdc | Eldv => 8,
        _ => 0,
    }
}

/// Evaluate a register-register ALU operation.
pub fn alu_rr(op: Opcode, a: u64, b: u64) -> u64 {
    use Opcode::*;
    match op {
        Add => a.wrapping_add(b),
        Sub => a.wrapping_sub(b),
        And => a & b,
        Or => a | b,
        Xor => a ^ b,
        Sll => a.wrapping_shl((b & 63) as u32),
        Srl => a.wrapping_shr((b & 63) as u32),
        Sra => ((a as i64).wrapping_shr((b & 63) as u32)) as u64,
        Slt => ((a as i64) < (b as i64)) as u64,
        Sltu => (a < b) as u64,
        _ => unreachable!("not a register-register ALU opcode"),
    }
}

/// Evaluate a register-immediate ALU operation.
pub fn alu_ri(op: Opcode, a: u64, imm: i64) -> u64 {
    use Opcode::*;
    match op {
        Addi => a.wrapping_add(imm as u64),
        Andi => a & imm as u64,
        Ori => a | imm as u64,
        Xori => a ^ imm as u64,
        Slli => a.wrapping_shl((imm & 63) as u32),
        Srli => a.wrapping_shr((imm & 63) as u32),
        Srai => ((a as i64).wrapping_shr((imm & 63) as u32)) as u64,
        Slti => ((a as i64) < imm) as u64,
        Sltiu => (a < imm as u64) as u64,
        _ => unreachable!("not a register-immediate ALU opcode"),
    }
}

/// Branch comparison for the six conditional branches.
pub fn branch_taken(op: Opcode, a: u64, b: u64) -> bool {
    use Opcode::*;
    match op {
        Beq => a == b,
        Bne => a != b,
        Blt => (a as i64) < (b as i64),
        Bge => (a as i64) >= (b as i64),
        Bltu => a < b,
        Bgeu => a >= b,
        _ => unreachable!("not a branch opcode"),
    }
}

/// Sign- or zero-extend a loaded value according to the load opcode.
pub fn extend_load(op: Opcode, raw: u64) -> u64 {
    use Opcode::*;
    match op {
        Lb => raw as u8 as i8 as i64 as u64,
        Lh => raw as u16 as i16 as i64 as u64,
        Lw | Elw => raw as u32 as i32 as i64 as u64,
        Ld | Eld | Eldc | Eldv => raw,
        _ => unreachable!("not a load opcode"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alu_semantics() {
        assert_eq!(alu_rr(Opcode::Add, u64::MAX, 1), 0);
        assert_eq!(alu_rr(Opcode::Sub, 3, 5), (-2i64) as u64);
        assert_eq!(alu_rr(Opcode::Sra, (-8i64) as u64, 1), (-4i64) as u64);
        assert_eq!(alu_rr(Opcode::Sltu, 1, 2), 1);
        assert_eq!(alu_ri(Opcode::Srli, (-1i64) as u64, 32), 0xffff_ffff);
        assert_eq!(alu_ri(Opcode::Slti, 0, 1), 1);
    }

    #[test]
    fn branch_semantics() {
        assert!(branch_taken(Opcode::Bltu, 1, u64::MAX));
        assert!(!branch_taken(Opcode::Blt, 1, u64::MAX));
        assert!(branch_taken(Opcode::Bge, 0, 0));
    }

    #[test]
    fn load_extension() {
        assert_eq!(extend_load(Opcode::Lw, 0x8000_0000), 0xffff_ffff_8000_0000);
        assert_eq!(extend_load(Opcode::Lb, 0x80), 0xffff_ffff_ffff_ff80);
        assert_eq!(extend_load(Opcode::Ld, 42), 42);
    }

    #[test]
    fn sign_extended_words_preserve_unsigned_order() {
        // Unsigned 64-bit comparison of sign-extended 32-bit values agrees
        // with unsigned 32-bit comparison; the sort kernels rely on it.
        let cases = [(0u32, 1u32), (1, 0x8000_0000), (0x8000_0000, 0xffff_ffff)];
        for (a, b) in cases {
            let ea = extend_load(Opcode::Elw, a as u64);
            let eb = extend_load(Opcode::Elw, b as u64);
            assert_eq!(a < b, ea < eb);
        }
    }
}
