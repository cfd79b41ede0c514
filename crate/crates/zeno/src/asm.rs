//! Assembly frontend: parses the textual dialect into decoded [`Program`]s
//! and prints programs back in canonical form.
//!
//! Syntax is conventional: one instruction per line, `#` comments, labels as
//! `name:`, memory operands as `imm(xN)`, extended-addressing operands as
//! `imm(xN), eM`. Integer registers are spelled `x0`-`x31`, extended
//! (namespace-id) registers `e0`-`e31`. `x0` reads as zero and ignores
//! writes; `e0` is the hardwired null capability. `.data OFFSET` opens a
//! data segment at a byte offset in the node's data namespace, filled with
//! `.byte` / `.word` / `.dword` values. `.entry LABEL` overrides the start
//! index. Pseudo-instructions `li`, `mv`, `nop`, `j`, `beqz`, `bnez` expand
//! during parsing, so round-trips are identities on the decoded form.

use std::collections::BTreeMap;
use std::fmt;

use crate::isa::{DataSegment, Instruction, Opcode, Program};

/// Parse failure with a 1-based source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, message: message.into() })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(i64),
    LParen,
    RParen,
    Comma,
    Colon,
}

fn tokenize_line(line: &str, lineno: usize) -> Result<Vec<Tok>, ParseError> {
    let mut toks = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '#' => break,
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                toks.push(Tok::LParen);
            }
            ')' => {
                chars.next();
                toks.push(Tok::RParen);
            }
            ',' => {
                chars.next();
                toks.push(Tok::Comma);
            }
            ':' => {
                chars.next();
                toks.push(Tok::Colon);
            }
            c if c.is_ascii_digit() || c == '-' => {
                let mut s = String::new();
                s.push(chars.next().unwrap());
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        s.push(chars.next().unwrap());
                    } else {
                        break;
                    }
                }
                toks.push(Tok::Num(parse_number(&s, lineno)?));
            }
            c if c.is_ascii_alphabetic() || c == '.' || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '.' || d == '_' {
                        s.push(chars.next().unwrap());
                    } else {
                        break;
                    }
                }
                toks.push(Tok::Ident(s));
            }
            other => return err(lineno, format!("unexpected character `{other}`")),
        }
    }
    Ok(toks)
}

fn parse_number(s: &str, lineno: usize) -> Result<i64, ParseError> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let magnitude: i128 = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i128::from_str_radix(&hex.replace('_', ""), 16)
            .map_err(|_| ParseError { line: lineno, message: format!("bad number `{s}`") })?
    } else {
        body.replace('_', "")
            .parse::<i128>()
            .map_err(|_| ParseError { line: lineno, message: format!("bad number `{s}`") })?
    };
    let value = if neg { -magnitude } else { magnitude };
    if value < i64::MIN as i128 || value > u64::MAX as i128 {
        return err(lineno, format!("number `{s}` out of range"));
    }
    // Values above i64::MAX are reinterpreted as their two's-complement
    // bit pattern (hex masks like 0xffffffff_ffffffff).
    Ok(value as i64)
}

fn parse_xreg(tok: &Tok, lineno: usize) -> Result<u8, ParseError> {
    if let Tok::Ident(name) = tok {
        if let Some(num) = name.strip_prefix('x') {
            if let Ok(n) = num.parse::<u8>() {
                if n < 32 && num.len() <= 2 {
                    return Ok(n);
                }
            }
        }
        return err(lineno, format!("bad register `{name}`"));
    }
    err(lineno, "expected register")
}

fn parse_ereg(tok: &Tok, lineno: usize) -> Result<u8, ParseError> {
    if let Tok::Ident(name) = tok {
        if let Some(num) = name.strip_prefix('e') {
            if let Ok(n) = num.parse::<u8>() {
                if n < 32 && num.len() <= 2 {
                    return Ok(n);
                }
            }
        }
        return err(lineno, format!("bad extended register `{name}`"));
    }
    err(lineno, "expected extended register")
}

fn is_xreg(tok: &Tok) -> bool {
    matches!(tok, Tok::Ident(n) if n.starts_with('x') && n[1..].parse::<u8>().map(|v| v < 32).unwrap_or(false))
}

fn is_ereg(tok: &Tok) -> bool {
    matches!(tok, Tok::Ident(n) if n.starts_with('e') && n[1..].parse::<u8>().map(|v| v < 32).unwrap_or(false))
}

/// Branch/jump target before resolution.
#[derive(Debug, Clone)]
enum Target {
    Index(i64),
    Label(String),
}

const IMM12_MIN: i64 = -2048;
const IMM12_MAX: i64 = 2047;

struct LineParser<'a> {
    toks: &'a [Tok],
    pos: usize,
    line: usize,
}

impl<'a> LineParser<'a> {
    fn new(toks: &'a [Tok], line: usize) -> Self {
        LineParser { toks, pos: 0, line }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<&Tok, ParseError> {
        let t = self.toks.get(self.pos).ok_or(ParseError {
            line: self.line,
            message: "unexpected end of line".into(),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn comma(&mut self) -> Result<(), ParseError> {
        match self.next()? {
            Tok::Comma => Ok(()),
            _ => err(self.line, "expected `,`"),
        }
    }

    fn xreg(&mut self) -> Result<u8, ParseError> {
        let line = self.line;
        let t = self.next()?.clone();
        parse_xreg(&t, line)
    }

    fn ereg(&mut self) -> Result<u8, ParseError> {
        let line = self.line;
        let t = self.next()?.clone();
        parse_ereg(&t, line)
    }

    fn imm(&mut self, min: i64, max: i64) -> Result<i64, ParseError> {
        let line = self.line;
        match self.next()? {
            Tok::Num(v) => {
                let v = *v;
                if v < min || v > max {
                    err(line, format!("immediate {v} out of range [{min}, {max}]"))
                } else {
                    Ok(v)
                }
            }
            _ => err(line, "expected immediate"),
        }
    }

    /// `imm(xN)` memory operand.
    fn mem(&mut self) -> Result<(i64, u8), ParseError> {
        let imm = self.imm(IMM12_MIN, IMM12_MAX)?;
        match self.next()? {
            Tok::LParen => {}
            _ => return err(self.line, "expected `(` in memory operand"),
        }
        let base = self.xreg()?;
        match self.next()? {
            Tok::RParen => {}
            _ => return err(self.line, "expected `)` in memory operand"),
        }
        Ok((imm, base))
    }

    fn target(&mut self) -> Result<Target, ParseError> {
        let line = self.line;
        match self.next()? {
            Tok::Num(v) => Ok(Target::Index(*v)),
            Tok::Ident(name) => Ok(Target::Label(name.clone())),
            _ => err(line, "expected branch target"),
        }
    }

    fn end(&self) -> Result<(), ParseError> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            err(self.line, "trailing tokens after instruction")
        }
    }
}

/// Parse assembly text into a decoded program. Parsing is total over
/// malformed inputs: every failure is reported as a [`ParseError`] with the
/// offending line, never a panic. CRLF input is accepted.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut instructions: Vec<Instruction> = Vec::new();
    let mut pending: Vec<(usize, Target, usize)> = Vec::new(); // (instr idx, target, line)
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    let mut data_segments: Vec<DataSegment> = Vec::new();
    let mut entry_target: Option<(Target, usize)> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        let toks = tokenize_line(line, lineno)?;
        let mut p = LineParser::new(&toks, lineno);

        // Leading labels (possibly several on one line).
        while p.toks.len() >= p.pos + 2 {
            if let (Tok::Ident(name), Tok::Colon) = (&p.toks[p.pos], &p.toks[p.pos + 1]) {
                if is_xreg(&p.toks[p.pos]) || is_ereg(&p.toks[p.pos]) || name.starts_with('.') {
                    return err(lineno, format!("bad label name `{name}`"));
                }
                if labels.insert(name.clone(), instructions.len()).is_some() {
                    return err(lineno, format!("duplicate label `{name}`"));
                }
                p.pos += 2;
            } else {
                break;
            }
        }

        let mnemonic = match p.peek() {
            None => continue,
            Some(Tok::Ident(m)) => m.clone(),
            Some(_) => return err(lineno, "expected mnemonic"),
        };
        p.pos += 1;

        if mnemonic.starts_with('.') {
            parse_directive(&mnemonic, &mut p, &mut data_segments, &mut entry_target)?;
            p.end()?;
            continue;
        }

        parse_instruction(&mnemonic, &mut p, lineno, &mut instructions, &mut pending)?;
        p.end()?;
    }

    // Resolve branch targets to instruction indices.
    for (at, target, lineno) in pending {
        let index = resolve_target(&target, &labels, instructions.len(), lineno)?;
        instructions[at].imm = index as i64;
    }
    let entry = match entry_target {
        None => 0,
        Some((target, lineno)) => resolve_target(&target, &labels, instructions.len(), lineno)?,
    };

    Ok(Program { instructions, labels, entry, data_segments })
}

fn resolve_target(
    target: &Target,
    labels: &BTreeMap<String, usize>,
    len: usize,
    lineno: usize,
) -> Result<usize, ParseError> {
    let index = match target {
        Target::Index(i) => {
            if *i < 0 || *i as usize >= len.max(1) {
                return err(lineno, format!("branch target index {i} out of range"));
            }
            *i as usize
        }
        Target::Label(name) => *labels
            .get(name)
            .ok_or(ParseError { line: lineno, message: format!("unresolved label `{name}`") })?,
    };
    if index >= len {
        return err(lineno, format!("branch target {index} past end of program"));
    }
    Ok(index)
}

fn parse_directive(
    name: &str,
    p: &mut LineParser,
    data_segments: &mut Vec<DataSegment>,
    entry_target: &mut Option<(Target, usize)>,
) -> Result<(), ParseError> {
    let line = p.line;
    match name {
        ".data" => {
            let offset = p.imm(0, i64::MAX)?;
            data_segments.push(DataSegment { offset: offset as u64, bytes: Vec::new() });
            Ok(())
        }
        ".byte" | ".word" | ".dword" => {
            let seg = data_segments
                .last_mut()
                .ok_or(ParseError { line, message: format!("`{name}` outside a .data segment") })?;
            let width = match name {
                ".byte" => 1,
                ".word" => 4,
                _ => 8,
            };
            let mut count = 0;
            while p.peek().is_some() {
                if count > 0 {
                    if matches!(p.peek(), Some(Tok::Comma)) {
                        p.pos += 1;
                    }
                }
                let v = match p.next()? {
                    Tok::Num(v) => *v,
                    _ => return err(line, "expected numeric data value"),
                };
                let max: i128 = (1i128 << (width * 8)) - 1;
                let min: i128 = -(1i128 << (width * 8 - 1));
                if (v as i128) > max || (v as i128) < min {
                    return err(line, format!("data value {v} does not fit in {width} bytes"));
                }
                seg.bytes.extend_from_slice(&(v as u64).to_le_bytes()[..width]);
                count += 1;
            }
            if count == 0 {
                return err(line, "data directive needs at least one value");
            }
            Ok(())
        }
        ".text" => Ok(()),
        ".entry" => {
            let t = p.target()?;
            *entry_target = Some((t, line));
            Ok(())
        }
        other => err(line, format!("unknown directive `{other}`")),
    }
}

fn push(instructions: &mut Vec<Instruction>, mut ins: Instruction, line: usize) {
    ins.source_line = line as u32;
    instructions.push(ins);
}

fn parse_instruction(
    mnemonic: &str,
    p: &mut LineParser,
    line: usize,
    out: &mut Vec<Instruction>,
    pending: &mut Vec<(usize, Target, usize)>,
) -> Result<(), ParseError> {
    use Opcode::*;
    let rr = |op| -> Option<Opcode> { Some(op) };

    // Register-register ALU.
    let op_rr = match mnemonic {
        "add" => rr(Add),
        "sub" => rr(Sub),
        "and" => rr(And),
        "or" => rr(Or),
        "xor" => rr(Xor),
        "sll" => rr(Sll),
        "srl" => rr(Srl),
        "sra" => rr(Sra),
        "slt" => rr(Slt),
        "sltu" => rr(Sltu),
        _ => None,
    };
    if let Some(op) = op_rr {
        let mut ins = Instruction::new(op);
        ins.rd = p.xreg()?;
        p.comma()?;
        ins.rs1 = p.xreg()?;
        p.comma()?;
        ins.rs2 = p.xreg()?;
        push(out, ins, line);
        return Ok(());
    }

    // Register-immediate ALU.
    let op_ri = match mnemonic {
        "addi" => Some((Addi, IMM12_MIN, IMM12_MAX)),
        "andi" => Some((Andi, IMM12_MIN, IMM12_MAX)),
        "ori" => Some((Ori, IMM12_MIN, IMM12_MAX)),
        "xori" => Some((Xori, IMM12_MIN, IMM12_MAX)),
        "slti" => Some((Slti, IMM12_MIN, IMM12_MAX)),
        "sltiu" => Some((Sltiu, IMM12_MIN, IMM12_MAX)),
        "slli" => Some((Slli, 0, 63)),
        "srli" => Some((Srli, 0, 63)),
        "srai" => Some((Srai, 0, 63)),
        _ => None,
    };
    if let Some((op, lo, hi)) = op_ri {
        let mut ins = Instruction::new(op);
        ins.rd = p.xreg()?;
        p.comma()?;
        ins.rs1 = p.xreg()?;
        p.comma()?;
        ins.imm = p.imm(lo, hi)?;
        push(out, ins, line);
        return Ok(());
    }

    match mnemonic {
        "lui" | "auipc" => {
            let mut ins = Instruction::new(if mnemonic == "lui" { Lui } else { Auipc });
            ins.rd = p.xreg()?;
            p.comma()?;
            let raw = p.imm(-(1 << 19), (1 << 20) - 1)?;
            // Normalize the 20-bit field to its signed value.
            ins.imm = if raw > (1 << 19) - 1 { raw - (1 << 20) } else { raw };
            push(out, ins, line);
        }
        "beq" | "bne" | "blt" | "bge" | "bltu" | "bgeu" => {
            let op = match mnemonic {
                "beq" => Beq,
                "bne" => Bne,
                "blt" => Blt,
                "bge" => Bge,
                "bltu" => Bltu,
                _ => Bgeu,
            };
            let mut ins = Instruction::new(op);
            ins.rs1 = p.xreg()?;
            p.comma()?;
            ins.rs2 = p.xreg()?;
            p.comma()?;
            let t = p.target()?;
            push(out, ins, line);
            pending.push((out.len() - 1, t, line));
        }
        "jal" => {
            let mut ins = Instruction::new(Jal);
            ins.rd = p.xreg()?;
            p.comma()?;
            let t = p.target()?;
            push(out, ins, line);
            pending.push((out.len() - 1, t, line));
        }
        "jalr" => {
            let mut ins = Instruction::new(Jalr);
            ins.rd = p.xreg()?;
            p.comma()?;
            ins.rs1 = p.xreg()?;
            p.comma()?;
            ins.imm = p.imm(IMM12_MIN, IMM12_MAX)?;
            push(out, ins, line);
        }
        "lb" | "lh" | "lw" | "ld" => {
            let op = match mnemonic {
                "lb" => Lb,
                "lh" => Lh,
                "lw" => Lw,
                _ => Ld,
            };
            let mut ins = Instruction::new(op);
            ins.rd = p.xreg()?;
            p.comma()?;
            let (imm, base) = p.mem()?;
            ins.imm = imm;
            ins.rs1 = base;
            push(out, ins, line);
        }
        "sb" | "sh" | "sw" | "sd" => {
            let op = match mnemonic {
                "sb" => Sb,
                "sh" => Sh,
                "sw" => Sw,
                _ => Sd,
            };
            let mut ins = Instruction::new(op);
            ins.rs2 = p.xreg()?;
            p.comma()?;
            let (imm, base) = p.mem()?;
            ins.imm = imm;
            ins.rs1 = base;
            push(out, ins, line);
        }
        "elw" | "eld" | "eldv" => {
            let op = match mnemonic {
                "elw" => Elw,
                "eld" => Eld,
                _ => Eldv,
            };
            let mut ins = Instruction::new(op);
            ins.rd = p.xreg()?;
            p.comma()?;
            let (imm, base) = p.mem()?;
            ins.imm = imm;
            ins.rs1 = base;
            p.comma()?;
            ins.ers1 = p.ereg()?;
            push(out, ins, line);
        }
        "esw" | "esd" => {
            let mut ins = Instruction::new(if mnemonic == "esw" { Esw } else { Esd });
            ins.rs2 = p.xreg()?;
            p.comma()?;
            let (imm, base) = p.mem()?;
            ins.imm = imm;
            ins.rs1 = base;
            p.comma()?;
            ins.ers1 = p.ereg()?;
            push(out, ins, line);
        }
        "eldc" => {
            let mut ins = Instruction::new(Eldc);
            ins.erd = p.ereg()?;
            p.comma()?;
            let (imm, base) = p.mem()?;
            ins.imm = imm;
            ins.rs1 = base;
            p.comma()?;
            ins.ers1 = p.ereg()?;
            push(out, ins, line);
        }
        "esdc" => {
            let mut ins = Instruction::new(Esdc);
            ins.ers2 = p.ereg()?;
            p.comma()?;
            let (imm, base) = p.mem()?;
            ins.imm = imm;
            ins.rs1 = base;
            p.comma()?;
            ins.ers1 = p.ereg()?;
            push(out, ins, line);
        }
        "emov" => {
            let first = p.next()?.clone();
            p.comma()?;
            let second = p.next()?.clone();
            let mut ins = Instruction::new(EmovEE);
            match (is_ereg(&first), is_ereg(&second), is_xreg(&first), is_xreg(&second)) {
                (true, true, _, _) => {
                    ins.opcode = EmovEE;
                    ins.erd = parse_ereg(&first, line)?;
                    ins.ers1 = parse_ereg(&second, line)?;
                }
                (true, _, _, true) => {
                    ins.opcode = EmovEX;
                    ins.erd = parse_ereg(&first, line)?;
                    ins.rs1 = parse_xreg(&second, line)?;
                }
                (_, true, true, _) => {
                    ins.opcode = EmovXE;
                    ins.rd = parse_xreg(&first, line)?;
                    ins.ers1 = parse_ereg(&second, line)?;
                }
                _ => return err(line, "emov needs at least one extended register operand"),
            }
            push(out, ins, line);
        }
        "ns.create" => {
            let mut ins = Instruction::new(NsCreate);
            ins.erd = p.ereg()?;
            p.comma()?;
            ins.rs1 = p.xreg()?;
            p.comma()?;
            ins.rs2 = p.xreg()?;
            p.comma()?;
            ins.rs3 = p.xreg()?;
            push(out, ins, line);
        }
        "ns.derive" => {
            let mut ins = Instruction::new(NsDerive);
            ins.erd = p.ereg()?;
            p.comma()?;
            ins.ers1 = p.ereg()?;
            p.comma()?;
            ins.rs1 = p.xreg()?;
            p.comma()?;
            ins.rs2 = p.xreg()?;
            p.comma()?;
            ins.rs3 = p.xreg()?;
            push(out, ins, line);
        }
        "ns.revoke" => {
            let mut ins = Instruction::new(NsRevoke);
            ins.rd = p.xreg()?;
            p.comma()?;
            ins.ers1 = p.ereg()?;
            push(out, ins, line);
        }
        "rcinv" => {
            let mut ins = Instruction::new(RcInv);
            ins.rd = p.xreg()?;
            p.comma()?;
            ins.ers1 = p.ereg()?;
            push(out, ins, line);
        }
        "rcinv.all" => {
            let mut ins = Instruction::new(RcInvAll);
            ins.rd = p.xreg()?;
            push(out, ins, line);
        }
        "statmark" => {
            let mut ins = Instruction::new(Statmark);
            ins.imm = p.imm(0, 4095)?;
            push(out, ins, line);
        }
        "halt" => {
            push(out, Instruction::new(Halt), line);
        }
        // Pseudo-instructions.
        "nop" => {
            push(out, Instruction::new(Addi), line);
        }
        "mv" => {
            let mut ins = Instruction::new(Addi);
            ins.rd = p.xreg()?;
            p.comma()?;
            ins.rs1 = p.xreg()?;
            push(out, ins, line);
        }
        "li" => {
            let rd = p.xreg()?;
            p.comma()?;
            let v = match p.next()? {
                Tok::Num(v) => *v,
                _ => return err(line, "expected immediate"),
            };
            expand_li(rd, v, line, out)?;
        }
        "j" => {
            let mut ins = Instruction::new(Jal);
            ins.rd = 0;
            let t = p.target()?;
            push(out, ins, line);
            pending.push((out.len() - 1, t, line));
        }
        "beqz" | "bnez" => {
            let mut ins = Instruction::new(if mnemonic == "beqz" { Beq } else { Bne });
            ins.rs1 = p.xreg()?;
            p.comma()?;
            let t = p.target()?;
            push(out, ins, line);
            pending.push((out.len() - 1, t, line));
        }
        other => return err(line, format!("unknown mnemonic `{other}`")),
    }
    Ok(())
}

fn expand_li(
    rd: u8,
    value: i64,
    line: usize,
    out: &mut Vec<Instruction>,
) -> Result<(), ParseError> {
    if (IMM12_MIN..=IMM12_MAX).contains(&value) {
        let mut ins = Instruction::new(Opcode::Addi);
        ins.rd = rd;
        ins.imm = value;
        push(out, ins, line);
        return Ok(());
    }
    let hi = (value + 0x800) >> 12;
    let lo = value - (hi << 12);
    if !(-(1 << 19)..(1 << 19)).contains(&hi) {
        return err(line, format!("li immediate {value} out of materializable range"));
    }
    let mut lui = Instruction::new(Opcode::Lui);
    lui.rd = rd;
    lui.imm = hi;
    push(out, lui, line);
    if lo != 0 {
        let mut addi = Instruction::new(Opcode::Addi);
        addi.rd = rd;
        addi.rs1 = rd;
        addi.imm = lo;
        push(out, addi, line);
    }
    Ok(())
}

fn branch_mnemonic(op: Opcode) -> &'static str {
    use Opcode::*;
    match op {
        Beq => "beq",
        Bne => "bne",
        Blt => "blt",
        Bge => "bge",
        Bltu => "bltu",
        Bgeu => "bgeu",
        _ => unreachable!(),
    }
}

/// Print a program in canonical form. `parse_program(format_program(p))`
/// yields a program equal to `p` on the decoded form.
pub fn format_program(p: &Program) -> String {
    use Opcode::*;
    let mut targets: Vec<usize> = p
        .instructions
        .iter()
        .filter(|i| matches!(i.opcode, Beq | Bne | Blt | Bge | Bltu | Bgeu | Jal))
        .map(|i| i.imm as usize)
        .collect();
    if p.entry != 0 {
        targets.push(p.entry);
    }
    targets.sort_unstable();
    targets.dedup();
    let label_at = |idx: usize| targets.binary_search(&idx).is_ok();

    let mut text = String::new();
    if p.entry != 0 {
        text.push_str(&format!(".entry L{}\n", p.entry));
    }
    for (idx, ins) in p.instructions.iter().enumerate() {
        if label_at(idx) {
            text.push_str(&format!("L{idx}:\n"));
        }
        let s = match ins.opcode {
            Add | Sub | And | Or | Xor | Sll | Srl | Sra | Slt | Sltu => {
                let m = match ins.opcode {
                    Add => "add",
                    Sub => "sub",
                    And => "and",
                    Or => "or",
                    Xor => "xor",
                    Sll => "sll",
                    Srl => "srl",
                    Sra => "sra",
                    Slt => "slt",
                    _ => "sltu",
                };
                format!("{m} x{}, x{}, x{}", ins.rd, ins.rs1, ins.rs2)
            }
            Addi | Andi | Ori | Xori | Slti | Sltiu | Slli | Srli | Srai => {
                let m = match ins.opcode {
                    Addi => "addi",
                    Andi => "andi",
                    Ori => "ori",
                    Xori => "xori",
                    Slti => "slti",
                    Sltiu => "sltiu",
                    Slli => "slli",
                    Srli => "srli",
                    _ => "srai",
                };
                format!("{m} x{}, x{}, {}", ins.rd, ins.rs1, ins.imm)
            }
            Lui => format!("lui x{}, {}", ins.rd, ins.imm),
            Auipc => format!("auipc x{}, {}", ins.rd, ins.imm),
            Beq | Bne | Blt | Bge | Bltu | Bgeu => {
                format!(
                    "{} x{}, x{}, L{}",
                    branch_mnemonic(ins.opcode),
                    ins.rs1,
                    ins.rs2,
                    ins.imm
                )
            }
            Jal => format!("jal x{}, L{}", ins.rd, ins.imm),
            Jalr => format!("jalr x{}, x{}, {}", ins.rd, ins.rs1, ins.imm),
            Lb | Lh | Lw | Ld => {
                let m = match ins.opcode {
                    Lb => "lb",
                    Lh => "lh",
                    Lw => "lw",
                    _ => "ld",
                };
                format!("{m} x{}, {}(x{})", ins.rd, ins.imm, ins.rs1)
            }
            Sb | Sh | Sw | Sd => {
                let m = match ins.opcode {
                    Sb => "sb",
                    Sh => "sh",
                    Sw => "sw",
                    _ => "sd",
                };
                format!("{m} x{}, {}(x{})", ins.rs2, ins.imm, ins.rs1)
            }
            Elw | Eld | Eldv => {
                let m = match ins.opcode {
                    Elw => "elw",
                    Eld => "eld",
                    _ => "eldv",
                };
                format!("{m} x{}, {}(x{}), e{}", ins.rd, ins.imm, ins.rs1, ins.ers1)
            }
            Esw | Esd => {
                let m = if ins.opcode == Esw { "esw" } else { "esd" };
                format!("{m} x{}, {}(x{}), e{}", ins.rs2, ins.imm, ins.rs1, ins.ers1)
            }
            Eldc => format!("eldc e{}, {}(x{}), e{}", ins.erd, ins.imm, ins.rs1, ins.ers1),
            Esdc => format!("esdc e{}, {}(x{}), e{}", ins.ers2, ins.imm, ins.rs1, ins.ers1),
            EmovEE => format!("emov e{}, e{}", ins.erd, ins.ers1),
            EmovEX => format!("emov e{}, x{}", ins.erd, ins.rs1),
            EmovXE => format!("emov x{}, e{}", ins.rd, ins.ers1),
            NsCreate => {
                format!("ns.create e{}, x{}, x{}, x{}", ins.erd, ins.rs1, ins.rs2, ins.rs3)
            }
            NsDerive => format!(
                "ns.derive e{}, e{}, x{}, x{}, x{}",
                ins.erd, ins.ers1, ins.rs1, ins.rs2, ins.rs3
            ),
            NsRevoke => format!("ns.revoke x{}, e{}", ins.rd, ins.ers1),
            RcInv => format!("rcinv x{}, e{}", ins.rd, ins.ers1),
            RcInvAll => format!("rcinv.all x{}", ins.rd),
            Statmark => format!("statmark {}", ins.imm),
            Halt => "halt".to_string(),
        };
        text.push_str("    ");
        text.push_str(&s);
        text.push('\n');
    }
    for seg in &p.data_segments {
        text.push_str(&format!(".data {}\n", seg.offset));
        let mut i = 0;
        while i + 4 <= seg.bytes.len() {
            let mut words = Vec::new();
            while i + 4 <= seg.bytes.len() && words.len() < 8 {
                let w = u32::from_le_bytes(seg.bytes[i..i + 4].try_into().unwrap());
                words.push(format!("0x{w:x}"));
                i += 4;
            }
            text.push_str(&format!("    .word {}\n", words.join(", ")));
        }
        if i < seg.bytes.len() {
            let rest: Vec<String> =
                seg.bytes[i..].iter().map(|b| format!("0x{b:x}")).collect();
            text.push_str(&format!("    .byte {}\n", rest.join(", ")));
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_instruction_loop() {
        let p = parse_program("loop: addi x1, x1, -1\nbne x1, x0, loop\n").unwrap();
        assert_eq!(p.instructions.len(), 2);
        assert_eq!(p.labels["loop"], 0);
        assert_eq!(p.instructions[0].opcode, Opcode::Addi);
        assert_eq!(p.instructions[0].imm, -1);
        assert_eq!(p.instructions[1].opcode, Opcode::Bne);
        assert_eq!(p.instructions[1].imm, 0);
        assert_eq!(p.instructions[1].source_line, 2);
    }

    #[test]
    fn ns_create_operands() {
        let p = parse_program("ns.create e1, x2, x3, x4\n").unwrap();
        let i = p.instructions[0];
        assert_eq!(i.opcode, Opcode::NsCreate);
        assert_eq!(i.erd, 1);
        assert_eq!(i.rs1, 2);
        assert_eq!(i.rs2, 3);
        assert_eq!(i.rs3, 4);
    }

    #[test]
    fn bad_register_reports_line_one() {
        let e = parse_program("ld x1, 0(x9999)").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.message.contains("bad register"), "{}", e.message);
    }

    #[test]
    fn unknown_mnemonic() {
        let e = parse_program("addq x1, x2, x3\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.message.contains("unknown mnemonic"));
    }

    #[test]
    fn unresolved_label() {
        let e = parse_program("beq x0, x0, nowhere\n").unwrap_err();
        assert!(e.message.contains("unresolved label `nowhere`"));
    }

    #[test]
    fn duplicate_label() {
        let e = parse_program("a:\nhalt\na:\nhalt\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("duplicate label"));
    }

    #[test]
    fn immediate_overflow() {
        let e = parse_program("addi x1, x0, 4096\n").unwrap_err();
        assert!(e.message.contains("out of range"));
    }

    #[test]
    fn extended_memory_operands() {
        let p = parse_program("eld x5, 8(x3), e2\nesdc e7, 0(x1), e1\n").unwrap();
        let l = p.instructions[0];
        assert_eq!((l.rd, l.rs1, l.imm, l.ers1), (5, 3, 8, 2));
        let s = p.instructions[1];
        assert_eq!((s.ers2, s.rs1, s.ers1), (7, 1, 1));
    }

    #[test]
    fn emov_forms() {
        let p = parse_program("emov e1, e2\nemov e3, x4\nemov x5, e6\n").unwrap();
        assert_eq!(p.instructions[0].opcode, Opcode::EmovEE);
        assert_eq!(p.instructions[1].opcode, Opcode::EmovEX);
        assert_eq!(p.instructions[2].opcode, Opcode::EmovXE);
        assert!(parse_program("emov x1, x2\n").is_err());
    }

    #[test]
    fn li_expansion() {
        let p = parse_program("li x1, 100\nli x2, 32768\nli x3, -4096\n").unwrap();
        assert_eq!(p.instructions[0].opcode, Opcode::Addi);
        assert_eq!(p.instructions[1].opcode, Opcode::Lui);
        assert_eq!(p.instructions[2].opcode, Opcode::Addi);
        // lui+addi pair for 32768 = 0x8000: hi=8, lo=0 -> single lui.
        assert_eq!(p.instructions[1].imm, 8);
        assert_eq!(p.instructions.len(), 4);
        assert_eq!(p.instructions[3].opcode, Opcode::Addi);
    }

    #[test]
    fn data_segments_roundtrip() {
        let src = ".data 64\n.word 1, 2, 3\n.byte 0xff\n.data 4096\n.dword 0x1122334455667788\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.data_segments.len(), 2);
        assert_eq!(p.data_segments[0].offset, 64);
        assert_eq!(p.data_segments[0].bytes.len(), 13);
        assert_eq!(p.data_segments[1].bytes, 0x1122334455667788u64.to_le_bytes());
        let again = parse_program(&format_program(&p)).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn crlf_accepted() {
        let p = parse_program("addi x1, x0, 1\r\nhalt\r\n").unwrap();
        assert_eq!(p.instructions.len(), 2);
    }

    #[test]
    fn empty_program_roundtrip() {
        let p = parse_program("").unwrap();
        assert!(p.instructions.is_empty());
        let text = format_program(&p);
        assert_eq!(parse_program(&text).unwrap(), p);
    }

    #[test]
    fn loop_roundtrip_identity() {
        let src = "loop: addi x1, x1, -1\nbne x1, x0, loop\nhalt\n";
        let p = parse_program(src).unwrap();
        let q = parse_program(&format_program(&p)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn comments_and_blank_lines() {
        let p = parse_program("# header\n\n  addi x1, x0, 3 # trailing\n").unwrap();
        assert_eq!(p.instructions.len(), 1);
        assert_eq!(p.instructions[0].source_line, 3);
    }

    #[test]
    fn entry_directive() {
        let p = parse_program(".entry main\nhalt\nmain: addi x1, x0, 1\nhalt\n").unwrap();
        assert_eq!(p.entry, 1);
        let q = parse_program(&format_program(&p)).unwrap();
        assert_eq!(p, q);
    }
}
