//! Parser for the structural subset of smali used by the analyses.
//!
//! Recognized directives: `.class`, `.super`, `.implements`, `.method`,
//! `.end method`. Debug and metadata directives (`.line`, `.local`,
//! `.registers`, `.annotation` blocks, `.param` blocks, switch/array payload
//! blocks, ...) are skipped, as are labels and `.catch` lines.

use std::fmt::Write as _;

use super::model::{ClassDef, Instruction, MethodDef, Operand};
use super::opcode::Opcode;
use crate::error::{Error, Result};

const ACCESS_FLAGS: &[&str] = &[
    "public",
    "private",
    "protected",
    "static",
    "final",
    "synchronized",
    "volatile",
    "bridge",
    "transient",
    "varargs",
    "native",
    "interface",
    "abstract",
    "strict",
    "strictfp",
    "synthetic",
    "annotation",
    "enum",
    "constructor",
    "declared-synchronized",
];

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        message: message.into(),
    }
}

fn split_flags(line: usize, tokens: &[&str]) -> Result<Vec<String>> {
    tokens
        .iter()
        .map(|t| {
            if ACCESS_FLAGS.contains(t) {
                Ok(t.to_string())
            } else {
                Err(syntax(line, format!("unknown access flag `{t}`")))
            }
        })
        .collect()
}

/// Strips a trailing `# comment` that is not inside a string literal.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in line.char_indices() {
        match ch {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Splits an operand list on top-level commas.
fn split_operands(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut depth, mut in_str, mut escaped) = (0i32, false, false);
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        match ch {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '{' | '(' if !in_str => depth += 1,
            '}' | ')' if !in_str => depth -= 1,
            ',' if !in_str && depth == 0 => {
                parts.push(text[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = text[start..].trim();
    if !last.is_empty() || !parts.is_empty() {
        parts.push(last);
    }
    parts
}

fn is_register(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('v' | 'p'))
        && s.len() > 1
        && chars.all(|c| c.is_ascii_digit())
}

fn parse_operand(line: usize, raw: &str) -> Result<Operand> {
    if raw.is_empty() {
        return Err(syntax(line, "empty operand"));
    }
    if let Some(inner) = raw.strip_prefix('{') {
        let inner = inner
            .strip_suffix('}')
            .ok_or_else(|| syntax(line, "unterminated register list"))?
            .trim();
        if let Some((a, b)) = inner.split_once("..") {
            let (a, b) = (a.trim(), b.trim());
            if !is_register(a) || !is_register(b) {
                return Err(syntax(line, format!("bad register range `{raw}`")));
            }
            return Ok(Operand::RegisterRange(a.to_string(), b.to_string()));
        }
        let regs: Vec<String> = if inner.is_empty() {
            Vec::new()
        } else {
            inner.split(',').map(|r| r.trim().to_string()).collect()
        };
        if let Some(bad) = regs.iter().find(|r| !is_register(r)) {
            return Err(syntax(line, format!("bad register `{bad}`")));
        }
        return Ok(Operand::RegisterList(regs));
    }
    if let Some(s) = raw.strip_prefix('"') {
        let s = s
            .strip_suffix('"')
            .ok_or_else(|| syntax(line, "unterminated string literal"))?;
        return Ok(Operand::Str(s.to_string()));
    }
    if let Some(l) = raw.strip_prefix(':') {
        return Ok(Operand::Label(l.to_string()));
    }
    if is_register(raw) {
        return Ok(Operand::Register(raw.to_string()));
    }
    if raw.contains("->") {
        let rhs = raw.split_once("->").map(|x| x.1).unwrap_or_default();
        return Ok(if rhs.contains('(') {
            Operand::Method(raw.to_string())
        } else {
            Operand::Field(raw.to_string())
        });
    }
    if (raw.starts_with('L') && raw.ends_with(';')) || raw.starts_with('[') {
        return Ok(Operand::Type(raw.to_string()));
    }
    Ok(Operand::Literal(raw.to_string()))
}

fn parse_instruction(line: usize, text: &str, offset: u32) -> Result<Instruction> {
    let (mnemonic, rest) = match text.split_once(char::is_whitespace) {
        Some((m, r)) => (m, r.trim()),
        None => (text, ""),
    };
    let opcode = Opcode::from_mnemonic(mnemonic).ok_or_else(|| Error::UnknownOpcode {
        line,
        mnemonic: mnemonic.to_string(),
    })?;
    let operands = split_operands(rest)
        .into_iter()
        .map(|raw| parse_operand(line, raw))
        .collect::<Result<Vec<_>>>()?;
    let invoked_method = if opcode.is_invoke() {
        let callee = operands.iter().find_map(|op| match op {
            Operand::Method(m) => Some(m.clone()),
            _ => None,
        });
        Some(callee.ok_or_else(|| syntax(line, format!("`{mnemonic}` without a method reference")))?)
    } else {
        None
    };
    Ok(Instruction {
        offset,
        opcode,
        operands,
        invoked_method,
    })
}

/// Block directives whose contents are skipped up to the matching `.end`.
/// `.param` one-liners and `.end param` are ignored like any other directive;
/// annotations nested under them are covered by the `.annotation` entry.
const SKIPPED_BLOCKS: &[(&str, &str)] = &[
    (".annotation", ".end annotation"),
    (".subannotation", ".end subannotation"),
    (".packed-switch", ".end packed-switch"),
    (".sparse-switch", ".end sparse-switch"),
    (".array-data", ".end array-data"),
];

pub fn parse_smali_class(text: &str) -> Result<ClassDef> {
    let mut name: Option<String> = None;
    let mut flags = Vec::new();
    let mut superclass = None;
    let mut interfaces = Vec::new();
    let mut methods: Vec<MethodDef> = Vec::new();
    let mut current: Option<(MethodDef, u32)> = None;
    let mut skip_until: Option<&str> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(end) = skip_until {
            if line == end {
                skip_until = None;
            }
            continue;
        }
        let directive = line.split_whitespace().next().unwrap_or_default();
        if let Some(&(_, end)) = SKIPPED_BLOCKS.iter().find(|(o, _)| *o == directive) {
            skip_until = Some(end);
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match directive {
            ".class" => {
                if name.is_some() {
                    return Err(syntax(line_no, "duplicate .class directive"));
                }
                let (last, rest) = tokens[1..]
                    .split_last()
                    .ok_or_else(|| syntax(line_no, ".class without a name"))?;
                if !(last.starts_with('L') && last.ends_with(';')) {
                    return Err(syntax(line_no, format!("bad class name `{last}`")));
                }
                flags = split_flags(line_no, rest)?;
                name = Some(last.to_string());
            }
            ".super" => {
                let s = tokens
                    .get(1)
                    .ok_or_else(|| syntax(line_no, ".super without a name"))?;
                superclass = Some(s.to_string());
            }
            ".implements" => {
                let s = tokens
                    .get(1)
                    .ok_or_else(|| syntax(line_no, ".implements without a name"))?;
                interfaces.push(s.to_string());
            }
            ".method" => {
                if current.is_some() {
                    return Err(syntax(line_no, "nested .method"));
                }
                let owner = name
                    .clone()
                    .ok_or_else(|| syntax(line_no, ".method before .class"))?;
                let (sig, rest) = tokens[1..]
                    .split_last()
                    .ok_or_else(|| syntax(line_no, ".method without a signature"))?;
                let paren = sig
                    .find('(')
                    .ok_or_else(|| syntax(line_no, format!("bad method signature `{sig}`")))?;
                let (mname, descriptor) = sig.split_at(paren);
                if mname.is_empty() || !descriptor.contains(')') {
                    return Err(syntax(line_no, format!("bad method signature `{sig}`")));
                }
                if methods
                    .iter()
                    .any(|m| m.name == mname && m.descriptor == descriptor)
                {
                    return Err(syntax(line_no, format!("duplicate method `{sig}`")));
                }
                current = Some((
                    MethodDef {
                        owner,
                        name: mname.to_string(),
                        descriptor: descriptor.to_string(),
                        flags: split_flags(line_no, rest)?,
                        body: Vec::new(),
                        is_user_defined: true,
                    },
                    0,
                ));
            }
            ".end" => {
                if tokens.get(1) == Some(&"method") {
                    let (m, _) = current
                        .take()
                        .ok_or_else(|| syntax(line_no, ".end method without .method"))?;
                    methods.push(m);
                }
                // other .end forms (.end local, .end field, ...) are debug info
            }
            d if d.starts_with('.') => {
                // .source, .field, .line, .local, .registers, .catch, ... are ignored
            }
            d if d.starts_with(':') => {}
            _ => {
                let (method, offset) = current
                    .as_mut()
                    .ok_or_else(|| syntax(line_no, "instruction outside of a method"))?;
                let ins = parse_instruction(line_no, line, *offset)?;
                *offset += ins.opcode.width();
                method.body.push(ins);
            }
        }
    }
    if current.is_some() {
        return Err(syntax(text.lines().count(), "unterminated .method"));
    }
    let name = name.ok_or_else(|| syntax(1, "missing .class directive"))?;
    Ok(ClassDef {
        name,
        flags,
        superclass,
        interfaces,
        methods,
    })
}

/// Renders a class in the same subset grammar accepted by [`parse_smali_class`].
pub fn print_class(class: &ClassDef) -> String {
    let mut out = String::new();
    let mut head = vec![".class"];
    head.extend(class.flags.iter().map(String::as_str));
    head.push(&class.name);
    let _ = writeln!(out, "{}", head.join(" "));
    if let Some(sup) = &class.superclass {
        let _ = writeln!(out, ".super {sup}");
    }
    for i in &class.interfaces {
        let _ = writeln!(out, ".implements {i}");
    }
    for m in &class.methods {
        out.push('\n');
        let mut head = vec![".method".to_string()];
        head.extend(m.flags.iter().cloned());
        head.push(format!("{}{}", m.name, m.descriptor));
        let _ = writeln!(out, "{}", head.join(" "));
        for ins in &m.body {
            let ops: Vec<String> = ins.operands.iter().map(|o| o.to_string()).collect();
            if ops.is_empty() {
                let _ = writeln!(out, "    {}", ins.opcode);
            } else {
                let _ = writeln!(out, "    {} {}", ins.opcode, ops.join(", "));
            }
        }
        let _ = writeln!(out, ".end method");
    }
    out
}
