//! Dalvik opcode table.
//!
//! Values follow the standard Dalvik executable format (0x00-0xff). Unused
//! slots have no mnemonic and cannot be produced by the parser.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// (value, mnemonic, width in 16-bit code units)
const TABLE: &[(u8, &str, u8)] = &[
    (0x00, "nop", 1),
    (0x01, "move", 1),
    (0x02, "move/from16", 2),
    (0x03, "move/16", 3),
    (0x04, "move-wide", 1),
    (0x05, "move-wide/from16", 2),
    (0x06, "move-wide/16", 3),
    (0x07, "move-object", 1),
    (0x08, "move-object/from16", 2),
    (0x09, "move-object/16", 3),
    (0x0a, "move-result", 1),
    (0x0b, "move-result-wide", 1),
    (0x0c, "move-result-object", 1),
    (0x0d, "move-exception", 1),
    (0x0e, "return-void", 1),
    (0x0f, "return", 1),
    (0x10, "return-wide", 1),
    (0x11, "return-object", 1),
    (0x12, "const/4", 1),
    (0x13, "const/16", 2),
    (0x14, "const", 3),
    (0x15, "const/high16", 2),
    (0x16, "const-wide/16", 2),
    (0x17, "const-wide/32", 3),
    (0x18, "const-wide", 5),
    (0x19, "const-wide/high16", 2),
    (0x1a, "const-string", 2),
    (0x1b, "const-string/jumbo", 3),
    (0x1c, "const-class", 2),
    (0x1d, "monitor-enter", 1),
    (0x1e, "monitor-exit", 1),
    (0x1f, "check-cast", 2),
    (0x20, "instance-of", 2),
    (0x21, "array-length", 1),
    (0x22, "new-instance", 2),
    (0x23, "new-array", 2),
    (0x24, "filled-new-array", 3),
    (0x25, "filled-new-array/range", 3),
    (0x26, "fill-array-data", 3),
    (0x27, "throw", 1),
    (0x28, "goto", 1),
    (0x29, "goto/16", 2),
    (0x2a, "goto/32", 3),
    (0x2b, "packed-switch", 3),
    (0x2c, "sparse-switch", 3),
    (0x2d, "cmpl-float", 2),
    (0x2e, "cmpg-float", 2),
    (0x2f, "cmpl-double", 2),
    (0x30, "cmpg-double", 2),
    (0x31, "cmp-long", 2),
    (0x32, "if-eq", 2),
    (0x33, "if-ne", 2),
    (0x34, "if-lt", 2),
    (0x35, "if-ge", 2),
    (0x36, "if-gt", 2),
    (0x37, "if-le", 2),
    (0x38, "if-eqz", 2),
    (0x39, "if-nez", 2),
    (0x3a, "if-ltz", 2),
    (0x3b, "if-gez", 2),
    (0x3c, "if-gtz", 2),
    (0x3d, "if-lez", 2),
    (0x44, "aget", 2),
    (0x45, "aget-wide", 2),
    (0x46, "aget-object", 2),
    (0x47, "aget-boolean", 2),
    (0x48, "aget-byte", 2),
    (0x49, "aget-char", 2),
    (0x4a, "aget-short", 2),
    (0x4b, "aput", 2),
    (0x4c, "aput-wide", 2),
    (0x4d, "aput-object", 2),
    (0x4e, "aput-boolean", 2),
    (0x4f, "aput-byte", 2),
    (0x50, "aput-char", 2),
    (0x51, "aput-short", 2),
    (0x52, "iget", 2),
    (0x53, "iget-wide", 2),
    (0x54, "iget-object", 2),
    (0x55, "iget-boolean", 2),
    (0x56, "iget-byte", 2),
    (0x57, "iget-char", 2),
    (0x58, "iget-short", 2),
    (0x59, "iput", 2),
    (0x5a, "iput-wide", 2),
    (0x5b, "iput-object", 2),
    (0x5c, "iput-boolean", 2),
    (0x5d, "iput-byte", 2),
    (0x5e, "iput-char", 2),
    (0x5f, "iput-short", 2),
    (0x60, "sget", 2),
    (0x61, "sget-wide", 2),
    (0x62, "sget-object", 2),
    (0x63, "sget-boolean", 2),
    (0x64, "sget-byte", 2),
    (0x65, "sget-char", 2),
    (0x66, "sget-short", 2),
    (0x67, "sput", 2),
    (0x68, "sput-wide", 2),
    (0x69, "sput-object", 2),
    (0x6a, "sput-boolean", 2),
    (0x6b, "sput-byte", 2),
    (0x6c, "sput-char", 2),
    (0x6d, "sput-short", 2),
    (0x6e, "invoke-virtual", 3),
    (0x6f, "invoke-super", 3),
    (0x70, "invoke-direct", 3),
    (0x71, "invoke-static", 3),
    (0x72, "invoke-interface", 3),
    (0x74, "invoke-virtual/range", 3),
    (0x75, "invoke-super/range", 3),
    (0x76, "invoke-direct/range", 3),
    (0x77, "invoke-static/range", 3),
    (0x78, "invoke-interface/range", 3),
    (0x7b, "neg-int", 1),
    (0x7c, "not-int", 1),
    (0x7d, "neg-long", 1),
    (0x7e, "not-long", 1),
    (0x7f, "neg-float", 1),
    (0x80, "neg-double", 1),
    (0x81, "int-to-long", 1),
    (0x82, "int-to-float", 1),
    (0x83, "int-to-double", 1),
    (0x84, "long-to-int", 1),
    (0x85, "long-to-float", 1),
    (0x86, "long-to-double", 1),
    (0x87, "float-to-int", 1),
    (0x88, "float-to-long", 1),
    (0x89, "float-to-double", 1),
    (0x8a, "double-to-int", 1),
    (0x8b, "double-to-long", 1),
    (0x8c, "double-to-float", 1),
    (0x8d, "int-to-byte", 1),
    (0x8e, "int-to-char", 1),
    (0x8f, "int-to-short", 1),
    (0x90, "add-int", 2),
    (0x91, "sub-int", 2),
    (0x92, "mul-int", 2),
    (0x93, "div-int", 2),
    (0x94, "rem-int", 2),
    (0x95, "and-int", 2),
    (0x96, "or-int", 2),
    (0x97, "xor-int", 2),
    (0x98, "shl-int", 2),
    (0x99, "shr-int", 2),
    (0x9a, "ushr-int", 2),
    (0x9b, "add-long", 2),
    (0x9c, "sub-long", 2),
    (0x9d, "mul-long", 2),
    (0x9e, "div-long", 2),
    (0x9f, "rem-long", 2),
    (0xa0, "and-long", 2),
    (0xa1, "or-long", 2),
    (0xa2, "xor-long", 2),
    (0xa3, "shl-long", 2),
    (0xa4, "shr-long", 2),
    (0xa5, "ushr-long", 2),
    (0xa6, "add-float", 2),
    (0xa7, "sub-float", 2),
    (0xa8, "mul-float", 2),
    (0xa9, "div-float", 2),
    (0xaa, "rem-float", 2),
    (0xab, "add-double", 2),
    (0xac, "sub-double", 2),
    (0xad, "mul-double", 2),
    (0xae, "div-double", 2),
    (0xaf, "rem-double", 2),
    (0xb0, "add-int/2addr", 1),
    (0xb1, "sub-int/2addr", 1),
    (0xb2, "mul-int/2addr", 1),
    (0xb3, "div-int/2addr", 1),
    (0xb4, "rem-int/2addr", 1),
    (0xb5, "and-int/2addr", 1),
    (0xb6, "or-int/2addr", 1),
    (0xb7, "xor-int/2addr", 1),
    (0xb8, "shl-int/2addr", 1),
    (0xb9, "shr-int/2addr", 1),
    (0xba, "ushr-int/2addr", 1),
    (0xbb, "add-long/2addr", 1),
    (0xbc, "sub-long/2addr", 1),
    (0xbd, "mul-long/2addr", 1),
    (0xbe, "div-long/2addr", 1),
    (0xbf, "rem-long/2addr", 1),
    (0xc0, "and-long/2addr", 1),
    (0xc1, "or-long/2addr", 1),
    (0xc2, "xor-long/2addr", 1),
    (0xc3, "shl-long/2addr", 1),
    (0xc4, "shr-long/2addr", 1),
    (0xc5, "ushr-long/2addr", 1),
    (0xc6, "add-float/2addr", 1),
    (0xc7, "sub-float/2addr", 1),
    (0xc8, "mul-float/2addr", 1),
    (0xc9, "div-float/2addr", 1),
    (0xca, "rem-float/2addr", 1),
    (0xcb, "add-double/2addr", 1),
    (0xcc, "sub-double/2addr", 1),
    (0xcd, "mul-double/2addr", 1),
    (0xce, "div-double/2addr", 1),
    (0xcf, "rem-double/2addr", 1),
    (0xd0, "add-int/lit16", 2),
    (0xd1, "rsub-int", 2),
    (0xd2, "mul-int/lit16", 2),
    (0xd3, "div-int/lit16", 2),
    (0xd4, "rem-int/lit16", 2),
    (0xd5, "and-int/lit16", 2),
    (0xd6, "or-int/lit16", 2),
    (0xd7, "xor-int/lit16", 2),
    (0xd8, "add-int/lit8", 2),
    (0xd9, "rsub-int/lit8", 2),
    (0xda, "mul-int/lit8", 2),
    (0xdb, "div-int/lit8", 2),
    (0xdc, "rem-int/lit8", 2),
    (0xdd, "and-int/lit8", 2),
    (0xde, "or-int/lit8", 2),
    (0xdf, "xor-int/lit8", 2),
    (0xe0, "shl-int/lit8", 2),
    (0xe1, "shr-int/lit8", 2),
    (0xe2, "ushr-int/lit8", 2),
    (0xfa, "invoke-polymorphic", 4),
    (0xfb, "invoke-polymorphic/range", 4),
    (0xfc, "invoke-custom", 3),
    (0xfd, "invoke-custom/range", 3),
    (0xfe, "const-method-handle", 2),
    (0xff, "const-method-type", 2),
];

struct Tables {
    by_code: [Option<(&'static str, u8)>; 256],
    by_mnemonic: HashMap<&'static str, u8>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut by_code = [None; 256];
        let mut by_mnemonic = HashMap::with_capacity(TABLE.len());
        for &(code, mnemonic, width) in TABLE {
            by_code[code as usize] = Some((mnemonic, width));
            by_mnemonic.insert(mnemonic, code);
        }
        Tables {
            by_code,
            by_mnemonic,
        }
    })
}

/// A supported Dalvik opcode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Opcode(u8);

impl Opcode {
    pub fn from_code(code: u8) -> Option<Self> {
        tables().by_code[code as usize].map(|_| Opcode(code))
    }

    pub fn from_mnemonic(mnemonic: &str) -> Option<Self> {
        tables().by_mnemonic.get(mnemonic).map(|&c| Opcode(c))
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn mnemonic(self) -> &'static str {
        tables().by_code[self.0 as usize].expect("validated opcode").0
    }

    /// Instruction width in 16-bit code units.
    pub fn width(self) -> u32 {
        tables().by_code[self.0 as usize].expect("validated opcode").1 as u32
    }

    pub fn is_invoke(self) -> bool {
        self.mnemonic().starts_with("invoke")
    }

    /// Value scaled to the unit interval.
    pub fn normalized(self) -> f64 {
        normalize(self.0)
    }

    /// All supported opcodes in ascending value order.
    pub fn all() -> impl Iterator<Item = Opcode> {
        TABLE.iter().map(|&(c, _, _)| Opcode(c))
    }
}

pub fn normalize(code: u8) -> f64 {
    code as f64 / 255.0
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

impl Serialize for Opcode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.mnemonic())
    }
}

impl<'de> Deserialize<'de> for Opcode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Opcode::from_mnemonic(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown opcode `{s}`")))
    }
}
