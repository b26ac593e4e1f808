//! In-memory model of a disassembled app: classes, methods, instructions and
//! manifest components.

mod load;
mod manifest;
mod model;
mod opcode;
mod smali;

pub use load::{load_app, load_metadata};
pub use manifest::{parse_manifest, AXML_MAGIC};
pub use model::{
    descriptor_to_java, java_to_descriptor, AppModel, ClassDef, Component, ComponentKind,
    Diagnostic, Instruction, IntentFilter, Label, Metadata, MethodDef, MethodId, MethodRef,
    Operand,
};
pub use opcode::{normalize, Opcode};
pub use smali::{parse_smali_class, print_class};
