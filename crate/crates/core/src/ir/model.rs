use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::opcode::Opcode;

/// Canonical method identifier, `Lpkg/Cls;->name(args)ret`.
pub type MethodId = String;

/// A parsed method reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodRef {
    pub class: String,
    pub name: String,
    pub descriptor: String,
}

impl MethodRef {
    pub fn parse(sig: &str) -> Option<MethodRef> {
        let (class, rest) = sig.split_once("->")?;
        let paren = rest.find('(')?;
        let (name, descriptor) = rest.split_at(paren);
        if class.is_empty() || name.is_empty() || !descriptor.contains(')') {
            return None;
        }
        Some(MethodRef {
            class: class.to_string(),
            name: name.to_string(),
            descriptor: descriptor.to_string(),
        })
    }

    /// `name(args)ret`, the part that overriding methods share.
    pub fn sub_signature(&self) -> String {
        format!("{}{}", self.name, self.descriptor)
    }
}

impl fmt::Display for MethodRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}{}", self.class, self.name, self.descriptor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Operand {
    Register(String),
    RegisterList(Vec<String>),
    RegisterRange(String, String),
    Literal(String),
    /// String constant, kept in its escaped source form.
    Str(String),
    Type(String),
    Field(String),
    Method(String),
    Label(String),
}

impl Operand {
    pub fn registers(&self) -> Vec<&str> {
        match self {
            Operand::Register(r) => vec![r.as_str()],
            Operand::RegisterList(rs) => rs.iter().map(String::as_str).collect(),
            Operand::RegisterRange(a, b) => vec![a.as_str(), b.as_str()],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Register(r) => f.write_str(r),
            Operand::RegisterList(rs) => write!(f, "{{{}}}", rs.join(", ")),
            Operand::RegisterRange(a, b) => write!(f, "{{{a} .. {b}}}"),
            Operand::Str(s) => write!(f, "\"{s}\""),
            Operand::Label(l) => write!(f, ":{l}"),
            Operand::Literal(s) | Operand::Type(s) | Operand::Field(s) | Operand::Method(s) => {
                f.write_str(s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    /// Offset in 16-bit code units from the start of the method body.
    pub offset: u32,
    pub opcode: Opcode,
    #[serde(default)]
    pub operands: Vec<Operand>,
    /// Full callee signature; present exactly for invoke instructions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invoked_method: Option<String>,
}

impl Instruction {
    pub fn callee(&self) -> Option<MethodRef> {
        self.invoked_method.as_deref().and_then(MethodRef::parse)
    }

    /// First register operand (the destination for const/new-instance style ops).
    pub fn first_register(&self) -> Option<&str> {
        self.operands.iter().find_map(|op| match op {
            Operand::Register(r) => Some(r.as_str()),
            _ => None,
        })
    }

    /// Registers passed to an invoke, in order.
    pub fn invoke_args(&self) -> Vec<&str> {
        match self.operands.first() {
            Some(op @ (Operand::RegisterList(_) | Operand::RegisterRange(..))) => op.registers(),
            _ => Vec::new(),
        }
    }

    pub fn type_operand(&self) -> Option<&str> {
        self.operands.iter().find_map(|op| match op {
            Operand::Type(t) => Some(t.as_str()),
            _ => None,
        })
    }

    pub fn string_operand(&self) -> Option<&str> {
        self.operands.iter().find_map(|op| match op {
            Operand::Str(s) => Some(s.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodDef {
    pub owner: String,
    pub name: String,
    pub descriptor: String,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub body: Vec<Instruction>,
    #[serde(default = "default_true")]
    pub is_user_defined: bool,
}

fn default_true() -> bool {
    true
}

impl MethodDef {
    pub fn id(&self) -> MethodId {
        format!("{}->{}{}", self.owner, self.name, self.descriptor)
    }

    pub fn sub_signature(&self) -> String {
        format!("{}{}", self.name, self.descriptor)
    }

    pub fn is_static(&self) -> bool {
        self.flags.iter().any(|f| f == "static")
    }

    pub fn is_constructor(&self) -> bool {
        self.name == "<init>" || self.name == "<clinit>"
    }

    pub fn index_of_offset(&self, offset: u32) -> Option<usize> {
        self.body.binary_search_by_key(&offset, |i| i.offset).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub name: String,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub superclass: Option<String>,
    #[serde(default)]
    pub interfaces: Vec<String>,
    #[serde(default)]
    pub methods: Vec<MethodDef>,
}

impl ClassDef {
    pub fn method(&self, name: &str, descriptor: &str) -> Option<&MethodDef> {
        self.methods
            .iter()
            .find(|m| m.name == name && m.descriptor == descriptor)
    }

    pub fn is_interface(&self) -> bool {
        self.flags.iter().any(|f| f == "interface")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Activity,
    Service,
    Receiver,
    Provider,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Activity => "activity",
            ComponentKind::Service => "service",
            ComponentKind::Receiver => "receiver",
            ComponentKind::Provider => "provider",
        }
    }
}

impl FromStr for ComponentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "activity" => Ok(ComponentKind::Activity),
            "service" => Ok(ComponentKind::Service),
            "receiver" => Ok(ComponentKind::Receiver),
            "provider" => Ok(ComponentKind::Provider),
            other => Err(format!("unknown component category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentFilter {
    #[serde(default)]
    pub actions: Vec<String>,
    #[serde(default)]
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    /// Class descriptor, e.g. `Lcom/example/MainActivity;`.
    pub path_name: String,
    pub category: ComponentKind,
    #[serde(default)]
    pub intent_filters: Vec<IntentFilter>,
    #[serde(default)]
    pub exported: bool,
}

impl Component {
    pub fn handles_action(&self, action: &str) -> bool {
        self.intent_filters
            .iter()
            .any(|f| f.actions.iter().any(|a| a == action))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    /// Class index: 0 = benign, 1 = malicious.
    pub fn index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Malicious => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Benign
        } else {
            Label::Malicious
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub source: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppModel {
    pub app_id: String,
    pub classes: BTreeMap<String, ClassDef>,
    #[serde(default)]
    pub components: Vec<Component>,
    #[serde(default)]
    pub metadata: Metadata,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

impl AppModel {
    pub fn is_user_class(&self, class: &str) -> bool {
        self.classes.contains_key(class)
    }

    pub fn method(&self, id: &str) -> Option<&MethodDef> {
        let r = MethodRef::parse(id)?;
        self.classes.get(&r.class)?.method(&r.name, &r.descriptor)
    }

    /// Resolves `name+descriptor` starting at `class` and walking up through
    /// user-defined superclasses.
    pub fn resolve_method(&self, class: &str, name: &str, descriptor: &str) -> Option<&MethodDef> {
        let mut current = Some(class);
        let mut hops = 0;
        while let Some(c) = current {
            let def = self.classes.get(c)?;
            if let Some(m) = def.method(name, descriptor) {
                return Some(m);
            }
            current = def.superclass.as_deref();
            hops += 1;
            if hops > self.classes.len() {
                return None;
            }
        }
        None
    }

    /// Like [`resolve_method`](Self::resolve_method) but matching on name only.
    pub fn resolve_by_name(&self, class: &str, name: &str) -> Option<&MethodDef> {
        let mut current = Some(class);
        let mut hops = 0;
        while let Some(c) = current {
            let def = self.classes.get(c)?;
            if let Some(m) = def.methods.iter().find(|m| m.name == name) {
                return Some(m);
            }
            current = def.superclass.as_deref();
            hops += 1;
            if hops > self.classes.len() {
                return None;
            }
        }
        None
    }

    /// User-defined target of a statically named call, if any.
    pub fn resolve_ref(&self, r: &MethodRef) -> Option<&MethodDef> {
        self.resolve_method(&r.class, &r.name, &r.descriptor)
    }

    /// All methods in (class, declaration) order.
    pub fn methods(&self) -> impl Iterator<Item = &MethodDef> {
        self.classes.values().flat_map(|c| c.methods.iter())
    }

    pub fn component(&self, class: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.path_name == class)
    }

    pub fn parse_json(text: &str) -> crate::Result<AppModel> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("app model serializes")
    }
}

/// `com.example.Main` → `Lcom/example/Main;`
pub fn java_to_descriptor(name: &str) -> String {
    format!("L{};", name.replace('.', "/"))
}

/// `Lcom/example/Main;` → `com.example.Main`
pub fn descriptor_to_java(desc: &str) -> String {
    desc.trim_start_matches('L')
        .trim_end_matches(';')
        .replace('/', ".")
}
