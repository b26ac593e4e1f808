//! Intent target resolution.
//!
//! Explicit targets come from a backward scan of the sending chunk for a
//! `const-class` or `const-string` naming a manifest component. Implicit
//! targets match `const-string` values against intent-filter actions
//! (actions only; categories and data are ignored).

use std::collections::BTreeSet;

use crate::ir::{
    java_to_descriptor, AppModel, Component, ComponentKind, Instruction, MethodDef, MethodId,
};
use crate::miner::non_comment_lines;

pub const DEFAULT_INTENT_SENDERS: &[&str] = &[
    "startActivity",
    "startActivityForResult",
    "startService",
    "bindService",
    "sendBroadcast",
    "sendOrderedBroadcast",
];

/// Senders whose target may return a result to the sending component.
pub const RESULT_SENDERS: &[&str] = &["startActivityForResult"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IccResolver {
    pub senders: BTreeSet<String>,
}

impl Default for IccResolver {
    fn default() -> Self {
        IccResolver {
            senders: DEFAULT_INTENT_SENDERS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IccTargets {
    /// Component class descriptors, manifest order.
    pub components: Vec<String>,
    pub explicit: bool,
}

impl IccResolver {
    pub fn parse(text: &str) -> Self {
        IccResolver {
            senders: non_comment_lines(text).map(str::to_string).collect(),
        }
    }

    /// Invoke of a configured sender name that does not resolve to app code.
    pub fn is_sender(&self, app: &AppModel, ins: &Instruction) -> bool {
        match ins.callee() {
            Some(r) => self.senders.contains(&r.name) && app.resolve_ref(&r).is_none(),
            None => false,
        }
    }

    pub fn is_result_sender(&self, app: &AppModel, ins: &Instruction) -> bool {
        self.is_sender(app, ins)
            && ins
                .callee()
                .is_some_and(|r| RESULT_SENDERS.contains(&r.name.as_str()))
    }

    /// Boundary of a basic chunk: a user-defined call or an intent send.
    pub fn is_chunk_boundary(&self, app: &AppModel, ins: &Instruction) -> bool {
        ins.callee().is_some_and(|r| app.resolve_ref(&r).is_some()) || self.is_sender(app, ins)
    }

    /// Resolves the intent sent by `method.body[index]`.
    pub fn resolve(&self, app: &AppModel, method: &MethodDef, index: usize) -> IccTargets {
        let mut explicit: Vec<String> = Vec::new();
        let mut actions: Vec<String> = Vec::new();
        for ins in method.body[..index].iter().rev() {
            if self.is_chunk_boundary(app, ins) {
                break;
            }
            match ins.opcode.mnemonic() {
                "const-class" => {
                    if let Some(t) = ins.type_operand() {
                        if app.component(t).is_some() && !explicit.iter().any(|e| e == t) {
                            explicit.push(t.to_string());
                        }
                    }
                }
                "const-string" | "const-string/jumbo" => {
                    if let Some(s) = ins.string_operand() {
                        let as_class = java_to_descriptor(s);
                        if app.component(&as_class).is_some() {
                            if !explicit.contains(&as_class) {
                                explicit.push(as_class);
                            }
                        } else if !actions.iter().any(|a| a == s) {
                            actions.push(s.to_string());
                        }
                    }
                }
                _ => {}
            }
        }
        if !explicit.is_empty() {
            explicit.reverse();
            return IccTargets {
                components: explicit,
                explicit: true,
            };
        }
        let components = app
            .components
            .iter()
            .filter(|c| actions.iter().any(|a| c.handles_action(a)))
            .map(|c| c.path_name.clone())
            .fold(Vec::new(), |mut acc, c| {
                if !acc.contains(&c) {
                    acc.push(c);
                }
                acc
            });
        IccTargets {
            components,
            explicit: false,
        }
    }
}

/// The method receiving an intent delivered to `component`: `onReceive` for
/// receivers, `onCreate` otherwise.
pub fn receiver_method(app: &AppModel, component: &Component) -> Option<MethodId> {
    let name = match component.category {
        ComponentKind::Receiver => "onReceive",
        _ => "onCreate",
    };
    app.resolve_by_name(&component.path_name, name)
        .map(MethodDef::id)
}

/// `onActivityResult` of the class owning a result-returning send.
pub fn result_receiver(app: &AppModel, class: &str) -> Option<MethodId> {
    app.resolve_by_name(class, "onActivityResult")
        .map(MethodDef::id)
}
