//! Plain-text knowledge tables: component lifecycle methods and callback
//! methods of framework listeners.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ir::{ComponentKind, MethodDef};
use crate::miner::non_comment_lines;

/// Method name, optionally narrowed by a descriptor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MethodPattern {
    pub name: String,
    pub descriptor: Option<String>,
}

impl MethodPattern {
    pub fn parse(text: &str) -> MethodPattern {
        let sub = text.split_once("->").map_or(text, |(_, s)| s).trim();
        match sub.find('(') {
            Some(p) => MethodPattern {
                name: sub[..p].to_string(),
                descriptor: Some(sub[p..].to_string()),
            },
            None => MethodPattern {
                name: sub.to_string(),
                descriptor: None,
            },
        }
    }

    pub fn matches(&self, m: &MethodDef) -> bool {
        m.name == self.name && self.descriptor.as_ref().is_none_or(|d| *d == m.descriptor)
    }
}

/// `category method` per line, e.g. `activity onCreate` or
/// `activity onCreate(Landroid/os/Bundle;)V`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LifecycleTable {
    pub methods: BTreeMap<ComponentKind, Vec<MethodPattern>>,
}

impl LifecycleTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut methods: BTreeMap<ComponentKind, Vec<MethodPattern>> = BTreeMap::new();
        for line in non_comment_lines(text) {
            let (kind, pat) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Format(format!("bad lifecycle line `{line}`")))?;
            let kind: ComponentKind = kind.parse().map_err(Error::Format)?;
            methods
                .entry(kind)
                .or_default()
                .push(MethodPattern::parse(pat.trim()));
        }
        Ok(LifecycleTable { methods })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn for_kind(&self, kind: ComponentKind) -> &[MethodPattern] {
        self.methods.get(&kind).map_or(&[], Vec::as_slice)
    }
}

impl Default for LifecycleTable {
    fn default() -> Self {
        Self::parse(include_str!("../../data/lifecycle.txt")).expect("bundled lifecycle table")
    }
}

/// Callback methods invoked by the framework on registered listeners. Lines
/// may be a full signature, a sub-signature or a bare method name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallbackList {
    pub patterns: BTreeSet<MethodPattern>,
}

impl CallbackList {
    pub fn parse(text: &str) -> Self {
        CallbackList {
            patterns: non_comment_lines(text).map(MethodPattern::parse).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?))
    }

    pub fn is_callback(&self, m: &MethodDef) -> bool {
        self.patterns.iter().any(|p| p.matches(m))
    }
}

impl Default for CallbackList {
    fn default() -> Self {
        Self::parse(include_str!("../../data/callbacks.txt"))
    }
}
