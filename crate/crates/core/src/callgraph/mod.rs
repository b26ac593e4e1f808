//! Call-graph generation for an app.
//!
//! Builds the class hierarchy, collects lifecycle entry points from the
//! manifest components, grows per-entry subgraphs by breadth-first search,
//! adds registered listener callbacks as new entries until a fixed point,
//! and finally bridges subgraphs with ICC edges.

mod hierarchy;
mod tables;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;

pub use hierarchy::{build_class_hierarchy, ClassHierarchy};
pub use tables::{CallbackList, LifecycleTable, MethodPattern};

use crate::flowgraph::icc::{receiver_method, IccResolver};
use crate::ir::{AppModel, Diagnostic, Instruction, MethodDef, MethodId};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EntryPointSet {
    pub entries: BTreeSet<MethodId>,
}

impl EntryPointSet {
    pub fn contains(&self, m: &str) -> bool {
        self.entries.contains(m)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One invoke instruction with its user-defined dispatch targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallSite {
    pub index: usize,
    pub offset: u32,
    pub callee: String,
    pub targets: Vec<MethodId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CallGraph {
    pub nodes: BTreeSet<MethodId>,
    /// caller → user-defined callees in instruction order (first occurrence)
    pub edges: BTreeMap<MethodId, Vec<MethodId>>,
    /// every invoke of every node, in instruction order
    pub sites: BTreeMap<MethodId, Vec<CallSite>>,
    pub icc_edges: BTreeSet<(MethodId, MethodId)>,
    pub entry_points: EntryPointSet,
    /// root → nodes reached from it (the per-entry subgraphs)
    pub subgraphs: BTreeMap<MethodId, BTreeSet<MethodId>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl CallGraph {
    pub fn callees(&self, m: &str) -> &[MethodId] {
        self.edges.get(m).map_or(&[], Vec::as_slice)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(Vec::len).sum()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.callees(from).iter().any(|c| c == to)
    }

    /// Nodes reachable from `root` over call edges (ICC edges excluded).
    pub fn reachable_from(&self, root: &str) -> BTreeSet<MethodId> {
        bfs(root, |m| self.callees(m).to_vec())
    }

    /// `caller<TAB>callee<TAB>{call|icc}` per edge.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (caller, callees) in &self.edges {
            for callee in callees {
                let _ = writeln!(out, "{caller}\t{callee}\tcall");
            }
        }
        for (s, r) in &self.icc_edges {
            let _ = writeln!(out, "{s}\t{r}\ticc");
        }
        out
    }
}

fn bfs(root: &str, mut next: impl FnMut(&str) -> Vec<MethodId>) -> BTreeSet<MethodId> {
    let mut seen = BTreeSet::from([root.to_string()]);
    let mut queue = VecDeque::from([root.to_string()]);
    while let Some(m) = queue.pop_front() {
        for c in next(&m) {
            if seen.insert(c.clone()) {
                queue.push_back(c);
            }
        }
    }
    seen
}

fn is_virtual(ins: &Instruction) -> bool {
    let m = ins.opcode.mnemonic();
    m.starts_with("invoke-virtual") || m.starts_with("invoke-interface")
}

fn is_concrete(m: &MethodDef) -> bool {
    !m.flags.iter().any(|f| f == "abstract")
}

/// User-defined targets of an invoke under class hierarchy analysis.
///
/// Static, direct and super calls resolve to the single definition found by
/// walking up from the referenced class. Virtual and interface calls target
/// the resolved definition for every user class in the receiver type's cone.
pub fn dispatch_targets(app: &AppModel, h: &ClassHierarchy, ins: &Instruction) -> Vec<MethodId> {
    let Some(callee) = ins.callee() else {
        return Vec::new();
    };
    let mnemonic = ins.opcode.mnemonic();
    if mnemonic.starts_with("invoke-polymorphic") || mnemonic.starts_with("invoke-custom") {
        return Vec::new();
    }
    let mut targets = BTreeSet::new();
    if let Some(m) = app.resolve_ref(&callee).filter(|m| is_concrete(m)) {
        targets.insert(m.id());
    }
    if is_virtual(ins) {
        for k in h.cone(&callee.class) {
            if let Some(m) = app
                .resolve_method(&k, &callee.name, &callee.descriptor)
                .filter(|m| is_concrete(m))
            {
                targets.insert(m.id());
            }
        }
    }
    targets.into_iter().collect()
}

pub fn call_sites(app: &AppModel, h: &ClassHierarchy, method: &MethodDef) -> Vec<CallSite> {
    method
        .body
        .iter()
        .enumerate()
        .filter_map(|(index, ins)| {
            ins.invoked_method.as_ref().map(|callee| CallSite {
                index,
                offset: ins.offset,
                callee: callee.clone(),
                targets: dispatch_targets(app, h, ins),
            })
        })
        .collect()
}

/// Lifecycle methods of every manifest component, resolved through
/// user-defined superclasses (most-derived definition wins).
pub fn collect_entry_points(
    app: &AppModel,
    h: &ClassHierarchy,
    lifecycle: &LifecycleTable,
) -> (EntryPointSet, Vec<Diagnostic>) {
    let mut entries = BTreeSet::new();
    let mut diagnostics = Vec::new();
    for comp in &app.components {
        if !app.is_user_class(&comp.path_name) {
            diagnostics.push(Diagnostic {
                source: "entry-points".into(),
                message: format!("missing component class {}", comp.path_name),
            });
            continue;
        }
        for pattern in lifecycle.for_kind(comp.category) {
            for class in h.superclass_chain(&comp.path_name) {
                let Some(def) = app.classes.get(&class) else {
                    break;
                };
                let found: Vec<_> = def
                    .methods
                    .iter()
                    .filter(|m| pattern.matches(m) && is_concrete(m))
                    .collect();
                if !found.is_empty() {
                    entries.extend(found.into_iter().map(MethodDef::id));
                    break;
                }
            }
        }
    }
    (EntryPointSet { entries }, diagnostics)
}

fn is_registration(name: &str) -> bool {
    (name.starts_with("set") && name.ends_with("Listener")) || name.starts_with("register")
}

/// Whether `ins` writes its first register operand.
fn defines_first_register(ins: &Instruction) -> bool {
    const NON_DEFINING: &[&str] = &[
        "iput", "sput", "aput", "if-", "return", "throw", "monitor-", "fill-array-data",
        "packed-switch", "sparse-switch", "goto", "nop", "invoke", "filled-new-array",
    ];
    let m = ins.opcode.mnemonic();
    !NON_DEFINING.iter().any(|p| m.starts_with(p))
}

fn field_type(field: &str) -> Option<&str> {
    field.rsplit_once(':').map(|(_, t)| t)
}

/// Best-effort static type of `reg` just before `body[index]`, by scanning
/// back to its last definition.
fn register_type(method: &MethodDef, index: usize, reg: &str) -> Option<String> {
    let mut reg = reg.to_string();
    for i in (0..index).rev() {
        let ins = &method.body[i];
        if ins.first_register() != Some(reg.as_str()) || !defines_first_register(ins) {
            continue;
        }
        let m = ins.opcode.mnemonic();
        return match m {
            "new-instance" | "check-cast" => ins.type_operand().map(str::to_string),
            _ if m.starts_with("iget-object") || m.starts_with("sget-object") => {
                ins.operands.iter().find_map(|op| match op {
                    crate::ir::Operand::Field(f) => field_type(f).map(str::to_string),
                    _ => None,
                })
            }
            "move-result-object" => method.body[..i]
                .iter()
                .rev()
                .find_map(Instruction::callee)
                .map(|c| c.descriptor.rsplit_once(')').map(|x| x.1.to_string()).unwrap_or_default()),
            "move-object" | "move-object/from16" | "move-object/16" => {
                let regs: Vec<&str> = ins.operands.iter().flat_map(|o| o.registers()).collect();
                match regs.get(1) {
                    Some(src) => {
                        reg = src.to_string();
                        continue;
                    }
                    None => None,
                }
            }
            _ => None,
        };
    }
    (reg == "p0" && !method.is_static()).then(|| method.owner.clone())
}

/// User classes passed as arguments to listener-registration calls in `method`.
pub fn registered_listeners(app: &AppModel, method: &MethodDef) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (index, ins) in method.body.iter().enumerate() {
        let Some(callee) = ins.callee() else { continue };
        if !is_registration(&callee.name) {
            continue;
        }
        let args = ins.invoke_args();
        let skip = usize::from(!ins.opcode.mnemonic().starts_with("invoke-static"));
        for reg in args.into_iter().skip(skip) {
            if let Some(t) = register_type(method, index, reg) {
                if app.is_user_class(&t) {
                    out.insert(t);
                }
            }
        }
    }
    out
}

/// Callback methods of a listener class, including inherited definitions.
pub fn callback_methods(app: &AppModel, h: &ClassHierarchy, class: &str, callbacks: &CallbackList) -> BTreeSet<MethodId> {
    let mut out = BTreeSet::new();
    let mut seen_sub = BTreeSet::new();
    for c in h.superclass_chain(class) {
        let Some(def) = app.classes.get(&c) else { break };
        for m in &def.methods {
            if is_concrete(m) && callbacks.is_callback(m) && seen_sub.insert(m.sub_signature()) {
                out.insert(m.id());
            }
        }
    }
    out
}

/// Call-graph construction.
///
/// The fixed point grows the root set with (a) callbacks of listeners
/// registered anywhere in the reached subgraphs and (b) ICC receiver methods,
/// until neither adds anything. Entry points record (a) only; ICC receivers
/// are roots so that every ICC edge lands inside the graph.
pub fn generate_call_graph(
    app: &AppModel,
    h: &ClassHierarchy,
    initial: &EntryPointSet,
    callbacks: &CallbackList,
    icc: &IccResolver,
) -> CallGraph {
    let mut sites: BTreeMap<MethodId, Vec<CallSite>> = BTreeMap::new();
    let mut site_cache = |m: &str| -> Vec<MethodId> {
        if !sites.contains_key(m) {
            let s = app.method(m).map(|d| call_sites(app, h, d)).unwrap_or_default();
            sites.insert(m.to_string(), s);
        }
        ordered_callees(&sites[m])
    };

    let mut entries = initial.entries.clone();
    let mut roots: BTreeSet<MethodId> = entries.clone();
    let mut subgraphs: BTreeMap<MethodId, BTreeSet<MethodId>> = BTreeMap::new();
    let mut scanned: BTreeSet<MethodId> = BTreeSet::new();
    let mut diagnostics = Vec::new();
    let mut icc_edges = BTreeSet::new();
    loop {
        for root in &roots {
            if !subgraphs.contains_key(root) {
                let reach = bfs(root, &mut site_cache);
                subgraphs.insert(root.clone(), reach);
            }
        }
        let reached: BTreeSet<MethodId> = subgraphs.values().flatten().cloned().collect();
        let mut new_roots = BTreeSet::new();
        for m in reached.difference(&scanned.clone()) {
            scanned.insert(m.clone());
            let Some(def) = app.method(m) else { continue };
            for listener in registered_listeners(app, def) {
                for cb in callback_methods(app, h, &listener, callbacks) {
                    if entries.insert(cb.clone()) {
                        new_roots.insert(cb);
                    }
                }
            }
            for (index, ins) in def.body.iter().enumerate() {
                if !icc.is_sender(app, ins) {
                    continue;
                }
                let targets = icc.resolve(app, def, index);
                if targets.components.is_empty() {
                    diagnostics.push(Diagnostic {
                        source: m.clone(),
                        message: format!("unresolved ICC target at offset {}", ins.offset),
                    });
                }
                for comp in targets.components {
                    let Some(component) = app.component(&comp) else { continue };
                    match receiver_method(app, component) {
                        Some(recv) => {
                            icc_edges.insert((m.clone(), recv.clone()));
                            if !roots.contains(&recv) {
                                new_roots.insert(recv);
                            }
                        }
                        None => diagnostics.push(Diagnostic {
                            source: m.clone(),
                            message: format!("ICC target {comp} has no receiver method"),
                        }),
                    }
                }
            }
        }
        if new_roots.is_empty() {
            break;
        }
        roots.extend(new_roots);
    }

    let nodes: BTreeSet<MethodId> = subgraphs.values().flatten().cloned().collect();
    let sites: BTreeMap<MethodId, Vec<CallSite>> = nodes
        .iter()
        .map(|n| (n.clone(), sites.get(n).cloned().unwrap_or_default()))
        .collect();
    let edges = sites
        .iter()
        .map(|(n, s)| (n.clone(), ordered_callees(s)))
        .filter(|(_, c)| !c.is_empty())
        .collect();
    CallGraph {
        nodes,
        edges,
        sites,
        icc_edges,
        entry_points: EntryPointSet { entries },
        subgraphs,
        diagnostics,
    }
}

fn ordered_callees(sites: &[CallSite]) -> Vec<MethodId> {
    let mut seen = BTreeSet::new();
    sites
        .iter()
        .flat_map(|s| s.targets.iter())
        .filter(|t| seen.insert((*t).clone()))
        .cloned()
        .collect()
}

/// Convenience wrapper running the whole construction with the given tables.
pub fn build_call_graph(
    app: &AppModel,
    lifecycle: &LifecycleTable,
    callbacks: &CallbackList,
    icc: &IccResolver,
) -> crate::Result<(ClassHierarchy, CallGraph)> {
    let h = build_class_hierarchy(app)?;
    let (eps, mut diags) = collect_entry_points(app, &h, lifecycle);
    let mut cg = generate_call_graph(app, &h, &eps, callbacks, icc);
    diags.append(&mut cg.diagnostics);
    cg.diagnostics = diags;
    Ok((h, cg))
}
