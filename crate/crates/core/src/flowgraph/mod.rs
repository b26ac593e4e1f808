//! Abstract flow graph over code chunks.
//!
//! Methods are cut into chunks after every user-defined call, intent send and
//! critical-API call. Typed edges connect chunks: critical (`ct`),
//! intent-sending (`is`), neighbor (`nb`), ICC (`ic`) and implicit neighbor
//! (`in`), each mirrored by a backward edge of the matching `b*` type.

pub mod icc;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::callgraph::CallGraph;
use crate::error::{Error, Result};
use crate::ir::{normalize, AppModel, Diagnostic, MethodId};
use crate::miner::CriticalApiSet;
use crate::trace::CallTrace;
use icc::{receiver_method, result_receiver, IccResolver};

pub const EXIT: &str = "exit";
pub const DEFAULT_LABEL_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeType {
    Ct,
    Is,
    Nb,
    Ic,
    In,
    BCt,
    BIs,
    BNb,
    BIc,
    BIn,
}

impl EdgeType {
    /// Canonical one-hot order.
    pub const ALL: [EdgeType; 10] = [
        EdgeType::Ct,
        EdgeType::Is,
        EdgeType::Nb,
        EdgeType::Ic,
        EdgeType::In,
        EdgeType::BCt,
        EdgeType::BIs,
        EdgeType::BNb,
        EdgeType::BIc,
        EdgeType::BIn,
    ];
    pub const COUNT: usize = 10;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> &'static str {
        ["ct", "is", "nb", "ic", "in", "bct", "bis", "bnb", "bic", "bin"][self.index()]
    }

    pub fn is_backward(self) -> bool {
        self.index() >= 5
    }

    pub fn backward(self) -> EdgeType {
        Self::ALL[(self.index() + 5) % 10]
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EdgeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.tag() == s)
            .ok_or_else(|| Error::Format(format!("unknown edge type `{s}`")))
    }
}

/// Chunk as produced by [`chunk_methods`], still tied to its method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub id: usize,
    pub method: MethodId,
    pub offset: u32,
    /// Instruction index range `[start, end)` in the method body.
    pub start: usize,
    pub end: usize,
    pub opcodes: Vec<u8>,
    pub invoke_mtd: String,
    /// Offset of the terminating invoke, if the chunk ends at one.
    pub invoke_offset: Option<u32>,
}

/// Persisted node: `⟨id, offset, opcode_seq, invoke_mtd⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowNode {
    pub id: usize,
    pub offset: u32,
    pub opcodes: Vec<u8>,
    pub invoke_mtd: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowEdge {
    pub source: usize,
    pub target: usize,
    pub kind: EdgeType,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractFlowGraph {
    pub nodes: Vec<FlowNode>,
    pub edges: Vec<FlowEdge>,
}

/// First `len` normalized opcodes, zero-padded.
pub fn node_label(node: &FlowNode, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = node.opcodes.iter().take(len).map(|&c| normalize(c)).collect();
    v.resize(len, 0.0);
    v
}

/// Splits every method into chunks; ids follow (method id, offset) order.
pub fn chunk_methods(app: &AppModel, icc: &IccResolver, critical: &CriticalApiSet) -> Vec<Chunk> {
    let mut methods: Vec<_> = app.methods().collect();
    methods.sort_by_key(|m| m.id());
    let mut chunks = Vec::new();
    for m in methods {
        let mid = m.id();
        let mut start = 0;
        for (i, ins) in m.body.iter().enumerate() {
            let ends = icc.is_chunk_boundary(app, ins)
                || ins.invoked_method.as_ref().is_some_and(|c| critical.contains(c));
            if ends {
                chunks.push(Chunk {
                    id: chunks.len(),
                    method: mid.clone(),
                    offset: m.body[start].offset,
                    start,
                    end: i + 1,
                    opcodes: m.body[start..=i].iter().map(|x| x.opcode.code()).collect(),
                    invoke_mtd: ins.invoked_method.clone().unwrap_or_default(),
                    invoke_offset: Some(ins.offset),
                });
                start = i + 1;
            }
        }
        if start < m.body.len() || m.body.is_empty() {
            chunks.push(Chunk {
                id: chunks.len(),
                method: mid.clone(),
                offset: m.body.get(start).map_or(0, |x| x.offset),
                start,
                end: m.body.len(),
                opcodes: m.body[start..].iter().map(|x| x.opcode.code()).collect(),
                invoke_mtd: EXIT.to_string(),
                invoke_offset: None,
            });
        }
    }
    chunks
}

struct ChunkIndex<'a> {
    chunks: &'a [Chunk],
    by_method: BTreeMap<&'a str, Vec<usize>>,
}

impl<'a> ChunkIndex<'a> {
    fn new(chunks: &'a [Chunk]) -> Self {
        let mut by_method: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for c in chunks {
            by_method.entry(c.method.as_str()).or_default().push(c.id);
        }
        ChunkIndex { chunks, by_method }
    }

    fn of(&self, method: &str) -> &[usize] {
        self.by_method.get(method).map_or(&[], Vec::as_slice)
    }

    fn first(&self, method: &str) -> Option<usize> {
        self.of(method).first().copied()
    }

    fn ending_at(&self, method: &str, offset: u32) -> Option<usize> {
        self.of(method)
            .iter()
            .copied()
            .find(|&id| self.chunks[id].invoke_offset == Some(offset))
    }
}

/// Forward and backward typed edges between chunks, sorted by
/// (type, source, target) without duplicates.
pub fn build_edges(
    app: &AppModel,
    chunks: &[Chunk],
    cg: &CallGraph,
    traces: &[CallTrace],
    icc: &IccResolver,
) -> (Vec<FlowEdge>, Vec<Diagnostic>) {
    let idx = ChunkIndex::new(chunks);
    let mut forward: BTreeSet<FlowEdge> = BTreeSet::new();
    let mut diagnostics = Vec::new();
    let mut add = |source: usize, target: usize, kind: EdgeType| {
        forward.insert(FlowEdge { source, target, kind });
    };

    for t in traces {
        if let (Some(s), Some(d)) = (idx.first(t.entry()), idx.ending_at(t.last_method(), t.site_offset)) {
            add(s, d, EdgeType::Ct);
        }
    }

    let is_sender_chunk = |c: &Chunk| -> Option<usize> {
        let m = app.method(&c.method)?;
        let i = c.end.checked_sub(1)?;
        (c.invoke_offset.is_some() && icc.is_sender(app, &m.body[i])).then_some(i)
    };

    for entry in &cg.entry_points.entries {
        let Some(first) = idx.first(entry) else { continue };
        for m in cg.reachable_from(entry) {
            for &id in idx.of(&m) {
                if id != first && is_sender_chunk(&chunks[id]).is_some() {
                    add(first, id, EdgeType::Is);
                }
            }
        }
    }

    for c in chunks {
        let Some(i) = is_sender_chunk(c) else { continue };
        let method = app.method(&c.method).expect("chunk method exists");
        let targets = icc.resolve(app, method, i);
        if targets.components.is_empty() {
            diagnostics.push(Diagnostic {
                source: c.method.clone(),
                message: format!("unresolved ICC target at offset {}", method.body[i].offset),
            });
        }
        let result_recv = if icc.is_result_sender(app, &method.body[i]) {
            result_receiver(app, &method.owner).and_then(|r| idx.first(&r))
        } else {
            None
        };
        if let Some(r) = result_recv {
            add(c.id, r, EdgeType::In);
        }
        for comp in &targets.components {
            let component = app.component(comp).expect("resolved component exists");
            match receiver_method(app, component).and_then(|r| idx.first(&r)) {
                Some(r) => add(c.id, r, EdgeType::Ic),
                None => diagnostics.push(Diagnostic {
                    source: c.method.clone(),
                    message: format!("ICC target {comp} has no receiver method"),
                }),
            }
            // Results flow back from the target's setResult sites.
            if let Some(r) = result_recv {
                for d in chunks.iter().filter(|d| owner_of(&d.method) == comp.as_str()) {
                    let body = &app.method(&d.method).expect("chunk method exists").body[d.start..d.end];
                    if body
                        .iter()
                        .any(|x| x.callee().is_some_and(|r| r.name == "setResult"))
                    {
                        add(d.id, r, EdgeType::Ic);
                    }
                }
            }
        }
    }

    let touched: BTreeSet<usize> = forward.iter().flat_map(|e| [e.source, e.target]).collect();
    let active: BTreeSet<&str> = forward
        .iter()
        .filter(|e| e.kind != EdgeType::In)
        .flat_map(|e| [e.source, e.target])
        .map(|id| chunks[id].method.as_str())
        .collect();
    let mut neighbors = Vec::new();
    for m in active {
        for pair in idx.of(m).windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if chunks[a].invoke_offset.is_some() && (touched.contains(&a) || touched.contains(&b)) {
                neighbors.push(FlowEdge {
                    source: a,
                    target: b,
                    kind: EdgeType::Nb,
                });
            }
        }
    }
    forward.extend(neighbors);

    let mut edges: Vec<FlowEdge> = forward
        .iter()
        .flat_map(|e| {
            [
                *e,
                FlowEdge {
                    source: e.target,
                    target: e.source,
                    kind: e.kind.backward(),
                },
            ]
        })
        .collect();
    edges.sort_by_key(|e| (e.kind, e.source, e.target));
    edges.dedup();
    (edges, diagnostics)
}

fn owner_of(method: &str) -> &str {
    method.split_once("->").map_or(method, |(c, _)| c)
}

impl AbstractFlowGraph {
    /// Graph over the chunks touched by at least one edge; ids are kept.
    pub fn from_parts(chunks: &[Chunk], edges: Vec<FlowEdge>) -> Self {
        let used: BTreeSet<usize> = edges.iter().flat_map(|e| [e.source, e.target]).collect();
        let nodes = used
            .into_iter()
            .map(|id| {
                let c = &chunks[id];
                FlowNode {
                    id,
                    offset: c.offset,
                    opcodes: c.opcodes.clone(),
                    invoke_mtd: c.invoke_mtd.clone(),
                }
            })
            .collect();
        AbstractFlowGraph { nodes, edges }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn count(&self, kind: EdgeType) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    pub fn labels(&self, len: usize) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|n| node_label(n, len)).collect()
    }

    /// Position of each node id in `nodes`.
    pub fn positions(&self) -> BTreeMap<usize, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect()
    }

    pub fn nodes_csv(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let codes: Vec<String> = n.opcodes.iter().map(u8::to_string).collect();
            let _ = writeln!(out, "{},{},{},{}", n.id, n.offset, codes.join("|"), n.invoke_mtd);
        }
        out
    }

    pub fn edges_csv(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{},{},{}", e.source, e.target, e.kind);
        }
        out
    }

    pub fn from_csv(nodes: &str, edges: &str) -> Result<Self> {
        let bad = |what: &str, line: &str| Error::Format(format!("bad {what} line `{line}`"));
        let mut out = AbstractFlowGraph::default();
        for line in nodes.lines().filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.splitn(4, ',').collect();
            if f.len() != 4 {
                return Err(bad("node", line));
            }
            let opcodes = if f[2].is_empty() {
                Vec::new()
            } else {
                f[2].split('|')
                    .map(str::parse::<u8>)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("node", line))?
            };
            out.nodes.push(FlowNode {
                id: f[0].parse().map_err(|_| bad("node", line))?,
                offset: f[1].parse().map_err(|_| bad("node", line))?,
                opcodes,
                invoke_mtd: f[3].to_string(),
            });
        }
        let ids: BTreeSet<usize> = out.nodes.iter().map(|n| n.id).collect();
        for line in edges.lines().filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad("edge", line));
            }
            let e = FlowEdge {
                source: f[0].parse().map_err(|_| bad("edge", line))?,
                target: f[1].parse().map_err(|_| bad("edge", line))?,
                kind: f[2].parse()?,
            };
            if !ids.contains(&e.source) || !ids.contains(&e.target) {
                return Err(Error::Format(format!("edge `{line}` references a missing node")));
            }
            out.edges.push(e);
        }
        Ok(out)
    }

    pub fn save(&self, nodes_path: &Path, edges_path: &Path) -> Result<()> {
        fs::write(nodes_path, self.nodes_csv()).map_err(|e| Error::io(nodes_path, e))?;
        fs::write(edges_path, self.edges_csv()).map_err(|e| Error::io(edges_path, e))
    }

    pub fn load(nodes_path: &Path, edges_path: &Path) -> Result<Self> {
        let n = fs::read_to_string(nodes_path).map_err(|e| Error::io(nodes_path, e))?;
        let e = fs::read_to_string(edges_path).map_err(|e| Error::io(edges_path, e))?;
        Self::from_csv(&n, &e)
    }
}

/// Whether every forward edge has exactly one backward mirror and vice versa.
pub fn backward_bijection(edges: &[FlowEdge]) -> bool {
    let set: BTreeSet<FlowEdge> = edges.iter().copied().collect();
    set.len() == edges.len()
        && edges.iter().all(|e| {
            let mirror = FlowEdge {
                source: e.target,
                target: e.source,
                kind: e.kind.backward(),
            };
            set.contains(&mirror)
        })
        && edges.iter().filter(|e| e.kind.is_backward()).count() * 2 == edges.len()
}
