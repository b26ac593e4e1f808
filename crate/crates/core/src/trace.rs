//! Call traces from entry points to critical-API call sites, their opcode
//! sequences, the per-app sampling bound and the backward row split.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::callgraph::CallGraph;
use crate::error::{Error, Result};
use crate::ir::{normalize, AppModel, Diagnostic, MethodId, MethodRef};
use crate::miner::CriticalApiSet;

pub const DEFAULT_MAX_DEPTH: usize = 64;
pub const DEFAULT_MAX_TRACES_PER_ENTRY: usize = 256;
pub const DEFAULT_SAMPLE_BOUND: usize = 8000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceCaps {
    pub max_depth: usize,
    pub max_traces_per_entry: usize,
}

impl Default for TraceCaps {
    fn default() -> Self {
        TraceCaps {
            max_depth: DEFAULT_MAX_DEPTH,
            max_traces_per_entry: DEFAULT_MAX_TRACES_PER_ENTRY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallTrace {
    /// `methods[0]` is the entry point; the last method holds the critical call site.
    pub methods: Vec<MethodId>,
    /// Offset of the invoke in `methods[i]` that leads to `methods[i + 1]`.
    pub call_offsets: Vec<u32>,
    /// Offset of the critical invoke in the last method.
    pub site_offset: u32,
    pub critical_api: String,
    /// Raw opcode codes; filled by [`extract_opcodes`].
    pub opcodes: Vec<u8>,
}

impl CallTrace {
    pub fn entry(&self) -> &str {
        &self.methods[0]
    }

    pub fn last_method(&self) -> &str {
        self.methods.last().expect("trace has at least one method")
    }
}

struct Dfs<'a> {
    cg: &'a CallGraph,
    critical: &'a CriticalApiSet,
    caps: TraceCaps,
    path: Vec<MethodId>,
    offsets: Vec<u32>,
    seen: BTreeSet<(Vec<MethodId>, u32)>,
    out: Vec<CallTrace>,
    truncated: bool,
}

impl Dfs<'_> {
    fn visit(&mut self, m: &str) {
        let sites = match self.cg.sites.get(m) {
            Some(s) => s,
            None => return,
        };
        for site in sites {
            if self.out.len() >= self.caps.max_traces_per_entry {
                self.truncated = true;
                return;
            }
            if self.critical.contains(&site.callee) {
                let key = (self.path.clone(), site.offset);
                if self.seen.insert(key) {
                    self.out.push(CallTrace {
                        methods: self.path.clone(),
                        call_offsets: self.offsets.clone(),
                        site_offset: site.offset,
                        critical_api: site.callee.clone(),
                        opcodes: Vec::new(),
                    });
                }
            }
            for t in &site.targets {
                if self.path.contains(t) {
                    continue;
                }
                if self.path.len() >= self.caps.max_depth {
                    self.truncated = true;
                    continue;
                }
                self.path.push(t.clone());
                self.offsets.push(site.offset);
                self.visit(t);
                self.path.pop();
                self.offsets.pop();
            }
        }
    }
}

/// Simple-path depth-first search from every entry point to every call site
/// of a critical API, following call sites in instruction order.
pub fn find_call_traces(
    cg: &CallGraph,
    critical: &CriticalApiSet,
    caps: TraceCaps,
) -> (Vec<CallTrace>, Vec<Diagnostic>) {
    let mut traces = Vec::new();
    let mut diagnostics = Vec::new();
    for entry in &cg.entry_points.entries {
        let mut dfs = Dfs {
            cg,
            critical,
            caps,
            path: vec![entry.clone()],
            offsets: Vec::new(),
            seen: BTreeSet::new(),
            out: Vec::new(),
            truncated: false,
        };
        dfs.visit(entry);
        if dfs.truncated {
            diagnostics.push(Diagnostic {
                source: entry.clone(),
                message: format!(
                    "trace search capped (max_depth {}, max_traces_per_entry {})",
                    caps.max_depth, caps.max_traces_per_entry
                ),
            });
        }
        traces.append(&mut dfs.out);
    }
    (traces, diagnostics)
}

/// Opcodes along the trace: each method contributes its instructions up to
/// and including the invoke that continues the trace; the last method stops
/// at the critical invoke. Off-trace callees are not inlined.
pub fn extract_opcodes(trace: &CallTrace, app: &AppModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (i, mid) in trace.methods.iter().enumerate() {
        let broken = |expected: &str| Error::BrokenTrace {
            method: mid.clone(),
            expected: expected.to_string(),
        };
        let (offset, expected) = match trace.methods.get(i + 1) {
            Some(next) => (trace.call_offsets.get(i).copied(), next.as_str()),
            None => (Some(trace.site_offset), trace.critical_api.as_str()),
        };
        let def = app.method(mid).ok_or_else(|| broken(expected))?;
        let idx = offset
            .and_then(|o| def.index_of_offset(o))
            .ok_or_else(|| broken(expected))?;
        let ins = &def.body[idx];
        let callee = ins.callee().ok_or_else(|| broken(expected))?;
        let want = MethodRef::parse(expected).ok_or_else(|| broken(expected))?;
        if callee.name != want.name || callee.descriptor != want.descriptor {
            return Err(broken(expected));
        }
        out.extend(def.body[..=idx].iter().map(|ins| ins.opcode.code()));
    }
    Ok(out)
}

pub fn normalized(codes: &[u8]) -> Vec<f64> {
    codes.iter().map(|&c| normalize(c)).collect()
}

/// Per-trace bound used when the app's total exceeds `l_total`:
/// `⌊l_total / y⌋` rounded down to a multiple of `row_len`, at least `row_len`.
pub fn sample_bound(l_total: usize, y: usize, row_len: usize) -> usize {
    let per = l_total / y.max(1);
    (per / row_len * row_len).max(row_len)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub applied: bool,
    pub bound: Option<usize>,
    pub total_before: usize,
    pub total_after: usize,
}

/// Keeps the last `B` opcodes of every trace once the app total exceeds `l_total`.
pub fn sample_opcodes(traces: &mut [CallTrace], l_total: usize, row_len: usize) -> SamplingReport {
    let total_before: usize = traces.iter().map(|t| t.opcodes.len()).sum();
    if total_before <= l_total {
        return SamplingReport {
            applied: false,
            bound: None,
            total_before,
            total_after: total_before,
        };
    }
    let bound = sample_bound(l_total, traces.len(), row_len);
    for t in traces.iter_mut() {
        if t.opcodes.len() > bound {
            t.opcodes.drain(..t.opcodes.len() - bound);
        }
    }
    SamplingReport {
        applied: true,
        bound: Some(bound),
        total_before,
        total_after: traces.iter().map(|t| t.opcodes.len()).sum(),
    }
}

/// Backward split into rows of `row_len`; the leading remainder is dropped.
pub fn split_sequence<T: Copy>(seq: &[T], row_len: usize) -> Vec<Vec<T>> {
    assert!(row_len >= 1, "row length must be positive");
    let rem = seq.len() % row_len;
    seq[rem..].chunks(row_len).map(<[T]>::to_vec).collect()
}

/// Like [`split_sequence`], but a non-empty sequence shorter than one row is
/// kept as a single left-zero-padded row.
pub fn split_sequence_padded(seq: &[u8], row_len: usize) -> Vec<Vec<u8>> {
    if !seq.is_empty() && seq.len() < row_len {
        let mut row = vec![0; row_len - seq.len()];
        row.extend_from_slice(seq);
        return vec![row];
    }
    split_sequence(seq, row_len)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceMatrix {
    pub row_len: usize,
    pub rows: Vec<Vec<u8>>,
}

impl SequenceMatrix {
    pub fn empty(row_len: usize) -> Self {
        SequenceMatrix {
            row_len,
            rows: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{}\n", self.rows.len(), self.row_len);
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty matrix file".into()))?;
        let (n, row_len) = header
            .split_once(',')
            .and_then(|(n, l)| Some((n.trim().parse::<usize>().ok()?, l.trim().parse::<usize>().ok()?)))
            .ok_or_else(|| Error::Format(format!("bad matrix header `{header}`")))?;
        let mut rows = Vec::with_capacity(n);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<u8>())
                .collect::<std::result::Result<Vec<u8>, _>>()
                .map_err(|e| Error::Format(format!("bad matrix row: {e}")))?;
            if row.len() != row_len {
                return Err(Error::RowLengthMismatch {
                    expected: row_len,
                    found: row.len(),
                });
            }
            rows.push(row);
        }
        if rows.len() != n {
            return Err(Error::Format(format!("header says {n} rows, found {}", rows.len())));
        }
        Ok(SequenceMatrix { row_len, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Concatenates every trace's rows in trace order.
pub fn build_matrix(traces: &[CallTrace], row_len: usize, pad_short: bool) -> Result<SequenceMatrix> {
    let rows: Vec<Vec<u8>> = traces
        .iter()
        .flat_map(|t| {
            if pad_short {
                split_sequence_padded(&t.opcodes, row_len)
            } else {
                split_sequence(&t.opcodes, row_len)
            }
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyMatrix { row_len });
    }
    Ok(SequenceMatrix { row_len, rows })
}

/// Tab-separated trace dump: `entry<TAB>critical_api<TAB>space-separated codes`.
/// Kept so that the matrix can be rebuilt for any row length.
pub fn traces_to_tsv(traces: &[CallTrace]) -> String {
    let mut out = String::new();
    for t in traces {
        let codes: Vec<String> = t.opcodes.iter().map(u8::to_string).collect();
        let _ = writeln!(out, "{}\t{}\t{}", t.entry(), t.critical_api, codes.join(" "));
    }
    out
}

/// Inverse of [`traces_to_tsv`]; only entry, critical API and opcodes survive.
pub fn traces_from_tsv(text: &str) -> Result<Vec<CallTrace>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|line| {
            let mut parts = line.splitn(3, '\t');
            let (Some(entry), Some(api), Some(codes)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Format(format!("bad trace line `{line}`")));
            };
            let opcodes = codes
                .split_whitespace()
                .map(str::parse::<u8>)
                .collect::<std::result::Result<Vec<u8>, _>>()
                .map_err(|e| Error::Format(format!("bad trace opcode: {e}")))?;
            Ok(CallTrace {
                methods: vec![entry.to_string()],
                call_offsets: Vec::new(),
                site_offset: 0,
                critical_api: api.to_string(),
                opcodes,
            })
        })
        .collect()
}
