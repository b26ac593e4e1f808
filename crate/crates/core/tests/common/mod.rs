#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use droidflow::callgraph::{CallbackList, LifecycleTable};
use droidflow::flowgraph::icc::{receiver_method, IccResolver};
use droidflow::ir::{parse_smali_class, AppModel, Component, ComponentKind, IntentFilter, Instruction, MethodDef, MethodRef};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// One smali method: declaration (flags + name + descriptor) and body lines.
pub struct M {
    pub decl: String,
    pub body: Vec<String>,
}

pub fn m(decl: &str, body: &[&str]) -> M {
    M {
        decl: decl.into(),
        body: body.iter().map(|s| s.to_string()).collect(),
    }
}

pub struct C {
    pub name: String,
    pub flags: String,
    pub sup: String,
    pub implements: Vec<String>,
    pub methods: Vec<M>,
}

pub fn c(name: &str, sup: &str, implements: &[&str], methods: Vec<M>) -> C {
    C {
        name: name.into(),
        flags: "public".into(),
        sup: sup.into(),
        implements: implements.iter().map(|s| s.to_string()).collect(),
        methods,
    }
}

pub fn iface(name: &str, extends: &[&str], methods: Vec<M>) -> C {
    C {
        flags: "public interface abstract".into(),
        ..c(name, "Ljava/lang/Object;", extends, methods)
    }
}

pub fn smali(class: &C) -> String {
    let mut s = format!(".class {} {}\n.super {}\n", class.flags, class.name, class.sup);
    for i in &class.implements {
        s += &format!(".implements {i}\n");
    }
    for meth in &class.methods {
        s += &format!(".method {}\n", meth.decl);
        if !meth.decl.contains("abstract") {
            s += "    .registers 6\n";
            for l in &meth.body {
                s += &format!("    {l}\n");
            }
            s += "    return-void\n";
        }
        s += ".end method\n";
    }
    s
}

pub fn component(class: &str, kind: ComponentKind, actions: &[&str]) -> Component {
    Component {
        path_name: class.into(),
        category: kind,
        intent_filters: if actions.is_empty() {
            Vec::new()
        } else {
            vec![IntentFilter {
                actions: actions.iter().map(|s| s.to_string()).collect(),
                categories: Vec::new(),
            }]
        },
        exported: false,
    }
}

pub fn app(id: &str, classes: &[C], components: Vec<Component>) -> AppModel {
    let classes = classes
        .iter()
        .map(|k| {
            let def = parse_smali_class(&smali(k)).unwrap_or_else(|e| panic!("{id}: {e}\n{}", smali(k)));
            (def.name.clone(), def)
        })
        .collect();
    AppModel {
        app_id: id.into(),
        classes,
        components,
        metadata: Default::default(),
        diagnostics: Vec::new(),
    }
}

const OBJ: &str = "Ljava/lang/Object;";
const ACT: &str = "Landroid/app/Activity;";
const CLICK: &str = "Landroid/view/View$OnClickListener;";
const SET_CLICK: &str = "invoke-virtual {v0, v1}, Landroid/view/View;->setOnClickListener(Landroid/view/View$OnClickListener;)V";
const ON_CREATE: &str = "public onCreate(Landroid/os/Bundle;)V";

/// Hand-built call-graph fixtures, one behaviour each.
pub fn callgraph_fixtures() -> Vec<AppModel> {
    use ComponentKind::*;
    let a = "Lp/A;";
    vec![
        app(
            "chain",
            &[
                c(a, ACT, &[], vec![
                    m(ON_CREATE, &["invoke-static {}, Lp/A;->f()V"]),
                    m("public static f()V", &["invoke-static {}, Lp/A;->g()V"]),
                    m("public static g()V", &["invoke-static {}, Lp/B;->h()V"]),
                    m("public static dead()V", &["invoke-static {}, Lp/A;->g()V"]),
                ]),
                c("Lp/B;", OBJ, &[], vec![m("public static h()V", &["invoke-static {}, Landroid/util/Log;->x()V"])]),
            ],
            vec![component(a, Activity, &[])],
        ),
        app(
            "virtual_cone",
            &[
                c(a, ACT, &[], vec![m(ON_CREATE, &["new-instance v0, Lp/Base;", "invoke-virtual {v0}, Lp/Base;->run()V"])]),
                c("Lp/Base;", OBJ, &[], vec![m("public run()V", &[])]),
                c("Lp/S1;", "Lp/Base;", &[], vec![m("public run()V", &["invoke-static {}, Lp/S1;->only1()V"]), m("public static only1()V", &[])]),
                c("Lp/S2;", "Lp/Base;", &[], vec![m("public run()V", &[])]),
                c("Lp/S3;", "Lp/S1;", &[], vec![m("public other()V", &[])]),
            ],
            vec![component(a, Activity, &[])],
        ),
        app(
            "interface_dispatch",
            &[
                c(a, ACT, &[], vec![m(ON_CREATE, &["const/4 v0, 0x0", "invoke-interface {v0}, Lp/J;->act()V"])]),
                iface("Lp/I;", &[], vec![m("public abstract act()V", &[])]),
                iface("Lp/J;", &["Lp/I;"], vec![m("public abstract act()V", &[])]),
                c("Lp/Impl1;", OBJ, &["Lp/J;"], vec![m("public act()V", &[])]),
                c("Lp/Impl2;", OBJ, &["Lp/I;"], vec![m("public act()V", &[])]),
                c("Lp/Impl3;", "Lp/Impl1;", &[], vec![m("public act()V", &[])]),
            ],
            vec![component(a, Activity, &[])],
        ),
        app(
            "abstract_base",
            &[
                c(a, ACT, &[], vec![m(ON_CREATE, &["const/4 v0, 0x0", "invoke-virtual {v0}, Lp/Abs;->work()V"])]),
                C {
                    flags: "public abstract".into(),
                    ..c("Lp/Abs;", OBJ, &[], vec![m("public abstract work()V", &[])])
                },
                c("Lp/Conc;", "Lp/Abs;", &[], vec![m("public work()V", &[])]),
            ],
            vec![component(a, Activity, &[])],
        ),
        app(
            "listener",
            &[
                c(a, ACT, &[], vec![
                    m(ON_CREATE, &["invoke-static {}, Lp/A;->m2()V"]),
                    m("public static m2()V", &["const/4 v0, 0x0", "new-instance v1, Lp/L;", "invoke-direct {v1}, Lp/L;-><init>()V", SET_CLICK]),
                    m("public static m3()V", &[]),
                ]),
                c("Lp/L;", OBJ, &[CLICK], vec![
                    m("public constructor <init>()V", &[]),
                    m("public onClick(Landroid/view/View;)V", &["invoke-static {}, Lp/A;->m3()V"]),
                ]),
            ],
            vec![component(a, Activity, &[])],
        ),
        app(
            "nested_listener",
            &[
                c(a, ACT, &[], vec![m(ON_CREATE, &["const/4 v0, 0x0", "new-instance v1, Lp/L1;", SET_CLICK])]),
                c("Lp/L1;", OBJ, &[CLICK], vec![m(
                    "public onClick(Landroid/view/View;)V",
                    &[
                        "const/4 v0, 0x0",
                        "new-instance v1, Lp/L2;",
                        "invoke-virtual {v0, v1}, Landroid/view/View;->setOnLongClickListener(Landroid/view/View$OnLongClickListener;)V",
                    ],
                )]),
                c("Lp/L2;", OBJ, &["Landroid/view/View$OnLongClickListener;"], vec![m(
                    "public onLongClick(Landroid/view/View;)Z",
                    &["invoke-static {}, Lp/L2;->deep()V"],
                ), m("public static deep()V", &[])]),
            ],
            vec![component(a, Activity, &[])],
        ),
        app(
            "explicit_icc",
            &[
                c(a, ACT, &[], vec![m(
                    ON_CREATE,
                    &[
                        "const-class v0, Lp/S;",
                        "invoke-virtual {p0, v0}, Lp/A;->startService(Landroid/content/Intent;)Landroid/content/ComponentName;",
                    ],
                )]),
                c("Lp/S;", "Landroid/app/Service;", &[], vec![
                    m("public onCreate()V", &["invoke-static {}, Lp/S;->work()V"]),
                    m("public static work()V", &[]),
                ]),
            ],
            vec![component(a, Activity, &[]), component("Lp/S;", Service, &[])],
        ),
        app(
            "implicit_icc",
            &[
                c(a, ACT, &[], vec![m(
                    ON_CREATE,
                    &[
                        "const-string v0, \"p.PING\"",
                        "invoke-virtual {p0, v0}, Lp/A;->sendBroadcast(Landroid/content/Intent;)V",
                        "const-string v0, \"p.NOBODY\"",
                        "invoke-virtual {p0, v0}, Lp/A;->sendBroadcast(Landroid/content/Intent;)V",
                    ],
                )]),
                c("Lp/R;", "Landroid/content/BroadcastReceiver;", &[], vec![m(
                    "public onReceive(Landroid/content/Context;Landroid/content/Intent;)V",
                    &[],
                )]),
                c("Lp/R2;", "Landroid/content/BroadcastReceiver;", &[], vec![m(
                    "public onReceive(Landroid/content/Context;Landroid/content/Intent;)V",
                    &[],
                )]),
            ],
            vec![
                component(a, Activity, &[]),
                component("Lp/R;", Receiver, &["p.PING"]),
                component("Lp/R2;", Receiver, &["p.PING", "p.OTHER"]),
            ],
        ),
        app(
            "recursion",
            &[c(a, ACT, &[], vec![
                m(ON_CREATE, &["invoke-static {}, Lp/A;->f()V"]),
                m("public static f()V", &["invoke-static {}, Lp/A;->f()V", "invoke-static {}, Lp/A;->g()V"]),
                m("public static g()V", &["invoke-static {}, Lp/A;->f()V"]),
            ])],
            vec![component(a, Activity, &[])],
        ),
        app(
            "inherited_lifecycle",
            &[
                c("Lp/BaseAct;", ACT, &[], vec![
                    m(ON_CREATE, &["invoke-static {}, Lp/BaseAct;->setup()V"]),
                    m("public onStart()V", &[]),
                    m("public static setup()V", &[]),
                ]),
                c(a, "Lp/BaseAct;", &[], vec![m("public onStart()V", &["invoke-super {p0}, Lp/BaseAct;->onStart()V"])]),
            ],
            vec![component(a, Activity, &[])],
        ),
        app(
            "register_receiver",
            &[
                c(a, ACT, &[], vec![m(
                    ON_CREATE,
                    &[
                        "new-instance v1, Lp/Dyn;",
                        "invoke-direct {v1}, Lp/Dyn;-><init>()V",
                        "const/4 v2, 0x0",
                        "invoke-virtual {p0, v1, v2}, Lp/A;->registerReceiver(Landroid/content/BroadcastReceiver;Landroid/content/IntentFilter;)Landroid/content/Intent;",
                    ],
                )]),
                c("Lp/Dyn;", "Landroid/content/BroadcastReceiver;", &[], vec![
                    m("public constructor <init>()V", &["invoke-direct {p0}, Landroid/content/BroadcastReceiver;-><init>()V"]),
                    m("public onReceive(Landroid/content/Context;Landroid/content/Intent;)V", &["invoke-virtual {p0}, Lp/Dyn;->handle()V"]),
                    m("public handle()V", &[]),
                ]),
            ],
            vec![component(a, Activity, &[])],
        ),
        app(
            "self_listener",
            &[c(a, ACT, &[CLICK], vec![
                m(ON_CREATE, &["const/4 v0, 0x0", "move-object v1, p0", SET_CLICK]),
                m("public onClick(Landroid/view/View;)V", &["invoke-virtual {p0}, Lp/A;->clicked()V"]),
                m("public clicked()V", &[]),
            ])],
            vec![component(a, Activity, &[])],
        ),
    ]
}

const POOL: &[(&str, &str)] = &[
    ("a", "()V"),
    ("b", "()V"),
    ("c", "(I)V"),
    ("act", "()V"),
    ("onCreate", "(Landroid/os/Bundle;)V"),
    ("onClick", "(Landroid/view/View;)V"),
    ("onResume", "()V"),
];

/// Random app with at most 50 methods.
pub fn random_callgraph_app(seed: u64) -> AppModel {
    use ComponentKind::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=8);
    let names: Vec<String> = (0..n).map(|i| format!("Lr/K{i};")).collect();
    let mut classes = vec![iface("Lr/I;", &[], vec![m("public abstract act()V", &[])])];
    let mut all_refs: Vec<String> = Vec::new();
    let mut plan = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let sup = match rng.gen_range(0..4) {
            0 => OBJ.to_string(),
            1 => ACT.to_string(),
            _ if i > 0 => names[rng.gen_range(0..i)].clone(),
            _ => OBJ.to_string(),
        };
        let mut ifs = Vec::new();
        if rng.gen_bool(0.3) {
            ifs.push(CLICK.to_string());
        }
        if rng.gen_bool(0.3) {
            ifs.push("Lr/I;".to_string());
        }
        let mut pool: Vec<&(&str, &str)> = POOL.iter().collect();
        pool.shuffle(&mut rng);
        let k = rng.gen_range(2..=5);
        let methods: Vec<(&str, &str, bool)> = pool[..k].iter().map(|(nm, d)| (*nm, *d, rng.gen_bool(0.2))).collect();
        for (nm, d, _) in &methods {
            all_refs.push(format!("{name}->{nm}{d}"));
        }
        plan.push((name.clone(), sup, ifs, methods));
    }
    all_refs.push("Lr/I;->act()V".into());
    all_refs.push("Landroid/util/Log;->d()V".into());
    for (name, sup, ifs, methods) in plan {
        let mut ms = Vec::new();
        for (nm, d, stat) in methods {
            let mut body: Vec<String> = Vec::new();
            for _ in 0..rng.gen_range(0..=4) {
                let target = all_refs.choose(&mut rng).unwrap().clone();
                let kind = ["invoke-static", "invoke-virtual", "invoke-direct", "invoke-super", "invoke-interface"]
                    .choose(&mut rng)
                    .unwrap();
                let line = match *kind {
                    "invoke-static" => format!("invoke-static {{}}, {target}"),
                    k => format!("{k} {{v0}}, {target}"),
                };
                body.push(line);
                match rng.gen_range(0..8) {
                    0 => {
                        let l = names.choose(&mut rng).unwrap();
                        body.push("const/4 v0, 0x0".into());
                        body.push(format!("new-instance v1, {l}"));
                        body.push(SET_CLICK.into());
                    }
                    1 => {
                        let t = names.choose(&mut rng).unwrap();
                        body.push(format!("const-class v2, {t}"));
                        body.push(format!("invoke-virtual {{p0, v2}}, {name}->startActivity(Landroid/content/Intent;)V"));
                    }
                    2 => {
                        body.push("const-string v2, \"r.GO\"".into());
                        body.push(format!("invoke-virtual {{p0, v2}}, {name}->sendBroadcast(Landroid/content/Intent;)V"));
                    }
                    _ => {}
                }
            }
            let flags = if stat { "public static" } else { "public" };
            ms.push(M {
                decl: format!("{flags} {nm}{d}"),
                body,
            });
        }
        let ifs: Vec<&str> = ifs.iter().map(String::as_str).collect();
        classes.push(c(&name, &sup, &ifs, ms));
    }
    let mut comps = Vec::new();
    for name in &names {
        match rng.gen_range(0..5) {
            0 | 1 => comps.push(component(name, Activity, &[])),
            2 => comps.push(component(name, Service, &[])),
            3 => comps.push(component(name, Receiver, &["r.GO"])),
            _ => {}
        }
    }
    let total: usize = classes.iter().map(|k| k.methods.len()).sum();
    assert!(total <= 50);
    app(&format!("random{seed}"), &classes, comps)
}

/// Call graph computed the slow way: re-derive everything from scratch
/// until nothing changes.
#[derive(Debug, PartialEq, Eq)]
pub struct OracleGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
    pub icc: BTreeSet<(String, String)>,
    pub entries: BTreeSet<String>,
}

fn is_subtype(app: &AppModel, k: &str, t: &str, depth: usize) -> bool {
    if k == t {
        return true;
    }
    if depth > 64 {
        return false;
    }
    let Some(def) = app.classes.get(k) else { return false };
    def.superclass.iter().chain(def.interfaces.iter()).any(|s| is_subtype(app, s, t, depth + 1))
}

fn lookup<'a>(app: &'a AppModel, class: &str, name: &str, desc: &str) -> Option<&'a MethodDef> {
    let mut cur = app.classes.get(class);
    while let Some(def) = cur {
        if let Some(m) = def.methods.iter().find(|m| m.name == name && m.descriptor == desc) {
            return Some(m);
        }
        cur = def.superclass.as_ref().and_then(|s| app.classes.get(s));
    }
    None
}

fn concrete(m: &MethodDef) -> bool {
    !m.flags.iter().any(|f| f == "abstract")
}

fn targets(app: &AppModel, ins: &Instruction) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let Some(r) = ins.invoked_method.as_deref().and_then(MethodRef::parse) else { return out };
    let mn = ins.opcode.mnemonic();
    if let Some(m) = lookup(app, &r.class, &r.name, &r.descriptor).filter(|m| concrete(m)) {
        out.insert(m.id());
    }
    if mn.starts_with("invoke-virtual") || mn.starts_with("invoke-interface") {
        for k in app.classes.keys() {
            if is_subtype(app, k, &r.class, 0) {
                if let Some(m) = lookup(app, k, &r.name, &r.descriptor).filter(|m| concrete(m)) {
                    out.insert(m.id());
                }
            }
        }
    }
    out
}

fn listener_types(app: &AppModel, m: &MethodDef) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (i, ins) in m.body.iter().enumerate() {
        let Some(r) = ins.invoked_method.as_deref().and_then(MethodRef::parse) else { continue };
        let reg = (r.name.starts_with("set") && r.name.ends_with("Listener")) || r.name.starts_with("register");
        if !reg {
            continue;
        }
        let args = ins.invoke_args();
        let skip = usize::from(!ins.opcode.mnemonic().starts_with("invoke-static"));
        for a in args.into_iter().skip(skip) {
            let mut reg = a.to_string();
            let mut ty = None;
            for prev in m.body[..i].iter().rev() {
                if prev.opcode.mnemonic().starts_with("invoke") || prev.first_register() != Some(reg.as_str()) {
                    continue;
                }
                match prev.opcode.mnemonic() {
                    "new-instance" => ty = prev.type_operand().map(str::to_string),
                    "move-object" => {
                        reg = prev.operands.iter().flat_map(|o| o.registers()).nth(1).unwrap().to_string();
                        continue;
                    }
                    _ => {}
                }
                break;
            }
            if ty.is_none() && reg == "p0" && !m.is_static() {
                ty = Some(m.owner.clone());
            }
            if let Some(t) = ty.filter(|t| app.classes.contains_key(t)) {
                out.insert(t);
            }
        }
    }
    out
}

fn callbacks_of(app: &AppModel, class: &str, cbs: &CallbackList) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut subs = BTreeSet::new();
    let mut cur = app.classes.get(class);
    while let Some(def) = cur {
        for m in &def.methods {
            if concrete(m) && cbs.is_callback(m) && subs.insert((m.name.clone(), m.descriptor.clone())) {
                out.insert(m.id());
            }
        }
        cur = def.superclass.as_ref().and_then(|s| app.classes.get(s));
    }
    out
}

pub fn oracle_entries(app: &AppModel, lifecycle: &LifecycleTable) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for comp in &app.components {
        for pat in lifecycle.for_kind(comp.category) {
            let mut cur = app.classes.get(&comp.path_name);
            while let Some(def) = cur {
                let hits: Vec<String> = def.methods.iter().filter(|m| pat.matches(m) && concrete(m)).map(MethodDef::id).collect();
                if !hits.is_empty() {
                    out.extend(hits);
                    break;
                }
                cur = def.superclass.as_ref().and_then(|s| app.classes.get(s));
            }
        }
    }
    out
}

pub fn oracle_call_graph(app: &AppModel, lifecycle: &LifecycleTable, cbs: &CallbackList, icc: &IccResolver) -> OracleGraph {
    let mut entries = oracle_entries(app, lifecycle);
    let mut roots = entries.clone();
    loop {
        // Transitive closure by naive relaxation.
        let mut nodes = roots.clone();
        loop {
            let before = nodes.len();
            let snapshot: Vec<String> = nodes.iter().cloned().collect();
            for n in snapshot {
                if let Some(m) = app.method(&n) {
                    for ins in &m.body {
                        nodes.extend(targets(app, ins));
                    }
                }
            }
            if nodes.len() == before {
                break;
            }
        }
        let mut new_roots = roots.clone();
        let mut icc_edges = BTreeSet::new();
        for n in &nodes {
            let Some(m) = app.method(n) else { continue };
            for l in listener_types(app, m) {
                for cb in callbacks_of(app, &l, cbs) {
                    entries.insert(cb.clone());
                    new_roots.insert(cb);
                }
            }
            for (i, ins) in m.body.iter().enumerate() {
                if icc.is_sender(app, ins) {
                    for comp in icc.resolve(app, m, i).components {
                        if let Some(r) = app.component(&comp).and_then(|c| receiver_method(app, c)) {
                            icc_edges.insert((n.clone(), r.clone()));
                            new_roots.insert(r);
                        }
                    }
                }
            }
        }
        if new_roots == roots {
            let mut edges = BTreeSet::new();
            for n in &nodes {
                if let Some(m) = app.method(n) {
                    for ins in &m.body {
                        for t in targets(app, ins) {
                            edges.insert((n.clone(), t));
                        }
                    }
                }
            }
            return OracleGraph {
                nodes,
                edges,
                icc: icc_edges,
                entries,
            };
        }
        roots = new_roots;
    }
}

pub fn library_graph(cg: &droidflow::callgraph::CallGraph) -> OracleGraph {
    OracleGraph {
        nodes: cg.nodes.clone(),
        edges: cg
            .edges
            .iter()
            .flat_map(|(k, v)| v.iter().map(move |t| (k.clone(), t.clone())))
            .collect(),
        icc: cg.icc_edges.clone(),
        entries: cg.entry_points.entries.clone(),
    }
}

pub const FLOWGRAPH_FIXTURES: &[&str] = &["critical", "intent_send", "implicit_icc", "activity_result"];

/// Edge-type coverage of the flow-graph fixtures, for reporting.
pub fn edge_kinds(csv: &str) -> BTreeSet<String> {
    csv.lines().filter_map(|l| l.rsplit(',').next()).map(str::to_string).collect()
}

pub fn count_by<K: Ord>(items: impl IntoIterator<Item = K>) -> BTreeMap<K, usize> {
    let mut out = BTreeMap::new();
    for k in items {
        *out.entry(k).or_default() += 1;
    }
    out
}
