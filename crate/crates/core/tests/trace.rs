mod common;

use proptest::prelude::*;

use droidflow::callgraph::{build_call_graph, CallbackList, LifecycleTable};
use droidflow::flowgraph::icc::IccResolver;
use droidflow::ir::ComponentKind;
use droidflow::miner::CriticalApiSet;
use droidflow::trace::*;
use droidflow::Error;

use common::*;

const SMS: &str = "Landroid/telephony/SmsManager;->sendTextMessage(Ljava/lang/String;)V";

fn sms_app() -> droidflow::ir::AppModel {
    let send = format!("invoke-virtual {{v0, v1}}, {SMS}");
    app(
        "sms",
        &[
            c(
                "Lcom/t/Main;",
                "Landroid/app/Activity;",
                &[],
                vec![m(
                    "public onCreate(Landroid/os/Bundle;)V",
                    &[
                        "const/4 v0, 0x1",
                        "invoke-static {}, Lcom/t/Util;->a()V",
                        "invoke-static {}, Lcom/t/Util;->b()V",
                        &send,
                    ],
                )],
            ),
            c(
                "Lcom/t/Util;",
                "Ljava/lang/Object;",
                &[],
                vec![
                    m("public static a()V", &["nop", "invoke-static {}, Lcom/t/Util;->b()V"]),
                    m("public static b()V", &["const/4 v0, 0x0", "const/4 v1, 0x0", &send]),
                ],
            ),
        ],
        vec![component("Lcom/t/Main;", ComponentKind::Activity, &[])],
    )
}

#[test]
fn traces_follow_call_order_and_opcodes_stop_at_the_site() {
    let app = sms_app();
    let (_, cg) = build_call_graph(&app, &LifecycleTable::default(), &CallbackList::default(), &IccResolver::default()).unwrap();
    let critical = CriticalApiSet::parse(SMS);
    let (traces, diags) = find_call_traces(&cg, &critical, TraceCaps::default());
    assert!(diags.is_empty());
    let paths: Vec<Vec<&str>> = traces.iter().map(|t| t.methods.iter().map(|s| s.as_str()).collect()).collect();
    let main = "Lcom/t/Main;->onCreate(Landroid/os/Bundle;)V";
    let a = "Lcom/t/Util;->a()V";
    let b = "Lcom/t/Util;->b()V";
    assert_eq!(paths, vec![vec![main, a, b], vec![main, b], vec![main]]);

    let op = |m: &str| droidflow::ir::Opcode::from_mnemonic(m).unwrap().code();
    let want = [
        vec![op("const/4"), op("invoke-static"), op("nop"), op("invoke-static"), op("const/4"), op("const/4"), op("invoke-virtual")],
        vec![op("const/4"), op("invoke-static"), op("invoke-static"), op("const/4"), op("const/4"), op("invoke-virtual")],
        vec![op("const/4"), op("invoke-static"), op("invoke-static"), op("invoke-virtual")],
    ];
    for (t, w) in traces.iter().zip(&want) {
        assert_eq!(&extract_opcodes(t, &app).unwrap(), w);
    }
}

#[test]
fn caps_truncate_with_diagnostic() {
    let app = sms_app();
    let (_, cg) = build_call_graph(&app, &LifecycleTable::default(), &CallbackList::default(), &IccResolver::default()).unwrap();
    let caps = TraceCaps {
        max_depth: 64,
        max_traces_per_entry: 1,
    };
    let (traces, diags) = find_call_traces(&cg, &CriticalApiSet::parse(SMS), caps);
    assert_eq!(traces.len(), 1);
    assert_eq!(diags.len(), 1);
}

#[test]
fn mismatched_trace_is_broken() {
    let app = sms_app();
    let t = CallTrace {
        methods: vec!["Lcom/t/Util;->a()V".into()],
        call_offsets: vec![],
        site_offset: 0,
        critical_api: SMS.into(),
        opcodes: vec![],
    };
    assert!(matches!(extract_opcodes(&t, &app), Err(Error::BrokenTrace { .. })));
}

#[test]
fn short_traces_pad_or_drop() {
    assert!(split_sequence(&[1u8, 2], 3).is_empty());
    assert_eq!(split_sequence_padded(&[1, 2], 3), vec![vec![0, 1, 2]]);
    assert_eq!(split_sequence_padded(&[1, 2, 3, 4], 3), vec![vec![2, 3, 4]]);
    let t = |ops: Vec<u8>| CallTrace {
        methods: vec!["La;->b()V".into()],
        call_offsets: vec![],
        site_offset: 0,
        critical_api: SMS.into(),
        opcodes: ops,
    };
    assert!(matches!(build_matrix(&[t(vec![1])], 4, false), Err(Error::EmptyMatrix { row_len: 4 })));
    let m = build_matrix(&[t(vec![1, 2, 3, 4, 5]), t(vec![9])], 2, true).unwrap();
    assert_eq!(m.rows, vec![vec![2, 3], vec![4, 5], vec![0, 9]]);
}

#[test]
fn matrix_csv_rejects_ragged_rows() {
    assert!(matches!(
        SequenceMatrix::from_csv("2,3\n1,2,3\n4,5\n"),
        Err(Error::RowLengthMismatch { expected: 3, found: 2 })
    ));
    assert!(SequenceMatrix::from_csv("3,1\n1\n2\n").is_err());
}

fn any_trace() -> impl Strategy<Value = CallTrace> {
    (prop::collection::vec(any::<u8>(), 0..300), 0u32..9).prop_map(|(ops, e)| CallTrace {
        methods: vec![format!("Lp/E{e};->run()V")],
        call_offsets: vec![],
        site_offset: 0,
        critical_api: SMS.into(),
        opcodes: ops,
    })
}

proptest! {
    #[test]
    fn split_keeps_the_suffix(seq in prop::collection::vec(any::<u8>(), 0..2000), row_len in 1usize..200) {
        let rows = split_sequence(&seq, row_len);
        let flat: Vec<u8> = rows.concat();
        prop_assert_eq!(rows.len(), seq.len() / row_len);
        prop_assert!(seq.ends_with(&flat));
        prop_assert!(seq.len() - flat.len() < row_len);
    }

    #[test]
    fn bound_is_a_multiple_of_row_len(l in 1usize..20000, y in 1usize..100, row_len in 1usize..200) {
        let b = sample_bound(l, y, row_len);
        prop_assert_eq!(b % row_len, 0);
        prop_assert!(b >= row_len);
        prop_assert!(b <= (l / y).max(row_len));
    }

    #[test]
    fn sampling_keeps_suffixes(mut traces in prop::collection::vec(any_trace(), 1..20), l in 1usize..3000, row_len in 1usize..100) {
        let before = traces.clone();
        let r = sample_opcodes(&mut traces, l, row_len);
        prop_assert_eq!(r.total_before, before.iter().map(|t| t.opcodes.len()).sum::<usize>());
        for (a, b) in traces.iter().zip(&before) {
            prop_assert!(b.opcodes.ends_with(&a.opcodes));
            if let Some(bound) = r.bound {
                prop_assert_eq!(a.opcodes.len(), b.opcodes.len().min(bound));
            } else {
                prop_assert_eq!(&a.opcodes, &b.opcodes);
            }
        }
    }

    #[test]
    fn tsv_and_matrix_round_trip(traces in prop::collection::vec(any_trace(), 0..10), row_len in 1usize..20) {
        let back = traces_from_tsv(&traces_to_tsv(&traces)).unwrap();
        prop_assert_eq!(back.len(), traces.len());
        for (a, b) in back.iter().zip(&traces) {
            prop_assert_eq!(&a.opcodes, &b.opcodes);
            prop_assert_eq!(a.entry(), b.entry());
        }
        if let Ok(m) = build_matrix(&traces, row_len, false) {
            prop_assert_eq!(SequenceMatrix::from_csv(&m.to_csv()).unwrap(), m);
        }
    }
}
