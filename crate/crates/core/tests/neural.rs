use droidflow::flowgraph::{AbstractFlowGraph, EdgeType, FlowEdge, FlowNode};
use droidflow::ir::Label;
use droidflow::nn::gnn::{self, GraphInput};
use droidflow::nn::lstm;
use droidflow::nn::tensor::Mat;
use droidflow::nn::{
    classify, grad_check, loss, train, FusionParams, GradScope, Hyperparams, Model, ModelConfig, Sample, TrainConfig,
};
use droidflow::trace::SequenceMatrix;

fn tiny_config(label_len: usize, row_len: usize) -> ModelConfig {
    ModelConfig {
        hyper: Hyperparams {
            row_len,
            hidden_layers: 2,
            lstm_units: 3,
            label_len,
            gnn_steps: 3,
            epochs: 5,
            batch_size: 2,
        },
        state_dim: 4,
        embed_dim: 5,
        seed: 11,
    }
}

fn node(id: usize, codes: &[u8]) -> FlowNode {
    FlowNode {
        id,
        offset: 0,
        opcodes: codes.to_vec(),
        invoke_mtd: "exit".into(),
    }
}

fn edge(source: usize, target: usize, kind: EdgeType) -> [FlowEdge; 2] {
    [
        FlowEdge { source, target, kind },
        FlowEdge {
            source: target,
            target: source,
            kind: kind.backward(),
        },
    ]
}

fn graph(n: usize) -> AbstractFlowGraph {
    let nodes = (0..n).map(|i| node(i, &[0x12 + i as u8, 0x6e, 0x0e])).collect();
    let mut edges: Vec<FlowEdge> = Vec::new();
    for i in 1..n {
        edges.extend(edge(0, i, if i % 2 == 0 { EdgeType::Is } else { EdgeType::Ct }));
    }
    edges.extend(edge(n - 1, 1, EdgeType::Nb));
    AbstractFlowGraph { nodes, edges }
}

fn sample(n: usize, label: Label) -> (Model, Sample) {
    let cfg = tiny_config(3, 4);
    let m = SequenceMatrix {
        row_len: 4,
        rows: vec![vec![0x12, 0x6e, 0x0c, 0x0e], vec![0x71, 0x0a, 0x38, 0x6e]],
    };
    let s = Sample::new(&graph(n), m, label, &cfg).unwrap();
    (Model::new(cfg), s)
}

#[test]
fn gradient_check_gnn() {
    for n in 3..=6 {
        let (model, s) = sample(n, Label::Malicious);
        let err = grad_check(&model, &s, GradScope::Gnn, 1e-5, 100, n as u64);
        assert!(err <= 1e-4, "n = {n}: {err}");
    }
}

#[test]
fn gradient_check_bilstm() {
    let (model, s) = sample(3, Label::Benign);
    let err = grad_check(&model, &s, GradScope::BiLstm, 1e-5, 100, 5);
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn gradient_check_fusion() {
    let (model, s) = sample(4, Label::Malicious);
    let err = grad_check(&model, &s, GradScope::Fusion, 1e-5, 100, 9);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn classify_known_logits() {
    let f = FusionParams {
        w: Mat::zeros(2, 2),
        b: Mat {
            rows: 2,
            cols: 1,
            data: vec![2.0, 0.0],
        },
    };
    let p = classify(&f, &[0.3], &[0.7]);
    let e2 = 2f64.exp();
    assert!((p[0] - e2 / (e2 + 1.0)).abs() < 1e-12);
    assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    assert!((loss(&p, Label::Malicious) - (1.0 + e2).ln()).abs() < 1e-12);
    assert!((loss(&p, Label::Malicious) - 2.1269).abs() < 1e-4);
    // Shift invariance.
    let g = FusionParams {
        b: Mat {
            rows: 2,
            cols: 1,
            data: vec![7.0, 5.0],
        },
        ..f
    };
    let q = classify(&g, &[0.3], &[0.7]);
    assert!((p[0] - q[0]).abs() < 1e-12);
}

/// Two-node graph, T = 2, hand-set weights, evaluated in straight-line code.
#[test]
fn gnn_matches_hand_unrolled_two_node_graph() {
    let s = 2;
    let lv = 1;
    let input = 2 * lv + EdgeType::COUNT;
    let mut p = gnn::GnnParams::new(s, lv, &mut rand::rngs::mock::StepRng::new(0, 0));
    p.w1 = Mat::zeros(s * s, input);
    // A = [[0.1 + 0.2·l_u, 0.3], [0, 0.4 + l_v]] for edge type ct.
    p.w1.data[0] = 0.2;
    p.b1 = Mat {
        rows: 4,
        cols: 1,
        data: vec![0.1, 0.3, 0.0, 0.4],
    };
    p.w1.data[3 * input + input - 1] = 1.0;
    p.w2 = Mat {
        rows: 2,
        cols: 1,
        data: vec![0.5, -0.25],
    };
    p.b2 = Mat {
        rows: 2,
        cols: 1,
        data: vec![0.05, 0.0],
    };
    p.wg = Mat {
        rows: 2,
        cols: 2,
        data: vec![1.0, 0.0, 0.0, -1.0],
    };
    p.bg = Mat::zeros(2, 1);
    let g = GraphInput {
        labels: vec![vec![0.2], vec![0.6]],
        edges: vec![(0, 1, 0)],
        init: vec![vec![0.1, -0.05], vec![0.02, 0.08]],
    };
    let (out, _) = gnn::forward(&p, &g, 2);

    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    // Edge 0 → 1: A = [[0.1 + 0.2·0.2, 0.3], [0, 0.4 + 0.6]].
    let a: [[f64; 2]; 2] = [[0.14, 0.3], [0.0, 1.0]];
    let h0: [f64; 2] = [0.1, -0.05];
    let n0 = [(0.5 * 0.2 + 0.05f64).tanh(), (-0.25 * 0.2f64).tanh()];
    let n1 = [
        (a[0][0] * h0[0] + a[0][1] * h0[1] + 0.5 * 0.6 + 0.05).tanh(),
        (a[1][0] * h0[0] + a[1][1] * h0[1] - 0.25 * 0.6).tanh(),
    ];
    let z = [
        sig(n0[0]) * n0[0] + sig(n1[0]) * n1[0],
        sig(-n0[1]) * n0[1] + sig(-n1[1]) * n1[1],
    ];
    assert!((out[0] - z[0].tanh()).abs() < 1e-12, "{out:?}");
    assert!((out[1] - z[1].tanh()).abs() < 1e-12, "{out:?}");
}

#[test]
fn gnn_zero_weights_give_zero_vector() {
    let (mut model, s) = sample(3, Label::Benign);
    for m in model.params.gnn.tensors_mut() {
        m.fill(0.0);
    }
    let out = gnn::embed(&model.params.gnn, &s.graph, 3);
    assert!(out.iter().all(|&x| x == 0.0));
    let empty = GraphInput {
        labels: vec![],
        edges: vec![],
        init: vec![],
    };
    assert_eq!(gnn::embed(&model.params.gnn, &empty, 3), vec![0.0; 4]);
}

#[test]
fn gnn_readout_is_permutation_invariant() {
    let (model, _) = sample(5, Label::Benign);
    let cfg = model.config;
    let g = graph(5);
    let perm = [3usize, 0, 4, 1, 2];
    let mut h = g.clone();
    for n in h.nodes.iter_mut() {
        n.id = perm[n.id] + 10;
    }
    for e in h.edges.iter_mut() {
        e.source = perm[e.source] + 10;
        e.target = perm[e.target] + 10;
    }
    h.nodes.sort_by_key(|n| n.id);
    let a = GraphInput::new(&g, cfg.hyper.label_len, cfg.state_dim, cfg.seed);
    let b = GraphInput::new(&h, cfg.hyper.label_len, cfg.state_dim, cfg.seed);
    let x = gnn::embed(&model.params.gnn, &a, 3);
    let y = gnn::embed(&model.params.gnn, &b, 3);
    for (p, q) in x.iter().zip(&y) {
        assert!((p - q).abs() < 1e-12);
    }
}

/// Single layer, single direction check against a scalar LSTM transcript.
#[test]
fn lstm_matches_scalar_recurrence() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
    let p = lstm::BiLstmParams::new(2, 2, 1, &mut rng);
    let codes = [5u8, 9, 200];
    let (out, _) = lstm::forward_row(&p, &codes);

    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let run = |cell: &lstm::LstmCell, order: &[usize]| -> Vec<[f64; 2]> {
        let mut h = [0.0; 2];
        let mut c = [0.0; 2];
        let mut outs = vec![[0.0; 2]; codes.len()];
        for &t in order {
            let x = p.embedding.row(codes[t] as usize);
            let pre = |r: usize| {
                cell.b.data[r]
                    + cell.wx.data[r * 2] * x[0]
                    + cell.wx.data[r * 2 + 1] * x[1]
                    + cell.wh.data[r * 2] * h[0]
                    + cell.wh.data[r * 2 + 1] * h[1]
            };
            let mut nh = [0.0; 2];
            for j in 0..2 {
                let i = sig(pre(j));
                let f = sig(pre(2 + j));
                let g = pre(4 + j).tanh();
                let o = sig(pre(6 + j));
                c[j] = f * c[j] + i * g;
                nh[j] = o * c[j].tanh();
            }
            h = nh;
            outs[t] = h;
        }
        outs
    };
    let fw = run(&p.layers[0][0], &[0, 1, 2]);
    let bw = run(&p.layers[0][1], &[2, 1, 0]);
    let mut pooled = [0.0; 4];
    for t in 0..3 {
        pooled[0] += fw[t][0] / 3.0;
        pooled[1] += fw[t][1] / 3.0;
        pooled[2] += bw[t][0] / 3.0;
        pooled[3] += bw[t][1] / 3.0;
    }
    let a3 = p.l3w.affine(&pooled, &p.l3b);
    let expect = p.l4w.affine(&a3, &p.l4b);
    for (x, y) in out.iter().zip(&expect) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn lstm_duplicate_rows_and_empty_matrix() {
    let (model, _) = sample(3, Label::Benign);
    let one = SequenceMatrix {
        row_len: 4,
        rows: vec![vec![1, 2, 3, 4]],
    };
    let two = SequenceMatrix {
        row_len: 4,
        rows: vec![vec![1, 2, 3, 4], vec![1, 2, 3, 4]],
    };
    let a = lstm::embed(&model.params.lstm, &one);
    let b = lstm::embed(&model.params.lstm, &two);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
    let empty = SequenceMatrix::empty(4);
    assert_eq!(lstm::embed(&model.params.lstm, &empty), vec![0.0; 32]);
    let bad = SequenceMatrix {
        row_len: 5,
        rows: vec![vec![0; 5]],
    };
    assert!(lstm::check_rows(&bad, 4).is_err());
}

fn toy_set(cfg: &ModelConfig) -> Vec<Sample> {
    let mal = |k: u8| {
        let m = SequenceMatrix {
            row_len: 4,
            rows: vec![vec![0x6e, 0x71, k, 0x6e]],
        };
        Sample::new(&graph(3), m, Label::Malicious, cfg).unwrap()
    };
    let ben = |k: u8| {
        let m = SequenceMatrix {
            row_len: 4,
            rows: vec![vec![0x12, 0x01, k, 0x0e]],
        };
        Sample::new(&AbstractFlowGraph::default(), m, Label::Benign, cfg).unwrap()
    };
    vec![mal(1), ben(2), mal(3), ben(4)]
}

#[test]
fn toy_training_decreases_loss_and_is_deterministic() {
    let mut cfg = tiny_config(3, 4);
    cfg.hyper.batch_size = 4;
    let data = toy_set(&cfg);
    let tc = TrainConfig {
        learning_rate: 0.01,
        seed: 7,
        ..TrainConfig::default()
    };
    let a = train(&data, cfg, &tc).unwrap();
    for w in a.losses.windows(2) {
        assert!(w[1] < w[0], "{:?}", a.losses);
    }
    let b = train(&data, cfg, &tc).unwrap();
    assert_eq!(a.model.to_bytes(), b.model.to_bytes());
}

#[test]
fn zero_learning_rate_keeps_initial_params() {
    let cfg = tiny_config(3, 4);
    let data = toy_set(&cfg);
    let tc = TrainConfig {
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    let out = train(&data, cfg, &tc).unwrap();
    assert_eq!(out.model.params, Model::new(cfg).params);
}

#[test]
fn model_file_round_trip_and_mismatch() {
    let (model, s) = sample(3, Label::Benign);
    let bytes = model.to_bytes();
    let back = Model::from_bytes(&bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.probabilities(&s), model.probabilities(&s));
    assert!(back.check_features(3, 4).is_ok());
    assert!(back.check_features(13, 4).is_err());
    assert!(Model::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    assert!(Model::from_bytes(b"garbage!garbage!garbage").is_err());
}

#[test]
fn degenerate_inputs_give_softmax_of_bias() {
    let (mut model, _) = sample(3, Label::Benign);
    model.params.fusion.b.data = vec![0.3, -0.2];
    let cfg = model.config;
    let s = Sample::new(&AbstractFlowGraph::default(), SequenceMatrix::empty(4), Label::Benign, &cfg).unwrap();
    let p = model.probabilities(&s);
    let e = (0.5f64).exp();
    assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
    assert_eq!(model.predict(&s).label, Label::Benign);
}
