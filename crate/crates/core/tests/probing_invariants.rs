use neurodenote::analysis::{median, neuron_label_proportions, proportions_from_snapshot};
use neurodenote::chess::positions::records_from_games;
use neurodenote::chess::synth::{generate_games, SynthConfig};
use neurodenote::chess::{LabelConfig, PositionRecord, PropertyKind};
use neurodenote::denotation::{
    and_gate_predict, and_gate_predict_dataset, assess_denotation, Family, Measure, Silhouette,
};
use neurodenote::nn::{Layer, Tensor, TrainConfig};
use neurodenote::object::{build_object_model, snapshot_dataset, ObjectSpec, Position};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn boards(n_games: usize) -> Vec<PositionRecord> {
    let cfg = SynthConfig {
        games: n_games,
        seed: 99,
        max_plies: 120,
        ..SynthConfig::default()
    };
    let games: Vec<_> = generate_games(&cfg).into_iter().map(|(g, _)| g).collect();
    records_from_games(&games, &LabelConfig::default(), Some(1000))
        .unwrap()
        .0
}

#[test]
fn proportions_match_per_board_recount() {
    let recs = boards(12);
    assert_eq!(recs.len(), 1000);
    let model = build_object_model(&ObjectSpec::default(), 5).unwrap();
    let report = neuron_label_proportions(&model, &recs, "sample").unwrap();
    let mut counts = vec![vec![0u32; 128]; 3];
    for r in &recs {
        let (_, snap) = model
            .forward_with_recording(&Tensor::from_vec(r.tensor.to_f64()))
            .unwrap();
        for (l, layer) in snap.layers.iter().enumerate() {
            for (n, &v) in layer.iter().enumerate() {
                if v > 0.0 {
                    counts[l][n] += 1;
                }
            }
        }
    }
    for l in 0..3 {
        for n in 0..128 {
            assert_eq!(report.proportions[l][n], counts[l][n] as f64 / 1000.0);
        }
    }
    // medians agree with a separate sort-based computation
    let mut all: Vec<f64> = report.proportions.concat();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(report.overall_median, (all[191] + all[192]) / 2.0);
    assert_eq!(report.overall_median, median(&all));
}

#[test]
fn annihilated_neurons_have_zero_columns() {
    let recs = boards(12);
    let mut model = build_object_model(&ObjectSpec::default(), 6).unwrap();
    // force a few dead units in each layer
    for layer in model.layers.iter_mut().take(3) {
        if let Layer::Dense(d) = layer {
            for n in [3, 50, 77] {
                d.bias.values_mut()[n] = -1e6;
            }
        }
    }
    let ds = snapshot_dataset(&model, "h", &recs, PropertyKind::MaterialAdvantage).unwrap();
    let report = proportions_from_snapshot(&ds, "sample").unwrap();
    assert!(report.annihilated.iter().all(|&a| a >= 3));
    for (l, layer) in report.proportions.iter().enumerate() {
        for (n, &p) in layer.iter().enumerate() {
            if p == 0.0 {
                let col = l * 128 + n;
                assert!((0..ds.len()).all(|i| ds.row(i)[col] == 0.0));
            }
        }
    }
}

#[test]
fn and_gate_matches_row_loop_and_shrinks_with_more_conjuncts() {
    let recs = boards(12);
    let model = build_object_model(&ObjectSpec::default(), 7).unwrap();
    let ds = snapshot_dataset(&model, "h", &recs, PropertyKind::WhiteInCheck).unwrap();
    let small: Silhouette = "L0N1+L1N9".parse().unwrap();
    let large: Silhouette = "L0N1+L1N9+L2N30+L2N31".parse().unwrap();
    let fast = and_gate_predict_dataset(&ds, &small, 0.0).unwrap();
    for (i, r) in recs.iter().enumerate() {
        let (_, snap) = model
            .forward_with_recording(&Tensor::from_vec(r.tensor.to_f64()))
            .unwrap();
        let brute = snap.layers[0][1] > 0.0 && snap.layers[1][9] > 0.0;
        assert_eq!(fast[i], brute);
        assert_eq!(and_gate_predict(&snap, &small, 0.0).unwrap(), brute);
    }
    let wide = and_gate_predict_dataset(&ds, &large, 0.0).unwrap();
    assert!(wide.iter().zip(&fast).all(|(&w, &s)| !w || s));
}

#[test]
fn singleton_linear_denotation_is_a_monotone_threshold() {
    let recs = boards(12);
    let model = build_object_model(&ObjectSpec::default(), 8).unwrap();
    let ds = snapshot_dataset(&model, "h", &recs, PropertyKind::MaterialAdvantage).unwrap();
    let (train, test) = ds.split_tail(0.3);
    let s = Silhouette::singleton(1, 4);
    let cfg = TrainConfig {
        batch_size: 32,
        max_epochs: 5,
        ..TrainConfig::default()
    };
    let r = assess_denotation(&s, &train, &test, Family::Linear, 0.0, Measure::F1, &cfg).unwrap();
    assert!(r.verdict);
    assert_eq!(r.silhouette.positions(), &[Position::new(1, 4)]);
    let r2 = assess_denotation(&s, &train, &test, Family::Linear, 1.01, Measure::F1, &cfg).unwrap();
    assert!(!r2.verdict);

    // a 1-input logistic observer's decision is a threshold on that input
    let restricted = neurodenote::denotation::restrict(&train, &s).unwrap();
    let (obs, _) =
        neurodenote::observer::train_observer(neurodenote::ObserverKind::Linear, &restricted, &restricted, &cfg)
            .unwrap();
    let xs: Vec<f64> = (0..200).map(|i| i as f64 / 40.0).collect();
    let ps = obs.predict(&xs, xs.len()).unwrap();
    let Layer::Dense(d) = &obs.layers[0] else {
        unreachable!()
    };
    let w = d.weights.values()[0];
    for pair in ps.windows(2) {
        if w > 0.0 {
            assert!(pair[1] >= pair[0]);
        } else {
            assert!(pair[1] <= pair[0]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn verdict_is_pure_function_of_performance(p in 0.0f64..1.0, t in 0.0f64..1.0) {
        prop_assert_eq!(neurodenote::denotation::verdict(p, t), p >= t);
    }

    #[test]
    fn median_matches_sort(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut s = v.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
        prop_assert_eq!(median(&v), want);
    }
}
