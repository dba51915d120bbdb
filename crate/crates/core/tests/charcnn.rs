mod common;

use dialectid::charcnn::{forward, CnnArtifact, Mode, TrainOptions};

#[test]
fn separable_marker_task_reaches_low_training_loss() {
    let (texts, labels) = common::marker_fixture(40, 27, 1, 1);
    let cfg = common::tiny_config(27);
    let classes = vec!["plain".to_string(), "marked".to_string()];
    let (art, hist) = CnnArtifact::fit(&cfg, classes, &texts, &labels, &texts, &labels, TrainOptions { workers: 1 }).unwrap();
    assert_eq!(hist.epochs.len(), 200);
    let last = hist.epochs.last().unwrap();
    assert!(last.loss < 0.05, "final training loss {}", last.loss);
    let probs = art.predict_proba(&texts);
    let correct = probs.iter().zip(&labels).filter(|(p, &y)| (p[1] > p[0]) == (y == 1)).count();
    assert_eq!(correct, 40);
}

#[test]
fn training_and_inference_do_not_depend_on_worker_count() {
    let (texts, labels) = common::marker_fixture(24, 27, 1, 2);
    let mut cfg = common::tiny_config(27);
    cfg.epochs = 5;
    cfg.dropout = 0.3;
    let classes = vec!["plain".to_string(), "marked".to_string()];
    let fit = |workers| {
        CnnArtifact::fit(&cfg, classes.clone(), &texts, &labels, &texts, &labels, TrainOptions { workers })
            .unwrap()
            .0
    };
    let one = fit(1);
    let four = fit(4);
    assert_eq!(one.params, four.params);
    let enc: Vec<Vec<u32>> = texts.iter().map(|t| one.encode(t)).collect();
    let a = forward(&one.params, &one.config, &enc, Mode::Eval);
    let b = forward(&one.params, &one.config, &enc, Mode::Eval);
    let bits = |v: &Vec<Vec<f32>>| v.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}
