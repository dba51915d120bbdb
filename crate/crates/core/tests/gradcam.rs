mod common;

use std::sync::OnceLock;

use dialectid::charcnn::{encode, forward_trace, CnnArtifact, CnnConfig, CnnParameters, Mode, TrainOptions, PAD};
use dialectid::gradcam::{attribute, quantize, render_html_string, Palette, QuantizedAttribution, RenderInfo};
use quick_xml::events::Event;
use quick_xml::Reader;

fn top3(scores: &[f32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(3);
    idx
}

fn trained_marker_model() -> &'static (CnnArtifact, Vec<String>, Vec<usize>) {
    static MODEL: OnceLock<(CnnArtifact, Vec<String>, Vec<usize>)> = OnceLock::new();
    MODEL.get_or_init(train_marker_model)
}

fn train_marker_model() -> (CnnArtifact, Vec<String>, Vec<usize>) {
    let (texts, labels) = common::marker_fixture(200, 27, 3, 1);
    let mut cfg = common::tiny_config(27);
    cfg.epochs = 60;
    let classes = vec!["plain".to_string(), "marked".to_string()];
    let (art, _) = CnnArtifact::fit(&cfg, classes, &texts, &labels, &texts, &labels, TrainOptions { workers: 1 }).unwrap();
    (art, texts, labels)
}

#[test]
fn occlusion_oracle_agrees_with_attribution() {
    let (art, _, _) = trained_marker_model();
    let (texts, labels) = common::marker_fixture(40, 27, 3, 99);
    let mut overlaps = Vec::new();
    for (text, &y) in texts.iter().zip(&labels) {
        if y != 1 {
            continue;
        }
        let ids = art.encode(text);
        let attr = attribute(&art.params, &art.config, &ids, 1, "s").unwrap();
        let base = forward_trace(&art.params, &art.config, &ids, Mode::Eval).logits[1];
        let drops: Vec<f32> = (0..attr.importance.len())
            .map(|t| {
                let mut occluded = ids.clone();
                occluded[t] = PAD;
                base - forward_trace(&art.params, &art.config, &occluded, Mode::Eval).logits[1]
            })
            .collect();
        let a = top3(&attr.importance);
        let o = top3(&drops);
        let shared = a.iter().filter(|i| o.contains(i)).count();
        overlaps.push(shared as f64 / 3.0);
    }
    assert_eq!(overlaps.len(), 20);
    for (i, o) in overlaps.iter().enumerate() {
        assert!(*o >= 2.0 / 3.0 - 1e-12, "sample {i}: overlap {o}");
    }
}

/// The same network over a longer input: dense weights for the extra pooled
/// positions are zero and the squeeze weights are zero, so the extra padding
/// cannot change logits or gates.
fn widened(art: &CnnArtifact, factor: usize) -> (CnnConfig, CnnParameters<f32>, CnnParameters<f32>) {
    let mut base = art.params.clone();
    for se in &mut base.ses {
        se.w1.iter_mut().for_each(|w| *w = 0.0);
    }
    let mut cfg = art.config.clone();
    cfg.input_len *= factor;
    let mut wide = base.clone();
    let first = &mut wide.hidden[0];
    let old_in = first.inp;
    let new_in = old_in * factor;
    let mut weight = vec![0.0f32; first.out * new_in];
    for o in 0..first.out {
        weight[o * new_in..o * new_in + old_in].copy_from_slice(&first.weight[o * old_in..(o + 1) * old_in]);
    }
    first.weight = weight;
    first.inp = new_in;
    wide.check_shapes(&cfg).unwrap();
    (cfg, base, wide)
}

#[test]
fn attribution_ignores_padding_length() {
    let (art, _, _) = trained_marker_model();
    let (wide_cfg, base, wide) = widened(art, 2);
    let (texts, _) = common::marker_fixture(10, 27, 3, 5);
    for (i, text) in texts.iter().enumerate() {
        let text: String = text.chars().take(18 + i).collect();
        let short = encode(&text, &art.vocab, art.config.input_len);
        let long = encode(&text, &art.vocab, wide_cfg.input_len);
        for class in 0..2 {
            let a = attribute(&base, &art.config, &short, class, "s").unwrap();
            let b = attribute(&wide, &wide_cfg, &long, class, "s").unwrap();
            assert_eq!(a.importance.len(), text.chars().count());
            for (x, y) in a.importance.iter().zip(&b.importance) {
                assert!((x - y).abs() <= 1e-5, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn all_padding_sample_is_rejected() {
    let (art, _, _) = trained_marker_model();
    assert!(attribute(&art.params, &art.config, &[PAD; 27], 0, "empty").is_err());
}

fn check_xml(html: &str) -> usize {
    let mut reader = Reader::from_str(html);
    let mut spans = 0;
    let mut depth = 0i32;
    loop {
        match reader.read_event().expect("well-formed markup") {
            Event::Start(e) => {
                depth += 1;
                if e.name().as_ref() == b"span" {
                    spans += 1;
                }
            }
            Event::End(_) => depth -= 1,
            Event::Eof => break,
            _ => {}
        }
    }
    assert_eq!(depth, 0);
    spans
}

#[test]
fn rendered_html_is_well_formed_and_never_styles_spaces() {
    let (art, _, _) = trained_marker_model();
    let text = "ab <c> & d\"e' fzzzg hh";
    let ids = art.encode(text);
    let attr = attribute(&art.params, &art.config, &ids, 1, "x&y").unwrap();
    let mut q = quantize(&attr, Palette::BlueRo);
    q.levels.iter_mut().for_each(|l| *l = 9);
    let info = RenderInfo {
        sample_id: "x&y".into(),
        predicted_label: "marked".into(),
        class_scores: vec![("plain".into(), 0.1), ("marked".into(), 0.9)],
    };
    let html = render_html_string(text, &q, &info);
    let non_space = text.chars().filter(|c| !c.is_whitespace()).count();
    assert_eq!(check_xml(&html), non_space);
    assert!(!html.contains("> </span>"));
    assert!(html.contains("#0000ff"));
    let red = QuantizedAttribution { palette: Palette::RedMd, ..q };
    assert!(render_html_string(text, &red, &info).contains("#ff0000"));
}

