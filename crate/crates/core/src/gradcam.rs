//! Grad-CAM character attributions for the CNN and their HTML rendering.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::charcnn::{features_gradient, forward_trace, CnnArtifact, CnnConfig, CnnParameters, Mode, PAD};
use crate::corpus::Dialect;
use crate::error::{Error, Result};

/// Per-character importance in `[0, 1]` for one sample and target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharAttribution {
    pub sample_id: String,
    pub target_class: usize,
    /// One value per position of the encoded prefix (trailing PAD excluded).
    pub importance: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Palette {
    RedMd,
    BlueRo,
}

/// Background shades from darkest (index 0) to lightest (index 9).
pub const RED_SHADES: [&str; 10] = [
    "#ff0000", "#ff1a1a", "#ff3333", "#ff4d4d", "#ff6666", "#ff8080", "#ff9999", "#ffb3b3", "#ffccb3",
    "#ffe6e6",
];
pub const BLUE_SHADES: [&str; 10] = [
    "#0000ff", "#0d26ff", "#264dff", "#2673ff", "#3399ff", "#40bfff", "#4de6ff", "#59edff", "#66f5ff",
    "#73fcff",
];

impl Palette {
    pub fn for_dialect(d: Dialect) -> Self {
        match d {
            Dialect::Md => Palette::RedMd,
            Dialect::Ro => Palette::BlueRo,
        }
    }

    pub fn shades(self) -> &'static [&'static str; 10] {
        match self {
            Palette::RedMd => &RED_SHADES,
            Palette::BlueRo => &BLUE_SHADES,
        }
    }

    /// Background and text colour for a level; level 9 gets the darkest shade.
    pub fn colors(self, level: u8) -> (&'static str, &'static str) {
        let shade = 9 - level.min(9) as usize;
        let text = if shade < 5 { "#ffffff" } else { "#000000" };
        (self.shades()[shade], text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedAttribution {
    pub levels: Vec<u8>,
    pub palette: Palette,
}

/// `min(9, floor(10 * importance))`.
pub fn quantize_level(importance: f32) -> u8 {
    (importance * 10.0).floor().clamp(0.0, 9.0) as u8
}

pub fn quantize(attr: &CharAttribution, palette: Palette) -> QuantizedAttribution {
    QuantizedAttribution {
        levels: attr.importance.iter().map(|&v| quantize_level(v)).collect(),
        palette,
    }
}

/// `relu(sum_c w_c A_c)` over a time-major `len × channels` activation map,
/// with `w_c` the temporal mean of the gradient of channel `c`.
pub fn grad_cam_map(acts: &[f32], grads: &[f32], channels: usize) -> Vec<f32> {
    let len = acts.len() / channels.max(1);
    let mut weights = vec![0.0f64; channels];
    for row in grads.chunks_exact(channels) {
        for (w, &g) in weights.iter_mut().zip(row) {
            *w += g as f64;
        }
    }
    weights.iter_mut().for_each(|w| *w /= len.max(1) as f64);
    acts.chunks_exact(channels)
        .map(|row| {
            let s: f64 = row.iter().zip(&weights).map(|(&a, &w)| a as f64 * w).sum();
            s.max(0.0) as f32
        })
        .collect()
}

/// Nearest-neighbour upsampling by `factor`; positions past the covered
/// region reuse the last cell.
pub fn upsample(map: &[f32], factor: usize, out_len: usize) -> Vec<f32> {
    if map.is_empty() {
        return vec![0.0; out_len];
    }
    (0..out_len)
        .map(|t| map[(t / factor.max(1)).min(map.len() - 1)])
        .collect()
}

/// Scales by the maximum; an all-zero map stays zero.
pub fn normalize(values: &mut [f32]) {
    let max = values.iter().copied().fold(0.0f32, f32::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v /= max);
    }
}

/// Grad-CAM over the last block's gated output for an encoded sample.
pub fn attribute(
    params: &CnnParameters<f32>,
    config: &CnnConfig,
    ids: &[u32],
    target_class: usize,
    sample_id: &str,
) -> Result<CharAttribution> {
    if target_class >= params.classifier.out {
        return Err(Error::Validation(format!(
            "target class {target_class} outside {} classes",
            params.classifier.out
        )));
    }
    let prefix = ids.iter().rposition(|&id| id != PAD).map_or(0, |p| p + 1);
    if prefix == 0 {
        return Err(Error::Validation(format!(
            "sample {sample_id} encodes to padding only; nothing to attribute"
        )));
    }
    let trace = forward_trace(params, config, ids, Mode::Eval);
    let mut onehot = vec![0.0f32; params.classifier.out];
    onehot[target_class] = 1.0;
    let grads = features_gradient(params, &trace, &onehot);
    let channels = params.convs.last().map_or(params.embed_dim, |c| c.out_ch);
    let map = grad_cam_map(trace.features(), &grads, channels);
    let factor = config.pool_width.pow(params.convs.len() as u32);
    let mut importance = upsample(&map, factor, prefix);
    normalize(&mut importance);
    Ok(CharAttribution {
        sample_id: sample_id.to_string(),
        target_class,
        importance,
    })
}

/// Encodes `text` with the artifact's vocabulary and attributes it.
pub fn attribute_text(
    artifact: &CnnArtifact,
    text: &str,
    target_class: usize,
    sample_id: &str,
) -> Result<CharAttribution> {
    attribute(&artifact.params, &artifact.config, &artifact.encode(text), target_class, sample_id)
}

/// Header information shown above a rendered sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderInfo {
    pub sample_id: String,
    pub predicted_label: String,
    pub class_scores: Vec<(String, f32)>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

const HEAD: &str = "<!DOCTYPE html>\n<html xmlns=\"http://www.w3.org/1999/xhtml\">\n<head>\n<meta charset=\"utf-8\"/>\n";

/// Standalone page: each non-space character of the attributed prefix sits
/// in a coloured span; spaces and text past the prefix are left plain.
pub fn render_html_string(text: &str, quantized: &QuantizedAttribution, info: &RenderInfo) -> String {
    let mut h = String::from(HEAD);
    let _ = writeln!(h, "<title>{}</title>\n</head>\n<body>", escape(&info.sample_id));
    let _ = writeln!(h, "<h1>{}</h1>", escape(&info.sample_id));
    let _ = writeln!(h, "<p>predicted: <b>{}</b></p>", escape(&info.predicted_label));
    h.push_str("<table>\n");
    for (name, score) in &info.class_scores {
        let _ = writeln!(h, "<tr><td>{}</td><td>{score:.6}</td></tr>", escape(name));
    }
    h.push_str("</table>\n<p style=\"font-family:monospace;white-space:pre-wrap\">");
    for (i, c) in text.chars().enumerate() {
        let escaped = escape(c.encode_utf8(&mut [0; 4]));
        match quantized.levels.get(i) {
            Some(&level) if !c.is_whitespace() => {
                let (bg, fg) = quantized.palette.colors(level);
                let _ = write!(
                    h,
                    "<span style=\"background-color:{bg};color:{fg}\" data-level=\"{level}\">{escaped}</span>"
                );
            }
            _ => h.push_str(&escaped),
        }
    }
    h.push_str("</p>\n</body>\n</html>\n");
    h
}

pub fn render_html(text: &str, quantized: &QuantizedAttribution, info: &RenderInfo, out: &Path) -> Result<()> {
    fs::write(out, render_html_string(text, quantized, info)).map_err(|e| Error::io(out, e))
}

/// Index page linking rendered samples: `(file name, sample id, predicted label)`.
pub fn render_gallery(entries: &[(String, String, String)], out: &Path) -> Result<()> {
    let mut h = String::from(HEAD);
    h.push_str("<title>Grad-CAM gallery</title>\n</head>\n<body>\n<h1>Grad-CAM gallery</h1>\n<ul>\n");
    for (file, id, label) in entries {
        let _ = writeln!(
            h,
            "<li><a href=\"{}\">{}</a> ({})</li>",
            escape(file),
            escape(id),
            escape(label)
        );
    }
    h.push_str("</ul>\n</body>\n</html>\n");
    fs::write(out, h).map_err(|e| Error::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_table() {
        assert_eq!(quantize_level(0.0), 0);
        assert_eq!(quantize_level(0.37), 3);
        assert_eq!(quantize_level(1.0), 9);
        assert_eq!(quantize_level(0.7), 7);
        assert_eq!(quantize_level(0.999), 9);
    }

    proptest::proptest! {
        #[test]
        fn quantize_is_monotone(a in 0.0f32..=1.0, b in 0.0f32..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(quantize_level(lo) <= quantize_level(hi));
        }
    }

    #[test]
    fn zero_and_constant_maps() {
        assert_eq!(grad_cam_map(&[0.0; 6], &[1.0; 6], 2), vec![0.0; 3]);
        let mut m = grad_cam_map(&[2.0; 6], &[0.5; 6], 2);
        normalize(&mut m);
        assert_eq!(m, vec![1.0; 3]);
        let mut z = vec![0.0f32; 4];
        normalize(&mut z);
        assert_eq!(z, vec![0.0; 4]);
    }

    #[test]
    fn upsampling_repeats_and_clamps() {
        assert_eq!(upsample(&[1.0, 2.0], 3, 8), vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn palette_levels_map_to_shades() {
        assert_eq!(Palette::RedMd.colors(9), ("#ff0000", "#ffffff"));
        assert_eq!(Palette::BlueRo.colors(0), ("#73fcff", "#000000"));
        assert_eq!(Palette::BlueRo.colors(5).1, "#ffffff");
        assert_eq!(Palette::BlueRo.colors(4).1, "#000000");
    }

    #[test]
    fn spaces_and_unattributed_text_are_plain() {
        let q = QuantizedAttribution {
            levels: vec![9, 9, 9],
            palette: Palette::RedMd,
        };
        let info = RenderInfo {
            sample_id: "s<1>".into(),
            predicted_label: "MD".into(),
            class_scores: vec![("MD".into(), 0.9), ("RO".into(), 0.1)],
        };
        let html = render_html_string("a bc", &q, &info);
        assert_eq!(html.matches("<span").count(), 2);
        assert!(html.contains(">a</span> <span"));
        assert!(html.contains("</span>c</p>"));
        assert!(html.contains("s&lt;1&gt;"));
        let empty = QuantizedAttribution {
            levels: vec![],
            palette: Palette::BlueRo,
        };
        assert!(!render_html_string("ab", &empty, &info).contains("<span"));
    }
}
