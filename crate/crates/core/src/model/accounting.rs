//! Exact parameter counts per tensor, computed from the configuration alone.

use serde::Serialize;

use crate::nn::{AttentionParams, LstmParams};

use super::config::{AdaptationMode, ModelConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TensorCount {
    pub name: String,
    pub shape: Vec<usize>,
    pub count: usize,
    /// True for tensors that only exist to condition on the speaker.
    pub adaptation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamCounts {
    pub mode: AdaptationMode,
    pub tensors: Vec<TensorCount>,
    pub total: usize,
    /// Total of the same architecture in base mode.
    pub base_total: usize,
    /// Parameters added for speaker conditioning, over all speakers.
    pub adaptation_total: usize,
    /// Parameters whose count grows with one more speaker.
    pub per_speaker: usize,
    /// `per_speaker / base_total`.
    pub per_speaker_fraction: f64,
}

fn tensor(name: &str, shape: &[usize], adaptation: bool) -> TensorCount {
    TensorCount {
        name: name.to_owned(),
        shape: shape.to_vec(),
        count: shape.iter().product(),
        adaptation,
    }
}

fn lstm(out: &mut Vec<TensorCount>, name: &str, d_in: usize, d_h: usize) {
    out.push(tensor(&format!("{name}.weight"), &[4 * d_h, d_in + d_h], false));
    out.push(tensor(&format!("{name}.bias"), &[4 * d_h], false));
    debug_assert_eq!(
        LstmParams::num_params(d_in, d_h),
        4 * d_h * (d_in + d_h) + 4 * d_h
    );
}

/// Tensor list in the same order and with the same names as `Seq2Seq::init`.
pub fn count_params(config: &ModelConfig) -> ParamCounts {
    let c = config;
    let (d, h, a) = (c.d_emb, c.d_hidden, c.d_attn);
    let v_t = c.trg_vocab;
    let s = c.num_speakers;
    let spk_tok = c.mode == AdaptationMode::SpkToken;

    let mut t = Vec::new();
    t.push(tensor("embed.src", &[c.src_vocab, d], false));
    t.push(tensor("embed.trg", &[v_t, d], false));
    if spk_tok {
        t.push(tensor("embed.trg[speaker rows]", &[s, d], true));
    }
    lstm(&mut t, "encoder.fw", d, h);
    lstm(&mut t, "encoder.bw", d, h);
    lstm(&mut t, "decoder", d + 2 * h, h);
    t.push(tensor("attention.v", &[a], false));
    t.push(tensor("attention.w_enc", &[a, 2 * h], false));
    t.push(tensor("attention.w_query", &[a, h], false));
    t.push(tensor("attention.bias", &[a], false));
    debug_assert_eq!(AttentionParams::num_params(2 * h, h, a), a + a * 3 * h + a);
    t.push(tensor("output.w_oh", &[d, h], false));
    t.push(tensor("output.w_oc", &[d, 2 * h], false));
    t.push(tensor("output.w_ow", &[d, d], false));
    t.push(tensor("output.b_o", &[d], false));
    t.push(tensor("output.b_t", &[v_t], false));
    if spk_tok {
        t.push(tensor("output.b_t[speaker rows]", &[s], true));
    }
    let per_speaker = match c.mode {
        AdaptationMode::Base => 0,
        AdaptationMode::SpkToken => d + 1,
        AdaptationMode::FullBias => {
            t.push(tensor("speaker.bias", &[s, v_t], true));
            v_t
        }
        AdaptationMode::FactBias => {
            t.push(tensor("speaker.weights", &[s, c.rank], true));
            t.push(tensor("speaker.centroids", &[c.rank, v_t], true));
            c.rank
        }
    };
    let total: usize = t.iter().map(|x| x.count).sum();
    let adaptation_total: usize = t.iter().filter(|x| x.adaptation).map(|x| x.count).sum();
    let base_total = total - adaptation_total;
    ParamCounts {
        mode: c.mode,
        tensors: t,
        total,
        base_total,
        adaptation_total,
        per_speaker,
        per_speaker_fraction: per_speaker as f64 / base_total as f64,
    }
}

/// `1 − r(|S|+|V|)/(|S|·|V|)`: the saving of the factored bias over one full
/// bias vector per speaker.
pub fn factored_reduction(num_speakers: usize, vocab: usize, rank: usize) -> f64 {
    let s = num_speakers as f64;
    let v = vocab as f64;
    1.0 - rank as f64 * (s + v) / (s * v)
}

/// Plain-text table with one row per tensor followed by the totals.
pub fn format_counts(counts: &ParamCounts) -> String {
    let mut out = format!("{:<28} {:>18} {:>12}\n", "tensor", "shape", "params");
    for t in &counts.tensors {
        let shape = t
            .shape
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        let mark = if t.adaptation { " *" } else { "" };
        out.push_str(&format!("{:<28} {:>18} {:>12}{mark}\n", t.name, shape, t.count));
    }
    out.push_str(&format!("{:<47} {:>12}\n", "total", counts.total));
    out.push_str(&format!("{:<47} {:>12}\n", "base total", counts.base_total));
    out.push_str(&format!("{:<47} {:>12}\n", "speaker adaptation (*)", counts.adaptation_total));
    out.push_str(&format!("{:<47} {:>12}\n", "per speaker", counts.per_speaker));
    out.push_str(&format!(
        "{:<47} {:>11.4}%\n",
        "per speaker / base total",
        100.0 * counts.per_speaker_fraction
    ));
    out
}
