use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::bleu::BleuReport;
use super::bootstrap::BootstrapResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub name: String,
    pub bleu: Option<BleuReport>,
    pub perplexity: Option<f64>,
    pub probe_accuracy: Option<f64>,
    pub sentences: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub better: String,
    pub worse: String,
    pub result: BootstrapResult,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_config: serde_json::Value,
    pub systems: Vec<SystemReport>,
    pub pairwise: Vec<PairwiseTest>,
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("system\tsentences\tbleu\tp1\tp2\tp3\tp4\tbp\tperplexity\tprobe_accuracy\n");
        for s in &self.systems {
            let (bleu, ps, bp) = match &s.bleu {
                Some(b) => (
                    format!("{:.2}", b.bleu),
                    b.precisions.iter().map(|p| opt(*p, 4)).collect::<Vec<_>>(),
                    format!("{:.4}", b.brevity_penalty),
                ),
                None => ("-".into(), vec!["-".into(); 4], "-".into()),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.name,
                s.sentences,
                bleu,
                ps.join("\t"),
                bp,
                opt(s.perplexity, 3),
                opt(s.probe_accuracy, 4)
            );
        }
        if !self.pairwise.is_empty() {
            out.push_str("\nbetter\tworse\tbleu_better\tbleu_worse\tp_value\tsignificant\n");
            for p in &self.pairwise {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{:.2}\t{:.2}\t{:.4}\t{}",
                    p.better,
                    p.worse,
                    p.result.bleu_a,
                    p.result.bleu_b,
                    p.result.p_value,
                    p.result.significant()
                );
            }
        }
        out
    }

    /// Per-system probe accuracy as a two-column table, one row per system, with a bar.
    pub fn probe_table(&self) -> String {
        let mut out = String::from("system\taccuracy\n");
        for s in &self.systems {
            if let Some(a) = s.probe_accuracy {
                let bar = "#".repeat((a * 40.0).round() as usize);
                let _ = writeln!(out, "{}\t{a:.4}\t{bar}", s.name);
            }
        }
        out
    }

    pub fn write(&self, json: impl AsRef<Path>, tsv: impl AsRef<Path>) -> Result<()> {
        let (j, t) = (json.as_ref(), tsv.as_ref());
        std::fs::write(j, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(j, e))?;
        std::fs::write(t, self.to_tsv()).map_err(|e| Error::io(t, e))
    }
}
