//! Tab-separated evaluation reports: one header line and one row per scene,
//! with the parameters used. Ratios are plain decimals; `NA` marks
//! undefined values.

use std::fmt::Write;

use super::{DetMetrics, RoadMetrics, SegMetrics};

pub const ROAD_HEADER: &str =
    "scene\tgsd_m\tbuffer_m\tcompleteness\tcorrectness\tquality\tmatched_pred_m\tpred_m\tmatched_ref_m\tref_m";
pub const SEG_HEADER: &str = "scene\tprecision\trecall\tiou\tf1\ttp\tfp\tfn";
pub const DET_HEADER: &str = "scene\tiou_threshold\tprecision\trecall\tap\ttp\tfp\tfn";

fn ratio(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

pub fn road_row(scene: &str, m: &RoadMetrics) -> String {
    format!(
        "{scene}\t{}\t{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}",
        m.gsd_m,
        m.buffer_m,
        ratio(m.completeness),
        ratio(m.correctness),
        ratio(m.quality),
        m.matched_pred_len,
        m.pred_len,
        m.matched_ref_len,
        m.ref_len
    )
}

pub fn seg_row(scene: &str, m: &SegMetrics) -> String {
    format!(
        "{scene}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}",
        m.precision, m.recall, m.iou, m.f1, m.tp, m.fp, m.fn_
    )
}

pub fn det_row(scene: &str, m: &DetMetrics) -> String {
    format!(
        "{scene}\t{}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}",
        m.iou_threshold,
        m.precision,
        m.recall,
        ratio(m.ap),
        m.tp,
        m.fp,
        m.fn_
    )
}

/// Header plus rows, scenes sorted by name so the output does not depend on
/// evaluation order.
pub fn table<M>(header: &str, rows: &[(String, M)], fmt: impl Fn(&str, &M) -> String) -> String {
    let mut sorted: Vec<&(String, M)> = rows.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut s = String::new();
    writeln!(s, "{header}").unwrap();
    for (name, m) in sorted {
        writeln!(s, "{}", fmt(name, m)).unwrap();
    }
    s
}
