//! CSV tables and JSON documents emitted by the commands.

use std::fmt::Write;

use chaosnet_core::pipeline::{ks_row_labels, QuartileReport, TableReport, KS_REGIMES};
use chaosnet_core::MetricsReport;
use serde::Serialize;
use serde_json::{json, Value};

pub fn history_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        writeln!(s, "{},{l}", i + 1).unwrap();
    }
    s
}

pub const METRIC_COLUMNS: &str = "t_nc,t_c,f_nc,f_c,accuracy,precision,recall,balanced_accuracy";

fn metric_fields(m: &MetricsReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        m.t_nc, m.t_c, m.f_nc, m.f_c, m.accuracy, m.precision, m.recall, m.balanced_accuracy
    )
}

pub fn metrics_json(m: &MetricsReport) -> Value {
    serde_json::to_value(m).expect("plain struct")
}

/// Name of a regime tag: the KS interval when the tag is one, otherwise "all".
pub fn regime_name(tag: u8, ks: bool) -> (String, String) {
    match KS_REGIMES.get(tag as usize) {
        Some(r) if ks => (r.range_label(), r.behaviour.to_string()),
        _ => (format!("tag {tag}"), "all".into()),
    }
}

pub fn regimes_json(rows: &[(u8, MetricsReport)], ks: bool) -> Value {
    Value::Array(
        rows.iter()
            .map(|(tag, m)| {
                let (range, behaviour) = regime_name(*tag, ks);
                let mut v = metrics_json(m);
                let obj = v.as_object_mut().unwrap();
                obj.insert("tag".into(), json!(tag));
                obj.insert("range".into(), json!(range));
                obj.insert("behaviour".into(), json!(behaviour));
                v
            })
            .collect(),
    )
}

pub fn metrics_csv(overall: &MetricsReport, regimes: Option<(&[(u8, MetricsReport)], bool)>) -> String {
    let mut s = format!("scope,{METRIC_COLUMNS}\n");
    writeln!(s, "overall,{}", metric_fields(overall)).unwrap();
    if let Some((rows, ks)) = regimes {
        for (tag, m) in rows {
            writeln!(s, "{},{}", regime_name(*tag, ks).0, metric_fields(m)).unwrap();
        }
    }
    s
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else {
        String::new()
    }
}

/// Mean accuracies in the table's own layout.
pub fn table_csv(t: &TableReport) -> String {
    if t.title.starts_with("table3") {
        return table3_csv(t);
    }
    let first = if t.title == "appendixA" { "setting" } else { "architecture" };
    let mut s = format!("{first},{},seeds\n", t.columns.join(","));
    for row in &t.rows {
        let cells: Vec<String> = row.mean.iter().map(|&v| fmt(v)).collect();
        writeln!(s, "{},{},{}", row.label, cells.join(","), row.seeds.len()).unwrap();
    }
    s
}

fn table3_csv(t: &TableReport) -> String {
    let mut s = String::from("alpha_range,behaviour,accuracy,seeds\n");
    let row = t.rows.first();
    for (c, label) in ks_row_labels().iter().enumerate() {
        let (range, behaviour) = label.split_once(' ').unwrap_or((label.as_str(), ""));
        let (range, behaviour) = if label == "overall" { ("all", "overall") } else { (range, behaviour) };
        let v = row.and_then(|r| r.mean.get(c)).copied().unwrap_or(f64::NAN);
        writeln!(s, "{range},{behaviour},{},{}", fmt(v), row.map_or(0, |r| r.seeds.len())).unwrap();
    }
    s
}

/// One line per (row, seed) with full precision.
pub fn table_seeds_csv(t: &TableReport) -> String {
    let mut s = format!("row,seed,{}\n", t.columns.join(","));
    for row in &t.rows {
        for (seed, vals) in row.seeds.iter().zip(&row.per_seed) {
            let cells: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            writeln!(s, "{},{seed},{}", row.label, cells.join(",")).unwrap();
        }
    }
    s
}

pub fn quartile_csv(q: &QuartileReport) -> String {
    let mut s = format!("{},q1,median,q3,cycles\n", q.x_name);
    for r in &q.rows {
        writeln!(s, "{},{},{},{},{}", r.x, fmt(r.q1), fmt(r.median), fmt(r.q3), r.accuracies.len()).unwrap();
    }
    s
}

pub fn quartile_cycles_csv(q: &QuartileReport) -> String {
    let mut s = format!("{},cycle,accuracy\n", q.x_name);
    for r in &q.rows {
        for (c, a) in r.cycles.iter().zip(&r.accuracies) {
            writeln!(s, "{},{c},{a}", r.x).unwrap();
        }
    }
    s
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable report")
}

#[cfg(test)]
mod tests {
    use super::*;
    use chaosnet_core::pipeline::{QuartileRow, TableRow};

    #[test]
    fn metrics_schema() {
        let m = MetricsReport::from_counts(3, 5, 1, 1);
        let v = metrics_json(&m);
        for k in METRIC_COLUMNS.split(',') {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["accuracy"], json!(80.0));
        let csv = metrics_csv(&m, Some((&[(0, m), (5, m)], true)));
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.contains("[120,130],"));
    }

    #[test]
    fn table_layouts() {
        let t = TableReport {
            title: "table1".into(),
            columns: vec!["logistic".into(), "sine-circle".into()],
            rows: vec![TableRow { label: "LKCNN".into(), seeds: vec![0, 1], per_seed: vec![vec![98.0, 90.0], vec![99.0, 88.0]], mean: vec![98.5, 89.0] }],
            failures: vec![],
        };
        assert_eq!(table_csv(&t), "architecture,logistic,sine-circle,seeds\nLKCNN,98.50,89.00,2\n");
        assert_eq!(table_seeds_csv(&t).lines().count(), 3);
        let cols = ks_row_labels();
        let t3 = TableReport {
            title: "table3-x".into(),
            columns: cols.clone(),
            rows: vec![TableRow { label: "lkcnn".into(), seeds: vec![0], per_seed: vec![vec![50.0; 7]], mean: vec![50.0; 7] }],
            failures: vec![],
        };
        let csv = table_csv(&t3);
        assert_eq!(csv.lines().count(), 8);
        assert!(csv.contains("[18,22],periodic,50.00,1"));
        assert!(csv.ends_with("all,overall,50.00,1\n"));
    }

    #[test]
    fn quartile_columns() {
        let q = QuartileReport {
            title: "fig9".into(),
            x_name: "fraction".into(),
            rows: vec![QuartileRow { x: 0.1, cycles: vec![0, 1, 2], accuracies: vec![1.0, 2.0, 3.0], q1: 1.5, median: 2.0, q3: 2.5 }],
            failures: vec![],
        };
        assert_eq!(quartile_csv(&q), "fraction,q1,median,q3,cycles\n0.1,1.50,2.00,2.50,3\n");
    }
}
