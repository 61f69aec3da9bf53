use std::fs;
use std::path::PathBuf;

use serde_json::{json, Value};

use super::{ExperimentSpec, RunRecord};
use crate::error::{Error, Result};
use crate::learners::Aggregation;
use crate::protocols::StragglerModel;

const CONFIG_COLUMNS: [&str; 26] = [
    "experiment",
    "seed",
    "point",
    "scheme",
    "n",
    "k",
    "t",
    "shift",
    "sigma_n",
    "c",
    "s",
    "epsilon",
    "strategy",
    "noise_model",
    "stragglers",
    "lr",
    "batch_size",
    "epochs_per_round",
    "rounds",
    "aggregation",
    "loss",
    "task",
    "activation",
    "hidden",
    "features",
    "samples_per_node",
];

const EXTRA_CONFIG: [&str; 3] = ["difficulty", "eval_samples", "identical_nodes"];

pub const ROUND_COLUMNS: [&str; 17] = [
    "round",
    "loss_value",
    "accuracy",
    "aggregation_gap",
    "results_used",
    "messages",
    "elements",
    "expected_messages",
    "expected_elements",
    "encode_calls",
    "encode_elements",
    "decode_calls",
    "decode_elements",
    "train_calls",
    "train_elements",
    "i_L",
    "I_L",
];

pub const SUMMARY_COLUMNS: [&str; 14] = [
    "final_loss",
    "final_accuracy",
    "mean_aggregation_gap",
    "results_used",
    "setup_messages",
    "setup_elements",
    "round_messages",
    "round_elements",
    "expected_round_messages",
    "expected_round_elements",
    "i_L",
    "I_L",
    "worst_subset",
    "subsets_evaluated",
];

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

fn json_num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(format!("{v:?}"))
    }
}

fn stragglers(m: StragglerModel) -> String {
    match m {
        StragglerModel::None => "none".into(),
        StragglerModel::DropSlowest { count } => format!("drop-slowest:{count}"),
        StragglerModel::RandomDelay { seed, keep_n } => format!("random-delay:{seed}:{keep_n}"),
    }
}

fn kebab<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        Ok(Value::Object(m)) => m
            .get("kind")
            .and_then(Value::as_str)
            .map(String::from)
            .unwrap_or_else(|| Value::Object(m).to_string()),
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn strategy(spec: &ExperimentSpec) -> String {
    match spec.privacy.strategy {
        crate::privacy::SearchStrategy::RandomSampled { draws, seed } => {
            format!("random-sampled:{draws}:{seed}")
        }
        s => s.name().into(),
    }
}

fn config_values(spec: &ExperimentSpec, index: usize, rec: &RunRecord) -> Vec<String> {
    let sc = &spec.scheme;
    let hidden: Vec<String> = spec.model.hidden.iter().map(|h| h.to_string()).collect();
    let mut v = vec![
        spec.name.clone(),
        spec.seed.to_string(),
        index.to_string(),
        sc.kind.name().into(),
        sc.n.to_string(),
        sc.k.to_string(),
        rec.point.t.to_string(),
        f(sc.shift),
        f(rec.point.sigma_n),
        rec.point.c.to_string(),
        f(spec.privacy.s),
        f(spec.privacy.epsilon),
        strategy(spec),
        kebab(&spec.privacy.noise_model),
        stragglers(spec.network.stragglers),
        f(sc.lr),
        sc.batch_size.to_string(),
        sc.epochs_per_round.to_string(),
        sc.rounds.to_string(),
        match sc.aggregation {
            Aggregation::FedAvg => "fed-avg".into(),
            Aggregation::CoordMedian => "coord-median".into(),
        },
        kebab(&rec.scheme.loss),
        kebab(&spec.data.task),
        kebab(&spec.model.activation),
        hidden.join(";"),
        spec.data.features.to_string(),
        spec.data.samples_per_node.to_string(),
    ];
    v.extend([
        f(spec.data.difficulty),
        spec.data.eval_samples.to_string(),
        spec.data.identical_nodes.to_string(),
    ]);
    v
}

fn header(extra: &[&str]) -> String {
    let cols: Vec<&str> = CONFIG_COLUMNS
        .iter()
        .chain(&EXTRA_CONFIG)
        .chain(extra)
        .copied()
        .collect();
    cols.join(",")
}

fn leak_cols(rec: &RunRecord) -> (String, String) {
    match &rec.leakage {
        Some(l) => (f(l.i_l), f(l.total)),
        None => (String::new(), String::new()),
    }
}

fn rounds_csv(spec: &ExperimentSpec, records: &[RunRecord]) -> String {
    let mut out = header(&ROUND_COLUMNS);
    out.push('\n');
    for (i, rec) in records.iter().enumerate() {
        let cfg = config_values(spec, i, rec);
        let (il, big) = leak_cols(rec);
        for r in &rec.run.rounds {
            let mut row = cfg.clone();
            row.extend([
                r.round.to_string(),
                f(r.loss),
                opt(r.accuracy),
                opt(r.aggregation_gap),
                r.results_used.to_string(),
                r.bus.count().to_string(),
                r.bus.volume().to_string(),
                rec.expected.round_messages.to_string(),
                rec.expected.round_elements.to_string(),
                r.encode_ops.calls.to_string(),
                r.encode_ops.elements.to_string(),
                r.decode_ops.calls.to_string(),
                r.decode_ops.elements.to_string(),
                r.train_ops.calls.to_string(),
                r.train_ops.elements.to_string(),
                il.clone(),
                big.clone(),
            ]);
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

fn mean_gap(rec: &RunRecord) -> Option<f64> {
    let gaps: Vec<f64> = rec
        .run
        .rounds
        .iter()
        .filter_map(|r| r.aggregation_gap)
        .collect();
    (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
}

fn summary_csv(spec: &ExperimentSpec, records: &[RunRecord]) -> String {
    let mut out = header(&SUMMARY_COLUMNS);
    out.push('\n');
    for (i, rec) in records.iter().enumerate() {
        let last = rec.run.rounds.last().expect("at least one round");
        let (il, big) = leak_cols(rec);
        let (subset, evaluated) = match &rec.leakage {
            Some(l) => (
                l.worst_subset
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
                l.subsets_evaluated.to_string(),
            ),
            None => (String::new(), String::new()),
        };
        let mut row = config_values(spec, i, rec);
        row.extend([
            f(last.loss),
            opt(last.accuracy),
            opt(mean_gap(rec)),
            last.results_used.to_string(),
            rec.run.setup.count().to_string(),
            rec.run.setup.volume().to_string(),
            last.bus.count().to_string(),
            last.bus.volume().to_string(),
            rec.expected.round_messages.to_string(),
            rec.expected.round_elements.to_string(),
            il,
            big,
            subset,
            evaluated,
        ]);
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn summary_json(spec: &ExperimentSpec, records: &[RunRecord]) -> Result<String> {
    let mut resolved = serde_json::to_value(spec).map_err(|e| Error::Internal(e.to_string()))?;
    if let Value::Object(m) = &mut resolved {
        m.remove("output_dir");
    }
    let runs: Vec<Value> = records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let config: serde_json::Map<String, Value> = CONFIG_COLUMNS
                .iter()
                .chain(&EXTRA_CONFIG)
                .zip(config_values(spec, i, rec))
                .map(|(k, v)| (k.to_string(), Value::String(v)))
                .collect();
            let last = rec.run.rounds.last().expect("at least one round");
            let leakage = rec.leakage.as_ref().map(|l| {
                json!({
                    "i_L": json_num(l.i_l),
                    "I_L": json_num(l.total),
                    "worst_subset": l.worst_subset,
                    "strategy": l.strategy,
                    "subsets_evaluated": l.subsets_evaluated,
                })
            });
            json!({
                "config": config,
                "final_loss": json_num(last.loss),
                "final_accuracy": last.accuracy.map(json_num),
                "mean_aggregation_gap": mean_gap(rec).map(json_num),
                "rounds": rec.run.rounds.iter().map(|r| json!({
                    "round": r.round,
                    "loss": json_num(r.loss),
                    "accuracy": r.accuracy.map(json_num),
                    "aggregation_gap": r.aggregation_gap.map(json_num),
                    "messages": r.bus.count(),
                    "elements": r.bus.volume(),
                })).collect::<Vec<_>>(),
                "setup_messages": rec.run.setup.count(),
                "setup_elements": rec.run.setup.volume(),
                "expected_cost": rec.expected,
                "leakage": leakage,
            })
        })
        .collect();
    let doc = json!({ "spec": resolved, "runs": runs });
    let mut text =
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub(super) fn write_all(spec: &ExperimentSpec, records: &[RunRecord]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&spec.output_dir)?;
    let files = [
        ("rounds.csv", rounds_csv(spec, records)),
        ("summary.csv", summary_csv(spec, records)),
        ("summary.json", summary_json(spec, records)?),
    ];
    let mut paths = Vec::new();
    for (name, body) in files {
        let path = spec.output_dir.join(name);
        fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}
