//! Experiment orchestration: sweep expansion, runs, and metrics files.
//!
//! `run_experiment` writes three files into the output directory:
//! `rounds.csv` (one row per sweep point and round), `summary.csv` (one row
//! per sweep point) and `summary.json` (the resolved spec plus one record per
//! sweep point). Every row repeats the full resolved configuration.

mod output;
mod spec;

use std::path::PathBuf;

pub use output::{ROUND_COLUMNS, SUMMARY_COLUMNS};
pub use spec::{
    DataSection, ExperimentSpec, ModelSection, NetworkSection, PrivacySection, SchemeSection,
    SweepPoint,
};

use crate::error::Result;
use crate::interpolation::CodingPlan;
use crate::learners::{Batch, ModelParams};
use crate::privacy::{worst_case_leakage, LeakageReport, PrivacyConfig};
use crate::protocols::{
    expected_cost, run_scheme, CostInputs, CostModel, NetworkConfig, ProtocolRun, SchemeConfig,
    SchemeData,
};
use crate::seed::SeedTree;

/// Everything computed for one sweep point.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub point: SweepPoint,
    pub scheme: SchemeConfig,
    pub network: NetworkConfig,
    pub leakage: Option<LeakageReport>,
    pub expected: CostModel,
    pub run: ProtocolRun,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub files: Vec<PathBuf>,
}

/// Leakage bound for coded schemes; unbounded when no noise is added.
fn leakage_for(
    spec: &ExperimentSpec,
    plan: &CodingPlan,
    cfg: &PrivacyConfig,
) -> Result<Option<LeakageReport>> {
    if !spec.scheme.kind.is_coded() {
        return Ok(None);
    }
    if cfg.t == 0 || cfg.sigma_n == 0.0 {
        return Ok(Some(LeakageReport {
            i_l: f64::INFINITY,
            total: f64::INFINITY,
            worst_subset: Vec::new(),
            strategy: spec.privacy.strategy,
            subsets_evaluated: 0,
        }));
    }
    worst_case_leakage(plan, cfg, spec.privacy.strategy).map(Some)
}

fn datasets(spec: &ExperimentSpec, root: SeedTree) -> Result<SchemeData> {
    let d = &spec.data;
    let n = spec.scheme.n;
    let train = d.task.generate(
        d.samples_per_node * n,
        d.features,
        d.difficulty,
        root.child("train", 0).value(),
    )?;
    let eval = d.task.generate(
        d.eval_samples,
        d.features,
        d.difficulty,
        root.child("eval", 0).value(),
    )?;
    let per_node: Vec<Batch> = if d.identical_nodes {
        vec![train.slice(0, d.samples_per_node)?; n]
    } else {
        train.partition(n)?
    };
    Ok(SchemeData {
        centralized: train,
        per_node,
        eval,
    })
}

/// Runs one sweep point without writing anything.
pub fn run_point(spec: &ExperimentSpec, point: SweepPoint) -> Result<RunRecord> {
    let sc = &spec.scheme;
    let root = SeedTree::new(spec.seed);
    let plan = CodingPlan::new(sc.k, point.t, sc.n, sc.shift)?;
    let privacy = PrivacyConfig {
        k: sc.k,
        t: point.t,
        sigma_n: point.sigma_n,
        s: spec.privacy.s,
        c: point.c,
        epsilon: spec.privacy.epsilon,
        noise_model: spec.privacy.noise_model,
    };
    let leakage = leakage_for(spec, &plan, &privacy)?;
    let data = datasets(spec, root)?;
    let mut widths = vec![spec.data.features];
    widths.extend(&spec.model.hidden);
    widths.push(spec.data.task.output_width(spec.data.features));
    let init = ModelParams::init(
        &widths,
        spec.model.activation,
        root.child("model", 0).value(),
    )?;
    let network = NetworkConfig::new(
        sc.n,
        spec.network.stragglers,
        root.child("network", 0).value(),
    );
    let scheme = SchemeConfig {
        scheme: sc.kind,
        plan,
        privacy,
        lr: sc.lr,
        batch_size: sc.batch_size,
        epochs_per_round: sc.epochs_per_round,
        rounds: sc.rounds,
        aggregation: sc.aggregation,
        loss: spec.data.task.loss(),
    };
    let run = run_scheme(&scheme, &network, &data, &init)?;
    let expected = expected_cost(
        sc.kind,
        &CostInputs {
            n: sc.n,
            k: sc.k,
            model: init.param_count(),
            samples: data.centralized.rows(),
            features: spec.data.features,
            target_width: data.centralized.targets.shape()[1],
            outputs: init.output_width(),
            epochs: sc.epochs_per_round,
        },
    );
    Ok(RunRecord {
        point,
        scheme,
        network,
        leakage,
        expected,
        run,
    })
}

/// Runs every sweep point and writes the metrics files.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let records = spec
        .sweep()
        .into_iter()
        .map(|p| run_point(spec, p))
        .collect::<Result<Vec<_>>>()?;
    let files = output::write_all(spec, &records)?;
    Ok(ExperimentOutcome { records, files })
}
