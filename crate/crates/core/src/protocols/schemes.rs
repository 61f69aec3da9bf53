//! Round loops of the coded and uncoded schemes.

use super::network::{select_fastest, NetworkConfig};
use super::trace::{Bus, Endpoint, OpCount, Phase, ProtocolRun, RoundTrace};
use super::{SchemeConfig, SchemeKind};
use crate::codec::{decode, decode_to_extent, encode_padded, NoiseSpec};
use crate::error::{invalid, Result};
use crate::learners::{
    accuracy, aggregate, loss_and_grad, train_local, Aggregation, Batch, Loss, ModelParams,
};
use crate::seed::SeedTree;
use crate::tensor::Tensor;

/// Training data as each scheme sees it.
#[derive(Clone, Debug)]
pub struct SchemeData {
    /// The master's dataset (centralized schemes).
    pub centralized: Batch,
    /// One local dataset per node (decentralized schemes).
    pub per_node: Vec<Batch>,
    /// Held-out batch the per-round metrics are computed on.
    pub eval: Batch,
}

fn evaluate(model: &ModelParams, eval: &Batch, loss: Loss) -> Result<(f64, Option<f64>)> {
    let out = model.forward(&eval.inputs)?;
    let (value, _) = loss.evaluate(&out, &eval.targets)?;
    let acc = match loss {
        Loss::SoftmaxCrossEntropy => Some(accuracy(&out, &eval.targets)?),
        _ => None,
    };
    Ok((value, acc))
}

fn relative_gap(decoded: &Tensor, reference: &Tensor) -> Result<f64> {
    let diff = decoded.max_abs_diff(reference)?;
    let scale = reference.max_abs();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Row-count weights over `nodes`, or `None` for rules that take none.
fn row_weights(data: &[Batch], nodes: &[usize], rule: Aggregation) -> Option<Vec<f64>> {
    match rule {
        Aggregation::FedAvg => {
            let total: usize = nodes.iter().map(|&i| data[i].rows()).sum();
            Some(
                nodes
                    .iter()
                    .map(|&i| data[i].rows() as f64 / total as f64)
                    .collect(),
            )
        }
        Aggregation::CoordMedian => None,
    }
}

fn check_per_node(cfg: &SchemeConfig, net: &NetworkConfig, data: &SchemeData) -> Result<()> {
    cfg.validate(net)?;
    if data.per_node.len() != net.n {
        return invalid(format!(
            "{} local datasets for {} nodes",
            data.per_node.len(),
            net.n
        ));
    }
    Ok(())
}

struct RoundState {
    bus: Bus,
    encode_ops: OpCount,
    decode_ops: OpCount,
    train_ops: OpCount,
}

impl RoundState {
    fn new() -> Self {
        RoundState {
            bus: Bus::default(),
            encode_ops: OpCount::default(),
            decode_ops: OpCount::default(),
            train_ops: OpCount::default(),
        }
    }

    fn finish(
        self,
        round: usize,
        model: &ModelParams,
        data: &SchemeData,
        loss: Loss,
        gap: Option<f64>,
        results_used: usize,
    ) -> Result<RoundTrace> {
        let (value, acc) = evaluate(model, &data.eval, loss)?;
        Ok(RoundTrace {
            round,
            bus: self.bus,
            encode_ops: self.encode_ops,
            decode_ops: self.decode_ops,
            train_ops: self.train_ops,
            decoded_model: model.flatten(),
            loss: value,
            accuracy: acc,
            aggregation_gap: gap,
            results_used,
        })
    }
}

fn broadcast(bus: &mut Bus, n: usize, elements: usize) {
    for j in 0..n {
        bus.send(
            Endpoint::Master,
            Endpoint::Node(j),
            elements,
            Phase::ModelBroadcast,
        );
    }
}

/// Secure training over centralized data. The master encodes its dataset
/// once; for every group of `K` samples the workers run the model on their
/// encoded sample, the master decodes the `K` outputs, takes the loss
/// gradient at the decoded outputs, back-propagates it through its own
/// plaintext forward pass and steps.
pub fn run_dlcd_secure_training(
    cfg: &SchemeConfig,
    net: &NetworkConfig,
    data: &SchemeData,
    init: &ModelParams,
) -> Result<ProtocolRun> {
    cfg.validate(net)?;
    let plan = &cfg.plan;
    let (n, k) = (plan.n, plan.k);
    let set = &data.centralized;
    let root = SeedTree::new(net.seed);
    let noise = NoiseSpec::new(
        cfg.privacy.sigma_n,
        plan.t,
        root.child("dataset", 0).value(),
    );
    let encoding = encode_padded(&set.inputs, plan, &noise)?;
    let mut setup = Bus::default();
    let mut setup_encode_ops = OpCount::default();
    setup_encode_ops.record(set.inputs.len());
    for share in &encoding.shares {
        setup.send(
            Endpoint::Master,
            Endpoint::Node(share.node_index),
            share.payload.len(),
            Phase::DataShare,
        );
    }
    let groups = set.rows().div_ceil(k);
    let w = init.param_count();
    let mut model = init.clone();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let fastest = select_fastest(net, r)?;
        let mut st = RoundState::new();
        for _ in 0..cfg.epochs_per_round {
            for g in 0..groups {
                broadcast(&mut st.bus, n, w);
                let mut outputs = Vec::with_capacity(n);
                for share in &encoding.shares {
                    let x = share.payload.axis_slice(g)?;
                    let y = model.forward(&x)?;
                    st.train_ops.record(x.len());
                    st.bus.send(
                        Endpoint::Node(share.node_index),
                        Endpoint::Master,
                        y.len(),
                        Phase::InferenceResult,
                    );
                    outputs.push(y);
                }
                let results: Vec<(f64, Tensor)> = fastest
                    .iter()
                    .map(|&j| (plan.beta(j), outputs[j].clone()))
                    .collect();
                let start = g * k;
                let end = (start + k).min(set.rows());
                let decoded = decode(&results, plan)?.truncate(end - start)?;
                st.decode_ops.record(decoded.len());
                let batch = set.slice(start, end)?;
                let cache = model.forward_cached(&batch.inputs)?;
                let (_, dy) = cfg.loss.evaluate(&decoded, &batch.targets)?;
                model = model.sgd_step(&model.backward(&cache, &dy)?, cfg.lr)?;
            }
        }
        rounds.push(st.finish(r, &model, data, cfg.loss, None, fastest.len())?);
    }
    Ok(ProtocolRun {
        setup,
        setup_encode_ops,
        rounds,
    })
}

/// Plaintext single-machine training with the DLCD schedule: one SGD step per
/// consecutive group of `K` samples.
pub fn run_centralized_reference(
    cfg: &SchemeConfig,
    data: &SchemeData,
    init: &ModelParams,
) -> Result<ProtocolRun> {
    let k = cfg.plan.k;
    let set = &data.centralized;
    let groups = set.rows().div_ceil(k);
    let mut model = init.clone();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let mut st = RoundState::new();
        for _ in 0..cfg.epochs_per_round {
            for g in 0..groups {
                let batch = set.slice(g * k, ((g + 1) * k).min(set.rows()))?;
                st.train_ops.record(batch.inputs.len());
                let (_, grads) = loss_and_grad(&model, &batch, cfg.loss)?;
                model = model.sgd_step(&grads, cfg.lr)?;
            }
        }
        rounds.push(st.finish(r, &model, data, cfg.loss, None, 1)?);
    }
    Ok(ProtocolRun {
        setup: Bus::default(),
        setup_encode_ops: OpCount::default(),
        rounds,
    })
}

/// Data-parallel training: the master shards its data once, then every round
/// each worker returns the full gradient of its shard and the master steps
/// on the row-weighted mean of the gradients it received in time.
pub fn run_uncoded_dlcd(
    cfg: &SchemeConfig,
    net: &NetworkConfig,
    data: &SchemeData,
    init: &ModelParams,
) -> Result<ProtocolRun> {
    cfg.validate(net)?;
    let n = net.n;
    let shards = data.centralized.partition(n)?;
    let mut setup = Bus::default();
    for (j, s) in shards.iter().enumerate() {
        setup.send(
            Endpoint::Master,
            Endpoint::Node(j),
            s.elements(),
            Phase::DataShare,
        );
    }
    let w = init.param_count();
    let mut model = init.clone();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let fastest = select_fastest(net, r)?;
        let weights = row_weights(&shards, &fastest, Aggregation::FedAvg).expect("fedavg weights");
        let mut st = RoundState::new();
        for _ in 0..cfg.epochs_per_round {
            broadcast(&mut st.bus, n, w);
            let mut grads = Vec::with_capacity(n);
            for (j, shard) in shards.iter().enumerate() {
                let (_, g) = loss_and_grad(&model, shard, cfg.loss)?;
                st.train_ops.record(shard.inputs.len());
                st.bus.send(
                    Endpoint::Node(j),
                    Endpoint::Master,
                    w,
                    Phase::GradientReturn,
                );
                grads.push(g.flatten());
            }
            let kept: Vec<Tensor> = fastest.iter().map(|&j| grads[j].clone()).collect();
            let mean = aggregate(&kept, Aggregation::FedAvg, Some(&weights))?;
            model = model.sgd_step(&model.unflatten(&mean)?, cfg.lr)?;
        }
        rounds.push(st.finish(r, &model, data, cfg.loss, None, fastest.len())?);
    }
    Ok(ProtocolRun {
        setup,
        setup_encode_ops: OpCount::default(),
        rounds,
    })
}

fn local_round(
    cfg: &SchemeConfig,
    params: &ModelParams,
    data: &Batch,
    ops: &mut OpCount,
) -> Result<ModelParams> {
    ops.record(data.inputs.len() * cfg.epochs_per_round);
    train_local(
        params,
        data,
        cfg.loss,
        cfg.lr,
        cfg.batch_size,
        cfg.epochs_per_round,
    )
}

/// Federated averaging in plaintext.
pub fn run_uncoded_dldd(
    cfg: &SchemeConfig,
    net: &NetworkConfig,
    data: &SchemeData,
    init: &ModelParams,
) -> Result<ProtocolRun> {
    check_per_node(cfg, net, data)?;
    let n = net.n;
    let w = init.param_count();
    let mut model = init.clone();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let fastest = select_fastest(net, r)?;
        let mut st = RoundState::new();
        broadcast(&mut st.bus, n, w);
        let mut locals = Vec::with_capacity(n);
        for (j, local) in data.per_node.iter().enumerate() {
            let trained = local_round(cfg, &model, local, &mut st.train_ops)?;
            st.bus
                .send(Endpoint::Node(j), Endpoint::Master, w, Phase::ModelReturn);
            locals.push(trained.flatten());
        }
        let kept: Vec<Tensor> = fastest.iter().map(|&j| locals[j].clone()).collect();
        let weights = row_weights(&data.per_node, &fastest, cfg.aggregation);
        let global = aggregate(&kept, cfg.aggregation, weights.as_deref())?;
        model = model.unflatten(&global)?;
        rounds.push(st.finish(r, &model, data, cfg.loss, None, fastest.len())?);
    }
    Ok(ProtocolRun {
        setup: Bus::default(),
        setup_encode_ops: OpCount::default(),
        rounds,
    })
}

/// Secure aggregation: every node encodes its locally trained model into `N`
/// shares and sends share `j` to node `j`; each node aggregates the shares it
/// holds and the master decodes the aggregate from the fastest replies.
pub fn run_dldd_secure_aggregation(
    cfg: &SchemeConfig,
    net: &NetworkConfig,
    data: &SchemeData,
    init: &ModelParams,
) -> Result<ProtocolRun> {
    check_per_node(cfg, net, data)?;
    let plan = &cfg.plan;
    let n = plan.n;
    let w = init.param_count();
    let all: Vec<usize> = (0..n).collect();
    let agg_weights = row_weights(&data.per_node, &all, cfg.aggregation);
    let root = SeedTree::new(net.seed);
    let mut model = init.clone();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let fastest = select_fastest(net, r)?;
        let round_seed = root.child("round", r as u64);
        let mut st = RoundState::new();
        broadcast(&mut st.bus, n, w);
        let mut locals = Vec::with_capacity(n);
        let mut held: Vec<Vec<Tensor>> = vec![Vec::with_capacity(n); n];
        for (i, local) in data.per_node.iter().enumerate() {
            let flat = local_round(cfg, &model, local, &mut st.train_ops)?.flatten();
            let noise = NoiseSpec::new(
                cfg.privacy.sigma_n,
                plan.t,
                round_seed.child("node", i as u64).value(),
            );
            let enc = encode_padded(&flat, plan, &noise)?;
            st.encode_ops.record(flat.len());
            for share in enc.shares {
                if share.node_index != i {
                    st.bus.send(
                        Endpoint::Node(i),
                        Endpoint::Node(share.node_index),
                        share.payload.len(),
                        Phase::ShareExchange,
                    );
                }
                held[share.node_index].push(share.payload);
            }
            locals.push(flat);
        }
        let mut replies = Vec::with_capacity(n);
        for (j, shares) in held.iter().enumerate() {
            let a = aggregate(shares, cfg.aggregation, agg_weights.as_deref())?;
            st.bus.send(
                Endpoint::Node(j),
                Endpoint::Master,
                a.len(),
                Phase::AggregateReturn,
            );
            replies.push(a);
        }
        let results: Vec<(f64, Tensor)> = fastest
            .iter()
            .map(|&j| (plan.beta(j), replies[j].clone()))
            .collect();
        let global = decode_to_extent(&results, plan, w)?;
        st.decode_ops.record(global.len());
        let reference = aggregate(&locals, cfg.aggregation, agg_weights.as_deref())?;
        let gap = relative_gap(&global, &reference)?;
        model = model.unflatten(&global)?;
        rounds.push(st.finish(r, &model, data, cfg.loss, Some(gap), fastest.len())?);
    }
    Ok(ProtocolRun {
        setup: Bus::default(),
        setup_encode_ops: OpCount::default(),
        rounds,
    })
}

/// Secure training: the master encodes the global model at the single data
/// node, every worker trains its encoded copy on local data, and decoding the
/// returned models at that node yields the next global model. The gap to the
/// plaintext aggregate of plaintext-trained models is reported per round.
pub fn run_dldd_secure_training(
    cfg: &SchemeConfig,
    net: &NetworkConfig,
    data: &SchemeData,
    init: &ModelParams,
) -> Result<ProtocolRun> {
    check_per_node(cfg, net, data)?;
    let plan = &cfg.plan;
    let n = plan.n;
    let w = init.param_count();
    let all: Vec<usize> = (0..n).collect();
    let agg_weights = row_weights(&data.per_node, &all, cfg.aggregation);
    let root = SeedTree::new(net.seed);
    let mut model = init.clone();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let fastest = select_fastest(net, r)?;
        let mut st = RoundState::new();
        let flat = model.flatten();
        let noise = NoiseSpec::new(
            cfg.privacy.sigma_n,
            plan.t,
            root.child("round", r as u64).child("master", 0).value(),
        );
        let enc = encode_padded(&flat, plan, &noise)?;
        st.encode_ops.record(flat.len());
        let mut trained = Vec::with_capacity(n);
        let mut plain = Vec::with_capacity(n);
        for (share, local) in enc.shares.iter().zip(&data.per_node) {
            let j = share.node_index;
            st.bus.send(
                Endpoint::Master,
                Endpoint::Node(j),
                share.payload.len(),
                Phase::ModelBroadcast,
            );
            let coded = model.unflatten(&share.payload)?;
            let out = local_round(cfg, &coded, local, &mut st.train_ops)?.flatten();
            st.bus.send(
                Endpoint::Node(j),
                Endpoint::Master,
                out.len(),
                Phase::ModelReturn,
            );
            trained.push(out);
            plain.push(
                train_local(
                    &model,
                    local,
                    cfg.loss,
                    cfg.lr,
                    cfg.batch_size,
                    cfg.epochs_per_round,
                )?
                .flatten(),
            );
        }
        let results: Vec<(f64, Tensor)> = fastest
            .iter()
            .map(|&j| (plan.beta(j), trained[j].clone()))
            .collect();
        let global = decode_to_extent(&results, plan, w)?;
        st.decode_ops.record(global.len());
        let reference = aggregate(&plain, cfg.aggregation, agg_weights.as_deref())?;
        let gap = relative_gap(&global, &reference)?;
        model = model.unflatten(&global)?;
        rounds.push(st.finish(r, &model, data, cfg.loss, Some(gap), fastest.len())?);
    }
    Ok(ProtocolRun {
        setup: Bus::default(),
        setup_encode_ops: OpCount::default(),
        rounds,
    })
}

pub fn run_scheme(
    cfg: &SchemeConfig,
    net: &NetworkConfig,
    data: &SchemeData,
    init: &ModelParams,
) -> Result<ProtocolRun> {
    match cfg.scheme {
        SchemeKind::DlcdSecureTraining => run_dlcd_secure_training(cfg, net, data, init),
        SchemeKind::DlddSecureAggregation => run_dldd_secure_aggregation(cfg, net, data, init),
        SchemeKind::DlddSecureTraining => run_dldd_secure_training(cfg, net, data, init),
        SchemeKind::UncodedDlcd => run_uncoded_dlcd(cfg, net, data, init),
        SchemeKind::UncodedDldd => run_uncoded_dldd(cfg, net, data, init),
        SchemeKind::CentralizedReference => {
            cfg.validate(net)?;
            run_centralized_reference(cfg, data, init)
        }
    }
}
