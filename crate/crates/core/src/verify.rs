//! Equivalence verification: extract sealed outputs, compare them across
//! variants and adversarial seeds against the sequential-fold oracle.
//!
//! An output is sealed when its lattice point is top (the monotone
//! threshold test); fold outputs flush at quiescence and count as sealed.
//! Sealed payloads render as the session sequence in position order, so
//! prefix-typed, sealed-set-typed and fold outputs are directly comparable.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::corpus::{variant_deployment, Variant};
use crate::ir::Deployment;
use crate::netsim::ChannelKind;
use crate::registry::FunctionRegistry;
use crate::runtime::{run_deployment, RunConfig, RunOutput, RuntimeError};
use crate::scenario::Scenario;
use crate::transform::TransformError;
use crate::value::{decode_item, Record, Value};

/// (client, class) -> set of distinct sealed payload renderings. A clean
/// run has exactly one rendering per key.
pub type SealedOutputs = BTreeMap<(i64, String), BTreeSet<String>>;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("output record lacks client/class attributes: {0}")]
    BadOutputShape(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Renders a sealed payload as the session sequence in position order.
fn render_sealed(value: &Value) -> Option<String> {
    match value {
        Value::Lattice(point) => {
            if !point.is_top() {
                return None;
            }
            let items: Vec<Value> = point
                .items_in_order()
                .iter()
                .map(|item| decode_item(item).unwrap_or_else(|_| Value::str(item.to_string())))
                .collect();
            Some(Value::Seq(items).encode())
        }
        Value::Seq(_) => Some(value.encode()),
        _ => None,
    }
}

/// Extracts the sealed outputs of a run, keyed by (client, class).
pub fn sealed_outputs(run: &RunOutput) -> Result<SealedOutputs, VerifyError> {
    let mut out: SealedOutputs = BTreeMap::new();
    for records in run.outputs.values() {
        for record in records {
            let (client, class) = match (record.get("client"), record.get("class")) {
                (Some(Value::Int(c)), Some(Value::Str(k))) => (*c, k.clone()),
                _ => return Err(VerifyError::BadOutputShape(record.encode())),
            };
            let Some((_, (_, payload))) = record.split_key_value() else {
                continue;
            };
            if let Some(rendered) = render_sealed(&payload) {
                out.entry((client, class)).or_default().insert(rendered);
            }
        }
    }
    Ok(out)
}

/// The sequential-fold oracle rendered in the same form.
pub fn oracle_outputs(scenario: &Scenario) -> BTreeMap<(i64, String), String> {
    scenario
        .oracle()
        .into_iter()
        .map(|(client, class, items)| {
            let seq = Value::Seq(items.iter().map(|li| li.to_value()).collect());
            ((client, class.name().to_string()), seq.encode())
        })
        .collect()
}

/// True when a run's sealed outputs are exactly the oracle: same keys, one
/// rendering per key, equal payloads.
pub fn matches_oracle(
    sealed: &SealedOutputs,
    oracle: &BTreeMap<(i64, String), String>,
) -> Result<(), String> {
    for (key, expected) in oracle {
        match sealed.get(key) {
            None => return Err(format!("missing output for client={} class={}", key.0, key.1)),
            Some(set) => {
                if set.len() != 1 || !set.contains(expected) {
                    return Err(format!(
                        "client={} class={}: expected {expected}, got {:?}",
                        key.0, key.1, set
                    ));
                }
            }
        }
    }
    for key in sealed.keys() {
        if !oracle.contains_key(key) {
            return Err(format!("unexpected output for client={} class={}", key.0, key.1));
        }
    }
    Ok(())
}

/// The converged cart store of a replica: the state of its merge-fed
/// lattice group. Falls back to the only lattice group when no merge feeds
/// one.
pub fn replica_store_state(
    run: &RunOutput,
    deployment: &Deployment,
    node: &str,
) -> Option<crate::lattice::KeyedLattice> {
    let graph = deployment.nodes.get(node)?;
    let gbs = graph.nodes_of_kind(crate::ir::OperatorKind::GroupBy);
    let merge_fed = gbs.iter().copied().find(|&id| {
        graph
            .in_edges(id)
            .iter()
            .any(|e| graph.node(e.from).unwrap().kind == crate::ir::OperatorKind::Merge)
    });
    let target = merge_fed.or_else(|| gbs.first().copied())?;
    run.group_states.get(&(node.to_string(), target)).cloned()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Equivalent,
    Diverged {
        variant: String,
        witness_seed: u64,
        detail: String,
    },
}

#[derive(Debug, Clone)]
pub struct VerificationResult {
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    pub runs: usize,
    pub outcome: Outcome,
}

/// Forces every channel to local ordered delivery: the baseline run.
fn force_local(d: &Deployment) -> Deployment {
    let mut out = d.clone();
    for decl in out.channels.values_mut() {
        decl.kind = ChannelKind::LocalOrdered;
    }
    out
}

/// Runs every variant under every seed (plus a local-ordered baseline per
/// variant) and compares all sealed outputs against the sequential-fold
/// oracle.
pub fn verify_variants(
    variants: &[Variant],
    scenario: &Scenario,
    base_seed: u64,
    n_seeds: u32,
    replicas: u32,
    registry: &FunctionRegistry,
) -> Result<VerificationResult, VerifyError> {
    let oracle = oracle_outputs(scenario);
    let seeds: Vec<u64> = (0..n_seeds).map(|i| base_seed.wrapping_add(u64::from(i))).collect();
    let mut runs = 0usize;
    for &variant in variants {
        // Baseline: every channel local ordered.
        let baseline = force_local(&variant_deployment(variant, replicas, 0, registry)?);
        let baseline_config = RunConfig { collect_trace: false, ..RunConfig::default() };
        let out = run_deployment(&baseline, scenario, registry, &baseline_config)?;
        runs += 1;
        if let Err(detail) = matches_oracle(&sealed_outputs(&out)?, &oracle) {
            return Ok(VerificationResult {
                variants: variants.iter().map(|v| v.name().to_string()).collect(),
                seeds,
                runs,
                outcome: Outcome::Diverged {
                    variant: format!("{} (local baseline)", variant.name()),
                    witness_seed: 0,
                    detail,
                },
            });
        }
        for &seed in &seeds {
            // The replica assignment varies with the seed as well.
            let deployment = variant_deployment(variant, replicas, seed as i64, registry)?;
            let out =
                run_deployment(&deployment, scenario, registry, &RunConfig::quiet(seed))?;
            runs += 1;
            if let Err(detail) = matches_oracle(&sealed_outputs(&out)?, &oracle) {
                return Ok(VerificationResult {
                    variants: variants.iter().map(|v| v.name().to_string()).collect(),
                    seeds,
                    runs,
                    outcome: Outcome::Diverged {
                        variant: variant.name().to_string(),
                        witness_seed: seed,
                        detail,
                    },
                });
            }
        }
    }
    Ok(VerificationResult {
        variants: variants.iter().map(|v| v.name().to_string()).collect(),
        seeds,
        runs,
        outcome: Outcome::Equivalent,
    })
}

/// Runs one fixed deployment under every seed (plus the local baseline) and
/// compares against the oracle. Diverged outcomes carry the witness seed
/// that reproduces them.
pub fn verify_deployment(
    deployment: &Deployment,
    label: &str,
    scenario: &Scenario,
    base_seed: u64,
    n_seeds: u32,
    registry: &FunctionRegistry,
) -> Result<VerificationResult, VerifyError> {
    let oracle = oracle_outputs(scenario);
    let seeds: Vec<u64> = (0..n_seeds).map(|i| base_seed.wrapping_add(u64::from(i))).collect();
    let mut runs = 0usize;
    let mut check = |d: &Deployment, seed: u64, tag: &str| -> Result<Option<Outcome>, VerifyError> {
        let out = run_deployment(d, scenario, registry, &RunConfig::quiet(seed))?;
        runs += 1;
        Ok(match matches_oracle(&sealed_outputs(&out)?, &oracle) {
            Ok(()) => None,
            Err(detail) => Some(Outcome::Diverged {
                variant: format!("{label}{tag}"),
                witness_seed: seed,
                detail,
            }),
        })
    };
    let mut outcome = check(&force_local(deployment), 0, " (local baseline)")?;
    if outcome.is_none() {
        for &seed in &seeds {
            outcome = check(deployment, seed, "")?;
            if outcome.is_some() {
                break;
            }
        }
    }
    Ok(VerificationResult {
        variants: vec![label.to_string()],
        seeds,
        runs,
        outcome: outcome.unwrap_or(Outcome::Equivalent),
    })
}

/// Runs one deployment across seeds and collects the distinct rendered
/// output multisets. Used to demonstrate divergence of unsafe cuts: a
/// consistent program yields exactly one.
pub fn distinct_outcomes(
    deployment: &Deployment,
    scenario: &Scenario,
    base_seed: u64,
    n_seeds: u32,
    registry: &FunctionRegistry,
) -> Result<BTreeSet<String>, VerifyError> {
    let mut outcomes = BTreeSet::new();
    for i in 0..n_seeds {
        let seed = base_seed.wrapping_add(u64::from(i));
        let out =
            run_deployment(deployment, scenario, registry, &RunConfig::quiet(seed))?;
        let mut lines: Vec<String> = out
            .outputs
            .values()
            .flatten()
            .map(Record::encode)
            .collect();
        lines.sort();
        outcomes.insert(lines.join("\n"));
    }
    Ok(outcomes)
}
