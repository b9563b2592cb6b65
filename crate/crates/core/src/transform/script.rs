//! Transform scripts: one rule invocation per line, `rule_name arg=value …`.
//! Rules apply in order; the first failure stops the script and names the
//! rule and the unmet precondition.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ir::{DataflowGraph, Deployment, NodeId, OperatorKind};
use crate::netsim::AdversarialParams;
use crate::registry::FunctionRegistry;

use super::cut::{cut_flow, cut_flow_at, CutOptions, CutPlacement};
use super::local::{
    elide_subaggregation, fuse_append, insert_odiff_append, push_groupby_through_join,
    push_through_odiff, upgrade_to_bp, upgrade_to_ssiv,
};
use super::replicate::{replicate_with_broadcast, ReplicateOptions};
use super::TransformError;

#[derive(Debug, Clone, Error)]
pub enum ScriptError {
    #[error("script line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("script line {line} ({rule}): {source}")]
    Rule {
        line: usize,
        rule: String,
        #[source]
        source: TransformError,
    },
}

/// One successfully applied rule, for the CLI's per-rule summary.
#[derive(Debug, Clone)]
pub struct AppliedRule {
    pub line: usize,
    pub rule: String,
}

/// A catalog entry: the rule's script name and its precondition, stated the
/// way the rule checks it.
#[derive(Debug, Clone, Copy)]
pub struct RuleInfo {
    pub name: &'static str,
    pub precondition: &'static str,
}

/// Every rule the script layer can invoke.
pub fn rule_catalog() -> &'static [RuleInfo] {
    &[
        RuleInfo {
            name: "upgrade_to_bp",
            precondition: "a sequence-append fold group_by fed from one re-typeable source_stream",
        },
        RuleInfo {
            name: "upgrade_to_ssiv",
            precondition: "a fold or bounded-prefix group_by fed from one re-typeable source_stream",
        },
        RuleInfo {
            name: "push_groupby_through_join",
            precondition: "join -> map -> lattice group_by keyed by (join key, dependent) under a declared functional dependency",
        },
        RuleInfo {
            name: "insert_odiff_append",
            precondition: "a local edge (from=/to=) carrying bounded-prefix points",
        },
        RuleInfo {
            name: "push_through_odiff",
            precondition: "odiff -> append -> map with the map declared pointwise over items",
        },
        RuleInfo {
            name: "fuse_append",
            precondition: "append immediately upstream of a lattice group_by",
        },
        RuleInfo {
            name: "elide_subaggregation",
            precondition: "two equal lattice group_bys in sequence with only morphisms between",
        },
        RuleInfo {
            name: "cut_flow",
            precondition: "a Safe separating edge (placement=upstream|downstream of the lattice group_by, or from=/to=)",
        },
        RuleInfo {
            name: "replicate",
            precondition: "a node whose state is entirely lattice group_by state, with one terminal sink",
        },
    ]
}

struct Invocation {
    line: usize,
    rule: String,
    args: BTreeMap<String, String>,
}

fn parse_script(text: &str) -> Result<Vec<Invocation>, ScriptError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let rule = parts.next().unwrap().to_string();
        let mut args = BTreeMap::new();
        for part in parts {
            let Some((k, v)) = part.split_once('=') else {
                return Err(ScriptError::Parse {
                    line,
                    msg: format!("expected key=value, got `{part}`"),
                });
            };
            args.insert(k.to_string(), v.to_string());
        }
        out.push(Invocation { line, rule, args });
    }
    Ok(out)
}

fn graph_target<'a>(
    d: &'a Deployment,
    args: &BTreeMap<String, String>,
    line: usize,
    rule: &str,
) -> Result<(String, &'a DataflowGraph), ScriptError> {
    if let Some(name) = args.get("node") {
        return d
            .nodes
            .get(name)
            .map(|g| (name.clone(), g))
            .ok_or_else(|| ScriptError::Rule {
                line,
                rule: rule.to_string(),
                source: TransformError::precondition(rule, format!("no node `{name}`")),
            });
    }
    let mut it = d.nodes.iter();
    match (it.next(), it.next()) {
        (Some((name, g)), None) => Ok((name.clone(), g)),
        _ => Err(ScriptError::Rule {
            line,
            rule: rule.to_string(),
            source: TransformError::precondition(
                rule,
                "multiple nodes; pass node=<name>",
            ),
        }),
    }
}

/// Resolves `kind` or `kind.N` against a graph (N-th node of that kind in
/// id order).
fn select_node(
    g: &DataflowGraph,
    selector: &str,
    line: usize,
    rule: &str,
) -> Result<NodeId, ScriptError> {
    let (kind_name, index) = match selector.split_once('.') {
        Some((k, n)) => (
            k,
            n.parse::<usize>().map_err(|_| ScriptError::Parse {
                line,
                msg: format!("bad selector index in `{selector}`"),
            })?,
        ),
        None => (selector, 0),
    };
    let kind = OperatorKind::parse(kind_name).ok_or_else(|| ScriptError::Parse {
        line,
        msg: format!("unknown operator kind `{kind_name}`"),
    })?;
    g.nodes_of_kind(kind).get(index).copied().ok_or_else(|| ScriptError::Rule {
        line,
        rule: rule.to_string(),
        source: TransformError::precondition(
            rule,
            format!("no {kind_name} number {index} in the graph"),
        ),
    })
}

fn adversarial_from_args(args: &BTreeMap<String, String>) -> AdversarialParams {
    let mut p = AdversarialParams::default();
    if let Some(v) = args.get("seed").and_then(|v| v.parse().ok()) {
        p.seed = v;
    }
    if let Some(v) = args.get("max_delay").and_then(|v| v.parse().ok()) {
        p.max_delay_ticks = v;
    }
    if let Some(v) = args.get("dup_prob").and_then(|v| v.parse().ok()) {
        p.dup_prob = v;
    }
    if let Some(v) = args.get("max_dups").and_then(|v| v.parse().ok()) {
        p.max_dups = v;
    }
    if let Some(v) = args.get("batch_prob").and_then(|v| v.parse().ok()) {
        p.batch_prob = v;
    }
    p
}

fn replace_graph(d: &Deployment, node: &str, graph: DataflowGraph) -> Deployment {
    let mut out = d.clone();
    out.nodes.insert(node.to_string(), graph);
    out
}

/// Applies a script to a deployment, returning the transformed deployment
/// and the per-rule application log.
pub fn apply_script(
    d: &Deployment,
    script: &str,
    registry: &FunctionRegistry,
) -> Result<(Deployment, Vec<AppliedRule>), ScriptError> {
    let invocations = parse_script(script)?;
    let mut current = d.clone();
    let mut applied = Vec::new();
    for inv in invocations {
        let fail = |source: TransformError| ScriptError::Rule {
            line: inv.line,
            rule: inv.rule.clone(),
            source,
        };
        current = match inv.rule.as_str() {
            "upgrade_to_bp" => {
                let (node, g) = graph_target(&current, &inv.args, inv.line, &inv.rule)?;
                replace_graph(&current, &node, upgrade_to_bp(g, registry).map_err(fail)?)
            }
            "upgrade_to_ssiv" => {
                let (node, g) = graph_target(&current, &inv.args, inv.line, &inv.rule)?;
                replace_graph(&current, &node, upgrade_to_ssiv(g, registry).map_err(fail)?)
            }
            "push_groupby_through_join" => {
                let (node, g) = graph_target(&current, &inv.args, inv.line, &inv.rule)?;
                let fd = current.fds.first().cloned().ok_or_else(|| {
                    fail(TransformError::MissingFd {
                        rule: inv.rule.clone(),
                        needed: "any functional dependency annotation".to_string(),
                    })
                })?;
                replace_graph(
                    &current,
                    &node,
                    push_groupby_through_join(g, &fd, registry).map_err(fail)?,
                )
            }
            "push_through_odiff" => {
                let (node, g) = graph_target(&current, &inv.args, inv.line, &inv.rule)?;
                replace_graph(&current, &node, push_through_odiff(g, registry).map_err(fail)?)
            }
            "fuse_append" => {
                let (node, g) = graph_target(&current, &inv.args, inv.line, &inv.rule)?;
                replace_graph(&current, &node, fuse_append(g, registry).map_err(fail)?)
            }
            "elide_subaggregation" => {
                let (node, g) = graph_target(&current, &inv.args, inv.line, &inv.rule)?;
                replace_graph(&current, &node, elide_subaggregation(g, registry).map_err(fail)?)
            }
            "insert_odiff_append" => {
                let (node, g) = graph_target(&current, &inv.args, inv.line, &inv.rule)?;
                let from_sel = inv.args.get("from").ok_or_else(|| ScriptError::Parse {
                    line: inv.line,
                    msg: "insert_odiff_append needs from=<op>".to_string(),
                })?;
                if let Some(channel) = from_sel.strip_prefix("channel:") {
                    return Err(fail(TransformError::precondition(
                        &inv.rule,
                        format!(
                            "channel `{channel}` is a network edge; it does not preserve \
                             ordering or exactly-once delivery"
                        ),
                    )));
                }
                let to_sel = inv.args.get("to").ok_or_else(|| ScriptError::Parse {
                    line: inv.line,
                    msg: "insert_odiff_append needs to=<op>".to_string(),
                })?;
                let from = select_node(g, from_sel, inv.line, &inv.rule)?;
                let to = select_node(g, to_sel, inv.line, &inv.rule)?;
                replace_graph(
                    &current,
                    &node,
                    insert_odiff_append(g, from, to, registry).map_err(fail)?,
                )
            }
            "cut_flow" => {
                let placement = match inv.args.get("placement").map(String::as_str) {
                    Some("upstream") => Some(CutPlacement::Upstream),
                    Some("downstream") => Some(CutPlacement::Downstream),
                    None => None,
                    Some(other) => {
                        return Err(ScriptError::Parse {
                            line: inv.line,
                            msg: format!("placement must be upstream|downstream, got `{other}`"),
                        })
                    }
                };
                match placement {
                    Some(placement) => {
                        let mut opts = CutOptions::for_placement(placement);
                        if let Some(ch) = inv.args.get("channel") {
                            opts.channel = ch.clone();
                        }
                        if let Some(n) = inv.args.get("client") {
                            opts.upstream_name = n.clone();
                        }
                        if let Some(n) = inv.args.get("server") {
                            opts.downstream_name = n.clone();
                        }
                        opts.params = adversarial_from_args(&inv.args);
                        cut_flow(&current, placement, &opts, registry).map_err(fail)?
                    }
                    None => {
                        let (node, g) = graph_target(&current, &inv.args, inv.line, &inv.rule)?;
                        let from_sel = inv.args.get("from").ok_or_else(|| ScriptError::Parse {
                            line: inv.line,
                            msg: "cut_flow needs placement= or from=/to=".to_string(),
                        })?;
                        let to_sel = inv.args.get("to").ok_or_else(|| ScriptError::Parse {
                            line: inv.line,
                            msg: "cut_flow needs placement= or from=/to=".to_string(),
                        })?;
                        let from = select_node(g, from_sel, inv.line, &inv.rule)?;
                        let to = select_node(g, to_sel, inv.line, &inv.rule)?;
                        let mut opts = CutOptions::for_placement(CutPlacement::Upstream);
                        if let Some(ch) = inv.args.get("channel") {
                            opts.channel = ch.clone();
                        }
                        opts.params = adversarial_from_args(&inv.args);
                        cut_flow_at(&current, &node, from, to, &opts, registry).map_err(fail)?
                    }
                }
            }
            "replicate" => {
                let node = inv.args.get("node").cloned().unwrap_or_else(|| "server".to_string());
                let replicas: u32 = inv
                    .args
                    .get("replicas")
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(2);
                let mut opts = ReplicateOptions {
                    params: adversarial_from_args(&inv.args),
                    ..ReplicateOptions::default()
                };
                if let Some(v) = inv.args.get("assign_seed").and_then(|v| v.parse().ok()) {
                    opts.assign_seed = v;
                }
                if let Some(ch) = inv.args.get("channel") {
                    opts.broadcast_channel = ch.clone();
                }
                replicate_with_broadcast(&current, &node, replicas, &opts, registry)
                    .map_err(fail)?
            }
            other => {
                let known: Vec<&str> = rule_catalog().iter().map(|r| r.name).collect();
                return Err(ScriptError::Parse {
                    line: inv.line,
                    msg: format!("unknown rule `{other}`; rules: {}", known.join(", ")),
                })
            }
        };
        applied.push(AppliedRule { line: inv.line, rule: inv.rule });
    }
    Ok((current, applied))
}
