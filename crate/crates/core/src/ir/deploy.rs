//! Multi-node deployments: named nodes each holding a graph, channels
//! wiring sinks to sources, functional-dependency annotations, and static
//! address tables.
//!
//! The on-disk form is a TOML document; graphs embed as DSL text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{AdversarialParams, ChannelKind};
use crate::value::{Record, Value};

use super::{parse_dsl, serialize_graph, DataflowGraph, DslError, OperatorKind};

/// A declared channel: which nodes may send, which receive. A channel with
/// no consumers is a terminal output sink collected by the runtime.
/// Multiple producers are allowed so symmetric replicas can share one
/// broadcast channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDecl {
    pub producers: Vec<String>,
    pub consumers: Vec<String>,
    pub kind: ChannelKind,
}

/// `determinant -> dependent` on the records of a logical stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalDependency {
    pub relation: String,
    pub determinant: Vec<String>,
    pub dependent: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Deployment {
    /// Node name -> dataflow graph. Nodes are scheduled in name order.
    pub nodes: BTreeMap<String, DataflowGraph>,
    pub channels: BTreeMap<String, ChannelDecl>,
    pub fds: Vec<FunctionalDependency>,
    /// Static streams owned by the deployment (e.g. replica address lists),
    /// as opposed to scenario data.
    pub statics: BTreeMap<String, Vec<Record>>,
    /// Scenario bindings: DSL source name -> scenario stream name, for
    /// sources whose name differs from the stream they draw.
    pub bindings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Error)]
pub enum DeployError {
    #[error("node `{node}`: {source}")]
    Graph {
        node: String,
        #[source]
        source: DslError,
    },
    #[error("deployment file: {0}")]
    Format(String),
    #[error("node `{node}` references undeclared channel `{channel}`")]
    UndeclaredChannel { node: String, channel: String },
    #[error("channel `{channel}` endpoint `{node}` does not exist")]
    MissingEndpoint { channel: String, node: String },
    #[error("channel `{channel}`: node `{node}` has no matching {role} operator")]
    EndpointWithoutOperator { channel: String, node: String, role: &'static str },
}

impl Deployment {
    /// Wraps a single graph as a one-node deployment. Sink channels that
    /// the graph references but the caller has not declared become terminal
    /// local channels.
    pub fn single_node(name: &str, graph: DataflowGraph) -> Deployment {
        let mut d = Deployment::default();
        for node in graph.nodes() {
            if node.kind == OperatorKind::DestSinkSerde {
                if let Some(ch) = node.first_ident() {
                    d.channels.entry(ch.to_string()).or_insert_with(|| ChannelDecl {
                        producers: vec![name.to_string()],
                        consumers: Vec::new(),
                        kind: ChannelKind::LocalOrdered,
                    });
                }
            }
        }
        d.nodes.insert(name.to_string(), graph);
        d
    }

    /// Channels with no consumers: terminal output sinks.
    pub fn output_channels(&self) -> Vec<String> {
        self.channels
            .iter()
            .filter(|(_, c)| c.consumers.is_empty())
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// The logical network edges realized by channel declarations, as
    /// (channel, producer node, consumer node) triples.
    pub fn network_edges(&self) -> Vec<(String, String, String)> {
        let mut out = Vec::new();
        for (name, decl) in &self.channels {
            for p in &decl.producers {
                for c in &decl.consumers {
                    out.push((name.clone(), p.clone(), c.clone()));
                }
            }
        }
        out
    }

    /// Structural validation of channel wiring on top of per-graph checks.
    pub fn validate(&self) -> Result<(), DeployError> {
        for (node_name, graph) in &self.nodes {
            for op in graph.nodes() {
                let (role, channel) = match op.kind {
                    OperatorKind::DestSinkSerde => ("producer", op.first_ident()),
                    OperatorKind::SourceStreamSerde => ("consumer", op.first_ident()),
                    _ => continue,
                };
                let channel = channel.unwrap_or_default().to_string();
                let decl = self.channels.get(&channel).ok_or_else(|| {
                    DeployError::UndeclaredChannel { node: node_name.clone(), channel: channel.clone() }
                })?;
                let listed = match role {
                    "producer" => decl.producers.contains(node_name),
                    _ => decl.consumers.contains(node_name),
                };
                if !listed {
                    return Err(DeployError::UndeclaredChannel {
                        node: node_name.clone(),
                        channel,
                    });
                }
            }
        }
        for (channel, decl) in &self.channels {
            for (role, endpoints) in
                [("producer", &decl.producers), ("consumer", &decl.consumers)]
            {
                for node in endpoints {
                    let graph = self.nodes.get(node).ok_or_else(|| {
                        DeployError::MissingEndpoint { channel: channel.clone(), node: node.clone() }
                    })?;
                    let wanted = if role == "producer" {
                        OperatorKind::DestSinkSerde
                    } else {
                        OperatorKind::SourceStreamSerde
                    };
                    let found = graph
                        .nodes()
                        .any(|op| op.kind == wanted && op.first_ident() == Some(channel));
                    if !found {
                        return Err(DeployError::EndpointWithoutOperator {
                            channel: channel.clone(),
                            node: node.clone(),
                            role,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks every functional dependency against the declared record
    /// shape of its relation, where one is known.
    pub fn validate_fds(
        &self,
        shape_of: impl Fn(&str) -> Option<Vec<String>>,
    ) -> Result<(), DeployError> {
        for fd in &self.fds {
            let Some(shape) = shape_of(&fd.relation) else { continue };
            for attr in fd.determinant.iter().chain(&fd.dependent) {
                if !shape.contains(attr) {
                    return Err(DeployError::Format(format!(
                        "functional dependency on `{}` names attribute `{attr}` \
                         outside the stream shape {shape:?}",
                        fd.relation
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Deployment, DeployError> {
        Self::parse_with_base(text, None)
    }

    /// Reads a deployment file from disk; `graph_file` node entries resolve
    /// relative to it.
    pub fn load(path: &std::path::Path) -> Result<Deployment, DeployError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DeployError::Format(format!("{}: {e}", path.display())))?;
        Self::parse_with_base(&text, path.parent())
    }

    pub fn parse_with_base(
        text: &str,
        base: Option<&std::path::Path>,
    ) -> Result<Deployment, DeployError> {
        let file: DeploymentFile =
            toml::from_str(text).map_err(|e| DeployError::Format(e.to_string()))?;
        let mut d = Deployment::default();
        for (name, decl) in file.nodes {
            let dsl = match (&decl.graph, &decl.graph_file) {
                (Some(inline), None) => inline.clone(),
                (None, Some(rel)) => {
                    let path = match base {
                        Some(dir) => dir.join(rel),
                        None => std::path::PathBuf::from(rel),
                    };
                    std::fs::read_to_string(&path).map_err(|e| {
                        DeployError::Format(format!("node `{name}`: {}: {e}", path.display()))
                    })?
                }
                _ => {
                    return Err(DeployError::Format(format!(
                        "node `{name}` needs exactly one of graph/graph_file"
                    )))
                }
            };
            let graph = parse_dsl(&dsl)
                .map_err(|e| DeployError::Graph { node: name.clone(), source: e })?;
            d.nodes.insert(name, graph);
        }
        d.bindings = file.bindings;
        for (name, decl) in file.channels {
            d.channels.insert(name, decl.into_channel());
        }
        d.fds = file.fd;
        for (name, values) in file.statics {
            let records = values
                .into_iter()
                .map(|addr| Record::new(vec![("addr".into(), Value::Str(addr))]))
                .collect();
            d.statics.insert(name, records);
        }
        Ok(d)
    }

    pub fn to_toml(&self) -> String {
        let file = DeploymentFile {
            nodes: self
                .nodes
                .iter()
                .map(|(name, g)| {
                    (name.clone(), NodeDecl { graph: Some(serialize_graph(g)), graph_file: None })
                })
                .collect(),
            bindings: self.bindings.clone(),
            channels: self
                .channels
                .iter()
                .map(|(name, c)| (name.clone(), ChannelFileDecl::from_channel(c)))
                .collect(),
            fd: self.fds.clone(),
            statics: self
                .statics
                .iter()
                .map(|(name, records)| {
                    let addrs = records
                        .iter()
                        .map(|r| match r.get("addr") {
                            Some(Value::Str(s)) => s.clone(),
                            other => other.map(|v| v.encode()).unwrap_or_default(),
                        })
                        .collect();
                    (name.clone(), addrs)
                })
                .collect(),
        };
        toml::to_string(&file).expect("deployment serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DeploymentFile {
    #[serde(default)]
    nodes: BTreeMap<String, NodeDecl>,
    #[serde(default)]
    channels: BTreeMap<String, ChannelFileDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    fd: Vec<FunctionalDependency>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    statics: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    bindings: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDecl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graph: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graph_file: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChannelFileDecl {
    kind: String,
    #[serde(default)]
    producers: Vec<String>,
    #[serde(default)]
    consumers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_delay: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dup_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_dups: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    batch_prob: Option<f64>,
}

impl ChannelFileDecl {
    fn into_channel(self) -> ChannelDecl {
        let defaults = AdversarialParams::default();
        let kind = match self.kind.as_str() {
            "adversarial" => ChannelKind::NetworkAdversarial(AdversarialParams {
                seed: self.seed.unwrap_or(defaults.seed),
                max_delay_ticks: self.max_delay.unwrap_or(defaults.max_delay_ticks),
                dup_prob: self.dup_prob.unwrap_or(defaults.dup_prob),
                max_dups: self.max_dups.unwrap_or(defaults.max_dups),
                batch_prob: self.batch_prob.unwrap_or(defaults.batch_prob),
            }),
            _ => ChannelKind::LocalOrdered,
        };
        ChannelDecl { producers: self.producers, consumers: self.consumers, kind }
    }

    fn from_channel(decl: &ChannelDecl) -> ChannelFileDecl {
        match &decl.kind {
            ChannelKind::LocalOrdered => ChannelFileDecl {
                kind: "local".to_string(),
                producers: decl.producers.clone(),
                consumers: decl.consumers.clone(),
                seed: None,
                max_delay: None,
                dup_prob: None,
                max_dups: None,
                batch_prob: None,
            },
            ChannelKind::NetworkAdversarial(p) => ChannelFileDecl {
                kind: "adversarial".to_string(),
                producers: decl.producers.clone(),
                consumers: decl.consumers.clone(),
                seed: Some(p.seed),
                max_delay: Some(p.max_delay_ticks),
                dup_prob: Some(p.dup_prob),
                max_dups: Some(p.max_dups),
                batch_prob: Some(p.batch_prob),
            },
        }
    }
}
