//! The reference program corpus: the shopping-cart flow and its
//! transformed variants, shipped as canonical DSL / deployment files and
//! embedded in the binary.

use crate::ir::{parse_dsl, ChannelDecl, DataflowGraph, Deployment, FunctionalDependency};
use crate::netsim::{AdversarialParams, ChannelKind};
use crate::registry::FunctionRegistry;
use crate::scenario::Scenario;
use crate::transform::{replicate_with_broadcast, ReplicateOptions, TransformError};

pub const ORIG: &str = include_str!("../corpus/orig.hfs");
pub const BP_UPGRADED: &str = include_str!("../corpus/bp.hfs");
pub const SSIV_UPGRADED: &str = include_str!("../corpus/ssiv.hfs");
pub const PUSHED: &str = include_str!("../corpus/pushed.hfs");
pub const DECOUPLED_SERVER: &str = include_str!("../corpus/decoupled_server.toml");
pub const DECOUPLED_CLIENT: &str = include_str!("../corpus/decoupled_client.toml");
pub const REPLICA: &str = include_str!("../corpus/replica.hfs");
pub const APPLES_SCENARIO: &str = include_str!("../corpus/apples.toml");

/// The seven runnable program variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Orig,
    Bp,
    Ssiv,
    Pushed,
    DecoupledServer,
    DecoupledClient,
    Replicated,
}

impl Variant {
    pub fn parse(name: &str) -> Option<Variant> {
        Some(match name {
            "orig" => Variant::Orig,
            "bp" => Variant::Bp,
            "ssiv" => Variant::Ssiv,
            "pushed" => Variant::Pushed,
            "decoupled_server" => Variant::DecoupledServer,
            "decoupled_client" => Variant::DecoupledClient,
            "replicated" => Variant::Replicated,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Orig => "orig",
            Variant::Bp => "bp",
            Variant::Ssiv => "ssiv",
            Variant::Pushed => "pushed",
            Variant::DecoupledServer => "decoupled_server",
            Variant::DecoupledClient => "decoupled_client",
            Variant::Replicated => "replicated",
        }
    }

    pub fn all() -> [Variant; 7] {
        [
            Variant::Orig,
            Variant::Bp,
            Variant::Ssiv,
            Variant::Pushed,
            Variant::DecoupledServer,
            Variant::DecoupledClient,
            Variant::Replicated,
        ]
    }
}

pub fn client_class_fd() -> FunctionalDependency {
    FunctionalDependency {
        relation: "client_class".to_string(),
        determinant: vec!["client".to_string()],
        dependent: vec!["class".to_string()],
    }
}

fn single_node_variant(dsl: &str) -> Deployment {
    let graph = parse_dsl(dsl).expect("corpus graph parses");
    let mut d = Deployment::single_node("main", graph);
    d.fds.push(client_class_fd());
    d
}

/// Builds the runnable deployment for a variant. `replicas` and
/// `assign_seed` only affect [`Variant::Replicated`].
pub fn variant_deployment(
    variant: Variant,
    replicas: u32,
    assign_seed: i64,
    registry: &FunctionRegistry,
) -> Result<Deployment, TransformError> {
    Ok(match variant {
        Variant::Orig => single_node_variant(ORIG),
        Variant::Bp => single_node_variant(BP_UPGRADED),
        Variant::Ssiv => single_node_variant(SSIV_UPGRADED),
        Variant::Pushed => single_node_variant(PUSHED),
        Variant::DecoupledServer => {
            Deployment::parse(DECOUPLED_SERVER).expect("corpus deployment parses")
        }
        Variant::DecoupledClient => {
            Deployment::parse(DECOUPLED_CLIENT).expect("corpus deployment parses")
        }
        Variant::Replicated => {
            let base = Deployment::parse(DECOUPLED_SERVER).expect("corpus deployment parses");
            let opts = ReplicateOptions { assign_seed, ..ReplicateOptions::default() };
            replicate_with_broadcast(&base, "server", replicas.max(1), &opts, registry)?
        }
    })
}

/// Per-node graphs of a variant, for isomorphism comparisons.
pub fn variant_graphs(
    variant: Variant,
    registry: &FunctionRegistry,
) -> Vec<(String, DataflowGraph)> {
    let d = variant_deployment(variant, 3, 0, registry).expect("corpus variant builds");
    d.nodes.into_iter().collect()
}

pub fn scenario_fixture(name: &str) -> Option<Scenario> {
    match name {
        "apples" => Some(Scenario::parse(APPLES_SCENARIO).expect("fixture parses")),
        _ => None,
    }
}

/// A fresh adversarial channel spec with corpus defaults.
pub fn default_adversarial() -> ChannelKind {
    ChannelKind::NetworkAdversarial(AdversarialParams::default())
}

/// Declares a terminal local output channel named `out` owned by `node`.
pub fn out_channel(node: &str) -> (String, ChannelDecl) {
    (
        "out".to_string(),
        ChannelDecl {
            producers: vec![node.to_string()],
            consumers: Vec::new(),
            kind: ChannelKind::LocalOrdered,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::serialize_graph;

    #[test]
    fn every_corpus_program_parses_and_validates_clean() {
        for (name, text) in [
            ("orig", ORIG),
            ("bp", BP_UPGRADED),
            ("ssiv", SSIV_UPGRADED),
            ("pushed", PUSHED),
            ("replica", REPLICA),
        ] {
            let g = parse_dsl(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            let diags = g.validate();
            assert!(diags.is_empty(), "{name}: {diags:?}");
        }
        for (name, text) in
            [("decoupled_server", DECOUPLED_SERVER), ("decoupled_client", DECOUPLED_CLIENT)]
        {
            let d = Deployment::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            d.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            for (node, g) in &d.nodes {
                let diags = g.validate();
                assert!(diags.is_empty(), "{name}/{node}: {diags:?}");
            }
        }
    }

    #[test]
    fn corpus_graph_files_are_serialization_fixpoints() {
        for (name, text) in [
            ("orig", ORIG),
            ("bp", BP_UPGRADED),
            ("ssiv", SSIV_UPGRADED),
            ("pushed", PUSHED),
            ("replica", REPLICA),
        ] {
            let emitted = serialize_graph(&parse_dsl(text).unwrap());
            assert_eq!(emitted, text, "{name} is not in canonical form");
        }
        // Normalization is idempotent on the multi-node corpus graphs too.
        for (name, text) in
            [("decoupled_server", DECOUPLED_SERVER), ("decoupled_client", DECOUPLED_CLIENT)]
        {
            let d = Deployment::parse(text).unwrap();
            for (node, g) in &d.nodes {
                let once = serialize_graph(g);
                let twice = serialize_graph(&parse_dsl(&once).unwrap());
                assert_eq!(once, twice, "{name}/{node}");
            }
        }
    }

    #[test]
    fn every_variant_builds_and_validates() {
        let registry = FunctionRegistry::builtin();
        for variant in Variant::all() {
            let d = variant_deployment(variant, 3, 0, &registry)
                .unwrap_or_else(|e| panic!("{}: {e}", variant.name()));
            d.validate().unwrap_or_else(|e| panic!("{}: {e}", variant.name()));
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::all() {
            assert_eq!(Variant::parse(v.name()), Some(v));
        }
        assert_eq!(Variant::parse("nope"), None);
    }

    #[test]
    fn apples_fixture_matches_the_builtin() {
        assert_eq!(scenario_fixture("apples").unwrap(), Scenario::apples());
    }
}
