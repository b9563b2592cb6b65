use super::*;
use crate::corpus;
use crate::ir::{
    graphs_isomorphic, graphs_isomorphic_modulo_params, parse_dsl, Deployment, OperatorKind,
};
use crate::netsim::ChannelKind;
use crate::registry::FunctionRegistry;

fn registry() -> FunctionRegistry {
    FunctionRegistry::builtin()
}

#[test]
fn upgrade_chain_reproduces_the_typed_variants() {
    let r = registry();
    let orig_graph = parse_dsl(corpus::ORIG).unwrap();
    let bp_graph = upgrade_to_bp(&orig_graph, &r).unwrap();
    assert!(graphs_isomorphic(&bp_graph, &parse_dsl(corpus::BP_UPGRADED).unwrap()));
    let ssiv_graph = upgrade_to_ssiv(&bp_graph, &r).unwrap();
    assert!(graphs_isomorphic(&ssiv_graph, &parse_dsl(corpus::SSIV_UPGRADED).unwrap()));
    // The sealed-set upgrade also applies to the fold directly.
    let direct = upgrade_to_ssiv(&orig_graph, &r).unwrap();
    assert!(graphs_isomorphic(&direct, &ssiv_graph));
}

#[test]
fn upgrades_refuse_already_upgraded_flows() {
    let r = registry();
    let bp_graph = parse_dsl(corpus::BP_UPGRADED).unwrap();
    assert!(matches!(
        upgrade_to_bp(&bp_graph, &r),
        Err(TransformError::PreconditionFailed { .. })
    ));
    let ssiv_graph = parse_dsl(corpus::SSIV_UPGRADED).unwrap();
    assert!(matches!(
        upgrade_to_ssiv(&ssiv_graph, &r),
        Err(TransformError::PreconditionFailed { .. })
    ));
}

#[test]
fn pushdown_reproduces_the_pushed_corpus() {
    let r = registry();
    let ssiv_graph = parse_dsl(corpus::SSIV_UPGRADED).unwrap();
    let pushed = push_groupby_through_join(&ssiv_graph, &corpus::client_class_fd(), &r).unwrap();
    assert!(graphs_isomorphic(&pushed, &parse_dsl(corpus::PUSHED).unwrap()));
}

#[test]
fn pushdown_requires_a_matching_dependency() {
    let r = registry();
    let ssiv_graph = parse_dsl(corpus::SSIV_UPGRADED).unwrap();
    let mut wrong_fd = corpus::client_class_fd();
    wrong_fd.relation = "orders".to_string();
    assert!(matches!(
        push_groupby_through_join(&ssiv_graph, &wrong_fd, &r),
        Err(TransformError::MissingFd { .. })
    ));
    let mut bad_dependent = corpus::client_class_fd();
    bad_dependent.dependent = vec!["tier".to_string()];
    assert!(matches!(
        push_groupby_through_join(&ssiv_graph, &bad_dependent, &r),
        Err(TransformError::KeyMismatch { .. })
    ));
}

#[test]
fn pushdown_is_pure_and_repeatable() {
    let r = registry();
    let ssiv_graph = parse_dsl(corpus::SSIV_UPGRADED).unwrap();
    let before = crate::ir::serialize_graph(&ssiv_graph);
    let a = push_groupby_through_join(&ssiv_graph, &corpus::client_class_fd(), &r).unwrap();
    let b = push_groupby_through_join(&ssiv_graph, &corpus::client_class_fd(), &r).unwrap();
    assert_eq!(before, crate::ir::serialize_graph(&ssiv_graph), "input untouched");
    assert!(graphs_isomorphic(&a, &b));
}

#[test]
fn upstream_cut_reproduces_the_decoupled_server_corpus() {
    let r = registry();
    let pushed_graph = Deployment::single_node("main", parse_dsl(corpus::PUSHED).unwrap());
    let opts = CutOptions::for_placement(CutPlacement::Upstream);
    let cut = cut_flow(&pushed_graph, CutPlacement::Upstream, &opts, &r).unwrap();
    cut.validate().unwrap();
    let want = Deployment::parse(corpus::DECOUPLED_SERVER).unwrap();
    for (name, g) in &want.nodes {
        assert!(
            graphs_isomorphic(g, &cut.nodes[name]),
            "{name} differs:\n{}",
            crate::ir::serialize_graph(&cut.nodes[name])
        );
    }
    assert!(matches!(
        cut.channels["reqs"].kind,
        ChannelKind::NetworkAdversarial(_)
    ));
}

#[test]
fn downstream_cut_reproduces_the_decoupled_client_corpus() {
    let r = registry();
    let pushed_graph = Deployment::single_node("main", parse_dsl(corpus::PUSHED).unwrap());
    let opts = CutOptions::for_placement(CutPlacement::Downstream);
    let cut = cut_flow(&pushed_graph, CutPlacement::Downstream, &opts, &r).unwrap();
    cut.validate().unwrap();
    let want = Deployment::parse(corpus::DECOUPLED_CLIENT).unwrap();
    for (name, g) in &want.nodes {
        assert!(
            graphs_isomorphic(g, &cut.nodes[name]),
            "{name} differs:\n{}",
            crate::ir::serialize_graph(&cut.nodes[name])
        );
    }
}

#[test]
fn cutting_into_the_fold_is_refused() {
    let r = registry();
    let orig_graph = parse_dsl(corpus::ORIG).unwrap();
    let gb = orig_graph.nodes_of_kind(OperatorKind::GroupBy)[0];
    let feeder = orig_graph.in_edges(gb)[0].from;
    let d = Deployment::single_node("main", orig_graph.clone());
    let opts = CutOptions::for_placement(CutPlacement::Upstream);
    match cut_flow_at(&d, "main", feeder, gb, &opts, &r) {
        Err(TransformError::UnsafeCut { path }) => {
            assert!(path.iter().any(|s| s.starts_with("group_by")));
        }
        other => panic!("expected UnsafeCut, got {other:?}"),
    }
    // The unchecked variant performs the same rewrite regardless.
    let forced = force_cut_flow_at(&d, "main", feeder, gb, &opts).unwrap();
    forced.validate().unwrap();
    assert_eq!(forced.nodes.len(), 2);
}

#[test]
fn non_separating_cut_is_refused() {
    // An edge inside a tee/merge diamond does not split the flow.
    let dsl = "\
source_stream(shopping_ssiv) -> t;
t = tee();
t[a] -> map(fmt_kv) -> m;
t[b] -> map(detag) -> m;
m = merge() -> map(tag_out_addr) -> dest_sink_serde(out);
";
    let g = parse_dsl(dsl).unwrap();
    let merge = g.nodes_of_kind(OperatorKind::Merge)[0];
    let diamond_arm = g
        .in_edges(merge)
        .iter()
        .map(|e| e.from)
        .find(|&id| g.node(id).unwrap().first_ident() == Some("fmt_kv"))
        .unwrap();
    let d = Deployment::single_node("main", g.clone());
    let opts = CutOptions::for_placement(CutPlacement::Upstream);
    match force_cut_flow_at(&d, "main", diamond_arm, merge, &opts) {
        Err(TransformError::PreconditionFailed { reason, .. }) => {
            assert!(reason.contains("separate"), "{reason}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn replication_reproduces_the_replica_corpus() {
    let r = registry();
    let base = Deployment::parse(corpus::DECOUPLED_SERVER).unwrap();
    let replicated =
        replicate_with_broadcast(&base, "server", 3, &ReplicateOptions::default(), &r).unwrap();
    replicated.validate().unwrap();
    assert_eq!(replicated.nodes.len(), 4); // client + 3 replicas
    let want = parse_dsl(corpus::REPLICA).unwrap();
    for name in ["server1", "server2", "server3"] {
        assert!(
            graphs_isomorphic(&replicated.nodes[name], &want),
            "{name} differs:\n{}",
            crate::ir::serialize_graph(&replicated.nodes[name])
        );
    }
    // Broadcast membership is shared: one channel, all replicas on both ends.
    let bcast = &replicated.channels["broadcast"];
    assert_eq!(bcast.producers.len(), 3);
    assert_eq!(bcast.consumers.len(), 3);
    // Client routing became a seeded assignment over the membership list.
    let client = &replicated.nodes["client"];
    let map = client.nodes_of_kind(OperatorKind::Map)[0];
    assert_eq!(client.node(map).unwrap().first_ident(), Some("route_client"));
    assert_eq!(replicated.statics["server_addrs"].len(), 3);
}

#[test]
fn replication_refuses_order_dependent_state() {
    let r = registry();
    let fold = Deployment::single_node("main", parse_dsl(corpus::ORIG).unwrap());
    assert!(matches!(
        replicate_with_broadcast(&fold, "main", 2, &ReplicateOptions::default(), &r),
        Err(TransformError::PreconditionFailed { .. })
    ));
}

#[test]
fn elide_subaggregation_removes_the_first_group() {
    let r = registry();
    let replica_graph = parse_dsl(corpus::REPLICA).unwrap();
    let elided = elide_subaggregation(&replica_graph, &r).unwrap();
    assert!(elided.validate().is_empty());
    assert_eq!(elided.nodes_of_kind(OperatorKind::GroupBy).len(), 1);
    // The survivor is the post-merge group.
    let gb = elided.nodes_of_kind(OperatorKind::GroupBy)[0];
    let feeder = elided.in_edges(gb)[0].from;
    assert_eq!(elided.node(feeder).unwrap().kind, OperatorKind::Merge);

    // A single-group graph has nothing to elide.
    let ssiv_graph = parse_dsl(corpus::SSIV_UPGRADED).unwrap();
    assert!(matches!(
        elide_subaggregation(&ssiv_graph, &r),
        Err(TransformError::PreconditionFailed { .. })
    ));
}

#[test]
fn insert_odiff_append_rewrites_a_bp_edge() {
    let r = registry();
    let dsl = "\
source_stream(chain_bp) -> map(tag_out_addr) -> dest_sink_serde(out);
";
    let g = parse_dsl(dsl).unwrap();
    let source = g.nodes_of_kind(OperatorKind::SourceStream)[0];
    let map = g.nodes_of_kind(OperatorKind::Map)[0];
    let rewritten = insert_odiff_append(&g, source, map, &r).unwrap();
    assert!(rewritten.validate().is_empty());
    assert_eq!(rewritten.nodes_of_kind(OperatorKind::Odiff).len(), 1);
    assert_eq!(rewritten.nodes_of_kind(OperatorKind::Append).len(), 1);

    // A non-prefix edge is refused.
    let raw = parse_dsl("source_stream(shopping) -> map(tag_out_addr) -> dest_sink_serde(out);")
        .unwrap();
    let source = raw.nodes_of_kind(OperatorKind::SourceStream)[0];
    let map = raw.nodes_of_kind(OperatorKind::Map)[0];
    assert!(matches!(
        insert_odiff_append(&raw, source, map, &r),
        Err(TransformError::PreconditionFailed { .. })
    ));
}

#[test]
fn push_through_odiff_moves_the_pointwise_map() {
    let r = registry();
    let dsl = "\
source_stream(chain_bp) -> odiff() -> append() -> map(uppercase_items) -> dest_sink_serde(out);
";
    let g = parse_dsl(dsl).unwrap();
    let pushed = push_through_odiff(&g, &r).unwrap();
    assert!(pushed.validate().is_empty());
    let odiff = pushed.nodes_of_kind(OperatorKind::Odiff)[0];
    let next = pushed.out_edges(odiff)[0].to;
    assert_eq!(pushed.node(next).unwrap().kind, OperatorKind::Map);
    let append = pushed.out_edges(next)[0].to;
    assert_eq!(pushed.node(append).unwrap().kind, OperatorKind::Append);

    // Non-pointwise maps stay put.
    let dsl = "\
source_stream(chain_bp) -> odiff() -> append() -> map(tag_out_addr) -> dest_sink_serde(out);
";
    let g = parse_dsl(dsl).unwrap();
    assert!(matches!(
        push_through_odiff(&g, &r),
        Err(TransformError::PreconditionFailed { .. })
    ));
}

#[test]
fn fuse_append_deletes_the_reassembler() {
    let r = registry();
    let dsl = "\
source_stream(chain_bp) -> odiff() -> append() -> group_by(ssiv_bot, ssiv_merge) -> map(tag_out_addr) -> dest_sink_serde(out);
";
    let g = parse_dsl(dsl).unwrap();
    let fused = fuse_append(&g, &r).unwrap();
    assert!(fused.validate().is_empty());
    assert!(fused.nodes_of_kind(OperatorKind::Append).is_empty());
    // The group absorbs the deltas directly.
    let gb = fused.nodes_of_kind(OperatorKind::GroupBy)[0];
    let feeder = fused.in_edges(gb)[0].from;
    assert_eq!(fused.node(feeder).unwrap().kind, OperatorKind::Odiff);
}

#[test]
fn script_chain_walks_orig_to_decoupled_server() {
    let r = registry();
    let start = Deployment::single_node("main", parse_dsl(corpus::ORIG).unwrap());
    let start = Deployment { fds: vec![corpus::client_class_fd()], ..start };
    let script = "\
upgrade_to_bp
upgrade_to_ssiv
push_groupby_through_join
cut_flow placement=upstream
";
    let (result, applied) = apply_script(&start, script, &r).unwrap();
    assert_eq!(applied.len(), 4);
    let want = Deployment::parse(corpus::DECOUPLED_SERVER).unwrap();
    for (name, g) in &want.nodes {
        assert!(graphs_isomorphic(g, &result.nodes[name]), "{name} differs");
    }
}

#[test]
fn script_stops_at_the_first_failure() {
    let r = registry();
    let start = Deployment::single_node("main", parse_dsl(corpus::SSIV_UPGRADED).unwrap());
    // No FD annotation on the deployment.
    let script = "push_groupby_through_join\n";
    match apply_script(&start, script, &r) {
        Err(ScriptError::Rule { rule, source: TransformError::MissingFd { .. }, .. }) => {
            assert_eq!(rule, "push_groupby_through_join");
        }
        other => panic!("unexpected {other:?}"),
    }

    // Empty scripts are the identity.
    let (out, applied) = apply_script(&start, "", &r).unwrap();
    assert!(applied.is_empty());
    assert!(graphs_isomorphic(&out.nodes["main"], &start.nodes["main"]));
}

#[test]
fn script_rejects_network_edges_for_odiff_append() {
    let r = registry();
    let start = Deployment::parse(corpus::DECOUPLED_SERVER).unwrap();
    let script = "insert_odiff_append node=server from=channel:reqs to=map\n";
    match apply_script(&start, script, &r) {
        Err(ScriptError::Rule { source: TransformError::PreconditionFailed { reason, .. }, .. }) => {
            assert!(reason.contains("network"), "{reason}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn catalog_names_match_the_script_dispatcher() {
    let r = registry();
    let start = Deployment::single_node("main", parse_dsl(corpus::ORIG).unwrap());
    for rule in rule_catalog() {
        // Every catalog name must at least reach its rule (no unknown-rule
        // parse error); most fail preconditions on this input, which is
        // fine.
        match apply_script(&start, rule.name, &r) {
            Ok(_) | Err(ScriptError::Rule { .. }) => {}
            Err(ScriptError::Parse { msg, .. }) => {
                assert!(
                    msg.contains("needs"),
                    "catalog rule `{}` unknown to the dispatcher: {msg}",
                    rule.name
                );
            }
        }
        assert!(!rule.precondition.is_empty());
    }
    match apply_script(&start, "definitely_not_a_rule", &r) {
        Err(ScriptError::Parse { msg, .. }) => assert!(msg.contains("cut_flow"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn upgraded_variants_differ_only_in_params() {
    let g3 = parse_dsl(corpus::BP_UPGRADED).unwrap();
    let g4 = parse_dsl(corpus::SSIV_UPGRADED).unwrap();
    assert!(graphs_isomorphic_modulo_params(&g3, &g4));
    assert!(!graphs_isomorphic(&g3, &g4));
}
