//! Per-operator state and single-step semantics.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{NodeId, OperatorKind, OperatorNode, Param};
use crate::lattice::{
    BoundedPrefix, Item, KeyedLattice, LatticeError, LatticePoint, SealedSetIndexed,
};
use crate::registry::{apply_pointwise, FnImpl, FunctionRegistry, RegistryError};
use crate::value::{Attr, Record, Value};

use super::RuntimeError;

/// A step error before node/op context is attached.
#[derive(Debug)]
pub enum StepError {
    Type(String),
    Lattice(LatticeError),
    Registry(RegistryError),
}

impl StepError {
    pub(super) fn contextualize(self, node: &str, op: NodeId) -> RuntimeError {
        match self {
            StepError::Type(msg) => {
                RuntimeError::TypeError { node: node.to_string(), op, msg }
            }
            StepError::Lattice(source) => {
                RuntimeError::Lattice { node: node.to_string(), op, source }
            }
            StepError::Registry(source) => {
                RuntimeError::Registry { node: node.to_string(), op, source }
            }
        }
    }
}

impl From<LatticeError> for StepError {
    fn from(e: LatticeError) -> Self {
        StepError::Lattice(e)
    }
}

impl From<RegistryError> for StepError {
    fn from(e: RegistryError) -> Self {
        StepError::Registry(e)
    }
}

/// Persistent operator state. Join and group_by state only grows; odiff
/// watermarks never decrease.
#[derive(Debug, Clone)]
pub enum OpState {
    Stateless,
    Source {
        records: Vec<Record>,
        cursor: usize,
        drip: bool,
    },
    Join {
        sides: [JoinSide; 2],
    },
    CrossJoin {
        sides: [Vec<Record>; 2],
    },
    GroupLattice {
        state: KeyedLattice,
        /// Key item -> original key attributes, for reconstructing outputs.
        key_attrs: BTreeMap<Item, Vec<(String, Value)>>,
        payload_name: Option<String>,
    },
    GroupFold {
        init: String,
        step: String,
        accs: BTreeMap<Item, (Vec<(String, Value)>, Value)>,
        payload_name: Option<String>,
        flush_requested: bool,
        flushed: bool,
    },
    Unique {
        seen: BTreeSet<String>,
    },
    Odiff {
        watermarks: BTreeMap<Item, usize>,
    },
    Append {
        buffers: BTreeMap<Item, AppendBuffer>,
        fixed_len: Option<usize>,
    },
}

/// Payload value -> arrival count.
pub type PayloadCounts = BTreeMap<Value, u64>;

#[derive(Debug, Clone, Default)]
pub struct JoinSide {
    /// Key item -> (key attributes, payload multiset). Streams carry
    /// multiset semantics: two identical requests are two requests.
    pub entries: BTreeMap<Item, (Vec<Attr>, PayloadCounts)>,
    pub payload_name: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct AppendBuffer {
    entries: BTreeMap<usize, Item>,
    len: Option<usize>,
    emitted: usize,
    emitted_any: bool,
    key_attrs: Vec<(String, Value)>,
    payload_name: String,
}

impl OpState {
    pub fn new(
        op: &OperatorNode,
        registry: &FunctionRegistry,
        mut resolve_stream: impl FnMut(&str) -> Result<Vec<Record>, RuntimeError>,
    ) -> Result<OpState, RuntimeError> {
        Ok(match op.kind {
            OperatorKind::SourceIter | OperatorKind::SourceStream => {
                let name = op.first_ident().unwrap_or_default();
                OpState::Source {
                    records: resolve_stream(name)?,
                    cursor: 0,
                    drip: op.kind == OperatorKind::SourceStream,
                }
            }
            OperatorKind::Join => OpState::Join { sides: [JoinSide::default(), JoinSide::default()] },
            OperatorKind::CrossJoin => OpState::CrossJoin { sides: [Vec::new(), Vec::new()] },
            OperatorKind::GroupBy => {
                let init = op.params[0].to_string();
                let step = op.params[1].to_string();
                if registry.is_lattice_group(&init, &step) {
                    OpState::GroupLattice {
                        state: KeyedLattice::new(),
                        key_attrs: BTreeMap::new(),
                        payload_name: None,
                    }
                } else {
                    OpState::GroupFold {
                        init,
                        step,
                        accs: BTreeMap::new(),
                        payload_name: None,
                        flush_requested: false,
                        flushed: false,
                    }
                }
            }
            OperatorKind::Unique => OpState::Unique { seen: BTreeSet::new() },
            OperatorKind::Odiff => OpState::Odiff { watermarks: BTreeMap::new() },
            OperatorKind::Append => OpState::Append {
                buffers: BTreeMap::new(),
                fixed_len: op.params.first().and_then(|p| p.as_int()).map(|n| n.max(0) as usize),
            },
            _ => OpState::Stateless,
        })
    }

    pub fn source_exhausted(&self) -> bool {
        match self {
            OpState::Source { records, cursor, .. } => *cursor >= records.len(),
            _ => true,
        }
    }

    /// Records this source releases this round: everything at once for
    /// `source_iter`, one per tick for `source_stream`.
    pub fn source_batch(&mut self, _kind: OperatorKind) -> Vec<Record> {
        match self {
            OpState::Source { records, cursor, drip } => {
                if *cursor >= records.len() {
                    return Vec::new();
                }
                if *drip {
                    let r = records[*cursor].clone();
                    *cursor += 1;
                    vec![r]
                } else {
                    let out = records[*cursor..].to_vec();
                    *cursor = records.len();
                    out
                }
            }
            _ => Vec::new(),
        }
    }

    pub fn fold_unflushed(&self) -> bool {
        matches!(self, OpState::GroupFold { flushed: false, .. })
    }

    /// Marks a settled fold for flushing; returns true if newly marked.
    pub fn request_fold_flush(&mut self) -> bool {
        match self {
            OpState::GroupFold { flush_requested, flushed, .. } if !*flushed => {
                *flush_requested = true;
                true
            }
            _ => false,
        }
    }

    pub fn keyed_lattice(&self) -> Option<&KeyedLattice> {
        match self {
            OpState::GroupLattice { state, .. } => Some(state),
            _ => None,
        }
    }
}

pub struct StepResult {
    pub outputs: Vec<(Option<String>, Record)>,
    /// (key, point) pairs for group_by growth trace events.
    pub state_events: Vec<(String, String)>,
    pub item_applications: u64,
}

/// Splits a record into (key attrs, payload). The payload is the last
/// attribute.
fn split(record: &Record) -> Result<(Vec<Attr>, Attr), StepError> {
    record
        .split_key_value()
        .ok_or_else(|| StepError::Type(format!("empty record: {record}")))
}

fn key_item(key_attrs: &[(String, Value)]) -> Item {
    Record::new(key_attrs.to_vec()).encode().as_str().into()
}

fn lattice_payload(value: &Value) -> Result<&LatticePoint, StepError> {
    match value {
        Value::Lattice(p) => Ok(p),
        other => Err(StepError::Type(format!("expected a lattice payload, got {other}"))),
    }
}

/// Applies one operator to its per-port input batches, mutating its state
/// and returning port-labelled outputs.
pub(super) fn step_with_events(
    op: &OperatorNode,
    state: &mut OpState,
    inputs: &[Vec<Record>],
    registry: &FunctionRegistry,
    want_state_events: bool,
) -> Result<StepResult, StepError> {
    let mut result =
        StepResult { outputs: Vec::new(), state_events: Vec::new(), item_applications: 0 };
    match op.kind {
        OperatorKind::Map => {
            let fn_name = op.first_ident().ok_or_else(|| {
                StepError::Type("map needs a function name".to_string())
            })?;
            let entry = registry.get(fn_name)?;
            for record in inputs.iter().flatten() {
                let out = match &entry.imp {
                    FnImpl::Map(f) => f(record, &op.params[1..])?,
                    FnImpl::PointwiseMap(f) => {
                        let (key, (name, value)) = split(record)?;
                        let (rewritten, n) = apply_pointwise(*f, &value);
                        result.item_applications += n;
                        let mut attrs = key;
                        attrs.push((name, rewritten));
                        Record::new(attrs)
                    }
                    _ => {
                        return Err(StepError::Type(format!(
                            "`{fn_name}` is not a map function"
                        )))
                    }
                };
                result.outputs.push((None, out));
            }
        }
        OperatorKind::Join => {
            // Stream semantics: each arriving record joins the other side's
            // full history with multiplicity. Idempotence under duplicated
            // delivery is the downstream lattice merge's job, not the
            // join's.
            let OpState::Join { sides } = state else { unreachable!() };
            for port in 0..2 {
                for record in &inputs[port] {
                    let (key, (pname, payload)) = split(record)?;
                    let k = key_item(&key);
                    {
                        let side = &mut sides[port];
                        side.payload_name.get_or_insert_with(|| pname.clone());
                        let entry = side
                            .entries
                            .entry(k.clone())
                            .or_insert_with(|| (key.clone(), BTreeMap::new()));
                        *entry.1.entry(payload.clone()).or_default() += 1;
                    }
                    let other = &sides[1 - port];
                    if let Some((okey, opayloads)) = other.entries.get(&k) {
                        let oname = other.payload_name.clone().unwrap_or_else(|| "v".to_string());
                        for (opayload, &count) in opayloads {
                            for _ in 0..count {
                                let (lv, ln, rv, rn) = if port == 0 {
                                    (payload.clone(), pname.clone(), opayload.clone(), oname.clone())
                                } else {
                                    (opayload.clone(), oname.clone(), payload.clone(), pname.clone())
                                };
                                let mut attrs = okey.clone();
                                attrs.push((ln, lv));
                                attrs.push((rn, rv));
                                result.outputs.push((None, Record::new(attrs)));
                            }
                        }
                    }
                }
            }
        }
        OperatorKind::CrossJoin => {
            let OpState::CrossJoin { sides } = state else { unreachable!() };
            for port in 0..2 {
                for record in &inputs[port] {
                    sides[port].push(record.clone());
                    let (own, other) = if port == 0 {
                        (&sides[0], &sides[1])
                    } else {
                        (&sides[1], &sides[0])
                    };
                    let record = own.last().unwrap();
                    for orec in other {
                        let (l, r) = if port == 0 { (record, orec) } else { (orec, record) };
                        let mut attrs = l.attrs().to_vec();
                        attrs.extend(r.attrs().iter().cloned());
                        result.outputs.push((None, Record::new(attrs)));
                    }
                }
            }
        }
        OperatorKind::GroupBy => match state {
            OpState::GroupLattice { state, key_attrs, payload_name } => {
                for record in inputs.iter().flatten() {
                    let (key, (pname, payload)) = split(record)?;
                    let point = lattice_payload(&payload)?;
                    let k = key_item(&key);
                    payload_name.get_or_insert_with(|| pname.clone());
                    key_attrs.entry(k.clone()).or_insert_with(|| key.clone());
                    let (merged, grew) = state.merge_at(k.clone(), point)?;
                    if grew {
                        if want_state_events {
                            result.state_events.push((k.to_string(), merged.to_string()));
                        }
                        let mut attrs = key;
                        attrs.push((
                            payload_name.clone().unwrap_or_else(|| "v".to_string()),
                            Value::Lattice(merged),
                        ));
                        result.outputs.push((None, Record::new(attrs)));
                    }
                }
            }
            OpState::GroupFold {
                init,
                step,
                accs,
                payload_name,
                flush_requested,
                flushed,
            } => {
                let init_fn = match &registry.get(init)?.imp {
                    FnImpl::FoldInit(f) => *f,
                    _ => {
                        return Err(StepError::Type(format!(
                            "`{init}` is not a fold initializer"
                        )))
                    }
                };
                let step_fn = match &registry.get(step)?.imp {
                    FnImpl::FoldStep(f) => *f,
                    _ => return Err(StepError::Type(format!("`{step}` is not a fold step"))),
                };
                for record in inputs.iter().flatten() {
                    let (key, (pname, payload)) = split(record)?;
                    let k = key_item(&key);
                    payload_name.get_or_insert_with(|| pname.clone());
                    let entry = accs.entry(k).or_insert_with(|| (key, init_fn()));
                    entry.1 = step_fn(entry.1.clone(), &payload);
                }
                if *flush_requested && !*flushed {
                    for (key, acc) in accs.values() {
                        let mut attrs = key.clone();
                        attrs.push((
                            payload_name.clone().unwrap_or_else(|| "v".to_string()),
                            acc.clone(),
                        ));
                        result.outputs.push((None, Record::new(attrs)));
                    }
                    *flushed = true;
                    *flush_requested = false;
                }
            }
            _ => unreachable!(),
        },
        OperatorKind::Tee => {
            // The runtime copies the default-port output onto every named
            // port edge; emit one record per named port.
            for record in inputs.iter().flatten() {
                result.outputs.push((None, record.clone()));
            }
        }
        OperatorKind::Merge => {
            for record in inputs.iter().flatten() {
                result.outputs.push((None, record.clone()));
            }
        }
        OperatorKind::Unique => {
            let OpState::Unique { seen } = state else { unreachable!() };
            for record in inputs.iter().flatten() {
                if seen.insert(record.encode()) {
                    result.outputs.push((None, record.clone()));
                }
            }
        }
        OperatorKind::Odiff => {
            let OpState::Odiff { watermarks } = state else { unreachable!() };
            for record in inputs.iter().flatten() {
                let (key, (pname, payload)) = split(record)?;
                let point = match lattice_payload(&payload)? {
                    LatticePoint::Bp(p) => p,
                    other => {
                        return Err(StepError::Type(format!(
                            "odiff expects bounded-prefix points, got {other}"
                        )))
                    }
                };
                let k = key_item(&key);
                let wm = watermarks.entry(k).or_insert(0);
                for pos in *wm..point.prefix().len() {
                    let singleton = SealedSetIndexed::singleton(
                        pos,
                        point.prefix()[pos].clone(),
                        point.declared_len(),
                    )?;
                    let mut attrs = key.clone();
                    attrs.push((pname.clone(), Value::Lattice(LatticePoint::Ssiv(singleton))));
                    result.outputs.push((None, Record::new(attrs)));
                }
                *wm = (*wm).max(point.prefix().len());
            }
        }
        OperatorKind::Append => {
            let OpState::Append { buffers, fixed_len } = state else { unreachable!() };
            for record in inputs.iter().flatten() {
                let (key, (pname, payload)) = split(record)?;
                let point = match lattice_payload(&payload)? {
                    LatticePoint::Ssiv(p) => p.clone(),
                    other => {
                        return Err(StepError::Type(format!(
                            "append expects indexed singletons, got {other}"
                        )))
                    }
                };
                let k = key_item(&key);
                let buf = buffers.entry(k).or_insert_with(|| AppendBuffer {
                    len: *fixed_len,
                    key_attrs: key.clone(),
                    payload_name: pname.clone(),
                    ..AppendBuffer::default()
                });
                for (&pos, item) in point.entries() {
                    if let Some(prev) = buf.entries.get(&pos) {
                        if prev != item {
                            return Err(LatticeError::ConflictingEntry {
                                pos,
                                left: prev.to_string(),
                                right: item.to_string(),
                            }
                            .into());
                        }
                    }
                    buf.entries.insert(pos, item.clone());
                }
                if let Some(seal) = point.seal() {
                    match buf.len {
                        Some(prev) if prev != seal => {
                            return Err(LatticeError::ConflictingSeal(prev, seal).into())
                        }
                        _ => buf.len = Some(seal),
                    }
                }
                // Emit when the contiguous prefix grows; an empty sealed
                // session emits its (empty) top once.
                let mut contiguous = 0;
                while buf.entries.contains_key(&contiguous) {
                    contiguous += 1;
                }
                if contiguous > buf.emitted || (!buf.emitted_any && buf.len == Some(0)) {
                    buf.emitted = contiguous;
                    buf.emitted_any = true;
                    let prefix: Vec<Item> =
                        (0..contiguous).map(|i| buf.entries[&i].clone()).collect();
                    let bp = BoundedPrefix::new(prefix, buf.len)?;
                    let mut attrs = buf.key_attrs.clone();
                    attrs.push((buf.payload_name.clone(), Value::Lattice(LatticePoint::Bp(bp))));
                    result.outputs.push((None, Record::new(attrs)));
                }
            }
        }
        kind => {
            return Err(StepError::Type(format!(
                "step_operator does not handle {kind} (executor-level operator)"
            )))
        }
    }
    Ok(result)
}

/// Public single-step entry point for the pure operator kinds. Sources and
/// sinks are driven by the executor, which owns streams and channels.
pub fn step_operator(
    op: &OperatorNode,
    state: &mut OpState,
    inputs: &[Vec<Record>],
    registry: &FunctionRegistry,
) -> Result<Vec<(Option<String>, Record)>, RuntimeError> {
    step_with_events(op, state, inputs, registry, false)
        .map(|r| r.outputs)
        .map_err(|e| e.contextualize("<direct>", op.id))
}

/// Builds a detached operator node for direct stepping in tests.
pub fn standalone_op(kind: OperatorKind, params: Vec<Param>) -> OperatorNode {
    OperatorNode { id: 0, kind, params }
}
