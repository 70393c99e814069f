//! The editable tensor-network graph.
//!
//! A [`NetworkState`] holds tensors with ordered legs and junctions (snap
//! groups of leg tips). User actions are applied through
//! [`NetworkState::apply`], which either fails without touching the state or
//! returns the [`NetworkEvent`]s that the lowering stage turns into IR nodes.
//!
//! Only ranks are modelled here; actual dimension sizes are left open until a
//! program is evaluated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyed::{self, Keyed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TensorId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LegId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JunctionId(pub u64);

impl fmt::Display for TensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

impl fmt::Display for LegId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "leg {}", self.0)
    }
}

impl fmt::Display for JunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "junction {}", self.0)
    }
}

/// Canvas coordinates. Only the UI cares about these.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Whether a tensor is a program argument or the result of an operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Input,
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorNode {
    pub id: TensorId,
    pub kind: TensorKind,
    /// Leg order is dimension order.
    pub legs: Vec<LegId>,
    pub position: Point,
}

impl TensorNode {
    pub fn rank(&self) -> usize {
        self.legs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub id: LegId,
    pub owner: TensorId,
    pub position_in_owner: usize,
    pub junction: Option<JunctionId>,
}

/// A snap group of two or more leg tips. May span three or more tensors
/// (hyperedge) or hold two legs of one tensor (trace).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub id: JunctionId,
    pub members: BTreeSet<LegId>,
}

impl Keyed for TensorNode {
    type Key = TensorId;
    fn key(&self) -> TensorId {
        self.id
    }
}

impl Keyed for Leg {
    type Key = LegId;
    fn key(&self) -> LegId {
        self.id
    }
}

impl Keyed for Junction {
    type Key = JunctionId;
    fn key(&self) -> JunctionId {
        self.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMethod {
    Qr,
    Svd,
}

/// Truncation parameters of an SVD split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvdParams {
    /// Singular values `<=` this absolute threshold are discarded.
    #[serde(default)]
    pub sv_cutoff_abs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bond: Option<usize>,
}

impl Default for SvdParams {
    fn default() -> Self {
        SvdParams {
            sv_cutoff_abs: 0.0,
            max_bond: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UserAction {
    CreateTensor {
        #[serde(default)]
        position: Point,
    },
    AttachLeg {
        tensor: TensorId,
    },
    ConnectLegs {
        a: LegId,
        b: LegId,
    },
    DisconnectLeg {
        leg: LegId,
    },
    Contract {
        tensors: Vec<TensorId>,
    },
    Split {
        tensor: TensorId,
        row_dims: Vec<usize>,
        col_dims: Vec<usize>,
        kind: SplitMethod,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        svd_params: Option<SvdParams>,
    },
    MoveTensor {
        tensor: TensorId,
        position: Point,
    },
}

/// One operand of a contraction as seen by the network: for each leg in
/// dimension order, the junction it belongs to (if any).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractOperand {
    pub tensor: TensorId,
    pub legs: Vec<Option<JunctionId>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitKind {
    Qr,
    Svd(SvdParams),
}

impl SplitKind {
    pub fn output_count(&self) -> usize {
        match self {
            SplitKind::Qr => 2,
            SplitKind::Svd(_) => 3,
        }
    }
}

/// Structural effect of an accepted action, consumed by lowering.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkEvent {
    TensorCreated {
        tensor: TensorId,
    },
    LegAttached {
        tensor: TensorId,
        leg: LegId,
        rank: usize,
    },
    /// Operands are listed in ascending tensor id.
    Contracted {
        output: TensorId,
        operands: Vec<ContractOperand>,
    },
    /// Output dimension `k` is operand dimension `perm[k]`.
    Transposed {
        output: TensorId,
        operand: TensorId,
        perm: Vec<usize>,
    },
    Split {
        operand: TensorId,
        leading: usize,
        kind: SplitKind,
        /// Q, R or U, S, V in that order.
        outputs: Vec<TensorId>,
        bond: JunctionId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("unknown tensor {0}")]
    UnknownTensor(TensorId),
    #[error("unknown {0}")]
    UnknownLeg(LegId),
    #[error("contraction selection is empty")]
    EmptySelection,
    #[error("{junction} joins selected tensor {inside} with unselected tensor {outside}")]
    ContractNotSingleComponent {
        junction: JunctionId,
        inside: TensorId,
        outside: TensorId,
    },
    #[error("invalid split partition: {0}")]
    InvalidSplitPartition(String),
    #[error("invalid svd parameters: {0}")]
    InvalidSvdParams(String),
    #[error("{a} and {b} are already connected")]
    LegAlreadyConnected { a: LegId, b: LegId },
    #[error("{0} is not connected")]
    LegNotConnected(LegId),
    #[error("legs can only be attached to input tensors, {0} is derived")]
    LegOnDerivedTensor(TensorId),
}

impl NetworkError {
    /// Stable machine-readable error family.
    pub fn code(&self) -> &'static str {
        match self {
            NetworkError::UnknownTensor(_) | NetworkError::UnknownLeg(_) => "unknown_entity",
            NetworkError::EmptySelection | NetworkError::ContractNotSingleComponent { .. } => {
                "contract_not_single_component"
            }
            NetworkError::InvalidSplitPartition(_) => "invalid_split_partition",
            NetworkError::InvalidSvdParams(_) => "invalid_svd_params",
            NetworkError::LegAlreadyConnected { .. } => "leg_already_connected",
            NetworkError::LegNotConnected(_) => "leg_not_connected",
            NetworkError::LegOnDerivedTensor(_) => "leg_on_derived_tensor",
        }
    }
}

/// Offsets of split outputs relative to the split tensor, canvas units.
const SPLIT_SPREAD: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkState {
    #[serde(with = "keyed")]
    tensors: BTreeMap<TensorId, TensorNode>,
    #[serde(with = "keyed")]
    legs: BTreeMap<LegId, Leg>,
    #[serde(with = "keyed")]
    junctions: BTreeMap<JunctionId, Junction>,
    next_tensor_id: u64,
    next_leg_id: u64,
    next_junction_id: u64,
}

impl NetworkState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &TensorNode> {
        self.tensors.values()
    }

    pub fn tensor(&self, id: TensorId) -> Result<&TensorNode, NetworkError> {
        self.tensors.get(&id).ok_or(NetworkError::UnknownTensor(id))
    }

    pub fn leg(&self, id: LegId) -> Result<&Leg, NetworkError> {
        self.legs.get(&id).ok_or(NetworkError::UnknownLeg(id))
    }

    pub fn junction(&self, id: JunctionId) -> Option<&Junction> {
        self.junctions.get(&id)
    }

    pub fn junctions(&self) -> impl Iterator<Item = &Junction> {
        self.junctions.values()
    }

    pub fn legs(&self) -> impl Iterator<Item = &Leg> {
        self.legs.values()
    }

    pub fn tensor_ids(&self) -> Vec<TensorId> {
        self.tensors.keys().copied().collect()
    }

    /// Number of tensor ids handed out so far, temporaries included.
    pub fn next_tensor_id(&self) -> u64 {
        self.next_tensor_id
    }

    /// Junction of each leg of `tensor`, in dimension order.
    pub fn leg_junctions(&self, tensor: TensorId) -> Result<Vec<Option<JunctionId>>, NetworkError> {
        let node = self.tensor(tensor)?;
        Ok(node.legs.iter().map(|leg| self.legs[leg].junction).collect())
    }

    /// Applies one action. On error the state is left untouched.
    pub fn apply(&mut self, action: &UserAction) -> Result<Vec<NetworkEvent>, NetworkError> {
        match action {
            UserAction::CreateTensor { position } => Ok(vec![self.create_tensor(*position)]),
            UserAction::AttachLeg { tensor } => self.attach_leg(*tensor).map(|e| vec![e]),
            UserAction::ConnectLegs { a, b } => self.connect(*a, *b).map(|_| Vec::new()),
            UserAction::DisconnectLeg { leg } => self.disconnect(*leg).map(|_| Vec::new()),
            UserAction::Contract { tensors } => self.contract(tensors),
            UserAction::Split {
                tensor,
                row_dims,
                col_dims,
                kind,
                svd_params,
            } => {
                let kind = split_kind(*kind, *svd_params)?;
                self.split(*tensor, row_dims, col_dims, kind)
            }
            UserAction::MoveTensor { tensor, position } => {
                let node = self
                    .tensors
                    .get_mut(tensor)
                    .ok_or(NetworkError::UnknownTensor(*tensor))?;
                node.position = *position;
                Ok(Vec::new())
            }
        }
    }

    fn fresh_tensor_id(&mut self) -> TensorId {
        let id = TensorId(self.next_tensor_id);
        self.next_tensor_id += 1;
        id
    }

    fn fresh_leg(&mut self, owner: TensorId, position_in_owner: usize) -> LegId {
        let id = LegId(self.next_leg_id);
        self.next_leg_id += 1;
        self.legs.insert(
            id,
            Leg {
                id,
                owner,
                position_in_owner,
                junction: None,
            },
        );
        id
    }

    fn fresh_junction(&mut self, members: impl IntoIterator<Item = LegId>) -> JunctionId {
        let id = JunctionId(self.next_junction_id);
        self.next_junction_id += 1;
        let members: BTreeSet<LegId> = members.into_iter().collect();
        for leg in &members {
            self.legs.get_mut(leg).expect("junction member exists").junction = Some(id);
        }
        self.junctions.insert(id, Junction { id, members });
        id
    }

    fn create_tensor(&mut self, position: Point) -> NetworkEvent {
        let id = self.fresh_tensor_id();
        self.tensors.insert(
            id,
            TensorNode {
                id,
                kind: TensorKind::Input,
                legs: Vec::new(),
                position,
            },
        );
        NetworkEvent::TensorCreated { tensor: id }
    }

    fn attach_leg(&mut self, tensor: TensorId) -> Result<NetworkEvent, NetworkError> {
        let node = self.tensor(tensor)?;
        if node.kind != TensorKind::Input {
            return Err(NetworkError::LegOnDerivedTensor(tensor));
        }
        let position = node.rank();
        let leg = self.fresh_leg(tensor, position);
        let node = self.tensors.get_mut(&tensor).expect("checked above");
        node.legs.push(leg);
        Ok(NetworkEvent::LegAttached {
            tensor,
            leg,
            rank: node.legs.len(),
        })
    }

    fn connect(&mut self, a: LegId, b: LegId) -> Result<(), NetworkError> {
        let ja = self.leg(a)?.junction;
        let jb = self.leg(b)?.junction;
        if a == b || (ja.is_some() && ja == jb) {
            return Err(NetworkError::LegAlreadyConnected { a, b });
        }
        match (ja, jb) {
            (None, None) => {
                self.fresh_junction([a, b]);
            }
            (Some(j), None) => self.join(j, b),
            (None, Some(j)) => self.join(j, a),
            (Some(ja), Some(jb)) => {
                let (keep, drop) = if ja < jb { (ja, jb) } else { (jb, ja) };
                let moved = self.junctions.remove(&drop).expect("junction exists").members;
                for leg in moved {
                    self.join(keep, leg);
                }
            }
        }
        Ok(())
    }

    fn join(&mut self, junction: JunctionId, leg: LegId) {
        self.junctions
            .get_mut(&junction)
            .expect("junction exists")
            .members
            .insert(leg);
        self.legs.get_mut(&leg).expect("leg exists").junction = Some(junction);
    }

    fn disconnect(&mut self, leg: LegId) -> Result<(), NetworkError> {
        let junction = self.leg(leg)?.junction.ok_or(NetworkError::LegNotConnected(leg))?;
        self.legs.get_mut(&leg).expect("checked").junction = None;
        let group = self.junctions.get_mut(&junction).expect("junction exists");
        group.members.remove(&leg);
        if group.members.len() < 2 {
            let rest = self.junctions.remove(&junction).expect("exists").members;
            for other in rest {
                self.legs.get_mut(&other).expect("member exists").junction = None;
            }
        }
        Ok(())
    }

    /// Partitions `ids` by junction connectivity among themselves.
    /// Components are ordered by their smallest member; members ascend.
    pub fn connected_components(&self, ids: &[TensorId]) -> Result<Vec<Vec<TensorId>>, NetworkError> {
        let selected: BTreeSet<TensorId> = ids.iter().copied().collect();
        for id in &selected {
            self.tensor(*id)?;
        }
        let mut parent: BTreeMap<TensorId, TensorId> = selected.iter().map(|&t| (t, t)).collect();
        fn find(parent: &mut BTreeMap<TensorId, TensorId>, t: TensorId) -> TensorId {
            let mut root = t;
            while parent[&root] != root {
                root = parent[&root];
            }
            let mut cur = t;
            while parent[&cur] != root {
                let next = parent[&cur];
                parent.insert(cur, root);
                cur = next;
            }
            root
        }
        for junction in self.junctions.values() {
            let owners: Vec<TensorId> = junction
                .members
                .iter()
                .map(|leg| self.legs[leg].owner)
                .filter(|owner| selected.contains(owner))
                .collect();
            for pair in owners.windows(2) {
                let (ra, rb) = (find(&mut parent, pair[0]), find(&mut parent, pair[1]));
                if ra != rb {
                    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                    parent.insert(hi, lo);
                }
            }
        }
        let mut groups: BTreeMap<TensorId, Vec<TensorId>> = BTreeMap::new();
        for id in &selected {
            let root = find(&mut parent, *id);
            groups.entry(root).or_default().push(*id);
        }
        Ok(groups.into_values().collect())
    }

    /// Validates a contraction request and returns, per connected component
    /// that carries at least one junction, the operands in ascending id.
    pub fn plan_contract(&self, selection: &[TensorId]) -> Result<Vec<Vec<ContractOperand>>, NetworkError> {
        if selection.is_empty() {
            return Err(NetworkError::EmptySelection);
        }
        let selected: BTreeSet<TensorId> = selection.iter().copied().collect();
        for &id in &selected {
            for leg in &self.tensor(id)?.legs {
                let Some(junction) = self.legs[leg].junction else {
                    continue;
                };
                for member in &self.junctions[&junction].members {
                    let owner = self.legs[member].owner;
                    if !selected.contains(&owner) {
                        return Err(NetworkError::ContractNotSingleComponent {
                            junction,
                            inside: id,
                            outside: owner,
                        });
                    }
                }
            }
        }
        let mut plans = Vec::new();
        for component in self.connected_components(selection)? {
            let operands: Vec<ContractOperand> = component
                .iter()
                .map(|&tensor| ContractOperand {
                    tensor,
                    legs: self.leg_junctions(tensor).expect("validated"),
                })
                .collect();
            if operands.iter().any(|op| op.legs.iter().any(Option::is_some)) {
                plans.push(operands);
            }
        }
        Ok(plans)
    }

    fn contract(&mut self, selection: &[TensorId]) -> Result<Vec<NetworkEvent>, NetworkError> {
        let plans = self.plan_contract(selection)?;
        let mut events = Vec::with_capacity(plans.len());
        for operands in plans {
            let output = self.fresh_tensor_id();
            let mut open_legs = Vec::new();
            let mut closed = BTreeSet::new();
            let (mut sx, mut sy) = (0.0, 0.0);
            for op in &operands {
                let node = self.tensors.remove(&op.tensor).expect("planned");
                sx += node.position.x;
                sy += node.position.y;
                for leg in node.legs {
                    match self.legs[&leg].junction {
                        Some(j) => {
                            closed.insert(j);
                            self.legs.remove(&leg);
                        }
                        None => open_legs.push(leg),
                    }
                }
            }
            for j in closed {
                self.junctions.remove(&j);
            }
            for (pos, leg) in open_legs.iter().enumerate() {
                let leg = self.legs.get_mut(leg).expect("open leg exists");
                leg.owner = output;
                leg.position_in_owner = pos;
            }
            let n = operands.len() as f64;
            self.tensors.insert(
                output,
                TensorNode {
                    id: output,
                    kind: TensorKind::Derived,
                    legs: open_legs,
                    position: Point::new(sx / n, sy / n),
                },
            );
            events.push(NetworkEvent::Contracted { output, operands });
        }
        Ok(events)
    }

    fn split(
        &mut self,
        tensor: TensorId,
        row_dims: &[usize],
        col_dims: &[usize],
        kind: SplitKind,
    ) -> Result<Vec<NetworkEvent>, NetworkError> {
        let node = self.tensor(tensor)?;
        let rank = node.rank();
        let perm = split_permutation(rank, row_dims, col_dims)?;
        let leading = row_dims.len();
        let old_legs = node.legs.clone();
        let origin = node.position;

        let mut events = Vec::new();
        let mut operand = tensor;
        if perm.iter().enumerate().any(|(k, &p)| k != p) {
            let temp = self.fresh_tensor_id();
            events.push(NetworkEvent::Transposed {
                output: temp,
                operand,
                perm: perm.clone(),
            });
            operand = temp;
        }
        self.tensors.remove(&tensor);

        let outputs: Vec<TensorId> = (0..kind.output_count()).map(|_| self.fresh_tensor_id()).collect();
        let rows: Vec<LegId> = perm[..leading].iter().map(|&d| old_legs[d]).collect();
        let cols: Vec<LegId> = perm[leading..].iter().map(|&d| old_legs[d]).collect();

        let mut bond_legs = Vec::new();
        let first = outputs[0];
        let last = *outputs.last().expect("split has outputs");

        let mut left = rows;
        let bond = self.fresh_leg(first, left.len());
        left.push(bond);
        bond_legs.push(bond);
        self.place(
            first,
            TensorKind::Derived,
            left,
            Point::new(origin.x - SPLIT_SPREAD, origin.y),
        );

        if let SplitKind::Svd(_) = kind {
            let middle = outputs[1];
            let bond = self.fresh_leg(middle, 0);
            bond_legs.push(bond);
            self.place(middle, TensorKind::Derived, vec![bond], origin);
        }

        let bond = self.fresh_leg(last, 0);
        bond_legs.push(bond);
        let mut right = vec![bond];
        right.extend(cols);
        self.place(
            last,
            TensorKind::Derived,
            right,
            Point::new(origin.x + SPLIT_SPREAD, origin.y),
        );

        let bond = self.fresh_junction(bond_legs);
        events.push(NetworkEvent::Split {
            operand,
            leading,
            kind,
            outputs,
            bond,
        });
        Ok(events)
    }

    fn place(&mut self, id: TensorId, kind: TensorKind, legs: Vec<LegId>, position: Point) {
        for (pos, leg) in legs.iter().enumerate() {
            let leg = self.legs.get_mut(leg).expect("leg exists");
            leg.owner = id;
            leg.position_in_owner = pos;
        }
        self.tensors.insert(
            id,
            TensorNode {
                id,
                kind,
                legs,
                position,
            },
        );
    }

    /// Referential-integrity violations, empty for a consistent state.
    pub fn integrity_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (id, node) in &self.tensors {
            if id.0 >= self.next_tensor_id {
                out.push(format!("{id} not below the id counter"));
            }
            for (pos, leg) in node.legs.iter().enumerate() {
                match self.legs.get(leg) {
                    None => out.push(format!("{id} references missing {leg}")),
                    Some(l) if l.owner != *id || l.position_in_owner != pos => {
                        out.push(format!("{leg} disagrees with owner {id} at position {pos}"))
                    }
                    _ => {}
                }
            }
        }
        for leg in self.legs.values() {
            if !self.tensors.contains_key(&leg.owner) {
                out.push(format!("{} owned by missing {}", leg.id, leg.owner));
            }
            if let Some(j) = leg.junction {
                if !self.junctions.get(&j).is_some_and(|g| g.members.contains(&leg.id)) {
                    out.push(format!("{} claims {j} which does not list it", leg.id));
                }
            }
        }
        for junction in self.junctions.values() {
            if junction.members.len() < 2 {
                out.push(format!("{} has fewer than two members", junction.id));
            }
            for m in &junction.members {
                if self.legs.get(m).and_then(|l| l.junction) != Some(junction.id) {
                    out.push(format!("{} lists {m} which is not attached to it", junction.id));
                }
            }
        }
        out
    }
}

fn split_kind(method: SplitMethod, params: Option<SvdParams>) -> Result<SplitKind, NetworkError> {
    match (method, params) {
        (SplitMethod::Qr, None) => Ok(SplitKind::Qr),
        (SplitMethod::Qr, Some(_)) => Err(NetworkError::InvalidSvdParams(
            "svd parameters given for a qr split".into(),
        )),
        (SplitMethod::Svd, params) => {
            let params = params.unwrap_or_default();
            if params.sv_cutoff_abs < 0.0 || !params.sv_cutoff_abs.is_finite() {
                return Err(NetworkError::InvalidSvdParams(format!(
                    "cutoff must be a finite non-negative number, got {}",
                    params.sv_cutoff_abs
                )));
            }
            if params.max_bond == Some(0) {
                return Err(NetworkError::InvalidSvdParams("max_bond must be positive".into()));
            }
            Ok(SplitKind::Svd(params))
        }
    }
}

/// `row_dims ++ col_dims`, checked to be a permutation of `0..rank` with both
/// groups non-empty.
pub fn split_permutation(rank: usize, row_dims: &[usize], col_dims: &[usize]) -> Result<Vec<usize>, NetworkError> {
    if row_dims.is_empty() || col_dims.is_empty() {
        return Err(NetworkError::InvalidSplitPartition(
            "row and column groups must both be non-empty".into(),
        ));
    }
    let perm: Vec<usize> = row_dims.iter().chain(col_dims).copied().collect();
    if perm.len() != rank {
        return Err(NetworkError::InvalidSplitPartition(format!(
            "{} dimensions given for a rank-{rank} tensor",
            perm.len()
        )));
    }
    let mut seen = vec![false; rank];
    for &d in &perm {
        if d >= rank || std::mem::replace(&mut seen[d], true) {
            return Err(NetworkError::InvalidSplitPartition(format!(
                "{perm:?} is not a permutation of 0..{rank}"
            )));
        }
    }
    Ok(perm)
}
