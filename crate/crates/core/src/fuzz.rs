//! Random valid action scripts with consistent dimension sizes.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::lowering::Lowerer;
use crate::network::{LegId, NetworkEvent, Point, SplitMethod, SvdParams, TensorId, TensorKind, UserAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuzzConfig {
    pub max_inputs: usize,
    pub max_input_rank: usize,
    pub max_legs: usize,
    pub max_split_rank: usize,
    /// Upper bound on the rank of any live tensor.
    pub max_rank: usize,
    pub min_dim: usize,
    pub max_dim: usize,
    pub actions: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            max_inputs: 6,
            max_input_rank: 4,
            max_legs: 14,
            max_split_rank: 5,
            max_rank: 6,
            min_dim: 2,
            max_dim: 4,
            actions: 32,
        }
    }
}

/// An accepted action sequence plus a shape for every input tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzCase {
    pub actions: Vec<UserAction>,
    pub shapes: BTreeMap<TensorId, Vec<usize>>,
}

struct Builder {
    lowerer: Lowerer,
    actions: Vec<UserAction>,
    attached: BTreeMap<TensorId, Vec<LegId>>,
    /// Legs created for split bonds; never rewired.
    bond_legs: BTreeSet<LegId>,
    connections: Vec<(LegId, LegId)>,
}

impl Builder {
    fn try_apply(&mut self, action: UserAction, cfg: &FuzzConfig) -> bool {
        let mut trial = self.lowerer.clone();
        let Ok(events) = trial.apply(&action) else { return false };
        if trial.state().tensors().any(|t| t.rank() > cfg.max_rank) {
            return false;
        }
        for e in &events {
            match e {
                NetworkEvent::LegAttached { tensor, leg, .. } => {
                    self.attached.entry(*tensor).or_default().push(*leg);
                }
                NetworkEvent::TensorCreated { tensor } => {
                    self.attached.entry(*tensor).or_default();
                }
                NetworkEvent::Split { outputs, .. } => {
                    let known: BTreeSet<LegId> = self.attached.values().flatten().copied().collect();
                    for t in outputs {
                        let node = trial.state().tensor(*t).expect("split output is live");
                        self.bond_legs.extend(node.legs.iter().filter(|l| !known.contains(l)));
                    }
                }
                _ => {}
            }
        }
        if let UserAction::ConnectLegs { a, b } = action {
            self.connections.push((a, b));
        }
        self.lowerer = trial;
        self.actions.push(action);
        true
    }

    fn live(&self) -> Vec<TensorId> {
        self.lowerer.state().tensor_ids()
    }

    fn live_inputs(&self) -> Vec<TensorId> {
        self.lowerer
            .state()
            .tensors()
            .filter(|t| t.kind == TensorKind::Input)
            .map(|t| t.id)
            .collect()
    }

    fn rewirable_legs(&self) -> Vec<(LegId, bool)> {
        self.lowerer
            .state()
            .legs()
            .filter(|l| !self.bond_legs.contains(&l.id))
            .map(|l| (l.id, l.junction.is_some()))
            .collect()
    }
}

fn random_split(b: &Builder, rng: &mut impl Rng, cfg: &FuzzConfig) -> Option<UserAction> {
    let state = b.lowerer.state();
    let candidates: Vec<(TensorId, usize)> = state
        .tensors()
        .filter(|t| (2..=cfg.max_split_rank).contains(&t.rank()))
        .map(|t| (t.id, t.rank()))
        .collect();
    let edge_bond: Vec<(TensorId, usize)> = candidates
        .iter()
        .copied()
        .filter(|(t, r)| {
            *r > 2 && {
                let legs = &state.tensor(*t).expect("candidate is live").legs;
                b.bond_legs.contains(&legs[0]) || b.bond_legs.contains(&legs[r - 1])
            }
        })
        .collect();
    let wide: Vec<(TensorId, usize)> = candidates.iter().copied().filter(|(_, r)| *r > 2).collect();
    let pool = if !edge_bond.is_empty() && rng.random_bool(0.6) {
        &edge_bond
    } else if !wide.is_empty() && rng.random_bool(0.5) {
        &wide
    } else {
        &candidates
    };
    let &(tensor, rank) = pool.choose(rng)?;
    let node = state.tensor(tensor).ok()?;
    let bond_at: Vec<usize> = node
        .legs
        .iter()
        .enumerate()
        .filter(|(_, l)| b.bond_legs.contains(l))
        .map(|(i, _)| i)
        .collect();

    let mut dims: Vec<usize> = (0..rank).collect();
    dims.shuffle(rng);
    // Wide row blocks give factors of rank three or more, which can be
    // permuted without touching the bond.
    let leading = if rank > 2 && rng.random_bool(0.4) {
        rank - 1
    } else {
        rng.random_range(1..rank)
    };
    // Keep a trailing bond last or a leading bond first, the shape the
    // transpose-through-QR rewrite looks for.
    if let Some(&bond) = bond_at.first() {
        if (bond == 0 || bond == rank - 1) && rng.random_bool(0.75) {
            dims.retain(|&d| d != bond);
            if dims.windows(2).all(|w| w[0] < w[1]) {
                dims.reverse();
            }
            if bond == 0 {
                dims.insert(0, bond);
            } else {
                dims.push(bond);
            }
        }
    }
    let (rows, cols) = dims.split_at(leading);
    Some(split_action(tensor, rows, cols, !bond_at.is_empty(), rng))
}

/// Split factors have degenerate spectra (an isometry has all singular
/// values equal to one), where truncation picks an arbitrary subspace. Those
/// are only split without truncation.
fn split_action(tensor: TensorId, rows: &[usize], cols: &[usize], is_factor: bool, rng: &mut impl Rng) -> UserAction {
    let qr_odds = if is_factor { 0.85 } else { 0.6 };
    let (kind, svd_params) = if rng.random_bool(qr_odds) {
        (SplitMethod::Qr, None)
    } else if is_factor {
        (SplitMethod::Svd, Some(SvdParams::default()))
    } else {
        let sv_cutoff_abs = *[0.0, 0.0, 1e-3, 0.5].choose(rng).expect("non-empty");
        let max_bond = if rng.random_bool(0.4) {
            Some(rng.random_range(1..=4))
        } else {
            None
        };
        (
            SplitMethod::Svd,
            Some(SvdParams {
                sv_cutoff_abs,
                max_bond,
            }),
        )
    };
    UserAction::Split {
        tensor,
        row_dims: rows.to_vec(),
        col_dims: cols.to_vec(),
        kind,
        svd_params,
    }
}

fn random_action(b: &Builder, rng: &mut impl Rng, cfg: &FuzzConfig, progress: f64) -> Option<UserAction> {
    let total_legs: usize = b.attached.values().map(Vec::len).sum();
    let building = progress < 0.5;
    let roll = rng.random_range(0..100);
    match roll {
        0..=11 if b.attached.len() < cfg.max_inputs => Some(UserAction::CreateTensor {
            position: Point::new(rng.random_range(0.0..800.0), rng.random_range(0.0..600.0)),
        }),
        0..=29 if total_legs < cfg.max_legs => {
            let inputs: Vec<TensorId> = b
                .live_inputs()
                .into_iter()
                .filter(|t| b.attached.get(t).map_or(0, Vec::len) < cfg.max_input_rank)
                .collect();
            inputs.choose(rng).map(|&tensor| UserAction::AttachLeg { tensor })
        }
        0..=54 => {
            let legs = b.rewirable_legs();
            let free: Vec<LegId> = legs.iter().filter(|(_, j)| !j).map(|(l, _)| *l).collect();
            let all: Vec<LegId> = legs.iter().map(|(l, _)| *l).collect();
            let a = *free.choose(rng)?;
            let pool = if rng.random_bool(0.8) { &free } else { &all };
            let other = *pool.choose(rng)?;
            (a != other).then_some(UserAction::ConnectLegs { a, b: other })
        }
        55..=59 => {
            let wired: Vec<LegId> = b
                .rewirable_legs()
                .into_iter()
                .filter(|(_, j)| *j)
                .map(|(l, _)| l)
                .collect();
            wired.choose(rng).map(|&leg| UserAction::DisconnectLeg { leg })
        }
        60..=63 => {
            let live = b.live();
            live.choose(rng).map(|&tensor| UserAction::MoveTensor {
                tensor,
                position: Point::new(rng.random_range(0.0..800.0), rng.random_range(0.0..600.0)),
            })
        }
        _ if building && rng.random_bool(0.5) => None,
        64..=87 => {
            let live = b.live();
            let state = b.lowerer.state();
            let wired: Vec<Vec<TensorId>> = state
                .connected_components(&live)
                .ok()?
                .into_iter()
                .filter(|c| {
                    c.iter()
                        .any(|&t| state.leg_junctions(t).is_ok_and(|j| j.iter().any(Option::is_some)))
                })
                .collect();
            let chosen: Vec<TensorId> = match wired.choose(rng) {
                Some(c) if rng.random_bool(0.85) => c.clone(),
                _ => live.into_iter().filter(|_| rng.random_bool(0.6)).collect(),
            };
            (!chosen.is_empty()).then_some(UserAction::Contract { tensors: chosen })
        }
        _ => random_split(b, rng, cfg),
    }
}

/// Generates an accepted script of up to `cfg.actions` actions.
pub fn random_case(rng: &mut impl Rng, cfg: &FuzzConfig) -> FuzzCase {
    let mut b = Builder {
        lowerer: Lowerer::new(),
        actions: Vec::new(),
        attached: BTreeMap::new(),
        bond_legs: BTreeSet::new(),
        connections: Vec::new(),
    };
    let mut attempts = 0;
    while b.actions.len() < cfg.actions && attempts < cfg.actions * 40 {
        attempts += 1;
        let progress = b.actions.len() as f64 / cfg.actions as f64;
        if let Some(action) = random_action(&b, rng, cfg, progress) {
            b.try_apply(action, cfg);
        }
    }
    let shapes = assign_shapes(&b.attached, &b.connections, rng, cfg);
    FuzzCase {
        actions: b.actions,
        shapes,
    }
}

/// One random size per class of legs that were ever connected.
fn assign_shapes(
    attached: &BTreeMap<TensorId, Vec<LegId>>,
    connections: &[(LegId, LegId)],
    rng: &mut impl Rng,
    cfg: &FuzzConfig,
) -> BTreeMap<TensorId, Vec<usize>> {
    let mut parent: BTreeMap<LegId, LegId> = attached.values().flatten().map(|&l| (l, l)).collect();
    fn find(parent: &mut BTreeMap<LegId, LegId>, l: LegId) -> LegId {
        let p = parent[&l];
        if p == l {
            return l;
        }
        let root = find(parent, p);
        parent.insert(l, root);
        root
    }
    for &(a, b) in connections {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent.insert(ra.max(rb), ra.min(rb));
        }
    }
    let mut size: BTreeMap<LegId, usize> = BTreeMap::new();
    let legs: Vec<LegId> = parent.keys().copied().collect();
    for l in legs {
        let root = find(&mut parent, l);
        size.entry(root)
            .or_insert_with(|| rng.random_range(cfg.min_dim..=cfg.max_dim));
    }
    attached
        .iter()
        .map(|(t, legs)| {
            let dims = legs.iter().map(|&l| size[&find(&mut parent, l)]).collect();
            (*t, dims)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowering::lower_script;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cases_replay_and_respect_limits() {
        let cfg = FuzzConfig::default();
        let mut splits = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let case = random_case(&mut rng, &cfg);
            let lowerer = lower_script(&case.actions).expect("generated scripts are valid");
            assert!(case.shapes.len() <= cfg.max_inputs);
            assert!(case.shapes.values().map(Vec::len).sum::<usize>() <= cfg.max_legs);
            assert!(lowerer.state().tensors().all(|t| t.rank() <= cfg.max_rank));
            assert_eq!(lowerer.dag().validate(), Ok(()));
            splits += case
                .actions
                .iter()
                .filter(|a| matches!(a, UserAction::Split { .. }))
                .count();
        }
        assert!(splits > 10);
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = FuzzConfig::default();
        let a = random_case(&mut ChaCha8Rng::seed_from_u64(5), &cfg);
        let b = random_case(&mut ChaCha8Rng::seed_from_u64(5), &cfg);
        assert_eq!(a, b);
    }
}
