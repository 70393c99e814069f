//! Small hand-written action scripts used by tests, docs and the CLI.

use crate::network::{LegId, Point, SplitMethod, TensorId, UserAction};

fn create(x: f64, y: f64) -> UserAction {
    UserAction::CreateTensor {
        position: Point::new(x, y),
    }
}

fn legs(tensor: u64, n: usize) -> impl Iterator<Item = UserAction> {
    (0..n).map(move |_| UserAction::AttachLeg {
        tensor: TensorId(tensor),
    })
}

fn connect(a: u64, b: u64) -> UserAction {
    UserAction::ConnectLegs {
        a: LegId(a),
        b: LegId(b),
    }
}

fn contract(ids: &[u64]) -> UserAction {
    UserAction::Contract {
        tensors: ids.iter().map(|&i| TensorId(i)).collect(),
    }
}

/// Three tensors of ranks 3, 2, 3 with bonds `T0.2-T1.1` and `T0.0-T2.0`.
pub fn listing_network_script() -> Vec<UserAction> {
    let mut s = vec![create(100.0, 100.0), create(200.0, 100.0), create(150.0, 200.0)];
    s.extend(legs(0, 3));
    s.extend(legs(1, 2));
    s.extend(legs(2, 3));
    s.push(connect(2, 4));
    s.push(connect(0, 5));
    s
}

/// The three-tensor network, contracted and then QR-split with rows (3, 0)
/// and columns (2, 1).
pub fn listing_script() -> Vec<UserAction> {
    let mut s = listing_network_script();
    s.push(contract(&[0, 1, 2]));
    s.push(UserAction::Split {
        tensor: TensorId(3),
        row_dims: vec![3, 0],
        col_dims: vec![2, 1],
        kind: SplitMethod::Qr,
        svd_params: None,
    });
    s
}

/// Four tensors of ranks 3, 3, 2, 2 where one bond is shared by the first
/// three tensors.
pub fn hyperedge_network_script() -> Vec<UserAction> {
    let mut s = vec![
        create(100.0, 100.0),
        create(200.0, 100.0),
        create(150.0, 200.0),
        create(250.0, 200.0),
    ];
    s.extend(legs(0, 3));
    s.extend(legs(1, 3));
    s.extend(legs(2, 2));
    s.extend(legs(3, 2));
    s.push(connect(0, 3));
    s.push(connect(3, 6));
    s.push(connect(1, 4));
    s.push(connect(7, 8));
    s
}

pub fn hyperedge_script() -> Vec<UserAction> {
    let mut s = hyperedge_network_script();
    s.push(contract(&[0, 1, 2, 3]));
    s
}

/// Two vectors joined by one bond and contracted to a scalar.
pub fn inner_product_script() -> Vec<UserAction> {
    let mut s = vec![create(0.0, 0.0), create(100.0, 0.0)];
    s.extend(legs(0, 1));
    s.extend(legs(1, 1));
    s.push(connect(0, 1));
    s.push(contract(&[0, 1]));
    s
}

/// `C = A B` followed by `y = C x`.
pub fn matrix_chain_script() -> Vec<UserAction> {
    let mut s = vec![create(0.0, 0.0), create(100.0, 0.0)];
    s.extend(legs(0, 2));
    s.extend(legs(1, 2));
    s.push(connect(1, 2));
    s.push(contract(&[0, 1]));
    s.push(create(200.0, 0.0));
    s.extend(legs(3, 1));
    s.push(connect(3, 4));
    s.push(contract(&[2, 3]));
    s
}
