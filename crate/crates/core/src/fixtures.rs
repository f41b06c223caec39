//! Small hand-built instances used by tests, the book and the CLI.

use crate::hw::{HardwareModel, NodeSpec, Timing};
use crate::ir::{Circuit, Gate};
use crate::partition::Mapping;

/// Four qubits on three nodes: q0 on A, q1 on B, q2 and q3 on C. Five remote
/// CX gates that burst aggregation cannot merge, then one local CX on C.
pub fn three_node_example() -> (Circuit, HardwareModel, Mapping) {
    let mut c = Circuit::new(4);
    for g in [
        Gate::cx(0, 1),
        Gate::cx(1, 2),
        Gate::cx(0, 2),
        Gate::cx(2, 1),
        Gate::cx(0, 2),
        Gate::cx(2, 3),
    ] {
        c.push(g);
    }
    let model = HardwareModel::single_cluster(3, 4, 1);
    (c, model, Mapping::from_nodes(vec![0, 1, 2, 2], 3))
}

/// CCCX with one control on each of three nodes and the target on a fourth.
pub fn four_node_cccx() -> (Circuit, HardwareModel, Mapping) {
    let mut c = Circuit::new(4);
    c.push(Gate::mcx(&[0, 1, 2], 3));
    let model = HardwareModel::single_cluster(4, 3, 1);
    let mut m = Mapping::from_nodes(vec![0, 1, 2, 3], 4);
    m.s = vec![1; 4];
    (c, model, m)
}

/// Four nodes in a diamond: the cheapest tree from node 0 to node 3 goes
/// through node 1, while the shortest paths split over both sides.
pub fn diamond() -> HardwareModel {
    HardwareModel::new(
        vec![vec![0, 1, 2, 3]],
        vec![NodeSpec { data_qubits: 8, comm_qubits: 1 }; 4],
        vec![(0, 1, 0.98), (1, 3, 0.97), (0, 2, 0.98), (2, 3, 0.98)],
        Timing::default(),
    )
    .expect("diamond is valid")
}

/// Two clusters of two nodes joined by a single inter-cluster channel.
pub fn two_clusters() -> HardwareModel {
    HardwareModel::new(
        vec![vec![0, 1], vec![2, 3]],
        vec![NodeSpec { data_qubits: 8, comm_qubits: 1 }; 4],
        vec![(0, 1, 0.98), (2, 3, 0.98), (1, 2, 0.90)],
        Timing::default(),
    )
    .expect("two clusters are valid")
}

/// Three fully connected nodes, three data qubits and one communication
/// qubit each: the model used by semantic checks.
pub fn toy_model() -> HardwareModel {
    HardwareModel::single_cluster(3, 3, 1)
}
