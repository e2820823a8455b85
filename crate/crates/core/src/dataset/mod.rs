//! Quantum federated datasets: generation and on-disk storage.

mod gen;
mod store;

pub use gen::{
    client_id, cluster_state_circuit, draw_angle, excitation_angle, generate_client,
    generate_federated_dataset, generate_sample, label_rule, sample_with_angle,
    AngleDistribution, ClientDataset, FederatedDataset, GenConfig, FORMAT_VERSION,
};
pub use store::{
    decode_dataset, encode_dataset, fnv1a64, parse_circuit, read_dataset, serialize_circuit,
    write_dataset,
};
